"""Run every experiment spec in scripts/specs and print the summary tables.

    python3 scripts/run_sweeps.py [--out results] [--only user_scaling ...]

Thread count comes from UDPMEAN_THREADS.
"""

import argparse
import json
from pathlib import Path

from udpmean.experiments import ExperimentSpec, run_experiment

HERE = Path(__file__).resolve().parent


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="results")
    ap.add_argument("--only", nargs="*")
    ap.add_argument("--trials", type=int, help="override trials for a quick pass")
    a = ap.parse_args()
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    for path in sorted((HERE / "specs").glob("*.json")):
        if a.only and path.stem not in a.only:
            continue
        raw = json.loads(path.read_text())
        if a.trials:
            raw["trials"] = a.trials
        spec = ExperimentSpec.from_dict(raw)
        res = run_experiment(spec)
        res.write(out / path.stem)
        print(f"== {path.stem}")
        for row in res.summary():
            axes = " ".join(f"{k}={row[k]}" for k in ("n", "m", "d", "eps", "fraction", "T")
                            if row[k] is not None)
            med = row["error_tv_median"] if spec.kind == "distribution_learning" else row["error_l2_median"]
            print(f"  {axes}: accepted {row['accepted']}/{row['trials']}, median error {med}")


if __name__ == "__main__":
    main()
