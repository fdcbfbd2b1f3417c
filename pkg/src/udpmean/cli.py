"""Command-line interface: ``generate``, ``estimate``, ``experiment``, ``audit``, ``sgd``.

Exit codes: 0 success (garbage outcomes included), 2 I/O or parse error,
3 invalid configuration.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .accounting import PrivacyBudget
from .audit import run_audit
from .dataio import DatasetFormatError, read_dataset, read_sidecar, write_dataset
from .experiments import ENGINES, ExperimentSpec, default_threads, run_engine, run_experiment
from .synthdata import FAMILIES, DataSpec, generate
from .userlevel import DiscreteSamples, project_simplex, tv_distance

EXIT_OK = 0
EXIT_IO = 2
EXIT_CONFIG = 3


class IOFailure(Exception):
    pass


def _floats(text: str | None):
    if text is None:
        return None
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from e


def _emit(line: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(line)
    else:
        Path(out).write_text(line)


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True) + "\n"


def cmd_generate(a) -> int:
    probs = a.probabilities
    if a.family == "discrete" and probs is None:
        probs = tuple([1.0 / a.d] * a.d)
    spec = DataSpec(n=a.n, m=a.m, d=a.d, r=a.r, mu=a.mu, family=a.family,
                    probabilities=probs, rho=a.rho, seed=a.seed)
    data = generate(spec)
    meta = {"version": __version__, "spec": spec.to_dict(), "true_mean": [float(v) for v in spec.mean()]}
    write_dataset(a.out, data, meta)
    print(f"wrote {a.out}")
    return EXIT_OK


def _load(path):
    p = Path(path)
    if not p.exists():
        raise IOFailure(f"dataset not found: {p}")
    return read_dataset(p), read_sidecar(p)


def cmd_estimate(a) -> int:
    PrivacyBudget(a.eps, a.delta)
    if a.eps <= 0:
        raise ValueError("eps must be positive")
    data, side = _load(a.data)
    rng = np.random.default_rng(a.seed)
    categorical = isinstance(data, DiscreteSamples)
    r = 1.0 if categorical else a.r
    out = run_engine(a.engine, data, r, a.eps, a.delta, a.alpha, rng, k=a.k)
    rec = {
        "version": __version__,
        "config": {"data": str(a.data), "engine": a.engine, "eps": a.eps, "delta": a.delta,
                   "alpha": a.alpha, "r": r, "k": a.k, "project": bool(categorical and a.project)},
        "seed": a.seed,
        "outcome": out.kind.value,
        "point": None,
        "error_l2": None,
        "error_tv": None,
        "ledger": out.meta.get("ledger"),
        "warnings": out.meta.get("warnings", []),
    }
    if out.accepted:
        point = out.point
        if categorical and a.project:
            point = project_simplex(point)
        rec["point"] = [float(v) for v in point]
        if side and side.get("true_mean") is not None:
            truth = np.asarray(side["true_mean"])
            rec["error_l2"] = float(np.linalg.norm(point - truth))
            if categorical:
                rec["error_tv"] = tv_distance(point, truth)
    _emit(_dumps(rec), a.out)
    return EXIT_OK


def cmd_experiment(a) -> int:
    p = Path(a.spec)
    if not p.exists():
        raise IOFailure(f"spec file not found: {p}")
    raw = json.loads(p.read_text())
    if not isinstance(raw, dict):
        raise ValueError("spec file must hold a JSON object")
    # flags override spec fields
    for key in ("trials", "seed"):
        if getattr(a, key) is not None:
            raw[key] = getattr(a, key)
    if a.out is not None:
        raw["output"] = a.out
    spec = ExperimentSpec.from_dict(raw)
    if spec.output is None:
        raise ValueError("no output prefix: give --out or 'output' in the spec")
    result = run_experiment(spec, threads=a.threads)
    for path in result.write(spec.output):
        print(f"wrote {path}")
    return EXIT_OK


def cmd_audit(a) -> int:
    report = run_audit(eps=a.eps, delta=a.delta, trials=a.trials, seed=a.seed,
                       accept_const=a.accept_const)
    body = report.as_dict()
    body.update(version=__version__, seed=a.seed, eps=a.eps, delta=a.delta,
                accept_const=a.accept_const)
    _emit(_dumps(body), a.out)
    for r in report.results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{status} {r.family}: q={r.q:.5f} q'={r.q_prime:.5f}", file=sys.stderr)
    if report.insufficient_trials:
        print(f"warning: fewer than 10^4 trials ({a.trials})", file=sys.stderr)
    return EXIT_OK


def cmd_sgd(a) -> int:
    from .optimizer import exact_gradient_oracle, private_sgd, quadratic_problem, run_sgd

    budget = PrivacyBudget(a.eps, a.delta)
    if a.eps <= 0 or a.delta <= 0:
        raise ValueError("eps and delta must be positive")
    if a.T < 1:
        raise ValueError("T must be >= 1")
    data, _ = _load(a.data)
    if isinstance(data, DiscreteSamples):
        raise ValueError("sgd needs a real-valued dataset")
    d = data.d
    prob = quadratic_problem(np.linspace(0.5, 1.0, d), R=a.R, z_radius=a.z_radius)
    rng = np.random.default_rng(a.seed)
    tr = private_sgd(prob, data, budget, a.T, rng, alpha=a.alpha)
    base = run_sgd(prob, exact_gradient_oracle(prob, data), a.T, np.random.default_rng(0), nu_hat=0.0)
    rec = {
        "version": __version__,
        "config": {"data": str(a.data), "T": a.T, "eps": a.eps, "delta": a.delta, "alpha": a.alpha,
                   "R": a.R, "z_radius": a.z_radius},
        "seed": a.seed,
        "final": [float(v) for v in tr.final],
        "risk": prob.risk(tr.final, data),
        "risk_exact_gradient": prob.risk(base.final, data),
        "step_size": tr.step_size,
        "nu_hat": tr.nu_hat,
        "oracle_failures": tr.failures,
        "ledger": tr.budget_ledger,
        "warnings": tr.warnings,
    }
    _emit(_dumps(rec), a.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="udpmean", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic UDP1 dataset")
    g.add_argument("--out", required=True)
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--m", type=int, default=1)
    g.add_argument("--d", type=int, required=True)
    g.add_argument("--r", type=float, default=1.0)
    g.add_argument("--mu", type=_floats)
    g.add_argument("--family", choices=FAMILIES, default="uniform_ball")
    g.add_argument("--probabilities", type=_floats)
    g.add_argument("--rho", type=float, default=0.0)
    g.add_argument("--seed", type=int, default=0)
    g.set_defaults(func=cmd_generate)

    e = sub.add_parser("estimate", help="one private estimate on a dataset file")
    e.add_argument("--data", required=True)
    e.add_argument("--engine", choices=ENGINES, default="user")
    e.add_argument("--eps", type=float, required=True)
    e.add_argument("--delta", type=float, required=True)
    e.add_argument("--alpha", type=float, default=0.05)
    e.add_argument("--r", type=float, default=1.0)
    e.add_argument("--k", type=int)
    e.add_argument("--no-project", dest="project", action="store_false",
                   help="keep the raw (unprojected) estimate for categorical data")
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--out")
    e.set_defaults(func=cmd_estimate)

    x = sub.add_parser("experiment", help="run a JSON experiment spec")
    x.add_argument("--spec", required=True)
    x.add_argument("--out")
    x.add_argument("--trials", type=int)
    x.add_argument("--seed", type=int)
    x.add_argument("--threads", type=int, default=None,
                   help=f"worker threads (default from UDPMEAN_THREADS, now {default_threads()})")
    x.set_defaults(func=cmd_experiment)

    u = sub.add_parser("audit", help="Monte Carlo single-round privacy audit")
    u.add_argument("--eps", type=float, default=0.5)
    u.add_argument("--delta", type=float, default=0.01)
    u.add_argument("--trials", type=int, default=100_000)
    u.add_argument("--accept-const", type=float, default=1.0 / 3.0)
    u.add_argument("--seed", type=int, default=0)
    u.add_argument("--out")
    u.set_defaults(func=cmd_audit)

    s = sub.add_parser("sgd", help="private projected SGD on a quadratic loss")
    s.add_argument("--data", required=True)
    s.add_argument("--T", type=int, default=100)
    s.add_argument("--eps", type=float, default=10.0)
    s.add_argument("--delta", type=float, default=1e-3)
    s.add_argument("--alpha", type=float, default=0.05)
    s.add_argument("--R", type=float, default=1.0)
    s.add_argument("--z-radius", type=float, default=1.0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out")
    s.set_defaults(func=cmd_sgd)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (IOFailure, OSError, DatasetFormatError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, TypeError) as e:
        print(f"invalid configuration: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
