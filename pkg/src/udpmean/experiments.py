"""Declarative experiment sweeps: grid x trials, per-trial derived seeds,
JSONL records plus CSV record and summary tables."""

from __future__ import annotations

import csv
import io
import itertools
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .amplify import AmplifyParams, dp_estimate_2
from .blockwise import InterpolationParams, dp_estimate_interpolated
from .mechanism import MechanismParams, dp_estimate_1
from .synthdata import AdversarySpec, DataSpec, corrupt, generate
from .userlevel import (DiscreteSamples, estimate_from_means, project_simplex, tv_distance,
                        user_means)

KINDS = ("mean_estimation", "distribution_learning", "robustness_sweep", "sgd")
ENGINES = ("user", "interp", "dp1", "dp2")
AXES = ("n", "m", "d", "eps", "delta", "alpha", "rho", "fraction", "T")
THREADS_ENV = "UDPMEAN_THREADS"

RECORD_FIELDS = ("grid_index", "trial", "seed", "n", "m", "d", "eps", "delta", "alpha", "rho",
                 "fraction", "T", "outcome", "error_l2", "error_tv", "error_tv_raw", "k",
                 "ledger_eps", "ledger_delta", "wall_time")
SUMMARY_FIELDS = ("grid_index", "n", "m", "d", "eps", "delta", "alpha", "rho", "fraction", "T",
                  "trials", "accepted", "error_l2_q10", "error_l2_median", "error_l2_q90",
                  "error_tv_q10", "error_tv_median", "error_tv_q90")


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


@dataclass
class ExperimentSpec:
    kind: str
    grid: dict
    trials: int = 1
    seed: int = 0
    output: str | None = None
    engine: str = "user"
    r: float = 1.0
    family: str = "uniform_ball"
    distribution: str = "uniform"  # discrete: uniform | point_mass | explicit list
    probabilities: list | None = None
    project: bool = False
    strategy: str = "far_cluster"
    k: int | None = None
    k_const: float = 4.0
    c_b: float = 0.5
    timing: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}")
        if self.engine not in ENGINES:
            raise ValueError(f"engine must be one of {ENGINES}")
        if not isinstance(self.trials, int) or self.trials < 1:
            raise ValueError("trials must be a positive integer")
        unknown = set(self.grid) - set(AXES)
        if unknown:
            raise ValueError(f"unknown grid axes: {sorted(unknown)}")
        for key, vals in self.grid.items():
            if not isinstance(vals, list) or not vals:
                raise ValueError(f"grid axis {key!r} must be a non-empty list")
        for key in ("n", "m", "d"):
            if key not in self.grid:
                raise ValueError(f"grid needs axis {key!r}")
        if self.kind != "sgd":
            for key in ("eps", "delta", "alpha"):
                if key not in self.grid:
                    raise ValueError(f"grid needs axis {key!r}")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentSpec":
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown spec fields: {sorted(extra)}")
        return cls(**d)

    def points(self) -> list[dict]:
        """Grid points in row-major order over the axes in ``AXES`` order."""
        defaults = {"rho": [0.0], "fraction": [0.0], "T": [None]}
        axes = [(a, self.grid.get(a, defaults.get(a, [None]))) for a in AXES]
        names = [a for a, _ in axes]
        return [dict(zip(names, combo)) for combo in itertools.product(*(v for _, v in axes))]


@dataclass
class ExperimentResult:
    spec: ExperimentSpec
    records: list = field(default_factory=list)

    def summary(self) -> list[dict]:
        rows = []
        for gi, group in itertools.groupby(self.records, key=lambda r: r["grid_index"]):
            group = list(group)
            first = group[0]
            row = {k: first[k] for k in ("grid_index", "n", "m", "d", "eps", "delta", "alpha",
                                         "rho", "fraction", "T")}
            row["trials"] = len(group)
            row["accepted"] = sum(r["outcome"] == "accepted" for r in group)
            for metric in ("error_l2", "error_tv"):
                vals = [r[metric] for r in group if r[metric] is not None]
                for q, name in ((10, "q10"), (50, "median"), (90, "q90")):
                    row[f"{metric}_{name}"] = float(np.percentile(vals, q)) if vals else None
            rows.append(row)
        return rows

    def header(self) -> dict:
        return {"version": __version__, "spec": asdict(self.spec)}

    def jsonl(self) -> str:
        lines = [json.dumps({"header": self.header()}, sort_keys=True)]
        lines += [json.dumps(r, sort_keys=True) for r in self.records]
        return "\n".join(lines) + "\n"

    def records_csv(self) -> str:
        return _csv(RECORD_FIELDS, self.records)

    def summary_csv(self) -> str:
        return _csv(SUMMARY_FIELDS, self.summary())

    def write(self, prefix) -> list[Path]:
        prefix = Path(prefix)
        paths = [prefix.with_name(prefix.name + s) for s in (".jsonl", ".csv", ".summary.csv")]
        for p, text in zip(paths, (self.jsonl(), self.records_csv(), self.summary_csv())):
            p.write_text(text)
        return paths


def _csv(fields, rows) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=fields, extrasaction="ignore", lineterminator="\n")
    w.writeheader()
    for row in rows:
        # repr keeps full float precision; None becomes an empty cell
        w.writerow({k: ("" if row.get(k) is None else row.get(k)) for k in fields})
    return buf.getvalue()


def _trial_seeds(seed: int, pair_index: int, trial: int) -> tuple[int, np.random.Generator]:
    ss = np.random.SeedSequence([seed, pair_index, trial])
    data_ss, mech_ss = ss.spawn(2)
    return int(data_ss.generate_state(1, dtype=np.uint64)[0] >> 1), np.random.default_rng(mech_ss)


def _pair_index(spec: ExperimentSpec, point: dict) -> int:
    # grid index with the corruption axis dropped, so corrupted and clean runs share seeds
    p = dict(point)
    p["fraction"] = spec.grid.get("fraction", [0.0])[0]
    return spec.points().index(p)


def _discrete_probs(spec: ExperimentSpec, d: int) -> np.ndarray:
    if spec.probabilities is not None:
        return np.asarray(spec.probabilities, dtype=np.float64)
    if spec.distribution == "uniform":
        return np.full(d, 1.0 / d)
    if spec.distribution == "point_mass":
        p = np.zeros(d)
        p[0] = 1.0
        return p
    raise ValueError(f"unknown distribution {spec.distribution!r}")


def run_engine(engine: str, data, r: float, eps: float, delta: float, alpha: float,
               rng: np.random.Generator, *, k=None, k_const: float = 4.0, c_b: float = 0.5):
    """Dispatch one estimate on a :class:`UserDataset` or :class:`DiscreteSamples`
    (one-hot encoded). Item-level engines treat each user mean as an item of radius ``r``."""
    means = data.frequencies() if isinstance(data, DiscreteSamples) else user_means(data)
    if engine == "user":
        ip = InterpolationParams(eps=eps, delta=delta, alpha=alpha, r=r, k=k, k_const=k_const, c_b=c_b)
        return estimate_from_means(means, data.m, r, alpha, eps, delta, rng, params=ip)
    if engine == "interp":
        ip = InterpolationParams(eps=eps, delta=delta, alpha=alpha, r=r, k=k, k_const=k_const, c_b=c_b)
        return dp_estimate_interpolated(means, ip, rng)
    if engine == "dp1":
        return dp_estimate_1(means, MechanismParams(eps=eps, delta=delta, alpha=alpha, r=r), rng)
    return dp_estimate_2(means, AmplifyParams(eps=eps, delta=delta, alpha=alpha, r=r), rng)


def _blank(spec, gi, trial, seed, pt) -> dict:
    rec = {k: None for k in RECORD_FIELDS}
    rec.update(grid_index=gi, trial=trial, seed=seed)
    rec.update({a: pt[a] for a in AXES})
    return rec


def _run_trial(spec: ExperimentSpec, gi: int, pt: dict, trial: int) -> dict:
    data_seed, rng = _trial_seeds(spec.seed, _pair_index(spec, pt), trial)
    rec = _blank(spec, gi, trial, data_seed, pt)
    t0 = time.perf_counter()
    try:
        if spec.kind == "sgd":
            _sgd_trial(spec, pt, data_seed, rng, rec)
        elif spec.kind == "distribution_learning":
            _discrete_trial(spec, pt, data_seed, rng, rec)
        else:
            _mean_trial(spec, pt, data_seed, rng, rec)
    except Exception as e:  # a failed trial is recorded, never aborts the sweep
        rec["outcome"] = f"error:{type(e).__name__}"
    if spec.timing:
        rec["wall_time"] = time.perf_counter() - t0
    return rec


def _mean_trial(spec, pt, data_seed, rng, rec):
    ds_spec = DataSpec(n=pt["n"], m=pt["m"], d=pt["d"], r=spec.r, family=spec.family,
                       rho=pt["rho"], seed=data_seed)
    data = generate(ds_spec)
    data_rng, mech_rng = rng.spawn(2)
    if pt["fraction"]:
        data, _ = corrupt(data, AdversarySpec(pt["fraction"], spec.strategy), data_rng, r=spec.r)
    out = run_engine(spec.engine, data, spec.r, pt["eps"], pt["delta"], pt["alpha"], mech_rng,
                     k=spec.k, k_const=spec.k_const, c_b=spec.c_b)
    _fill_outcome(rec, out)
    if out.accepted:
        rec["error_l2"] = float(np.linalg.norm(out.point - ds_spec.mean()))


def _discrete_trial(spec, pt, data_seed, rng, rec):
    probs = _discrete_probs(spec, pt["d"])
    samples = generate(DataSpec(n=pt["n"], m=pt["m"], d=pt["d"], family="discrete",
                                probabilities=tuple(probs), seed=data_seed))
    out = run_engine(spec.engine, samples, 1.0, pt["eps"], pt["delta"], pt["alpha"], rng,
                     k=spec.k, k_const=spec.k_const, c_b=spec.c_b)
    _fill_outcome(rec, out)
    if out.accepted:
        rec["error_l2"] = float(np.linalg.norm(out.point - probs))
        rec["error_tv_raw"] = tv_distance(out.point, probs)
        est = project_simplex(out.point) if spec.project else out.point
        rec["error_tv"] = tv_distance(est, probs)


def _sgd_trial(spec, pt, data_seed, rng, rec):
    from .accounting import PrivacyBudget
    from .optimizer import exact_gradient_oracle, private_sgd, quadratic_problem, run_sgd

    d = pt["d"]
    mu = np.zeros(d)
    mu[0] = 0.3
    data = generate(DataSpec(n=pt["n"], m=pt["m"], d=d, r=0.5, mu=tuple(mu), seed=data_seed))
    prob = quadratic_problem(np.linspace(0.5, 1.0, d), center_z=mu, R=1.0, z_radius=0.5)
    T = pt["T"] or 100
    eps = pt["eps"] if pt["eps"] is not None else 10.0
    delta = pt["delta"] if pt["delta"] is not None else 1e-3
    alpha = pt["alpha"] if pt["alpha"] is not None else 0.05
    tr = private_sgd(prob, data, PrivacyBudget(eps, delta), T, rng, alpha=alpha)
    base = run_sgd(prob, exact_gradient_oracle(prob, data), T, np.random.default_rng(0), nu_hat=0.0)
    rec["outcome"] = "accepted"
    rec["error_l2"] = prob.risk(tr.final, data) - prob.risk(base.final, data)
    rec["ledger_eps"] = tr.budget_ledger["composed"]["eps"]
    rec["ledger_delta"] = tr.budget_ledger["composed"]["delta"]


def _fill_outcome(rec, out):
    rec["outcome"] = out.kind.value
    rec["k"] = out.meta.get("k")
    ledger = out.meta.get("ledger")
    if ledger:
        rec["ledger_eps"] = ledger["eps"]
        rec["ledger_delta"] = ledger["delta"]


def run_experiment(spec: ExperimentSpec, threads: int | None = None) -> ExperimentResult:
    """Execute the full grid. Records are ordered by (grid index, trial)
    regardless of the thread count."""
    threads = threads or default_threads()
    jobs = [(gi, pt, t) for gi, pt in enumerate(spec.points()) for t in range(spec.trials)]
    if threads == 1:
        records = [_run_trial(spec, gi, pt, t) for gi, pt, t in jobs]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            records = list(pool.map(lambda j: _run_trial(spec, *j), jobs))
    return ExperimentResult(spec, records)
