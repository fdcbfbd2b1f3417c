"""Failure-probability amplification: many low-budget item-level runs joined by
a coordinate-wise median."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .accounting import AmplifySchedule, amplify_sub_budget, schedule_amplify
from .geometry import coordinate_median
from .mechanism import EstimateOutcome, MechanismParams, Outcome, dp_estimate_1


def sub_budget(eps: float, delta: float, alpha: float) -> tuple[float, float]:
    """Literal per-run budget with unit constants; see :func:`accounting.amplify_sub_budget`."""
    return amplify_sub_budget(eps, delta, alpha)


@dataclass(frozen=True)
class AmplifyParams:
    eps: float
    delta: float
    alpha: float
    r: float
    c_k: float = 18.0
    C: float = 12.0
    retry_const: float = 1.0

    def schedule(self) -> AmplifySchedule:
        return schedule_amplify(self.eps, self.delta, self.alpha, self.c_k)

    @property
    def k_runs(self) -> int:
        return self.schedule().k_runs

    def run_params(self) -> MechanismParams:
        s = self.schedule()
        return MechanismParams(
            eps=s.eps_run,
            delta=s.delta_run,
            alpha=1.0 / 3.0,
            r=self.r,
            C=self.C,
            retry_const=self.retry_const,
        )


def dp_estimate_2(points, params: AmplifyParams, rng: np.random.Generator,
                  run=dp_estimate_1) -> EstimateOutcome:
    """Median of ``k_runs`` independent private runs with failure 1/3 each.

    Garbage runs are dropped before the median; if every run is garbage the
    result is ``G2``. ``run`` is injectable for tests.
    """
    sched = params.schedule()
    mp = params.run_params()
    streams = rng.spawn(sched.k_runs)
    results = [run(points, mp, s) for s in streams]
    good = [o.point for o in results if o.kind is Outcome.ACCEPTED]
    meta = {
        "k_runs": sched.k_runs,
        "runs_accepted": len(good),
        "runs_garbage": sched.k_runs - len(good),
        "garbage_policy": "discarded",
        "eps_run": sched.eps_run,
        "delta_run": sched.delta_run,
        "ledger": sched.composed().as_dict(),
    }
    rounds = sum(o.rounds for o in results)
    if not good:
        return EstimateOutcome(Outcome.GARBAGE2, None, rounds, meta)
    return EstimateOutcome(Outcome.ACCEPTED, coordinate_median(np.stack(good)), rounds, meta)
