"""Monte Carlo privacy audit of one rejection-sampling round on neighboring
1-D datasets (one point moved).

For each pair we estimate the single-round acceptance probabilities ``q`` and
``q'`` and check the premise ``q, q' <= 1/2`` together with
``e^-eps q - delta/N - 3 sigma <= q' <= e^eps q + delta/N + 3 sigma`` in both
directions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .mechanism import MechanismParams, estimate_accept_prob

MIN_TRIALS = 10_000


@dataclass(frozen=True)
class NeighborPair:
    name: str
    points: np.ndarray
    neighbor: np.ndarray


def family_a(n: int = 40, far: float = 100.0) -> NeighborPair:
    """``n`` coincident points; the neighbor moves one of them far away."""
    x = np.zeros((n, 1))
    y = x.copy()
    y[0, 0] = far
    return NeighborPair("A_coincident", x, y)


def family_b(n: int = 40, far: float = 100.0) -> NeighborPair:
    """A cluster just above the 2/3 line plus a far group; the neighbor moves one
    cluster point into the far group so the cluster drops below 2/3."""
    c = math.floor(2 * n / 3) + 1
    x = np.zeros((n, 1))
    x[c:, 0] = far
    y = x.copy()
    y[0, 0] = far
    return NeighborPair("B_boundary", x, y)


def builtin_families() -> list[NeighborPair]:
    return [family_a(), family_b()]


def g2_probability(q: float, N: int) -> float:
    """P(all rounds reject) for Geometric(1/N) rounds each accepting w.p. ``q``."""
    if q <= 0:
        return 1.0
    return (1 - q) / ((N - 1) * q + 1)


@dataclass
class PairAudit:
    family: str
    q: float
    se_q: float
    q_prime: float
    se_q_prime: float
    N: int
    slack: float
    premise_ok: bool
    bounds_ok: bool
    p_g2: float
    p_g2_prime: float

    @property
    def passed(self) -> bool:
        return self.premise_ok and self.bounds_ok

    def as_dict(self) -> dict:
        d = dict(self.__dict__)
        d["passed"] = self.passed
        return d


def _within(q, se_q, q2, se_q2, eps, slack) -> bool:
    hi_sigma = math.hypot(math.exp(eps) * se_q, se_q2)
    lo_sigma = math.hypot(math.exp(-eps) * se_q, se_q2)
    return (math.exp(-eps) * q - slack - 3 * lo_sigma <= q2
            <= math.exp(eps) * q + slack + 3 * hi_sigma)


def audit_pair(pair: NeighborPair, params: MechanismParams, trials: int,
               rng: np.random.Generator) -> PairAudit:
    s1, s2 = rng.spawn(2)
    q, se = estimate_accept_prob(pair.points, params, trials, s1)
    q2, se2 = estimate_accept_prob(pair.neighbor, params, trials, s2)
    n = pair.points.shape[0]
    N = params.retry_mean(n)
    slack = params.delta / N
    premise = q <= 0.5 + 3 * se and q2 <= 0.5 + 3 * se2
    bounds = (_within(q, se, q2, se2, params.eps, slack)
              and _within(q2, se2, q, se, params.eps, slack))
    return PairAudit(pair.name, q, se, q2, se2, N, slack, premise, bounds,
                     g2_probability(q, N), g2_probability(q2, N))


@dataclass
class AuditReport:
    results: list
    trials: int
    insufficient_trials: bool

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def as_dict(self) -> dict:
        return {
            "trials": self.trials,
            "insufficient_trials": self.insufficient_trials,
            "passed": self.passed,
            "families": [r.as_dict() for r in self.results],
        }


def run_audit(eps: float = 0.5, delta: float = 0.01, trials: int = 100_000, seed: int = 0,
              accept_const: float = 1.0 / 3.0, pairs: list | None = None, r: float = 1.0,
              alpha: float = 0.1) -> AuditReport:
    """Audit the built-in families (or ``pairs``). ``accept_const`` other than 1/3
    turns the mechanism into a deliberately broken stub."""
    params = MechanismParams(eps=eps, delta=delta, alpha=alpha, r=r)
    params = replace(params, accept_const=accept_const)
    pairs = builtin_families() if pairs is None else pairs
    streams = np.random.default_rng(seed).spawn(len(pairs))
    results = [audit_pair(p, params, trials, s) for p, s in zip(pairs, streams)]
    return AuditReport(results, trials, trials < MIN_TRIALS)
