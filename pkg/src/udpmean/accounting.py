"""Privacy-budget arithmetic.

Weak and strong composition, plus the sub-budget schedules used by the
amplified estimator, the blockwise estimator and private SGD. All logarithms
are natural.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

from scipy.optimize import brentq


@dataclass(frozen=True)
class PrivacyBudget:
    eps: float
    delta: float

    def __post_init__(self):
        if not (self.eps >= 0 and math.isfinite(self.eps)):
            raise ValueError(f"eps must be finite and >= 0, got {self.eps}")
        if not (0 <= self.delta < 1):
            raise ValueError(f"delta must lie in [0, 1), got {self.delta}")

    def within(self, other: "PrivacyBudget", slack: float = 1.0) -> bool:
        return self.eps <= slack * other.eps and self.delta <= slack * other.delta

    def as_dict(self) -> dict:
        return {"eps": self.eps, "delta": self.delta}


def weak_compose(budgets: Iterable[PrivacyBudget]) -> PrivacyBudget:
    """Component-wise sum of a non-empty sequence of budgets."""
    budgets = list(budgets)
    if not budgets:
        raise ValueError("weak_compose needs at least one budget")
    return PrivacyBudget(
        eps=math.fsum(b.eps for b in budgets),
        delta=math.fsum(b.delta for b in budgets),
    )


def strong_compose(eps: float, delta: float, k: int, delta_prime: float) -> PrivacyBudget:
    """Advanced composition of ``k`` copies of an ``(eps, delta)`` mechanism.

    Returns ``(sqrt(2k ln(1/delta')) eps + k eps (e^eps - 1), k delta + delta')``.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if not (0 < delta_prime < 1):
        raise ValueError("delta_prime must lie in (0, 1)")
    e = math.sqrt(2 * k * math.log(1 / delta_prime)) * eps + k * eps * math.expm1(eps)
    return PrivacyBudget(eps=e, delta=k * delta + delta_prime)


def amplify_runs(alpha: float, c_k: float = 18.0) -> int:
    """Number of independent item-level runs for overall failure ``alpha``."""
    if not (0 < alpha < 1):
        raise ValueError("alpha must lie in (0, 1)")
    return max(1, math.ceil(c_k * math.log(1 / alpha)))


def amplify_sub_budget(eps: float, delta: float, alpha: float,
                       theta_eps: float = 1.0, theta_delta: float = 1.0) -> tuple[float, float]:
    """Per-run budget ``(theta_eps eps / min(L, sqrt(L ln(1/delta))), theta_delta delta / L)``
    with ``L = ln(1/alpha)``."""
    L = math.log(1 / alpha)
    denom = min(L, math.sqrt(L * math.log(1 / delta)))
    return theta_eps * eps / denom, theta_delta * delta / L


@dataclass(frozen=True)
class AmplifySchedule:
    eps_run: float
    delta_run: float
    k_runs: int
    theta_eps: float
    theta_delta: float
    delta_slack: float

    def composed(self) -> PrivacyBudget:
        return strong_compose(self.eps_run, self.delta_run, self.k_runs, self.delta_slack)


def _calibrate_eps(target: float, delta_each: float, k: int, delta_slack: float) -> float:
    """Largest per-step eps whose ``k``-fold strong composition stays at ``target``."""
    def excess(e):
        return strong_compose(e, delta_each, k, delta_slack).eps - target

    hi = target
    while excess(hi) < 0:
        hi *= 2
    e = brentq(excess, 0.0, hi, xtol=1e-15, rtol=1e-13)
    # brentq may land a hair above the root
    while excess(e) > 0:
        e = math.nextafter(e, 0.0)
    return e


def schedule_amplify(eps: float, delta: float, alpha: float, c_k: float = 18.0) -> AmplifySchedule:
    """Per-run budget for the median-of-runs estimator.

    The ``Theta`` constants of the per-run formula are fitted so that the
    ``k_runs``-fold strong composition (slack ``delta/2``) lands exactly on
    ``(eps, delta)``.
    """
    PrivacyBudget(eps, delta)
    k = amplify_runs(alpha, c_k)
    delta_slack = delta / 2
    delta_run = delta / (2 * k)
    eps_run = _calibrate_eps(eps, delta_run, k, delta_slack)
    base_eps, base_delta = amplify_sub_budget(eps, delta, alpha)
    return AmplifySchedule(
        eps_run=eps_run,
        delta_run=delta_run,
        k_runs=k,
        theta_eps=eps_run / base_eps,
        theta_delta=delta_run / base_delta,
        delta_slack=delta_slack,
    )


def schedule_blocks(eps: float, delta: float, k: int) -> tuple[float, float]:
    """Per-block budget for ``k**2`` blocks: ``(eps / (k sqrt(ln(1/delta))), delta / k**2)``.

    ``k == 1`` needs no composition and returns the input unchanged.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if k == 1:
        return eps, delta
    return eps / (k * math.sqrt(math.log(1 / delta))), delta / (k * k)


def blocks_ledger(eps: float, delta: float, k: int) -> PrivacyBudget:
    """Total spend of the blockwise estimator: strong composition with slack ``delta``."""
    if k == 1:
        return PrivacyBudget(eps, delta)
    e, d = schedule_blocks(eps, delta, k)
    return strong_compose(e, d, k * k, delta)


@dataclass(frozen=True)
class IterationSchedule:
    eps_step: float
    delta_step: float
    steps: int
    delta_slack: float

    def composed(self) -> PrivacyBudget:
        return strong_compose(self.eps_step, self.delta_step, self.steps, self.delta_slack)


def schedule_iterations(eps: float, delta: float, steps: int) -> IterationSchedule:
    """Equal per-step budget for ``steps`` adaptive queries composing to ``(eps, delta)``."""
    PrivacyBudget(eps, delta)
    delta_slack = delta / 2
    delta_step = delta / (2 * steps)
    return IterationSchedule(
        eps_step=_calibrate_eps(eps, delta_step, steps, delta_slack),
        delta_step=delta_step,
        steps=steps,
        delta_slack=delta_slack,
    )
