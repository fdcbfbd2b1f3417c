"""Projected SGD for convex losses driven by a user-level private gradient oracle.

The loop is split into Query (ask the oracle at the current iterate), Update
(projected step) and Aggregate (iterate average), so other step rules can be
slotted in without touching the oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .accounting import PrivacyBudget, schedule_iterations
from .blockwise import InterpolationParams
from .mechanism import Outcome
from .userlevel import UserDataset, dp_estimate_user

PILOT_CALLS = 10


class OracleFailure(RuntimeError):
    """The private mean estimator returned garbage."""


class SgdAborted(RuntimeError):
    """Too many oracle failures during a run."""


@dataclass(frozen=True)
class BallDomain:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        c = np.asarray(self.center, dtype=np.float64)
        if c.ndim != 1 or not np.all(np.isfinite(c)):
            raise ValueError("center must be a finite vector")
        if not self.radius > 0:
            raise ValueError("radius must be positive")
        object.__setattr__(self, "center", c)


@dataclass(frozen=True)
class ConvexProblem:
    """``grad(theta, z)`` must broadcast over leading axes of ``z`` (shape ``(..., dim)``)."""

    dim: int
    domain: BallDomain
    loss: Callable
    grad: Callable
    G: float
    H: float
    sigma: float
    mu_sc: float | None = None

    def __post_init__(self):
        if self.domain.center.shape != (self.dim,):
            raise ValueError("domain center must have length dim")
        for name in ("G", "H", "sigma"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    def risk(self, theta, dataset: UserDataset) -> float:
        return float(np.mean(self.loss(theta, dataset.data)))

    def full_gradient(self, theta, dataset: UserDataset) -> np.ndarray:
        return self.grad(theta, dataset.data).reshape(-1, self.dim).mean(axis=0)


def quadratic_problem(eigs, center_z=None, R: float = 1.0, z_radius: float = 1.0) -> ConvexProblem:
    """``l(theta; z) = 0.5 (theta - z)^T diag(eigs) (theta - z)`` on the ball of radius ``R``.

    ``z`` is assumed to lie within ``z_radius`` of ``center_z``; the constants
    G, H, sigma are derived from that.
    """
    a = np.asarray(eigs, dtype=np.float64)
    d = a.shape[0]
    cz = np.zeros(d) if center_z is None else np.asarray(center_z, dtype=np.float64)
    H = float(a.max())

    def loss(theta, z):
        diff = theta - z
        return 0.5 * np.sum(a * diff * diff, axis=-1)

    def grad(theta, z):
        return a * (theta - z)

    G = H * (R + float(np.linalg.norm(cz)) + z_radius)
    return ConvexProblem(dim=d, domain=BallDomain(np.zeros(d), R), loss=loss, grad=grad,
                         G=G, H=H, sigma=H * z_radius, mu_sc=float(a.min()))


def project(theta, domain: BallDomain) -> np.ndarray:
    t = np.asarray(theta, dtype=np.float64)
    off = t - domain.center
    nrm = np.linalg.norm(off)
    if nrm <= domain.radius:
        return t.copy()
    out = domain.center + off * (domain.radius / nrm)
    # rounding can leave the result a hair outside
    while np.linalg.norm(out - domain.center) > domain.radius:
        off = out - domain.center
        out = domain.center + off * (1 - 2.0**-40)
    return out


def private_gradient_oracle(problem: ConvexProblem, dataset: UserDataset, theta,
                            sub_budget: PrivacyBudget, rng: np.random.Generator, *,
                            alpha: float = 0.05, params: InterpolationParams | None = None) -> np.ndarray:
    """Private estimate of the empirical gradient at ``theta``.

    Per-sample gradients form an ``(n, m, dim)`` user dataset fed to the
    user-level estimator with concentration radius ``G``.
    """
    grads = UserDataset(problem.grad(np.asarray(theta, dtype=np.float64), dataset.data))
    out = dp_estimate_user(grads, problem.G, alpha, sub_budget.eps, sub_budget.delta, rng, params=params)
    if out.kind is not Outcome.ACCEPTED:
        raise OracleFailure(f"oracle returned {out.kind.value}")
    return out.point


def exact_gradient_oracle(problem: ConvexProblem, dataset: UserDataset):
    return lambda theta, rng: problem.full_gradient(theta, dataset)


@dataclass
class SgdTrace:
    iterates: list = field(default_factory=list)  # (theta_t, g_t); g is None for the last
    T: int = 0
    final: np.ndarray | None = None
    budget_ledger: dict = field(default_factory=dict)
    step_size: float = 0.0
    nu_hat: float = 0.0
    failures: int = 0
    warnings: list = field(default_factory=list)

    @property
    def thetas(self) -> np.ndarray:
        return np.stack([t for t, _ in self.iterates])


def _query(oracle, theta, rng):
    return oracle(theta, rng)


def _update(theta, g, eta, domain):
    return project(theta - eta * g, domain)


def _aggregate(thetas) -> np.ndarray:
    # average of theta_1..theta_T (the iterates after each step)
    return np.mean(thetas[1:], axis=0) if len(thetas) > 1 else thetas[0]


def run_sgd(problem: ConvexProblem, oracle, T: int, rng: np.random.Generator, *,
            theta0=None, nu_hat: float | None = None, max_fail_frac: float = 0.1) -> SgdTrace:
    """Generic projected SGD. ``oracle(theta, rng)`` may raise :class:`OracleFailure`;
    a failed query is retried with a fresh stream (each attempt is a charged call).
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    dom = problem.domain
    theta = project(dom.center if theta0 is None else theta0, dom)
    trace = SgdTrace(T=T)
    streams = iter(rng.spawn(T + PILOT_CALLS + int(max_fail_frac * T) + 1))
    if nu_hat is None:
        pilot = []
        for _ in range(PILOT_CALLS):
            try:
                pilot.append(_query(oracle, theta, next(streams)))
            except OracleFailure:
                trace.failures += 1
        if len(pilot) >= 2:
            p = np.stack(pilot)
            nu_hat = float(np.sqrt(np.mean(np.sum((p - p.mean(axis=0)) ** 2, axis=1))))
        else:
            nu_hat = 0.0
    trace.nu_hat = nu_hat
    eta = 1.0 / problem.H
    if nu_hat > 0:
        eta = min(eta, dom.radius / (nu_hat * math.sqrt(T)))
    trace.step_size = eta
    fails = 0
    t = 0
    while t < T:
        try:
            g = _query(oracle, theta, next(streams))
        except OracleFailure:
            fails += 1
            trace.failures += 1
            if fails > max_fail_frac * T:
                raise SgdAborted(f"{fails} oracle failures in {t} steps (limit {max_fail_frac * T:.1f})")
            continue
        trace.iterates.append((theta, g))
        theta = _update(theta, g, eta, dom)
        t += 1
    trace.iterates.append((theta, None))
    trace.final = _aggregate(trace.thetas)
    return trace


def user_threshold_ok(n: int, T: int, eps: float) -> bool:
    """Whether ``n >= sqrt(T)/eps`` (log factors set to 1)."""
    return n >= math.sqrt(T) / eps


def private_sgd(problem: ConvexProblem, dataset: UserDataset, total_budget: PrivacyBudget,
                T: int, rng: np.random.Generator, *, alpha: float = 0.05,
                params: InterpolationParams | None = None, theta0=None) -> SgdTrace:
    """Projected SGD with the private oracle.

    The budget is split evenly over ``T + 10 + floor(T/10)`` oracle calls (steps,
    pilot batch, and the retries tolerated before aborting) by strong
    composition.
    """
    calls = T + PILOT_CALLS + int(0.1 * T)
    sched = schedule_iterations(total_budget.eps, total_budget.delta, calls)
    sub = PrivacyBudget(sched.eps_step, sched.delta_step)

    def oracle(theta, s):
        return private_gradient_oracle(problem, dataset, theta, sub, s, alpha=alpha, params=params)

    trace = run_sgd(problem, oracle, T, rng, theta0=theta0)
    trace.budget_ledger = {
        "eps_step": sched.eps_step,
        "delta_step": sched.delta_step,
        "calls_budgeted": calls,
        "composed": sched.composed().as_dict(),
        "total": total_budget.as_dict(),
    }
    if not user_threshold_ok(dataset.n, T, total_budget.eps):
        trace.warnings.append("below_user_threshold")
    return trace
