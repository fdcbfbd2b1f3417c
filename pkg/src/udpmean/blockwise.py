"""Interpolation estimator: rotate, cut into ``k**2`` blocks, estimate each block
privately, concatenate, rotate back.

Rotating with a random sign diagonal followed by a normalized Hadamard
transform spreads every vector's mass evenly over coordinates, so a cluster of
radius ``r`` becomes, block by block, a cluster of radius about ``r / k``.
The per-block budgets come from :func:`accounting.schedule_blocks`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .accounting import blocks_ledger, schedule_blocks
from .amplify import AmplifyParams, dp_estimate_2
from .geometry import make_rotation, next_pow2, rotate, unrotate
from .mechanism import EstimateOutcome, MechanismParams, Outcome, dp_estimate_1

ENGINES = ("dp1", "dp2")


class ThresholdError(ValueError):
    """Too few points for any block size."""


def k_requirement(k: int, eps: float, delta: float, const: float = 1.0) -> float:
    """Points needed for ``k``: ``const * (k/eps) * ln(k/delta) * sqrt(ln(1/delta))``."""
    return const * (k / eps) * math.log(k / delta) * math.sqrt(math.log(1 / delta))


def min_users(eps: float, delta: float, C: float = 12.0) -> float:
    return C / eps * math.log(1 / delta)


def choose_k(n: int, d: int, eps: float, delta: float, *, const: float = 1.0,
             C: float = 12.0) -> int:
    """Largest power of two ``k <= sqrt(d_pad)`` with ``n >= k_requirement(k)``; 1 if none."""
    if n < min_users(eps, delta, C):
        raise ThresholdError(
            f"n={n} is below the minimum {min_users(eps, delta, C):.1f} for eps={eps}, delta={delta}"
        )
    d_pad = next_pow2(d)
    best = 1
    k = 2
    while k * k <= d_pad:
        if n >= k_requirement(k, eps, delta, const):
            best = k
        k *= 2
    return best


@dataclass(frozen=True)
class BlockPlan:
    k: int
    d_pad: int
    eps_block: float
    delta_block: float
    alpha_block: float
    r_block: float

    def __post_init__(self):
        if self.k < 1 or self.k & (self.k - 1):
            raise ValueError("k must be a power of two")
        if self.d_pad % (self.k * self.k):
            raise ValueError("k**2 must divide d_pad")

    @property
    def block_count(self) -> int:
        return self.k * self.k

    @property
    def block_dim(self) -> int:
        return self.d_pad // self.block_count

    def slices(self) -> list[slice]:
        b = self.block_dim
        return [slice(s * b, (s + 1) * b) for s in range(self.block_count)]


@dataclass(frozen=True)
class InterpolationParams:
    """``k=None`` picks ``k`` with :func:`choose_k` scaled by ``k_const``.

    ``c_b`` scales the per-block radius; ``engine`` selects the per-block
    estimator (``"dp1"`` single run, ``"dp2"`` median of runs).
    """

    eps: float
    delta: float
    alpha: float
    r: float
    k: int | None = None
    k_const: float = 4.0
    c_b: float = 0.5
    C: float = 12.0
    engine: str = "dp1"
    retry_const: float = 1.0
    c_k: float = 18.0

    def __post_init__(self):
        if self.engine not in ENGINES:
            raise ValueError(f"engine must be one of {ENGINES}")

    def plan(self, n: int, d: int) -> BlockPlan:
        d_pad = next_pow2(d)
        k = self.k
        if k is None:
            k = choose_k(n, d, self.eps, self.delta, const=self.k_const, C=self.C)
        if k * k > d_pad:
            raise ValueError(f"k={k} too large for d_pad={d_pad}")
        eps_b, delta_b = schedule_blocks(self.eps, self.delta, k)
        kk = k * k
        r_block = min(
            self.r,
            self.c_b * self.r * math.sqrt(math.log(d_pad * n / self.alpha)) / k,
        )
        return BlockPlan(
            k=k,
            d_pad=d_pad,
            eps_block=eps_b,
            delta_block=delta_b,
            alpha_block=self.alpha / kk,
            r_block=r_block,
        )


def _block_runner(params: InterpolationParams, plan: BlockPlan):
    if params.engine == "dp1":
        mp = MechanismParams(
            eps=plan.eps_block,
            delta=min(plan.delta_block, 1 / 3),
            alpha=min(plan.alpha_block, 1 / 3),
            r=plan.r_block,
            C=params.C,
            retry_const=params.retry_const,
        )
        return lambda pts, rng: dp_estimate_1(pts, mp, rng)
    ap = AmplifyParams(
        eps=plan.eps_block,
        delta=plan.delta_block,
        alpha=min(plan.alpha_block, 1 / 3),
        r=plan.r_block,
        c_k=params.c_k,
        C=params.C,
        retry_const=params.retry_const,
    )
    return lambda pts, rng: dp_estimate_2(pts, ap, rng)


def dp_estimate_interpolated(points, params: InterpolationParams,
                             rng: np.random.Generator) -> EstimateOutcome:
    """Blockwise private estimate.

    Any garbage block turns the whole result into ``G2``.
    """
    x = np.asarray(points, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("need a non-empty (n, d) array of points")
    n, d = x.shape
    plan = params.plan(n, d)
    # the rotation seed is drawn before any data is touched
    rot = make_rotation(d, int(rng.integers(0, 2**63 - 1)))
    y = rotate(rot, x)
    runner = _block_runner(params, plan)
    streams = rng.spawn(plan.block_count)
    parts = []
    rounds = 0
    garbage_blocks = 0
    for sl, s in zip(plan.slices(), streams):
        out = runner(y[:, sl], s)
        rounds += out.rounds
        if out.kind is Outcome.ACCEPTED:
            parts.append(out.point)
        else:
            garbage_blocks += 1
            parts.append(None)
    meta = {
        "k": plan.k,
        "block_count": plan.block_count,
        "block_dim": plan.block_dim,
        "eps_block": plan.eps_block,
        "delta_block": plan.delta_block,
        "r_block": plan.r_block,
        "engine": params.engine,
        "rotation_seed": rot.seed,
        "garbage_blocks": garbage_blocks,
        "ledger": blocks_ledger(params.eps, params.delta, plan.k).as_dict(),
    }
    if garbage_blocks:
        return EstimateOutcome(Outcome.GARBAGE2, None, rounds, meta)
    est = unrotate(rot, np.concatenate(parts))
    return EstimateOutcome(Outcome.ACCEPTED, est, rounds, meta)
