"""Privacy-preserving rejection sampler for item-level estimation.

A single round picks a data index (or the garbage index), draws a candidate
uniformly from the ball of radius ``r * sqrt(d)`` around the chosen point, and
accepts it with a probability that reweights the candidate density to
``exp(eps * min(f(p), 2n/3))``. The number of rounds is a geometric random
variable, so stopping early does not leak how hard the dataset is.

The low-dimensional grid oracle :func:`reference_density` evaluates the ideal
(exponential-time) output distribution directly and is used by the tests.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy.special import expit, gammaln

from .geometry import count_cover_batch, sample_balls

# cap on candidate-batch size x n x d per vectorized chunk of rounds
_ROUND_ELEMS = 1 << 21


class Outcome(str, enum.Enum):
    ACCEPTED = "accepted"
    GARBAGE1 = "G1"
    GARBAGE2 = "G2"


@dataclass(frozen=True)
class EstimateOutcome:
    """Result of an estimator run: a point, or one of the two garbage buckets."""

    kind: Outcome
    point: np.ndarray | None = None
    rounds: int = 0
    meta: dict[str, Any] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.kind is Outcome.ACCEPTED:
            if self.point is None or not np.all(np.isfinite(self.point)):
                raise ValueError("accepted outcome needs a finite point")
        elif self.point is not None:
            raise ValueError("garbage outcomes carry no point")

    @property
    def accepted(self) -> bool:
        return self.kind is Outcome.ACCEPTED

    @classmethod
    def garbage2(cls, rounds: int = 0, **meta) -> "EstimateOutcome":
        return cls(Outcome.GARBAGE2, None, rounds, meta)

    def same_as(self, other: "EstimateOutcome") -> bool:
        if self.kind is not other.kind or self.rounds != other.rounds:
            return False
        if self.point is None:
            return True
        return bool(np.array_equal(self.point, other.point))


class RoundOutcome(str, enum.Enum):
    ACCEPTED_POINT = "point"
    ACCEPTED_G1 = "G1"
    REJECTED = "rejected"


@dataclass(frozen=True)
class MechanismParams:
    """Parameters of one item-level run.

    ``C`` is the sample-size constant behind the accuracy guarantee,
    ``retry_const`` scales the mean number of rounds ``N``; ``accept_const``
    and ``g1_accept`` are the two 1/3 factors of the acceptance step (only
    changed by audit negative controls and forced-rejection stubs).
    """

    eps: float
    delta: float
    alpha: float
    r: float
    C: float = 12.0
    retry_const: float = 1.0
    accept_const: float = 1.0 / 3.0
    g1_accept: float = 1.0 / 3.0

    def __post_init__(self):
        if not (self.eps > 0 and math.isfinite(self.eps)):
            raise ValueError(f"eps must be positive, got {self.eps}")
        if not (0 < self.delta <= 1 / 3):
            raise ValueError(f"delta must lie in (0, 1/3], got {self.delta}")
        if not (0 < self.alpha <= 1 / 3):
            raise ValueError(f"alpha must lie in (0, 1/3], got {self.alpha}")
        if self.eps < self.delta:
            raise ValueError("eps must be >= delta")
        if not (self.r > 0 and math.isfinite(self.r)):
            raise ValueError(f"r must be positive, got {self.r}")
        if self.retry_const <= 0:
            raise ValueError("retry_const must be positive")
        if not (0 <= self.accept_const and 0 <= self.g1_accept <= 1):
            raise ValueError("acceptance constants must be probabilities")

    def min_points(self) -> float:
        """Item count below which the accuracy guarantee does not apply."""
        return self.C / self.eps * math.log(1 / (self.alpha * self.eps * self.delta))

    def retry_mean(self, n: int) -> int:
        """Mean ``N`` of the geometric number of rounds."""
        log_n = math.log(self.retry_const) + 10 * math.sqrt(math.log(n)) - math.log(self.alpha)
        v = math.exp(log_n)
        # exp(log(...)) can overshoot an exact integer by an ulp
        if abs(v - round(v)) <= 1e-9 * v:
            v = round(v)
        return max(1, math.ceil(v))

    def warnings(self, n: int) -> list[str]:
        out = []
        if n < self.min_points():
            out.append("undersized")
        if self.eps > 1 / 3:
            out.append("eps_above_third")
        return out


def acceptance_probability(fp, n: int, eps: float, const: float = 1.0 / 3.0):
    """``const * (n / fp) * exp(eps * (min(fp, 2n/3) - 2n/3))`` clamped to [0, 1].

    Accepts a scalar or an integer array ``fp``; evaluated in log space.
    """
    f = np.asarray(fp)
    if np.any(f < 1) or np.any(f > n):
        raise ValueError(f"cover count must lie in [1, {n}]")
    if const == 0:
        out = np.zeros(f.shape)
    else:
        ff = f.astype(np.float64)
        cap = 2.0 * n / 3.0
        logp = math.log(const) + math.log(n) - np.log(ff) + eps * (np.minimum(ff, cap) - cap)
        out = np.minimum(np.exp(logp), 1.0)
    return float(out) if out.ndim == 0 else out


def garbage_index_probability(n: int, eps: float, delta: float) -> float:
    """P(i = n+1) = 1 / (1 + (delta/4) exp(eps 2n/3)), without forming the weights."""
    return float(expit(-(math.log(delta / 4) + eps * 2.0 * n / 3.0)))


def _points(points) -> np.ndarray:
    x = np.asarray(points, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("need a non-empty (n, d) array of points")
    if not np.all(np.isfinite(x)):
        raise ValueError("points must be finite")
    return x


def _round_batch(x, params, b, p_g, rng):
    """Run ``b`` independent rounds. Returns (kind codes, candidates) where
    code 0 = rejected, 1 = accepted point, 2 = accepted G1."""
    n, d = x.shape
    radius = params.r * math.sqrt(d)
    is_g = rng.random(b) < p_g
    idx = rng.integers(0, n, size=b)
    cand = sample_balls(x[idx], radius, rng)
    u = rng.random(b)
    acc = np.empty(b)
    acc[is_g] = params.g1_accept
    pts = ~is_g
    if np.any(pts):
        f = count_cover_batch(cand[pts], x, radius)
        acc[pts] = acceptance_probability(f, n, params.eps, params.accept_const)
    hit = u < acc
    code = np.where(hit, np.where(is_g, 2, 1), 0)
    return code, cand


def single_round(points, params: MechanismParams, rng: np.random.Generator):
    """One iteration of the rejection loop.

    Returns ``(RoundOutcome, point_or_None)``.
    """
    x = _points(points)
    p_g = garbage_index_probability(x.shape[0], params.eps, params.delta)
    code, cand = _round_batch(x, params, 1, p_g, rng)
    if code[0] == 1:
        return RoundOutcome.ACCEPTED_POINT, cand[0]
    if code[0] == 2:
        return RoundOutcome.ACCEPTED_G1, None
    return RoundOutcome.REJECTED, None


def sample_retries(N: int, rng: np.random.Generator) -> int:
    """Geometric(1/N) on {1, 2, ...}: ``1 + floor(ln u / ln(1 - 1/N))``."""
    if N <= 1:
        return 1
    u = 1.0 - rng.random()  # (0, 1]
    return 1 + int(math.floor(math.log(u) / math.log1p(-1.0 / N)))


def run_rounds(points, params: MechanismParams, max_rounds: int, rng: np.random.Generator):
    """Run up to ``max_rounds`` rounds, stopping at the first acceptance.

    Rounds are drawn in growing vectorized batches; the result has the same
    distribution as calling :func:`single_round` repeatedly.
    Returns ``(RoundOutcome, point_or_None, rounds_used)``.
    """
    x = _points(points)
    n, d = x.shape
    p_g = garbage_index_probability(n, params.eps, params.delta)
    cap = max(1, _ROUND_ELEMS // (n * d))
    batch = min(8, cap)
    used = 0
    while used < max_rounds:
        b = int(min(batch, max_rounds - used))
        code, cand = _round_batch(x, params, b, p_g, rng)
        hits = np.flatnonzero(code)
        if hits.size:
            j = int(hits[0])
            if code[j] == 1:
                return RoundOutcome.ACCEPTED_POINT, cand[j], used + j + 1
            return RoundOutcome.ACCEPTED_G1, None, used + j + 1
        used += b
        batch = min(batch * 2, cap)
    return RoundOutcome.REJECTED, None, used


def dp_estimate_1(points, params: MechanismParams, rng: np.random.Generator) -> EstimateOutcome:
    """Item-level private estimate of the center of a concentrated cluster.

    Privacy holds for every input; if at least 2/3 of the points lie in a ball
    of radius ``params.r`` around some ``x``, the output is within
    ``(1 + sqrt(d)) r`` of ``x`` with probability ``1 - O(alpha)``.
    """
    x = _points(points)
    n = x.shape[0]
    N = params.retry_mean(n)
    X = sample_retries(N, rng)
    kind, p, used = run_rounds(x, params, X, rng)
    meta = {"N": N, "max_rounds": X, "warnings": params.warnings(n)}
    if kind is RoundOutcome.ACCEPTED_POINT:
        return EstimateOutcome(Outcome.ACCEPTED, p, used, meta)
    if kind is RoundOutcome.ACCEPTED_G1:
        return EstimateOutcome(Outcome.GARBAGE1, None, used, meta)
    return EstimateOutcome(Outcome.GARBAGE2, None, used, meta)


def estimate_accept_prob(points, params: MechanismParams, trials: int,
                         rng: np.random.Generator) -> tuple[float, float]:
    """Monte Carlo estimate of the single-round acceptance probability.

    Returns ``(q_hat, standard_error)``.
    """
    if trials < 1:
        raise ValueError("trials must be positive")
    x = _points(points)
    n, d = x.shape
    p_g = garbage_index_probability(n, params.eps, params.delta)
    step = max(1, _ROUND_ELEMS // (n * d))
    hits = 0
    done = 0
    while done < trials:
        b = min(step, trials - done)
        code, _ = _round_batch(x, params, b, p_g, rng)
        hits += int(np.count_nonzero(code))
        done += b
    q = hits / trials
    return q, math.sqrt(max(q * (1 - q), 0.0) / trials)


def ball_volume(d: int, radius: float) -> float:
    return math.exp(d / 2 * math.log(math.pi) - gammaln(d / 2 + 1) + d * math.log(radius))


@dataclass(frozen=True)
class GridSpec:
    """Axis-aligned cell grid for ``d in {1, 2}``; ``subdiv`` sub-samples per cell axis."""

    lo: tuple[float, ...]
    hi: tuple[float, ...]
    cells: tuple[int, ...]
    subdiv: int | None = None

    def edges(self) -> list[np.ndarray]:
        return [np.linspace(a, b, c + 1) for a, b, c in zip(self.lo, self.hi, self.cells)]


@dataclass(frozen=True)
class ReferenceDensity:
    """Normalized ideal output law: per-cell mass plus the garbage-bucket mass."""

    grid: GridSpec
    mass: np.ndarray
    garbage: float

    def bin_points(self, samples) -> np.ndarray:
        s = np.asarray(samples, dtype=np.float64).reshape(-1, len(self.grid.cells))
        counts, _ = np.histogramdd(s, bins=self.grid.edges())
        return counts

    def tv_distance(self, samples, garbage_count: int) -> float:
        """Total variation between the empirical law (points binned to the grid
        plus a garbage count) and this density."""
        counts = self.bin_points(samples)
        total = counts.sum() + garbage_count
        emp = counts / total
        return 0.5 * (np.abs(emp - self.mass).sum() + abs(garbage_count / total - self.garbage))


def reference_density(points, params: MechanismParams, grid: GridSpec) -> ReferenceDensity:
    """Grid evaluation of density ``exp(eps min(f, 2n/3))`` on ``{f > 0}`` with a
    garbage atom of weight ``(4/delta) V_B``, normalized.

    Each cell is integrated with a midpoint rule on ``subdiv**d`` sub-points,
    chosen so that at least 1000 evaluation points fall in every ball.
    """
    x = _points(points)
    n, d = x.shape
    if d > 2:
        raise ValueError("reference_density supports d in {1, 2} only")
    if len(grid.cells) != d or len(grid.lo) != d or len(grid.hi) != d:
        raise ValueError("grid dimension does not match points")
    radius = params.r * math.sqrt(d)
    lo = np.asarray(grid.lo, dtype=float)
    hi = np.asarray(grid.hi, dtype=float)
    if np.any(x.min(axis=0) - radius < lo) or np.any(x.max(axis=0) + radius > hi):
        raise ValueError("grid does not cover the union of the balls")
    widths = (hi - lo) / np.asarray(grid.cells)
    vb = ball_volume(d, radius)
    sub = grid.subdiv
    if sub is None:
        sub = max(1, math.ceil((1000 * np.prod(widths) / vb) ** (1 / d)))
    if vb / np.prod(widths / sub) < 1000:
        raise ValueError("grid too coarse: fewer than 1000 evaluation points per ball")

    # midpoints of all sub-cells, axis by axis
    axes = []
    for a, w, c in zip(lo, widths, grid.cells):
        fine = a + (np.arange(c * sub) + 0.5) * (w / sub)
        axes.append(fine)
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    f = count_cover_batch(mesh, x, radius)
    cap = 2.0 * n / 3.0
    logw = params.eps * np.minimum(f, cap)
    # shift by the max exponent before exponentiating
    shift = params.eps * cap
    dens = np.where(f > 0, np.exp(logw - shift), 0.0)
    sub_vol = float(np.prod(widths / sub))
    fine_shape = tuple(c * sub for c in grid.cells)
    dens = dens.reshape(fine_shape)
    for ax, c in enumerate(grid.cells):
        dens = dens.reshape(dens.shape[:ax] + (c, sub) + dens.shape[ax + 1 :]).sum(axis=ax + 1)
    cell_mass = dens * sub_vol
    g = math.exp(math.log(4 / params.delta) + math.log(vb) - shift)
    total = cell_mass.sum() + g
    return ReferenceDensity(grid=grid, mass=cell_mass / total, garbage=g / total)
