"""Vector primitives: ball sampling, cover counting, coordinate-wise median and
the randomized Hadamard rotation used to flatten coordinates before blocking.

Every routine that draws randomness takes an explicit ``numpy.random.Generator``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Upper bound on the number of float64 temporaries materialized at once when
# computing pairwise distances.
_PAIRWISE_CHUNK = 1 << 21


def _as_finite(x, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must contain only finite values")
    return arr


def _force_inside(center: np.ndarray, q: np.ndarray, radius: float) -> np.ndarray:
    # Float rounding can leave a point one ulp outside the closed ball; pull
    # those back toward the center until the computed distance is within radius.
    offsets = q - center
    for _ in range(64):
        dist = np.linalg.norm(q - center, axis=-1)
        bad = dist > radius
        if not np.any(bad):
            return q
        offsets = np.where(bad[..., None], offsets * (1.0 - 2.0**-40), offsets)
        q = center + offsets
    raise FloatingPointError("could not place point inside ball")


def sample_ball(center, radius: float, rng: np.random.Generator) -> np.ndarray:
    """Draw one point uniformly from the closed Euclidean ball ``B(center, radius)``.

    Direction comes from a normalized Gaussian, the norm from ``radius * u**(1/d)``.
    """
    c = _as_finite(center, "center")
    if c.ndim != 1:
        raise ValueError("center must be a 1-D point")
    return sample_balls(c[None, :], radius, rng)[0]


def sample_balls(centers, radius: float, rng: np.random.Generator) -> np.ndarray:
    """Vectorized :func:`sample_ball`: one uniform draw per row of ``centers``."""
    c = _as_finite(centers, "centers")
    if not np.isfinite(radius) or radius < 0:
        raise ValueError("radius must be a finite non-negative number")
    b, d = c.shape
    if radius == 0:
        return c.copy()
    z = rng.standard_normal((b, d))
    norms = np.linalg.norm(z, axis=1)
    # a zero Gaussian vector has probability 0 but would divide by zero
    norms[norms == 0] = 1.0
    u = rng.random(b)
    scale = radius * u ** (1.0 / d) / norms
    q = c + z * scale[:, None]
    return _force_inside(c, q, radius)


def clip_to_ball(center, points, radius: float) -> np.ndarray:
    """Rescale each row of ``points`` toward ``center`` so it lies in the closed ball."""
    c = np.asarray(center, dtype=np.float64)
    p = np.asarray(points, dtype=np.float64)
    off = p - c
    norms = np.linalg.norm(off, axis=-1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        factor = np.where(norms > radius, radius / norms, 1.0)
    return _force_inside(c, c + off * factor, radius)


def count_cover(p, points, ball_radius: float) -> int:
    """Number of ``points`` within closed distance ``ball_radius`` of ``p``."""
    q = np.asarray(p, dtype=np.float64)
    x = np.asarray(points, dtype=np.float64)
    if x.ndim != 2 or q.ndim != 1 or x.shape[1] != q.shape[0]:
        raise ValueError(f"dimension mismatch: p has shape {q.shape}, points {x.shape}")
    diff = x - q
    sq = np.einsum("ij,ij->i", diff, diff)
    return int(np.count_nonzero(sq <= ball_radius * ball_radius))


def count_cover_batch(queries, points, ball_radius: float) -> np.ndarray:
    """:func:`count_cover` for each row of ``queries``; returns an int array.

    Distances come from the expansion ``|q|^2 - 2 q.x + |x|^2`` (one matrix
    product); pairs whose value lands within rounding error of the radius are
    recomputed directly, so the closed-ball count stays exact.
    """
    q = np.asarray(queries, dtype=np.float64)
    x = np.asarray(points, dtype=np.float64)
    if q.ndim != 2 or x.ndim != 2 or q.shape[1] != x.shape[1]:
        raise ValueError(f"dimension mismatch: queries {q.shape}, points {x.shape}")
    b, d = q.shape
    n = x.shape[0]
    r2 = ball_radius * ball_radius
    xx = np.einsum("ij,ij->i", x, x)
    out = np.empty(b, dtype=np.int64)
    step = max(1, _PAIRWISE_CHUNK // max(1, n))
    for s in range(0, b, step):
        qs = q[s : s + step]
        qq = np.einsum("ij,ij->i", qs, qs)
        sq = qq[:, None] + xx[None, :] - 2.0 * (qs @ x.T)
        tol = (4 * d + 8) * np.finfo(np.float64).eps * (qq[:, None] + xx[None, :] + r2)
        inside = sq < r2 - tol
        near = np.abs(sq - r2) <= tol
        if np.any(near):
            bi, xi = np.nonzero(near)
            diff = qs[bi] - x[xi]
            exact = np.einsum("ij,ij->i", diff, diff) <= r2
            inside[bi[exact], xi[exact]] = True
        out[s : s + step] = np.count_nonzero(inside, axis=1)
    return out


def coordinate_median(points) -> np.ndarray:
    """Per-coordinate median; even counts average the two middle values."""
    x = np.asarray(points, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("coordinate_median needs a non-empty 2-D array of points")
    return np.median(x, axis=0)


def next_pow2(d: int) -> int:
    if d < 1:
        raise ValueError("dimension must be positive")
    return 1 << (int(d) - 1).bit_length()


def fwht(x: np.ndarray) -> np.ndarray:
    """Unnormalized fast Walsh-Hadamard transform along the last axis.

    Returns a new array; length of the last axis must be a power of two.
    Sylvester ordering, so the result equals ``x @ H`` for ``H = scipy.linalg.hadamard``.
    """
    a = np.array(x, dtype=np.float64, copy=True)
    d = a.shape[-1]
    if d & (d - 1):
        raise ValueError("FWHT length must be a power of two")
    lead = a.shape[:-1]
    h = 1
    while h < d:
        v = a.reshape(*lead, d // (2 * h), 2, h)
        top = v[..., 0, :].copy()
        v[..., 0, :] += v[..., 1, :]
        v[..., 1, :] = top - v[..., 1, :]
        h *= 2
    return a


@dataclass(frozen=True)
class RotationPlan:
    """Seeded sign diagonal ``D`` defining the map ``v -> (1/sqrt(d_pad)) H D v``."""

    signs: np.ndarray
    d_orig: int
    d_pad: int
    seed: int | None

    def __post_init__(self):
        if self.d_pad & (self.d_pad - 1) or self.d_pad < self.d_orig:
            raise ValueError("d_pad must be a power of two >= d_orig")
        if self.signs.shape != (self.d_pad,) or not np.all(np.abs(self.signs) == 1):
            raise ValueError("signs must be a +/-1 vector of length d_pad")


def make_rotation(d: int, seed) -> RotationPlan:
    """Build a rotation plan for ``d``-dimensional inputs. Reads only ``(d, seed)``."""
    if d < 1:
        raise ValueError("d must be >= 1")
    d_pad = next_pow2(d)
    rng = np.random.default_rng(seed)
    signs = rng.integers(0, 2, size=d_pad).astype(np.float64) * 2.0 - 1.0
    signs.setflags(write=False)
    return RotationPlan(signs=signs, d_orig=int(d), d_pad=d_pad, seed=seed)


def rotate(plan: RotationPlan, v) -> np.ndarray:
    """Zero-pad to ``d_pad`` then apply ``(1/sqrt(d_pad)) H D``. Accepts (d,) or (n, d)."""
    x = np.asarray(v, dtype=np.float64)
    if x.shape[-1] != plan.d_orig:
        raise ValueError(f"expected last axis {plan.d_orig}, got {x.shape[-1]}")
    pad = np.zeros(x.shape[:-1] + (plan.d_pad,))
    pad[..., : plan.d_orig] = x
    return fwht(pad * plan.signs) / np.sqrt(plan.d_pad)


def unrotate(plan: RotationPlan, w) -> np.ndarray:
    """Exact inverse of :func:`rotate` followed by truncation to ``d_orig``."""
    y = np.asarray(w, dtype=np.float64)
    if y.shape[-1] != plan.d_pad:
        raise ValueError(f"expected last axis {plan.d_pad}, got {y.shape[-1]}")
    # H is symmetric with H @ H = d_pad * I, and D is its own inverse.
    x = fwht(y) * plan.signs / np.sqrt(plan.d_pad)
    return x[..., : plan.d_orig]
