"""Synthetic user datasets with ball-supported marginals and a tunable
intra-user correlation, plus adversarial user corruption."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import clip_to_ball, sample_balls
from .userlevel import DiscreteSamples, UserDataset

FAMILIES = ("uniform_ball", "scaled_gaussian_clipped", "point_mass", "discrete")
STRATEGIES = ("far_cluster", "mirror", "scatter")


@dataclass(frozen=True)
class DataSpec:
    n: int
    m: int
    d: int
    r: float = 1.0
    mu: tuple | None = None  # defaults to the origin
    family: str = "uniform_ball"
    probabilities: tuple | None = None
    rho: float = 0.0
    seed: int = 0

    def __post_init__(self):
        for name in ("n", "m", "d"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or v < 1:
                raise ValueError(f"{name} must be a positive integer, got {v!r}")
        if not (self.r > 0 and math.isfinite(self.r)):
            raise ValueError("r must be positive and finite")
        if self.family not in FAMILIES:
            raise ValueError(f"family must be one of {FAMILIES}")
        if not (0.0 <= self.rho <= 1.0):
            raise ValueError("rho must lie in [0, 1]")
        if self.mu is not None:
            mu = np.asarray(self.mu, dtype=np.float64)
            if mu.shape != (self.d,) or not np.all(np.isfinite(mu)):
                raise ValueError("mu must be a finite vector of length d")
        if self.family == "discrete":
            p = np.asarray(self.probabilities if self.probabilities is not None else [], dtype=np.float64)
            if p.shape != (self.d,):
                raise ValueError("discrete family needs d probabilities")
            if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
                raise ValueError("probabilities must be nonnegative and sum to 1")

    def mean(self) -> np.ndarray:
        """The true mean (for ``discrete`` the probability vector, i.e. the one-hot mean)."""
        if self.family == "discrete":
            return np.asarray(self.probabilities, dtype=np.float64)
        if self.mu is None:
            return np.zeros(self.d)
        return np.asarray(self.mu, dtype=np.float64)

    def to_dict(self) -> dict:
        return {
            "n": int(self.n), "m": int(self.m), "d": int(self.d), "r": float(self.r),
            "mu": None if self.mu is None else [float(v) for v in self.mu],
            "family": self.family,
            "probabilities": None if self.probabilities is None else [float(v) for v in self.probabilities],
            "rho": float(self.rho), "seed": int(self.seed),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DataSpec":
        d = dict(d)
        for key in ("mu", "probabilities"):
            if d.get(key) is not None:
                d[key] = tuple(d[key])
        return cls(**d)


def _noise(spec: DataSpec, radius: float, rng, shape) -> np.ndarray:
    n, m, d = shape
    if radius == 0:
        return np.zeros(shape)
    if spec.family == "uniform_ball":
        return sample_balls(np.zeros((n * m, d)), radius, rng).reshape(shape)
    # scaled_gaussian_clipped: std chosen so the typical norm is about radius/2
    z = rng.standard_normal(shape) * (radius / (2 * math.sqrt(d)))
    return clip_to_ball(np.zeros(d), z.reshape(-1, d), radius).reshape(shape)


def generate(spec: DataSpec) -> UserDataset | DiscreteSamples:
    """Draw a dataset. Real families give every sample within ``r`` of ``mu``.

    With ``rho > 0`` each user gets a latent shift uniform on the sphere of
    radius ``rho * r / sqrt(m)``; samples are ``clip(mu + shift + noise)`` with
    noise in the ball of radius ``r - |shift|``.
    """
    rng = np.random.default_rng(spec.seed)
    n, m, d = spec.n, spec.m, spec.d
    if spec.family == "discrete":
        cats = rng.choice(d, size=(n, m), p=np.asarray(spec.probabilities)) + 1
        return DiscreteSamples(cats.astype(np.int64), d)
    mu = spec.mean()
    if spec.family == "point_mass":
        return UserDataset(np.broadcast_to(mu, (n, m, d)).copy())
    s_norm = spec.rho * spec.r / math.sqrt(m)
    g = rng.standard_normal((n, d))
    nrm = np.linalg.norm(g, axis=1, keepdims=True)
    nrm[nrm == 0] = 1.0
    shifts = g / nrm * s_norm
    noise = _noise(spec, spec.r - s_norm, rng, (n, m, d))
    x = shifts[:, None, :] + noise
    x = clip_to_ball(np.zeros(d), x.reshape(-1, d), spec.r).reshape(n, m, d) + mu
    # adding mu back can cost an ulp; re-clip around mu so support is exact
    x = clip_to_ball(mu, x.reshape(-1, d), spec.r).reshape(n, m, d)
    return UserDataset(x)


@dataclass(frozen=True)
class AdversarySpec:
    fraction: float
    strategy: str = "far_cluster"
    target: tuple | None = None  # far_cluster only
    scale: float = 1e6  # distance (in units of r) for scatter and default target

    def __post_init__(self):
        if not (0.0 <= self.fraction < 0.5):
            raise ValueError("fraction must lie in [0, 0.5)")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}")


def corrupt(dataset: UserDataset, adversary: AdversarySpec, rng: np.random.Generator,
            r: float = 1.0) -> tuple[UserDataset, np.ndarray]:
    """Replace ``floor(fraction * n)`` users' whole sample blocks.

    The adversary sees the full dataset. Returns the new dataset and the sorted
    corrupted user indices.
    """
    x = dataset.data
    n, m, d = x.shape
    count = math.floor(adversary.fraction * n)
    if count == 0:
        return UserDataset(x.copy()), np.zeros(0, dtype=np.int64)
    idx = np.sort(rng.choice(n, size=count, replace=False))
    out = x.copy()
    if adversary.strategy == "far_cluster":
        if adversary.target is None:
            target = np.zeros(d)
            target[0] = adversary.scale * r
        else:
            target = np.asarray(adversary.target, dtype=np.float64)
            if target.shape != (d,):
                raise ValueError("target must have length d")
        out[idx] = target
    elif adversary.strategy == "mirror":
        center = x.reshape(-1, d).mean(axis=0)
        out[idx] = 2 * center - x[idx]
    else:
        g = rng.standard_normal((count, d))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        out[idx] = (x.reshape(-1, d).mean(axis=0) + adversary.scale * r * g)[:, None, :]
    return UserDataset(out), idx
