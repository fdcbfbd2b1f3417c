"""User-level estimation: average each user's samples, then run the blockwise
item-level estimator on the user means. Also the one-hot reduction for
learning a discrete distribution."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .blockwise import InterpolationParams, dp_estimate_interpolated, min_users
from .mechanism import EstimateOutcome, Outcome


@dataclass(frozen=True)
class UserDataset:
    """``data`` has shape ``(n, m, d)``; user ``i`` owns ``data[i]``."""

    data: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.data, dtype=np.float64)
        if a.ndim != 3 or 0 in a.shape:
            raise ValueError("user dataset must be a non-empty (n, m, d) array")
        if not np.all(np.isfinite(a)):
            raise ValueError("user dataset entries must be finite")
        object.__setattr__(self, "data", a)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def m(self) -> int:
        return self.data.shape[1]

    @property
    def d(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class DiscreteSamples:
    """``data`` has shape ``(n, m)`` with categories in ``1..d``."""

    data: np.ndarray
    d: int

    def __post_init__(self):
        a = np.asarray(self.data)
        if a.ndim != 2 or 0 in a.shape:
            raise ValueError("discrete samples must be a non-empty (n, m) array")
        if not np.issubdtype(a.dtype, np.integer):
            raise ValueError("categories must be integers")
        if self.d < 1 or a.min() < 1 or a.max() > self.d:
            raise ValueError(f"categories must lie in 1..{self.d}")
        object.__setattr__(self, "data", a.astype(np.int64))

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def m(self) -> int:
        return self.data.shape[1]

    def one_hot(self) -> UserDataset:
        eye = np.eye(self.d)
        return UserDataset(eye[self.data - 1])

    def frequencies(self) -> np.ndarray:
        """Per-user empirical category frequencies, shape ``(n, d)``."""
        out = np.zeros((self.n, self.d))
        rows = np.repeat(np.arange(self.n), self.m)
        np.add.at(out, (rows, self.data.ravel() - 1), 1.0)
        return out / self.m


def user_means(dataset: UserDataset) -> np.ndarray:
    return dataset.data.mean(axis=1)


def user_bounds(n: int, m: int, d: int, r: float, eps: float, delta: float, alpha: float) -> dict:
    """Both analytic error expressions (unit constants) reported alongside runs."""
    flat = r * math.sqrt(d / m)
    interp = (
        r * math.sqrt(d) * math.log(d / delta) * math.sqrt(math.log(1 / delta))
        * math.sqrt(math.log(d * n / alpha)) / (eps * n * math.sqrt(m))
    )
    return {"bound_sqrt_d_over_m": flat, "bound_interpolated": interp}


class EstimationFailure(RuntimeError):
    """The private estimator returned a garbage bucket."""


def dp_estimate_user(dataset: UserDataset, r: float, alpha: float, eps: float, delta: float,
                     rng: np.random.Generator, *, r_scale: float = 10.0,
                     params: InterpolationParams | None = None) -> EstimateOutcome:
    """User-level private mean estimate.

    Each user is reduced to the mean of their ``m`` samples; the item radius is
    ``r_scale * r / sqrt(m)``. Replacing one user's whole block changes one
    item, so the item-level guarantee is a user-level guarantee.
    ``params`` overrides the interpolation knobs (its budget and radius fields
    are replaced by the arguments).
    """
    if dataset.n == 0:
        raise ValueError("empty dataset")
    return estimate_from_means(user_means(dataset), dataset.m, r, alpha, eps, delta, rng,
                               r_scale=r_scale, params=params)


def estimate_from_means(means, m: int, r: float, alpha: float, eps: float, delta: float,
                        rng: np.random.Generator, *, r_scale: float = 10.0,
                        params: InterpolationParams | None = None) -> EstimateOutcome:
    """:func:`dp_estimate_user` given precomputed ``(n, d)`` user means."""
    means = np.asarray(means, dtype=np.float64)
    n, d = means.shape
    r_item = r_scale * r / math.sqrt(m)
    base = params or InterpolationParams(eps=eps, delta=delta, alpha=alpha, r=r_item)
    p = replace(base, eps=eps, delta=delta, alpha=alpha, r=r_item)
    warnings = []
    if n < min_users(eps, delta, p.C) or n < p.C / eps * math.log(1 / (alpha * delta)):
        warnings.append("below_user_threshold")
        if n < min_users(eps, delta, p.C) and p.k is None:
            p = replace(p, k=1)
    if n > math.sqrt(d) / eps * math.log(1 / delta):
        warnings.append("above_interpolation_regime")
    out = dp_estimate_interpolated(means, p, rng)
    meta = dict(out.meta)
    meta.update(r_item=r_item, warnings=warnings, **user_bounds(n, m, d, r, eps, delta, alpha))
    return EstimateOutcome(out.kind, out.point, out.rounds, meta)


def project_simplex(v) -> np.ndarray:
    """Euclidean projection onto the probability simplex (sort-based)."""
    y = np.asarray(v, dtype=np.float64)
    d = y.shape[0]
    u = np.sort(y)[::-1]
    css = np.cumsum(u) - 1.0
    ind = np.arange(1, d + 1)
    rho = np.nonzero(u - css / ind > 0)[0][-1]
    theta = css[rho] / (rho + 1)
    w = np.maximum(y - theta, 0.0)
    # renormalize away the last bits of rounding so the sum is exactly 1
    return w / w.sum()


def learn_discrete_distribution(samples: DiscreteSamples, alpha: float, eps: float, delta: float,
                                rng: np.random.Generator, project: bool = False,
                                **kwargs) -> np.ndarray:
    """Private estimate of the category distribution via one-hot means (radius 1).

    Raises :class:`EstimationFailure` on a garbage outcome.
    """
    # per-user frequencies are exactly the one-hot user means
    out = estimate_from_means(samples.frequencies(), samples.m, 1.0, alpha, eps, delta, rng, **kwargs)
    if out.kind is not Outcome.ACCEPTED:
        raise EstimationFailure(f"estimator returned {out.kind.value}")
    return project_simplex(out.point) if project else out.point


def tv_distance(p, q) -> float:
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())
