"""Generalized Pareto distribution: quantiles, CDF and tail fitting.

Parameterization: location ``mu``, scale ``sigma > 0`` and shape ``k`` with
``k > 0`` for heavy (power-law) tails,

    F(x) = 1 - (1 + k (x - mu) / sigma) ** (-1 / k).

Shape parameters below ``SHAPE_CUTOFF`` in magnitude use the exponential
limit ``F(x) = 1 - exp(-(x - mu) / sigma)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    InsufficientTail,
    InvalidProbability,
    NonPositiveExceedance,
    OutOfSupport,
)

SHAPE_CUTOFF = 1e-6
MIN_TAIL = 5


@dataclass(frozen=True)
class GeneralizedPareto:
    location: float
    scale: float
    shape: float

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError(f"scale must be positive, got {self.scale}")

    @property
    def upper(self) -> float:
        """Right end of the support (``inf`` unless the shape is negative)."""
        if self.shape >= 0 or abs(self.shape) < SHAPE_CUTOFF:
            return math.inf
        return self.location - self.scale / self.shape


@dataclass(frozen=True)
class TailFit:
    dist: GeneralizedPareto
    exceedance_count: int

    @property
    def threshold(self) -> float:
        return self.dist.location

    @property
    def k_hat(self) -> float:
        return self.dist.shape


def _quantile(p, mu, sigma, k):
    # p, mu, sigma, k broadcast together; -log1p(-p) is the exponential quantile
    e = -np.log1p(-p)
    small = np.abs(k) < SHAPE_CUTOFF
    safe_k = np.where(small, 1.0, k)
    z = np.where(small, e, np.expm1(safe_k * e) / safe_k)
    return mu + sigma * z


def gpd_quantile(d: GeneralizedPareto, p):
    """Inverse CDF at probability ``p`` in ``[0, 1)``.

    ``p`` may be a scalar or an array; the return type follows it.
    """
    p_arr = np.asarray(p, dtype=float)
    if np.any(~(p_arr >= 0)) or np.any(~(p_arr < 1)):
        raise InvalidProbability(f"probability must lie in [0, 1), got {p}")
    q = _quantile(p_arr, d.location, d.scale, d.shape)
    return float(q) if q.ndim == 0 else q


def gpd_cdf(d: GeneralizedPareto, x):
    """Distribution function; raises :class:`OutOfSupport` outside the support."""
    x_arr = np.asarray(x, dtype=float)
    z = (x_arr - d.location) / d.scale
    if np.any(z < 0) or np.any(x_arr > d.upper) or np.any(np.isnan(z)):
        raise OutOfSupport(f"{x} outside support [{d.location}, {d.upper}]")
    k = d.shape
    if abs(k) < SHAPE_CUTOFF:
        f = -np.expm1(-z)
    else:
        with np.errstate(divide="ignore"):
            f = -np.expm1(-np.log1p(k * z) / k)
    f = np.clip(f, 0.0, 1.0)
    return float(f) if f.ndim == 0 else f


def _zhang_stephens(x):
    """Empirical-Bayes GPD fit for each row of ``x``.

    ``x`` has shape ``(r, M)``, every row sorted ascending with strictly
    positive entries.  Returns ``(k, sigma)`` arrays of length ``r``.

    The candidate grid of ``b = -k / sigma`` values is anchored on the
    largest value and the first quartile; each candidate is weighted by its
    profile likelihood and the weighted mean of ``b`` gives the estimate.
    """
    r, M = x.shape
    m = 30 + int(math.sqrt(M))
    j = np.arange(1, m + 1, dtype=float)
    offsets = 1.0 - np.sqrt(m / (j - 0.5))
    quartile = x[:, int(M / 4 + 0.5) - 1]
    # (r, m) candidates; all satisfy b * x_max < 1
    b = 1.0 / x[:, -1:] + offsets[None, :] / (3.0 * quartile[:, None])
    t = np.multiply(-b[:, :, None], x[:, None, :])
    k_cand = np.mean(np.log1p(t, out=t), axis=2)
    prof = M * (np.log(-b / k_cand) - k_cand - 1.0)
    # 1 / sum_l exp(prof_l - prof_j), written as a softmax
    w = np.exp(prof - np.max(prof, axis=1, keepdims=True))
    w /= np.sum(w, axis=1, keepdims=True)
    b_hat = np.sum(b * w, axis=1)
    k_hat = np.mean(np.log1p(-b_hat[:, None] * x), axis=1)
    sigma = -k_hat / b_hat
    return k_hat, sigma


def fit_gpd(exceedances, threshold: float = 0.0) -> TailFit:
    """Fit a generalized Pareto tail to positive exceedances.

    Parameters
    ----------
    exceedances : array_like
        Values above ``threshold`` already shifted by it, so every entry must
        be strictly positive.  At least ``MIN_TAIL`` values are required.
    threshold : float
        Location of the returned distribution.

    Returns
    -------
    TailFit
        The fitted distribution and the number of exceedances used.  No
        prior is placed on the shape; ``k`` is the plain empirical-Bayes
        estimate.
    """
    x = np.sort(np.asarray(exceedances, dtype=float).ravel())
    if x.size < MIN_TAIL:
        raise InsufficientTail(f"need at least {MIN_TAIL} exceedances, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise NonPositiveExceedance("exceedances must be finite")
    if x[0] <= 0:
        raise NonPositiveExceedance(f"exceedances must be positive, smallest is {x[0]}")
    k, sigma = _zhang_stephens(x[None, :])
    return TailFit(GeneralizedPareto(float(threshold), float(sigma[0]), float(k[0])), x.size)
