"""Log-likelihood matrix container and log-scale averaging helpers."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import EmptyInput, EmptyMatrix, NonFinite, NonRectangular

POINTWISE_KINDS = ("lpd", "elpd_loo", "elpd_waic", "p_waic_term", "elpd_kfold")


@dataclass(frozen=True)
class LogLikMatrix:
    """Pointwise log-likelihood draws, shape ``(S, n)``.

    Row ``s`` holds ``log p(y_i | theta^s)`` for every data point ``i``.
    Instances are created through :func:`validate_matrix`, which guarantees
    at least two draws, at least one point, and finite entries.
    """

    values: np.ndarray
    chain_ids: Optional[np.ndarray] = field(default=None, compare=False)

    @property
    def draw_count(self) -> int:
        return self.values.shape[0]

    @property
    def point_count(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self):
        return self.values.shape

    def column(self, i: int) -> np.ndarray:
        return self.values[:, i]


@dataclass(frozen=True)
class PointwiseValues:
    """One real number per data point, tagged with what it measures."""

    values: np.ndarray
    kind: str

    def __post_init__(self):
        if self.kind not in POINTWISE_KINDS:
            raise ValueError(f"unknown pointwise kind {self.kind!r}")

    def __len__(self):
        return len(self.values)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)

    def total(self) -> float:
        return float(np.sum(self.values))


def validate_matrix(raw, chain_ids: Optional[Sequence] = None) -> LogLikMatrix:
    """Check a draws-by-points array and wrap it as a :class:`LogLikMatrix`.

    Raises
    ------
    NonRectangular
        If ``raw`` cannot be read as a 2-D array.
    EmptyMatrix
        If there are fewer than two draws or no data points.
    NonFinite
        At the first NaN or infinite entry (0-based row, column).
    """
    try:
        values = np.array(raw, dtype=float)
    except (ValueError, TypeError) as exc:
        raise NonRectangular(f"matrix is not rectangular: {exc}") from None
    if values.ndim != 2:
        raise NonRectangular(f"expected a 2-D matrix, got {values.ndim} dimension(s)")
    S, n = values.shape
    if S < 2 or n < 1:
        raise EmptyMatrix(f"need at least 2 draws and 1 point, got {S}x{n}")
    bad = ~np.isfinite(values)
    if bad.any():
        row, col = np.argwhere(bad)[0]
        raise NonFinite(int(row), int(col))
    if chain_ids is not None:
        chain_ids = np.asarray(chain_ids)
        if chain_ids.shape != (S,):
            raise NonRectangular(f"chain_ids has length {chain_ids.size}, expected {S}")
    values.setflags(write=False)
    return LogLikMatrix(values, chain_ids)


def _log_mean_exp(v, log_w=None, axis=-1):
    # max-shifted; with log_w the result is log(sum w e^v / sum w)
    v = np.asarray(v, dtype=float)
    if log_w is None:
        vmax = np.max(v, axis=axis, keepdims=True)
        out = np.log(np.mean(np.exp(v - vmax), axis=axis)) + np.squeeze(vmax, axis=axis)
        return out
    log_w = np.asarray(log_w, dtype=float)
    wmax = np.max(log_w, axis=axis, keepdims=True)
    w = np.exp(log_w - wmax)
    vmax = np.max(v, axis=axis, keepdims=True)
    num = np.sum(w * np.exp(v - vmax), axis=axis)
    den = np.sum(w, axis=axis)
    return np.log(num / den) + np.squeeze(vmax, axis=axis)


def log_mean_exp(v, weights=None) -> float:
    """Return ``log(sum_s w_s exp(v_s) / sum_s w_s)``.

    Unweighted calls use ``w_s = 1``.  The largest ``v_s`` is factored out
    before exponentiating, so ``log_mean_exp([c, c]) == c`` exactly even for
    ``c = -1000``.
    """
    v = np.asarray(v, dtype=float).ravel()
    if v.size == 0:
        raise EmptyInput("log_mean_exp of an empty vector")
    if weights is None:
        return float(_log_mean_exp(v))
    w = np.asarray(weights, dtype=float).ravel()
    if w.shape != v.shape:
        raise ValueError(f"weights have length {w.size}, values have length {v.size}")
    if np.any(w < 0) or not np.sum(w) > 0:
        raise ValueError("weights must be nonnegative with a positive sum")
    with np.errstate(divide="ignore"):
        return float(_log_mean_exp(v, np.log(w)))


def lpd(m: LogLikMatrix) -> PointwiseValues:
    """Log pointwise predictive density of each observed point.

    Component ``i`` is the log of the draw-average of ``p(y_i | theta^s)``.
    """
    return PointwiseValues(_log_mean_exp(point_rows(m.values)), "lpd")


def point_rows(values) -> np.ndarray:
    """Contiguous ``(n, S)`` copy, one data point per row.

    Reductions run along the contiguous last axis, so a point's result does
    not depend on how many other points are processed with it.
    """
    return np.ascontiguousarray(np.asarray(values, dtype=float).T)
