"""Importance ratios for leave-one-out, truncation and Pareto smoothing.

Everything here works with log ratios.  Ratios are exponentiated only after
subtracting the column maximum, so inputs spanning hundreds of log units are
safe.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .gpd import MIN_TAIL, SHAPE_CUTOFF, _zhang_stephens

DEFAULT_TAIL_FRACTION = 0.2
DEFAULT_PSIS_EXPONENT = 0.75
DEFAULT_TIS_EXPONENT = 0.5

# status values for a smoothed column
SMOOTHED = "smoothed"
TAIL_DEGENERATE = "tail_degenerate"
TAIL_TOO_SMALL = "tail_too_small"

LEVELS = ("good", "ok", "warn_high", "severe")

# bound on (rows * grid size * tail size) per vectorized fit; sized for cache
_FIT_BLOCK = 1 << 20


@dataclass(frozen=True)
class SmoothedWeights:
    """Unnormalized log weights for one held-out point.

    ``k_hat`` is ``None`` when no tail was fitted (raw or truncated weights,
    or a degenerate tail).  ``log_cap`` is the log truncation level that was
    applied, if any.
    """

    log_weights: np.ndarray
    k_hat: Optional[float]
    method: str
    exponent: Optional[float] = None
    point_index: Optional[int] = None
    status: str = SMOOTHED
    log_cap: Optional[float] = None

    @property
    def tail_degenerate(self) -> bool:
        return self.status in (TAIL_DEGENERATE, TAIL_TOO_SMALL)

    @property
    def weights(self) -> np.ndarray:
        """Weights normalized to sum to one."""
        w = np.exp(self.log_weights - np.max(self.log_weights))
        return w / w.sum()


@dataclass(frozen=True)
class DiagnosticFlag:
    level: str
    k_hat: Optional[float]
    note: str = ""


def raw_log_ratios(loglik_column) -> np.ndarray:
    """Log of ``1 / p(y_i | theta^s)``; the normalizing constant is dropped."""
    return -np.asarray(loglik_column, dtype=float)


def _log_mean(lr):
    # log of the mean of exp(lr) along the last axis
    mx = np.max(lr, axis=-1, keepdims=True)
    return np.log(np.mean(np.exp(lr - mx), axis=-1)) + np.squeeze(mx, axis=-1)


def truncate_weights(log_ratios, exponent: float = DEFAULT_TIS_EXPONENT,
                     point_index: Optional[int] = None) -> SmoothedWeights:
    """Truncated importance sampling: ``w = min(r, S**exponent * mean(r))``.

    ``exponent=0.5`` is the usual square-root rule, ``0.25`` a heavy
    truncation.
    """
    if not 0 < exponent <= 1:
        raise ValueError(f"truncation exponent must be in (0, 1], got {exponent}")
    lr = np.asarray(log_ratios, dtype=float)
    S = lr.size
    cap = exponent * math.log(S) + float(_log_mean(lr))
    return SmoothedWeights(np.minimum(lr, cap), None, "truncated", exponent,
                           point_index, "truncated", cap)


def tail_size(S: int, tail_fraction: float = DEFAULT_TAIL_FRACTION) -> int:
    """Number of largest ratios replaced by smoothing, ``ceil(fraction * S)``."""
    # the rounding guard keeps 0.2 * 4000 at 800 rather than 801
    return int(math.ceil(round(tail_fraction * S, 9)))


def _log_gpd_quantiles(log_thr, log_sigma, k, M):
    """``log(thr + sigma * z(p))`` at ``p = (z - 1/2) / M`` without overflow.

    The parameters are arrays of length ``r``; the result is ``(r, M)``.
    """
    p = (np.arange(1, M + 1) - 0.5) / M
    e = -np.log1p(-p)
    k = np.asarray(k, dtype=float)
    log_z = np.empty((k.size, M))
    expo = np.abs(k) < SHAPE_CUTOFF
    pos = ~expo & (k > 0)
    neg = ~expo & (k < 0)
    log_z[expo] = np.log(e)
    if pos.any():
        kp = k[pos, None]
        ke = kp * e
        log_z[pos] = ke + np.log(-np.expm1(-ke)) - np.log(kp)
    if neg.any():
        kn = k[neg, None]
        log_z[neg] = np.log(np.expm1(kn * e) / kn)
    return np.logaddexp(np.asarray(log_thr)[:, None], np.asarray(log_sigma)[:, None] + log_z)


def _smooth_top(top):
    """Pareto-smooth the tails in ``top`` in place.

    ``top`` is ``(n, M + 1)``: per row, the threshold (largest bulk log
    ratio) followed by the ``M`` tail log ratios, ascending and shifted so
    the row maximum is zero.  Returns ``(k_hat, status)``; rows that cannot
    be fitted are left untouched with ``k_hat = nan``.
    """
    n, M1 = top.shape
    M = M1 - 1
    k_out = np.full(n, np.nan)
    status = np.full(n, SMOOTHED, dtype=object)

    log_thr = top[:, 0]
    with np.errstate(under="ignore"):
        exceed = np.exp(top[:, 1:]) - np.exp(log_thr)[:, None]

    degenerate = top[:, -1] == top[:, 1]
    status[degenerate] = TAIL_DEGENERATE
    clean = ~degenerate & (exceed[:, 0] > 0)
    tied = ~degenerate & ~clean

    def apply(rows, m_eff, k, sigma):
        ok = np.isfinite(k) & np.isfinite(sigma) & (sigma > 0)
        status[rows[~ok]] = TAIL_DEGENERATE
        rows, k, sigma = rows[ok], k[ok], sigma[ok]
        if rows.size:
            top[rows, M1 - m_eff:] = _log_gpd_quantiles(log_thr[rows], np.log(sigma), k, m_eff)
            k_out[rows] = k

    idx = np.flatnonzero(clean)
    if idx.size:
        m = 30 + int(math.sqrt(M))
        step = max(1, _FIT_BLOCK // (m * M))
        for start in range(0, idx.size, step):
            rows = idx[start:start + step]
            apply(rows, M, *_zhang_stephens(exceed[rows]))
    for r in np.flatnonzero(tied):
        # values tied with the threshold stay in the bulk
        x = exceed[r]
        x = x[x > 0]
        if x.size < MIN_TAIL:
            status[r] = TAIL_TOO_SMALL
            continue
        apply(np.array([r]), x.size, *_zhang_stephens(x[None, :]))
    return k_out, status


def _psis_rows(lr, tail_fraction, trunc_exponent):
    # lr: contiguous (n, S) log ratios, one held-out point per row
    if not 0 < tail_fraction < 1:
        raise ValueError(f"tail_fraction must be in (0, 1), got {tail_fraction}")
    if trunc_exponent is not None and not 0 < trunc_exponent <= 1:
        raise ValueError(f"truncation exponent must be in (0, 1], got {trunc_exponent}")
    n, S = lr.shape
    M = tail_size(S, tail_fraction)

    out = lr.copy()
    if M < MIN_TAIL or M >= S:
        k_hat = np.full(n, np.nan)
        status = np.full(n, TAIL_TOO_SMALL, dtype=object)
    else:
        # only the threshold and the tail need to be in sorted order; ranks
        # come from the unshifted values, and ties are broken by index
        part = np.argpartition(lr, S - M - 1, axis=1)[:, S - M - 1:]
        raw_top = np.take_along_axis(lr, part, axis=1)
        order = np.argsort(raw_top, axis=1)
        part = np.take_along_axis(part, order, axis=1)
        raw_top = np.take_along_axis(raw_top, order, axis=1)
        tied = np.flatnonzero(np.any(raw_top[:, 1:] == raw_top[:, :-1], axis=1))
        if tied.size:
            # the default sort is not stable; redo rows with ties
            fix = np.sort(part[tied], axis=1)
            vals = np.take_along_axis(lr[tied], fix, axis=1)
            o = np.argsort(vals, axis=1, kind="stable")
            part[tied] = np.take_along_axis(fix, o, axis=1)
            raw_top[tied] = np.take_along_axis(vals, o, axis=1)
        top_max = raw_top[:, -1:]
        top = raw_top - top_max
        k_hat, status = _smooth_top(top)
        # entries the fit did not replace keep their exact input value
        replaced = np.isfinite(k_hat)[:, None] & (top != raw_top - top_max)
        np.put_along_axis(out, part, np.where(replaced, top + top_max, raw_top), axis=1)

    if trunc_exponent is None:
        log_cap = np.full(n, np.inf)
    else:
        # unfitted rows are truncated relative to the raw mean
        log_cap = trunc_exponent * math.log(S) + _log_mean(out)
        out = np.minimum(out, log_cap[:, None])
    return out, k_hat, status, log_cap


def psis_smooth_matrix(log_ratios, tail_fraction: float = DEFAULT_TAIL_FRACTION,
                       trunc_exponent: Optional[float] = DEFAULT_PSIS_EXPONENT):
    """Pareto-smooth every column of an ``(S, n)`` array of log ratios.

    Returns
    -------
    log_weights : ndarray, shape (S, n)
        Smoothed and truncated log weights, in the input row order.
    k_hat : ndarray, shape (n,)
        Fitted tail shape per column; ``nan`` where no fit was possible.
    status : ndarray of str, shape (n,)
        ``"smoothed"``, ``"tail_degenerate"`` or ``"tail_too_small"``.
    log_cap : ndarray, shape (n,)
        Log truncation level per column (``inf`` when ``trunc_exponent`` is
        None).
    """
    lr = np.asarray(log_ratios, dtype=float)
    if lr.ndim == 1:
        lr = lr[:, None]
    lw, k_hat, status, log_cap = _psis_rows(np.ascontiguousarray(lr.T), tail_fraction,
                                            trunc_exponent)
    return lw.T, k_hat, status, log_cap


def psis_smooth(log_ratios, tail_fraction: float = DEFAULT_TAIL_FRACTION,
                trunc_exponent: Optional[float] = DEFAULT_PSIS_EXPONENT,
                point_index: Optional[int] = None) -> SmoothedWeights:
    """Pareto smoothed importance weights for one held-out point.

    The ``ceil(tail_fraction * S)`` largest ratios are replaced by the
    quantiles ``F^{-1}((z - 1/2) / M)`` of a generalized Pareto fitted to
    their exceedances over the largest remaining ratio, and the result is
    truncated at ``S**trunc_exponent`` times the mean smoothed weight.
    Tail values tied with the threshold stay in the bulk.

    If the tail is constant, or fewer than five strictly positive
    exceedances remain, the raw ratios are only truncated and ``k_hat`` is
    None; ``status`` says which case occurred.
    """
    lw, k, status, cap = psis_smooth_matrix(log_ratios, tail_fraction, trunc_exponent)
    k0 = float(k[0])
    return SmoothedWeights(lw[:, 0], None if math.isnan(k0) else k0, "psis",
                           trunc_exponent, point_index, str(status[0]), float(cap[0]))


def diagnose(k_hat) -> DiagnosticFlag:
    """Map a tail-shape estimate to a reliability level.

    good: k < 0.5; ok: 0.5 <= k <= 0.7; warn_high: 0.7 < k <= 1 (sample
    the held-out posterior directly or use K-fold); severe: k > 1.  An
    undefined estimate counts as good.
    """
    if k_hat is None or (isinstance(k_hat, float) and math.isnan(k_hat)):
        return DiagnosticFlag("good", None, "tail fit undefined (degenerate weights)")
    k = float(k_hat)
    if k < 0.5:
        return DiagnosticFlag("good", k)
    if k <= 0.7:
        return DiagnosticFlag("ok", k)
    if k <= 1.0:
        return DiagnosticFlag("warn_high", k,
                              "consider sampling the leave-one-out posterior directly or K-fold CV")
    return DiagnosticFlag("severe", k, "mean of the importance ratios does not exist")


def diagnostic_levels(k_hats) -> np.ndarray:
    """Vectorized :func:`diagnose` returning level names."""
    k = np.asarray(k_hats, dtype=float)
    out = np.full(k.shape, "good", dtype=object)
    out[(k >= 0.5) & (k <= 0.7)] = "ok"
    out[(k > 0.7) & (k <= 1.0)] = "warn_high"
    out[k > 1.0] = "severe"
    return out


def level_counts(k_hats) -> dict:
    levels = diagnostic_levels(k_hats)
    return {lvl: int(np.sum(levels == lvl)) for lvl in LEVELS}
