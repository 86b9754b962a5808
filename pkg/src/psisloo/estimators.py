"""Pointwise elpd estimators, standard errors and paired model comparison."""

from __future__ import annotations

import math
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from .errors import (
    DegenerateSampleSize,
    EmptyMatrix,
    InvalidReplicates,
    LengthMismatch,
    NonFinite,
    NonRectangular,
)
from .loglik import LogLikMatrix, PointwiseValues, _log_mean_exp, point_rows
from .psis import (
    DEFAULT_PSIS_EXPONENT,
    DEFAULT_TAIL_FRACTION,
    DEFAULT_TIS_EXPONENT,
    _log_mean,
    _psis_rows,
    level_counts,
)

WAIC_VARIANCE_LIMIT = 0.4
LOO_METHODS = {"is": "is_loo", "tis": "tis_loo", "psis": "psis_loo"}

# columns per block when a matrix is split for workers
DEFAULT_BLOCK = 256


@dataclass(frozen=True)
class ElpdResult:
    """Totals, standard errors and pointwise values of one elpd estimate.

    ``p_pointwise`` holds the per-point contributions to ``p_eff``
    (``lpd_i - elpd_i`` for cross-validation, the posterior variance terms
    for WAIC).  Undefined scalars are None and undefined ``k_hats`` entries
    are ``nan``.
    """

    method: str
    pointwise: PointwiseValues
    p_pointwise: Optional[np.ndarray]
    total: float
    p_eff: Optional[float]
    ic_scale: float
    se_total: Optional[float]
    se_p_eff: Optional[float]
    k_hats: np.ndarray
    waic_variance_terms: Optional[np.ndarray] = None
    draw_count: Optional[int] = None
    diagnostics: dict = field(default_factory=dict)
    options: dict = field(default_factory=dict)
    corrected: bool = False

    @property
    def point_count(self) -> int:
        return len(self.pointwise)

    @property
    def elpd(self) -> np.ndarray:
        return self.pointwise.values


@dataclass(frozen=True)
class ComparisonResult:
    """Difference ``b - a`` in elpd; positive values favor model ``b``."""

    elpd_diff: float
    se_diff: float
    pointwise_diff: np.ndarray
    methods: tuple = ()


def se_of(pointwise) -> float:
    """Standard error of a sum of ``n`` pointwise terms, ``sqrt(n * var)``."""
    x = np.asarray(pointwise, dtype=float)
    n = x.size
    if n < 2:
        raise DegenerateSampleSize(f"standard error needs at least 2 points, got {n}")
    return float(math.sqrt(n * np.var(x, ddof=1)))


def _se_or_none(x):
    x = np.asarray(x, dtype=float)
    if x.size < 2 or not np.all(np.isfinite(x)):
        return None
    return se_of(x)


def build_result(method, elpd_i, p_i=None, *, kind, k_hats=None, draw_count=None,
                 waic_terms=None, diagnostics=None, options=None, corrected=False):
    """Assemble an :class:`ElpdResult` from pointwise arrays."""
    elpd_i = np.asarray(elpd_i, dtype=float)
    total = float(np.sum(elpd_i))
    if p_i is not None:
        p_i = np.asarray(p_i, dtype=float)
        p_eff = float(np.sum(p_i))
        se_p = _se_or_none(p_i)
    else:
        p_eff = se_p = None
    return ElpdResult(
        method=method,
        pointwise=PointwiseValues(elpd_i, kind),
        p_pointwise=p_i,
        total=total,
        p_eff=p_eff,
        ic_scale=-2.0 * total,
        se_total=_se_or_none(elpd_i),
        se_p_eff=se_p,
        k_hats=np.asarray(k_hats, dtype=float) if k_hats is not None else np.empty(0),
        waic_variance_terms=waic_terms,
        draw_count=draw_count,
        diagnostics=diagnostics or {},
        options=options or {},
        corrected=corrected,
    )


def _check_block(block, offset):
    block = np.asarray(block, dtype=float)
    if block.ndim != 2 or block.shape[0] < 2 or block.shape[1] < 1:
        raise EmptyMatrix(f"block of shape {block.shape} has too few draws or points")
    bad = ~np.isfinite(block)
    if bad.any():
        row, col = np.argwhere(bad)[0]
        raise NonFinite(int(row), int(col) + offset)
    return block


def _loo_rows(rows, method, tail_fraction, exponent):
    # rows: (b, S) log-likelihoods, one point per row
    lr = -rows
    if method == "is":
        lw = lr
        k = np.full(rows.shape[0], np.nan)
        status = np.full(rows.shape[0], "raw", dtype=object)
    elif method == "tis":
        cap = exponent * math.log(rows.shape[1]) + _log_mean(lr)
        lw = np.minimum(lr, cap[:, None])
        k = np.full(rows.shape[0], np.nan)
        status = np.full(rows.shape[0], "truncated", dtype=object)
    else:
        lw, k, status, _ = _psis_rows(lr, tail_fraction, exponent)
    elpd_i = _log_mean_exp(rows, lw)
    lpd_i = _log_mean_exp(rows)
    return elpd_i, lpd_i, k, status


def _loo_block_task(args):
    block, method, tail_fraction, exponent = args
    return _loo_rows(point_rows(block), method, tail_fraction, exponent)


def _bounded_map(pool, fn, items, window):
    # like pool.map, but never holds more than `window` pending inputs
    pending = deque()
    for item in items:
        pending.append(pool.submit(fn, item))
        if len(pending) >= window:
            yield pending.popleft().result()
    while pending:
        yield pending.popleft().result()


def _resolve_exponent(method, trunc_exponent):
    if method not in LOO_METHODS:
        raise ValueError(f"unknown LOO method {method!r}; expected one of {sorted(LOO_METHODS)}")
    if trunc_exponent is not None:
        if not 0 < trunc_exponent <= 1:
            raise ValueError(f"truncation exponent must be in (0, 1], got {trunc_exponent}")
        return trunc_exponent
    return {"tis": DEFAULT_TIS_EXPONENT, "psis": DEFAULT_PSIS_EXPONENT}.get(method)


def elpd_loo_from_blocks(blocks: Iterable, method: str = "psis",
                         tail_fraction: float = DEFAULT_TAIL_FRACTION,
                         trunc_exponent: Optional[float] = None,
                         jobs: int = 1) -> ElpdResult:
    """Leave-one-out elpd from an iterable of ``(S, b)`` column blocks.

    Blocks are consumed in order and may be produced lazily, so only the
    block being processed has to fit in memory.  Results do not depend on
    how the columns are split into blocks or on ``jobs``.
    """
    exponent = _resolve_exponent(method, trunc_exponent)
    seen = {}

    def checked():
        offset = 0
        for b in blocks:
            b = _check_block(b, offset)
            if seen.setdefault("S", b.shape[0]) != b.shape[0]:
                raise NonRectangular(f"block at column {offset} has {b.shape[0]} draws, "
                                     f"expected {seen['S']}")
            offset += b.shape[1]
            yield b

    tasks = ((b, method, tail_fraction, exponent) for b in checked())
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            parts = list(_bounded_map(pool, _loo_block_task, tasks, 2 * jobs))
    else:
        parts = [_loo_block_task(t) for t in tasks]
    if not parts:
        raise EmptyMatrix("no columns supplied")
    elpd_i, lpd_i, k, status = (np.concatenate(x) for x in zip(*parts))
    options = {"method": method, "tail_fraction": tail_fraction if method == "psis" else None,
               "trunc_exponent": exponent}
    diagnostics = {}
    if method == "psis":
        diagnostics["pareto_k_counts"] = level_counts(k)
        diagnostics["undefined_k"] = int(np.sum(np.isnan(k)))
        diagnostics["tail_status"] = {s: int(np.sum(status == s)) for s in sorted(set(status))}
    return build_result(LOO_METHODS[method], elpd_i, lpd_i - elpd_i, kind="elpd_loo",
                        k_hats=k if method == "psis" else None, draw_count=seen["S"],
                        diagnostics=diagnostics, options=options)


def iter_column_blocks(values, block_size: int = DEFAULT_BLOCK):
    values = np.asarray(values)
    for start in range(0, values.shape[1], block_size):
        yield values[:, start:start + block_size]


def elpd_loo(m: LogLikMatrix, method: str = "psis",
             tail_fraction: float = DEFAULT_TAIL_FRACTION,
             trunc_exponent: Optional[float] = None, jobs: int = 1) -> ElpdResult:
    """Approximate leave-one-out elpd from full-posterior draws.

    Parameters
    ----------
    m : LogLikMatrix
        Validated ``(S, n)`` log-likelihood draws.
    method : {"is", "tis", "psis"}
        Raw importance sampling, truncated importance sampling or Pareto
        smoothed importance sampling of the ratios ``1 / p(y_i | theta^s)``.
    tail_fraction : float
        Share of the largest ratios replaced by smoothing (``psis`` only).
    trunc_exponent : float, optional
        Truncation at ``S**trunc_exponent`` times the mean weight.  Defaults
        to 1/2 for ``tis`` and 3/4 for ``psis``; ignored for ``is``.
    jobs : int
        Worker processes; values > 1 split the columns into blocks.

    Returns
    -------
    ElpdResult
        ``p_eff`` is ``lpd - elpd_loo``.  ``k_hats`` is filled for ``psis``.
    """
    blocks = iter_column_blocks(m.values) if jobs > 1 else [m.values]
    return elpd_loo_from_blocks(blocks, method, tail_fraction, trunc_exponent, jobs)


def waic_from_blocks(blocks: Iterable) -> ElpdResult:
    """WAIC from ``(S, b)`` column blocks; see :func:`waic`."""
    lpd_parts, var_parts = [], []
    offset = 0
    S = None
    for b in blocks:
        b = _check_block(b, offset)
        if S is not None and b.shape[0] != S:
            raise NonRectangular(f"block at column {offset} has {b.shape[0]} draws, expected {S}")
        offset += b.shape[1]
        S = b.shape[0]
        rows = point_rows(b)
        lpd_parts.append(_log_mean_exp(rows))
        # centring on the first draw makes constant rows exactly zero
        var_parts.append(np.var(rows - rows[:, :1], axis=1, ddof=1))
    if not lpd_parts:
        raise EmptyMatrix("no columns supplied")
    lpd_i = np.concatenate(lpd_parts)
    terms = np.concatenate(var_parts)
    flagged = np.flatnonzero(terms > WAIC_VARIANCE_LIMIT)
    diagnostics = {"variance_limit": WAIC_VARIANCE_LIMIT,
                   "flagged_points": flagged.tolist(),
                   "unreliable": bool(flagged.size)}
    return build_result("waic", lpd_i - terms, terms, kind="elpd_waic", draw_count=S,
                        waic_terms=terms, diagnostics=diagnostics, options={"method": "waic"})


def waic(m: LogLikMatrix) -> ElpdResult:
    """Widely applicable information criterion.

    ``p_waic`` is the sum over points of the sample variance (``S - 1``
    denominator) of ``log p(y_i | theta^s)``; ``elpd_waic = lpd - p_waic``.
    Points whose variance term exceeds 0.4 are listed in
    ``diagnostics["flagged_points"]``.
    """
    return waic_from_blocks([m.values])


def compare(a: ElpdResult, b: ElpdResult) -> ComparisonResult:
    """Paired comparison of two estimates over the same data points.

    The difference is taken as ``b - a``, so a positive ``elpd_diff`` favors
    ``b``.  The standard error is computed from the pointwise differences,
    which is much smaller than combining the two separate standard errors
    when the models err on the same points.
    """
    xa, xb = np.asarray(a.elpd, dtype=float), np.asarray(b.elpd, dtype=float)
    if xa.shape != xb.shape:
        raise LengthMismatch(f"cannot compare {xa.size} points with {xb.size} points")
    diff = xb - xa
    se = se_of(diff) if diff.size >= 2 else 0.0
    return ComparisonResult(float(np.sum(diff)), se, diff, (a.method, b.method))


def bayesian_bootstrap_se(pointwise, replicates: int = 1000, seed: int = 0) -> float:
    """Bayesian-bootstrap standard error of the total of ``pointwise``.

    Each replicate draws flat Dirichlet weights over the ``n`` points from
    its own stream spawned off ``seed`` and evaluates ``n * sum(w * x)``.
    Returns the standard deviation of the replicate totals.
    """
    if replicates < 2:
        raise InvalidReplicates(f"need at least 2 replicates, got {replicates}")
    x = np.asarray(pointwise, dtype=float)
    n = x.size
    if n < 1:
        raise DegenerateSampleSize("no pointwise values")
    centered = x - x[0]
    if not np.any(centered):
        return 0.0
    alpha = np.ones(n)
    totals = np.empty(replicates)
    for r, child in enumerate(np.random.SeedSequence(seed).spawn(replicates)):
        w = np.random.default_rng(child).dirichlet(alpha)
        totals[r] = n * np.dot(w, centered)
    return float(np.std(totals, ddof=1))
