"""K-fold cross-validation: fold construction and aggregation.

Models are not refitted here.  The caller fits each training set with its
own tools and hands back the held-out log-likelihood draws per fold.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import CoverageError, InvalidK, LengthMismatch, NonFinite, ParseError
from .estimators import ElpdResult, build_result
from .loglik import LogLikMatrix, _log_mean_exp, point_rows


@dataclass(frozen=True)
class FoldAssignment:
    """Fold id (``1..K``) for each of ``n`` data points."""

    assignment: np.ndarray
    K: int
    seed: Optional[int] = None
    strata: Optional[np.ndarray] = None

    @property
    def n(self) -> int:
        return self.assignment.size

    def members(self, k: int) -> np.ndarray:
        """0-based indices of the points held out in fold ``k``, ascending."""
        return np.flatnonzero(self.assignment == k)

    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignment, minlength=self.K + 1)[1:]

    def write_csv(self, path) -> None:
        """Write a ``point_index,fold_id`` table with 1-based point indices."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["point_index", "fold_id"])
            for i, k in enumerate(self.assignment, start=1):
                w.writerow([i, int(k)])

    @classmethod
    def read_csv(cls, path) -> "FoldAssignment":
        rows = []
        with open(path, newline="") as fh:
            for lineno, row in enumerate(csv.reader(fh), start=1):
                if not row or row[0].lstrip().startswith("#"):
                    continue
                if lineno == 1 and not row[0].strip().lstrip("-").isdigit():
                    continue
                try:
                    rows.append((int(row[0]), int(row[1])))
                except (ValueError, IndexError):
                    raise ParseError("expected 'point_index,fold_id'", lineno, path) from None
        if not rows:
            raise ParseError("no fold assignments found", path=path)
        idx = np.array([r[0] for r in rows])
        if sorted(idx.tolist()) != list(range(1, len(rows) + 1)):
            raise CoverageError(f"{path}: point indices must cover 1..{len(rows)} exactly once")
        assignment = np.empty(len(rows), dtype=int)
        assignment[idx - 1] = [r[1] for r in rows]
        K = int(assignment.max())
        if assignment.min() < 1 or np.any(np.bincount(assignment, minlength=K + 1)[1:] == 0):
            raise CoverageError(f"{path}: fold ids must be 1..K with every fold nonempty")
        return cls(assignment, K)


def make_folds(n: int, K: int, seed: int = 0, strata: Optional[Sequence] = None) -> FoldAssignment:
    """Randomly permute the points and deal them into ``K`` folds.

    With ``strata`` the permutation and dealing happen within each stratum;
    the dealing position carries over between strata, so overall fold sizes
    stay balanced as well.
    """
    if K < 2 or K > n:
        raise InvalidK(f"K must satisfy 2 <= K <= n={n}, got {K}")
    rng = np.random.default_rng(seed)
    assignment = np.empty(n, dtype=int)
    if strata is None:
        groups = [np.arange(n)]
        labels = None
    else:
        labels = np.asarray(strata)
        if labels.shape != (n,):
            raise LengthMismatch(f"strata has {labels.size} labels for {n} points")
        groups = [np.flatnonzero(labels == s) for s in np.unique(labels)]
    pos = 0
    for g in groups:
        perm = rng.permutation(g)
        assignment[perm] = (pos + np.arange(g.size)) % K + 1
        pos += g.size
    return FoldAssignment(assignment, K, seed, labels)


def make_repeated_folds(n: int, K: int, repetitions: int, seed: int = 0):
    """Independent fold assignments for repeated K-fold CV."""
    seeds = np.random.SeedSequence(seed).generate_state(repetitions)
    return [make_folds(n, K, int(s)) for s in seeds]


@dataclass(frozen=True)
class FoldLogLik:
    """Log-likelihood draws from the posterior fitted without fold ``fold``.

    ``holdout_loglik`` is ``(S_k, |fold|)`` with columns in ascending point
    order.  ``full_loglik`` (``(S_k, n)``, all points) is optional and only
    needed for the bias correction.
    """

    fold: int
    holdout_loglik: np.ndarray
    full_loglik: Optional[np.ndarray] = None

    @classmethod
    def from_full(cls, fold: int, full_loglik, assignment: FoldAssignment) -> "FoldLogLik":
        full = np.asarray(full_loglik, dtype=float)
        if full.ndim != 2 or full.shape[1] != assignment.n:
            raise LengthMismatch(f"fold {fold}: expected {assignment.n} columns, got {full.shape}")
        return cls(fold, full[:, assignment.members(fold)], full)


def _check_finite(a):
    bad = ~np.isfinite(a)
    if bad.any():
        row, col = np.argwhere(bad)[0]
        raise NonFinite(int(row), int(col))


def elpd_kfold(folds: Sequence[FoldLogLik], assignment: FoldAssignment,
               full: Optional[LogLikMatrix] = None) -> ElpdResult:
    """Sum of held-out log predictive densities over folds.

    Each point's term is the log of the average of ``p(y_i | theta^{k,s})``
    over the draws of the fold that held it out.  When ``full`` (draws from
    the all-data posterior) is given, ``p_eff`` is its lpd minus the total;
    otherwise it is None.

    Raises
    ------
    CoverageError
        If folds are missing, repeated, or their column counts do not match
        the assignment.
    """
    n = assignment.n
    elpd_i = np.full(n, np.nan)
    seen = set()
    for f in folds:
        if f.fold in seen:
            raise CoverageError(f"fold {f.fold} supplied twice")
        seen.add(f.fold)
        idx = assignment.members(f.fold)
        h = np.asarray(f.holdout_loglik, dtype=float)
        if idx.size == 0 or h.ndim != 2 or h.shape[1] != idx.size:
            raise CoverageError(f"fold {f.fold}: {h.shape[-1] if h.ndim else 0} held-out columns "
                                f"for {idx.size} assigned points")
        if h.shape[0] < 1:
            raise CoverageError(f"fold {f.fold} has no draws")
        _check_finite(h)
        elpd_i[idx] = _log_mean_exp(point_rows(h))
    missing = np.flatnonzero(np.isnan(elpd_i))
    if missing.size:
        raise CoverageError(f"points {missing[:10].tolist()} are in no supplied fold")

    p_i = None
    if full is not None:
        if full.point_count != n:
            raise LengthMismatch(f"full matrix has {full.point_count} points, expected {n}")
        p_i = _log_mean_exp(point_rows(full.values)) - elpd_i
    return build_result("kfold", elpd_i, p_i, kind="elpd_kfold",
                        options={"K": assignment.K, "seed": assignment.seed})


def burman_correction(kfold: ElpdResult, full_lpd, per_fold_full_lpd) -> ElpdResult:
    """First-order correction for the smaller training sets of K-fold CV.

    Each point gains ``full_lpd_i - mean_k per_fold_full_lpd[k]_i``: the
    lpd under the all-data posterior minus its average over the K training
    posteriors.  The total therefore changes by
    ``sum(full_lpd) - (1/K) sum_k sum_i per_fold_full_lpd[k]_i``.
    """
    full = np.asarray(full_lpd, dtype=float)
    per_fold = np.atleast_2d(np.asarray(per_fold_full_lpd, dtype=float))
    n = kfold.point_count
    if full.shape != (n,) or per_fold.shape[1] != n:
        raise LengthMismatch(f"correction terms must have {n} points each")
    shift = full - np.mean(per_fold, axis=0)
    elpd_i = kfold.elpd + shift
    p_i = None if kfold.p_pointwise is None else kfold.p_pointwise - shift
    res = build_result(kfold.method, elpd_i, p_i, kind=kfold.pointwise.kind,
                       k_hats=kfold.k_hats if kfold.k_hats.size else None,
                       draw_count=kfold.draw_count, diagnostics=dict(kfold.diagnostics),
                       options=dict(kfold.options), corrected=True)
    res.diagnostics["correction"] = float(np.sum(shift))
    return res


def burman_from_folds(kfold: ElpdResult, full: LogLikMatrix,
                      folds: Sequence[FoldLogLik]) -> ElpdResult:
    """:func:`burman_correction` with lpd terms computed from draw matrices."""
    if any(f.full_loglik is None for f in folds):
        raise LengthMismatch("every fold needs full_loglik for the correction")
    per_fold = [_log_mean_exp(point_rows(f.full_loglik)) for f in folds]
    return burman_correction(kfold, _log_mean_exp(point_rows(full.values)), per_fold)


@dataclass(frozen=True)
class RepeatedKFold:
    mean_total: float
    sd_total: float
    totals: np.ndarray


def summarize_repetitions(results: Sequence[ElpdResult]) -> RepeatedKFold:
    """Average K-fold totals over repeated random divisions."""
    totals = np.array([r.total for r in results], dtype=float)
    sd = float(np.std(totals, ddof=1)) if totals.size > 1 else math.nan
    return RepeatedKFold(float(np.mean(totals)), sd, totals)
