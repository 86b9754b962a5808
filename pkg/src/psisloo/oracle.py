"""Reference computations for conjugate normal models.

:class:`ConjugateNormalModel` has data ``y_i ~ N(theta, obs_sd^2)`` with a
common mean and prior ``theta ~ N(prior_mean, prior_sd^2)``.
:class:`HierarchicalNormalModel` gives every point its own mean,
``y_i ~ N(theta_i, obs_sd^2)`` with ``theta_i ~ N(mu, pop_sd^2)`` and
``mu ~ N(prior_mean, mean_sd^2)``.  Posteriors, predictive densities and
exact leave-one-out values are closed-form for both, and posterior draws are
exact, so every approximation in the package can be checked against them.

Random numbers come from numpy's ``PCG64`` bit generator
(``numpy.random.default_rng(seed)``), which is platform independent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .kfold import FoldAssignment, FoldLogLik
from .loglik import LogLikMatrix, PointwiseValues, validate_matrix

_LOG_2PI = math.log(2.0 * math.pi)


def normal_logpdf(x, mean, var):
    x = np.asarray(x, dtype=float)
    return -0.5 * (_LOG_2PI + np.log(var) + (x - mean) ** 2 / var)


@dataclass(frozen=True)
class ConjugateNormalModel:
    y: np.ndarray
    obs_sd: float = 1.0
    prior_mean: float = 0.0
    prior_sd: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "y", np.atleast_1d(np.asarray(self.y, dtype=float)))
        if self.y.size < 1:
            raise ValueError("model needs at least one observation")
        if not (self.obs_sd > 0 and self.prior_sd > 0):
            raise ValueError("obs_sd and prior_sd must be positive")

    @property
    def n(self) -> int:
        return self.y.size

    def posterior(self, mask=None):
        """Posterior ``(mean, variance)`` of theta given ``y[mask]``."""
        y = self.y if mask is None else self.y[mask]
        prec = 1.0 / self.prior_sd ** 2 + y.size / self.obs_sd ** 2
        mean = (self.prior_mean / self.prior_sd ** 2 + np.sum(y) / self.obs_sd ** 2) / prec
        return float(mean), float(1.0 / prec)

    def predictive_logpdf(self, y_new, mask=None):
        mean, var = self.posterior(mask)
        return normal_logpdf(y_new, mean, self.obs_sd ** 2 + var)


def simulate(n: int, seed: int, true_mean: float = 0.0, obs_sd: float = 1.0,
             prior_mean: float = 0.0, prior_sd: float = 1.0) -> ConjugateNormalModel:
    """Draw ``n`` observations from ``N(true_mean, obs_sd^2)``."""
    rng = np.random.default_rng(seed)
    y = true_mean + obs_sd * rng.standard_normal(n)
    return ConjugateNormalModel(y, obs_sd, prior_mean, prior_sd)


def exact_loo(model) -> PointwiseValues:
    """``log p(y_i | y_{-i})`` for every point, in closed form.

    With a single observation the conditioning set is empty and the prior
    predictive is used.
    """
    if isinstance(model, HierarchicalNormalModel):
        return model.exact_loo()
    y, s2 = model.y, model.obs_sd ** 2
    prior_prec = 1.0 / model.prior_sd ** 2
    # leave-one-out posteriors from the full sufficient statistics
    prec = prior_prec + (model.n - 1) / s2
    mean = (model.prior_mean * prior_prec + (np.sum(y) - y) / s2) / prec
    return PointwiseValues(normal_logpdf(y, mean, s2 + 1.0 / prec), "elpd_loo")


def closed_form_lpd(model) -> PointwiseValues:
    """``log p(y_i | y)`` under the all-data posterior."""
    if isinstance(model, HierarchicalNormalModel):
        return model.lpd()
    return PointwiseValues(model.predictive_logpdf(model.y), "lpd")


@dataclass(frozen=True)
class HierarchicalNormalModel:
    """Normal means with a shared population distribution.

    Integrating out ``theta_i`` leaves ``y_i ~ N(mu, obs_sd^2 + pop_sd^2)``
    independently given ``mu``, which makes the leave-one-out predictive a
    normal density.  As ``pop_sd / obs_sd`` grows, each ``theta_i`` is
    informed almost only by ``y_i`` and removing that point changes its
    posterior a lot, which is the regime where importance sampling from the
    full posterior breaks down.
    """

    y: np.ndarray
    obs_sd: float = 1.0
    pop_sd: float = 1.0
    prior_mean: float = 0.0
    mean_sd: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "y", np.atleast_1d(np.asarray(self.y, dtype=float)))
        if self.y.size < 1:
            raise ValueError("model needs at least one observation")
        if not (self.obs_sd > 0 and self.pop_sd > 0 and self.mean_sd > 0):
            raise ValueError("obs_sd, pop_sd and mean_sd must be positive")

    @property
    def n(self) -> int:
        return self.y.size

    @property
    def marginal_var(self) -> float:
        return self.obs_sd ** 2 + self.pop_sd ** 2

    @property
    def shrunk_var(self) -> float:
        """Variance of ``theta_i`` given ``y_i`` and ``mu``."""
        return 1.0 / (1.0 / self.obs_sd ** 2 + 1.0 / self.pop_sd ** 2)

    def mean_posterior(self, mask=None):
        """Posterior ``(mean, variance)`` of ``mu`` given ``y[mask]``."""
        y = self.y if mask is None else self.y[mask]
        a, p0 = self.marginal_var, 1.0 / self.mean_sd ** 2
        prec = p0 + y.size / a
        return float((self.prior_mean * p0 + np.sum(y) / a) / prec), float(1.0 / prec)

    def exact_loo(self) -> PointwiseValues:
        a, p0 = self.marginal_var, 1.0 / self.mean_sd ** 2
        prec = p0 + (self.n - 1) / a
        mean = (self.prior_mean * p0 + (np.sum(self.y) - self.y) / a) / prec
        return PointwiseValues(normal_logpdf(self.y, mean, a + 1.0 / prec), "elpd_loo")

    def lpd(self) -> PointwiseValues:
        m, v = self.mean_posterior()
        cv, t2 = self.shrunk_var, self.pop_sd ** 2
        theta_mean = cv * (self.y / self.obs_sd ** 2 + m / t2)
        theta_var = cv + (cv / t2) ** 2 * v
        return PointwiseValues(normal_logpdf(self.y, theta_mean, self.obs_sd ** 2 + theta_var),
                               "lpd")

    def sample_point_means(self, S: int, seed: int) -> np.ndarray:
        """``(S, n)`` exact joint posterior draws of ``theta``."""
        rng = np.random.default_rng(seed)
        m, v = self.mean_posterior()
        mu = m + math.sqrt(v) * rng.standard_normal(S)
        cv, t2 = self.shrunk_var, self.pop_sd ** 2
        centre = cv * (self.y[None, :] / self.obs_sd ** 2 + mu[:, None] / t2)
        return centre + math.sqrt(cv) * rng.standard_normal((S, self.n))


def simulate_hierarchical(n: int, seed: int, obs_sd: float = 1.0, pop_sd: float = 1.0,
                          prior_mean: float = 0.0, mean_sd: float = 1.0,
                          true_mean: Optional[float] = None) -> HierarchicalNormalModel:
    """Draw ``y_i ~ N(true_mean, obs_sd^2 + pop_sd^2)``.

    This is the marginal distribution of the data under the model with
    ``mu = true_mean`` (default ``prior_mean``).
    """
    true_mean = prior_mean if true_mean is None else true_mean
    rng = np.random.default_rng(seed)
    y = true_mean + math.sqrt(obs_sd ** 2 + pop_sd ** 2) * rng.standard_normal(n)
    return HierarchicalNormalModel(y, obs_sd, pop_sd, prior_mean, mean_sd)


def sample_posterior(model: ConjugateNormalModel, S: int, seed: int, mask=None) -> np.ndarray:
    mean, var = model.posterior(mask)
    rng = np.random.default_rng(seed)
    return mean + math.sqrt(var) * rng.standard_normal(S)


def loglik_matrix(model: ConjugateNormalModel, theta) -> np.ndarray:
    """``(S, n)`` array of ``log N(y_i; theta^s, obs_sd^2)``."""
    theta = np.asarray(theta, dtype=float)
    return normal_logpdf(model.y[None, :], theta[:, None], model.obs_sd ** 2)


def sample_loglik(model, S: int, seed: int) -> LogLikMatrix:
    """Log-likelihood matrix from ``S`` exact posterior draws.

    Works for both model classes; for the hierarchical model each draw is
    ``mu^s`` followed by ``theta_i^s | mu^s, y``.
    """
    if S < 2:
        raise ValueError(f"need at least 2 draws, got {S}")
    if isinstance(model, HierarchicalNormalModel):
        theta = model.sample_point_means(S, seed)
        return validate_matrix(normal_logpdf(model.y[None, :], theta, model.obs_sd ** 2))
    return validate_matrix(loglik_matrix(model, sample_posterior(model, S, seed)))


def sample_fold_logliks(model: ConjugateNormalModel, assignment: FoldAssignment,
                        S: int, seed: int) -> List[FoldLogLik]:
    """Exact draws from each training posterior ``p(theta | y_(-k))``.

    Fold ``k`` uses the stream ``SeedSequence(seed).spawn(K)[k - 1]``.
    """
    children = np.random.SeedSequence(seed).spawn(assignment.K)
    folds = []
    for k in range(1, assignment.K + 1):
        train = assignment.assignment != k
        mean, var = model.posterior(train)
        theta = mean + math.sqrt(var) * np.random.default_rng(children[k - 1]).standard_normal(S)
        folds.append(FoldLogLik.from_full(k, loglik_matrix(model, theta), assignment))
    return folds


def test_elpd(model: ConjugateNormalModel, test_y) -> float:
    """Sum of ``log p(y_test | y)`` over the given test points."""
    test_y = np.asarray(test_y, dtype=float)
    if test_y.size == 0:
        return 0.0
    return float(np.sum(model.predictive_logpdf(test_y)))


def expected_elpd(model: ConjugateNormalModel, true_mean: float,
                  true_sd: Optional[float] = None) -> float:
    """``n * E[log p(y_new | y)]`` for ``y_new ~ N(true_mean, true_sd^2)``.

    This is the target that cross-validation estimates for this data set,
    in the same units as an elpd total over ``n`` points.
    """
    true_sd = model.obs_sd if true_sd is None else true_sd
    mean, var = model.posterior()
    pvar = model.obs_sd ** 2 + var
    per_point = -0.5 * (_LOG_2PI + math.log(pvar)
                        + (true_sd ** 2 + (true_mean - mean) ** 2) / pvar)
    return model.n * per_point


def gen_heavy_ratios(k_true: float, sigma: float, S: int, tail_mass: float, seed: int,
                     bulk: str = "exponential") -> np.ndarray:
    """Synthetic importance ratios with a generalized Pareto upper tail.

    ``round(tail_mass * S)`` values are ``u + GPD(sigma, k_true)`` draws and
    the rest form the bulk below ``u``.  For ``bulk="exponential"`` the bulk
    is a standard exponential truncated at ``u = -log(tail_mass)`` (so the
    tail starts at the bulk's own ``1 - tail_mass`` quantile); for
    ``bulk="constant"`` every bulk value equals one.  Values are returned in
    shuffled order, on the linear scale.
    """
    if S < 100:
        raise ValueError(f"need S >= 100, got {S}")
    if not 0 <= tail_mass < 1:
        raise ValueError(f"tail_mass must be in [0, 1), got {tail_mass}")
    rng = np.random.default_rng(seed)
    n_tail = int(round(tail_mass * S))
    n_bulk = S - n_tail
    u = _tail_start(tail_mass, bulk)
    if bulk == "exponential":
        cap = 1.0 if tail_mass == 0 else 1.0 - tail_mass
        body = -np.log1p(-cap * rng.random(n_bulk))
    elif bulk == "constant":
        body = np.ones(n_bulk)
    else:
        raise ValueError(f"unknown bulk {bulk!r}")
    p = rng.random(n_tail)
    e = -np.log1p(-p)
    z = e if abs(k_true) < 1e-12 else np.expm1(k_true * e) / k_true
    r = np.concatenate([body, u + sigma * z])
    return rng.permutation(r)


def _tail_start(tail_mass, bulk):
    if bulk == "constant":
        return 1.0
    return -math.log(tail_mass) if tail_mass > 0 else math.inf


def heavy_ratio_mean(k_true: float, sigma: float, tail_mass: float,
                     bulk: str = "exponential") -> float:
    """Population mean of :func:`gen_heavy_ratios` output (needs ``k_true < 1``)."""
    if k_true >= 1:
        return math.inf
    if tail_mass == 0:
        return 1.0
    u = _tail_start(tail_mass, bulk)
    if bulk == "constant":
        body = 1.0
    else:
        # exponential truncated to [0, u]
        body = 1.0 - u * math.exp(-u) / (1.0 - math.exp(-u))
    return (1.0 - tail_mass) * body + tail_mass * (u + sigma / (1.0 - k_true))
