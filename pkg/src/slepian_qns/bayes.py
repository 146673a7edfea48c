"""Gaussian-linear Bayesian refinement of a segment-gridded spectrum.

A previous estimation run supplies the prior: the information-weighted
segment estimates are its mean and their shared-measurement covariance its
(typically rank-deficient, hence regularized) covariance.  New
measurements enter through their linear response ``values ~ transfer @ S``
with independent Gaussian noise, and the conjugate update yields the
posterior mean, covariance and credible intervals.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from scipy.stats import norm

__all__ = [
    "GaussianBelief",
    "BayesUpdate",
    "build_prior",
    "regularize_covariance",
    "bayes_update",
    "credible_intervals",
]


@dataclass(frozen=True, eq=False)
class GaussianBelief:
    """A multivariate normal state of knowledge about segment weights."""

    mean: np.ndarray
    cov: np.ndarray = field(repr=False)


@dataclass(frozen=True, eq=False)
class BayesUpdate(GaussianBelief):
    """Posterior belief; ``negative_mean`` flags nonphysical (negative)
    posterior spectrum values, which are reported unmodified."""

    negative_mean: bool = False


def build_prior(values, info, variances):
    """Prior belief from information-weighted setting estimates.

    The prior mean is the interpolated estimate ``W^T values`` with
    ``W_pq = I_pq / sum_p I_pq``; because all segments draw on the same
    settings, the prior covariance ``W^T diag(variances) W`` is correlated
    and at most rank ``P`` (regularize before inverting).

    Returns
    -------
    prior : GaussianBelief
    estimable : ndarray of bool
        Segments some setting is sensitive to.  Unestimable segments get
        zero mean and zero covariance.
    """
    info = np.asarray(info, float)
    variances = np.asarray(variances, float)
    column = info.sum(axis=0)
    ok = column > 0
    weights = np.zeros_like(info)
    weights[:, ok] = info[:, ok] / column[ok]
    mean = np.asarray(values, float) @ weights
    cov = weights.T @ (weights * variances[:, None])
    return GaussianBelief(mean=mean, cov=cov), ok


def regularize_covariance(cov, scale=1e-6, cond_max=1e10):
    """Tikhonov-regularize a (possibly singular) covariance.

    Adds ``lambda I`` with ``lambda = scale * trace / Q``, escalating by
    factors of 10 until the condition number falls below ``cond_max``.

    Returns
    -------
    regularized : ndarray
    lam : float
        The ridge actually applied.
    """
    cov = np.asarray(cov, float)
    q = cov.shape[0]
    lam = scale * np.trace(cov) / q
    if lam <= 0:
        lam = scale
    eye = np.eye(q)
    reg = cov + lam * eye
    while np.linalg.cond(reg) >= cond_max:
        lam *= 10.0
        reg = cov + lam * eye
    return reg, lam


def _solve_spd(matrix, rhs):
    try:
        return cho_solve(cho_factor(matrix), rhs)
    except LinAlgError:
        return np.linalg.pinv(matrix) @ rhs


def bayes_update(prior, transfer, values, variances):
    """Condition a Gaussian belief on linear-response measurements.

    Parameters
    ----------
    prior : GaussianBelief
        Mean and (invertible; see `regularize_covariance`) covariance.
    transfer : ndarray, shape (P, Q)
        Response of measurement ``p`` to segment ``q``.
    values, variances : ndarray, shape (P,)
        Measured estimates and their (independent) variances.

    Returns
    -------
    BayesUpdate
    """
    transfer = np.atleast_2d(np.asarray(transfer, float))
    values = np.asarray(values, float)
    variances = np.asarray(variances, float)
    q = prior.mean.size
    if transfer.shape[0] == 0:
        return BayesUpdate(mean=prior.mean.copy(), cov=prior.cov.copy(),
                           negative_mean=bool(np.any(prior.mean < 0)))
    if np.any(variances <= 0):
        raise ValueError("measurement variances must be positive")

    prior_precision = _solve_spd(prior.cov, np.eye(q))
    precision = prior_precision + transfer.T @ (transfer
                                                / variances[:, None])
    cov = _solve_spd(precision, np.eye(q))
    cov = 0.5 * (cov + cov.T)
    mean = cov @ (prior_precision @ prior.mean
                  + transfer.T @ (values / variances))
    return BayesUpdate(mean=mean, cov=cov,
                       negative_mean=bool(np.any(mean < 0)))


def credible_intervals(belief, level=0.95):
    """Central credible interval bounds for each segment.

    Returns
    -------
    lo, hi : ndarray
        ``mean -+ z * sigma`` with ``z`` the two-sided normal quantile for
        ``level``.
    """
    z = norm.ppf(0.5 * (1.0 + level))
    sigma = np.sqrt(np.clip(np.diag(belief.cov), 0.0, None))
    return belief.mean - z * sigma, belief.mean + z * sigma
