"""Finite-sample radius calibration for moment ambiguity balls.

Turning data into a ball of plausible mean-covariance pairs needs two
ingredients: point estimates of the moments and a radius that shrinks
with the sample size at a known rate.  This module provides the plain
empirical estimators together with the sub-Gaussian concentration rule

    rho = c1 * rho_mu + c2 * rho_mu**2 + c3 * rho_M,

where ``rho_mu`` and ``rho_M`` are high-confidence bounds on the mean
and second-moment estimation errors and the constants

    c1 = 1 + 2 ||mu|| / lambda_min(cov),
    c2 = 1 / lambda_min(cov),
    c3 = sqrt(n) / lambda_min(cov)

translate those errors into a bound on the moment-ball distance.  The
resulting radius decays as O(1/sqrt(N)) and yields a (1 - eta)
confidence set around the empirical moment pair.

The universal constants of the second-moment concentration bound are
not pinned down by theory; the defaults used here are explicit,
deliberately conservative configuration values, so only one-sided
coverage statements (never exact radii) should be relied upon.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BadEta, OutOfRange, SingularCov, TooFewSamples, ValidationError
from .linalg import sym_matrix
from .metric import MomentPair

__all__ = [
    "CalibrationParams",
    "empirical_moments",
    "radius_from_moment_bounds",
    "subgaussian_radius",
]


@dataclass(frozen=True)
class CalibrationParams:
    """Configuration of the sub-Gaussian concentration bounds.

    Parameters
    ----------
    variance_proxy : float, optional
        The sub-Gaussian variance proxy ``sigma**2``.  Defaults to the
        spectral norm of the covariance handed to
        :func:`subgaussian_radius`, which is exact for Gaussian data and
        a heuristic otherwise.
    mean_constant : float, optional
        The constant ``C`` of the sample-mean concentration bound,
        known to satisfy ``C <= sigma / sqrt(||cov||)``.  Defaults to
        that upper bound (hence to 1 when ``variance_proxy`` also
        defaults).
    c1, c2, c3 : float
        Universal constants of the second-moment concentration bound.
        Theory guarantees their existence with ``c2 >= 1`` but not
        their values; the defaults (1, 2, 1/4) are non-canonical
        configuration.
    """

    variance_proxy: float | None = None
    mean_constant: float | None = None
    c1: float = 1.0
    c2: float = 2.0
    c3: float = 0.25

    def __post_init__(self) -> None:
        for name in ("variance_proxy", "mean_constant", "c1", "c2", "c3"):
            value = getattr(self, name)
            if value is None:
                continue
            if not math.isfinite(value) or value <= 0.0:
                raise ValidationError(f"{name} must be strictly positive, got {value}")
        if self.c2 < 1.0:
            raise ValidationError(f"c2 must be at least 1, got {self.c2}")


def empirical_moments(samples: np.ndarray) -> MomentPair:
    """Sample mean and (uncentered-moment based) sample covariance.

    Parameters
    ----------
    samples : ndarray of shape (N, n) or (N,)
        Rows are independent observations; a 1-D array is treated as N
        scalar observations.

    Returns
    -------
    MomentPair
        ``mu = mean(samples)`` and ``cov = mean(x x^T) - mu mu^T``,
        symmetrized.

    Raises
    ------
    TooFewSamples
        If fewer than two observations are given.
    """
    x = np.asarray(samples, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise ValidationError(f"samples must be a 2-D array, got shape {x.shape}")
    n_obs = x.shape[0]
    if n_obs < 2:
        raise TooFewSamples(f"need at least 2 observations, got {n_obs}")
    mu = x.mean(axis=0)
    second = (x.T @ x) / n_obs
    return MomentPair(mu, sym_matrix(second - np.outer(mu, mu)))


def _min_eigenvalue(cov: np.ndarray) -> float:
    cov = sym_matrix(np.asarray(cov, dtype=float))
    lo = float(np.linalg.eigvalsh(cov)[0])
    scale = max(1.0, float(np.abs(cov).max()))
    if lo <= 1e-12 * scale:
        raise SingularCov(
            f"covariance must be positive definite (min eigenvalue {lo:.3e})"
        )
    return lo


def radius_from_moment_bounds(
    rho_mu: float,
    rho_M: float,
    mu: np.ndarray,
    cov: np.ndarray,
    n: int | None = None,
) -> float:
    """Moment-ball radius implied by mean and second-moment error bounds.

    Any pair of high-confidence bounds ``||mu_hat - mu|| <= rho_mu`` and
    ``||M_hat - M|| <= rho_M`` implies a bound on the distance between
    the estimated and true mean-covariance pairs:

        c1 * rho_mu + c2 * rho_mu**2 + c3 * rho_M

    with the constants listed in the module docstring.  The constants
    are evaluated at the plug-in moments ``(mu, cov)``.

    Raises
    ------
    SingularCov
        If ``cov`` is not positive definite.
    OutOfRange
        If either error bound is negative.
    """
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    if rho_mu < 0.0 or rho_M < 0.0:
        raise OutOfRange("error bounds must be nonnegative")
    lam_min = _min_eigenvalue(cov)
    if n is None:
        n = mu.shape[0]
    c1 = 1.0 + 2.0 * float(np.linalg.norm(mu)) / lam_min
    c2 = 1.0 / lam_min
    c3 = math.sqrt(n) / lam_min
    return c1 * rho_mu + c2 * rho_mu**2 + c3 * rho_M


def subgaussian_radius(
    eta: float,
    n_samples: int,
    mu: np.ndarray,
    cov: np.ndarray,
    params: CalibrationParams = CalibrationParams(),
) -> float:
    """Radius making the moment ball a (1 - eta) confidence set.

    Composes the sub-Gaussian concentration bounds for the sample mean
    and the sample second-moment matrix, splitting the significance
    level evenly between the two, and feeds them through
    :func:`radius_from_moment_bounds`.  The result decays as
    ``O(1/sqrt(n_samples))``.

    Parameters
    ----------
    eta : float
        Significance level in (0, 1]; the ball covers the truth with
        probability at least ``1 - eta``.
    n_samples : int
        Number of observations behind the moment estimates.
    mu, cov : ndarray
        Plug-in moments at which the constants are evaluated
        (typically the estimates themselves).
    params : CalibrationParams
        Concentration-bound configuration; see its docstring for the
        (non-canonical) defaults.

    Raises
    ------
    BadEta
        If ``eta`` lies outside (0, 1].
    TooFewSamples
        If ``n_samples < 1``.
    SingularCov
        If ``cov`` is not positive definite.
    """
    if not (0.0 < eta <= 1.0):
        raise BadEta(f"significance level must lie in (0, 1], got {eta}")
    if n_samples < 1:
        raise TooFewSamples(f"need at least one sample, got {n_samples}")
    cov = sym_matrix(np.asarray(cov, dtype=float))
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    _min_eigenvalue(cov)

    eigs = np.linalg.eigvalsh(cov)
    spectral = float(eigs[-1])
    trace = float(np.trace(cov))
    n = mu.shape[0]
    big_n = float(n_samples)

    sigma2 = params.variance_proxy if params.variance_proxy is not None else spectral
    mean_c = (
        params.mean_constant
        if params.mean_constant is not None
        else math.sqrt(sigma2 / spectral)
    )

    eta_half = eta / 2.0
    rho_mu = mean_c * (
        math.sqrt(trace / big_n)
        + math.sqrt(2.0 * spectral * math.log(1.0 / eta_half) / big_n)
    )
    log_term = math.log(params.c2 / eta_half)
    rho_m = sigma2 * params.c1 * (math.sqrt(n / big_n) + n / big_n) + sigma2 * (
        math.sqrt(log_term / (params.c3 * big_n)) + log_term / (params.c3 * big_n)
    )
    return radius_from_moment_bounds(rho_mu, rho_m, mu, cov, n)
