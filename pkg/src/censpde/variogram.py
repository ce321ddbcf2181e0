"""Empirical semivariogram and Matern-plus-nugget fit for MCMC starting values.

Works on ordinary-least-squares residuals of the non-censored observations,
scaled by their sample standard deviation. The fitted range, sill ratio and
precision seed the sampler; they only need to be in the right ballpark.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize
from scipy.spatial.distance import pdist

from .errors import DataError
from .mesh import max_pairwise_distance
from .spde import matern_nu1

# initialization only needs rough estimates: subsample pair enumeration
_SUBSAMPLE_THRESHOLD = 20_000
_SUBSAMPLE_SIZE = 10_000


@dataclass(frozen=True)
class EmpiricalVariogram:
    """Binned sample semivariogram.

    semivariances[k] averages half squared residual differences over pairs
    whose distance falls in (bin_centers[k] - half_width, bin_centers[k] +
    half_width); pair_counts[k] is the number of such pairs.
    """

    bin_centers: np.ndarray
    semivariances: np.ndarray
    pair_counts: np.ndarray
    half_width: float

    @property
    def usable(self) -> np.ndarray:
        return self.pair_counts > 0


@dataclass(frozen=True)
class InitEstimates:
    """Starting values for the sampler."""

    beta0: np.ndarray
    tau0: float
    phi0: float
    gamma0: float

    def __post_init__(self):
        if not self.tau0 > 0:
            raise ValueError("tau0 must be > 0")
        if not self.phi0 > 0:
            raise ValueError("phi0 must be > 0")
        if not 0.0 <= self.gamma0 <= 1.0:
            raise ValueError("gamma0 must be in [0, 1]")


@dataclass(frozen=True)
class OlsResult:
    beta: np.ndarray
    residuals: np.ndarray  # scaled by their sample standard deviation
    scale: float           # the standard deviation used (1.0 if residuals are 0)


def ols_residuals(X, y, delta=None) -> OlsResult:
    """OLS on the non-censored rows; residuals scaled by their sample sd.

    Parameters
    ----------
    X : (n, p) design matrix
    y : (n,) responses
    delta : optional (n,) censor indicators; rows with delta != 0 are dropped.

    Raises
    ------
    DataError
        Fewer than p+1 usable rows, or rank-deficient design.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if delta is not None:
        keep = np.asarray(delta) == 0
        X, y = X[keep], y[keep]
    n, p = X.shape
    if n < p + 1:
        raise DataError(f"need at least p+1={p + 1} non-censored rows; got {n}")
    beta, _, rank, _ = np.linalg.lstsq(X, y, rcond=None)
    if rank < p:
        raise DataError(f"design matrix of non-censored rows is rank deficient ({rank} < {p})")
    resid = y - X @ beta
    sd = float(np.std(resid, ddof=1))
    if sd <= 1e-12 * (float(np.max(np.abs(y))) + 1.0):
        # exact fit up to rounding: skip scaling, return the zero vector
        return OlsResult(beta=beta, residuals=np.zeros_like(resid), scale=1.0)
    return OlsResult(beta=beta, residuals=resid / sd, scale=sd)


def empirical_semivariogram(
    residuals,
    locations,
    num_bins: int = 15,
    h: float | None = None,
    max_lag: float | None = None,
    seed: int = 0,
) -> EmpiricalVariogram:
    """Sample semivariogram over distinct pairs at binned distances.

    Bin centers are evenly spaced up to ``max_lag`` (default: a third of the
    maximum pairwise distance) and ``h`` defaults to half the bin spacing,
    so pairs fall in the open interval (center - h, center + h). For more
    than 20,000 sites a seeded subsample of 10,000 keeps pairing quadratic
    cost bounded.
    """
    r = np.asarray(residuals, dtype=float)
    loc = np.asarray(locations, dtype=float)
    if len(r) != len(loc):
        raise DataError("residuals and locations must have equal length")
    if num_bins < 1:
        raise ValueError("num_bins must be >= 1")
    if len(r) > _SUBSAMPLE_THRESHOLD:
        idx = np.random.default_rng(seed).choice(len(r), _SUBSAMPLE_SIZE, replace=False)
        idx.sort()
        r, loc = r[idx], loc[idx]

    d = pdist(loc)
    dr2 = pdist(r[:, None], metric="sqeuclidean")
    if max_lag is None:
        max_lag = float(d.max()) / 3.0 if len(d) else 1.0
    spacing = max_lag / num_bins
    centers = (np.arange(num_bins) + 0.5) * spacing
    if h is None:
        h = spacing / 2.0

    semis = np.zeros(num_bins)
    counts = np.zeros(num_bins, dtype=np.int64)
    for k, c in enumerate(centers):
        sel = (d > c - h) & (d < c + h)
        counts[k] = int(sel.sum())
        if counts[k]:
            semis[k] = 0.5 * dr2[sel].mean()
    return EmpiricalVariogram(
        bin_centers=centers, semivariances=semis, pair_counts=counts, half_width=float(h)
    )


def _variogram_model(d, phi, gamma, sill):
    """Model semivariance sill * (1 - gamma * matern_nu1(d / phi)) at d > 0."""
    return sill * (1.0 - gamma * matern_nu1(d / phi))


def fit_matern_variogram(
    emp: EmpiricalVariogram, max_distance: float | None = None
) -> tuple[float, float, float]:
    """Weighted least squares fit of the Matern-plus-nugget semivariance.

    Minimizes sum_d N(d) (gamma_hat(d) - sill * (1 - rho(d)))^2 over range,
    sill ratio and sill, via a coarse grid seed polished by Nelder-Mead.

    Returns
    -------
    (phi0, gamma0, tau0) with tau0 = 1 / sill, clipped to valid ranges.
    On optimizer failure falls back to (0.1 * max_distance, 0.8,
    1 / mean semivariance) with a warning.
    """
    use = emp.usable
    d = emp.bin_centers[use]
    g = emp.semivariances[use]
    w = emp.pair_counts[use].astype(float)
    if len(d) < 3:
        raise DataError(f"need at least 3 usable bins; got {len(d)}")
    if max_distance is None:
        max_distance = 3.0 * float(emp.bin_centers[-1])

    def objective(theta):
        log_phi, logit_gamma, log_sill = theta
        phi = np.exp(log_phi)
        gamma = 1.0 / (1.0 + np.exp(-logit_gamma))
        sill = np.exp(log_sill)
        return float(np.sum(w * (g - _variogram_model(d, phi, gamma, sill)) ** 2))

    sill_guess = max(float(np.average(g, weights=w)), 1e-12)
    best = None
    for phi_try in np.geomspace(0.05 * max_distance, 0.8 * max_distance, 6):
        for gamma_try in (0.2, 0.5, 0.8, 0.95):
            theta0 = np.array(
                [np.log(phi_try), np.log(gamma_try / (1 - gamma_try)), np.log(sill_guess)]
            )
            val = objective(theta0)
            if best is None or val < best[1]:
                best = (theta0, val)

    res = minimize(objective, best[0], method="Nelder-Mead",
                   options={"maxiter": 2000, "xatol": 1e-8, "fatol": 1e-12})
    fallback_theta = np.array(
        [np.log(0.1 * max_distance), np.log(0.8 / 0.2), np.log(sill_guess)]
    )
    if not res.success or not np.all(np.isfinite(res.x)):
        warnings.warn("variogram fit did not converge; using fallback estimates")
        if not (np.all(np.isfinite(res.x)) and res.fun <= objective(fallback_theta)):
            return 0.1 * max_distance, 0.8, 1.0 / sill_guess

    log_phi, logit_gamma, log_sill = res.x
    phi0 = float(np.clip(np.exp(log_phi), 1e-6 * max_distance, max_distance))
    gamma0 = float(np.clip(1.0 / (1.0 + np.exp(-logit_gamma)), 0.0, 1.0))
    sill = float(np.exp(log_sill))
    tau0 = 1.0 / max(sill, 1e-12)
    if gamma0 * matern_nu1(float(d[0]) / phi0) < 5e-3:
        # flat semivariograms leave (phi, gamma) on an unidentified ridge
        # (any gamma fits once correlation dies before the first lag):
        # report no spatial structure
        gamma0 = 0.0
    return phi0, gamma0, tau0


def initial_estimates(locations, X, y, delta=None, num_bins: int = 15, seed: int = 0) -> InitEstimates:
    """OLS + semivariogram + Matern fit, on the non-censored rows.

    The semivariogram is computed on sd-scaled residuals, so the fitted sill
    is rescaled back to the response scale before inverting into tau0.
    """
    loc = np.asarray(locations, dtype=float)
    if delta is not None:
        keep = np.asarray(delta) == 0
    else:
        keep = np.ones(len(loc), dtype=bool)
    ols = ols_residuals(X, y, delta)
    max_d = max_pairwise_distance(loc[keep])
    emp = empirical_semivariogram(ols.residuals, loc[keep], num_bins=num_bins, seed=seed)
    phi0, gamma0, tau0_scaled = fit_matern_variogram(emp, max_distance=max_d)
    # residuals were divided by ols.scale: undo on the variance scale
    tau0 = tau0_scaled / (ols.scale**2)
    return InitEstimates(beta0=ols.beta, tau0=tau0, phi0=phi0, gamma0=gamma0)
