"""Posterior predictive surfaces at unobserved locations.

Each retained draw contributes a conditional mean X0 beta + A0 z and a noise
variance (1 - gamma) / tau; the predictive mean averages the conditional
means, the predictive variance adds the between-draw spread to the average
noise variance (law of total variance), and quantiles come from one noise
realization per retained draw.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DataError
from .fem import projection_matrix
from .mcmc import PosteriorSamples
from .mesh import Mesh


@dataclass(frozen=True)
class PredictionGrid:
    """Prediction locations with their design matrix.

    ``extrapolation`` flags locations outside the original data hull but
    inside the extended mesh.
    """

    locations: np.ndarray
    X0: np.ndarray
    extrapolation: np.ndarray = field(default=None)

    def __post_init__(self):
        loc = np.ascontiguousarray(np.asarray(self.locations, dtype=float))
        X0 = np.ascontiguousarray(np.asarray(self.X0, dtype=float))
        if loc.ndim != 2 or loc.shape[1] != 2:
            raise DataError(f"locations must have shape (n0, 2); got {loc.shape}")
        if X0.shape[0] != loc.shape[0]:
            raise DataError("X0 rows must match the number of locations")
        ex = self.extrapolation
        ex = np.zeros(len(loc), dtype=bool) if ex is None else np.asarray(ex, dtype=bool)
        if ex.shape != (len(loc),):
            raise DataError("extrapolation flags must match the number of locations")
        object.__setattr__(self, "locations", loc)
        object.__setattr__(self, "X0", X0)
        object.__setattr__(self, "extrapolation", ex)

    @property
    def n0(self) -> int:
        return len(self.locations)


@dataclass(frozen=True)
class PredictionSurface:
    """Per-location posterior predictive summaries."""

    locations: np.ndarray
    mean: np.ndarray
    sd: np.ndarray
    q025: np.ndarray
    q500: np.ndarray
    q975: np.ndarray
    extrapolation: np.ndarray

    def __post_init__(self):
        if np.any(self.sd < 0):
            raise DataError("predictive sd must be >= 0")


def _as_draws(samples):
    """Stack one or several chains into flat draw arrays."""
    if isinstance(samples, PosteriorSamples):
        samples = [samples]
    samples = list(samples)
    if not samples:
        raise DataError("no posterior samples given")
    if any(s.z_star is None for s in samples):
        raise DataError("posterior samples lack stored z_star draws; rerun with store_zstar")
    beta = np.vstack([s.beta for s in samples])
    tau = np.concatenate([s.tau for s in samples])
    gamma = np.concatenate([s.gamma for s in samples])
    z = np.vstack([s.z_star for s in samples])
    if len(tau) == 0:
        raise DataError("posterior samples are empty")
    return beta, tau, gamma, z


def predict(
    samples: PosteriorSamples | Sequence[PosteriorSamples],
    mesh: Mesh,
    grid: PredictionGrid,
    rng,
    block_size: Optional[int] = None,
) -> PredictionSurface:
    """Posterior predictive mean, sd and quantiles over the grid.

    The per-draw noise realization is one standard normal shared across
    locations, so block processing of any size reproduces the one-pass
    result exactly.

    Raises
    ------
    OutsideMeshError
        If any grid location falls outside the mesh.
    DataError
        If sampling output is empty or lacks z draws.
    """
    beta, tau, gamma, z = _as_draws(samples)
    T = len(tau)
    A0 = projection_matrix(mesh, grid.locations)  # raises OutsideMeshError with indices
    noise_sd = np.sqrt((1.0 - gamma) / tau)       # (T,)
    eps = rng.standard_normal(T)                  # one noise draw per retained draw

    n0 = grid.n0
    mean = np.empty(n0)
    sd = np.empty(n0)
    q025 = np.empty(n0)
    q500 = np.empty(n0)
    q975 = np.empty(n0)

    step = n0 if block_size is None else max(int(block_size), 1)
    for start in range(0, n0, step):
        stop = min(start + step, n0)
        mu = grid.X0[start:stop] @ beta.T + A0[start:stop] @ z.T  # (b, T)
        mean[start:stop] = mu.mean(axis=1)
        between = mu.var(axis=1, ddof=1) if T > 1 else np.zeros(stop - start)
        sd[start:stop] = np.sqrt(between + np.mean(noise_sd**2))
        draws = mu + noise_sd * eps
        q025[start:stop], q500[start:stop], q975[start:stop] = np.quantile(
            draws, [0.025, 0.5, 0.975], axis=1
        )
    return PredictionSurface(
        locations=grid.locations,
        mean=mean,
        sd=sd,
        q025=q025,
        q500=q500,
        q975=q975,
        extrapolation=grid.extrapolation,
    )


def write_surface(surface: PredictionSurface, path) -> None:
    """CSV: longitude, latitude, mean, sd, q025, q500, q975, extrapolation_flag."""
    with open(path, "w") as fh:
        fh.write("lon,lat,mean,sd,q025,q500,q975,extrapolation_flag\n")
        for i in range(len(surface.mean)):
            vals = (
                surface.locations[i, 0], surface.locations[i, 1], surface.mean[i],
                surface.sd[i], surface.q025[i], surface.q500[i], surface.q975[i],
            )
            fh.write(",".join(repr(float(v)) for v in vals))
            fh.write(f",{int(surface.extrapolation[i])}\n")
