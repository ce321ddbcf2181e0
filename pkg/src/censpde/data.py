"""Censored spatial dataset: container, transforms and CSV round trip."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import DataError

# monotone transforms applied to responses AND detection limits, so the
# censoring pattern is invariant
TRANSFORMS: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "none": lambda v: np.asarray(v, dtype=float),
    "log1p": np.log1p,
    "iterlog": lambda v: np.log1p(np.log1p(v)),
}


@dataclass(frozen=True)
class CensoredDataset:
    """Point-referenced responses with left censoring.

    Censored entries of ``y`` hold their detection limit as placeholder;
    ``limits`` is NaN at non-censored entries.
    """

    locations: np.ndarray   # (n, 2)
    y: np.ndarray           # (n,)
    delta: np.ndarray       # (n,) 1 = censored
    limits: np.ndarray      # (n,) detection limits where delta == 1
    X: np.ndarray           # (n, p)
    covariate_names: tuple[str, ...] = field(default=())

    def __post_init__(self):
        loc = np.ascontiguousarray(np.asarray(self.locations, dtype=float))
        y = np.ascontiguousarray(np.asarray(self.y, dtype=float))
        delta = np.ascontiguousarray(np.asarray(self.delta, dtype=np.int8))
        limits = np.ascontiguousarray(np.asarray(self.limits, dtype=float))
        X = np.ascontiguousarray(np.asarray(self.X, dtype=float))
        n = len(y)
        if loc.shape != (n, 2):
            raise DataError(f"locations must have shape ({n}, 2); got {loc.shape}")
        if delta.shape != (n,) or limits.shape != (n,):
            raise DataError("y, delta and limits must have equal length")
        if X.ndim != 2 or X.shape[0] != n:
            raise DataError(f"X must have shape ({n}, p); got {X.shape}")
        if not np.all(np.isin(delta, (0, 1))):
            raise DataError("delta entries must be 0 or 1")
        cen = delta == 1
        if not np.all(np.isfinite(limits[cen])):
            raise DataError("every censored entry needs a finite detection limit")
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(loc)) and np.all(np.isfinite(X))):
            raise DataError("locations, y and X must be finite")
        if np.linalg.matrix_rank(X) < X.shape[1]:
            raise DataError("covariate matrix X must have full column rank")
        y = y.copy()
        y[cen] = limits[cen]  # placeholder contract
        names = tuple(self.covariate_names) or tuple(f"x{j}" for j in range(X.shape[1]))
        if len(names) != X.shape[1]:
            raise DataError("covariate_names length must match X columns")
        for arr in (loc, y, delta, limits, X):
            arr.setflags(write=False)
        object.__setattr__(self, "locations", loc)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "delta", delta)
        object.__setattr__(self, "limits", limits)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "covariate_names", names)

    @property
    def n(self) -> int:
        return len(self.y)

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def n_censored(self) -> int:
        return int(self.delta.sum())

    @property
    def censored_fraction(self) -> float:
        return self.n_censored / self.n

    @property
    def censored_idx(self) -> np.ndarray:
        return np.where(self.delta == 1)[0]

    def subset(self, mask) -> "CensoredDataset":
        mask = np.asarray(mask)
        return CensoredDataset(
            locations=self.locations[mask],
            y=self.y[mask],
            delta=self.delta[mask],
            limits=self.limits[mask],
            X=self.X[mask],
            covariate_names=self.covariate_names,
        )

    def uncensored_copy(self, fill_with_limits: bool = False) -> "CensoredDataset":
        """All rows marked non-censored; optionally y set to the limit first."""
        y = self.y.copy()
        if fill_with_limits:
            cen = self.delta == 1
            y[cen] = self.limits[cen]
        return CensoredDataset(
            locations=self.locations,
            y=y,
            delta=np.zeros(self.n, dtype=np.int8),
            limits=np.full(self.n, np.nan),
            X=self.X,
            covariate_names=self.covariate_names,
        )


@dataclass(frozen=True)
class ColumnMapping:
    """CSV column names for ingestion."""

    lon: str = "lon"
    lat: str = "lat"
    value: str = "value"
    censored: str | None = None
    limit: str | None = None
    covariates: tuple[str, ...] = ()


def build_design(lon, lat, extra_covariates=None, names: Sequence[str] = ()):
    """Design matrix [1, lon, lat, extras...] and its column names."""
    cols = [np.ones_like(lon), np.asarray(lon, float), np.asarray(lat, float)]
    out_names = ["intercept", "lon", "lat"]
    if extra_covariates is not None:
        for j in range(extra_covariates.shape[1]):
            cols.append(extra_covariates[:, j])
        out_names.extend(names)
    return np.column_stack(cols), tuple(out_names)


def standardize_design(X, centers=None, scales=None):
    """Center and scale non-intercept columns (training sd); returns (Xs, centers, scales).

    Columns with zero spread keep scale 1 so constants pass through.
    """
    X = np.asarray(X, dtype=float)
    if centers is None:
        centers = X.mean(axis=0)
        scales = X.std(axis=0, ddof=1) if X.shape[0] > 1 else np.ones(X.shape[1])
        scales = np.where(scales > 0, scales, 1.0)
        # never touch the intercept-like constant columns
        const = X.std(axis=0) == 0
        centers = np.where(const, 0.0, centers)
        scales = np.where(const, 1.0, scales)
    Xs = (X - centers) / scales
    return Xs, np.asarray(centers, float), np.asarray(scales, float)


def beta_to_original_scale(beta_std, centers, scales):
    """Map coefficients fitted on a standardized design back to raw covariates.

    Assumes column 0 is the intercept (center 0, scale 1).
    """
    beta_std = np.atleast_2d(np.asarray(beta_std, dtype=float))
    beta = beta_std / scales
    beta[:, 0] = beta_std[:, 0] - np.sum(beta_std[:, 1:] * centers[1:] / scales[1:], axis=1)
    return beta[0] if beta.shape[0] == 1 else beta


_TRUE_TOKENS = {"1", "true", "t", "yes", "y"}
_FALSE_TOKENS = {"0", "false", "f", "no", "n", ""}


def _parse_flag(token, line_no):
    t = token.strip().lower()
    if t in _TRUE_TOKENS:
        return 1
    if t in _FALSE_TOKENS:
        return 0
    raise DataError(f"line {line_no}: cannot parse censor flag {token!r}")


def read_dataset(path, mapping: ColumnMapping, transform: str = "none"):
    """Read a CSV into a CensoredDataset, applying ``transform`` to values and limits.

    Returns (dataset, info) where info reports row counts, censored fraction
    and the bounding box.

    Raises
    ------
    DataError
        Unparseable rows (with line numbers), censored rows lacking a limit,
        or non-finite values.
    """
    if transform not in TRANSFORMS:
        raise DataError(f"unknown transform {transform!r}; choose from {sorted(TRANSFORMS)}")
    tf = TRANSFORMS[transform]

    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise DataError(f"{path}: empty file or missing header")
        header = [h.strip() for h in reader.fieldnames]
        needed = [mapping.lon, mapping.lat, mapping.value]
        if mapping.censored:
            needed.append(mapping.censored)
        if mapping.limit:
            needed.append(mapping.limit)
        needed.extend(mapping.covariates)
        missing = [cname for cname in needed if cname not in header]
        if missing:
            raise DataError(f"{path}: missing column(s) {missing}; header has {header}")

        lon, lat, value, delta, limits = [], [], [], [], []
        extras = [[] for _ in mapping.covariates]
        bad_lines = []
        for line_no, row in enumerate(reader, start=2):
            try:
                d = _parse_flag(row[mapping.censored], line_no) if mapping.censored else 0
                lim_tok = (row[mapping.limit] or "").strip() if mapping.limit else ""
                lim = float(lim_tok) if lim_tok else np.nan
                val_tok = (row[mapping.value] or "").strip()
                if val_tok:
                    val = float(val_tok)
                elif d == 1 and np.isfinite(lim):
                    val = lim  # censored rows may omit the value
                else:
                    raise ValueError("missing value")
                if d == 1 and not np.isfinite(lim):
                    raise ValueError("censored row lacks a detection limit")
                lon.append(float(row[mapping.lon]))
                lat.append(float(row[mapping.lat]))
                value.append(val)
                delta.append(d)
                limits.append(lim)
                for k, cname in enumerate(mapping.covariates):
                    extras[k].append(float(row[cname]))
            except (ValueError, TypeError, KeyError) as exc:
                bad_lines.append((line_no, str(exc)))
        if bad_lines:
            shown = "; ".join(f"line {ln}: {msg}" for ln, msg in bad_lines[:5])
            more = "" if len(bad_lines) <= 5 else f" (+{len(bad_lines) - 5} more)"
            raise DataError(f"{path}: {len(bad_lines)} unparseable row(s): {shown}{more}")

    if not lon:
        raise DataError(f"{path}: no data rows")
    lon = np.asarray(lon)
    lat = np.asarray(lat)
    value = np.asarray(value)
    delta = np.asarray(delta, dtype=np.int8)
    limits = np.asarray(limits)
    if not (np.all(np.isfinite(lon)) and np.all(np.isfinite(lat)) and np.all(np.isfinite(value))):
        raise DataError(f"{path}: non-finite coordinates or values")

    ty = tf(value)
    tlim = np.where(np.isfinite(limits), tf(np.where(np.isfinite(limits), limits, 0.0)), np.nan)
    extra_arr = np.column_stack(extras) if extras and mapping.covariates else None
    X, names = build_design(lon, lat, extra_arr, mapping.covariates)
    ds = CensoredDataset(
        locations=np.column_stack([lon, lat]),
        y=ty,
        delta=delta,
        limits=tlim,
        X=X,
        covariate_names=names,
    )
    info = {
        "n_rows": ds.n,
        "n_censored": ds.n_censored,
        "censored_fraction": ds.censored_fraction,
        "bbox": (float(lon.min()), float(lat.min()), float(lon.max()), float(lat.max())),
        "transform": transform,
    }
    return ds, info


def write_dataset(dataset: CensoredDataset, path) -> None:
    """Canonical CSV with columns lon,lat,value,censored,limit,<covariates>.

    Values are written with full precision so read_dataset(transform='none')
    round-trips exactly.
    """
    extra_names = dataset.covariate_names[3:]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["lon", "lat", "value", "censored", "limit", *extra_names])
        for i in range(dataset.n):
            lim = dataset.limits[i]
            writer.writerow(
                [
                    repr(float(dataset.locations[i, 0])),
                    repr(float(dataset.locations[i, 1])),
                    repr(float(dataset.y[i])),
                    int(dataset.delta[i]),
                    repr(float(lim)) if np.isfinite(lim) else "",
                    *(repr(float(dataset.X[i, 3 + j])) for j in range(len(extra_names))),
                ]
            )


def canonical_mapping(covariates: tuple[str, ...] = ()) -> ColumnMapping:
    """Mapping matching write_dataset output."""
    return ColumnMapping(
        lon="lon", lat="lat", value="value", censored="censored", limit="limit",
        covariates=covariates,
    )
