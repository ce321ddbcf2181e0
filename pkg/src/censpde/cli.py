"""Command-line front end: mesh, variogram, fit, predict, simulate.

Flat INI config files supply defaults; any command-line flag overrides its
config key. All randomness derives from the single run seed. File writes go
through a temp-then-rename so partial outputs never appear.
"""

from __future__ import annotations

import argparse
import configparser
import json
import math
import os
import sys
import tempfile
from dataclasses import replace

import numpy as np

from . import __version__
from .data import (ColumnMapping, TRANSFORMS, beta_to_original_scale,
                   read_dataset, standardize_design, write_dataset)
from .errors import CenspdeError, ConfigError, OutsideMeshError
from .fem import assemble_fem
from .mcmc import McmcConfig, PosteriorSamples, Priors, rhat_table, run_chains
from .mesh import (MeshOptions, build_mesh, convex_hull_vertices,
                   default_options, points_in_convex_polygon, read_mesh,
                   write_mesh)
from .predict import PredictionGrid, predict, write_surface
from .simulate import SimConfig, run_study, summarize, write_report
from .variogram import empirical_semivariogram, initial_estimates, ols_residuals


def _atomic_write(path, writer):
    """Write via temp file + rename so readers never see partial output."""
    d = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    os.close(fd)
    try:
        writer(tmp)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def _load_config(path):
    if path is None:
        return {}
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    cp = configparser.ConfigParser()
    cp.read(path)
    flat = {}
    for section in cp.sections():
        for key, val in cp.items(section):
            flat[f"{section}.{key}"] = val
    return flat


def _cfg(args, flat, key, cast, default):
    """CLI flag if given, else config value, else default."""
    cli_val = getattr(args, key.split(".")[-1].replace("-", "_"), None)
    if cli_val is not None:
        return cli_val
    if key in flat:
        raw = flat[key]
        try:
            if cast is bool:
                return raw.strip().lower() in ("1", "true", "yes", "on")
            return cast(raw)
        except ValueError as exc:
            raise ConfigError(f"config key {key}={raw!r}: {exc}") from exc
    return default


def _mapping_from_args(args, flat):
    covs = _cfg(args, flat, "data.covariate_cols", str, None)
    if covs is None:
        covs = ()
    elif isinstance(covs, str):
        covs = tuple(c.strip() for c in covs.split(",") if c.strip())
    return ColumnMapping(
        lon=_cfg(args, flat, "data.lon_col", str, "lon"),
        lat=_cfg(args, flat, "data.lat_col", str, "lat"),
        value=_cfg(args, flat, "data.value_col", str, "value"),
        censored=_cfg(args, flat, "data.censored_col", str, None),
        limit=_cfg(args, flat, "data.limit_col", str, None),
        covariates=covs,
    )


def _mesh_options(args, flat, locations):
    base = default_options(locations)
    return MeshOptions(
        max_edge_interior=_cfg(args, flat, "mesh.max_edge_interior", float, base.max_edge_interior),
        max_edge_exterior=_cfg(args, flat, "mesh.max_edge_exterior", float, base.max_edge_exterior),
        boundary_extension=_cfg(args, flat, "mesh.boundary_extension", float, base.boundary_extension),
        cutoff=_cfg(args, flat, "mesh.cutoff", float, base.cutoff),
    )


def _add_data_flags(p):
    p.add_argument("--input", required=True, help="input CSV path")
    p.add_argument("--lon-col", help="longitude column (default lon)")
    p.add_argument("--lat-col", help="latitude column (default lat)")
    p.add_argument("--value-col", help="response column (default value)")
    p.add_argument("--censored-col", help="0/1 censor indicator column")
    p.add_argument("--limit-col", help="detection limit column")
    p.add_argument("--covariate-cols", help="comma-separated extra covariate columns")
    p.add_argument("--transform", choices=sorted(TRANSFORMS), help="value transform (default none)")
    p.add_argument("--config", help="INI config file; flags override config keys")


def _add_mesh_flags(p):
    p.add_argument("--max-edge-interior", type=float)
    p.add_argument("--max-edge-exterior", type=float)
    p.add_argument("--boundary-extension", type=float)
    p.add_argument("--cutoff", type=float)


def _read_cli_dataset(args, flat):
    mapping = _mapping_from_args(args, flat)
    transform = _cfg(args, flat, "data.transform", str, "none")
    ds, info = read_dataset(args.input, mapping, transform)
    print(
        f"read {info['n_rows']} rows from {args.input}: "
        f"{info['n_censored']} censored ({info['censored_fraction']:.4f}), "
        f"bbox=({info['bbox'][0]:.4g}, {info['bbox'][1]:.4g}) .. "
        f"({info['bbox'][2]:.4g}, {info['bbox'][3]:.4g})"
    )
    return ds, mapping, transform


# ----------------------------------------------------------------- mesh ----

def _cmd_mesh(args):
    flat = _load_config(args.config)
    ds, _, _ = _read_cli_dataset(args, flat)
    opts = _mesh_options(args, flat, ds.locations)
    mesh = build_mesh(ds.locations, opts)
    _atomic_write(args.output, lambda tmp: write_mesh(mesh, tmp))
    print(f"mesh: {mesh.n_nodes} nodes, {mesh.n_triangles} triangles -> {args.output}")
    return 0


# ------------------------------------------------------------- variogram ----

def _cmd_variogram(args):
    flat = _load_config(args.config)
    ds, _, _ = _read_cli_dataset(args, flat)
    ols = ols_residuals(ds.X, ds.y, ds.delta)
    keep = ds.delta == 0
    emp = empirical_semivariogram(
        ols.residuals, ds.locations[keep], num_bins=args.bins, seed=args.seed
    )

    def write(tmp):
        with open(tmp, "w") as fh:
            fh.write("distance,semivariance,count\n")
            for c, s, n in zip(emp.bin_centers, emp.semivariances, emp.pair_counts):
                fh.write(f"{float(c)!r},{float(s)!r},{int(n)}\n")

    _atomic_write(args.output, write)
    print(f"semivariogram with {args.bins} bins -> {args.output}")
    return 0


# ------------------------------------------------------------------ fit ----

def _write_samples_csv(path, samples, names):
    def write(tmp):
        with open(tmp, "w") as fh:
            cols = [f"beta_{n}" for n in names] + ["tau", "phi", "gamma", "log_posterior"]
            fh.write("chain,iteration," + ",".join(cols) + "\n")
            for s in samples:
                for i in range(s.n_draws):
                    row = [str(s.chain_id), str(int(s.iterations[i]))]
                    row += [repr(float(v)) for v in s.beta[i]]
                    row += [repr(float(s.tau[i])), repr(float(s.phi[i])),
                            repr(float(s.gamma[i])), repr(float(s.log_posterior[i]))]
                    fh.write(",".join(row) + "\n")

    _atomic_write(path, write)


def _write_zstar(path, samples):
    def write(tmp):
        with open(tmp, "w") as fh:
            n_nodes = samples[0].z_star.shape[1]
            fh.write(f"# chain iteration z1..z{n_nodes}\n")
            for s in samples:
                for i in range(s.n_draws):
                    vals = " ".join(repr(float(v)) for v in s.z_star[i])
                    fh.write(f"{s.chain_id} {int(s.iterations[i])} {vals}\n")

    _atomic_write(path, write)


def _summary_rows(samples, names, centers, scales):
    beta_all = np.vstack([s.beta for s in samples])
    beta_orig = beta_to_original_scale(beta_all, centers, scales)
    if beta_orig.ndim == 1:
        beta_orig = beta_orig[None, :]
    rows = []
    for j, nm in enumerate(names):
        col = beta_orig[:, j]
        rows.append((f"beta_{nm}", col))
    rows.append(("tau", np.concatenate([s.tau for s in samples])))
    rows.append(("phi", np.concatenate([s.phi for s in samples])))
    rows.append(("gamma", np.concatenate([s.gamma for s in samples])))
    out = []
    for name, col in rows:
        out.append(
            {
                "parameter": name,
                "mean": float(col.mean()),
                "sd": float(col.std(ddof=1)) if len(col) > 1 else 0.0,
                "q025": float(np.quantile(col, 0.025)),
                "q500": float(np.quantile(col, 0.5)),
                "q975": float(np.quantile(col, 0.975)),
            }
        )
    return out


def _cmd_fit(args):
    flat = _load_config(args.config)
    ds, mapping, transform = _read_cli_dataset(args, flat)
    outdir = args.output_dir
    os.makedirs(outdir, exist_ok=True)

    seed = int(_cfg(args, flat, "mcmc.seed", int, 0))
    cfg = McmcConfig(
        n_iter=int(_cfg(args, flat, "mcmc.n_iter", int, 25_000)),
        burn_in=int(_cfg(args, flat, "mcmc.burn_in", int, 15_000)),
        thin=int(_cfg(args, flat, "mcmc.thin", int, 5)),
        n_chains=int(_cfg(args, flat, "mcmc.n_chains", int, 3)),
        seed=seed,
    )
    phi_factor = float(_cfg(args, flat, "priors.phi_upper_factor", float, 0.5))

    standardize = not args.no_standardize
    if standardize:
        Xs, centers, scales = standardize_design(ds.X)
        ds_fit = replace(ds, X=Xs)
    else:
        centers = np.zeros(ds.p)
        scales = np.ones(ds.p)
        ds_fit = ds

    opts = _mesh_options(args, flat, ds.locations)
    mesh = build_mesh(ds.locations, opts)
    print(f"mesh: {mesh.n_nodes} nodes, {mesh.n_triangles} triangles")
    fem = assemble_fem(mesh)
    priors = Priors.from_dataset(ds_fit, phi_upper_factor=phi_factor)
    init = initial_estimates(ds_fit.locations, ds_fit.X, ds_fit.y, ds_fit.delta, seed=seed)
    print(
        f"variogram inits: phi0={init.phi0:.4g} gamma0={init.gamma0:.4g} tau0={init.tau0:.4g}"
    )

    samples = run_chains(ds_fit, mesh, fem, priors, cfg, init, workers=args.workers)

    _atomic_write(os.path.join(outdir, "mesh.txt"), lambda t: write_mesh(mesh, t))
    _write_samples_csv(os.path.join(outdir, "samples.csv"), samples, ds.covariate_names)
    _write_zstar(os.path.join(outdir, "zstar.txt"), samples)
    _atomic_write(os.path.join(outdir, "dataset.csv"), lambda t: write_dataset(ds, t))

    rows = _summary_rows(samples, ds.covariate_names, centers, scales)

    def write_summary(tmp):
        with open(tmp, "w") as fh:
            fh.write("parameter,mean,sd,q025,q500,q975\n")
            for r in rows:
                fh.write(
                    f"{r['parameter']},{r['mean']!r},{r['sd']!r},"
                    f"{r['q025']!r},{r['q500']!r},{r['q975']!r}\n"
                )

    _atomic_write(os.path.join(outdir, "summary.csv"), write_summary)

    rhats = rhat_table(samples) if len(samples) >= 2 else {}

    def write_rhat(tmp):
        with open(tmp, "w") as fh:
            fh.write("parameter,rhat\n")
            for k, v in rhats.items():
                fh.write(f"{k},{v!r}\n")

    _atomic_write(os.path.join(outdir, "rhat.csv"), write_rhat)

    hull = convex_hull_vertices(ds.locations)
    meta = {
        "version": __version__,
        "transform": transform,
        "mapping": {
            "lon": mapping.lon, "lat": mapping.lat, "value": mapping.value,
            "censored": mapping.censored, "limit": mapping.limit,
            "covariates": list(mapping.covariates),
        },
        "covariate_names": list(ds.covariate_names),
        "standardize": standardize,
        "centers": [float(c) for c in centers],
        "scales": [float(s) for s in scales],
        "priors": {
            "phi_upper": priors.phi_upper, "beta_sd": priors.beta_sd,
            "tau_shape": priors.tau_shape, "tau_rate": priors.tau_rate,
        },
        "mcmc": {
            "n_iter": cfg.n_iter, "burn_in": cfg.burn_in, "thin": cfg.thin,
            "n_chains": cfg.n_chains, "seed": cfg.seed,
        },
        "init": {
            "phi0": init.phi0, "gamma0": init.gamma0, "tau0": init.tau0,
            "beta0": [float(b) for b in init.beta0],
        },
        "data_hull": [[float(x), float(y)] for x, y in hull],
        "acceptance": {
            f"chain{s.chain_id}": {"phi": s.accept_phi, "gamma": s.accept_gamma}
            for s in samples
        },
    }
    _atomic_write(
        os.path.join(outdir, "model.json"),
        lambda t: open(t, "w").write(json.dumps(meta, indent=2, sort_keys=True) + "\n"),
    )

    def write_report_txt(tmp):
        with open(tmp, "w") as fh:
            for s in samples:
                fh.write(
                    f"chain {s.chain_id}: accept_phi={s.accept_phi:.3f} "
                    f"accept_gamma={s.accept_gamma:.3f} "
                    f"step_phi={s.step_phi:.4g} step_gamma={s.step_gamma:.4g} "
                    f"ms_per_iter={s.seconds_per_iter * 1e3:.3f}\n"
                )

    _atomic_write(os.path.join(outdir, "run_report.txt"), write_report_txt)

    for s in samples:
        print(
            f"chain {s.chain_id}: {s.n_draws} draws, "
            f"accept phi={s.accept_phi:.3f} gamma={s.accept_gamma:.3f}"
        )
    for row in rows:
        print(f"  {row['parameter']}: {row['mean']:.4g} (sd {row['sd']:.3g})")
    if rhats:
        worst = max(rhats.items(), key=lambda kv: kv[1])
        print(f"max split R-hat: {worst[1]:.4f} ({worst[0]})")
    print(f"outputs in {outdir}")
    return 0


# -------------------------------------------------------------- predict ----

def _read_samples_csv(path, p):
    data = np.genfromtxt(path, delimiter=",", names=True)
    if data.size == 0:
        raise ConfigError(f"{path}: no retained draws")
    names = list(data.dtype.names)
    beta_cols = names[2 : 2 + p]
    chains = np.unique(data["chain"]).astype(int)
    out = []
    for cid in chains:
        m = data["chain"] == cid
        beta = np.column_stack([data[c][m] for c in beta_cols])
        out.append(
            PosteriorSamples(
                chain_id=int(cid),
                iterations=data["iteration"][m].astype(np.int64),
                beta=beta,
                tau=data["tau"][m],
                phi=data["phi"][m],
                gamma=data["gamma"][m],
                log_posterior=data["log_posterior"][m],
                z_star=None,
                accept_phi=float("nan"), accept_gamma=float("nan"),
                step_phi=float("nan"), step_gamma=float("nan"),
                n_iter=0, burn_in=0, thin=1,
            )
        )
    return out


def _read_zstar(path, samples):
    by_chain = {s.chain_id: [] for s in samples}
    with open(path) as fh:
        for line in fh:
            if line.startswith("#") or not line.strip():
                continue
            parts = line.split()
            cid = int(parts[0])
            by_chain.setdefault(cid, []).append(np.array([float(v) for v in parts[2:]]))
    for s in samples:
        rows = by_chain.get(s.chain_id, [])
        if len(rows) != s.n_draws:
            raise ConfigError(
                f"zstar draws for chain {s.chain_id} ({len(rows)}) do not match "
                f"samples.csv ({s.n_draws})"
            )
        s.z_star = np.vstack(rows)
    return samples


def _grid_from_bbox(bbox, resolution):
    x0, y0, x1, y1 = bbox
    if resolution <= 0:
        raise ConfigError("resolution must be > 0")
    nx = int(math.floor((x1 - x0) / resolution + 1e-9)) + 1
    ny = int(math.floor((y1 - y0) / resolution + 1e-9)) + 1
    xs = x0 + resolution * np.arange(nx)
    ys = y0 + resolution * np.arange(ny)
    xx, yy = np.meshgrid(xs, ys, indexing="ij")
    return np.column_stack([xx.ravel(), yy.ravel()])


def _cmd_predict(args):
    model_dir = args.model_dir
    with open(os.path.join(model_dir, "model.json")) as fh:
        meta = json.load(fh)
    mesh = read_mesh(os.path.join(model_dir, "mesh.txt"))
    p = len(meta["covariate_names"])
    samples = _read_samples_csv(os.path.join(model_dir, "samples.csv"), p)
    samples = _read_zstar(os.path.join(model_dir, "zstar.txt"), samples)

    extra_names = meta["covariate_names"][3:]
    if args.grid_file:
        grid_cols = {}
        raw = np.genfromtxt(args.grid_file, delimiter=",", names=True)
        raw = np.atleast_1d(raw)
        for cname in ("lon", "lat", *extra_names):
            if cname not in raw.dtype.names:
                raise ConfigError(f"{args.grid_file}: missing column {cname!r}")
            grid_cols[cname] = np.atleast_1d(raw[cname]).astype(float)
        locs = np.column_stack([grid_cols["lon"], grid_cols["lat"]])
        extras = (
            np.column_stack([grid_cols[c] for c in extra_names]) if extra_names else None
        )
    else:
        if args.bbox is None or args.resolution is None:
            raise ConfigError("predict needs either --grid-file or --bbox with --resolution")
        if extra_names:
            raise ConfigError(
                "model uses extra covariates; provide them per location via --grid-file"
            )
        bbox = [float(v) for v in args.bbox.split(",")]
        if len(bbox) != 4:
            raise ConfigError("--bbox must be xmin,ymin,xmax,ymax")
        locs = _grid_from_bbox(bbox, args.resolution)
        extras = None

    cols = [np.ones(len(locs)), locs[:, 0], locs[:, 1]]
    if extras is not None:
        cols.extend(extras.T)
    X0 = np.column_stack(cols)
    X0 = (X0 - np.asarray(meta["centers"])) / np.asarray(meta["scales"])

    hull = np.asarray(meta["data_hull"])
    inside_hull = points_in_convex_polygon(locs, hull)

    if args.drop_outside:
        from .mesh import locate_many

        tri_idx, _ = locate_many(mesh, locs)
        keep = tri_idx >= 0
        dropped = int((~keep).sum())
        if dropped:
            print(f"dropping {dropped} grid point(s) outside the mesh", file=sys.stderr)
        locs, X0, inside_hull = locs[keep], X0[keep], inside_hull[keep]

    grid = PredictionGrid(locations=locs, X0=X0, extrapolation=~inside_hull)
    if grid.extrapolation.any():
        print(
            f"warning: {int(grid.extrapolation.sum())} grid point(s) outside the data hull "
            "(extrapolation_flag set)",
            file=sys.stderr,
        )
    rng = np.random.default_rng(np.random.SeedSequence(args.seed, spawn_key=(12345,)))
    surface = predict(samples, mesh, grid, rng)
    _atomic_write(args.output, lambda t: write_surface(surface, t))
    print(f"predicted {grid.n0} locations -> {args.output}")
    return 0


# ------------------------------------------------------------- simulate ----

def _cmd_simulate(args):
    mcmc = McmcConfig(
        n_iter=args.n_iter, burn_in=args.burn_in, thin=args.thin, n_chains=1, seed=args.seed
    )
    scen = tuple(s.strip().upper() for s in args.scenarios.split(","))
    cfg = SimConfig(
        K=args.K,
        censor_level=args.level,
        n_replicates=args.replicates,
        seed=args.seed,
        scenarios=scen,
        mcmc=mcmc,
        force_large=args.force_large,
    )
    results = run_study(cfg, workers=args.workers)

    def write_raw(tmp):
        with open(tmp, "w") as fh:
            fh.write(
                "censor_level,K,scenario,replicate,mspe,mean_pred_se,"
                "coverage95,wall_time_s,seconds_per_iter\n"
            )
            for r in results:
                fh.write(
                    f"{r.censor_level},{r.K},{r.scenario},{r.replicate},"
                    f"{r.mspe!r},{r.mean_pred_se!r},{r.coverage95!r},"
                    f"{r.wall_time_s!r},{r.seconds_per_iter!r}\n"
                )

    _atomic_write(args.output, write_raw)
    rows = summarize(results)
    summary_path = os.path.splitext(args.output)[0] + "_summary.csv"
    _atomic_write(summary_path, lambda t: write_report(rows, t))
    for row in rows:
        se = row["mspe_se"]
        se_txt = "" if (isinstance(se, float) and math.isnan(se)) else f" (se {se:.3f})"
        print(
            f"{row['censor_level']} K={row['K']} {row['scenario']}: "
            f"MSPE {row['mspe_mean']:.3f}{se_txt}, "
            f"median time {row['time_median_s']:.1f}s"
        )
    print(f"results -> {args.output}, summary -> {summary_path}")
    return 0


# ----------------------------------------------------------------- main ----

def build_parser():
    ap = argparse.ArgumentParser(
        prog="censpde",
        description="Bayesian SPDE spatial regression for left-censored data",
    )
    ap.add_argument("--version", action="version", version=f"censpde {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mesh", help="build and export a mesh")
    _add_data_flags(p)
    _add_mesh_flags(p)
    p.add_argument("--output", required=True)
    p.set_defaults(func=_cmd_mesh)

    p = sub.add_parser("variogram", help="emit the empirical semivariogram bin table")
    _add_data_flags(p)
    p.add_argument("--bins", type=int, default=15)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", required=True)
    p.set_defaults(func=_cmd_variogram)

    p = sub.add_parser("fit", help="fit the censored spatial model")
    _add_data_flags(p)
    _add_mesh_flags(p)
    p.add_argument("--output-dir", required=True)
    p.add_argument("--n-iter", type=int, dest="n_iter")
    p.add_argument("--burn-in", type=int, dest="burn_in")
    p.add_argument("--thin", type=int)
    p.add_argument("--chains", type=int, dest="n_chains")
    p.add_argument("--seed", type=int)
    p.add_argument("--phi-upper-factor", type=float, dest="phi_upper_factor")
    p.add_argument("--workers", type=int, default=1, help="parallel chains")
    p.add_argument("--no-standardize", action="store_true",
                   help="skip centering/scaling of covariates")
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("predict", help="posterior predictive surface from a fit")
    p.add_argument("--model-dir", required=True, help="directory written by fit")
    p.add_argument("--bbox", help="xmin,ymin,xmax,ymax")
    p.add_argument("--resolution", type=float)
    p.add_argument("--grid-file", help="CSV with lon,lat(,covariates) per row")
    p.add_argument("--output", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--drop-outside", action="store_true",
                   help="drop out-of-mesh grid points instead of failing")
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("simulate", help="synthetic censoring study")
    p.add_argument("--K", type=int, default=20)
    p.add_argument("--level", choices=("L1", "L2"), default="L2")
    p.add_argument("--replicates", type=int, default=20)
    p.add_argument("--scenarios", default="S1,S2,S3")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-iter", type=int, default=3000)
    p.add_argument("--burn-in", type=int, default=1500)
    p.add_argument("--thin", type=int, default=3)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--force-large", action="store_true")
    p.add_argument("--output", required=True)
    p.set_defaults(func=_cmd_simulate)

    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except OutsideMeshError as exc:
        print(f"error: OutsideMeshError: {exc}", file=sys.stderr)
        return 1
    except CenspdeError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: FileNotFoundError: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
