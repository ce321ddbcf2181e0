"""Acceptance suite: one test per release criterion, printing PASS/FAIL lines.

Heavy criteria (the desk-scale censoring study, the multi-chain convergence
fit, coverage) run real MCMC and take tens of minutes on one core.
"""

import math
import time

import numpy as np
import pytest
from scipy import stats
from scipy.spatial.distance import cdist

from censpde.data import CensoredDataset
from censpde.fem import assemble_fem, projection_matrix
from censpde.mcmc import (CensoredGibbsSampler, McmcConfig, Priors, _QCache,
                          log_target_gamma, log_target_phi, rhat_table,
                          run_chain, run_chains, truncated_normal_below)
from censpde.mesh import Mesh, build_mesh, default_options, max_pairwise_distance
from censpde.simulate import (SimConfig, apply_censoring, run_replicate,
                              run_scenario, simulate_matern_field,
                              train_test_split)
from censpde.spde import approx_covariance, build_precision, matern_nu1
from censpde.variogram import initial_estimates
from oracle_utils import dense_joint_logpdf


def _report(num, ok, detail):
    print(f"\n{'PASS' if ok else 'FAIL'} criterion {num}: {detail}")
    return ok


# ---------------------------------------------------------------------------
# Criterion 1: SPDE approximation fidelity on a ~600-node unit-square mesh.
# ---------------------------------------------------------------------------

def test_criterion_1_spde_approximation_fidelity():
    t0 = time.perf_counter()
    rng = np.random.default_rng(100)
    pts = rng.uniform(0.0, 1.0, (400, 2))
    opts = default_options(pts)
    mesh = build_mesh(pts, opts)
    fem = assemble_fem(mesh)
    delta_s = max_pairwise_distance(pts)
    phi = 0.1 * delta_s
    gamma = 0.8
    Qp = build_precision(phi, fem)

    interior = rng.uniform(0.18, 0.82, (220, 2))
    A = projection_matrix(mesh, interior)
    S = approx_covariance(A, Qp, gamma)

    variances = np.diag(S)
    var_ok = variances.min() >= 0.9 and variances.max() <= 1.1

    # 500 random interior pairs at distances beyond twice the edge target
    d = cdist(interior, interior)
    iu = np.triu_indices(len(interior), k=1)
    far = d[iu] > 2.0 * opts.max_edge_interior
    pick = rng.choice(np.where(far)[0], size=500, replace=False)
    ii, jj = iu[0][pick], iu[1][pick]
    target = gamma * matern_nu1(d[ii, jj] / phi)
    dev = np.abs(S[ii, jj] - target)
    dev_ok = float(dev.max()) < 0.05

    elapsed = time.perf_counter() - t0
    ok = var_ok and dev_ok and elapsed < 60.0
    assert _report(
        1, ok,
        f"mesh {mesh.n_nodes} nodes; variances [{variances.min():.3f}, {variances.max():.3f}] "
        f"within [0.9, 1.1]: {var_ok}; max |cov - matern| over 500 far pairs = "
        f"{dev.max():.4f} < 0.05: {dev_ok}; runtime {elapsed:.1f}s < 60s",
    )


# ---------------------------------------------------------------------------
# Criterion 2: desk-scale censoring study at K = 20 (>= 20 replicates).
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def study_results():
    results = {}
    for level in ("L1", "L2"):
        cfg = SimConfig(
            K=20, censor_level=level, n_replicates=20, seed=2024,
            mcmc=McmcConfig(n_iter=3000, burn_in=1500, thin=3, n_chains=1),
        )
        rows = []
        for rep in range(cfg.n_replicates):
            rows.extend(run_replicate(cfg, rep))
        results[level] = rows
    return results


def _mean_mspe(rows, scenario):
    vals = [r.mspe for r in rows if r.scenario == scenario]
    return float(np.mean(vals))


def test_criterion_2_mspe_levels(study_results):
    l1 = _mean_mspe(study_results["L1"], "S3")
    l2 = _mean_mspe(study_results["L2"], "S3")
    ok1 = abs(l1 - 0.79) <= 0.25
    ok2 = abs(l2 - 0.90) <= 0.30
    ok = ok1 and ok2
    assert _report(
        2, ok,
        f"mean MSPE(S3) over 20 replicates: L1 = {l1:.3f} (target 0.79 +- 0.25: {ok1}), "
        f"L2 = {l2:.3f} (target 0.90 +- 0.30: {ok2})",
    )


def test_criterion_2_l2_scenario_ordering(study_results):
    """The stated ordering is MSPE(S3) < MSPE(S1) < MSPE(S2) in L2 replicate means.

    S1 drops the censored rows; S2 substitutes the detection limit. Dropping
    45 percent of the lowest responses removes entire low-value regions, so a
    converged fit extrapolates into them and incurs a larger error than the
    substitution fit does; the second inequality is therefore expected to be
    reversed for a correctly converging sampler (see the first inequality
    passing and both naive treatments losing badly to the full model).
    """
    s1 = _mean_mspe(study_results["L2"], "S1")
    s2 = _mean_mspe(study_results["L2"], "S2")
    s3 = _mean_mspe(study_results["L2"], "S3")
    leg1 = s3 < s1
    leg2 = s1 < s2
    ok = leg1 and leg2
    assert _report(
        2, ok,
        f"L2 replicate means: S3 = {s3:.3f}, S1 = {s1:.3f}, S2 = {s2:.3f}; "
        f"S3 < S1: {leg1}; S1 < S2: {leg2} (required strict ordering S3 < S1 < S2)",
    )


# ---------------------------------------------------------------------------
# Criterion 3: full-conditional oracle equivalence on tiny instances.
# ---------------------------------------------------------------------------

@pytest.fixture()
def oracle_sampler():
    nodes = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0), (0.5, 0.5)]
    triangles = [(0, 1, 4), (1, 2, 4), (2, 3, 4), (0, 4, 3)]
    mesh = Mesh(nodes, triangles)  # N = 5
    fem = assemble_fem(mesh)
    rng = np.random.default_rng(31)
    loc = rng.uniform(0.05, 0.95, (6, 2))
    X = np.column_stack([np.ones(6), loc[:, 1]])
    y = rng.normal(1.0, 2.0, 6)
    delta = np.array([1, 0, 0, 1, 0, 1], dtype=np.int8)
    limits = np.where(delta == 1, y + 0.2, np.nan)
    ds = CensoredDataset(locations=loc, y=y, delta=delta, limits=limits, X=X)
    priors = Priors(phi_upper=1.0)
    cfg = McmcConfig(n_iter=20, burn_in=10, thin=1, n_chains=1, seed=0)
    return CensoredGibbsSampler(ds, mesh, fem, priors, cfg)


def test_criterion_3_conditional_oracle_equivalence(oracle_sampler):
    s = oracle_sampler
    rng = np.random.default_rng(7)
    tau, phi, gamma = 0.8, 0.35, 0.6
    beta = rng.normal(size=s.p)
    z = rng.normal(size=s.n_nodes) * 0.4
    y = s.dataset.y.copy()

    worst = 0.0

    # joint (beta, z) Gaussian conditional, 100 evaluation points
    B, C, M, b_beta, b_z = s.joint_conditional(y, tau, gamma, phi)
    Lam = np.block([[B, C.T], [C, M.toarray()]])
    mu = np.linalg.solve(Lam, np.concatenate([b_beta, b_z]))
    ref = mu + rng.normal(scale=0.5, size=len(mu))
    lp_ref = dense_joint_logpdf(s, y, ref[: s.p], ref[s.p:], tau, phi, gamma)
    cond_ref = -0.5 * float((ref - mu) @ Lam @ (ref - mu))
    for _ in range(99):
        th = mu + rng.normal(scale=0.5, size=len(mu))
        lp = dense_joint_logpdf(s, y, th[: s.p], th[s.p:], tau, phi, gamma)
        cond = -0.5 * float((th - mu) @ Lam @ (th - mu))
        worst = max(worst, abs((lp - lp_ref) - (cond - cond_ref)))

    # tau Gamma conditional
    from censpde.mcmc import ChainState

    st = ChainState(beta=beta, z_star=z, tau=tau, phi=phi, gamma=gamma, y_complete=y)
    Q, chol = s.build_q(phi)
    shape, rate = s.tau_conditional_params(st, _QCache(phi, Q, chol.logdet, 0.0))
    taus = np.linspace(0.3, 2.5, 100)
    lj = [dense_joint_logpdf(s, y, beta, z, t, phi, gamma) for t in taus]
    lc = [stats.gamma.logpdf(t, a=shape, scale=1 / rate) for t in taus]
    worst = max(worst, float(np.max(np.abs(np.diff(lj) - np.diff(lc)))))

    # censored-y truncated-normal conditional
    i = s.censored_idx[1]
    mean_i = float(s.X[i] @ beta) + float((s.A[i] @ z)[0])
    sd_i = math.sqrt((1 - gamma) / tau)
    u = s.dataset.limits[i]
    ys = u - np.abs(rng.normal(size=100))
    lj, lc = [], []
    for yi in ys:
        y2 = y.copy()
        y2[i] = yi
        lj.append(dense_joint_logpdf(s, y2, beta, z, tau, phi, gamma))
        lc.append(stats.norm.logpdf(yi, loc=mean_i, scale=sd_i))
    worst = max(worst, float(np.max(np.abs(np.diff(lj) - np.diff(lc)))))

    # phi MH log-ratio against dense joint differences
    quad = float(z @ (Q @ z))
    lt_phi = log_target_phi(chol.logdet, quad, tau, gamma)
    lp_phi = dense_joint_logpdf(s, y, beta, z, tau, phi, gamma)
    for phi2 in rng.uniform(0.05, 0.95, 25):
        Q2, chol2 = s.build_q(phi2)
        lt2 = log_target_phi(chol2.logdet, float(z @ (Q2 @ z)), tau, gamma)
        lp2 = dense_joint_logpdf(s, y, beta, z, tau, phi2, gamma)
        worst = max(worst, abs((lp2 - lp_phi) - (lt2 - lt_phi)))

    # gamma MH log-ratio against dense joint differences
    r = y - s.X @ beta - s.A @ z
    rss = float(r @ r)
    lt_g = log_target_gamma(gamma, rss, quad, s.n, s.n_nodes, tau)
    for g2 in rng.uniform(0.05, 0.95, 25):
        lt2 = log_target_gamma(g2, rss, quad, s.n, s.n_nodes, tau)
        lp2 = dense_joint_logpdf(s, y, beta, z, tau, phi, g2)
        worst = max(worst, abs((lp2 - lp_phi) - (lt2 - lt_g)))

    ok = worst < 1e-8
    assert _report(
        3, ok,
        f"max |conditional - brute force| log-density discrepancy = {worst:.2e} < 1e-8 "
        "(joint Gaussian, tau Gamma, truncated-normal imputation, phi and gamma MH ratios)",
    )


# ---------------------------------------------------------------------------
# Criterion 4: truncated-normal correctness.
# ---------------------------------------------------------------------------

def test_criterion_4_truncated_normal():
    rng = np.random.default_rng(4)
    n = 100_000
    draws = truncated_normal_below(np.zeros(n), np.ones(n), np.zeros(n), rng)
    target = -math.sqrt(2.0 / math.pi)
    se = math.sqrt((1.0 - 2.0 / math.pi) / n)
    mean_ok = abs(draws.mean() - target) < 3 * se

    m = 1_000_000
    mixed_upper = np.concatenate([
        np.full(m // 2, -8.0),
        rng.uniform(-8.0, 4.0, m - m // 2),
    ])
    mixed = truncated_normal_below(np.zeros(m), np.ones(m), mixed_upper, rng)
    bound_ok = bool(np.all(mixed <= mixed_upper) and np.all(np.isfinite(mixed)))

    ok = mean_ok and bound_ok
    assert _report(
        4, ok,
        f"mean of 1e5 draws at upper=0: {draws.mean():.5f} vs -sqrt(2/pi) = {target:.5f} "
        f"(3se = {3 * se:.5f}): {mean_ok}; 1e6 draws (incl. -8 sd limits) all <= limit: {bound_ok}",
    )


# ---------------------------------------------------------------------------
# Criterion 5: FEM hand-check.
# ---------------------------------------------------------------------------

def test_criterion_5_fem_hand_check():
    mesh = Mesh([(0, 0), (1, 0), (0, 1)], [(0, 1, 2)])
    fem = assemble_fem(mesh)
    d_err = float(np.max(np.abs(fem.D.diagonal() - 1.0 / 6.0)))
    g1_expected = np.array([[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]])
    g1_err = float(np.max(np.abs(fem.G1.toarray() - g1_expected)))

    rng = np.random.default_rng(5)
    row_ok = True
    psd_ok = True
    for seed in (0, 1):
        pts = np.random.default_rng(seed).uniform(0, 1, (60, 2))
        f = assemble_fem(build_mesh(pts, default_options(pts)))
        row_ok &= float(np.max(np.abs(np.asarray(f.G1.sum(axis=1)).ravel()))) < 1e-10
        for _ in range(100):
            v = rng.standard_normal(f.n_nodes)
            psd_ok &= float(v @ (f.G2 @ v)) >= -1e-10

    ok = d_err < 1e-12 and g1_err < 1e-12 and row_ok and psd_ok
    assert _report(
        5, ok,
        f"D error {d_err:.1e} < 1e-12, G1 error {g1_err:.1e} < 1e-12, "
        f"row sums zero: {row_ok}, G2 PSD on random meshes: {psd_ok}",
    )


# ---------------------------------------------------------------------------
# Criterion 6: sampler hygiene on a simulated 20x20 fit.
# ---------------------------------------------------------------------------

def test_criterion_6_sampler_hygiene():
    cfg_sim = SimConfig(K=20, censor_level="L2", seed=99)
    rng = np.random.default_rng(np.random.SeedSequence(99, spawn_key=(0,)))
    loc, y = simulate_matern_field(cfg_sim, rng)
    tr, _ = train_test_split(loc, y, 0.8, rng)
    train = apply_censoring(loc[tr], y[tr], "L2")

    mesh = build_mesh(train.locations, default_options(train.locations))
    fem = assemble_fem(mesh)
    priors = Priors(phi_upper=0.25 * math.sqrt(2.0))
    # full production protocol: 25k iterations, 15k burn-in, thin 5, 3 chains
    mcmc = McmcConfig(n_iter=25_000, burn_in=15_000, thin=5, n_chains=3, seed=7)
    init = initial_estimates(train.locations, train.X, train.y, train.delta, seed=7)
    samples = run_chains(train, mesh, fem, priors, mcmc, init)

    acc_ok = all(
        0.3 <= s.accept_phi <= 0.5 and 0.3 <= s.accept_gamma <= 0.5 for s in samples
    )
    rhats = rhat_table(samples)
    rhat_ok = all(v < 1.05 for v in rhats.values())

    repeat = run_chain(train, mesh, fem, priors, mcmc, init, 0)
    first = samples[0]
    identical = (
        np.array_equal(first.beta, repeat.beta)
        and np.array_equal(first.tau, repeat.tau)
        and np.array_equal(first.phi, repeat.phi)
        and np.array_equal(first.gamma, repeat.gamma)
        and np.array_equal(first.z_star, repeat.z_star)
    )

    acc_txt = ", ".join(
        f"chain{s.chain_id}: phi {s.accept_phi:.3f} gamma {s.accept_gamma:.3f}" for s in samples
    )
    ok = acc_ok and rhat_ok and identical
    assert _report(
        6, ok,
        f"acceptance in [0.3, 0.5]: {acc_ok} ({acc_txt}); "
        f"max split R-hat = {max(rhats.values()):.4f} < 1.05: {rhat_ok} ({rhats}); "
        f"identical seed gives bit-identical chain: {identical}",
    )


# ---------------------------------------------------------------------------
# Criterion 7: subquadratic per-iteration scaling between K = 20 and K = 50.
# ---------------------------------------------------------------------------

def test_criterion_7_scaling_subquadratic():
    times = {}
    ns = {}
    for K in (20, 50):
        cfg = SimConfig(
            K=K, censor_level="L2", seed=55,
            mcmc=McmcConfig(n_iter=800, burn_in=400, thin=4, n_chains=1),
        )
        rng = np.random.default_rng(np.random.SeedSequence(55, spawn_key=(0,)))
        loc, y = simulate_matern_field(cfg, rng)
        tr, te = train_test_split(loc, y, cfg.train_frac, rng)
        train = apply_censoring(loc[tr], y[tr], "L2")
        mcmc = McmcConfig(n_iter=800, burn_in=400, thin=4, n_chains=1, seed=5)
        _, _, _, spi, _ = run_scenario("S3", train, loc[te], y[te], mcmc)
        times[K] = spi
        ns[K] = len(tr)
    exponent = math.log(times[50] / times[20]) / math.log(ns[50] / ns[20])
    ok = exponent < 1.5
    assert _report(
        7, ok,
        f"per-iteration time: n={ns[20]} -> {times[20] * 1e3:.2f} ms, "
        f"n={ns[50]} -> {times[50] * 1e3:.2f} ms; empirical exponent "
        f"{exponent:.2f} < 1.5 (sparse-factor cost, not dense cubic)",
    )


# ---------------------------------------------------------------------------
# Criterion 8: predictive interval coverage without censoring.
# ---------------------------------------------------------------------------

def test_criterion_8_coverage_without_censoring():
    coverages = []
    for rep in range(20):
        cfg = SimConfig(
            K=20, censor_level="L1", seed=333,
            mcmc=McmcConfig(n_iter=2000, burn_in=1000, thin=2, n_chains=1),
        )
        rng = np.random.default_rng(np.random.SeedSequence(333, spawn_key=(rep,)))
        loc, y = simulate_matern_field(cfg, rng)
        tr, te = train_test_split(loc, y, cfg.train_frac, rng)
        train = CensoredDataset(
            locations=loc[tr], y=y[tr], delta=np.zeros(len(tr), dtype=np.int8),
            limits=np.full(len(tr), np.nan), X=np.ones((len(tr), 1)),
            covariate_names=("intercept",),
        )
        mcmc = McmcConfig(n_iter=2000, burn_in=1000, thin=2, n_chains=1, seed=333 + rep)
        _, _, _, _, cov = run_scenario("S3", train, loc[te], y[te], mcmc)
        coverages.append(cov)
    overall = float(np.mean(coverages))
    ok = overall >= 0.85
    assert _report(
        8, ok,
        f"95% predictive interval coverage over 20 uncensored replicates: "
        f"{overall:.3f} >= 0.85 (per-replicate range [{min(coverages):.3f}, {max(coverages):.3f}])",
    )
