"""Adaptive Metropolis-within-Gibbs sampler for the censored spatial model.

Hierarchy: y | z ~ N(X beta + A z, tau^-1 (1-gamma) I);
z ~ N(0, (gamma/tau) Q(phi)^-1); weak normal/gamma/uniform priors.
Left-censored responses are data-augmented with truncated-normal draws,
(beta, z) is a joint Gaussian update through the sparse precision, tau is
conjugate, and phi and gamma move by adaptive random-walk MH on logit scales.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import scipy.linalg as sla
from scipy.special import expit, gammaln, logit, ndtr, ndtri

from .cholesky import PatternUnion, SymbolicCholesky
from .data import CensoredDataset
from .errors import DataError, NumericalError
from .fem import FemMatrices, projection_matrix
from .mesh import Mesh, max_pairwise_distance
from .variogram import InitEstimates

_FOUR_PI = 4.0 * math.pi
_TAIL_SWITCH = 5.0  # standardized bound beyond which the exponential-rejection tail kicks in
_ONE_MINUS = float(np.nextafter(1.0, 0.0))


@dataclass(frozen=True)
class Priors:
    """Prior hyperparameters.

    beta ~ N(0, beta_sd^2 I), tau ~ Gamma(tau_shape, tau_rate),
    phi ~ Uniform(0, phi_upper), gamma ~ Uniform(0, 1) with numerical guards.
    """

    phi_upper: float
    beta_sd: float = 100.0
    tau_shape: float = 0.1
    tau_rate: float = 0.1
    phi_lower: float = 0.0   # guard floor; 0 means 1e-6 * phi_upper
    gamma_guard: float = 1e-6

    def __post_init__(self):
        if not self.phi_upper > 0:
            raise ValueError("phi_upper must be > 0")
        if not (self.beta_sd > 0 and self.tau_shape > 0 and self.tau_rate > 0):
            raise ValueError("prior hyperparameters must be positive")

    @property
    def phi_guard_low(self) -> float:
        return self.phi_lower if self.phi_lower > 0 else 1e-6 * self.phi_upper

    @classmethod
    def from_dataset(cls, dataset: CensoredDataset, phi_upper_factor: float = 0.5, **kw) -> "Priors":
        """phi_upper = factor * (largest distance between data locations)."""
        delta_s = max_pairwise_distance(dataset.locations)
        if delta_s <= 0:
            raise DataError("all locations coincide; cannot set phi_upper")
        return cls(phi_upper=phi_upper_factor * delta_s, **kw)


@dataclass(frozen=True)
class McmcConfig:
    n_iter: int = 25_000
    burn_in: int = 15_000
    thin: int = 5
    n_chains: int = 3
    target_accept_low: float = 0.3
    target_accept_high: float = 0.5
    seed: int = 0
    store_zstar: bool = True
    initial_step: float = 1.0
    init_jitter: float = 0.1
    debug: bool = False

    def __post_init__(self):
        if not 0 <= self.burn_in < self.n_iter:
            raise ValueError("require 0 <= burn_in < n_iter")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        if not 0 < self.target_accept_low < self.target_accept_high < 1:
            raise ValueError("acceptance band must satisfy 0 < low < high < 1")

    @property
    def adapt_target(self) -> float:
        return 0.5 * (self.target_accept_low + self.target_accept_high)

    @property
    def n_stored(self) -> int:
        return (self.n_iter - self.burn_in) // self.thin


@dataclass
class ChainState:
    """Mutable sampler state for one chain."""

    beta: np.ndarray
    z_star: np.ndarray
    tau: float
    phi: float
    gamma: float
    y_complete: np.ndarray
    log_step_phi: float = 0.0
    log_step_gamma: float = 0.0


@dataclass
class PosteriorSamples:
    """Thinned post-burn-in draws and sampler diagnostics for one chain."""

    chain_id: int
    iterations: np.ndarray
    beta: np.ndarray
    tau: np.ndarray
    phi: np.ndarray
    gamma: np.ndarray
    log_posterior: np.ndarray
    z_star: Optional[np.ndarray]
    accept_phi: float
    accept_gamma: float
    step_phi: float
    step_gamma: float
    n_iter: int
    burn_in: int
    thin: int
    factor_nnz: int = 0
    seconds_per_iter: float = 0.0
    covariate_names: tuple = ()

    @property
    def n_draws(self) -> int:
        return len(self.tau)

    def scalar_draws(self) -> dict[str, np.ndarray]:
        out = {f"beta{j}": self.beta[:, j] for j in range(self.beta.shape[1])}
        out.update(tau=self.tau, phi=self.phi, gamma=self.gamma)
        return out


def truncated_normal_below(mean, sd, upper, rng) -> np.ndarray:
    """Vectorized draws from N(mean, sd^2) truncated to (-inf, upper].

    Inverse-CDF in the body; Robert's exponential-rejection sampler once the
    bound is more than 5 sd below the mean, so extreme truncation never
    degenerates into an unbounded rejection loop. Every draw is <= upper.
    """
    mean = np.asarray(mean, dtype=float)
    sd = np.asarray(sd, dtype=float)
    upper = np.asarray(upper, dtype=float)
    a = (upper - mean) / sd
    x = np.empty_like(a)

    body = a >= -_TAIL_SWITCH
    if np.any(body):
        u = rng.uniform(size=int(body.sum()))
        p = np.minimum(ndtr(a[body]), _ONE_MINUS) * (1.0 - u)
        x[body] = ndtri(p)

    tail = ~body
    if np.any(tail):
        b = -a[tail]
        lam = 0.5 * (b + np.sqrt(b * b + 4.0))
        y = np.empty_like(b)
        pending = np.ones(len(b), dtype=bool)
        for _ in range(10_000):
            m = int(pending.sum())
            if m == 0:
                break
            prop = b[pending] + rng.exponential(size=m) / lam[pending]
            acc = rng.uniform(size=m) <= np.exp(-0.5 * (prop - lam[pending]) ** 2)
            idx = np.where(pending)[0][acc]
            y[idx] = prop[acc]
            pending[idx] = False
        else:
            raise NumericalError("truncated-normal tail sampler failed to terminate")
        x[tail] = -y

    draw = mean + sd * x
    return np.minimum(draw, upper)  # guards float round-up at the boundary


def _update_log_step(log_step, alpha, t, target):
    """Robbins-Monro drift of the proposal log step toward the target rate."""
    return log_step + (alpha - target) / max(t, 1) ** 0.6


def _adaptation_clock(t, burn_in):
    """Iterations since the last adaptation epoch restart.

    The burn-in is split into three epochs; restarting the decay lets the
    step size re-converge to the geometry the chain actually occupies late
    in burn-in, instead of being dominated by early transient moves.
    """
    if burn_in < 6:
        return t
    third = burn_in // 3
    if t > 2 * third:
        return t - 2 * third
    if t > third:
        return t - third
    return t


def log_target_phi(logdet_q, quad_z, tau, gamma) -> float:
    """phi-dependent part of the joint log density (flat prior cancels)."""
    return 0.5 * logdet_q - 0.5 * tau / gamma * quad_z


def log_target_gamma(gamma, rss, quad_z, n, n_nodes, tau) -> float:
    """gamma-dependent part of the joint log density."""
    return (
        -0.5 * n * math.log1p(-gamma)
        - 0.5 * tau * rss / (1.0 - gamma)
        - 0.5 * n_nodes * math.log(gamma)
        - 0.5 * tau / gamma * quad_z
    )


class CensoredGibbsSampler:
    """Gibbs sampler bound to one dataset, mesh and FEM system.

    Symbolic factorizations, the projection matrix and the cross-product
    blocks are computed once here and shared by every chain (read-only).
    """

    def __init__(self, dataset: CensoredDataset, mesh: Mesh, fem: FemMatrices,
                 priors: Priors, config: McmcConfig):
        self.dataset = dataset
        self.mesh = mesh
        self.fem = fem
        self.priors = priors
        self.config = config

        self.A = projection_matrix(mesh, dataset.locations)
        self.At = self.A.T.tocsr()
        self.X = dataset.X
        self.n = dataset.n
        self.p = dataset.p
        self.n_nodes = mesh.n_nodes

        AtA = (self.At @ self.A).tocsc()
        AtA = ((AtA + AtA.T) * 0.5).tocsc()
        self._union = PatternUnion([fem.D, fem.G1, fem.G2, AtA])
        self._symbolic = SymbolicCholesky(self._union.combine([1.0, 1.0, 1.0, 1.0]))
        self.XtX = self.X.T @ self.X
        self.AtX = np.asarray(self.At @ self.X)

        cen = dataset.censored_idx
        self.censored_idx = cen
        self.X_c = self.X[cen]
        self.A_c = self.A[cen].tocsr()
        self.limits_c = dataset.limits[cen]

    # -- precision pieces --------------------------------------------------

    def _q_coefficients(self, phi):
        s = phi * phi / _FOUR_PI
        return s / phi**4, 2.0 * s / phi**2, s

    def build_q(self, phi):
        """Q(phi) with cached factor and logdet, on the shared pattern."""
        c1, c2, c3 = self._q_coefficients(phi)
        Q = self._union.combine([c1, c2, c3, 0.0])
        chol = self._symbolic.factor(Q)
        return Q, chol

    # -- full-conditional updates ------------------------------------------

    def joint_conditional(self, y_complete, tau, gamma, phi):
        """Precision blocks and linear term of the (beta, z) full conditional.

        Returns (B, C, M, b_beta, b_z) with Lambda = [[B, C^T], [C, M]] and
        linear term (b_beta, b_z), so the conditional is
        N(Lambda^-1 b, Lambda^-1).
        """
        lam = tau / (1.0 - gamma)
        B = self.XtX * lam + np.eye(self.p) / self.priors.beta_sd**2
        C = lam * self.AtX
        c1, c2, c3 = self._q_coefficients(phi)
        s = tau / gamma
        M = self._union.combine([s * c1, s * c2, s * c3, lam])
        b_beta = lam * (self.X.T @ y_complete)
        b_z = lam * (self.At @ y_complete)
        return B, C, M, b_beta, b_z

    def update_beta_zstar(self, state: ChainState, Qp, rng):
        """Exact joint Gaussian draw of (beta, z) by block elimination.

        beta is drawn from its marginal N(mu_beta, S^-1) with S the Schur
        complement, then z from its Gaussian conditional given beta; jointly
        this is one draw from N(Lambda^-1 b, Lambda^-1).
        """
        if state.gamma >= 1.0 - 1e-8:
            raise NumericalError("gamma too close to 1; noise precision overflows")
        B, C, M, b_beta, b_z = self.joint_conditional(
            state.y_complete, state.tau, state.gamma, Qp.phi
        )
        Mf = self._symbolic.factor(M)
        V = Mf.solve(C)                       # M^-1 C
        S = B - C.T @ V                       # Schur complement (p x p)
        mz0 = Mf.solve(b_z)
        try:
            Ls = np.linalg.cholesky(S)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(
                f"joint update failed: Schur complement not PD "
                f"(tau={state.tau:g}, gamma={state.gamma:g}, phi={state.phi:g})"
            ) from exc
        rhs = b_beta - C.T @ mz0
        mu_beta = sla.cho_solve((Ls, True), rhs, check_finite=False)
        beta = mu_beta + sla.solve_triangular(Ls.T, rng.standard_normal(self.p),
                                              lower=False, check_finite=False)
        mz = Mf.solve(b_z - C @ beta)
        z = mz + Mf.sample(rng)
        return beta, z, Mf

    def update_tau(self, state: ChainState, Qp, rng, rss=None, quad_z=None):
        """Conjugate Gamma draw over both Gaussian layers."""
        if rss is None:
            r = state.y_complete - self.X @ state.beta - self.A @ state.z_star
            rss = float(r @ r)
        if quad_z is None:
            quad_z = float(state.z_star @ (Qp.Q @ state.z_star))
        shape = self.priors.tau_shape + 0.5 * (self.n + self.n_nodes)
        rate = (
            self.priors.tau_rate
            + rss / (2.0 * (1.0 - state.gamma))
            + quad_z / (2.0 * state.gamma)
        )
        if not np.isfinite(rate) or rate <= 0:
            raise NumericalError(f"non-finite tau rate ({rate})")
        return float(rng.gamma(shape, 1.0 / rate))

    def tau_conditional_params(self, state: ChainState, Qp):
        r = state.y_complete - self.X @ state.beta - self.A @ state.z_star
        rss = float(r @ r)
        quad_z = float(state.z_star @ (Qp.Q @ state.z_star))
        shape = self.priors.tau_shape + 0.5 * (self.n + self.n_nodes)
        rate = (
            self.priors.tau_rate
            + rss / (2.0 * (1.0 - state.gamma))
            + quad_z / (2.0 * state.gamma)
        )
        return shape, rate

    def update_phi(self, state: ChainState, qp_cache, rng, t, adapting):
        """Logit-scale random-walk MH on phi; swaps the cached precision on accept.

        Returns (phi, qp_cache, accepted, alpha).
        """
        U = self.priors.phi_upper
        lo = self.priors.phi_guard_low
        step = math.exp(state.log_step_phi)
        ell = logit(state.phi / U)
        ell_prop = ell + step * rng.standard_normal()
        phi_prop = float(U * expit(ell_prop))
        alpha = 0.0
        accepted = False
        if lo < phi_prop < U - lo:
            try:
                Q_prop, chol_prop = self.build_q(phi_prop)
                quad_prop = float(state.z_star @ (Q_prop @ state.z_star))
                cur = log_target_phi(qp_cache.logdet, qp_cache.quad_z, state.tau, state.gamma)
                prop = log_target_phi(chol_prop.logdet, quad_prop, state.tau, state.gamma)
                logr = (
                    prop - cur
                    + math.log(phi_prop * (U - phi_prop))
                    - math.log(state.phi * (U - state.phi))
                )
                alpha = math.exp(min(0.0, logr))
                if math.log(rng.uniform()) < logr:
                    accepted = True
                    qp_cache = _QCache(phi_prop, Q_prop, chol_prop.logdet, quad_prop)
            except NumericalError:
                alpha = 0.0
        if adapting:
            state.log_step_phi = _update_log_step(
                state.log_step_phi, alpha,
                _adaptation_clock(t, self.config.burn_in), self.config.adapt_target,
            )
        return (qp_cache.phi, qp_cache, accepted, alpha)

    def update_gamma(self, state: ChainState, qp_cache, rng, t, adapting, rss):
        """Logit-scale random-walk MH on gamma. Returns (gamma, accepted, alpha)."""
        g = self.priors.gamma_guard
        step = math.exp(state.log_step_gamma)
        ell = logit(state.gamma)
        ell_prop = ell + step * rng.standard_normal()
        gamma_prop = float(expit(ell_prop))
        alpha = 0.0
        accepted = False
        if g < gamma_prop < 1.0 - g:
            cur = log_target_gamma(
                state.gamma, rss, qp_cache.quad_z, self.n, self.n_nodes, state.tau
            )
            prop = log_target_gamma(
                gamma_prop, rss, qp_cache.quad_z, self.n, self.n_nodes, state.tau
            )
            logr = (
                prop - cur
                + math.log(gamma_prop * (1.0 - gamma_prop))
                - math.log(state.gamma * (1.0 - state.gamma))
            )
            alpha = math.exp(min(0.0, logr))
            if math.log(rng.uniform()) < logr:
                accepted = True
        if adapting:
            state.log_step_gamma = _update_log_step(
                state.log_step_gamma, alpha,
                _adaptation_clock(t, self.config.burn_in), self.config.adapt_target,
            )
        return (gamma_prop if accepted else state.gamma, accepted, alpha)

    def impute_censored(self, state: ChainState, rng):
        """Truncated-normal draws at censored sites (independent given z)."""
        if len(self.censored_idx) == 0:
            return state.y_complete
        mean = self.X_c @ state.beta + self.A_c @ state.z_star
        sd = math.sqrt((1.0 - state.gamma) / state.tau)
        draws = truncated_normal_below(mean, sd, self.limits_c, rng)
        y = state.y_complete.copy()
        y[self.censored_idx] = draws
        return y

    # -- joint density (for log-posterior records and tests) ----------------

    def log_posterior(self, state: ChainState, logdet_q, rss, quad_z) -> float:
        n, N, p = self.n, self.n_nodes, self.p
        pr = self.priors
        tau, gamma = state.tau, state.gamma
        ll = 0.5 * n * (math.log(tau) - math.log1p(-gamma) - math.log(2 * math.pi))
        ll -= 0.5 * tau * rss / (1.0 - gamma)
        lz = 0.5 * N * (math.log(tau) - math.log(gamma)) + 0.5 * logdet_q
        lz -= 0.5 * N * math.log(2 * math.pi) + 0.5 * tau / gamma * quad_z
        lb = -0.5 * p * math.log(2 * math.pi * pr.beta_sd**2)
        lb -= 0.5 * float(state.beta @ state.beta) / pr.beta_sd**2
        lt = (
            pr.tau_shape * math.log(pr.tau_rate)
            - gammaln(pr.tau_shape)
            + (pr.tau_shape - 1.0) * math.log(tau)
            - pr.tau_rate * tau
        )
        lphi = -math.log(pr.phi_upper)
        return float(ll + lz + lb + lt + lphi)

    # -- main loop -----------------------------------------------------------

    def run_chain(self, init: InitEstimates, chain_id: int) -> PosteriorSamples:
        """One chain, fully reproducible from (config.seed, chain_id)."""
        cfg = self.config
        rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(chain_id,)))
        state = self._initial_state(init, rng)

        c1, c2, c3 = self._q_coefficients(state.phi)
        Q, chol = self.build_q(state.phi)
        qp = _QCache(state.phi, Q, chol.logdet, float(state.z_star @ (Q @ state.z_star)))

        n_store = cfg.n_stored
        stored_beta = np.empty((n_store, self.p))
        stored_tau = np.empty(n_store)
        stored_phi = np.empty(n_store)
        stored_gamma = np.empty(n_store)
        stored_lp = np.empty(n_store)
        stored_it = np.empty(n_store, dtype=np.int64)
        stored_z = np.empty((n_store, self.n_nodes)) if cfg.store_zstar else None

        acc_phi = acc_gamma = 0
        post_iters = 0
        factor_nnz = 0
        t_start = time.perf_counter()

        k = 0
        for t in range(1, cfg.n_iter + 1):
            adapting = t <= cfg.burn_in

            state.y_complete = self.impute_censored(state, rng)
            if cfg.debug and len(self.censored_idx):
                assert np.all(state.y_complete[self.censored_idx] <= self.limits_c)

            beta, z, Mf = self.update_beta_zstar(state, qp, rng)
            state.beta, state.z_star = beta, z
            factor_nnz = Mf.factor_nnz
            qp.quad_z = float(z @ (qp.Q @ z))

            r = state.y_complete - self.X @ beta - self.A @ z
            rss = float(r @ r)
            state.tau = self.update_tau(state, qp, rng, rss=rss, quad_z=qp.quad_z)

            state.phi, qp, ok_phi, _ = self.update_phi(state, qp, rng, t, adapting)
            state.gamma, ok_gamma, _ = self.update_gamma(state, qp, rng, t, adapting, rss)

            if not adapting:
                post_iters += 1
                acc_phi += ok_phi
                acc_gamma += ok_gamma
                if (t - cfg.burn_in) % cfg.thin == 0 and k < n_store:
                    stored_beta[k] = state.beta
                    stored_tau[k] = state.tau
                    stored_phi[k] = state.phi
                    stored_gamma[k] = state.gamma
                    stored_lp[k] = self.log_posterior(state, qp.logdet, rss, qp.quad_z)
                    stored_it[k] = t
                    if stored_z is not None:
                        stored_z[k] = state.z_star
                    k += 1

        seconds = (time.perf_counter() - t_start) / cfg.n_iter
        return PosteriorSamples(
            chain_id=chain_id,
            iterations=stored_it[:k],
            beta=stored_beta[:k],
            tau=stored_tau[:k],
            phi=stored_phi[:k],
            gamma=stored_gamma[:k],
            log_posterior=stored_lp[:k],
            z_star=stored_z[:k] if stored_z is not None else None,
            accept_phi=acc_phi / max(post_iters, 1),
            accept_gamma=acc_gamma / max(post_iters, 1),
            step_phi=math.exp(state.log_step_phi),
            step_gamma=math.exp(state.log_step_gamma),
            n_iter=cfg.n_iter,
            burn_in=cfg.burn_in,
            thin=cfg.thin,
            factor_nnz=factor_nnz,
            seconds_per_iter=seconds,
            covariate_names=self.dataset.covariate_names,
        )

    def _initial_state(self, init: InitEstimates, rng) -> ChainState:
        cfg, pr = self.config, self.priors
        j = cfg.init_jitter
        tau0 = init.tau0 * float(rng.uniform(1 - j, 1 + j))
        phi0 = init.phi0 * float(rng.uniform(1 - j, 1 + j))
        # jitter gamma on the logit scale so chains stay inside (0, 1)
        g_base = float(np.clip(init.gamma0, 1e-4, 1 - 1e-4))
        gamma0 = float(expit(logit(g_base) + rng.uniform(-2 * j, 2 * j)))

        lo, hi = pr.phi_guard_low, pr.phi_upper
        if not lo < phi0 < hi:
            warnings.warn(f"initial phi {phi0:g} outside prior support; clipping")
            phi0 = float(np.clip(phi0, lo * 1.5, hi * (1 - 1e-6)))
        g = pr.gamma_guard
        if not g < gamma0 < 1 - g:
            warnings.warn(f"initial gamma {gamma0:g} outside support; clipping")
            gamma0 = float(np.clip(gamma0, 1e-4, 1 - 1e-4))
        if tau0 <= 0 or not np.isfinite(tau0):
            warnings.warn(f"initial tau {tau0:g} invalid; using 1.0")
            tau0 = 1.0

        beta0 = np.asarray(init.beta0, dtype=float)
        if beta0.shape != (self.p,):
            raise DataError(f"init.beta0 must have shape ({self.p},); got {beta0.shape}")
        y0 = self.dataset.y.copy()
        if len(self.censored_idx):
            fitted = self.X_c @ beta0
            y0[self.censored_idx] = np.minimum(self.limits_c, fitted)
        return ChainState(
            beta=beta0,
            z_star=np.zeros(self.n_nodes),
            tau=float(tau0),
            phi=float(phi0),
            gamma=float(gamma0),
            y_complete=y0,
            log_step_phi=math.log(cfg.initial_step),
            log_step_gamma=math.log(cfg.initial_step),
        )


class _QCache:
    """Current phi with its precision matrix, logdet and quadratic form."""

    __slots__ = ("phi", "Q", "logdet", "quad_z")

    def __init__(self, phi, Q, logdet, quad_z):
        self.phi = phi
        self.Q = Q
        self.logdet = logdet
        self.quad_z = quad_z


def run_chain(dataset, mesh, fem, priors, config, init, chain_id) -> PosteriorSamples:
    """Build a sampler and run a single chain (convenience wrapper)."""
    return CensoredGibbsSampler(dataset, mesh, fem, priors, config).run_chain(init, chain_id)


def run_chains(dataset, mesh, fem, priors, config, init, workers: int = 1):
    """Run config.n_chains chains; independent streams keyed by chain id.

    With workers > 1 chains run in separate processes; results are identical
    to the sequential path.
    """
    args = [(dataset, mesh, fem, priors, config, init, cid) for cid in range(config.n_chains)]
    if workers > 1 and config.n_chains > 1:
        import concurrent.futures as cf

        with cf.ProcessPoolExecutor(max_workers=min(workers, config.n_chains)) as ex:
            return list(ex.map(_chain_entry, args))
    sampler = CensoredGibbsSampler(dataset, mesh, fem, priors, config)
    return [sampler.run_chain(init, cid) for cid in range(config.n_chains)]


def _chain_entry(packed):
    dataset, mesh, fem, priors, config, init, chain_id = packed
    return run_chain(dataset, mesh, fem, priors, config, init, chain_id)


def gelman_rubin(chains: Sequence[np.ndarray], split: bool = True) -> float:
    """Potential scale reduction factor for one scalar parameter.

    With ``split=True`` each chain is halved first (split-R-hat). The
    estimate is floored at 1, so identical chains give exactly 1.0 in the
    unsplit variant.
    """
    seqs = [np.asarray(c, dtype=float) for c in chains]
    if len(seqs) < 2:
        raise DataError("need at least 2 chains")
    nmin = min(len(s) for s in seqs)
    if nmin < 50:
        raise DataError(f"need at least 50 draws per chain; got {nmin}")
    if split:
        half = nmin // 2
        seqs = [part for s in seqs for part in (s[:half], s[half:2 * half])]
    else:
        seqs = [s[:nmin] for s in seqs]
    arr = np.stack(seqs)
    n = arr.shape[1]
    means = arr.mean(axis=1)
    within = float(arr.var(axis=1, ddof=1).mean())
    b_over_n = float(np.var(means, ddof=1))
    if within <= 0:
        return 1.0 if b_over_n <= 0 else math.inf
    var_hat = (n - 1) / n * within + b_over_n
    return float(math.sqrt(max(var_hat, within) / within))


def rhat_table(samples: Sequence[PosteriorSamples], split: bool = True) -> dict[str, float]:
    """Split R-hat per scalar parameter across chains."""
    keys = samples[0].scalar_draws().keys()
    per_chain = [s.scalar_draws() for s in samples]
    return {k: gelman_rubin([d[k] for d in per_chain], split=split) for k in keys}
