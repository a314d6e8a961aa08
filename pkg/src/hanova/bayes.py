"""Bayesian path: plain Gibbs and parameter-expanded Gibbs for the
hierarchical ANOVA model, with posterior summaries and chain diagnostics.

The residual batch is treated as observation noise (its coefficients are
the exact-fit residuals at every iteration), all other batches get
exchangeable normal effects with their own variance.  Coefficient updates
are batch-at-a-time exact conditionals in containment order: for indicator
designs each batch's conditional is diagonal once the other batches'
current fits are subtracted, so a sweep costs O(n) per batch.

The parameter-expanded sampler multiplies each batch by an auxiliary scale
``alpha_m`` (flat prior) with ``beta = alpha * gamma`` and
``sigma = |alpha| * tau``; regressing the data on the per-batch predictor
columns built from gamma lets the chain escape the sticking region near
sigma_m = 0.
"""

from __future__ import annotations

import warnings as _warnings
from dataclasses import dataclass, field

import numpy as np

from .classical import MomentsResult, _sweep_estimates, estimate_sigma_moments, ev_matrix
from .design import DesignModel
from .errors import ConfigError, NumericalFailureError
from .numerics import (
    RngStream,
    sample_scaled_inv_chisq,
    sample_trunc_scaled_inv_chisq,
)
from .results import VCRow, VCSummary, make_vc_summary, quantile_summary

_TINY = 1e-300


@dataclass
class HyperPrior:
    """Scaled-inverse-chi-square hyperpriors, one (nu, scale) pair per batch.

    The default ``nu = -1, s0sq = 0`` is the uniform-on-sigma prior.
    """

    nu: np.ndarray
    s0sq: np.ndarray

    def __post_init__(self):
        self.nu = np.asarray(self.nu, dtype=float)
        self.s0sq = np.asarray(self.s0sq, dtype=float)
        if np.any(self.nu < -1):
            raise ConfigError("hyperprior nu must be >= -1")
        if np.any(self.s0sq < 0):
            raise ConfigError("hyperprior scale must be >= 0")

    @classmethod
    def uniform_sigma(cls, m_count: int) -> "HyperPrior":
        return cls(np.full(m_count, -1.0), np.zeros(m_count))

    def is_default(self, m: int) -> bool:
        return self.nu[m] == -1.0 and self.s0sq[m] == 0.0


@dataclass
class PxState:
    gamma0: float
    gamma: list
    alpha: np.ndarray
    tau: np.ndarray  # sd scale


@dataclass
class ChainState:
    beta0: float
    beta: list  # per batch, residual included
    sigma2: np.ndarray
    px: PxState | None = None

    @property
    def sigma(self) -> np.ndarray:
        return np.sqrt(self.sigma2)


@dataclass
class ChainConfig:
    chains: int = 4
    iters: int = 2000
    warmup: int = 1000
    thin: int = 1
    seed: int = 0
    px: bool = True
    sigma_max: float | None = None  # None -> 100 * sd(y) where the guard applies
    save_beta: bool = True

    def validate(self):
        if self.chains < 1:
            raise ConfigError("chains must be >= 1")
        if not (self.iters > self.warmup >= 0):
            raise ConfigError("need iters > warmup >= 0")
        if self.thin < 1:
            raise ConfigError("thin must be >= 1")
        if self.sigma_max is not None and self.sigma_max <= 0:
            raise ConfigError("sigma_max must be positive")


@dataclass
class PosteriorDraws:
    labels: list
    sigma: np.ndarray  # (ndraw, M), sd scale
    s: np.ndarray  # (ndraw, M), sd scale
    beta0: np.ndarray
    beta: list | None  # per batch (ndraw, J_m), or None
    chain_id: np.ndarray
    iteration: np.ndarray
    n_chains: int


@dataclass
class Diagnostics:
    rhat: dict
    ess: dict
    warnings: list = field(default_factory=list)


# --- initialization -------------------------------------------------------


def init_chain(
    design: DesignModel,
    y,
    moments: MomentsResult | None,
    rng: np.random.Generator,
    jitter: bool = True,
) -> ChainState:
    """Starting state adapted from the classical point estimates.

    Zero moment estimates are replaced by a uniform draw on
    ``(0, |V_m - EV_m|]``; nonzero ones are jittered by a per-chain
    Uniform(0.8, 1.25) factor on the sd scale so chains start
    overdispersed.  Coefficients start at their shrunken least-squares
    values.
    """
    y = np.asarray(y, dtype=float)
    if moments is not None:
        estimates = moments.estimates
        v, a, sigma2_hat = moments.v, moments.a, moments.sigma2_hat
    else:
        estimates = _sweep_estimates(design, y)
        v = estimates.v.copy()
        a = ev_matrix(design)
        sigma2_hat = estimate_sigma_moments(v, a)

    m_count = design.m
    ev_hat = a @ sigma2_hat - sigma2_hat
    floor = max(1e-6 * float(np.var(y)), 1e-12)
    sigma2 = np.empty(m_count)
    for m in range(m_count):
        if sigma2_hat[m] > 0:
            factor = rng.uniform(0.8, 1.25) if jitter else 1.0
            sigma2[m] = sigma2_hat[m] * factor**2
        else:
            gap = abs(v[m] - ev_hat[m]) if np.isfinite(v[m]) else 0.0
            if gap <= 0:
                gap = floor
            sigma2[m] = rng.uniform(0.0, gap) + 1e-12

    beta = []
    for m in range(m_count):
        ev = max(ev_hat[m], 0.0)
        denom = ev + sigma2[m]
        lam = 1.0 if denom <= 0 else ev / denom
        beta.append((1.0 - lam) * estimates.beta_hat[m])
    state = ChainState(float(estimates.beta0_hat), beta, sigma2)
    state.beta[design.residual_index] = y - _total_fit(design, state)
    state.px = PxState(
        state.beta0,
        [b.copy() for b in state.beta],
        np.ones(m_count),
        np.sqrt(sigma2),
    )
    return state


def _total_fit(design: DesignModel, state: ChainState) -> np.ndarray:
    fit = np.full(design.n, state.beta0)
    for m, b in enumerate(design.batches):
        if m == design.residual_index:
            continue
        fit += state.beta[m][b.cells]
    return fit


def _sigma2_update(
    j: float,
    sum_sq: float,
    nu: float,
    s0sq: float,
    upper: float | None,
    gen: np.random.Generator,
) -> float | None:
    """Conjugate scaled-inv-chi-square draw; None when the conditional is improper."""
    post_df = j + nu
    if post_df < 1:
        return None
    scale = (nu * s0sq + sum_sq) / post_df
    if upper is not None:
        return sample_trunc_scaled_inv_chisq(post_df, scale, upper, gen)
    return sample_scaled_inv_chisq(post_df, scale, gen)


# --- plain Gibbs ----------------------------------------------------------


def gibbs_step_plain(
    state: ChainState,
    design: DesignModel,
    y,
    prior: HyperPrior,
    rng: np.random.Generator,
    sigma2_upper: np.ndarray | None = None,
) -> ChainState:
    """One sweep: all coefficient batches, then every variance.

    ``sigma2_upper`` optionally caps individual variance draws (the
    impropriety guard for df <= 1 batches); entries of +inf mean no cap.
    The state is updated in place and returned.
    """
    y = np.asarray(y, dtype=float)
    res = design.residual_index
    sig2_res = max(float(state.sigma2[res]), _TINY)

    fit = _total_fit(design, state)

    # Grand mean, flat prior.
    r_mean = float(np.mean(y - (fit - state.beta0)))
    new_beta0 = rng.normal(r_mean, np.sqrt(sig2_res / design.n))
    fit += new_beta0 - state.beta0
    state.beta0 = new_beta0

    for m in design.topo_order():
        if m == res:
            continue
        b = design.batches[m]
        contrib = state.beta[m][b.cells]
        r = y - (fit - contrib)
        cell_sums = np.bincount(b.cells, weights=r, minlength=b.j)
        prec = b.counts / sig2_res + 1.0 / max(float(state.sigma2[m]), _TINY)
        mean = (cell_sums / sig2_res) / prec
        new = mean + rng.standard_normal(b.j) / np.sqrt(prec)
        fit += new[b.cells] - contrib
        state.beta[m] = new

    state.beta[res] = y - fit

    for m in range(design.m):
        sum_sq = float(state.beta[m] @ state.beta[m])
        upper = None
        if sigma2_upper is not None and np.isfinite(sigma2_upper[m]):
            upper = float(sigma2_upper[m])
        draw = _sigma2_update(design.batches[m].j, sum_sq, prior.nu[m], prior.s0sq[m], upper, rng)
        if draw is not None:
            state.sigma2[m] = draw
    return state


# --- parameter-expanded Gibbs ---------------------------------------------


def gibbs_step_px(
    state: ChainState,
    design: DesignModel,
    y,
    prior: HyperPrior,
    rng: np.random.Generator,
    sigma2_upper: np.ndarray | None = None,
) -> ChainState:
    """One parameter-expanded sweep: gamma, then alpha, then tau.

    ``beta = alpha * gamma`` and ``sigma = |alpha| * tau`` are recomputed
    and stored after every step, so the reconstruction identities hold
    exactly on the stored state.
    """
    if state.px is None:
        raise NumericalFailureError("PX step requires a state initialized with px fields")
    y = np.asarray(y, dtype=float)
    px = state.px
    res = design.residual_index
    m_count = design.m
    sig2_res = max(float(state.sigma2[res]), _TINY)

    active = [m for m in design.topo_order() if m != res]

    fit = np.full(design.n, px.gamma0)
    for m in active:
        fit += px.alpha[m] * px.gamma[m][design.batches[m].cells]

    # gamma0 (grand mean; its alpha is fixed at 1)
    r_mean = float(np.mean(y - (fit - px.gamma0)))
    new_gamma0 = rng.normal(r_mean, np.sqrt(sig2_res / design.n))
    fit += new_gamma0 - px.gamma0
    px.gamma0 = new_gamma0

    # gamma sweep with alpha-scaled design columns
    for m in active:
        b = design.batches[m]
        al = float(px.alpha[m])
        contrib = al * px.gamma[m][b.cells]
        r = y - (fit - contrib)
        cell_sums = np.bincount(b.cells, weights=r, minlength=b.j)
        tau2 = max(float(px.tau[m]) ** 2, _TINY)
        prec = (al * al) * b.counts / sig2_res + 1.0 / tau2
        mean = (al * cell_sums / sig2_res) / prec
        new = mean + rng.standard_normal(b.j) / np.sqrt(prec)
        fit += al * (new[b.cells] - px.gamma[m][b.cells])
        px.gamma[m] = new

    # alpha: flat-prior regression of (y - gamma0) on the M-1 built predictors
    if active:
        z = np.stack([px.gamma[m][design.batches[m].cells] for m in active], axis=1)
        ztz = z.T @ z
        zty = z.T @ (y - px.gamma0)
        try:
            chol = np.linalg.cholesky(ztz)
        except np.linalg.LinAlgError as exc:
            bad = design.batches[active[0]].label
            raise NumericalFailureError(
                "alpha update covariance is not positive definite", batch=bad
            ) from exc
        mean = np.linalg.solve(ztz, zty)
        draw = np.linalg.solve(chol.T, rng.standard_normal(len(active)))
        alpha_new = mean + np.sqrt(sig2_res) * draw
        for idx, m in enumerate(active):
            px.alpha[m] = alpha_new[idx]

    # tau, with the truncation guard mapped through alpha
    for m in active:
        b = design.batches[m]
        sum_sq = float(px.gamma[m] @ px.gamma[m])
        upper = None
        if sigma2_upper is not None and np.isfinite(sigma2_upper[m]):
            asq = max(px.alpha[m] ** 2, _TINY)
            upper = float(sigma2_upper[m]) / asq
        draw = _sigma2_update(b.j, sum_sq, prior.nu[m], prior.s0sq[m], upper, rng)
        if draw is not None:
            px.tau[m] = float(np.sqrt(draw))

    # reconstruct (beta, sigma), then refresh the residual batch and its scale
    state.beta0 = px.gamma0
    fit = np.full(design.n, px.gamma0)
    for m in active:
        state.beta[m] = px.alpha[m] * px.gamma[m]
        fit += state.beta[m][design.batches[m].cells]
        sigma_m = abs(px.alpha[m]) * px.tau[m]
        state.sigma2[m] = sigma_m * sigma_m

    state.beta[res] = y - fit
    rss = float(state.beta[res] @ state.beta[res])
    upper = None
    if sigma2_upper is not None and np.isfinite(sigma2_upper[res]):
        upper = float(sigma2_upper[res])
    draw = _sigma2_update(design.batches[res].j, rss, prior.nu[res], prior.s0sq[res], upper, rng)
    if draw is not None:
        state.sigma2[res] = draw
    px.alpha[res] = 1.0
    px.gamma[res] = state.beta[res]
    px.tau[res] = float(np.sqrt(state.sigma2[res]))
    return state


# --- chain driver ----------------------------------------------------------


def finite_sd(design: DesignModel, m: int, beta: np.ndarray) -> float:
    """Finite-population sd of a batch's coefficients (0 when df is 0)."""
    df = int(design.df[m])
    if df < 1:
        return 0.0
    proj = design.project_batch_coefficients(m, beta)
    return float(np.sqrt(proj @ proj / df))


def run_chains(
    design: DesignModel,
    y=None,
    prior: HyperPrior | None = None,
    config: ChainConfig | None = None,
    moments: MomentsResult | None = None,
) -> tuple[PosteriorDraws, Diagnostics]:
    """Run the configured chains and collect post-warmup draws.

    Chains are independent given their (seed, chain-id) streams, so the
    result depends only on the seed and configuration, never on scheduling.
    """
    if y is None:
        y = design.dataset.y
    y = np.asarray(y, dtype=float)
    config = config or ChainConfig()
    config.validate()
    prior = prior or HyperPrior.uniform_sigma(design.m)
    if prior.nu.shape != (design.m,):
        raise ConfigError(f"prior must have one (nu, s0sq) pair per batch ({design.m})")

    warn_list = []
    sigma_max = config.sigma_max if config.sigma_max is not None else 100.0 * float(np.std(y))
    sigma2_upper = np.full(design.m, np.inf)
    for m in range(design.m):
        if design.df[m] == 1 and prior.is_default(m):
            sigma2_upper[m] = sigma_max**2
            warn_list.append(
                f"ImproperPosterior: batch {design.batches[m].label!r} has 1 degree of "
                f"freedom under the uniform prior; the posterior for its sigma is "
                f"improper and draws are truncated at sigma_max = {sigma_max:.6g}"
            )
        elif design.df[m] == 0:
            warn_list.append(
                f"DegenerateBatch: batch {design.batches[m].label!r} has 0 degrees of "
                "freedom; its variance is not updated"
            )
    for w in warn_list:
        _warnings.warn(w)
    if not np.any(np.isfinite(sigma2_upper)):
        sigma2_upper = None

    if moments is None:
        estimates = _sweep_estimates(design, y)
        a = ev_matrix(design)
        sigma2_hat = estimate_sigma_moments(estimates.v, a)
        moments = MomentsResult(
            estimates.v.copy(), a, sigma2_hat,
            np.zeros((0, design.m)), np.zeros((0, design.m)), estimates,
        )

    n_keep = (config.iters - config.warmup + config.thin - 1) // config.thin
    total = n_keep * config.chains
    m_count = design.m
    sigma_draws = np.zeros((total, m_count))
    s_draws = np.zeros((total, m_count))
    beta0_draws = np.zeros(total)
    beta_draws = (
        [np.zeros((total, b.j)) for b in design.batches] if config.save_beta else None
    )
    chain_ids = np.zeros(total, dtype=np.int64)
    iterations = np.zeros(total, dtype=np.int64)

    step = gibbs_step_px if config.px else gibbs_step_plain
    # Chains live under stream id 2 so they never share a stream with the
    # moments simulation (id 1) run from the same seed.
    base = RngStream(config.seed).child(2)
    row = 0
    for c in range(config.chains):
        gen = base.child(c).generator()
        state = init_chain(design, y, moments, gen)
        if not config.px:
            state.px = None
        for it in range(config.iters):
            step(state, design, y, prior, gen, sigma2_upper=sigma2_upper)
            if it < config.warmup or (it - config.warmup) % config.thin:
                continue
            sigma_draws[row] = np.sqrt(state.sigma2)
            for m in range(m_count):
                s_draws[row, m] = finite_sd(design, m, state.beta[m])
            beta0_draws[row] = state.beta0
            if beta_draws is not None:
                for m in range(m_count):
                    beta_draws[m][row] = state.beta[m]
            chain_ids[row] = c
            iterations[row] = it
            row += 1

    draws = PosteriorDraws(
        design.labels, sigma_draws, s_draws, beta0_draws, beta_draws,
        chain_ids, iterations, config.chains,
    )

    rhat = {}
    ess = {}
    for m, label in enumerate(design.labels):
        for name, series in ((f"sigma[{label}]", sigma_draws[:, m]), (f"s[{label}]", s_draws[:, m])):
            per_chain = series.reshape(config.chains, n_keep)
            rhat[name] = split_rhat(per_chain)
            ess[name] = effective_sample_size(per_chain)
    return draws, Diagnostics(rhat, ess, warn_list)


def summarize_posterior(draws: PosteriorDraws, design: DesignModel) -> VCSummary:
    """Posterior medians with 50%/95% intervals for sigma_m and s_m."""
    rows = []
    for m, label in enumerate(draws.labels):
        rows.append(
            VCRow(
                label,
                int(design.df[m]),
                quantile_summary(draws.s[:, m]),
                quantile_summary(draws.sigma[:, m]),
            )
        )
    return make_vc_summary(rows, "posterior_median")


# --- diagnostics ------------------------------------------------------------


def split_rhat(chains: np.ndarray) -> float:
    """Split-chain potential scale reduction factor.

    ``chains`` has shape (n_chains, n_iter); each chain is split in half
    before the classic between/within comparison.  Constant input gives 1.
    """
    chains = np.asarray(chains, dtype=float)
    half = chains.shape[1] // 2
    if half < 2:
        return float("nan")
    seqs = np.concatenate([chains[:, :half], chains[:, half: 2 * half]], axis=0)
    w = float(np.mean(np.var(seqs, axis=1, ddof=1)))
    means = np.mean(seqs, axis=1)
    b = half * float(np.var(means, ddof=1))
    if w <= 0:
        return 1.0
    var_plus = (half - 1) / half * w + b / half
    return float(np.sqrt(var_plus / w))


def effective_sample_size(chains: np.ndarray) -> float:
    """Multi-chain effective sample size with Geyer's positive-pair truncation."""
    chains = np.asarray(chains, dtype=float)
    m, n = chains.shape
    if n < 4:
        return float(m * n)
    w = float(np.mean(np.var(chains, axis=1, ddof=1)))
    means = np.mean(chains, axis=1)
    var_plus = (n - 1) / n * w
    if m > 1:
        var_plus += float(np.var(means, ddof=1))
    if var_plus <= 0:
        return float(m * n)
    centered = chains - means[:, None]
    acov = np.zeros(n)
    for t in range(n):
        acov[t] = float(np.mean(np.sum(centered[:, t:] * centered[:, : n - t], axis=1) / n))
    rho = 1.0 - (w - acov) / var_plus
    rho[0] = 1.0
    total = 0.0
    t = 1
    while t + 1 < n:
        pair = rho[t] + rho[t + 1]
        if pair <= 0:
            break
        total += pair
        t += 2
    ess = m * n / (1.0 + 2.0 * total)
    return float(min(ess, m * n))
