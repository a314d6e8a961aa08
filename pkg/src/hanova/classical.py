"""Classical path: least-squares ANOVA, moments estimates, simulated intervals.

Balanced designs only.  Effect estimates come from the sequential cell-mean
sweep (grand mean first, then batches in containment order); for balanced
designs this is the exact orthogonal decomposition, so the batch sums of
squares add up to the total sum of squares.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .design import DesignModel, check_balance, sweep_decompose
from .errors import BalanceError, SingularMatrixError
from .numerics import RngStream, f_upper_tail, sample_chisq, solve_linear


@dataclass
class BatchEstimates:
    """Least-squares effects and the derived per-batch summaries.

    ``ss`` is the observation-sum form sum_i beta_hat(i)^2; ``ss_coef`` is
    the balanced-design coefficient form (n/J_m) * sum_j beta_hat_j^2.  The
    two agree on balanced designs.  ``v`` is the raw row variance
    sum_j beta_hat_j^2 / df_m.  Rows with df 0 get NaN summaries.
    """

    beta0_hat: float
    beta_hat: list
    ss: np.ndarray
    ss_coef: np.ndarray
    ms: np.ndarray
    v: np.ndarray
    residual_index: int


@dataclass(frozen=True)
class TableRow:
    label: str
    df: int
    ss: float
    ms: float
    f: float | None
    p: float | None


@dataclass
class ClassicalTable:
    rows: list
    residual_index: int

    @classmethod
    def from_components(cls, labels, dfs, sss, residual_index=None) -> "ClassicalTable":
        """Build a table from given (label, df, SS) rows, recomputing MS/F/p.

        The F denominator is the residual row's MS (the bottom row by
        default), matching the all-rows-over-the-error-row display
        convention.
        """
        labels = list(labels)
        dfs = [int(d) for d in dfs]
        sss = [float(s) for s in sss]
        if residual_index is None:
            residual_index = len(labels) - 1
        ms = [s / d if d > 0 else float("nan") for s, d in zip(sss, dfs)]
        denom = ms[residual_index]
        rows = []
        for i, (lab, d, s) in enumerate(zip(labels, dfs, sss)):
            if i == residual_index or d <= 0:
                rows.append(TableRow(lab, d, s, ms[i], None, None))
                continue
            f, p = _f_and_p(s, ms[i], d, denom, dfs[residual_index])
            rows.append(TableRow(lab, d, s, ms[i], f, p))
        return cls(rows, residual_index)


def _f_and_p(ss, ms, df, denom, df_denom):
    if ss == 0.0:
        return 0.0, 1.0
    if not np.isfinite(denom) or denom <= 0.0:
        return float("inf"), 0.0
    f = ms / denom
    return f, f_upper_tail(f, df, df_denom)


def fit_effects(design: DesignModel, y=None) -> BatchEstimates:
    """Least-squares effects by sequential sweep; balanced designs only."""
    if y is None:
        y = design.dataset.y
    if not design.balanced:
        report = check_balance(design)
        detail = f": {report.offending[0]}, {report.offending[1]}" if report.offending else ""
        raise BalanceError("classical estimation requires a balanced design" + detail)
    return _sweep_estimates(design, np.asarray(y, dtype=float))


def _sweep_estimates(design: DesignModel, y: np.ndarray) -> BatchEstimates:
    """The sweep itself, without the balance gate (Bayes init reuses it)."""
    mean, betas, _ = sweep_decompose(design, y)
    m_count = design.m
    n = design.n
    ss = np.zeros(m_count)
    ss_coef = np.zeros(m_count)
    ms = np.full(m_count, np.nan)
    v = np.full(m_count, np.nan)
    for m, b in enumerate(design.batches):
        beta = betas[m]
        ss[m] = float(np.sum(b.counts * beta**2))
        ss_coef[m] = (n / b.j) * float(np.sum(beta**2))
        if design.df[m] > 0:
            ms[m] = ss[m] / design.df[m]
            v[m] = float(np.sum(beta**2)) / design.df[m]
    return BatchEstimates(mean, betas, ss, ss_coef, ms, v, design.residual_index)


def anova_table(estimates: BatchEstimates, design: DesignModel) -> ClassicalTable:
    """Classical display table; every F is taken against the residual MS."""
    res = estimates.residual_index
    denom = estimates.ms[res]
    df_denom = int(design.df[res])
    rows = []
    for m, b in enumerate(design.batches):
        d = int(design.df[m])
        if m == res or d <= 0:
            rows.append(TableRow(b.label, d, estimates.ss[m], estimates.ms[m], None, None))
            continue
        f, p = _f_and_p(estimates.ss[m], estimates.ms[m], d, denom, df_denom)
        rows.append(TableRow(b.label, d, estimates.ss[m], estimates.ms[m], f, p))
    return ClassicalTable(rows, res)


def ev_matrix(design: DesignModel) -> np.ndarray:
    """Expected-row-variance coefficients: E V_m = (A sigma^2)_m.

    ``A[m, m] = 1`` and ``A[m, k] = J_m / J_k`` for every batch k whose
    span contains batch m's span; 0 otherwise.
    """
    m_count = design.m
    j = design.j.astype(float)
    a = np.eye(m_count)
    for m in range(m_count):
        for k in design.containment[m]:
            a[m, k] = j[m] / j[k]
    return a


def estimate_sigma_moments(v: np.ndarray, a: np.ndarray) -> np.ndarray:
    """Truncated method-of-moments solution of ``V = A sigma^2``.

    Works from the bottom of the table upwards (the dependency order is
    read off A's sparsity), truncating each estimate at zero and feeding
    the truncated values into the rows above.  Rows with non-finite V
    (nothing estimable) get 0.  When no truncation binds, the result
    equals ``solve_linear(a, v)`` exactly.
    """
    v = np.asarray(v, dtype=float)
    a = np.asarray(a, dtype=float)
    m_count = v.size
    deps = [set(np.nonzero(a[i])[0]) - {i} for i in range(m_count)]
    done: set = set()
    order = []
    while len(order) < m_count:
        ready = [i for i in range(m_count) if i not in done and deps[i] <= done]
        if not ready:
            raise SingularMatrixError("EV coefficient matrix has cyclic dependencies")
        order.extend(ready)
        done.update(ready)
    sigma2 = np.zeros(m_count)
    for i in order:
        if not np.isfinite(v[i]):
            sigma2[i] = 0.0
            continue
        ev = sum(a[i, k] * sigma2[k] for k in deps[i])
        sigma2[i] = max(0.0, v[i] - ev)
    return sigma2


def simulate_sigma_intervals(
    v: np.ndarray,
    a: np.ndarray,
    design: DesignModel,
    n_draws: int = 1000,
    rng: RngStream | None = None,
) -> np.ndarray:
    """Simulation draws of the superpopulation variances.

    Each draw scales every raw row variance by an independent
    df_m / chisq(df_m) factor, solves ``V = A sigma^2``, and clamps the
    solution to be nonnegative.  Returns an (n_draws, M) array of
    sigma^2 draws; batches with df < 1 are pinned at 0.  Draw d depends
    only on ``rng.child(d)``, so results are independent of how draws
    are chunked or parallelized.
    """
    if n_draws < 1:
        raise ValueError("n_draws must be >= 1")
    if rng is None:
        rng = RngStream(0)
    v = np.asarray(v, dtype=float)
    df = design.df
    valid = (df >= 1) & np.isfinite(v)
    idx = np.where(valid)[0]
    a_red = a[np.ix_(idx, idx)]
    draws = np.zeros((n_draws, v.size))
    for d in range(n_draws):
        gen = rng.child(d).generator()
        mult = np.array([df[i] / sample_chisq(int(df[i]), gen) for i in idx])
        sol = solve_linear(a_red, v[idx] * mult)
        draws[d, idx] = np.maximum(sol, 0.0)
    return draws


def infer_finite_population(
    sigma2_draws: np.ndarray,
    design: DesignModel,
    estimates: BatchEstimates,
    rng: RngStream | None = None,
) -> np.ndarray:
    """Draws of the finite-population standard deviations s_m.

    For each sigma draw the coefficients are sampled from their
    conditional normal given the data: per-coefficient shrinkage
    ``lambda = EV / (EV + sigma^2)`` applied to the least-squares
    estimate, conditional sd ``sqrt(lambda sigma^2)``; s_m is then the
    constrained coefficient standard deviation of the sampled vector.
    Returns an (n_draws, M) array on the sd scale.
    """
    if rng is None:
        rng = RngStream(0)
    sigma2_draws = np.asarray(sigma2_draws, dtype=float)
    n_draws, m_count = sigma2_draws.shape
    a = ev_matrix(design)
    df = design.df
    s_draws = np.zeros((n_draws, m_count))
    for d in range(n_draws):
        gen = rng.child(d).generator()
        sig2 = sigma2_draws[d]
        ev = a @ sig2 - sig2
        for m in range(m_count):
            if df[m] < 1:
                continue
            denom = ev[m] + sig2[m]
            lam = 1.0 if denom <= 0.0 else ev[m] / denom
            mean = (1.0 - lam) * estimates.beta_hat[m]
            sd = float(np.sqrt(max(lam * sig2[m], 0.0)))
            if sd > 0.0:
                beta = mean + sd * gen.standard_normal(design.batches[m].j)
            else:
                beta = mean
            proj = design.project_batch_coefficients(m, beta)
            s_draws[d, m] = float(np.sqrt(proj @ proj / df[m]))
    return s_draws


@dataclass
class MomentsResult:
    """Everything the classical variance-component path produces."""

    v: np.ndarray
    a: np.ndarray
    sigma2_hat: np.ndarray
    sigma2_draws: np.ndarray  # (n_draws, M)
    s_draws: np.ndarray  # (n_draws, M), sd scale
    estimates: BatchEstimates
    notes: list = field(default_factory=list)


def run_moments(
    design: DesignModel,
    y=None,
    n_draws: int = 1000,
    rng: RngStream | None = None,
) -> MomentsResult:
    """Fit, solve the moments system, and simulate both interval families."""
    if rng is None:
        rng = RngStream(0)
    estimates = fit_effects(design, y)
    v = estimates.v.copy()
    a = ev_matrix(design)
    notes = []
    for m in np.where(design.df < 1)[0]:
        notes.append(
            f"batch {design.batches[m].label!r} has 0 degrees of freedom; "
            "nothing is estimable and its variance is reported as 0"
        )
        warnings.warn(notes[-1])
    sigma2_hat = estimate_sigma_moments(v, a)
    sigma2_draws = simulate_sigma_intervals(v, a, design, n_draws, rng.child(0))
    s_draws = infer_finite_population(sigma2_draws, design, estimates, rng.child(1))
    return MomentsResult(v, a, sigma2_hat, sigma2_draws, s_draws, estimates, notes)
