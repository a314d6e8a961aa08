"""hanova: hierarchical analysis of variance.

Given a dataset and a batching of effects into sources of variation, the
package produces the classical ANOVA table, method-of-moments variance
component estimates with simulation-based uncertainty intervals, and fully
Bayesian inference via plain or parameter-expanded Gibbs sampling, plus a
graphical variance-component display rendered as text or SVG.
"""

from . import errors
from .bayes import (
    ChainConfig,
    ChainState,
    Diagnostics,
    HyperPrior,
    PosteriorDraws,
    gibbs_step_plain,
    gibbs_step_px,
    init_chain,
    run_chains,
    summarize_posterior,
)
from .classical import (
    BatchEstimates,
    ClassicalTable,
    MomentsResult,
    anova_table,
    estimate_sigma_moments,
    ev_matrix,
    fit_effects,
    infer_finite_population,
    run_moments,
    simulate_sigma_intervals,
)
from .dataio import read_csv
from .design import (
    BalanceReport,
    Batch,
    Dataset,
    DesignModel,
    build_design,
    check_balance,
    effective_df,
)
from .formula import (
    AliasDecl,
    ModelSpec,
    Term,
    expand_terms,
    parse_alias_option,
    parse_model,
    render_model,
)
from .numerics import (
    RngStream,
    f_upper_tail,
    project_constrained,
    sample_chisq,
    sample_normal,
    sample_scaled_inv_chisq,
    solve_linear,
)
from .report import (
    RunResult,
    render_classical_table,
    render_vc_display,
    render_vc_figure,
    write_csv,
    write_json,
)
from .results import IntervalSummary, VCRow, VCSummary, vc_summary_from_moments

__version__ = "0.1.0"
