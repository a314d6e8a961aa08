"""Shared result containers for the variance-component display.

Quantiles everywhere are the empirical inverse CDF with linear
interpolation (numpy's default), the one quantile rule used across the
package.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class IntervalSummary:
    """Point estimate plus the 50% and 95% interval endpoints."""

    est: float
    q025: float
    q25: float
    q75: float
    q975: float

    @property
    def median_like(self) -> float:
        return self.est


def quantile_summary(draws, est: float | None = None) -> IntervalSummary:
    """Summarize a 1-d array of draws; ``est`` defaults to the median."""
    draws = np.asarray(draws, dtype=float)
    q025, q25, q50, q75, q975 = np.quantile(draws, [0.025, 0.25, 0.5, 0.75, 0.975])
    if est is None:
        est = float(q50)
    return IntervalSummary(float(est), float(q025), float(q25), float(q75), float(q975))


@dataclass(frozen=True)
class VCRow:
    label: str
    df: int
    s: IntervalSummary
    sigma: IntervalSummary | None = None


@dataclass(frozen=True)
class VCSummary:
    """Rows for the variance-component display, in batch order.

    ``point_origin`` records whether points are method-of-moments
    estimates or posterior medians; ``scale_max`` is the display axis
    maximum (at least every 97.5% quantile and point shown).
    """

    rows: tuple
    point_origin: str
    scale_max: float


def nice_axis_max(x: float) -> float:
    """Smallest 2-significant-digit value >= x (1.0 for degenerate input)."""
    if not math.isfinite(x) or x <= 0:
        return 1.0
    exponent = math.floor(math.log10(x))
    step = 10.0 ** (exponent - 1)
    return float(f"{math.ceil(x / step - 1e-12) * step:.2g}")


def _summary_scale_max(rows, include_sigma: bool) -> float:
    hi = 0.0
    for r in rows:
        hi = max(hi, r.s.q975, r.s.est)
        if include_sigma and r.sigma is not None:
            hi = max(hi, r.sigma.q975, r.sigma.est)
    return nice_axis_max(hi)


def make_vc_summary(rows, point_origin: str, include_sigma_in_scale: bool = False) -> VCSummary:
    return VCSummary(tuple(rows), point_origin, _summary_scale_max(rows, include_sigma_in_scale))


def vc_summary_from_moments(moments, design) -> VCSummary:
    """Display rows for a classical run: moments points, simulated intervals."""
    rows = []
    est_sd = np.sqrt(np.maximum(moments.sigma2_hat, 0.0))
    sigma_sd_draws = np.sqrt(np.maximum(moments.sigma2_draws, 0.0))
    for m, batch in enumerate(design.batches):
        s_summary = quantile_summary(moments.s_draws[:, m], est=float(est_sd[m]))
        sig_summary = quantile_summary(sigma_sd_draws[:, m], est=float(est_sd[m]))
        rows.append(VCRow(batch.label, int(design.df[m]), s_summary, sig_summary))
    return make_vc_summary(rows, "moments")
