"""Rendering and serialization: the classical table, the variance-component
display (fixed-width text and deterministic SVG), JSON/CSV exports, and an
optional matplotlib figure.

Every renderer is a pure function of its inputs; the same values always
produce byte-identical output.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from .classical import ClassicalTable, MomentsResult
from .design import DesignModel
from .errors import SerializationError
from .results import VCSummary

AXIS_CHARS = 60


# --- classical table ---------------------------------------------------


def _fmt2(x) -> str:
    if x is None or (isinstance(x, float) and not math.isfinite(x)):
        return ""
    return f"{x:.2f}"


def render_classical_table(table: ClassicalTable) -> str:
    """Fixed-width Source/Df/SS/MS/F/p table; the residual row has no F or p."""
    header = ("Source", "Df", "SS", "MS", "F", "p")
    cells = [header]
    for row in table.rows:
        cells.append(
            (row.label, str(row.df), _fmt2(row.ss), _fmt2(row.ms), _fmt2(row.f), _fmt2(row.p))
        )
    widths = [max(len(r[i]) for r in cells) for i in range(6)]
    lines = []
    for r in cells:
        lead = r[0].ljust(widths[0])
        rest = "  ".join(r[i].rjust(widths[i]) for i in range(1, 6))
        lines.append((lead + "  " + rest).rstrip())
    return "\n".join(lines) + "\n"


# --- variance-component display ------------------------------------------


def _axis_pos(x: float, scale_max: float, width: int) -> int:
    if scale_max <= 0:
        return 0
    pos = int(round(x / scale_max * (width - 1)))
    return min(max(pos, 0), width - 1)


def render_vc_display(summary: VCSummary, fmt: str = "text") -> str:
    """The new-table display: one row per batch, point + 50%/95% bars for s_m.

    ``fmt`` is ``"text"`` (fixed 60-character axis) or ``"svg"``
    (deterministic coordinates, byte-identical for equal input).
    """
    if fmt == "text":
        return _render_vc_text(summary)
    if fmt == "svg":
        return _render_vc_svg(summary)
    raise ValueError(f"unknown display format {fmt!r}")


def _render_vc_text(summary: VCSummary) -> str:
    label_w = max([len("Source")] + [len(r.label) for r in summary.rows])
    df_w = max([len("df")] + [len(str(r.df)) for r in summary.rows])
    head = (
        "Source".ljust(label_w)
        + "  "
        + "df".rjust(df_w)
        + "  "
        + f"s_m point, 50% (=) and 95% (-) intervals, axis 0 to {summary.scale_max:g}"
    )
    lines = [head]
    for r in summary.rows:
        axis = [" "] * AXIS_CHARS
        lo95 = _axis_pos(r.s.q025, summary.scale_max, AXIS_CHARS)
        hi95 = _axis_pos(r.s.q975, summary.scale_max, AXIS_CHARS)
        for i in range(lo95, hi95 + 1):
            axis[i] = "-"
        lo50 = _axis_pos(r.s.q25, summary.scale_max, AXIS_CHARS)
        hi50 = _axis_pos(r.s.q75, summary.scale_max, AXIS_CHARS)
        for i in range(lo50, hi50 + 1):
            axis[i] = "="
        axis[_axis_pos(r.s.est, summary.scale_max, AXIS_CHARS)] = "o"
        lines.append(
            r.label.ljust(label_w) + "  " + str(r.df).rjust(df_w) + "  |" + "".join(axis) + "|"
        )
    return "\n".join(lines) + "\n"


def _n(x: float) -> str:
    return f"{x:.2f}"


def _render_vc_svg(summary: VCSummary) -> str:
    label_w = max([len(r.label) for r in summary.rows] + [6])
    x_label = 8.0
    x_df = x_label + 7.2 * label_w + 28.0
    x0 = x_df + 24.0
    x1 = x0 + 420.0
    row_h = 18.0
    top = 34.0
    height = top + row_h * len(summary.rows) + 30.0
    width = x1 + 20.0

    def u(x: float) -> float:
        return x0 + (x1 - x0) * min(max(x / summary.scale_max, 0.0), 1.0)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_n(width)}" '
        f'height="{_n(height)}" viewBox="0 0 {_n(width)} {_n(height)}">',
        "<style>text{font-family:monospace;font-size:12px;fill:#000;}</style>",
        f'<text x="{_n(x_label)}" y="16">Source</text>',
        f'<text x="{_n(x_df)}" y="16" text-anchor="end">df</text>',
        f'<text x="{_n(x0)}" y="16">Estimated sd of effects (point, 50% and 95% intervals)</text>',
    ]
    for i, r in enumerate(summary.rows):
        y = top + row_h * i + row_h / 2.0
        parts.append(f'<text x="{_n(x_label)}" y="{_n(y + 4)}">{_escape(r.label)}</text>')
        parts.append(f'<text x="{_n(x_df)}" y="{_n(y + 4)}" text-anchor="end">{r.df}</text>')
        parts.append(
            f'<line x1="{_n(u(r.s.q025))}" y1="{_n(y)}" x2="{_n(u(r.s.q975))}" '
            f'y2="{_n(y)}" stroke="#000" stroke-width="1"/>'
        )
        parts.append(
            f'<line x1="{_n(u(r.s.q25))}" y1="{_n(y)}" x2="{_n(u(r.s.q75))}" '
            f'y2="{_n(y)}" stroke="#000" stroke-width="4"/>'
        )
        parts.append(f'<circle cx="{_n(u(r.s.est))}" cy="{_n(y)}" r="3" fill="#000"/>')
    y_axis = top + row_h * len(summary.rows) + 8.0
    parts.append(
        f'<line x1="{_n(x0)}" y1="{_n(y_axis)}" x2="{_n(x1)}" y2="{_n(y_axis)}" '
        'stroke="#000" stroke-width="1"/>'
    )
    parts.append(f'<text x="{_n(x0)}" y="{_n(y_axis + 14)}">0</text>')
    parts.append(
        f'<text x="{_n(x1)}" y="{_n(y_axis + 14)}" text-anchor="end">{summary.scale_max:g}</text>'
    )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _escape(text: str) -> str:
    return (
        str(text)
        .replace("&", "&amp;")
        .replace("<", "&lt;")
        .replace(">", "&gt;")
        .replace('"', "&quot;")
    )


def render_vc_figure(summary: VCSummary, path: str) -> None:
    """Render the display with matplotlib (png/pdf/svg chosen by extension)."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    n = len(summary.rows)
    fig, ax = plt.subplots(figsize=(7.5, 0.34 * n + 1.2))
    ys = list(range(n, 0, -1))
    for y, r in zip(ys, summary.rows):
        ax.hlines(y, r.s.q025, r.s.q975, color="black", lw=1)
        ax.hlines(y, r.s.q25, r.s.q75, color="black", lw=3.5)
        ax.plot([r.s.est], [y], "o", color="black", ms=4)
    ax.set_yticks(ys)
    ax.set_yticklabels([f"{r.label}  (df {r.df})" for r in summary.rows], fontsize=8)
    ax.set_xlim(0, summary.scale_max)
    ax.set_ylim(0.3, n + 0.7)
    ax.set_xlabel("estimated sd of effects")
    for side in ("top", "right", "left"):
        ax.spines[side].set_visible(False)
    ax.tick_params(left=False)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


# --- machine-readable exports ---------------------------------------------


@dataclass
class RunResult:
    """Bundle of everything a single CLI run produced."""

    model_text: str
    method: str
    seed: int
    design: DesignModel
    table: ClassicalTable | None = None
    moments: MomentsResult | None = None
    vc: VCSummary | None = None
    draws_meta: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)


def _round10(x):
    """Quantize to 10 significant decimal digits; None/non-finite become None."""
    if x is None:
        return None
    x = float(x)
    if not math.isfinite(x):
        return None
    return float(f"{x:.10g}")


def _interval_payload(summary) -> dict:
    return {
        "est": _round10(summary.est),
        "q025": _round10(summary.q025),
        "q25": _round10(summary.q25),
        "q75": _round10(summary.q75),
        "q975": _round10(summary.q975),
    }


def make_json_payload(run: RunResult) -> dict:
    batches = []
    vc_rows = {r.label: r for r in run.vc.rows} if run.vc is not None else {}
    table_rows = {r.label: r for r in run.table.rows} if run.table is not None else {}
    for m, batch in enumerate(run.design.batches):
        entry = {
            "label": batch.label,
            "J": int(batch.j),
            "df": int(run.design.df[m]),
        }
        trow = table_rows.get(batch.label)
        if trow is not None:
            entry["ss"] = _round10(trow.ss)
            entry["ms"] = _round10(trow.ms)
            entry["f"] = _round10(trow.f)
            entry["p"] = _round10(trow.p)
        vrow = vc_rows.get(batch.label)
        if vrow is not None:
            if vrow.sigma is not None:
                entry["sigma"] = _interval_payload(vrow.sigma)
            entry["s"] = _interval_payload(vrow.s)
        batches.append(entry)
    payload = {
        "model": run.model_text,
        "method": run.method,
        "seed": int(run.seed),
        "draws_meta": run.draws_meta,
        "batches": batches,
    }
    if run.vc is not None:
        payload["point_origin"] = run.vc.point_origin
        payload["scale_max"] = _round10(run.vc.scale_max)
    if run.warnings:
        payload["warnings"] = list(run.warnings)
    return payload


def write_json(run: RunResult) -> bytes:
    try:
        text = json.dumps(make_json_payload(run), indent=2, allow_nan=False)
    except (TypeError, ValueError) as exc:
        raise SerializationError(str(exc)) from exc
    return (text + "\n").encode("utf-8")


def _csv_num(x) -> str:
    if x is None or (isinstance(x, float) and not math.isfinite(x)):
        return ""
    return f"{float(x):.10g}"


def write_csv(run: RunResult) -> str:
    """Delimited per-batch summary mirroring the JSON payload."""
    cols = [
        "label", "J", "df", "ss", "ms", "f", "p",
        "sigma_est", "sigma_q025", "sigma_q25", "sigma_q75", "sigma_q975",
        "s_est", "s_q025", "s_q25", "s_q75", "s_q975",
    ]
    lines = [",".join(cols)]
    for entry in make_json_payload(run)["batches"]:
        sigma = entry.get("sigma") or {}
        s = entry.get("s") or {}
        row = [
            entry["label"], str(entry["J"]), str(entry["df"]),
            _csv_num(entry.get("ss")), _csv_num(entry.get("ms")),
            _csv_num(entry.get("f")), _csv_num(entry.get("p")),
            _csv_num(sigma.get("est")), _csv_num(sigma.get("q025")),
            _csv_num(sigma.get("q25")), _csv_num(sigma.get("q75")),
            _csv_num(sigma.get("q975")),
            _csv_num(s.get("est")), _csv_num(s.get("q025")),
            _csv_num(s.get("q25")), _csv_num(s.get("q75")),
            _csv_num(s.get("q975")),
        ]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"
