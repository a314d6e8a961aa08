"""Shared fixtures: the worked designs used throughout the suite."""

import numpy as np
import pytest

from hanova.design import Dataset, build_design
from hanova.formula import expand_terms, parse_model

SPLITPLOT_FORMULA = (
    "y ~ row + col + trt + row:col + sub + row:sub + col:sub + trt:sub + row:col:sub"
)


def design_from(model_text, y, columns, aliases=()):
    spec = parse_model(model_text)
    ds = Dataset.from_columns(y, columns)
    return build_design(expand_terms(spec, spec.factors), ds, spec.aliases + tuple(aliases))


def oneway_oracle_design():
    """The hand-checked one-way dataset A:(1,3), B:(5,7), C:(9,11)."""
    return design_from(
        "y ~ a", [1, 3, 5, 7, 9, 11], {"a": ["A", "A", "B", "B", "C", "C"]}
    )


def latin_square_splitplot(y=None, model_text=SPLITPLOT_FORMULA):
    """5x5x2 split-plot Latin square with a cyclic treatment layout."""
    rows, cols, trts, subs = [], [], [], []
    for r in range(5):
        for c in range(5):
            t = (r + c) % 5
            for s in range(2):
                rows.append(r)
                cols.append(c)
                trts.append("ABCDE"[t])
                subs.append(str(s + 1))
    if y is None:
        y = np.arange(50, dtype=float)  # any values; structure tests ignore them
    return design_from(
        model_text, y, {"row": rows, "col": cols, "trt": trts, "sub": subs}
    )


def splitplot_sim(seed, sd_row=2.0, sd_col=2.0, sd_trt=3.0, sd_plot=4.0,
                  sd_sub=1.0, sd_noise=1.0,
                  model_text="y ~ row + col + trt + row:col + sub + row:col:sub"):
    """Simulated split-plot data from the hierarchical model itself."""
    g = np.random.default_rng(seed)
    eff_row = g.normal(0, sd_row, 5)
    eff_col = g.normal(0, sd_col, 5)
    eff_trt = g.normal(0, sd_trt, 5)
    eff_plot = g.normal(0, sd_plot, 25)
    eff_sub = g.normal(0, sd_sub, 2)
    rows, cols, trts, subs, ys = [], [], [], [], []
    for r in range(5):
        for c in range(5):
            t = (r + c) % 5
            for s in range(2):
                rows.append(r)
                cols.append(c)
                trts.append("ABCDE"[t])
                subs.append(str(s + 1))
                ys.append(
                    10.0 + eff_row[r] + eff_col[c] + eff_trt[t]
                    + eff_plot[r * 5 + c] + eff_sub[s] + g.normal(0, sd_noise)
                )
    return design_from(model_text, ys, {"row": rows, "col": cols, "trt": trts, "sub": subs})


def nested_machines_design(y=None):
    """4 treatments x 5 machines each x 6 measurements (fully nested)."""
    trts, machines, meas = [], [], []
    for t in range(4):
        for m in range(5):
            for k in range(6):
                trts.append(f"t{t}")
                machines.append(f"m{t * 5 + m}")  # machines numbered globally
                meas.append(f"r{k}")
    n = len(trts)
    if y is None:
        y = np.zeros(n)
    return design_from(
        "y ~ trt + trt:machine + trt:machine:meas",
        y,
        {"trt": trts, "machine": machines, "meas": meas},
    )


def balanced_oneway(n_groups, reps, sd_between, sd_within, seed, mean=0.0):
    g = np.random.default_rng(seed)
    effects = g.normal(0, sd_between, n_groups)
    y = np.concatenate(
        [mean + effects[j] + g.normal(0, sd_within, reps) for j in range(n_groups)]
    )
    groups = np.repeat([f"g{j}" for j in range(n_groups)], reps)
    return design_from("y ~ g", y, {"g": groups})


WEB_FACTORS = {"to": 4, "frm": 45, "company": 2, "hour": 25, "week": 2}
WEB_FORMULA = "y ~ to*frm*company*hour*week"

# Figure-4 row order for the 4 x 45 x 2 x 25 x 2 factorial.
WEB_DF_EXPECTED = [
    3, 44, 1, 24, 1, 132, 3, 72, 3, 44, 1056, 44, 24, 1, 24, 132, 3168, 132,
    72, 3, 72, 1056, 44, 1056, 24, 3168, 132, 3168, 72, 1056, 3168,
]


def web_factorial_columns():
    grids = np.meshgrid(*[np.arange(v) for v in WEB_FACTORS.values()], indexing="ij")
    return {k: g.ravel() for k, g in zip(WEB_FACTORS, grids)}


@pytest.fixture(scope="session")
def web_design():
    cols = web_factorial_columns()
    n = len(next(iter(cols.values())))
    ds = Dataset(
        np.zeros(n),
        dict(cols),
        {k: [str(i) for i in range(v)] for k, v in WEB_FACTORS.items()},
    )
    spec = parse_model(WEB_FORMULA)
    return build_design(expand_terms(spec, spec.factors), ds)
