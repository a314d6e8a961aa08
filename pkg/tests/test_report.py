import numpy as np
import pytest

from conftest import balanced_oneway, oneway_oracle_design
from hanova import classical
from hanova.classical import ClassicalTable
from hanova.dataio import read_csv
from hanova.errors import EmptyFileError, MissingColumnError, UnparseableValueError
from hanova.numerics import RngStream
from hanova.report import (
    RunResult,
    make_json_payload,
    render_classical_table,
    render_vc_display,
    render_vc_figure,
    write_csv,
    write_json,
)
from hanova.results import (
    IntervalSummary,
    VCRow,
    make_vc_summary,
    nice_axis_max,
    vc_summary_from_moments,
)


class TestReadCsv:
    def test_three_rows(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("y,a\n1.5,x\n2.5,y\n3.5,x\n")
        ds = read_csv(p, "y", ["a"])
        assert ds.n == 3
        assert np.array_equal(ds.y, [1.5, 2.5, 3.5])
        assert ds.level_names["a"] == ["x", "y"]
        assert np.array_equal(ds.levels["a"], [0, 1, 0])

    def test_numeric_factor_stays_categorical(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("y,a\n1,10\n2,20\n3,10\n")
        ds = read_csv(p, "y", ["a"])
        assert ds.level_names["a"] == ["10", "20"]

    def test_missing_response_cell(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("y,a\n1.0,x\n,y\n")
        with pytest.raises(UnparseableValueError) as err:
            read_csv(p, "y", ["a"])
        assert err.value.row == 2

    def test_missing_column(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("y,a\n1.0,x\n")
        with pytest.raises(MissingColumnError):
            read_csv(p, "y", ["b"])

    def test_empty_file(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("")
        with pytest.raises(EmptyFileError):
            read_csv(p, "y", [])

    def test_header_only(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("y,a\n")
        with pytest.raises(EmptyFileError):
            read_csv(p, "y", ["a"])


class TestClassicalTableRender:
    def test_oneway_row(self):
        d = oneway_oracle_design()
        table = classical.anova_table(classical.fit_effects(d), d)
        text = render_classical_table(table)
        lines = text.splitlines()
        assert lines[0].split() == ["Source", "Df", "SS", "MS", "F", "p"]
        assert lines[1].split() == ["a", "2", "64.00", "32.00", "16.00", "0.03"]
        assert lines[2].split() == ["residual", "3", "6.00", "2.00"]

    def test_figure4_to_row(self):
        table = ClassicalTable.from_components(
            ["to", "resid"], [3, 3168], [31193.62, 1235.54]
        )
        text = render_classical_table(table)
        fields = text.splitlines()[1].split()
        assert fields[:4] == ["to", "3", "31193.62", "10397.87"]
        assert float(fields[4]) == pytest.approx(26660.68, rel=0.005)
        assert fields[5] == "0.00"

    def test_residual_only_model(self):
        import conftest

        d = conftest.design_from("y ~ 1", [1.0, 2.0, 4.0], {})
        table = classical.anova_table(classical.fit_effects(d), d)
        text = render_classical_table(table)
        assert len(text.splitlines()) == 2
        assert text.splitlines()[1].split()[0] == "residual"


def summary_row(est, q025, q25, q75, q975, label="b", df=3):
    return VCRow(label, df, IntervalSummary(est, q025, q25, q75, q975))


class TestVCDisplay:
    def test_zero_row_point_at_origin(self):
        summary = make_vc_summary([summary_row(0, 0, 0, 0, 0)], "moments")
        text = render_vc_display(summary, "text")
        row = text.splitlines()[1]
        axis = row[row.index("|") + 1 : row.rindex("|")]
        assert axis[0] == "o"
        assert set(axis[1:]) == {" "}

    def test_point_outside_thick_bar_preserved(self):
        summary = make_vc_summary(
            [summary_row(est=0.1, q025=0.2, q25=0.4, q75=0.6, q975=0.9)], "moments"
        )
        text = render_vc_display(summary, "text")
        row = text.splitlines()[1]
        axis = row[row.index("|") + 1 : row.rindex("|")]
        assert axis.index("o") < axis.index("=")

        svg = render_vc_display(summary, "svg")
        import re

        cx = float(re.search(r'circle cx="([0-9.]+)"', svg).group(1))
        thick = re.search(r'stroke-width="4"', svg)
        x1_thick = float(re.search(r'<line x1="([0-9.]+)"[^>]*stroke-width="4"', svg).group(1))
        assert cx < x1_thick

    def test_axis_covers_all_quantiles(self):
        rows = [
            summary_row(1.0, 0.5, 0.8, 1.4, 3.7, label="p"),
            summary_row(0.2, 0.1, 0.15, 0.3, 0.6, label="q"),
        ]
        summary = make_vc_summary(rows, "moments")
        assert summary.scale_max >= 3.7

    def test_svg_byte_identical(self):
        d = balanced_oneway(5, 4, 1.5, 1.0, seed=7)
        mom = classical.run_moments(d, n_draws=200, rng=RngStream(3))
        summary = vc_summary_from_moments(mom, d)
        a = render_vc_display(summary, "svg")
        b = render_vc_display(summary, "svg")
        assert a == b
        assert a.startswith("<svg ")

    def test_text_axis_width_fixed(self):
        summary = make_vc_summary([summary_row(0.5, 0.2, 0.4, 0.6, 0.8)], "moments")
        row = render_vc_display(summary, "text").splitlines()[1]
        axis = row[row.index("|") + 1 : row.rindex("|")]
        assert len(axis) == 60

    def test_figure_written(self, tmp_path):
        summary = make_vc_summary([summary_row(0.5, 0.2, 0.4, 0.6, 0.8)], "moments")
        out = tmp_path / "fig.png"
        render_vc_figure(summary, str(out))
        assert out.stat().st_size > 0


class TestNiceAxisMax:
    def test_rounds_up_two_significant_digits(self):
        assert nice_axis_max(3.721) == 3.8
        assert nice_axis_max(0.0312) == 0.032
        assert nice_axis_max(870.0) == 870.0

    def test_degenerate(self):
        assert nice_axis_max(0.0) == 1.0


class TestJson:
    def _moments_run(self):
        d = oneway_oracle_design()
        est = classical.fit_effects(d)
        table = classical.anova_table(est, d)
        mom = classical.run_moments(d, n_draws=100, rng=RngStream(4))
        vc = vc_summary_from_moments(mom, d)
        return RunResult(
            "y ~ a", "moments", 4, d, table=table, moments=mom, vc=vc,
            draws_meta={"n_draws": 100},
        )

    def test_classical_run_has_no_sigma_fields(self):
        d = oneway_oracle_design()
        table = classical.anova_table(classical.fit_effects(d), d)
        run = RunResult("y ~ a", "classical", 0, d, table=table)
        payload = make_json_payload(run)
        for entry in payload["batches"]:
            assert "sigma" not in entry
            assert "s" not in entry
        assert payload["batches"][0]["ss"] == 64.0
        assert payload["batches"][1]["p"] is None

    def test_moments_sigma_estimates(self):
        payload = make_json_payload(self._moments_run())
        ests = [entry["sigma"]["est"] for entry in payload["batches"]]
        assert ests[0] == pytest.approx(3.872983346, abs=1e-9)
        assert ests[1] == pytest.approx(1.414213562, abs=1e-9)

    def test_byte_identical(self):
        a = write_json(self._moments_run())
        b = write_json(self._moments_run())
        assert a == b

    def test_ten_significant_digits(self):
        payload = make_json_payload(self._moments_run())
        val = payload["batches"][0]["sigma"]["est"]
        assert val == float(f"{np.sqrt(15):.10g}")


class TestCsvExport:
    def test_shape_and_values(self):
        d = oneway_oracle_design()
        est = classical.fit_effects(d)
        table = classical.anova_table(est, d)
        run = RunResult("y ~ a", "classical", 0, d, table=table)
        text = write_csv(run)
        lines = text.splitlines()
        assert lines[0].startswith("label,J,df,ss,ms,f,p,sigma_est")
        fields = lines[1].split(",")
        assert fields[0] == "a"
        assert fields[3] == "64"
        assert fields[7] == ""  # no sigma for classical runs
