import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hanova.errors import (
    DuplicateTermError,
    EmptyFormulaError,
    FormulaError,
    FormulaSyntaxError,
    UnknownFactorError,
)
from hanova.formula import (
    AliasDecl,
    ModelSpec,
    Term,
    expand_terms,
    parse_alias_option,
    parse_model,
    render_model,
)


def labels(spec):
    return [t.label for t in spec.terms]


class TestParse:
    def test_nested_machines_terms(self):
        spec = parse_model("y ~ trt + trt:machine + trt:machine:meas")
        assert labels(spec) == ["trt", "trt:machine", "trt:machine:meas"]
        assert spec.response == "y"

    def test_single_term(self):
        spec = parse_model("y ~ a")
        assert labels(spec) == ["a"]

    def test_star_two_way(self):
        spec = parse_model("y ~ a*b")
        assert labels(spec) == ["a", "b", "a:b"]

    def test_star_three_way_order(self):
        spec = parse_model("y ~ a*b*c")
        assert labels(spec) == ["a", "b", "c", "a:b", "a:c", "b:c", "a:b:c"]

    def test_star_dedupes_against_explicit(self):
        spec = parse_model("y ~ a + a*b")
        assert labels(spec) == ["a", "b", "a:b"]

    def test_explicit_duplicate_rejected(self):
        with pytest.raises(DuplicateTermError):
            parse_model("y ~ a + a")

    def test_duplicate_by_factor_set_rejected(self):
        with pytest.raises(DuplicateTermError):
            parse_model("y ~ a:b + b:a")

    def test_duplicate_factor_within_term(self):
        with pytest.raises(DuplicateTermError):
            parse_model("y ~ a:a")

    def test_empty_text(self):
        with pytest.raises(EmptyFormulaError):
            parse_model("   ")

    def test_mixed_operators_rejected(self):
        with pytest.raises(FormulaSyntaxError):
            parse_model("y ~ a:b*c")

    def test_syntax_error_carries_position(self):
        with pytest.raises(FormulaSyntaxError) as err:
            parse_model("y ~ a + + b")
        assert err.value.position == 8

    def test_intercept_only(self):
        spec = parse_model("y ~ 1")
        assert spec.terms == ()

    def test_response_only(self):
        spec = parse_model("y")
        assert spec.terms == ()

    def test_error_marker(self):
        spec = parse_model("y ~ a + Error(a:b)")
        assert labels(spec) == ["a", "a:b"]
        assert [t.explicit_residual for t in spec.terms] == [False, True]

    def test_alias_clause(self):
        spec = parse_model("y ~ row + col + trt + row:col, alias(trt = row:col)")
        assert spec.aliases == (AliasDecl(("trt",), ("row", "col")),)

    def test_alias_option(self):
        assert parse_alias_option("trt=row:col") == AliasDecl(("trt",), ("row", "col"))

    def test_factor_listing_in_first_appearance_order(self):
        spec = parse_model("y ~ b + a + b:c")
        assert spec.factors == ("b", "a", "c")


class TestRoundTrip:
    CASES = [
        "y ~ a",
        "y ~ a*b*c",
        "y ~ trt + trt:machine + trt:machine:meas",
        "y ~ row + col + trt + row:col, alias(trt = row:col)",
        "y ~ a + Error(a:b)",
        "y ~ 1",
        "y",
    ]

    @pytest.mark.parametrize("text", CASES)
    def test_render_reparses_identically(self, text):
        spec = parse_model(text)
        assert parse_model(render_model(spec)) == spec

    @given(
        st.lists(
            st.lists(
                st.sampled_from(["a", "b", "c", "d", "e"]), min_size=1, max_size=3,
                unique=True,
            ),
            min_size=1,
            max_size=5,
        )
    )
    def test_round_trip_generated(self, factor_lists):
        seen = set()
        terms = []
        for fl in factor_lists:
            fs = frozenset(fl)
            if fs in seen:
                continue
            seen.add(fs)
            terms.append(Term(tuple(fl)))
        spec = ModelSpec("y", tuple(terms))
        assert parse_model(render_model(spec)) == spec


class TestTotality:
    @settings(max_examples=300)
    @given(st.text(max_size=40))
    def test_parse_never_panics(self, text):
        try:
            spec = parse_model(text)
        except FormulaError:
            return
        assert isinstance(spec, ModelSpec)

    @settings(max_examples=100)
    @given(st.binary(max_size=30))
    def test_parse_arbitrary_bytes(self, data):
        text = data.decode("utf-8", errors="replace")
        try:
            parse_model(text)
        except FormulaError:
            pass


class TestExpand:
    def test_splitplot_batching(self):
        spec = parse_model(
            "y ~ row + col + trt + row:col + sub + row:sub + col:sub + trt:sub + row:col:sub"
        )
        batches = expand_terms(spec, ["row", "col", "trt", "sub"])
        assert [t.label for t in batches] == [
            "row", "col", "trt", "row:col", "sub",
            "row:sub", "col:sub", "trt:sub", "row:col:sub",
        ]

    def test_star_expansion_batches(self):
        spec = parse_model("y ~ a*b*c")
        batches = expand_terms(spec, ["a", "b", "c"])
        assert [frozenset(t.factors) for t in batches] == [
            frozenset(s)
            for s in [{"a"}, {"b"}, {"c"}, {"a", "b"}, {"a", "c"}, {"b", "c"}, {"a", "b", "c"}]
        ]

    def test_unknown_factor(self):
        spec = parse_model("y ~ a + q")
        with pytest.raises(UnknownFactorError):
            expand_terms(spec, ["a"])

    def test_deterministic_order(self):
        spec = parse_model("y ~ e*d + a")
        first = [t.label for t in expand_terms(spec, ["a", "d", "e"])]
        for _ in range(5):
            assert [t.label for t in expand_terms(spec, ["a", "d", "e"])] == first
        assert first == ["e", "d", "e:d", "a"]

    def test_web_formula_has_31_batches(self):
        spec = parse_model("y ~ to*frm*company*hour*week")
        batches = expand_terms(spec, ["to", "frm", "company", "hour", "week"])
        assert len(batches) == 31
