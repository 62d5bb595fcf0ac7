"""
Tests for domain types, validity constraints, semirings and the parser.
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from engine.core import (
    AggregateNode,
    DeltaLeaf,
    FormatString,
    IndexSymbol,
    NamedLeaf,
    OnesLeaf,
    ScalarLeaf,
    Tensor,
    infer_axes,
    infer_shape,
    materialize_delta,
    materialize_ones,
    max_tag,
    named_leaves,
    symbols,
    validate,
    walk,
)
from engine.errors import (
    ArityMismatch,
    AxisMismatch,
    ConstraintViolation,
    NotAnElement,
    ParseError,
    ShapeMismatch,
    UnboundName,
)
from engine.generator import GeneratorConfig, expression_generator
from engine.parser import parse_expression, parse_format, parse_index_string, render
from engine.semiring import BOOL, FLOAT, INT, SEMIRINGS, TROPICAL, get_semiring


# --------------------------------------------------------------------------- #
# Symbols & Format Strings
# --------------------------------------------------------------------------- #

class TestSymbols:
    def test_letters_sort_before_tags(self):
        assert sorted([IndexSymbol(3), IndexSymbol("k"), IndexSymbol(0), IndexSymbol("a")]) == [
            IndexSymbol("a"), IndexSymbol("k"), IndexSymbol(0), IndexSymbol(3),
        ]

    def test_tag_prints_in_braces(self):
        assert str(IndexSymbol(12)) == "{12}"
        assert str(IndexSymbol("q")) == "q"

    @pytest.mark.parametrize("token", ["ab", "", "1", -1])
    def test_invalid_tokens(self, token):
        with pytest.raises(ValueError):
            IndexSymbol(token)

    def test_symbols_helper_splits_letters(self):
        assert symbols("ij", 4) == (IndexSymbol("i"), IndexSymbol("j"), IndexSymbol(4))

    def test_format_symbol_sets(self):
        fmt = FormatString((symbols("ij"), symbols("jk")), symbols("ik"))
        assert fmt.arity == 2
        assert fmt.input_symbols() == frozenset(symbols("ijk"))
        assert fmt.unbound_outputs() == []

    def test_unbound_output_rejected(self):
        with pytest.raises(ConstraintViolation):
            FormatString((symbols("ij"),), symbols("ik")).check()

    def test_empty_input_list_rejected(self):
        with pytest.raises(ArityMismatch):
            FormatString((), ())


# --------------------------------------------------------------------------- #
# Tensors & Constant Leaves
# --------------------------------------------------------------------------- #

class TestTensors:
    def test_row_major_entries(self):
        t = Tensor.from_entries((2, 3), range(6), INT)
        assert t.values[1, 0] == 3
        assert t.entries == (0, 1, 2, 3, 4, 5)

    def test_entry_count_must_match(self):
        with pytest.raises(ShapeMismatch):
            Tensor.from_entries((2, 2), [1, 2, 3], INT)

    def test_tensors_are_read_only(self):
        t = Tensor.from_entries((2,), [1, 2], INT)
        with pytest.raises(ValueError):
            t.values[0] = 5

    def test_order_one_delta_is_identity(self):
        assert np.array_equal(materialize_delta(1, (3,), INT).values, np.eye(3, dtype=np.int64))

    def test_order_two_delta(self):
        d = materialize_delta(2, (2, 3), INT).values
        assert d.shape == (2, 3, 2, 3)
        assert d[1, 2, 1, 2] == 1
        assert d[1, 2, 1, 0] == 0
        assert d.sum() == 6

    def test_tropical_constants(self):
        d = materialize_delta(1, (2,), TROPICAL).values
        assert d[0, 0] == 0.0 and math.isinf(d[0, 1])
        assert np.all(materialize_ones((2, 2), TROPICAL).values == 0.0)

    def test_delta_needs_one_length_per_order(self):
        with pytest.raises(ValueError):
            DeltaLeaf(2, (3,))

    def test_zero_length_axis_rejected(self):
        with pytest.raises(ValueError):
            OnesLeaf((2, 0))


# --------------------------------------------------------------------------- #
# Shape Inference & Validation
# --------------------------------------------------------------------------- #

class TestValidation:
    def test_matrix_product_shape(self):
        expr = parse_expression("#(ij,jk->ik; A, B)")
        assert infer_shape(expr, {"A": (2, 3), "B": (3, 4)}) == (2, 4)

    def test_axis_mismatch_names_symbol_and_lengths(self):
        expr = parse_expression("#(ij,jk->ik; A, B)")
        with pytest.raises(AxisMismatch) as err:
            infer_shape(expr, {"A": (2, 3), "B": (5, 4)})
        assert err.value.symbol == IndexSymbol("j")
        assert (err.value.first, err.value.second) == (3, 5)

    def test_order_mismatch(self):
        with pytest.raises(ArityMismatch):
            infer_shape(parse_expression("#(ij->i; A)"), {"A": (2,)})

    def test_unbound_name(self):
        with pytest.raises(UnboundName):
            infer_shape(parse_expression("#(ij->i; A)"), {})

    def test_nested_scopes_are_independent(self):
        # the inner i has length 3, the outer i length 2
        expr = parse_expression("#(ij,j->i; A, #(i->i; v))")
        assert infer_axes(expr, {"A": (2, 3), "v": (3,)}) == {IndexSymbol("i"): 2, IndexSymbol("j"): 3}

    def test_valid_report(self):
        report = validate(parse_expression("#(ij,jk->ik; A, B)"), {"A": (2, 3), "B": (3, 4)})
        assert report.valid
        assert report.shape == (2, 4)

    def test_unbound_output_violation(self):
        report = validate(parse_expression("#(ij->ik; A)"), {"A": (2, 3)})
        assert not report.valid
        assert [v.constraint for v in report.violations] == ["III"]
        assert "k" in report.violations[0].message

    def test_violations_carry_spans(self):
        text = "#(ij,jk->ik; A, B)"
        report = validate(parse_expression(text), {"A": (2, 3), "B": (5, 4)})
        assert [v.constraint for v in report.violations] == ["II"]
        assert (report.violations[0].span.start, report.violations[0].span.end) == (0, len(text))

    def test_all_violations_collected(self):
        report = validate(parse_expression("#(ij,jk->il; A, B)"), {"A": (2, 3), "B": (5,)})
        assert sorted(v.constraint for v in report.violations) == ["I", "III"]

    def test_without_shapes_only_constraint_three(self):
        assert validate(parse_expression("#(ij,jk->ik; A, B)")).valid
        assert not validate(parse_expression("#(ij->ik; A)")).valid

    def test_aggregate_shapes_must_agree(self):
        report = validate(parse_expression("(A + B)"), {"A": (2,), "B": (3,)})
        assert [v.constraint for v in report.violations] == ["aggregate"]

    def test_missing_binding_reported(self):
        report = validate(parse_expression("#(i->i; v)"), {})
        assert [v.constraint for v in report.violations] == ["binding"]

    def test_constant_leaves_need_no_binding(self):
        report = validate(parse_expression("#(ij,j->i; delta(1; 3), ones(3))"), {})
        assert report.valid and report.shape == (3,)

    def test_tree_helpers(self):
        expr = parse_expression("#(i{4},{4}->i; A, #({7}->{7}; B))")
        assert named_leaves(expr) == ["A", "B"]
        assert max_tag(expr) == 7


# --------------------------------------------------------------------------- #
# Parser
# --------------------------------------------------------------------------- #

class TestParser:
    def test_format_string(self):
        fmt = parse_format("ij,jk->ik")
        assert fmt.inputs == (symbols("ij"), symbols("jk"))
        assert fmt.output == symbols("ik")

    def test_format_unbound_output(self):
        with pytest.raises(ConstraintViolation):
            parse_format("ij->ik")
        assert parse_format("ij->ik", check=False).output == symbols("ik")

    def test_empty_strings(self):
        fmt = parse_format(",i->")
        assert fmt.inputs == ((), symbols("i"))
        assert fmt.output == ()

    def test_tags_and_letters(self):
        assert parse_index_string("i{10}j") == (IndexSymbol("i"), IndexSymbol(10), IndexSymbol("j"))

    def test_whitespace_is_insignificant(self):
        assert parse_expression(" # ( ij , jk -> ik ; A , B ) ") == parse_expression("#(ij,jk->ik;A,B)")

    def test_leaves(self):
        expr = parse_expression("#(,ij,ij,k->ij; 2.5, delta(1; 3), ones(3,3), ones(4))")
        assert expr.args == (
            ScalarLeaf(2.5), DeltaLeaf(1, (3,)), OnesLeaf((3, 3)), OnesLeaf((4,)),
        )

    def test_aggregate(self):
        expr = parse_expression("(A + B + #(i->i; C))")
        assert isinstance(expr, AggregateNode)
        assert expr.terms[:2] == (NamedLeaf("A"), NamedLeaf("B"))

    def test_special_scalars(self):
        assert parse_expression("inf") == ScalarLeaf(math.inf)
        assert parse_expression("true") == ScalarLeaf(True)

    def test_arity_mismatch(self):
        with pytest.raises(ArityMismatch):
            parse_expression("#(ij,jk->ik; A)")

    def test_unclosed_einsum_points_at_end(self):
        text = "#(ij,jk->ik; A, B"
        with pytest.raises(ParseError) as err:
            parse_expression(text)
        assert (err.value.span.start, err.value.span.end) == (len(text), len(text))

    def test_trailing_input(self):
        with pytest.raises(ParseError) as err:
            parse_expression("#(ij->ij; A) extra")
        assert (err.value.span.start, err.value.span.end) == (13, 18)

    def test_unexpected_character(self):
        with pytest.raises(ParseError) as err:
            parse_expression("#(ij->ij; A$)")
        assert err.value.span.start == 11

    def test_malformed_tag(self):
        with pytest.raises(ParseError):
            parse_index_string("i{x}")

    def test_render(self):
        text = "#(i{3},{3}->i; A, (ones(2) + delta(1; 2)))"
        assert render(parse_expression(text)) == "#(i{3},{3}->i; A, (ones(2) + delta(1; 2)))"

    def test_round_trip_generated(self):
        for seed in range(500):
            expr = expression_generator(seed).expression
            assert parse_expression(render(expr)) == expr, render(expr)


# --------------------------------------------------------------------------- #
# Generator
# --------------------------------------------------------------------------- #

class TestGenerator:
    def test_generated_expressions_are_valid(self):
        for seed in range(100):
            generated = expression_generator(seed)
            assert validate(generated.expression, generated.shapes).valid, render(generated.expression)

    def test_node_budget(self):
        cfg = GeneratorConfig(max_nodes=6, max_depth=5, nest_probability=0.9, aggregate_probability=0.3)
        for seed in range(200):
            generated = expression_generator(seed, cfg)
            assert sum(1 for _ in walk(generated.expression)) <= 6
            assert validate(generated.expression, generated.shapes).valid

    def test_budget_stops_unbounded_nesting(self):
        cfg = GeneratorConfig(max_depth=8, nest_probability=1.0)
        for seed in range(20):
            expr = expression_generator(seed, cfg).expression
            assert sum(1 for _ in walk(expr)) <= cfg.max_nodes


# --------------------------------------------------------------------------- #
# Semirings
# --------------------------------------------------------------------------- #

_ELEMENTS = {
    "int": st.integers(0, 50),
    "float": st.integers(0, 40).map(lambda n: n / 4),
    "bool": st.booleans(),
    "tropical": st.one_of(st.integers(0, 20), st.just("inf")),
}


class TestSemirings:
    def test_registry(self):
        assert set(SEMIRINGS) == {"int", "float", "bool", "tropical"}
        assert get_semiring("tropical") is TROPICAL
        with pytest.raises(ValueError):
            get_semiring("complex")

    def test_inf_only_in_tropical(self):
        assert math.isinf(TROPICAL.element("inf"))
        with pytest.raises(NotAnElement):
            INT.element("inf")
        with pytest.raises(NotAnElement):
            FLOAT.element(math.inf)

    def test_fractions_are_not_integers(self):
        assert INT.element(3.0) == 3
        with pytest.raises(NotAnElement) as err:
            INT.element(2.5)
        assert err.value.reason == "not-an-element"

    def test_to_python(self):
        assert TROPICAL.to_python(np.float64(np.inf)) == "inf"
        assert TROPICAL.to_python(np.float64(3.0)) == 3
        assert BOOL.to_python(np.bool_(True)) is True

    def test_float_comparison_is_relative(self):
        assert FLOAT.equal(np.array([1.0]), np.array([1.0 + 1e-12]))
        assert not FLOAT.equal(np.array([1.0]), np.array([1.001]))
        assert FLOAT.first_difference(np.array([1.0, 2.0]), np.array([1.0, 2.5])) == (1,)

    @pytest.mark.parametrize("name", list(SEMIRINGS))
    def test_axioms(self, name):
        s = SEMIRINGS[name]
        elements = _ELEMENTS[name]

        @settings(max_examples=60, deadline=None)
        @given(elements, elements, elements)
        def check(a, b, c):
            a, b, c = s.coerce([a, b, c])
            zero, one = s.coerce(s.zero), s.coerce(s.one)
            eq = lambda x, y: s.equal(np.asarray(x), np.asarray(y))
            assert eq(s.add(a, b), s.add(b, a))
            assert eq(s.mul(a, b), s.mul(b, a))
            assert eq(s.add(s.add(a, b), c), s.add(a, s.add(b, c)))
            assert eq(s.mul(s.mul(a, b), c), s.mul(a, s.mul(b, c)))
            assert eq(s.add(a, zero), a)
            assert eq(s.mul(a, one), a)
            assert eq(s.mul(a, zero), zero)
            assert eq(s.mul(a, s.add(b, c)), s.add(s.mul(a, b), s.mul(a, c)))

        check()
