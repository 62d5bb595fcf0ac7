"""
Tests for the rewrite rules: golden cases, inverses and preconditions.
"""

import numpy as np
import pytest

from engine.bindings import shapes_from_dims
from engine.core import DeltaLeaf, EinsumNode, IndexSymbol, OnesLeaf, ScalarLeaf, Tensor, symbols, walk
from engine.equivalence import check_equivalence
from engine.errors import (
    EinsumError,
    InvalidPermutation,
    LengthMismatch,
    NotConstant,
    NotNested,
    PreconditionViolated,
)
from engine.generator import GeneratorConfig, expression_generator
from engine.parser import parse_expression, render
from engine.rewrite import (
    Occurrence,
    alpha_equivalent,
    canonicalize,
    delta_merge,
    delta_split,
    denest_at,
    denest_by_deltas,
    distinct_symbols,
    distribute,
    factor,
    normalize,
    permute_args,
    rename_symbols,
    restricted_denest,
    restricted_nest,
    vectorize_constant,
)
from engine.rules import RULES, RuleArgumentError, apply_rule
from engine.semiring import INT, TROPICAL
from tests.conftest import load_corpus

GOLDEN = load_corpus("rewrites.json")


def parse(text):
    return parse_expression(text)


# --------------------------------------------------------------------------- #
# Golden Rewrites
# --------------------------------------------------------------------------- #

class TestGoldenRewrites:
    def test_every_rule_has_a_case(self):
        assert {case["rule"] for case in GOLDEN} == set(RULES)

    @pytest.mark.parametrize("case", GOLDEN, ids=lambda c: c["name"])
    def test_case(self, case):
        expr = parse(case["expression"])
        shapes = shapes_from_dims(expr, {}, 3)
        if "error" in case:
            with pytest.raises(EinsumError) as err:
                apply_rule(case["rule"], expr, case["args"], shapes, INT)
            assert err.value.reason == case["error"]
            return

        result = apply_rule(case["rule"], expr, case["args"], shapes, INT)
        expected = parse(case["expected"])
        if case["compare"] == "exact":
            assert result == expected, render(result)
        else:
            assert alpha_equivalent(result, expected), render(result)
        assert check_equivalence(expr, result, shapes, INT, trials=8, seed=1).equal


# --------------------------------------------------------------------------- #
# Renaming & Commutativity
# --------------------------------------------------------------------------- #

class TestRenaming:
    def test_canonical_form(self):
        assert render(canonicalize(parse("#(pq->qp; A)"))) == "#({0}{1}->{1}{0}; A)"

    def test_alpha_equivalence_is_per_node(self):
        assert alpha_equivalent(parse("#(ij,j->i; A, #(jk->j; B))"), parse("#(ab,b->a; A, #(bi->b; B))"))
        assert not alpha_equivalent(parse("#(ij->ij; A)"), parse("#(ij->ji; A)"))

    def test_swap_is_injective(self):
        node = rename_symbols(parse("#(ij->i; A)"), {IndexSymbol("i"): IndexSymbol("j"), IndexSymbol("j"): IndexSymbol("i")})
        assert node == parse("#(ji->j; A)")

    def test_non_injective_rejected(self):
        with pytest.raises(PreconditionViolated) as err:
            rename_symbols(parse("#(ij->i; A)"), {IndexSymbol("i"): IndexSymbol("k"), IndexSymbol("j"): IndexSymbol("k")})
        assert err.value.reason == "not-injective"

    def test_renaming_leaves_arguments_alone(self):
        node = rename_symbols(parse("#(i->i; #(i->i; v))"), {IndexSymbol("i"): IndexSymbol("p")})
        assert node == parse("#(p->p; #(i->i; v))")

    def test_invalid_permutation(self):
        with pytest.raises(InvalidPermutation):
            permute_args(parse("#(ij,jk->ik; A, B)"), [0, 0])

    def test_distinct_symbols_skip_avoided(self):
        assert distinct_symbols(3, symbols("i")) == symbols("jkl")


# --------------------------------------------------------------------------- #
# Inverse Pairs
# --------------------------------------------------------------------------- #

class TestInverses:
    def test_nest_then_denest(self):
        flat = parse("#(ij,jk,k->i; A, B, v)")
        nested = restricted_nest(flat, [0, 1], symbols("ik"))
        assert restricted_denest(nested) == flat

    def test_split_then_merge(self):
        node = parse("#(ij,jk->ik; A, B)")
        split = delta_split(node, IndexSymbol("j"), [Occurrence(1, 0)], IndexSymbol("l"), {"A": (2, 3), "B": (3, 4)})
        assert split == parse("#(jl,ij,lk->ik; delta(1; 3), A, B)")
        assert delta_merge(split, 0, keep="left") == node

    def test_merge_keeping_the_right_symbol(self):
        split = parse("#(jl,ij,lk->ik; delta(1; 3), A, B)")
        assert delta_merge(split, 0, keep="right") == parse("#(il,lk->ik; A, B)")

    def test_distribute_then_factor(self):
        node = parse("#(ik,kj->ij; A, (B + C + D))")
        spread = distribute(node)
        assert len(spread.terms) == 3
        assert factor(spread) == node

    def test_distribute_single_term(self):
        assert distribute(parse("#(i->i; (v))")) == parse("#(i->i; v)")


# --------------------------------------------------------------------------- #
# Denesting Through Deltas
# --------------------------------------------------------------------------- #

NESTING = GeneratorConfig(nest_probability=0.6, duplicate_probability=0.4, max_depth=3)


class TestDenestByDeltas:
    def test_nine_vectors_agree_with_the_graph(self):
        expr = parse("#(a,b,c,d,e,abbcde->bc; v1, v2, v3, v4, v5, #(i,j,k,l->iijkkl; v6, v7, v8, v9))")
        shapes = shapes_from_dims(expr, {}, 3)
        by_deltas = denest_at(expr, 5, lambda node: denest_by_deltas(node, shapes))
        assert alpha_equivalent(by_deltas, denest_at(expr, 5))
        assert alpha_equivalent(by_deltas, parse("#(x,x,y,y,z,x,x,y,z->xy; v1, v2, v3, v4, v5, v6, v7, v8, v9)"))

    def test_cycle_leaves_no_delta(self):
        expr = parse("#(ii->i; #(jj->jj; A))")
        out = denest_by_deltas(expr, {"A": (3, 3)})
        assert alpha_equivalent(out, parse("#(ii->i; A)"))
        assert not any(isinstance(n, (DeltaLeaf, OnesLeaf)) for n in walk(out))

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            denest_by_deltas(parse("#(ij->i; #(k->k; v))"), {"v": (2,)})

    @pytest.mark.parametrize("seed", range(60))
    def test_generated_nestings(self, seed):
        gen = expression_generator(seed, NESTING)
        checked = 0
        for node in walk(gen.expression):
            if not isinstance(node, EinsumNode):
                continue
            for slot, arg in enumerate(node.args):
                if not isinstance(arg, EinsumNode):
                    continue
                by_deltas = denest_at(node, slot, lambda n: denest_by_deltas(n, gen.shapes))
                assert alpha_equivalent(by_deltas, denest_at(node, slot)), render(node)
                checked += 1
        if checked == 0:
            pytest.skip("no nested einsum operand")


# --------------------------------------------------------------------------- #
# Preconditions
# --------------------------------------------------------------------------- #

class TestPreconditions:
    def test_merge_needs_a_bound_symbol(self):
        with pytest.raises(PreconditionViolated) as err:
            delta_merge(parse("#(ab,c->ab; delta(1; 3), v)"), 0)
        assert err.value.reason == "unbound-delta"

    def test_denest_needs_a_nested_argument(self):
        with pytest.raises(NotNested):
            restricted_denest(parse("#(ij->i; A)"))

    def test_restricted_denest_rejects_hidden_collisions(self):
        with pytest.raises(PreconditionViolated) as err:
            restricted_denest(parse("#(i,kj->j; #(ik->i; A), B)"))
        assert err.value.reason == "symbol-collision"

    def test_add_ones_needs_bound_symbols(self):
        with pytest.raises(EinsumError) as err:
            apply_rule("add-ones", parse("#(ij->ij; A)"), {"string": "k"}, {"A": (2, 2)}, INT)
        assert err.value.reason == "would-change-semantics"


# --------------------------------------------------------------------------- #
# Constants & Normal Form
# --------------------------------------------------------------------------- #

class TestConstants:
    def test_vectorize_constant_tensor(self):
        t = Tensor.from_entries((2, 2), [4, 4, 4, 4], INT)
        assert vectorize_constant(t) == parse("#(,i,j->ij; 4, ones(2), ones(2))")

    def test_vectorize_rejects_varying_entries(self):
        with pytest.raises(NotConstant):
            vectorize_constant(Tensor.from_entries((2,), [1, 2], INT))

    def test_vectorize_unit_delta(self):
        assert vectorize_constant(DeltaLeaf(1, (1,))) == parse("#(,i,j->ij; ones(), ones(1), ones(1))")

    def test_normalize_substitutes_bare_delta(self):
        assert normalize(DeltaLeaf(1, (3,)), INT) == parse("#(i->ii; ones(3))")

    def test_normalize_drops_scalar_one(self):
        assert normalize(parse("#(,ij->ij; 1, A)"), INT) == parse("#(ij->ij; A)")
        assert normalize(parse("#(,ij->ij; 0, A)"), TROPICAL) == parse("#(ij->ij; A)")

    def test_normalize_keeps_something_to_evaluate(self):
        assert normalize(parse("#(->; 1)"), INT) == parse("#(->; ones())")

    def test_normal_form_has_no_deltas(self):
        expr = parse("#(ij,jk,kl->il; delta(1; 3), #(ab,bc->ac; A, delta(1; 3)), ones(3,3))")
        out = normalize(expr, INT)
        assert not any(isinstance(n, DeltaLeaf) for n in walk(out))
        assert not any(isinstance(n, OnesLeaf) and len(n.shape) > 1 for n in walk(out))
        shapes = {"A": (3, 3)}
        assert check_equivalence(expr, out, shapes, INT, trials=10).equal


# --------------------------------------------------------------------------- #
# Rule Dispatch
# --------------------------------------------------------------------------- #

class TestRuleDispatch:
    def test_address_into_subexpression(self):
        expr = parse("#(ij,j->i; A, #(j->j; v))")
        assert apply_rule("identity", expr, {"at": "2"}, {}, INT) == parse("#(ij,j->i; A, v)")

    def test_identity_by_slot(self):
        expr = parse("#(ij,j->i; A, #(j->j; v))")
        assert apply_rule("identity", expr, {"slot": "2"}, {}, INT) == parse("#(ij,j->i; A, v)")

    def test_unknown_rule(self):
        with pytest.raises(RuleArgumentError):
            apply_rule("commute", parse("A"), {}, {}, INT)

    def test_unknown_argument(self):
        with pytest.raises(RuleArgumentError):
            apply_rule("permute", parse("#(i->i; v)"), {"perm": "1", "order": "1"}, {}, INT)

    def test_missing_argument(self):
        with pytest.raises(RuleArgumentError):
            apply_rule("rename", parse("#(i->i; v)"), {}, {}, INT)

    def test_rule_needs_an_einsum(self):
        with pytest.raises(PreconditionViolated) as err:
            apply_rule("permute", parse("A"), {"perm": "1"}, {}, INT)
        assert err.value.reason == "not-einsum"

    def test_scalar_operands_survive(self):
        out = apply_rule("vectorize-constant", parse("#(->; 5)"), {"slot": "1"}, {}, INT)
        assert out.args[0].args[0] == ScalarLeaf(5)


# --------------------------------------------------------------------------- #
# Negative Controls
# --------------------------------------------------------------------------- #

class TestNegativeControls:
    def test_diagonal_mask_is_not_identity(self):
        report = check_equivalence(parse("#(ii->ii; A)"), parse("A"), {"A": (3, 3)}, INT, trials=20)
        assert not report.equal

    def test_swapped_arguments_are_not_equal(self):
        shapes = {"A": (3, 3), "B": (3, 3)}
        report = check_equivalence(
            parse("#(ij,jk->ik; A, B)"), parse("#(ij,jk->ik; B, A)"), shapes, INT, trials=20
        )
        assert not report.equal
        left = report.bindings
        a, b = left["A"].values, left["B"].values
        assert not np.array_equal(a @ b, b @ a)
