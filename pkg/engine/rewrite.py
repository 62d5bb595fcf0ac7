"""
Equivalence-preserving rewrites of einsum expressions.

Every function takes an expression and returns a new one with the same
value over every commutative semiring; a violated precondition raises a
``RewriteError`` subclass carrying a reason code.  Nested arguments are
addressed in slot 0 (the first operand) by the denesting rules; use
``permute_args`` or ``denest_at`` for any other slot.
"""

from __future__ import annotations

import itertools
import logging
from functools import reduce
from typing import Callable, Iterable, Mapping, NamedTuple, Optional, Sequence, Union

import numpy as np

from engine.config import SYMBOL_POOL
from engine.core import (
    CONSTANT_LEAVES,
    AggregateNode,
    DeltaLeaf,
    EinsumNode,
    Expression,
    FormatString,
    IndexString,
    IndexSymbol,
    OnesLeaf,
    ScalarLeaf,
    Shape,
    Tensor,
    infer_shape,
    node_environment,
    sigma,
)
from engine.errors import (
    DegenerateDelta,
    InvalidGrouping,
    InvalidPermutation,
    LengthMismatch,
    NotADelta,
    NotAnAggregate,
    NotConstant,
    NotFactorable,
    NotIdentity,
    NotNested,
    PreconditionViolated,
    SymbolAbsent,
    SymbolNotFresh,
    TargetInUse,
    WouldChangeSemantics,
)
from engine.graph import FreshSymbols, SymbolMap, build_index_symbol_graph, derive_symbol_map
from engine.semiring import SemiringSpec

logger = logging.getLogger(__name__)


class Occurrence(NamedTuple):
    """One position of a symbol: ``operand`` is None for the output string."""

    operand: Optional[int]
    position: int


def _union(strings: Iterable[IndexString]) -> frozenset[IndexSymbol]:
    return frozenset(itertools.chain.from_iterable(strings))


def _replace_at(items: Sequence, slot: int, value) -> tuple:
    return tuple(items[:slot]) + (value,) + tuple(items[slot + 1:])


def _check_slot(node: EinsumNode, slot: int) -> None:
    if not 0 <= slot < node.format.arity:
        raise PreconditionViolated(
            f"Operand position {slot} out of range for {node.format.arity} operands",
            reason="bad-slot",
        )


def distinct_symbols(count: int, avoid: Iterable[IndexSymbol] = ()) -> IndexString:
    """``count`` pairwise distinct symbols, letters first, then integer tags."""
    avoid = set(avoid)
    pool = (IndexSymbol(ch) for ch in SYMBOL_POOL)
    tags = (IndexSymbol(n) for n in itertools.count())
    return tuple(itertools.islice((s for s in itertools.chain(pool, tags) if s not in avoid), count))


# --------------------------------------------------------------------------- #
# Commutativity and renaming
# --------------------------------------------------------------------------- #

def permute_args(node: EinsumNode, perm: Sequence[int]) -> EinsumNode:
    """New operand k is old operand ``perm[k]``; strings move with their arguments."""
    perm = tuple(perm)
    if sorted(perm) != list(range(node.format.arity)):
        raise InvalidPermutation(f"{perm} is not a permutation of {node.format.arity} operands")
    return node.replace(
        inputs=tuple(node.inputs[p] for p in perm),
        args=tuple(node.args[p] for p in perm),
    )


def rename_symbols(node: EinsumNode, mapping: Union[SymbolMap, Mapping[IndexSymbol, IndexSymbol]]) -> EinsumNode:
    """Alpha-rename symbols within one einsum node's scope (not its arguments)."""
    if not isinstance(node, EinsumNode):
        raise PreconditionViolated("Only einsum expressions have index symbols", reason="not-einsum")
    nu = mapping if isinstance(mapping, SymbolMap) else SymbolMap(dict(mapping))
    scope = node.format.symbols()
    for source, target in nu.mapping.items():
        if target in scope and target not in nu.mapping:
            raise TargetInUse(f"Cannot rename {source} to {target}: {target} is already in use")
    if not nu.is_injective_on(scope):
        raise PreconditionViolated("Symbol renaming must be injective", reason="not-injective")
    return node.replace(
        inputs=tuple(nu.apply(s) for s in node.inputs),
        output=nu.apply(node.output),
    )


def canonicalize(expr: Expression) -> Expression:
    """Rename every node's symbols to tags 0, 1, ... in first-occurrence order."""
    if isinstance(expr, AggregateNode):
        return AggregateNode(tuple(canonicalize(t) for t in expr.terms))
    if not isinstance(expr, EinsumNode):
        return expr
    order: dict[IndexSymbol, IndexSymbol] = {}
    for s in itertools.chain(*expr.inputs, expr.output):
        order.setdefault(s, IndexSymbol(len(order)))
    nu = SymbolMap(order)
    return EinsumNode(
        FormatString(tuple(nu.apply(s) for s in expr.inputs), nu.apply(expr.output)),
        tuple(canonicalize(a) for a in expr.args),
    )


def alpha_equivalent(first: Expression, second: Expression) -> bool:
    return canonicalize(first) == canonicalize(second)


# --------------------------------------------------------------------------- #
# Nesting and denesting
# --------------------------------------------------------------------------- #

def restricted_denest(outer: EinsumNode) -> EinsumNode:
    inner = outer.args[0]
    if not isinstance(inner, EinsumNode):
        raise NotNested("The first argument is not an einsum expression")
    if inner.output != outer.inputs[0]:
        raise PreconditionViolated(
            "Inner output string does not match the outer operand string; use general denesting",
            reason="string-mismatch",
        )
    outer_rest = _union(outer.inputs[1:]) | sigma(outer.output)
    collisions = (inner.format.symbols() & outer_rest) - sigma(inner.output)
    if collisions:
        raise PreconditionViolated(
            "Inner and outer expression share symbols "
            + ", ".join(map(str, sorted(collisions)))
            + " outside the shared string; use general denesting",
            reason="symbol-collision",
        )
    return EinsumNode(
        FormatString(inner.inputs + outer.inputs[1:], outer.output),
        inner.args + outer.args[1:],
    )


def restricted_nest(flat: EinsumNode, group: Iterable[int], inner_output: IndexString) -> EinsumNode:
    """Pull the operands in ``group`` into an inner einsum with output ``inner_output``.

    The inner node takes the place of the first grouped operand.
    """
    group = sorted(set(group))
    if not group or group[0] < 0 or group[-1] >= flat.format.arity:
        raise InvalidGrouping(f"Group {group} does not select operands of a {flat.format.arity}-ary einsum")
    inner_output = tuple(inner_output)
    grouped = _union(flat.inputs[k] for k in group)
    rest = _union(s for k, s in enumerate(flat.inputs) if k not in group) | sigma(flat.output)
    missing = sorted((grouped & rest) - sigma(inner_output))
    extra = sorted(sigma(inner_output) - grouped)
    if missing or extra:
        parts = []
        if missing:
            parts.append("missing shared symbols " + ", ".join(map(str, missing)))
        if extra:
            parts.append("symbols " + ", ".join(map(str, extra)) + " not bound by the group")
        raise InvalidGrouping("Invalid inner output string: " + "; ".join(parts), missing=tuple(missing))

    inner = EinsumNode(
        FormatString(tuple(flat.inputs[k] for k in group), inner_output),
        tuple(flat.args[k] for k in group),
    )
    inputs, args = [], []
    for k, (index, arg) in enumerate(flat.operands()):
        if k == group[0]:
            inputs.append(inner_output)
            args.append(inner)
        elif k not in group:
            inputs.append(index)
            args.append(arg)
    return EinsumNode(FormatString(tuple(inputs), flat.output), tuple(args))


def general_denest(outer: EinsumNode) -> EinsumNode:
    """Denest the einsum in slot 0 through the index symbol graph.

    (1) rename inner symbols apart from the outer ones, (2) build the graph,
    (3) map each connected component to a fresh tag, (4) splice.
    """
    inner = outer.args[0]
    if not isinstance(inner, EinsumNode):
        raise NotNested("The first argument is not an einsum expression")
    fresh = FreshSymbols.above(outer)
    clash = inner.format.symbols() & outer.format.symbols()
    if clash:
        inner = rename_symbols(inner, {s: next(fresh) for s in sorted(clash)})
        outer = outer.replace(args=(inner,) + outer.args[1:])
    nu = derive_symbol_map(build_index_symbol_graph(outer), fresh)
    logger.debug("general denest symbol map %s", {str(k): str(v) for k, v in nu.mapping.items()})
    return EinsumNode(
        FormatString(
            tuple(nu.apply(s) for s in inner.inputs + outer.inputs[1:]),
            nu.apply(outer.output),
        ),
        inner.args + outer.args[1:],
    )


def denest_at(
    node: EinsumNode,
    slot: int,
    denest: Optional[Callable[[EinsumNode], EinsumNode]] = None,
) -> EinsumNode:
    """Denest the argument in ``slot``; its operands take its place.

    ``denest`` defaults to general denesting.
    """
    denest = denest or general_denest
    _check_slot(node, slot)
    inner = node.args[slot]
    if not isinstance(inner, EinsumNode):
        raise NotNested(f"Operand {slot} is not an einsum expression")
    n = node.format.arity
    flat = denest(permute_args(node, [slot] + [k for k in range(n) if k != slot]))
    m = inner.format.arity
    order = list(range(m, m + slot)) + list(range(m)) + list(range(m + slot, len(flat.args)))
    return permute_args(flat, order)


def flatten(expr: Expression) -> Expression:
    """Denest every nested einsum, innermost first, keeping leaf order."""
    if isinstance(expr, AggregateNode):
        return AggregateNode(tuple(flatten(t) for t in expr.terms))
    if not isinstance(expr, EinsumNode):
        return expr
    node = expr.replace(args=tuple(flatten(a) for a in expr.args))
    slot = 0
    while slot < node.format.arity:
        arg = node.args[slot]
        if isinstance(arg, EinsumNode):
            node = denest_at(node, slot)
            slot += arg.format.arity
        else:
            slot += 1
    return node


def denest_by_deltas(outer: EinsumNode, shapes: Mapping[str, Shape] = {}) -> EinsumNode:
    """General denesting of slot 0 composed from delta splits, restricted
    denesting and delta merges.

    Every position i of the shared string is split to a fresh x_i on both
    sides, the now matching strings are denested, and the 2d deltas are
    merged away keeping x_i (x_min(i,j) when both symbols are fresh).  The
    result is alpha-equivalent to ``general_denest``.  ``shapes`` supplies
    the delta lengths.
    """
    inner = outer.args[0]
    if not isinstance(inner, EinsumNode):
        raise NotNested("The first argument is not an einsum expression")
    if len(inner.output) != len(outer.inputs[0]):
        raise LengthMismatch(
            f"Inner output string has length {len(inner.output)} "
            f"but the outer operand string has length {len(outer.inputs[0])}"
        )
    fresh = FreshSymbols.above(outer)
    clash = inner.format.symbols() & outer.format.symbols()
    if clash:
        inner = rename_symbols(inner, {s: next(fresh) for s in sorted(clash)})
    xs = tuple(itertools.islice(fresh, len(inner.output)))
    base = fresh.next - len(xs)

    def is_fresh(symbol: IndexSymbol) -> bool:
        return symbol.is_tag and symbol.token >= base

    for i, x in enumerate(xs):
        inner = delta_split(inner, inner.output[i], [Occurrence(None, i)], x, shapes)
    node = outer.replace(args=(inner,) + outer.args[1:])
    # each split prepends a delta, so the nested operand sits in slot i
    for i, x in enumerate(xs):
        node = delta_split(node, node.inputs[i][i], [Occurrence(i, i)], x, shapes)
    node = denest_at(node, len(xs), restricted_denest)

    # the introduced deltas now occupy slots 0 .. 2d-1
    for _ in range(2 * len(xs)):
        a, b = node.inputs[0]
        if a == b:
            # a cycle in the graph leaves δ(x,x); as #(i->ii; 1) it denests to a neutral ones vector
            node = denest_at(node.replace(args=_replace_at(node.args, 0, substitute_delta(node.args[0]))), 0)
            node = drop_neutral_ones(node, 0)
            continue
        if is_fresh(a) and is_fresh(b):
            keep = "min"
        else:
            keep = "left" if is_fresh(a) else "right"
        node = delta_merge(node, 0, keep)
    logger.debug("denested through %d deltas", 2 * len(xs))
    return node


# --------------------------------------------------------------------------- #
# Delta split / merge
# --------------------------------------------------------------------------- #

def delta_split(
    node: EinsumNode,
    symbol: IndexSymbol,
    occurrences: Iterable[Occurrence],
    new: IndexSymbol,
    shapes: Mapping[str, Shape] = {},
) -> EinsumNode:
    """Replace the selected occurrences of ``symbol`` by ``new`` and prepend δ₁ over (symbol, new)."""
    if symbol not in node.format.input_symbols():
        raise SymbolAbsent(f"Symbol {symbol} appears in no input string")
    if new in node.format.symbols():
        raise SymbolNotFresh(f"Symbol {new} is already used in this expression")
    occurrences = list(occurrences)
    if not occurrences:
        raise PreconditionViolated("Select at least one occurrence to split", reason="no-occurrence")

    inputs = [list(s) for s in node.inputs]
    output = list(node.output)
    for occ in occurrences:
        target = output if occ.operand is None else (inputs[occ.operand] if 0 <= occ.operand < len(inputs) else None)
        if target is None or not 0 <= occ.position < len(target) or target[occ.position] != symbol:
            raise SymbolAbsent(f"{symbol} does not occur at {occ}")
        target[occ.position] = new

    length = node_environment(node, shapes)[symbol]
    return EinsumNode(
        FormatString(((symbol, new),) + tuple(tuple(s) for s in inputs), tuple(output)),
        (DeltaLeaf(1, (length,)),) + node.args,
    )


def delta_merge(node: EinsumNode, slot: int, keep: str = "left") -> EinsumNode:
    """Remove the δ₁ operand in ``slot``, merging its two symbols into the kept one.

    ``keep`` is "left", "right" or "min" (the smaller symbol).
    """
    _check_slot(node, slot)
    leaf = node.args[slot]
    if not isinstance(leaf, DeltaLeaf) or leaf.order != 1:
        raise NotADelta(f"Operand {slot} is not an order-2 delta tensor")
    a, b = node.inputs[slot]
    if a == b:
        raise DegenerateDelta(f"Delta index string {a}{b} repeats its symbol")
    if keep == "left":
        kept, dropped = a, b
    elif keep == "right":
        kept, dropped = b, a
    elif keep == "min":
        kept, dropped = min(a, b), max(a, b)
    else:
        raise PreconditionViolated(f"keep must be left, right or min, not {keep!r}", reason="bad-argument")

    others = [s for k, s in enumerate(node.inputs) if k != slot]
    if not {a, b} & _union(others):
        raise PreconditionViolated(
            f"Neither {a} nor {b} appears in another operand; merging would drop an aggregation",
            reason="unbound-delta",
        )
    nu = SymbolMap({dropped: kept})
    return EinsumNode(
        FormatString(tuple(nu.apply(s) for s in others), nu.apply(node.output)),
        tuple(arg for k, arg in enumerate(node.args) if k != slot),
    )


# --------------------------------------------------------------------------- #
# Distributivity
# --------------------------------------------------------------------------- #

def distribute(node: EinsumNode, slot: Optional[int] = None) -> Expression:
    if slot is None:
        slot = next((k for k, a in enumerate(node.args) if isinstance(a, AggregateNode)), None)
        if slot is None:
            raise NotAnAggregate("No operand is an elementwise aggregate")
    _check_slot(node, slot)
    aggregate = node.args[slot]
    if not isinstance(aggregate, AggregateNode):
        raise NotAnAggregate(f"Operand {slot} is not an elementwise aggregate")
    copies = tuple(node.replace(args=_replace_at(node.args, slot, t)) for t in aggregate.terms)
    return copies[0] if len(copies) == 1 else AggregateNode(copies)


def factor(aggregate: AggregateNode, shapes: Optional[Mapping[str, Shape]] = None) -> EinsumNode:
    """Inverse of ``distribute``: einsums differing in exactly one operand.

    With ``shapes`` the differing operands are also checked to agree in shape.
    """
    if not isinstance(aggregate, AggregateNode) or len(aggregate.terms) < 2:
        raise NotFactorable("Need an elementwise aggregate of at least two terms", reason="not-aggregate")
    terms = aggregate.terms
    if not all(isinstance(t, EinsumNode) for t in terms):
        raise NotFactorable("Every term must be an einsum expression", reason="not-einsum")
    first = terms[0]
    if any(t.format != first.format for t in terms[1:]):
        raise NotFactorable("Terms have different format strings", reason="format-mismatch")
    differing = [
        k for k in range(first.format.arity)
        if any(t.args[k] != first.args[k] for t in terms[1:])
    ]
    if len(differing) != 1:
        raise NotFactorable(
            f"Terms differ in {len(differing)} operand slots, expected exactly one",
            reason="slot-count",
        )
    slot = differing[0]
    if shapes is not None:
        found = {infer_shape(t.args[slot], shapes) for t in terms}
        if len(found) > 1:
            raise NotFactorable("Differing operands have different shapes", reason="shape-mismatch")
    merged = AggregateNode(tuple(t.args[slot] for t in terms))
    return first.replace(args=_replace_at(first.args, slot, merged))


# --------------------------------------------------------------------------- #
# Identity, neutral ones, constants, deltas
# --------------------------------------------------------------------------- #

def eliminate_identity(node: EinsumNode) -> Expression:
    if node.format.arity != 1:
        raise NotIdentity("An identity has exactly one operand", reason="multiple-args")
    index = node.inputs[0]
    if index != node.output:
        raise NotIdentity("Input and output strings differ", reason="string-mismatch")
    if len(set(index)) != len(index):
        # #(ii->ii; A) zeroes the off-diagonal entries
        raise NotIdentity("Index string repeats a symbol", reason="duplicate-symbols")
    return node.args[0]


def drop_neutral_ones(node: EinsumNode, slot: int) -> EinsumNode:
    _check_slot(node, slot)
    if not isinstance(node.args[slot], OnesLeaf):
        raise PreconditionViolated(f"Operand {slot} is not an all-ones tensor", reason="not-ones")
    rest = [s for k, s in enumerate(node.inputs) if k != slot]
    if not rest:
        raise WouldChangeSemantics("Cannot drop the only operand")
    new_symbols = sigma(node.inputs[slot]) - _union(rest)
    if new_symbols:
        raise WouldChangeSemantics(
            "All-ones operand binds " + ", ".join(map(str, sorted(new_symbols)))
            + " which no other operand does"
        )
    return EinsumNode(
        FormatString(tuple(rest), node.output),
        tuple(a for k, a in enumerate(node.args) if k != slot),
    )


def add_neutral_ones(node: EinsumNode, index: IndexString, shapes: Mapping[str, Shape] = {}) -> EinsumNode:
    index = tuple(index)
    unknown = sigma(index) - node.format.input_symbols()
    if unknown:
        raise WouldChangeSemantics(
            "Symbols " + ", ".join(map(str, sorted(unknown))) + " would add global positions"
        )
    env = node_environment(node, shapes)
    return EinsumNode(
        FormatString(node.inputs + (index,), node.output),
        node.args + (OnesLeaf(tuple(env[s] for s in index)),),
    )


def _constant_parts(leaf: Union[Expression, Tensor]) -> tuple[Expression, Shape]:
    """(scalar operand, shape) of a constant leaf or a tensor with a single repeated entry."""
    if isinstance(leaf, Tensor):
        first = leaf.values.flat[0]
        if not np.all(leaf.values == first):
            raise NotConstant("Tensor entries are not all equal")
        return ScalarLeaf(first.item()), leaf.shape
    if isinstance(leaf, ScalarLeaf):
        return leaf, ()
    if isinstance(leaf, OnesLeaf):
        return OnesLeaf(()), leaf.shape
    if isinstance(leaf, DeltaLeaf) and all(d == 1 for d in leaf.dims):
        return OnesLeaf(()), leaf.shape
    raise NotConstant(f"{type(leaf).__name__} is not a constant tensor")


def vectorize_constant(leaf: Union[Expression, Tensor], index: Optional[IndexString] = None) -> EinsumNode:
    """Constant tensor c as #( ,i_1,...,i_o -> I; c, 1, ..., 1)."""
    scalar, shape = _constant_parts(leaf)
    index = distinct_symbols(len(shape)) if index is None else tuple(index)
    if len(index) != len(shape) or len(set(index)) != len(index):
        raise PreconditionViolated(
            f"Need {len(shape)} pairwise distinct symbols, got {len(index)}", reason="bad-index"
        )
    return EinsumNode(
        FormatString(((),) + tuple((s,) for s in index), index),
        (scalar,) + tuple(OnesLeaf((d,)) for d in shape),
    )


def substitute_delta(leaf: Expression, index: Optional[IndexString] = None) -> EinsumNode:
    """δ_o as #(I -> II; 1_o)."""
    if not isinstance(leaf, DeltaLeaf):
        raise NotADelta(f"{type(leaf).__name__} is not a delta tensor")
    index = distinct_symbols(leaf.order) if index is None else tuple(index)
    if len(index) != leaf.order or len(set(index)) != len(index):
        raise PreconditionViolated(
            f"Need {leaf.order} pairwise distinct symbols, got {len(index)}", reason="bad-index"
        )
    return EinsumNode(FormatString((index,), index + index), (OnesLeaf(leaf.dims),))


def _is_one(value, semiring: SemiringSpec) -> bool:
    return bool(np.asarray(value == semiring.one))


def remove_deltas_and_constants(node: EinsumNode, semiring: SemiringSpec) -> EinsumNode:
    """Normal form: no delta, at most one scalar, one ones-vector per otherwise unbound symbol."""
    # merge deltas whose symbols another operand binds
    while True:
        slot = next(
            (
                k for k, (index, arg) in enumerate(node.operands())
                if isinstance(arg, DeltaLeaf) and arg.order == 1 and index[0] != index[1]
                and set(index) & _union(s for j, s in enumerate(node.inputs) if j != k)
            ),
            None,
        )
        if slot is None:
            break
        node = delta_merge(node, slot, keep="min")

    # substitute the remaining deltas and vectorize higher-order ones, denesting in place
    slot = 0
    while slot < node.format.arity:
        arg = node.args[slot]
        if isinstance(arg, DeltaLeaf):
            replacement = substitute_delta(arg)
        elif isinstance(arg, OnesLeaf) and len(arg.shape) >= 2:
            replacement = vectorize_constant(arg)
        else:
            slot += 1
            continue
        node = denest_at(node.replace(args=_replace_at(node.args, slot, replacement)), slot)

    # fold scalar constants
    scalar_slots = [
        k for k, (index, arg) in enumerate(node.operands())
        if not index and isinstance(arg, (ScalarLeaf, OnesLeaf))
    ]
    if scalar_slots:
        values = [
            semiring.coerce(arg.value) if isinstance(arg, ScalarLeaf) else semiring.coerce(semiring.one)
            for arg in (node.args[k] for k in scalar_slots)
        ]
        value = np.asarray(reduce(semiring.combine, values)).item()
        keep = [k for k in range(node.format.arity) if k not in scalar_slots]
        inputs = [node.inputs[k] for k in keep]
        args = [node.args[k] for k in keep]
        if not _is_one(value, semiring):
            inputs.insert(0, ())
            args.insert(0, ScalarLeaf(value))
        elif not args:
            inputs.append(())
            args.append(OnesLeaf(()))
        node = EinsumNode(FormatString(tuple(inputs), node.output), tuple(args))

    # ones vectors: keep one per symbol that no ordinary operand binds
    ordinary = _union(
        index for index, arg in node.operands() if not isinstance(arg, CONSTANT_LEAVES)
    )
    seen: set[IndexSymbol] = set()
    slot = 0
    while slot < node.format.arity:
        index, arg = node.inputs[slot], node.args[slot]
        if isinstance(arg, OnesLeaf) and len(index) == 1:
            if index[0] in ordinary or index[0] in seen:
                node = drop_neutral_ones(node, slot)
                continue
            seen.add(index[0])
        slot += 1
    return node


def normalize(expr: Expression, semiring: SemiringSpec) -> Expression:
    """``remove_deltas_and_constants`` on every einsum node, bottom-up.

    Deltas outside einsum operand positions are substituted first.
    """
    if isinstance(expr, DeltaLeaf):
        return remove_deltas_and_constants(substitute_delta(expr), semiring)
    if isinstance(expr, AggregateNode):
        return AggregateNode(tuple(normalize(t, semiring) for t in expr.terms))
    if not isinstance(expr, EinsumNode):
        return expr
    args = tuple(a if isinstance(a, DeltaLeaf) else normalize(a, semiring) for a in expr.args)
    return remove_deltas_and_constants(expr.replace(args=args), semiring)
