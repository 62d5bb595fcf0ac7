"""
Reference evaluator: brute-force sum-of-products over all global positions.

Every einsum node enumerates the Cartesian product of its symbols' axis
ranges in lexicographic order (symbols sorted), combines the projected
operand entries with ⊗ and scatters them into the output with ⊕.  Nested
nodes are evaluated innermost-first and fully materialized.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import reduce
from typing import Mapping, Optional, Sequence

import numpy as np

from engine.core import (
    AggregateNode,
    DeltaLeaf,
    EinsumNode,
    Expression,
    IndexString,
    IndexSymbol,
    NamedLeaf,
    OnesLeaf,
    ScalarLeaf,
    Tensor,
    environment,
    materialize_delta,
    materialize_ones,
)
from engine.errors import ShapeMismatch, UnassignedSymbol, UnboundName
from engine.semiring import SemiringSpec

logger = logging.getLogger(__name__)

GlobalPosition = Mapping[IndexSymbol, int]


@dataclass
class EvalStats:
    """Instrumentation: global positions visited across einsum nodes."""

    positions: int = 0
    nodes: int = 0


def project(position: GlobalPosition, index: IndexString) -> tuple[int, ...]:
    try:
        return tuple(position[s] for s in index)
    except KeyError as exc:
        raise UnassignedSymbol(f"Global position assigns no coordinate to {exc.args[0]}") from None


def eval_einsum(
    node: EinsumNode,
    arg_values: Sequence[Tensor],
    semiring: SemiringSpec,
    stats: Optional[EvalStats] = None,
) -> Tensor:
    env = environment(node.format, (t.shape for t in arg_values))
    node.format.check()

    scope = sorted(env)
    extents = tuple(env[s] for s in scope)
    axis = {s: k for k, s in enumerate(scope)}
    count = math.prod(extents)
    # grid[k] holds the coordinate of scope[k] at every global position
    grid = np.indices(extents, dtype=np.intp) if scope else np.zeros((0,), dtype=np.intp)

    factors = []
    for index, tensor in zip(node.inputs, arg_values):
        picked = tensor.values[tuple(grid[axis[s]] for s in index)]
        factors.append(np.broadcast_to(np.asarray(picked, dtype=semiring.dtype), extents))
    combined = reduce(semiring.combine, factors).astype(semiring.dtype, copy=False).ravel()

    out_shape = tuple(env[s] for s in node.output)
    flat_out = np.zeros(count, dtype=np.intp)
    for s in node.output:
        flat_out = flat_out * env[s] + grid[axis[s]].ravel()
    result = np.full(math.prod(out_shape), semiring.zero, dtype=semiring.dtype)
    # unbuffered scatter in row-major order; positions never hit keep the zero
    semiring.aggregate.at(result, flat_out, combined)

    if stats is not None:
        stats.positions += combined.size
        stats.nodes += 1
    return Tensor(result.reshape(out_shape))


def evaluate(
    expr: Expression,
    bindings: Mapping[str, Tensor],
    semiring: SemiringSpec,
    stats: Optional[EvalStats] = None,
) -> Tensor:
    """Value of ``expr`` over ``semiring`` (the ``eval`` operation)."""
    if isinstance(expr, NamedLeaf):
        if expr.name not in bindings:
            raise UnboundName(expr.name)
        return Tensor(semiring.coerce(bindings[expr.name].values))
    if isinstance(expr, DeltaLeaf):
        return materialize_delta(expr.order, expr.dims, semiring)
    if isinstance(expr, OnesLeaf):
        return materialize_ones(expr.shape, semiring)
    if isinstance(expr, ScalarLeaf):
        return Tensor(semiring.coerce(expr.value))
    if isinstance(expr, AggregateNode):
        values = [evaluate(t, bindings, semiring, stats) for t in expr.terms]
        for other in values[1:]:
            if other.shape != values[0].shape:
                raise ShapeMismatch(
                    f"Elementwise aggregate over shapes {values[0].shape} and {other.shape}"
                )
        return Tensor(reduce(semiring.aggregate, (v.values for v in values)).astype(semiring.dtype))
    args = [evaluate(a, bindings, semiring, stats) for a in expr.args]
    return eval_einsum(expr, args, semiring, stats)
