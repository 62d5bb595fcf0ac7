"""
Random valid expressions for soundness sweeps and parser round trips.

Expressions are built top-down against a required shape, so the validity
constraints hold by construction: every operand string is drawn from symbols
whose lengths are fixed first, and every output symbol is forced into
some operand string.
"""

from __future__ import annotations

import string
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from engine import config
from engine.core import (
    AggregateNode,
    DeltaLeaf,
    EinsumNode,
    Expression,
    FormatString,
    IndexSymbol,
    NamedLeaf,
    OnesLeaf,
    ScalarLeaf,
    Shape,
)


@dataclass(frozen=True)
class GeneratorConfig:
    symbols: str = config.GENERATOR_SYMBOLS
    dims: tuple[int, int] = config.GENERATOR_DIMS        # inclusive range
    max_depth: int = config.GENERATOR_MAX_DEPTH
    max_operands: int = config.GENERATOR_MAX_OPERANDS
    max_order: int = config.GENERATOR_MAX_ORDER
    max_contracted: int = 2
    max_nodes: int = config.GENERATOR_MAX_NODES
    nest_probability: float = config.NEST_PROBABILITY
    duplicate_probability: float = config.DUPLICATE_PROBABILITY
    delta_probability: float = config.DELTA_PROBABILITY
    ones_probability: float = config.ONES_PROBABILITY
    scalar_probability: float = config.SCALAR_PROBABILITY
    aggregate_probability: float = config.AGGREGATE_PROBABILITY
    tag_probability: float = config.TAG_PROBABILITY


@dataclass(frozen=True)
class Generated:
    expression: EinsumNode
    shapes: dict[str, Shape] = field(default_factory=dict)


class _Builder:
    def __init__(self, rng: np.random.Generator, cfg: GeneratorConfig):
        self.rng = rng
        self.cfg = cfg
        self.shapes: dict[str, Shape] = {}
        # operand slots handed out so far, leaves included
        self.nodes = 0

    def chance(self, p: float) -> bool:
        return bool(self.rng.random() < p)

    def room(self, width: int) -> bool:
        return self.nodes + width <= self.cfg.max_nodes

    def length(self) -> int:
        lo, hi = self.cfg.dims
        return int(self.rng.integers(lo, hi + 1))

    def name(self, shape: Shape) -> NamedLeaf:
        n = len(self.shapes)
        name = string.ascii_uppercase[n] if n < 26 else f"T{n}"
        self.shapes[name] = shape
        return NamedLeaf(name)

    def fresh_symbol(self, used: dict[IndexSymbol, int]) -> IndexSymbol:
        letters = [c for c in self.cfg.symbols if IndexSymbol(c) not in used]
        if letters and not self.chance(self.cfg.tag_probability):
            return IndexSymbol(str(self.rng.choice(letters)))
        tag = int(self.rng.integers(0, 10))
        while IndexSymbol(tag) in used:
            tag += 1
        return IndexSymbol(tag)

    # -- expressions ---------------------------------------------------------
    def expression(self, shape: Shape, depth: int) -> Expression:
        deep_enough = 0 < depth < self.cfg.max_depth
        if deep_enough and self.chance(self.cfg.aggregate_probability) and self.room(3):
            count = int(self.rng.integers(2, 4))
            self.nodes += count
            return AggregateNode(tuple(self.expression(shape, depth + 1) for _ in range(count)))
        if depth == 0 or (
            depth < self.cfg.max_depth
            and self.chance(self.cfg.nest_probability)
            and self.room(self.cfg.max_operands)
        ):
            return self.einsum(shape, depth)
        return self.leaf(shape)

    def leaf(self, shape: Shape) -> Expression:
        half = len(shape) // 2
        if len(shape) % 2 == 0 and shape[:half] == shape[half:] and self.chance(self.cfg.delta_probability):
            return DeltaLeaf(half, shape[:half])
        if self.chance(self.cfg.ones_probability):
            return OnesLeaf(shape)
        if not shape and self.chance(self.cfg.scalar_probability):
            return ScalarLeaf(int(self.rng.integers(0, config.INT_ENTRY_MAX + 1)))
        return self.name(shape)

    def einsum(self, shape: Shape, depth: int) -> EinsumNode:
        if depth == 0:
            self.nodes += 1
        env: dict[IndexSymbol, int] = {}
        output: list[IndexSymbol] = []
        for d in shape:
            same = [s for s in dict.fromkeys(output) if env[s] == d]
            if same and self.chance(self.cfg.duplicate_probability):
                output.append(same[int(self.rng.integers(len(same)))])
            else:
                symbol = self.fresh_symbol(env)
                env[symbol] = d
                output.append(symbol)
        for _ in range(int(self.rng.integers(0, self.cfg.max_contracted + 1))):
            symbol = self.fresh_symbol(env)
            env[symbol] = self.length()

        pool = list(env)
        count = int(self.rng.integers(1, self.cfg.max_operands + 1))
        self.nodes += count
        inputs: list[list[IndexSymbol]] = []
        for _ in range(count):
            order = int(self.rng.integers(0, self.cfg.max_order + 1)) if pool else 0
            inputs.append([pool[int(k)] for k in self.rng.integers(0, len(pool), size=order)])
        used = {s for index in inputs for s in index}
        for symbol in pool:
            if symbol not in used:
                inputs[int(self.rng.integers(count))].append(symbol)

        args = tuple(self.expression(tuple(env[s] for s in index), depth + 1) for index in inputs)
        return EinsumNode(FormatString(tuple(map(tuple, inputs)), tuple(output)), args)


def expression_generator(
    seed: Union[int, np.random.Generator, None] = None,
    cfg: Optional[GeneratorConfig] = None,
    shape: Optional[Shape] = None,
) -> Generated:
    """Random valid einsum expression (root is always an einsum node).

    ``shape`` fixes the output shape; otherwise its order and lengths are
    drawn too.  The same seed always yields the same expression.  No
    expression has more than ``max(cfg.max_nodes, 1 + cfg.max_operands)``
    nodes.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    cfg = cfg or GeneratorConfig()
    builder = _Builder(rng, cfg)
    if shape is None:
        shape = tuple(builder.length() for _ in range(int(rng.integers(0, 3))))
    expr = builder.einsum(tuple(shape), 0)
    return Generated(expr, builder.shapes)
