"""
Domain types of the einsum language: index symbols, index strings,
format strings, shapes, dense tensors and the expression tree, plus the
three validity constraints (index strings, axis lengths, output string).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import total_ordering
from typing import Iterable, Iterator, Mapping, Optional, Union

import numpy as np

from engine.errors import (
    ArityMismatch,
    AxisMismatch,
    ConstraintViolation,
    ShapeMismatch,
    SourceSpan,
    UnboundName,
)
from engine.semiring import SemiringSpec

# --------------------------------------------------------------------------- #
# Symbols and strings
# --------------------------------------------------------------------------- #

@total_ordering
@dataclass(frozen=True)
class IndexSymbol:
    """A letter (``"i"``) or a non-negative integer tag (``7``, printed ``{7}``)."""

    token: Union[str, int]

    def __post_init__(self) -> None:
        if isinstance(self.token, bool):
            raise TypeError("Index symbol tokens must be letters or integers")
        if isinstance(self.token, str):
            if len(self.token) != 1 or not ("a" <= self.token <= "z" or "A" <= self.token <= "Z"):
                raise ValueError(f"Index symbol letters must be a single a-z/A-Z, got {self.token!r}")
        elif isinstance(self.token, int):
            if self.token < 0:
                raise ValueError(f"Integer tags must be non-negative, got {self.token}")
        else:
            raise TypeError(f"Unsupported index symbol token {self.token!r}")

    @property
    def is_tag(self) -> bool:
        return isinstance(self.token, int)

    def _key(self) -> tuple[int, Union[str, int]]:
        # letters sort before integer tags
        return (1, self.token) if self.is_tag else (0, self.token)

    def __lt__(self, other: IndexSymbol) -> bool:
        if not isinstance(other, IndexSymbol):
            return NotImplemented
        return self._key() < other._key()

    def __str__(self) -> str:
        return f"{{{self.token}}}" if self.is_tag else self.token


IndexString = tuple[IndexSymbol, ...]
Shape = tuple[int, ...]


def symbols(*tokens: Union[str, int]) -> IndexString:
    """Build an index string; a multi-letter str contributes one symbol per letter."""
    out: list[IndexSymbol] = []
    for token in tokens:
        if isinstance(token, str):
            out.extend(IndexSymbol(ch) for ch in token)
        else:
            out.append(IndexSymbol(token))
    return tuple(out)


def sigma(index: Iterable[IndexSymbol]) -> frozenset[IndexSymbol]:
    return frozenset(index)


def check_shape(dims: Iterable[int]) -> Shape:
    dims = tuple(int(d) for d in dims)
    for d in dims:
        if d < 1:
            raise ValueError(f"Axis lengths must be positive, got {dims}")
    return dims


@dataclass(frozen=True)
class FormatString:
    inputs: tuple[IndexString, ...]
    output: IndexString

    def __post_init__(self) -> None:
        object.__setattr__(self, "inputs", tuple(tuple(s) for s in self.inputs))
        object.__setattr__(self, "output", tuple(self.output))
        if not self.inputs:
            raise ArityMismatch("An einsum needs at least one input index string")

    @property
    def arity(self) -> int:
        return len(self.inputs)

    def input_symbols(self) -> frozenset[IndexSymbol]:
        return frozenset(itertools.chain.from_iterable(self.inputs))

    def symbols(self) -> frozenset[IndexSymbol]:
        return self.input_symbols() | sigma(self.output)

    def unbound_outputs(self) -> list[IndexSymbol]:
        """Output symbols that no input string binds (constraint III)."""
        bound = self.input_symbols()
        return sorted(s for s in sigma(self.output) if s not in bound)

    def check(self) -> FormatString:
        missing = self.unbound_outputs()
        if missing:
            raise ConstraintViolation(
                "Output symbols " + ", ".join(map(str, missing)) + " appear in no input string"
            )
        return self


# --------------------------------------------------------------------------- #
# Tensors
# --------------------------------------------------------------------------- #

@dataclass(frozen=True, eq=False)
class Tensor:
    """Dense row-major tensor; ``values`` is a read-only numpy array."""

    values: np.ndarray

    def __post_init__(self) -> None:
        arr = np.array(self.values, copy=True)
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    @classmethod
    def from_entries(cls, shape: Iterable[int], entries, semiring: SemiringSpec) -> Tensor:
        shape = check_shape(shape)
        flat = semiring.coerce(list(entries)).ravel()
        expected = math.prod(shape)
        if flat.size != expected:
            raise ShapeMismatch(
                f"Shape {shape} needs {expected} entries, got {flat.size}"
            )
        return cls(flat.reshape(shape))

    @property
    def shape(self) -> Shape:
        return tuple(self.values.shape)

    @property
    def order(self) -> int:
        return self.values.ndim

    @property
    def entries(self) -> tuple:
        return tuple(self.values.ravel().tolist())

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, entries={list(self.entries)})"


def materialize_delta(order: int, dims: Iterable[int], semiring: SemiringSpec) -> Tensor:
    """Order-2o tensor that is one where the first o coordinates equal the last o."""
    dims = check_shape(dims)
    if len(dims) != order:
        raise ValueError(f"A delta of order 2*{order} needs {order} axis lengths, got {dims}")
    size = math.prod(dims)
    mask = np.eye(size, dtype=bool).reshape(dims + dims)
    return Tensor(np.where(mask, semiring.one, semiring.zero).astype(semiring.dtype))


def materialize_ones(shape: Iterable[int], semiring: SemiringSpec) -> Tensor:
    return Tensor(np.full(check_shape(shape), semiring.one, dtype=semiring.dtype))


# --------------------------------------------------------------------------- #
# Expression tree
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class NamedLeaf:
    name: str
    span: Optional[SourceSpan] = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class DeltaLeaf:
    order: int          # o; the tensor itself has order 2o
    dims: Shape
    span: Optional[SourceSpan] = field(default=None, compare=False, repr=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "dims", check_shape(self.dims))
        if len(self.dims) != self.order:
            raise ValueError(f"delta({self.order}) needs {self.order} axis lengths, got {self.dims}")

    @property
    def shape(self) -> Shape:
        return self.dims + self.dims


@dataclass(frozen=True)
class OnesLeaf:
    shape: Shape
    span: Optional[SourceSpan] = field(default=None, compare=False, repr=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "shape", check_shape(self.shape))


@dataclass(frozen=True)
class ScalarLeaf:
    value: Union[int, float, bool]
    span: Optional[SourceSpan] = field(default=None, compare=False, repr=False)

    @property
    def shape(self) -> Shape:
        return ()


@dataclass(frozen=True)
class EinsumNode:
    format: FormatString
    args: tuple["Expression", ...]
    span: Optional[SourceSpan] = field(default=None, compare=False, repr=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "args", tuple(self.args))
        if len(self.args) != self.format.arity:
            raise ArityMismatch(
                f"Format string has {self.format.arity} input strings but {len(self.args)} arguments"
            )

    @property
    def inputs(self) -> tuple[IndexString, ...]:
        return self.format.inputs

    @property
    def output(self) -> IndexString:
        return self.format.output

    def operands(self) -> Iterator[tuple[IndexString, "Expression"]]:
        return zip(self.format.inputs, self.args)

    def replace(self, inputs=None, output=None, args=None) -> EinsumNode:
        return EinsumNode(
            FormatString(
                self.format.inputs if inputs is None else inputs,
                self.format.output if output is None else output,
            ),
            self.args if args is None else args,
        )


@dataclass(frozen=True)
class AggregateNode:
    terms: tuple["Expression", ...]
    span: Optional[SourceSpan] = field(default=None, compare=False, repr=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "terms", tuple(self.terms))
        if not self.terms:
            raise ArityMismatch("An elementwise aggregate needs at least one term")


Leaf = Union[NamedLeaf, DeltaLeaf, OnesLeaf, ScalarLeaf]
Expression = Union[NamedLeaf, DeltaLeaf, OnesLeaf, ScalarLeaf, EinsumNode, AggregateNode]
CONSTANT_LEAVES = (DeltaLeaf, OnesLeaf, ScalarLeaf)


def walk(expr: Expression) -> Iterator[Expression]:
    """Pre-order traversal."""
    yield expr
    if isinstance(expr, EinsumNode):
        for arg in expr.args:
            yield from walk(arg)
    elif isinstance(expr, AggregateNode):
        for term in expr.terms:
            yield from walk(term)


def named_leaves(*exprs: Expression) -> list[str]:
    seen: dict[str, None] = {}
    for expr in exprs:
        for node in walk(expr):
            if isinstance(node, NamedLeaf):
                seen.setdefault(node.name)
    return list(seen)


def max_tag(expr: Expression) -> int:
    """Largest integer tag used anywhere in ``expr`` (-1 if none)."""
    tags = [
        s.token
        for node in walk(expr)
        if isinstance(node, EinsumNode)
        for s in node.format.symbols()
        if s.is_tag
    ]
    return max(tags, default=-1)


# --------------------------------------------------------------------------- #
# Axis inference
# --------------------------------------------------------------------------- #

AxisEnvironment = dict[IndexSymbol, int]


def environment(fmt: FormatString, arg_shapes: Iterable[Shape]) -> AxisEnvironment:
    """Bind every input symbol of one einsum node to its single axis length."""
    env: AxisEnvironment = {}
    for k, (index, shape) in enumerate(zip(fmt.inputs, arg_shapes)):
        if len(index) != len(shape):
            raise ArityMismatch(
                f"Index string {''.join(map(str, index)) or 'λ'} (operand {k}) has length "
                f"{len(index)} but the operand has order {len(shape)}"
            )
        for symbol, length in zip(index, shape):
            known = env.setdefault(symbol, length)
            if known != length:
                raise AxisMismatch(symbol, known, length)
    return env


def infer_shape(expr: Expression, shapes: Mapping[str, Shape]) -> Shape:
    if isinstance(expr, NamedLeaf):
        if expr.name not in shapes:
            raise UnboundName(expr.name)
        return tuple(shapes[expr.name])
    if isinstance(expr, (DeltaLeaf, OnesLeaf, ScalarLeaf)):
        return expr.shape
    if isinstance(expr, AggregateNode):
        term_shapes = [infer_shape(t, shapes) for t in expr.terms]
        for other in term_shapes[1:]:
            if other != term_shapes[0]:
                raise ShapeMismatch(
                    f"Elementwise aggregate over shapes {term_shapes[0]} and {other}"
                )
        return term_shapes[0]
    env = node_environment(expr, shapes)
    return tuple(env[s] for s in expr.output)


def node_environment(node: EinsumNode, shapes: Mapping[str, Shape]) -> AxisEnvironment:
    env = environment(node.format, (infer_shape(arg, shapes) for arg in node.args))
    node.format.check()
    return env


def infer_axes(expr: Expression, shapes: Mapping[str, Shape]) -> AxisEnvironment:
    """Axis environment of the outermost einsum node (checking the whole tree).

    Symbol scope is a single einsum node, so nested nodes get their own
    environments; a non-einsum root yields an empty environment.
    """
    infer_shape(expr, shapes)
    if isinstance(expr, EinsumNode):
        return node_environment(expr, shapes)
    return {}


# --------------------------------------------------------------------------- #
# Validation
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class Violation:
    constraint: str     # "I", "II", "III", "aggregate", "binding"
    message: str
    span: Optional[SourceSpan] = None

    def __str__(self) -> str:
        where = f" [{self.span}]" if self.span is not None else ""
        label = f"constraint {self.constraint}" if self.constraint in ("I", "II", "III") else self.constraint
        return f"{label}: {self.message}{where}"


@dataclass
class ValidityReport:
    violations: list[Violation] = field(default_factory=list)
    shape: Optional[Shape] = None

    @property
    def valid(self) -> bool:
        return not self.violations


def validate(expr: Expression, shapes: Optional[Mapping[str, Shape]] = None) -> ValidityReport:
    """Collect every violation of constraints I-III and aggregate shape agreement.

    With ``shapes=None`` named leaves have unknown shape and only the
    checks that need no shapes are applied.
    """
    report = ValidityReport()
    report.shape = _check(expr, shapes, report.violations)
    return report


def _check(expr: Expression, shapes, out: list[Violation]) -> Optional[Shape]:
    if isinstance(expr, NamedLeaf):
        if shapes is None:
            return None
        if expr.name not in shapes:
            out.append(Violation("binding", f"no binding for tensor {expr.name!r}", expr.span))
            return None
        return tuple(shapes[expr.name])
    if isinstance(expr, (DeltaLeaf, OnesLeaf, ScalarLeaf)):
        return expr.shape
    if isinstance(expr, AggregateNode):
        term_shapes = [_check(t, shapes, out) for t in expr.terms]
        known = [s for s in term_shapes if s is not None]
        if not known:
            return None
        if any(s != known[0] for s in known[1:]):
            out.append(Violation(
                "aggregate",
                "terms have different shapes " + ", ".join(map(str, known)),
                expr.span,
            ))
            return None
        return known[0] if len(known) == len(term_shapes) else None

    env: AxisEnvironment = {}
    for k, (index, arg) in enumerate(expr.operands()):
        shape = _check(arg, shapes, out)
        if shape is None:
            continue
        if len(index) != len(shape):
            out.append(Violation(
                "I",
                f"operand {k + 1} has order {len(shape)} but index string "
                f"{''.join(map(str, index)) or 'λ'} has length {len(index)}",
                expr.span,
            ))
            continue
        for symbol, length in zip(index, shape):
            known = env.setdefault(symbol, length)
            if known != length:
                out.append(Violation(
                    "II",
                    f"symbol {symbol} annotates axes of length {known} and {length}",
                    expr.span,
                ))
    missing = expr.format.unbound_outputs()
    for symbol in missing:
        out.append(Violation(
            "III", f"output symbol {symbol} appears in no input string", expr.span
        ))
    if missing or any(s not in env for s in expr.output):
        return None
    return tuple(env[s] for s in expr.output)
