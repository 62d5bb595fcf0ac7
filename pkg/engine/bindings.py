"""
Tensor bindings: the JSON bindings file and shape assignments from dims.

A bindings file maps tensor names to ``{"shape": [d1, ...], "values": [...]}``
with values in row-major order.  ``values`` may be omitted when only the
shape matters (validation, equivalence checking).
"""

from __future__ import annotations

import json
import logging
import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Union

import numpy as np

from engine.config import DEFAULT_AXIS_LENGTH
from engine.core import (
    AggregateNode,
    EinsumNode,
    Expression,
    IndexSymbol,
    NamedLeaf,
    Shape,
    Tensor,
    check_shape,
    infer_shape,
    walk,
)
from engine.errors import EinsumError, ShapeMismatch
from engine.parser import parse_index_string
from engine.semiring import SemiringSpec

logger = logging.getLogger(__name__)


class BindingsError(EinsumError):
    reason = "bindings"


@dataclass
class Bindings:
    shapes: dict[str, Shape] = field(default_factory=dict)
    tensors: dict[str, Tensor] = field(default_factory=dict)

    def missing_values(self) -> list[str]:
        return [name for name in self.shapes if name not in self.tensors]


def load_bindings(source: Union[str, Path, Mapping], semiring: SemiringSpec) -> Bindings:
    """Read a bindings file (path) or an already-decoded JSON object."""
    if isinstance(source, Mapping):
        raw = source
    elif not isinstance(source, (str, os.PathLike)):
        raise BindingsError(
            f"Bindings must be a JSON object mapping names to tensors or a file path, got {type(source).__name__}"
        )
    else:
        try:
            raw = json.loads(Path(source).read_text())
        except OSError as exc:
            raise BindingsError(f"Cannot read bindings file {source}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise BindingsError(f"Bindings file {source} is not valid JSON: {exc}") from None
    if not isinstance(raw, Mapping):
        raise BindingsError("Bindings must be a JSON object mapping names to tensors")

    out = Bindings()
    for name, entry in raw.items():
        if not isinstance(entry, Mapping) or "shape" not in entry:
            raise BindingsError(f"Binding {name!r} needs a \"shape\" field")
        try:
            shape = check_shape(entry["shape"])
        except (TypeError, ValueError) as exc:
            raise BindingsError(f"Binding {name!r}: {exc}") from None
        out.shapes[name] = shape
        if entry.get("values") is None:
            logger.debug("binding %s has no values", name)
            continue
        try:
            out.tensors[name] = Tensor.from_entries(shape, entry["values"], semiring)
        except (TypeError, ValueError, ShapeMismatch) as exc:
            logger.warning("Invalid values for %s in the %s semiring: %s", name, semiring.name, exc)
            raise BindingsError(f"Binding {name!r}: {exc}") from None
    return out


def dump_bindings(tensors: Mapping[str, Tensor], semiring: SemiringSpec) -> dict:
    """JSON-ready bindings object (inverse of ``load_bindings``)."""
    return {
        name: {
            "shape": list(t.shape),
            "values": [semiring.to_python(v) for v in t.values.ravel()],
        }
        for name, t in tensors.items()
    }


# --------------------------------------------------------------------------- #
# Dims
# --------------------------------------------------------------------------- #

_RANGE = re.compile(r"^\s*(\d+)\s*-\s*(\d+)\s*$")


def parse_dim_range(text: Optional[str]) -> Optional[tuple[int, int]]:
    """``"1-4"`` -> (1, 4); None for any other form."""
    match = _RANGE.match(text or "")
    if match is None:
        return None
    lo, hi = int(match.group(1)), int(match.group(2))
    if not 1 <= lo <= hi:
        raise BindingsError(f"Axis length range {text.strip()!r} needs 1 <= low <= high")
    return lo, hi


def parse_dims(text: Optional[str]) -> tuple[dict[IndexSymbol, int], int]:
    """``"i=3,j=2"`` or a bare ``"3"`` (uniform length) -> (per-symbol lengths, default)."""
    if not text:
        return {}, DEFAULT_AXIS_LENGTH
    text = text.strip()
    if text.isdigit():
        return {}, check_shape([text])[0]
    if _RANGE.match(text):
        raise BindingsError(f"A length range such as {text!r} is only accepted by equivalence checks")
    dims: dict[IndexSymbol, int] = {}
    for part in text.split(","):
        key, sep, value = part.partition("=")
        if not sep:
            raise BindingsError(f"Expected symbol=length, got {part!r}")
        index = parse_index_string(key.strip())
        if len(index) != 1:
            raise BindingsError(f"Expected one index symbol, got {key.strip()!r}")
        try:
            dims[index[0]] = check_shape([value.strip()])[0]
        except ValueError:
            raise BindingsError(f"Invalid axis length {value.strip()!r} for {key.strip()}") from None
    return dims, DEFAULT_AXIS_LENGTH


def shapes_from_dims(
    expr: Expression,
    dims: Mapping[IndexSymbol, int],
    default: int = DEFAULT_AXIS_LENGTH,
) -> dict[str, Shape]:
    """Named-leaf shapes implied by a symbol -> length assignment.

    A named leaf takes the lengths of the index string it is annotated
    with.  Inside a nested einsum the inner output symbols inherit the
    lengths required by the enclosing operand string, and operands with a
    fixed shape (``ones(3)``, ``delta(1; 2)``) pin their symbols first.
    """
    shapes: dict[str, Shape] = {}
    _assign(expr, dict(dims), default, None, shapes)
    return shapes


def merged_shapes(
    exprs: Iterable[Expression],
    dims: Mapping[IndexSymbol, int],
    default: int = DEFAULT_AXIS_LENGTH,
) -> dict[str, Shape]:
    """``shapes_from_dims`` over several expressions sharing named leaves."""
    shapes: dict[str, Shape] = {}
    for expr in exprs:
        for name, shape in shapes_from_dims(expr, dims, default).items():
            if shapes.setdefault(name, shape) != shape:
                raise ShapeMismatch(f"Tensor {name!r} is used with shapes {shapes[name]} and {shape}")
    return shapes


def draw_shapes(
    exprs: Iterable[Expression],
    dim_range: tuple[int, int],
    rng: np.random.Generator,
) -> dict[str, Shape]:
    """Named-leaf shapes with every symbol's length drawn from ``dim_range``.

    Falls back to one uniform drawn length when the per-symbol draw
    conflicts with a tensor used under two different strings.
    """
    exprs = list(exprs)
    lo, hi = dim_range
    scope = sorted({
        s for expr in exprs for node in walk(expr) if isinstance(node, EinsumNode) for s in node.format.symbols()
    })
    dims = {s: int(rng.integers(lo, hi + 1)) for s in scope}
    uniform = int(rng.integers(lo, hi + 1))
    try:
        return merged_shapes(exprs, dims)
    except ShapeMismatch:
        logger.debug("per-symbol lengths conflict; using uniform length %d", uniform)
        return merged_shapes(exprs, {}, uniform)


def _fixed_shape(arg: Expression) -> Optional[Shape]:
    """Shape of an operand that needs no named-leaf shapes, else None."""
    if isinstance(arg, NamedLeaf):
        return None
    try:
        return infer_shape(arg, {})
    except EinsumError:
        return None


def _assign(expr, dims, default, required: Optional[Shape], shapes: dict[str, Shape]) -> None:
    if isinstance(expr, NamedLeaf):
        if required is None:
            raise ShapeMismatch(f"Cannot infer a shape for {expr.name!r} outside an einsum")
        known = shapes.setdefault(expr.name, required)
        if known != required:
            raise ShapeMismatch(f"Tensor {expr.name!r} is used with shapes {known} and {required}")
    elif isinstance(expr, AggregateNode):
        for term in expr.terms:
            _assign(term, dims, default, required, shapes)
    elif isinstance(expr, EinsumNode):
        local = dict(dims)
        for index, arg in expr.operands():
            fixed = _fixed_shape(arg)
            if fixed is not None and len(fixed) == len(index):
                local.update(zip(index, fixed))
        if required is not None and len(required) == len(expr.output):
            local.update(zip(expr.output, required))
        for index, arg in expr.operands():
            _assign(arg, local, default, tuple(local.get(s, default) for s in index), shapes)
