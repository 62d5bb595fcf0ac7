"""
Exception hierarchy shared by every engine module.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Optional


@dataclass(frozen=True)
class SourceSpan:
    start: int
    end: int

    def __post_init__(self) -> None:
        if not 0 <= self.start <= self.end:
            raise ValueError(f"Invalid span {self.start}:{self.end}")

    def __str__(self) -> str:
        return f"{self.start}:{self.end}"


class EinsumError(Exception):
    """Base class for everything the engine raises on bad input."""

    reason = "error"


class ParseError(EinsumError):
    reason = "syntax"

    def __init__(self, span: SourceSpan, message: str):
        super().__init__(f"{message} at {span}")
        self.span = span
        self.message = message


class ConstraintViolation(EinsumError):
    reason = "constraint"


class NotAnElement(ConstraintViolation, ValueError):
    """A literal or binding entry outside the chosen semiring."""

    reason = "not-an-element"


class ArityMismatch(EinsumError):
    reason = "arity"


class AxisMismatch(EinsumError):
    reason = "axis-mismatch"

    def __init__(self, symbol: Any, first: int, second: int):
        super().__init__(f"Axis length mismatch for symbol {symbol}: {first} vs {second}")
        self.symbol = symbol
        self.first = first
        self.second = second


class UnboundName(EinsumError):
    reason = "unbound-name"

    def __init__(self, name: str):
        super().__init__(f"No binding for tensor {name!r}")
        self.name = name


class UnassignedSymbol(EinsumError):
    reason = "unassigned-symbol"


class ShapeMismatch(EinsumError):
    reason = "shape-mismatch"


# --------------------------------------------------------------------------- #
# Rewrite failures
# --------------------------------------------------------------------------- #
class RewriteError(EinsumError):
    """A rewrite rule's precondition does not hold."""

    def __init__(self, message: str, reason: Optional[str] = None):
        super().__init__(message)
        if reason is not None:
            self.reason = reason


class PreconditionViolated(RewriteError):
    reason = "precondition"


class InvalidPermutation(RewriteError):
    reason = "invalid-permutation"


class InvalidGrouping(RewriteError):
    reason = "invalid-grouping"

    def __init__(self, message: str, missing: tuple = ()):
        super().__init__(message)
        self.missing = missing


class LengthMismatch(RewriteError):
    reason = "length-mismatch"


class NotNested(RewriteError):
    reason = "not-nested"


class SymbolNotFresh(RewriteError):
    reason = "symbol-not-fresh"


class SymbolAbsent(RewriteError):
    reason = "symbol-absent"


class NotADelta(RewriteError):
    reason = "not-a-delta"


class DegenerateDelta(RewriteError):
    reason = "degenerate-delta"


class NotAnAggregate(RewriteError):
    reason = "not-an-aggregate"


class NotFactorable(RewriteError):
    reason = "not-factorable"


class NotIdentity(RewriteError):
    reason = "not-identity"


class WouldChangeSemantics(RewriteError):
    reason = "would-change-semantics"


class NotConstant(RewriteError):
    reason = "not-constant"


class MalformedPath(RewriteError):
    reason = "malformed-path"


class TargetInUse(RewriteError):
    reason = "target-in-use"
