"""
Commutative semirings over dense numpy arrays.

Aggregation and combination are numpy ufuncs, so the evaluator can
reduce and scatter with them directly (``ufunc.reduce`` / ``ufunc.at``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Optional

import numpy as np

from engine.config import FLOAT_REL_TOL, SEMIRING_NAMES
from engine.errors import NotAnElement


@dataclass(frozen=True)
class SemiringSpec:
    name: str
    zero: Any
    one: Any
    aggregate: np.ufunc      # ⊕
    combine: np.ufunc        # ⊗
    dtype: np.dtype
    rel_tol: Optional[float] = None   # None = exact equality

    @property
    def exact(self) -> bool:
        return self.rel_tol is None

    def coerce(self, values) -> np.ndarray:
        """Convert raw values (ints, floats, bools, "inf") to this semiring's dtype."""
        if isinstance(values, np.ndarray) and values.dtype != object:
            return values.astype(self.dtype)
        arr = np.asarray(values, dtype=object)
        if arr.dtype == object and arr.size:
            arr = np.vectorize(self.element, otypes=[object])(arr)
        return np.asarray(arr, dtype=self.dtype)

    def element(self, value) -> Any:
        if isinstance(value, str):
            text = value.strip().lower()
            if text in ("inf", "+inf", "infinity"):
                value = math.inf
            elif text in ("true", "false"):
                value = text == "true"
            else:
                try:
                    value = float(text) if any(c in text for c in ".e") else int(text)
                except ValueError:
                    raise NotAnElement(f"{value!r} is not a number") from None
        if isinstance(value, float) and math.isinf(value) and self.name != "tropical":
            raise NotAnElement(f"inf is only an element of the tropical semiring, not {self.name}")
        if isinstance(value, float) and math.isnan(value):
            raise NotAnElement(f"nan is not an element of the {self.name} semiring")
        if self.name == "bool":
            return bool(value)
        if self.name == "int":
            if isinstance(value, float) and not value.is_integer():
                raise NotAnElement(f"{value} is not an integer")
            return int(value)
        return float(value)

    def add(self, a, b):
        return self.aggregate(a, b)

    def mul(self, a, b):
        return self.combine(a, b)

    def equal(self, a: np.ndarray, b: np.ndarray) -> bool:
        a, b = np.asarray(a), np.asarray(b)
        if a.shape != b.shape:
            return False
        if self.exact:
            return bool(np.array_equal(a, b))
        return bool(np.allclose(a, b, rtol=self.rel_tol, atol=0.0, equal_nan=False))

    def first_difference(self, a: np.ndarray, b: np.ndarray) -> Optional[tuple[int, ...]]:
        """Row-major first position where ``a`` and ``b`` disagree, or None."""
        a, b = np.asarray(a), np.asarray(b)
        if self.exact:
            unequal = a != b
        else:
            unequal = ~np.isclose(a, b, rtol=self.rel_tol, atol=0.0)
        hits = np.argwhere(unequal)
        if hits.size == 0:
            return None
        return tuple(int(i) for i in hits[0])

    def to_python(self, value) -> Any:
        """Plain Python scalar for printing and JSON output."""
        value = np.asarray(value).item()
        if self.name == "tropical" and math.isinf(value):
            return "inf"
        if self.name == "tropical" and float(value).is_integer():
            return int(value)
        return value


INT = SemiringSpec("int", 0, 1, np.add, np.multiply, np.dtype(np.int64))
FLOAT = SemiringSpec("float", 0.0, 1.0, np.add, np.multiply, np.dtype(np.float64), FLOAT_REL_TOL)
BOOL = SemiringSpec("bool", False, True, np.logical_or, np.logical_and, np.dtype(np.bool_))
# min-plus over the integers extended with +inf; stored as float64 so inf is representable
TROPICAL = SemiringSpec("tropical", math.inf, 0.0, np.minimum, np.add, np.dtype(np.float64))

SEMIRINGS = {s.name: s for s in (INT, FLOAT, BOOL, TROPICAL)}
assert tuple(SEMIRINGS) == SEMIRING_NAMES


def get_semiring(name: str) -> SemiringSpec:
    try:
        return SEMIRINGS[name]
    except KeyError:
        raise ValueError(
            f"Unknown semiring {name!r}; choose one of {', '.join(SEMIRINGS)}"
        ) from None
