"""
Randomized and exhaustive equivalence checking.

This is falsification, not proof: ``equal-on-all-trials`` only says no
sampled binding set told the two expressions apart.  Every trial draws
from its own generator spawned off the master seed, so the report does
not depend on the order trials run in.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Optional

import numpy as np

from engine.bindings import draw_shapes
from engine.config import (
    DEFAULT_SEED,
    DEFAULT_TRIALS,
    EXHAUSTIVE_MAX_ENTRIES,
    EXHAUSTIVE_VALUES,
    INT_ENTRY_MAX,
    TROPICAL_ENTRY_MAX,
    TROPICAL_INF_PROBABILITY,
)
from engine.core import Expression, Shape, Tensor, named_leaves, validate
from engine.errors import ConstraintViolation, ShapeMismatch
from engine.evaluator import evaluate
from engine.semiring import SemiringSpec, get_semiring

logger = logging.getLogger(__name__)

EQUAL = "equal-on-all-trials"
COUNTEREXAMPLE = "counterexample"


@dataclass
class EquivalenceReport:
    verdict: str
    trials: int
    semiring: str
    exhaustive: bool = False
    bindings: Optional[dict[str, Tensor]] = None
    position: Optional[tuple[int, ...]] = None
    values: Optional[tuple] = None          # (first, second) at ``position``
    shape: Shape = field(default=())

    @property
    def equal(self) -> bool:
        return self.verdict == EQUAL

    def to_dict(self) -> dict:
        out = {
            "verdict": self.verdict,
            "trials": self.trials,
            "semiring": self.semiring,
            "exhaustive": self.exhaustive,
            "shape": list(self.shape),
        }
        if self.bindings is not None:
            semiring = get_semiring(self.semiring)
            out["counterexample"] = {
                "bindings": {
                    name: {"shape": list(t.shape), "values": [semiring.to_python(v) for v in t.values.ravel()]}
                    for name, t in self.bindings.items()
                },
                "position": list(self.position or ()),
                "values": list(self.values or ()),
            }
        return out


def random_tensor(shape: Shape, semiring: SemiringSpec, rng: np.random.Generator) -> Tensor:
    if semiring.name == "bool":
        values = rng.integers(0, 2, size=shape).astype(bool)
    elif semiring.name == "tropical":
        values = rng.integers(0, TROPICAL_ENTRY_MAX + 1, size=shape).astype(np.float64)
        values[rng.random(size=shape) < TROPICAL_INF_PROBABILITY] = np.inf
    elif semiring.name == "float":
        values = rng.uniform(0.0, float(INT_ENTRY_MAX), size=shape)
    else:
        values = rng.integers(0, INT_ENTRY_MAX + 1, size=shape)
    return Tensor(np.asarray(values, dtype=semiring.dtype).reshape(shape))


def random_bindings(
    shapes: Mapping[str, Shape], semiring: SemiringSpec, rng: np.random.Generator
) -> dict[str, Tensor]:
    return {name: random_tensor(tuple(shape), semiring, rng) for name, shape in shapes.items()}


def exhaustive_bindings(shapes: Mapping[str, Shape], semiring: SemiringSpec):
    """Every binding set with entries from {0, 1, 2} ({false, true} for bool)."""
    values = (False, True) if semiring.name == "bool" else EXHAUSTIVE_VALUES
    names = list(shapes)
    sizes = [math.prod(shapes[n]) for n in names]
    for flat in itertools.product(values, repeat=sum(sizes)):
        out, offset = {}, 0
        for name, size in zip(names, sizes):
            out[name] = Tensor(
                np.asarray(flat[offset:offset + size], dtype=semiring.dtype).reshape(shapes[name])
            )
            offset += size
        yield out


def _require_valid(expr: Expression, shapes: Mapping[str, Shape]) -> Shape:
    report = validate(expr, shapes)
    if not report.valid:
        raise ConstraintViolation("; ".join(str(v) for v in report.violations))
    return report.shape


def _output_shape(first: Expression, second: Expression, shapes: Mapping[str, Shape]) -> Shape:
    first_shape = _require_valid(first, shapes)
    second_shape = _require_valid(second, shapes)
    if first_shape != second_shape:
        raise ShapeMismatch(f"Output shapes differ: {first_shape} vs {second_shape}")
    return first_shape


def _trial_rngs(seed: int, trials: int) -> Iterator[np.random.Generator]:
    return (np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(trials))


def _ranged_trials(
    first: Expression,
    second: Expression,
    dim_range: tuple[int, int],
    semiring: SemiringSpec,
    trials: int,
    seed: int,
):
    """Per trial: fresh axis lengths from ``dim_range``, then bindings, both off the trial's generator."""
    for rng in _trial_rngs(seed, trials):
        shapes = draw_shapes((first, second), dim_range, rng)
        shape = _output_shape(first, second, shapes)
        used = {name: tuple(shapes[name]) for name in named_leaves(first, second)}
        yield random_bindings(used, semiring, rng), shape


def check_equivalence(
    first: Expression,
    second: Expression,
    shapes: Mapping[str, Shape],
    semiring: SemiringSpec,
    trials: int = DEFAULT_TRIALS,
    seed: int = DEFAULT_SEED,
    exhaustive: bool = False,
    dim_range: Optional[tuple[int, int]] = None,
) -> EquivalenceReport:
    """Compare ``first`` and ``second`` on random (or all small) binding sets.

    Parameters
    ----------
    shapes : mapping of every named leaf in either expression to its shape.
        Ignored when ``dim_range`` is given.
    exhaustive : enumerate all {0,1,2}-valued bindings instead of sampling;
        only honoured when the total entry count is at most
        ``EXHAUSTIVE_MAX_ENTRIES``, otherwise sampling is used.
    dim_range : (low, high) inclusive; every trial draws each index
        symbol's length from it before drawing the bindings.
    """
    if dim_range is not None:
        if exhaustive:
            logger.warning("Exhaustive mode needs fixed axis lengths; sampling %d trials instead", trials)
            exhaustive = False
        candidates = _ranged_trials(first, second, dim_range, semiring, trials, seed)
        shape: Shape = ()
    else:
        shape = _output_shape(first, second, shapes)
        used = {name: tuple(shapes[name]) for name in named_leaves(first, second)}
        total = sum(math.prod(s) for s in used.values())
        if exhaustive and total > EXHAUSTIVE_MAX_ENTRIES:
            logger.warning(
                "Exhaustive mode needs at most %d entries, got %d; sampling %d trials instead",
                EXHAUSTIVE_MAX_ENTRIES, total, trials,
            )
            exhaustive = False
        if exhaustive:
            sets = exhaustive_bindings(used, semiring)
        else:
            sets = (random_bindings(used, semiring, rng) for rng in _trial_rngs(seed, trials))
        candidates = ((bindings, shape) for bindings in sets)

    run = 0
    for bindings, shape in candidates:
        run += 1
        left = evaluate(first, bindings, semiring).values
        right = evaluate(second, bindings, semiring).values
        if semiring.equal(left, right):
            continue
        position = semiring.first_difference(left, right) or ()
        report = EquivalenceReport(
            COUNTEREXAMPLE,
            run,
            semiring.name,
            exhaustive,
            bindings=bindings,
            position=position,
            values=(semiring.to_python(left[position]), semiring.to_python(right[position])),
            shape=shape,
        )
        logger.warning("Counterexample after %d trials at position %s", run, position)
        return report

    logger.info("Equal on all %d trials (%s semiring)", run, semiring.name)
    return EquivalenceReport(EQUAL, run, semiring.name, exhaustive, shape=shape)
