"""
Contraction paths: a flat einsum turned into a chain of binary einsums.

A path is a sequence of position pairs into the live operand list.  The
two picked operands are removed and the intermediate result takes the
place of the first of them, so after step k there are n-k operands left
and untouched operands keep their relative order.
"""

from __future__ import annotations

import ast
import itertools
import logging
from dataclasses import dataclass

from engine.core import EinsumNode, FormatString
from engine.errors import MalformedPath

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ContractionPath:
    steps: tuple[tuple[int, int], ...]   # 0-based

    @classmethod
    def parse(cls, text: str, one_based: bool = True) -> ContractionPath:
        """Read ``"[(2,3),(1,2)]"``; positions are 1-based unless ``one_based`` is False."""
        try:
            raw = ast.literal_eval(text.strip())
        except (ValueError, SyntaxError):
            raise MalformedPath(f"Cannot read contraction path {text!r}") from None
        if isinstance(raw, tuple) and len(raw) == 2 and all(isinstance(p, int) for p in raw):
            raw = [raw]
        try:
            steps = tuple((int(p), int(q)) for p, q in raw)
        except (TypeError, ValueError):
            raise MalformedPath(f"Contraction path {text!r} is not a list of pairs") from None
        offset = 1 if one_based else 0
        return cls(tuple((p - offset, q - offset) for p, q in steps))

    def check(self, operands: int) -> None:
        if len(self.steps) != max(operands - 1, 0):
            raise MalformedPath(
                f"A path over {operands} operands needs {max(operands - 1, 0)} steps, got {len(self.steps)}"
            )
        for k, (p, q) in enumerate(self.steps):
            live = operands - k
            if p == q or not (0 <= p < live and 0 <= q < live):
                raise MalformedPath(
                    f"Step {k + 1} picks ({p + 1},{q + 1}) but only {live} operands are live"
                )

    def __str__(self) -> str:
        return "[" + ",".join(f"({p + 1},{q + 1})" for p, q in self.steps) + "]"


def apply_contraction_path(flat: EinsumNode, path: ContractionPath) -> EinsumNode:
    """Nest ``flat`` along ``path``.

    Each intermediate keeps exactly the picked symbols that a remaining
    operand or the final output still needs, in symbol order; the last
    step produces the flat output string.
    """
    if not isinstance(flat, EinsumNode):
        raise MalformedPath("Contraction paths apply to einsum expressions")
    path.check(flat.format.arity)
    if flat.format.arity == 1:
        return flat

    live = list(flat.operands())
    for k, (p, q) in enumerate(path.steps):
        first, second = sorted((p, q))
        picked = [live[first], live[second]]
        remaining = [op for j, op in enumerate(live) if j not in (p, q)]
        if remaining:
            needed = set(itertools.chain.from_iterable(index for index, _ in remaining)) | set(flat.output)
            picked_symbols = set(itertools.chain.from_iterable(index for index, _ in picked))
            output = tuple(sorted(picked_symbols & needed))
        else:
            output = flat.output
        node = EinsumNode(
            FormatString(tuple(index for index, _ in picked), output),
            tuple(arg for _, arg in picked),
        )
        logger.debug("path step %d: %s", k + 1, node.format)
        live = remaining[:first] + [(output, node)] + remaining[first:]
    return live[0][1]
