"""
Named rewrite rules for the CLI and the HTTP API.

Rule arguments arrive as strings (``perm=2,1``, ``group=2,3``); operand
positions are 1-based here and converted to the 0-based Python API.
Every rule accepts ``at=2.1`` to address a subexpression: the second
argument of the root, then that node's first argument.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Mapping, Optional

from engine import rewrite
from engine.core import AggregateNode, EinsumNode, Expression, IndexString, IndexSymbol, Shape
from engine.errors import EinsumError, PreconditionViolated
from engine.parser import parse_index_string
from engine.paths import ContractionPath, apply_contraction_path
from engine.semiring import SemiringSpec

logger = logging.getLogger(__name__)


class RuleArgumentError(EinsumError):
    reason = "usage"


@dataclass(frozen=True)
class RuleContext:
    shapes: Mapping[str, Shape]
    semiring: SemiringSpec


@dataclass(frozen=True)
class Rule:
    name: str
    summary: str
    params: tuple[str, ...]
    required: tuple[str, ...]
    apply: Callable[[Expression, "_Args", RuleContext], Expression]


# --------------------------------------------------------------------------- #
# Argument parsing
# --------------------------------------------------------------------------- #

class _Args:
    def __init__(self, rule: str, raw: Mapping[str, str]):
        self.rule = rule
        self.raw = {k: str(v) for k, v in raw.items()}

    def get(self, key: str) -> Optional[str]:
        value = self.raw.get(key)
        return None if value is None or value.strip() == "" else value.strip()

    def require(self, key: str) -> str:
        value = self.get(key)
        if value is None:
            raise RuleArgumentError(f"Rule {self.rule} needs {key}=...")
        return value

    def positions(self, key: str, default: Optional[list[int]] = None) -> list[int]:
        value = self.get(key)
        if value is None:
            if default is None:
                raise RuleArgumentError(f"Rule {self.rule} needs {key}=...")
            return default
        try:
            numbers = [int(p) for p in value.split(",")]
        except ValueError:
            raise RuleArgumentError(f"{key} must be comma-separated positions, got {value!r}") from None
        if any(n < 1 for n in numbers):
            raise RuleArgumentError(f"{key} positions are 1-based, got {value!r}")
        return [n - 1 for n in numbers]

    def slot(self, key: str = "slot", default: Optional[int] = None) -> Optional[int]:
        if self.get(key) is None:
            return default
        values = self.positions(key)
        if len(values) != 1:
            raise RuleArgumentError(f"{key} takes a single position")
        return values[0]

    def index(self, key: str) -> Optional[IndexString]:
        value = self.get(key)
        return None if value is None else parse_index_string(value)

    def symbol(self, key: str) -> IndexSymbol:
        index = parse_index_string(self.require(key))
        if len(index) != 1:
            raise RuleArgumentError(f"{key} must be a single index symbol")
        return index[0]

    def occurrences(self, key: str) -> list[rewrite.Occurrence]:
        out = []
        for part in self.require(key).split(","):
            operand, sep, position = part.strip().partition(":")
            if not sep:
                raise RuleArgumentError(f"Occurrences are operand:position or out:position, got {part!r}")
            try:
                pos = int(position) - 1
                op = None if operand.strip() == "out" else int(operand) - 1
            except ValueError:
                raise RuleArgumentError(f"Invalid occurrence {part!r}") from None
            out.append(rewrite.Occurrence(op, pos))
        return out

    def mapping(self, key: str) -> dict[IndexSymbol, IndexSymbol]:
        out = {}
        for part in self.require(key).split(","):
            source, sep, target = part.partition(":")
            src, dst = parse_index_string(source.strip()), parse_index_string(target.strip())
            if not sep or len(src) != 1 or len(dst) != 1:
                raise RuleArgumentError(f"Renamings are symbol:symbol, got {part!r}")
            out[src[0]] = dst[0]
        return out


def _einsum(expr: Expression, rule: str) -> EinsumNode:
    if not isinstance(expr, EinsumNode):
        raise PreconditionViolated(f"Rule {rule} applies to an einsum expression", reason="not-einsum")
    return expr


def _replace_arg(node: EinsumNode, slot: Optional[int], make: Callable[[Expression], Expression]) -> EinsumNode:
    if slot is None or not 0 <= slot < node.format.arity:
        raise RuleArgumentError("slot=... must name an operand of the einsum")
    args = list(node.args)
    args[slot] = make(args[slot])
    return node.replace(args=tuple(args))


# --------------------------------------------------------------------------- #
# Rule bodies
# --------------------------------------------------------------------------- #

def _permute(expr, args, ctx):
    return rewrite.permute_args(_einsum(expr, "permute"), args.positions("perm"))


def _restricted_denest(expr, args, ctx):
    return rewrite.denest_at(_einsum(expr, "restricted-denest"), args.slot(default=0), rewrite.restricted_denest)


def _restricted_nest(expr, args, ctx):
    return rewrite.restricted_nest(
        _einsum(expr, "restricted-nest"), args.positions("group"), args.index("output") or ()
    )


def _general_denest(expr, args, ctx):
    if (args.get("full") or "").lower() in ("1", "true", "yes"):
        return rewrite.flatten(expr)
    method = args.get("method") or "graph"
    if method == "graph":
        return rewrite.denest_at(_einsum(expr, "general-denest"), args.slot(default=0))
    if method == "deltas":
        return rewrite.denest_at(
            _einsum(expr, "general-denest"),
            args.slot(default=0),
            lambda node: rewrite.denest_by_deltas(node, ctx.shapes),
        )
    raise RuleArgumentError(f"method must be graph or deltas, not {method!r}")


def _delta_split(expr, args, ctx):
    return rewrite.delta_split(
        _einsum(expr, "delta-split"),
        args.symbol("symbol"),
        args.occurrences("occurrences"),
        args.symbol("new"),
        ctx.shapes,
    )


def _delta_merge(expr, args, ctx):
    return rewrite.delta_merge(_einsum(expr, "delta-merge"), args.slot(default=0), args.get("keep") or "left")


def _distribute(expr, args, ctx):
    return rewrite.distribute(_einsum(expr, "distribute"), args.slot())


def _factor(expr, args, ctx):
    return rewrite.factor(expr, ctx.shapes or None)


def _identity(expr, args, ctx):
    node = _einsum(expr, "identity")
    slot = args.slot()
    if slot is None:
        return rewrite.eliminate_identity(node)
    return _replace_arg(node, slot, lambda a: rewrite.eliminate_identity(_einsum(a, "identity")))


def _drop_ones(expr, args, ctx):
    return rewrite.drop_neutral_ones(_einsum(expr, "drop-ones"), args.slot())


def _add_ones(expr, args, ctx):
    index = args.index("string")
    if index is None:
        raise RuleArgumentError("Rule add-ones needs string=...")
    return rewrite.add_neutral_ones(_einsum(expr, "add-ones"), index, ctx.shapes)


def _vectorize_constant(expr, args, ctx):
    index = args.index("string")
    if isinstance(expr, EinsumNode) and args.get("slot"):
        return _replace_arg(expr, args.slot(), lambda a: rewrite.vectorize_constant(a, index))
    return rewrite.vectorize_constant(expr, index)


def _substitute_delta(expr, args, ctx):
    index = args.index("string")
    if isinstance(expr, EinsumNode) and args.get("slot"):
        return _replace_arg(expr, args.slot(), lambda a: rewrite.substitute_delta(a, index))
    return rewrite.substitute_delta(expr, index)


def _normalize(expr, args, ctx):
    return rewrite.normalize(expr, ctx.semiring)


def _apply_path(expr, args, ctx):
    return apply_contraction_path(_einsum(expr, "apply-path"), ContractionPath.parse(args.require("path")))


def _rename(expr, args, ctx):
    return rewrite.rename_symbols(_einsum(expr, "rename"), args.mapping("map"))


RULES: dict[str, Rule] = {
    r.name: r
    for r in (
        Rule("permute", "reorder operands with their strings", ("perm",), ("perm",), _permute),
        Rule("restricted-denest", "denest when strings match and nothing else is shared",
             ("slot",), (), _restricted_denest),
        Rule("restricted-nest", "group operands into an inner einsum",
             ("group", "output"), ("group",), _restricted_nest),
        Rule("general-denest", "denest through the index symbol graph (full=true flattens, method=deltas splits and merges)",
             ("slot", "full", "method"), (), _general_denest),
        Rule("delta-split", "split occurrences of a symbol through a delta",
             ("symbol", "occurrences", "new"), ("symbol", "occurrences", "new"), _delta_split),
        Rule("delta-merge", "remove an order-2 delta by merging its symbols",
             ("slot", "keep"), (), _delta_merge),
        Rule("distribute", "distribute over an aggregate operand", ("slot",), (), _distribute),
        Rule("factor", "factor an aggregate of einsums differing in one operand", (), (), _factor),
        Rule("identity", "drop #(I->I; A) with distinct symbols", ("slot",), (), _identity),
        Rule("drop-ones", "drop an all-ones operand that binds nothing new", ("slot",), ("slot",), _drop_ones),
        Rule("add-ones", "add an all-ones operand over bound symbols", ("string",), ("string",), _add_ones),
        Rule("vectorize-constant", "write a constant tensor as scalar times ones vectors",
             ("slot", "string"), (), _vectorize_constant),
        Rule("substitute-delta", "write a delta as #(I->II; ones)", ("slot", "string"), (), _substitute_delta),
        Rule("normalize", "remove deltas and constants bottom-up", (), (), _normalize),
        Rule("apply-path", "nest a flat einsum along a contraction path", ("path",), ("path",), _apply_path),
        Rule("rename", "alpha-rename symbols of one einsum", ("map",), ("map",), _rename),
    )
}


# --------------------------------------------------------------------------- #
# Dispatch
# --------------------------------------------------------------------------- #

def parse_rule_args(items: list[str]) -> dict[str, str]:
    """``["perm=2,1", "keep=left"]`` -> dict."""
    out = {}
    for item in items:
        key, sep, value = item.partition("=")
        if not sep or not key.strip():
            raise RuleArgumentError(f"Rule arguments are key=value, got {item!r}")
        out[key.strip()] = value
    return out


def _address(text: Optional[str]) -> list[int]:
    if not text:
        return []
    try:
        steps = [int(p) - 1 for p in text.split(".")]
    except ValueError:
        raise RuleArgumentError(f"at= takes dotted 1-based positions, got {text!r}") from None
    if any(s < 0 for s in steps):
        raise RuleArgumentError(f"at= positions are 1-based, got {text!r}")
    return steps


def _children(expr: Expression) -> tuple:
    if isinstance(expr, EinsumNode):
        return expr.args
    if isinstance(expr, AggregateNode):
        return expr.terms
    return ()


def _with_child(expr: Expression, k: int, child: Expression) -> Expression:
    if isinstance(expr, EinsumNode):
        return expr.replace(args=expr.args[:k] + (child,) + expr.args[k + 1:])
    return AggregateNode(expr.terms[:k] + (child,) + expr.terms[k + 1:])


def _apply_at(expr: Expression, path: list[int], fn: Callable[[Expression], Expression]) -> Expression:
    if not path:
        return fn(expr)
    children = _children(expr)
    if not 0 <= path[0] < len(children):
        raise RuleArgumentError(f"at= position {path[0] + 1} does not exist")
    return _with_child(expr, path[0], _apply_at(children[path[0]], path[1:], fn))


def apply_rule(
    name: str,
    expr: Expression,
    raw_args: Mapping[str, str],
    shapes: Mapping[str, Shape],
    semiring: SemiringSpec,
) -> Expression:
    if name not in RULES:
        raise RuleArgumentError(f"Unknown rule {name!r}; choose one of {', '.join(RULES)}")
    rule = RULES[name]
    raw_args = dict(raw_args)
    where = _address(raw_args.pop("at", None))
    unknown = sorted(set(raw_args) - set(rule.params))
    if unknown:
        raise RuleArgumentError(f"Rule {name} does not take {', '.join(unknown)}")
    args = _Args(name, raw_args)
    for key in rule.required:
        args.require(key)
    ctx = RuleContext(shapes, semiring)
    result = _apply_at(expr, where, lambda e: rule.apply(e, args, ctx))
    logger.debug("applied %s %s", name, raw_args)
    return result
