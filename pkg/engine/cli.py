"""
Command-line surface: validate, eval, rewrite and equiv.

Exit codes: 0 success, 1 semantic failure (constraint violations, rule
preconditions, counterexamples), 2 usage or parse errors.  An expression
argument starting with ``@`` is read from that file.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Optional, Sequence, Union

from engine.bindings import Bindings, BindingsError, load_bindings, merged_shapes, parse_dim_range, parse_dims
from engine.config import DEFAULT_SEED, DEFAULT_SEMIRING, DEFAULT_TRIALS, LOG_LEVEL, SEMIRING_NAMES
from engine.core import Expression, Shape, validate
from engine.equivalence import EquivalenceReport, check_equivalence
from engine.errors import EinsumError, ParseError, ShapeMismatch, SourceSpan
from engine.evaluator import evaluate
from engine.parser import parse_expression, render
from engine.rules import RULES, RuleArgumentError, apply_rule, parse_rule_args
from engine.semiring import SemiringSpec, get_semiring

logger = logging.getLogger(__name__)

USAGE_ERRORS = (ParseError, RuleArgumentError, BindingsError)


@dataclass
class CliConfig:
    command: str
    expressions: list[str]
    bindings: Union[str, Path, Mapping, None] = None
    semiring: str = DEFAULT_SEMIRING
    seed: int = DEFAULT_SEED
    trials: int = DEFAULT_TRIALS
    rule: Optional[str] = None
    rule_args: dict[str, str] = field(default_factory=dict)
    verify: bool = False
    dims: Optional[str] = None
    exhaustive: bool = False
    output: str = "human"


@dataclass
class CommandResult:
    status: int
    record: dict
    lines: list[str] = field(default_factory=list)


# --------------------------------------------------------------------------- #
# Helpers
# --------------------------------------------------------------------------- #

def read_expression(text: str) -> Expression:
    """Parse ``text`` (or the file named by ``@path``); every failure is a parse error."""
    if text.startswith("@"):
        try:
            text = Path(text[1:]).read_text()
        except OSError as exc:
            raise BindingsError(f"Cannot read expression file {text[1:]}: {exc}") from None
    try:
        return parse_expression(text)
    except ParseError:
        raise
    except EinsumError as exc:
        raise ParseError(SourceSpan(0, len(text)), str(exc)) from None


def _bindings(cfg: CliConfig, semiring: SemiringSpec) -> Optional[Bindings]:
    return None if cfg.bindings is None else load_bindings(cfg.bindings, semiring)


def _shapes(cfg: CliConfig, bindings: Optional[Bindings], *exprs: Expression) -> dict[str, Shape]:
    """Named-leaf shapes from the bindings file, else from --dims (or the default length)."""
    if bindings is not None:
        return dict(bindings.shapes)
    dims, default = parse_dims(cfg.dims)
    return merged_shapes(exprs, dims, default)


def _values(tensor_values: Sequence, semiring: SemiringSpec) -> list:
    return [semiring.to_python(v) for v in tensor_values]


def _report_lines(report: EquivalenceReport, semiring: SemiringSpec) -> list[str]:
    if report.equal:
        mode = "exhaustive" if report.exhaustive else "random"
        return [f"equal on all {report.trials} {mode} trials ({report.semiring} semiring)"]
    lines = [
        f"counterexample after {report.trials} trials ({report.semiring} semiring)",
        f"  position {list(report.position)}: {report.values[0]} vs {report.values[1]}",
    ]
    for name, tensor in (report.bindings or {}).items():
        lines.append(f"  {name} shape {list(tensor.shape)} values {_values(tensor.values.ravel(), semiring)}")
    return lines


# --------------------------------------------------------------------------- #
# Commands
# --------------------------------------------------------------------------- #

def cmd_validate(cfg: CliConfig) -> CommandResult:
    expr = read_expression(cfg.expressions[0])
    semiring = get_semiring(cfg.semiring)
    bindings = _bindings(cfg, semiring)
    shapes = _shapes(cfg, bindings, expr) if bindings is not None or cfg.dims else None
    report = validate(expr, shapes)
    record = {
        "valid": report.valid,
        "shape": None if report.shape is None else list(report.shape),
        "violations": [
            {
                "constraint": v.constraint,
                "message": v.message,
                "span": None if v.span is None else [v.span.start, v.span.end],
            }
            for v in report.violations
        ],
    }
    if report.valid:
        lines = ["valid"] + ([f"output shape {list(report.shape)}"] if report.shape is not None else [])
        return CommandResult(0, record, lines)
    return CommandResult(1, record, ["invalid"] + [f"  {v}" for v in report.violations])


def cmd_eval(cfg: CliConfig) -> CommandResult:
    expr = read_expression(cfg.expressions[0])
    semiring = get_semiring(cfg.semiring)
    bindings = _bindings(cfg, semiring) or Bindings()
    report = validate(expr, bindings.shapes)
    if not report.valid:
        record = {"error": "; ".join(map(str, report.violations)), "reason": "constraint"}
        return CommandResult(1, record, ["invalid"] + [f"  {v}" for v in report.violations])
    result = evaluate(expr, bindings.tensors, semiring)
    values = _values(result.values.ravel(), semiring)
    record = {"semiring": semiring.name, "shape": list(result.shape), "values": values}
    if result.order == 0:
        return CommandResult(0, record, [str(values[0])])
    return CommandResult(0, record, [f"shape {list(result.shape)}", f"values {values}"])


def cmd_rewrite(cfg: CliConfig) -> CommandResult:
    expr = read_expression(cfg.expressions[0])
    semiring = get_semiring(cfg.semiring)
    bindings = _bindings(cfg, semiring)
    try:
        shapes = _shapes(cfg, bindings, expr)
    except ShapeMismatch:
        if cfg.verify:
            raise
        shapes = {}
    result = apply_rule(cfg.rule, expr, cfg.rule_args, shapes, semiring)
    record = {"rule": cfg.rule, "input": render(expr), "output": render(result)}
    lines = [render(result)]
    if not cfg.verify:
        return CommandResult(0, record, lines)

    report = check_equivalence(expr, result, shapes, semiring, cfg.trials, cfg.seed)
    record["verification"] = report.to_dict()
    if report.equal:
        return CommandResult(0, record, lines + ["verified: " + _report_lines(report, semiring)[0]])
    logger.error("Rule %s changed the value of %s", cfg.rule, render(expr))
    return CommandResult(1, record, lines + ["VERIFICATION FAILED"] + _report_lines(report, semiring))


def cmd_equiv(cfg: CliConfig) -> CommandResult:
    first = read_expression(cfg.expressions[0])
    second = read_expression(cfg.expressions[1])
    semiring = get_semiring(cfg.semiring)
    bindings = _bindings(cfg, semiring)
    dim_range = parse_dim_range(cfg.dims) if bindings is None else None
    try:
        shapes = {} if dim_range else _shapes(cfg, bindings, first, second)
        report = check_equivalence(
            first, second, shapes, semiring, cfg.trials, cfg.seed, cfg.exhaustive, dim_range
        )
    except ShapeMismatch as exc:
        return CommandResult(2, {"error": str(exc), "reason": exc.reason}, [f"error: {exc}"])
    return CommandResult(0 if report.equal else 1, report.to_dict(), _report_lines(report, semiring))


COMMANDS: dict[str, Callable[[CliConfig], CommandResult]] = {
    "validate": cmd_validate,
    "eval": cmd_eval,
    "rewrite": cmd_rewrite,
    "equiv": cmd_equiv,
}


# --------------------------------------------------------------------------- #
# Entry point
# --------------------------------------------------------------------------- #

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--semiring", choices=SEMIRING_NAMES, default=DEFAULT_SEMIRING)
    common.add_argument("--bindings", metavar="FILE", help="JSON bindings file")
    common.add_argument(
        "--dims", help="axis lengths, e.g. i=3,j=2, a single uniform length, or for equiv a range like 1-4"
    )
    common.add_argument("--format", dest="output", choices=("human", "structured"), default="human")

    sampling = argparse.ArgumentParser(add_help=False)
    sampling.add_argument("--trials", type=int, default=DEFAULT_TRIALS)
    sampling.add_argument("--seed", type=int, default=DEFAULT_SEED)

    parser = argparse.ArgumentParser(prog="einsum", description="Einsum expressions over commutative semirings")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", parents=[common], help="check the validity constraints")
    p.add_argument("expression")

    p = sub.add_parser("eval", parents=[common], help="evaluate with the reference evaluator")
    p.add_argument("expression")

    p = sub.add_parser("rewrite", parents=[common, sampling], help="apply one rewrite rule")
    p.add_argument("expression")
    p.add_argument("--rule", required=True, choices=list(RULES))
    p.add_argument("--arg", dest="rule_args", action="append", default=[], metavar="KEY=VALUE",
                   help="rule argument, repeatable (perm=2,1)")
    p.add_argument("--verify", action="store_true", help="check the result against the input")

    p = sub.add_parser("equiv", parents=[common, sampling], help="randomized equivalence check")
    p.add_argument("first")
    p.add_argument("second")
    p.add_argument("--exhaustive", action="store_true", help="enumerate all small bindings")
    return parser


def config_from_args(args: argparse.Namespace) -> CliConfig:
    expressions = [args.first, args.second] if args.command == "equiv" else [args.expression]
    return CliConfig(
        command=args.command,
        expressions=expressions,
        bindings=args.bindings,
        semiring=args.semiring,
        seed=getattr(args, "seed", DEFAULT_SEED),
        trials=getattr(args, "trials", DEFAULT_TRIALS),
        rule=getattr(args, "rule", None),
        rule_args=parse_rule_args(getattr(args, "rule_args", None) or []),
        verify=getattr(args, "verify", False),
        dims=args.dims,
        exhaustive=getattr(args, "exhaustive", False),
        output=args.output,
    )


def _emit(result: CommandResult, output: str) -> None:
    if output == "structured":
        print(json.dumps(result.record))
    else:
        for line in result.lines:
            print(line)


def run(cfg: CliConfig) -> int:
    try:
        result = COMMANDS[cfg.command](cfg)
    except USAGE_ERRORS as exc:
        result = CommandResult(2, {"error": str(exc), "reason": exc.reason}, [])
        print(f"error: {exc}", file=sys.stderr)
    except EinsumError as exc:
        result = CommandResult(1, {"error": str(exc), "reason": exc.reason}, [])
        print(f"error [{exc.reason}]: {exc}", file=sys.stderr)
    _emit(result, cfg.output)
    return result.status


def main(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(level=LOG_LEVEL)
    args = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(args)
    except RuleArgumentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return run(cfg)
