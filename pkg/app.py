"""
Einsum Workbench – HTTP API

A Flask application exposing the engine over JSON:
  • validate and evaluate expressions over a chosen semiring
  • apply named rewrite rules, optionally verified
  • randomized equivalence checks between two expressions
"""

from __future__ import annotations

import logging

from dotenv import load_dotenv
from flask import Flask, jsonify, request

# Load local .env before importing modules that read env vars at import time.
load_dotenv()

from engine.cli import CliConfig, CommandResult, cmd_equiv, cmd_eval, cmd_rewrite, cmd_validate
from engine.config import DEFAULT_SEED, DEFAULT_SEMIRING, DEFAULT_TRIALS, SEMIRING_NAMES
from engine.errors import EinsumError
from engine.rules import RULES

logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)

app = Flask(__name__)


def _config(command: str, body: dict, expressions: list[str]) -> CliConfig:
    """Build a command config from a JSON body; fields mirror the CLI flags."""
    return CliConfig(
        command=command,
        expressions=expressions,
        bindings=body.get("bindings"),
        semiring=body.get("semiring", DEFAULT_SEMIRING),
        seed=int(body.get("seed", DEFAULT_SEED)),
        trials=int(body.get("trials", DEFAULT_TRIALS)),
        rule=body.get("rule"),
        rule_args={k: str(v) for k, v in (body.get("args") or {}).items()},
        verify=bool(body.get("verify", False)),
        dims=body.get("dims"),
        exhaustive=bool(body.get("exhaustive", False)),
        output="structured",
    )


def _respond(result: CommandResult):
    # 200 for any completed command; the record says whether it succeeded
    if result.status == 2:
        return jsonify(result.record), 400
    return jsonify({"ok": result.status == 0, **result.record})


def _run(command, name: str, fields: tuple[str, ...]):
    try:
        body = request.get_json(force=True, silent=True)
        if not isinstance(body, dict):
            body = {}
        missing = [f for f in fields if not body.get(f)]
        if missing:
            return jsonify({"error": "Provide " + " and ".join(missing), "reason": "usage"}), 400
        if body.get("semiring", DEFAULT_SEMIRING) not in SEMIRING_NAMES:
            return jsonify({"error": f"Unknown semiring {body['semiring']!r}", "reason": "usage"}), 400
        if body.get("bindings") is not None and not isinstance(body["bindings"], dict):
            return jsonify({"error": "bindings must be a JSON object", "reason": "bindings"}), 400
        return _respond(command(_config(name, body, [body[f] for f in fields])))
    except EinsumError as exc:
        return jsonify({"error": str(exc), "reason": exc.reason}), 400
    except Exception as exc:
        logger.exception("%s API error", name)
        return jsonify({"error": str(exc)}), 500


# --------------------------------------------------------------------------- #
# API: Validation & Evaluation
# --------------------------------------------------------------------------- #
@app.route("/api/validate", methods=["POST"])
def api_validate():
    """
    Check the validity constraints.
    JSON: { "expression": "#(ij,jk->ik; A, B)", "bindings": {...}, "dims": "i=2" }
    """
    return _run(cmd_validate, "validate", ("expression",))


@app.route("/api/eval", methods=["POST"])
def api_eval():
    """
    Evaluate with the reference evaluator.
    JSON: { "expression": "...", "bindings": {"A": {"shape": [2], "values": [1, 2]}},
            "semiring": "tropical" }
    """
    return _run(cmd_eval, "eval", ("expression",))


# --------------------------------------------------------------------------- #
# API: Rewriting
# --------------------------------------------------------------------------- #
@app.route("/api/rewrite", methods=["POST"])
def api_rewrite():
    """
    Apply one named rule.
    JSON: { "expression": "...", "rule": "permute", "args": {"perm": "2,1"},
            "verify": true, "trials": 32, "seed": 0 }
    """
    try:
        body = request.get_json(force=True, silent=True) or {}
        if body.get("rule") not in RULES:
            return jsonify({
                "error": f"Unknown rule {body.get('rule')!r}",
                "reason": "usage",
                "rules": list(RULES),
            }), 400
    except Exception as exc:
        logger.exception("rewrite API error")
        return jsonify({"error": str(exc)}), 500
    return _run(cmd_rewrite, "rewrite", ("expression",))


# --------------------------------------------------------------------------- #
# API: Equivalence
# --------------------------------------------------------------------------- #
@app.route("/api/equiv", methods=["POST"])
def api_equiv():
    """
    Randomized (or exhaustive) equivalence check.
    JSON: { "first": "...", "second": "...", "dims": "i=3,j=3", "trials": 50 }
    """
    return _run(cmd_equiv, "equiv", ("first", "second"))


# --------------------------------------------------------------------------- #
# API: Static Reference Data
# --------------------------------------------------------------------------- #
@app.route("/api/reference")
def api_reference():
    """Return rule names, semirings and defaults."""
    return jsonify({
        "rules": [
            {"name": r.name, "summary": r.summary, "params": list(r.params), "required": list(r.required)}
            for r in RULES.values()
        ],
        "semirings": list(SEMIRING_NAMES),
        "defaults": {"semiring": DEFAULT_SEMIRING, "trials": DEFAULT_TRIALS, "seed": DEFAULT_SEED},
        "grammar": "#(I1,...,In->I; T1, ..., Tn) | (E + E) | delta(o; d1,...) | ones(d1,...) | number | name",
    })


if __name__ == "__main__":
    app.run(debug=True, host="0.0.0.0", port=5001)
