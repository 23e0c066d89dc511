"""JSON scenario files: exact rationals as {num, den} pairs or integers, no floats."""

from __future__ import annotations

import json
import re
from pathlib import Path

import jsonschema
import numpy as np

from .corpus import Scenario
from .enlargement import validate_tau
from .space import FiniteFilteredSpace, Rational, ValidationError, rational_array

_RATIONAL = {
    "oneOf": [
        {"type": "integer"},
        {
            "type": "object",
            "properties": {"num": {"type": "integer"}, "den": {"type": "integer", "minimum": 1}},
            "required": ["num", "den"],
            "additionalProperties": False,
        },
    ]
}
_MATRIX = {"type": "array", "minItems": 1, "items": {"type": "array", "minItems": 1, "items": _RATIONAL}}

SCHEMA = {
    "type": "object",
    "properties": {
        "name": {"type": "string"},
        "outcomes": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "properties": {"label": {"type": "string"}, "prob": _RATIONAL},
                "required": ["label", "prob"],
                "additionalProperties": False,
            },
        },
        "horizon": {"type": "integer", "minimum": 1},
        "partitions": {
            "type": "array",
            "items": {
                "type": "array",
                "minItems": 1,
                "items": {"type": "array", "minItems": 1, "items": {"type": "integer", "minimum": 0}},
            },
        },
        "tau": {"type": "array", "items": {"type": "integer", "minimum": 0}},
        "price": _MATRIX,
        "candidates": {"type": "array", "items": _MATRIX},
    },
    "required": ["outcomes", "horizon", "partitions", "tau"],
    "additionalProperties": False,
}


class ScenarioError(ValidationError):
    """Invalid scenario input; ``path`` is the JSON location and ``line`` the source line if known."""

    def __init__(self, message: str, path: str = "$", line: int | None = None):
        self.path, self.line = path, line
        where = path if line is None else f"{path} (line {line})"
        super().__init__(f"{where}: {message}")


class _FloatLiteral(str):
    pass


def _pointer(parts) -> str:
    out = "$"
    for p in parts:
        out += f"[{p}]" if isinstance(p, int) else f".{p}"
    return out


def _line_of(text: str, parts) -> int | None:
    """Best-effort source line of a JSON location: the line where its last key or index element starts."""
    try:
        decoder = json.JSONDecoder(parse_float=_FloatLiteral)
        pos = _skip_ws(text, 0)
        for p in parts:
            if isinstance(p, int):
                pos = text.index("[", pos) + 1
                for _ in range(p):
                    _, end = decoder.raw_decode(text, _skip_ws(text, pos))
                    pos = text.index(",", end) + 1
                pos = _skip_ws(text, pos)
            else:
                pos = text.index(json.dumps(p), pos)
                pos = _skip_ws(text, text.index(":", pos) + 1)
        return text.count("\n", 0, pos) + 1
    except (ValueError, json.JSONDecodeError):
        return None


def _skip_ws(text: str, pos: int) -> int:
    while pos < len(text) and text[pos].isspace():
        pos += 1
    return pos


def _find_float(obj, parts=()):
    if isinstance(obj, _FloatLiteral):
        return list(parts), obj
    if isinstance(obj, dict):
        items = obj.items()
    elif isinstance(obj, list):
        items = enumerate(obj)
    else:
        return None
    for key, v in items:
        hit = _find_float(v, (*parts, key))
        if hit:
            return hit
    return None


def _rational(v) -> Rational:
    return Rational(v) if isinstance(v, int) else Rational(v["num"], v["den"])


def _matrix(rows, shape, parts, text) -> np.ndarray:
    arr = [[_rational(v) for v in row] for row in rows]
    if any(len(r) != shape[1] for r in arr) or len(arr) != shape[0]:
        raise ScenarioError(f"expected a {shape[0]}x{shape[1]} matrix (time x outcome)", _pointer(parts), _line_of(text, parts))
    return rational_array(arr)


def parse_scenario(text: str, name: str = "scenario") -> Scenario:
    try:
        doc = json.loads(text, parse_float=_FloatLiteral)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"invalid JSON: {exc.msg}", "$", exc.lineno) from None
    hit = _find_float(doc)
    if hit:
        parts, lit = hit
        raise ScenarioError(f"float literal {lit} is not allowed; write exact values as {{\"num\": .., \"den\": ..}}", _pointer(parts), _line_of(text, parts))
    errors = sorted(jsonschema.Draft202012Validator(SCHEMA).iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        parts = list(err.absolute_path)
        raise ScenarioError(err.message, _pointer(parts), _line_of(text, parts))
    n, T = len(doc["outcomes"]), doc["horizon"]
    if len(doc["tau"]) != n:
        raise ScenarioError(f"expected {n} entries, one per outcome", "$.tau", _line_of(text, ["tau"]))
    try:
        space = FiniteFilteredSpace(
            [o["label"] for o in doc["outcomes"]],
            [_rational(o["prob"]) for o in doc["outcomes"]],
            T,
            doc["partitions"],
        )
    except ValidationError as exc:
        msg = str(exc)
        hit = re.search(r"time (\d+)", msg)
        if hit:
            parts = ["partitions", int(hit.group(1)) + ("refine" in msg)]
        else:
            parts = ["partitions"] if "partition" in msg else ["outcomes"]
        raise ScenarioError(msg, _pointer(parts), _line_of(text, parts)) from None
    try:
        tau = validate_tau(space, doc["tau"])
    except ValidationError as exc:
        raise ScenarioError(str(exc), "$.tau", _line_of(text, ["tau"])) from None
    price = _matrix(doc["price"], (T + 1, n), ["price"], text) if "price" in doc else None
    cands = [_matrix(c, (T + 1, n), ["candidates", j], text) for j, c in enumerate(doc.get("candidates", []))]
    return Scenario(doc.get("name", name), space, tau, price, cands)


def load_scenario(path: str | Path) -> Scenario:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise ScenarioError(f"cannot read {p}: {exc}") from None
    return parse_scenario(text, p.stem)


def _encode_rational(q):
    q = Rational(q)
    return int(q.numerator) if q.denominator == 1 else {"num": int(q.numerator), "den": int(q.denominator)}


def scenario_to_dict(sc: Scenario) -> dict:
    space = sc.space
    F = space.filtration
    doc = {
        "name": sc.name,
        "outcomes": [{"label": lab, "prob": _encode_rational(p)} for lab, p in zip(space.outcomes, space.probs)],
        "horizon": space.horizon,
        "partitions": [[list(map(int, a)) for a in F.atoms(n)] for n in range(space.horizon + 1)],
        "tau": [int(t) for t in sc.tau],
    }
    if sc.price is not None:
        doc["price"] = [[_encode_rational(v) for v in row] for row in sc.price]
    if sc.candidates:
        doc["candidates"] = [[[_encode_rational(v) for v in row] for row in c] for c in sc.candidates]
    return doc


def dump_scenario(sc: Scenario, path: str | Path) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(sc), indent=1) + "\n", encoding="utf-8")
