"""JSON problem specifications: validation, construction, and canonical re-serialization.

A specification looks like::

    {
      "dim": 1,
      "mode": "lp", "p": 2,
      "grid": {"t_start": -1, "t_end": 4, "h": 0.001},
      "rhs": {"op": "compose", "outer": {"op": "scale", "a": -1},
              "inner": {"op": "shift", "theta": -1}},
      "forcing": [{"dirac": {"t": -1, "amplitude": [1]}}],
      "solver": {"target_contraction": 0.5, "tol": 1e-10, "max_iter": 500}
    }

Tables (kernels, coefficients, forcing samples) are either inline objects
``{"times": [...], "values": [...]}`` or CSV files, given as a path string or
``{"csv": path, "shape": [rows, cols]}``; relative paths resolve against the
specification's directory.  Parsing inlines every table, so the parsed
document is self-contained and re-serializes to an equal specification.
"""

from __future__ import annotations

import copy
import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import jsonschema
import numpy as np

from .errors import DDEFixError, SpecError
from .grid import Grid
from .operators import (
    AntiDeriv,
    CoeffMul,
    Compose,
    Forcing,
    HistoryMap,
    KernelConv,
    OperatorExpr,
    Pointwise,
    Scale,
    Shift,
    Sum,
    Table,
)
from .solver import FORMS, Problem

_NUMBER = {"type": "number"}
_TABLE_REF = {
    "oneOf": [
        {"type": "string"},
        {
            "type": "object",
            "properties": {"csv": {"type": "string"}, "shape": {"type": "array", "items": {"type": "integer"}}},
            "required": ["csv"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {"times": {"type": "array"}, "values": {"type": "array"}},
            "required": ["times", "values"],
            "additionalProperties": False,
        },
    ]
}


def _node(op: str, props: dict, required: list[str]) -> dict:
    return {
        "type": "object",
        "properties": {"op": {"const": op}, **props},
        "required": ["op", *required],
        "additionalProperties": False,
    }


SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "properties": {
        "dim": {"type": "integer", "minimum": 1},
        "mode": {"enum": ["lp", "sup"]},
        "p": {"type": "number", "exclusiveMinimum": 1},
        "grid": {
            "type": "object",
            "properties": {"t_start": _NUMBER, "t_end": _NUMBER, "h": {"type": "number", "exclusiveMinimum": 0}},
            "required": ["t_start", "t_end", "h"],
            "additionalProperties": False,
        },
        "rhs": {"$ref": "#/$defs/expr"},
        "forcing": {
            "oneOf": [{"$ref": "#/$defs/forcing"}, {"type": "array", "items": {"$ref": "#/$defs/forcing"}}]
        },
        "solver": {
            "type": "object",
            "properties": {
                "target_contraction": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "tol": {"type": "number", "minimum": 0},
                "max_iter": {"type": "integer", "minimum": 1},
                "nu": {"oneOf": [{"type": "number", "exclusiveMinimum": 0}, {"type": "null"}]},
            },
            "additionalProperties": False,
        },
        "neutral": {"type": "boolean"},
        "form": {"enum": list(FORMS)},
        "order": {"type": "integer", "minimum": 1},
        "checks": {
            "type": "object",
            "properties": {
                "t_cut": _NUMBER,
                "perturbation": {"$ref": "#/$defs/forcing"},
                "nu": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 2, "maxItems": 2},
            },
            "additionalProperties": False,
        },
    },
    "required": ["dim", "grid", "rhs"],
    "additionalProperties": False,
    "$defs": {
        "table": _TABLE_REF,
        "forcing": {
            "oneOf": [
                {
                    "type": "object",
                    "properties": {
                        "dirac": {
                            "type": "object",
                            "properties": {"t": _NUMBER, "amplitude": {"oneOf": [_NUMBER, {"type": "array", "items": _NUMBER}]}},
                            "required": ["t", "amplitude"],
                            "additionalProperties": False,
                        }
                    },
                    "required": ["dirac"],
                    "additionalProperties": False,
                },
                {
                    "type": "object",
                    "properties": {"grid": {"$ref": "#/$defs/table"}},
                    "required": ["grid"],
                    "additionalProperties": False,
                },
                {
                    "type": "object",
                    "properties": {"cdf": {"$ref": "#/$defs/table"}},
                    "required": ["cdf"],
                    "additionalProperties": False,
                },
            ]
        },
        "expr": {
            "oneOf": [
                _node("antideriv", {"order": {"type": "integer", "minimum": 1}}, []),
                _node("shift", {"theta": _NUMBER}, ["theta"]),
                _node(
                    "history",
                    {
                        "horizon": _NUMBER,
                        "kernel": {"oneOf": [_NUMBER, {"$ref": "#/$defs/table"}]},
                        "inner": {"$ref": "#/$defs/expr"},
                    },
                    ["horizon"],
                ),
                _node(
                    "kernel",
                    {"horizon": _NUMBER, "kernel": {"oneOf": [_NUMBER, {"type": "array"}, {"$ref": "#/$defs/table"}]}},
                    ["horizon", "kernel"],
                ),
                _node(
                    "pointwise",
                    {
                        "map": {"type": "string"},
                        "matrix": {"type": "array", "items": {"type": "array", "items": _NUMBER}},
                        "lipschitz": {"type": "number", "minimum": 0},
                    },
                    [],
                ),
                _node(
                    "coeff",
                    {"value": {"oneOf": [_NUMBER, {"$ref": "#/$defs/table"}]}, "bound": {"type": "number", "minimum": 0}},
                    ["value"],
                ),
                _node("sum", {"terms": {"type": "array", "items": {"$ref": "#/$defs/expr"}}}, ["terms"]),
                _node("compose", {"outer": {"$ref": "#/$defs/expr"}, "inner": {"$ref": "#/$defs/expr"}}, ["outer", "inner"]),
                _node("scale", {"a": _NUMBER}, ["a"]),
            ]
        },
    },
}

_VALIDATOR = jsonschema.Draft202012Validator(SCHEMA)


def read_table_csv(path: Path) -> tuple[list[float], list[list[float]]]:
    """Read a CSV table ``t, v_1, ..., v_k``; a non-numeric first row is a header."""
    times, values = [], []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or not "".join(row).strip():
                continue
            try:
                nums = [float(x) for x in row]
            except ValueError:
                if times:
                    raise SpecError(f"{path}: non-numeric row {row}") from None
                continue  # header
            if len(nums) < 2:
                raise SpecError(f"{path}: each row needs a time and at least one value")
            times.append(nums[0])
            values.append(nums[1:])
    if not times:
        raise SpecError(f"{path}: empty table")
    if len({len(v) for v in values}) != 1:
        raise SpecError(f"{path}: rows have different numbers of columns")
    return times, values


def write_table_csv(path: Path, times, values, header: list[str] | None = None):
    values = np.asarray(values, dtype=float).reshape(len(times), -1)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if header is None:
            header = ["t"] + [f"v{k + 1}" for k in range(values.shape[1])]
        w.writerow(header)
        for t, row in zip(times, values):
            w.writerow([f"{t:.17g}"] + [f"{x:.17g}" for x in row])


def _inline_table(ref, base: Path) -> dict:
    if isinstance(ref, dict) and "times" in ref:
        return {"times": [float(t) for t in ref["times"]], "values": copy.deepcopy(ref["values"])}
    path, shape = (ref, None) if isinstance(ref, str) else (ref["csv"], ref.get("shape"))
    full = Path(path) if Path(path).is_absolute() else base / path
    if not full.exists():
        raise SpecError(f"table file not found: {full}")
    times, values = read_table_csv(full)
    if shape is not None:
        size = math.prod(shape)
        if len(values[0]) != size:
            raise SpecError(f"{full}: expected {size} value columns for shape {shape}")
        values = np.asarray(values).reshape((len(times), *shape)).tolist()
    elif len(values[0]) == 1:
        values = [v[0] for v in values]
    return {"times": times, "values": values}


def _canonical_expr(node: dict, base: Path) -> dict:
    node = dict(node)
    op = node["op"]
    if op in ("history", "kernel", "coeff"):
        key = "value" if op == "coeff" else "kernel"
        if key in node and not isinstance(node[key], (int, float, list)):
            node[key] = _inline_table(node[key], base)
        if op == "history":
            node.setdefault("kernel", 1.0)
            if "inner" in node:
                node["inner"] = _canonical_expr(node["inner"], base)
    elif op == "antideriv":
        node.setdefault("order", 1)
    elif op == "sum":
        node["terms"] = [_canonical_expr(t, base) for t in node["terms"]]
    elif op == "compose":
        node["outer"] = _canonical_expr(node["outer"], base)
        node["inner"] = _canonical_expr(node["inner"], base)
    return node


def _canonical_forcing(item: dict, base: Path, dim: int) -> dict:
    if "dirac" in item:
        amp = item["dirac"]["amplitude"]
        amp = [float(amp)] * dim if isinstance(amp, (int, float)) else [float(a) for a in amp]
        return {"dirac": {"t": float(item["dirac"]["t"]), "amplitude": amp}}
    kind = "grid" if "grid" in item else "cdf"
    table = _inline_table(item[kind], base)
    try:
        table["values"] = np.asarray(table["values"], dtype=float).reshape(len(table["times"]), -1).tolist()
    except ValueError as exc:
        raise SpecError(f"{kind} forcing table: {exc}") from exc
    return {kind: table}


def canonicalize(doc: dict, base: Path | str = ".") -> dict:
    """Validate ``doc`` and return the self-contained canonical form with defaults filled in."""
    errors = sorted(_VALIDATOR.iter_errors(doc), key=lambda e: list(e.path))
    if errors:
        e = errors[0]
        where = "/".join(str(x) for x in e.absolute_path) or "<root>"
        raise SpecError(f"invalid specification at {where}: {e.message}")
    base = Path(base)
    mode = doc.get("mode", "lp")
    if mode == "sup" and "p" in doc:
        raise SpecError("'p' is only meaningful in lp mode")
    form = doc.get("form", "neutral" if doc.get("neutral") else "derivative")
    if doc.get("neutral") and form != "neutral":
        raise SpecError(f"'neutral': true conflicts with form {form!r}")
    forcing = doc.get("forcing", [])
    if isinstance(forcing, dict):
        forcing = [forcing]
    solver = {"target_contraction": 0.5, "tol": 1e-10, "max_iter": 500, "nu": None}
    solver.update(doc.get("solver", {}))
    out = {
        "dim": doc["dim"],
        "mode": mode,
        "grid": {k: float(v) for k, v in doc["grid"].items()},
        "rhs": _canonical_expr(doc["rhs"], base),
        "forcing": [_canonical_forcing(f, base, doc["dim"]) for f in forcing],
        "solver": solver,
        "form": form,
        "order": doc.get("order", 1),
    }
    if mode == "lp":
        out["p"] = float(doc.get("p", 2.0))
    if "checks" in doc:
        checks = dict(doc["checks"])
        if "perturbation" in checks:
            checks["perturbation"] = _canonical_forcing(checks["perturbation"], base, doc["dim"])
        out["checks"] = checks
    return out


def _table(obj: dict) -> Table:
    return Table(obj["times"], obj["values"])


def _data(value):
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, list):
        return np.asarray(value, dtype=float)
    return _table(value)


def build_expr(node: dict, dim: int) -> OperatorExpr:
    """Operator expression from a canonical expression node."""
    op = node["op"]
    if op == "antideriv":
        return AntiDeriv(node["order"])
    if op == "shift":
        return Shift(node["theta"])
    if op == "history":
        inner = node.get("inner")
        if inner is not None:
            inner = build_expr(inner, dim)
            if not isinstance(inner, Pointwise):
                raise SpecError("history 'inner' must be a pointwise node")
        return HistoryMap(node["horizon"], _data(node["kernel"]), inner)
    if op == "kernel":
        return KernelConv(_data(node["kernel"]), node["horizon"])
    if op == "pointwise":
        if "matrix" in node:
            if "map" in node:
                raise SpecError("pointwise node takes either 'map' or 'matrix', not both")
            return Pointwise(matrix=node["matrix"], lipschitz=node.get("lipschitz"))
        return Pointwise(name=node.get("map", "identity"), lipschitz=node.get("lipschitz"))
    if op == "coeff":
        return CoeffMul(_data(node["value"]), node.get("bound"))
    if op == "sum":
        return Sum([build_expr(t, dim) for t in node["terms"]])
    if op == "compose":
        return Compose(build_expr(node["outer"], dim), build_expr(node["inner"], dim))
    if op == "scale":
        return Scale(node["a"])
    raise SpecError(f"unknown operator {op!r}")


def build_forcing(item: dict) -> Forcing:
    if "dirac" in item:
        return Forcing.dirac(item["dirac"]["t"], item["dirac"]["amplitude"])
    if "grid" in item:
        return Forcing.table(item["grid"]["times"], item["grid"]["values"])
    return Forcing.cdf(item["cdf"]["times"], item["cdf"]["values"])


@dataclass(frozen=True)
class ProblemSpec:
    """A validated, canonical specification document; equality is document equality."""

    doc: dict

    @classmethod
    def from_dict(cls, doc: dict, base: Path | str = ".") -> ProblemSpec:
        return cls(canonicalize(doc, base))

    def to_dict(self) -> dict:
        return copy.deepcopy(self.doc)

    def to_json(self) -> str:
        return json.dumps(self.doc, indent=2, sort_keys=True)

    @property
    def p(self) -> float:
        return math.inf if self.doc["mode"] == "sup" else self.doc["p"]

    def build(self) -> Problem:
        """Construct the :class:`Problem`; construction errors surface as :class:`SpecError`."""
        d = self.doc
        try:
            g = d["grid"]
            grid = Grid.from_span(g["t_start"], g["t_end"], g["h"])
            s = d["solver"]
            return Problem(
                rhs=build_expr(d["rhs"], d["dim"]),
                grid=grid,
                dim=d["dim"],
                forcing=tuple(build_forcing(f) for f in d["forcing"]),
                p=self.p,
                form=d["form"],
                order=d["order"],
                target_contraction=s["target_contraction"],
                tol=s["tol"],
                max_iter=s["max_iter"],
                nu=s["nu"],
            )
        except SpecError:
            raise
        except (DDEFixError, ValueError, TypeError) as exc:
            raise SpecError(str(exc)) from exc

    def perturbation(self) -> tuple[float, Forcing]:
        """``(t_cut, perturbation)`` for the causality check; defaults to a unit Dirac mid-grid."""
        checks = self.doc.get("checks", {})
        g = self.doc["grid"]
        if "t_cut" in checks:
            t_cut = checks["t_cut"]
        else:
            cells = round((g["t_end"] - g["t_start"]) / g["h"])
            t_cut = g["t_start"] + (cells // 2) * g["h"]
        if "perturbation" in checks:
            return t_cut, build_forcing(checks["perturbation"])
        return t_cut, Forcing.dirac(t_cut, np.ones(self.doc["dim"]))

    def nu_pair(self) -> tuple[float, float] | None:
        pair = self.doc.get("checks", {}).get("nu")
        return None if pair is None else (float(pair[0]), float(pair[1]))


def load_spec(path: Path | str) -> ProblemSpec:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError:
        raise SpecError(f"specification not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise SpecError(f"{path}: not valid JSON ({exc})") from exc
    return ProblemSpec.from_dict(doc, path.parent)


def dump_spec(spec: ProblemSpec, path: Path | str, externalize: bool = True) -> Path:
    """Write ``spec`` to ``path``; with ``externalize`` large forcing tables go to sibling CSV files."""
    path = Path(path)
    doc = spec.to_dict()
    if externalize:
        for k, item in enumerate(doc["forcing"]):
            kind = next(iter(item))
            if kind == "dirac":
                continue
            table = item[kind]
            csv_name = f"{path.stem}.forcing{k}.{kind}.csv"
            vals = np.asarray(table["values"], dtype=float).reshape(len(table["times"]), -1)
            write_table_csv(path.parent / csv_name, table["times"], vals)
            item[kind] = csv_name
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path
