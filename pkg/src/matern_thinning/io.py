"""File formats: pattern CSV + window JSON, model-spec JSON, summary-table
CSV, fit-family JSON and run manifests.

Patterns travel as a CSV with columns ``x[,y][,z][,mark][,weight]`` next
to a window sidecar JSON ``{"dim": d, "lower": [...], "upper": [...]}``;
floats are written with 17 significant digits so a write/read round trip
is bit-exact.  Summary tables are ``r,value`` CSVs with ``#``-comment
header lines; NaN (undefined) bins serialize as an empty value field.
Model specifications are JSON documents validated field by field — every
error names the offending field path.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from typing import Mapping, Optional, Tuple

import numpy as np

from .core import PointPattern, SummaryTable, Window
from .distributions import MarkDistribution, WeightDistribution
from .infer import FreeParameter
from .interactions import make_interaction
from .models import ModelSpec, VARIANTS

__all__ = ["SpecValidationError", "parse_model_spec", "model_spec_from_dict",
           "model_spec_to_dict", "write_model_spec",
           "read_pattern", "write_pattern", "read_window", "write_window",
           "window_sidecar_path",
           "read_summary_table", "write_summary_table",
           "parse_fit_family", "RunManifest", "file_digest"]

_FMT = "%.17g"


class SpecValidationError(ValueError):
    """Model-spec validation failure with per-field diagnostics."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


# ---------------------------------------------------------------------------
# windows
# ---------------------------------------------------------------------------

def write_window(window: Window, path: str) -> None:
    doc = {"dim": window.dim,
           "lower": [float(_FMT % v) for v in window.lower],
           "upper": [float(_FMT % v) for v in window.upper]}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def read_window(path: str) -> Window:
    with open(path) as fh:
        doc = json.load(fh)
    errors = []
    for key in ("dim", "lower", "upper"):
        if key not in doc:
            errors.append(f"window.{key}: missing")
    if errors:
        raise SpecValidationError(errors)
    try:
        return Window(int(doc["dim"]), np.asarray(doc["lower"], dtype=float),
                      np.asarray(doc["upper"], dtype=float))
    except (ValueError, TypeError) as exc:
        raise SpecValidationError([f"window: {exc}"]) from exc


# ---------------------------------------------------------------------------
# patterns
# ---------------------------------------------------------------------------

_COORDS = ("x", "y", "z")


def window_sidecar_path(csv_path: str) -> str:
    """Default window sidecar path: pattern.csv -> pattern.window.json."""
    base = csv_path[:-4] if csv_path.endswith(".csv") else csv_path
    return base + ".window.json"


def write_pattern(pattern: PointPattern, csv_path: str,
                  window_path: Optional[str] = None) -> None:
    """Pattern CSV plus window sidecar, lossless at 17 significant digits."""
    cols = list(_COORDS[:pattern.dim])
    arrays = [pattern.points[:, i] for i in range(pattern.dim)]
    if pattern.marks is not None:
        cols.append("mark")
        arrays.append(pattern.marks)
    if pattern.weights is not None:
        cols.append("weight")
        arrays.append(pattern.weights)
    with open(csv_path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for row in zip(*arrays) if arrays[0].size else ():
            fh.write(",".join(_FMT % v for v in row) + "\n")
    write_window(pattern.window, window_path or window_sidecar_path(csv_path))


def read_pattern(csv_path: str, window_path: Optional[str] = None) -> PointPattern:
    window = read_window(window_path or window_sidecar_path(csv_path))
    with open(csv_path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines:
        raise SpecValidationError(["pattern: empty file (header row required)"])
    header = [c.strip() for c in lines[0].split(",")]
    expected = list(_COORDS[:window.dim])
    if header[:window.dim] != expected:
        raise SpecValidationError(
            [f"pattern header: expected columns {expected} for a "
             f"{window.dim}-dimensional window, got {header}"])
    extras = header[window.dim:]
    if any(c not in ("mark", "weight") for c in extras):
        raise SpecValidationError(
            [f"pattern header: unknown columns {extras}"])
    ncol = len(header)
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        fields = line.split(",")
        if len(fields) != ncol:
            raise SpecValidationError(
                [f"pattern row {lineno}: expected {ncol} fields, "
                 f"got {len(fields)}"])
        try:
            rows.append([float(v) for v in fields])
        except ValueError:
            raise SpecValidationError(
                [f"pattern row {lineno}: non-numeric field"]) from None
    data = np.asarray(rows, dtype=float).reshape(len(rows), ncol)
    points = data[:, :window.dim]
    marks = data[:, header.index("mark")] if "mark" in header else None
    weights = data[:, header.index("weight")] if "weight" in header else None
    if len(points) and not np.all(window.contains(points)):
        bad = int(np.flatnonzero(~window.contains(points))[0])
        raise SpecValidationError(
            [f"pattern row {bad + 2}: point outside the window"])
    return PointPattern(window, points, marks, weights)


# ---------------------------------------------------------------------------
# summary tables
# ---------------------------------------------------------------------------

def write_summary_table(table: SummaryTable, path: str,
                        meta: Optional[Mapping] = None) -> None:
    with open(path, "w") as fh:
        fh.write(f"# statistic: {table.statistic}\n")
        fh.write(f"# provenance: {table.provenance}\n")
        for key, val in (meta or {}).items():
            fh.write(f"# {key}: {val}\n")
        fh.write("r,value\n")
        for r, v in zip(table.r, table.values):
            sval = "" if math.isnan(v) else _FMT % v
            fh.write((_FMT % r) + "," + sval + "\n")


def read_summary_table(path: str) -> SummaryTable:
    statistic, provenance = None, "empirical"
    rs, vs = [], []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if body.startswith("statistic:"):
                    statistic = body.split(":", 1)[1].strip()
                elif body.startswith("provenance:"):
                    provenance = body.split(":", 1)[1].strip()
                continue
            if line == "r,value":
                continue
            r_str, v_str = line.split(",")
            rs.append(float(r_str))
            vs.append(float(v_str) if v_str else math.nan)
    if statistic is None:
        raise SpecValidationError(["summary table: missing '# statistic:' header"])
    return SummaryTable(statistic, np.asarray(rs), np.asarray(vs),
                        provenance=provenance)


# ---------------------------------------------------------------------------
# model specs
# ---------------------------------------------------------------------------

def _mark_distribution_from(doc, path, errors) -> Optional[MarkDistribution]:
    if not isinstance(doc, dict):
        errors.append(f"{path}: must be an object")
        return None
    kind = doc.get("kind")
    known = {"point-mass": ("value",),
             "uniform": ("a", "b", "quadrature_nodes"),
             "gamma": ("shape", "scale", "quadrature_nodes"),
             "truncated-gamma": ("shape", "scale", "cap", "quadrature_nodes"),
             "finite-discrete": ("values", "probs")}
    if kind not in known:
        errors.append(f"{path}.kind: must be one of {sorted(known)}")
        return None
    extra = set(doc) - set(known[kind]) - {"kind"}
    if extra:
        errors.append(f"{path}: unknown fields {sorted(extra)} for kind {kind!r}")
        return None
    try:
        return MarkDistribution(kind, **{k: doc[k] for k in known[kind]
                                         if k in doc})
    except (ValueError, TypeError) as exc:
        errors.append(f"{path}: {exc}")
        return None


def _weight_distribution_from(doc, path, errors) -> Optional[WeightDistribution]:
    if not isinstance(doc, dict):
        errors.append(f"{path}: must be an object")
        return None
    if doc.get("kind") != "uniform":
        errors.append(f"{path}.kind: only 'uniform' weight distributions are "
                      "file-representable (mark-indexed families need code)")
        return None
    try:
        return WeightDistribution.uniform(float(doc.get("a", 0.0)),
                                          float(doc.get("b", 1.0)))
    except (ValueError, TypeError) as exc:
        errors.append(f"{path}: {exc}")
        return None


def model_spec_from_dict(doc: Mapping) -> ModelSpec:
    """Validated ModelSpec from a plain dict; errors carry field paths."""
    errors = []
    if not isinstance(doc, Mapping):
        raise SpecValidationError(["model: must be an object"])
    variant = doc.get("variant")
    if variant not in VARIANTS:
        errors.append(f"variant: must be one of {VARIANTS}")
    lam = doc.get("lambda")
    if not isinstance(lam, (int, float)) or lam <= 0:
        errors.append("lambda: must be a number > 0")
    p0 = doc.get("p0", 1.0)
    if not isinstance(p0, (int, float)) or not 0.0 < p0 <= 1.0:
        errors.append("p0: must be a number in (0, 1]")
    dim = doc.get("dim")
    if dim not in (1, 2, 3):
        errors.append("dim: must be 1, 2 or 3")
    fdoc = doc.get("f")
    f = None
    if not isinstance(fdoc, dict) or "id" not in fdoc:
        errors.append("f: must be an object with 'id' and 'params'")
    else:
        try:
            f = make_interaction(fdoc["id"], **fdoc.get("params", {}))
        except (ValueError, TypeError) as exc:
            errors.append(f"f.params: {exc}")
    mu = nu = None
    if "mu" in doc and doc["mu"] is not None:
        mu = _mark_distribution_from(doc["mu"], "mu", errors)
    if "nu" in doc and doc["nu"] is not None:
        nu = _weight_distribution_from(doc["nu"], "nu", errors)
    if variant in ("mat1-marked", "mat2") and "mu" not in doc:
        errors.append(f"mu: missing (required for variant {variant!r})")
    if variant == "mat2" and "nu" not in doc:
        errors.append("nu: missing (required for variant 'mat2')")
    unknown = set(doc) - {"variant", "lambda", "p0", "dim", "f", "mu", "nu"}
    if unknown:
        errors.append(f"model: unknown fields {sorted(unknown)}")
    if errors:
        raise SpecValidationError(errors)
    try:
        return ModelSpec(variant, float(lam), float(p0), f, int(dim),
                         mu=mu, nu=nu)
    except ValueError as exc:
        raise SpecValidationError([f"model: {exc}"]) from exc


def model_spec_to_dict(spec: ModelSpec) -> dict:
    doc = {"variant": spec.variant, "lambda": spec.lam, "p0": spec.p0,
           "dim": spec.dim,
           "f": {"id": spec.f.id, "params": dict(spec.f.params)}}
    if spec.mu is not None:
        mu = {"kind": spec.mu.kind}
        for k in ("value", "a", "b", "shape", "scale", "cap"):
            v = getattr(spec.mu, k)
            if v is not None:
                mu[k] = v
        if spec.mu.values is not None:
            mu["values"] = list(spec.mu.values)
            mu["probs"] = list(spec.mu.probs)
        if not spec.mu.is_discrete:
            mu["quadrature_nodes"] = spec.mu.quadrature_nodes
        doc["mu"] = mu
    if spec.nu is not None:
        if not spec.nu.mark_independent:
            raise ValueError("mark-indexed weight families are not "
                             "file-representable")
        dist = spec.nu.dist
        if getattr(getattr(dist, "dist", None), "name", None) != "uniform":
            raise ValueError("only uniform weight distributions are "
                             "file-representable")
        loc, scale = dist.kwds.get("loc", dist.args[0] if dist.args else 0.0), \
            dist.kwds.get("scale", dist.args[1] if len(dist.args) > 1 else 1.0)
        doc["nu"] = {"kind": "uniform", "a": float(loc),
                     "b": float(loc) + float(scale)}
    return doc


def parse_model_spec(path: str) -> ModelSpec:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SpecValidationError([f"model: invalid JSON ({exc})"]) from exc
    return model_spec_from_dict(doc)


def write_model_spec(spec: ModelSpec, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(model_spec_to_dict(spec), fh, indent=2)
        fh.write("\n")


# ---------------------------------------------------------------------------
# fit families
# ---------------------------------------------------------------------------

def parse_fit_family(doc: Mapping):
    """Fit family from a model-spec dict with free-parameter placeholders.

    Wherever a number is expected, the object
    ``{"free": {"lower": lo, "upper": hi, "scale": "log"|"linear"}}``
    declares a free parameter, named after its field ("p0", or the
    interaction parameter name).  Returns (build, free, constraint):
    `build` maps {name: value, "lam": value} to a ModelSpec.  The
    "lambda" field may be absent or free; under the intensity-match
    constraint (the default, field "constraint") it is ignored.
    """
    doc = json.loads(json.dumps(doc))  # deep copy, JSON-clean
    constraint = doc.pop("constraint", "intensity-match")
    free = []

    def register(name, spot, key):
        node = spot[key]
        if isinstance(node, dict) and "free" in node:
            b = node["free"]
            try:
                fp = FreeParameter(name, float(b["lower"]), float(b["upper"]),
                                   b.get("scale", "log"))
            except (KeyError, TypeError, ValueError) as exc:
                raise SpecValidationError(
                    [f"{name}: invalid free-parameter declaration ({exc})"])
            free.append(fp)
            return True
        return False

    slots = []  # (name, container, key)
    if "p0" in doc and register("p0", doc, "p0"):
        slots.append(("p0", doc, "p0"))
    fparams = doc.get("f", {}).get("params", {})
    for key in list(fparams):
        if register(key, fparams, key):
            slots.append((key, fparams, key))
    if "lambda" in doc and isinstance(doc["lambda"], dict):
        if register("lam", doc, "lambda"):
            slots.append(("lam", doc, "lambda"))

    def build(params: Mapping) -> ModelSpec:
        for name, container, key in slots:
            container[key] = float(params[name])
        doc["lambda"] = float(params["lam"])
        return model_spec_from_dict(doc)

    return build, tuple(free), constraint


# ---------------------------------------------------------------------------
# run manifests
# ---------------------------------------------------------------------------

def file_digest(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass(frozen=True)
class RunManifest:
    """Reproducibility record of one CLI run."""

    command: Tuple[str, ...]
    config: dict
    seed: Optional[int]
    version: str
    wall_time_s: float
    outputs: dict               # path -> sha256

    def write(self, path: str) -> None:
        doc = {"command": list(self.command), "config": self.config,
               "seed": self.seed, "version": self.version,
               "wall_time_s": self.wall_time_s, "outputs": self.outputs}
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=2)
            fh.write("\n")
