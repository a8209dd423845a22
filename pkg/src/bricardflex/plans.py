"""Plan documents (JSON) and result serialization: meshes, OBJ frames, CSV traces."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Sequence

import jsonschema
import numpy as np

from .construction import (
    Close,
    ConstructionError,
    ConstructionPlan,
    Edges,
    FlexiblePolyhedron,
    RespecifyCap,
    RingPlan,
    Scale,
    TorusClose,
    TorusContraction,
    TorusPlan,
)
from .verification import realize_grid
from .octahedra import ANGLE_KEYS, CapParams, FlexState, SubType, required_keys


class PlanError(ValueError):
    pass


class ParseError(PlanError):
    pass


class SchemaError(PlanError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


class UnitError(PlanError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


def plan_schema() -> dict:
    return json.loads(resources.files("bricardflex").joinpath("plan.schema.json").read_text())


def _path(parts) -> str:
    out = ""
    for p in parts:
        out += f"[{p}]" if isinstance(p, int) else f".{p}"
    return out or "."


def to_degrees(rad: float) -> float:
    """Degree value that converts back to exactly ``rad``."""
    d = math.degrees(rad)
    if math.radians(d) == rad:
        return d
    lo = hi = d
    for _ in range(64):
        lo, hi = math.nextafter(lo, -math.inf), math.nextafter(hi, math.inf)
        if math.radians(lo) == rad:
            return lo
        if math.radians(hi) == rad:
            return hi
    return d


# ---------------------------------------------------------------- load


def _stage(rec: dict):
    kind = rec["kind"]
    if kind == "scale":
        return Scale(rec.get("factor"), rec.get("extension"), rec.get("direction", "out"),
                     rec.get("vertex", "A"))
    if kind == "edges":
        return Edges.of(rec.get("oas"), rec.get("variant"), rec.get("root_choice"),
                        **rec["extensions"])
    if kind == "respecify":
        return RespecifyCap(rec["retain"], rec["lateral_a"], rec["lateral_b"],
                            rec.get("apex_side", 1))
    if kind == "close":
        return Close()
    return TorusClose()


def _torus(rec: dict | None):
    if rec is None:
        return None
    if "f" in rec:
        return TorusPlan(float(rec["f"]))
    if "contraction" in rec:
        c = rec["contraction"]
        return TorusContraction(c["vertex"], float(c["length"]))
    loop = tuple((float(a), float(b)) for a, b in rec.get("loop", ()))
    quads = tuple(((float(p[0]), float(p[1])), (float(q[0]), float(q[1])), side)
                  for p, q, side in rec.get("quads", ()))
    return RingPlan(int(rec["M"]), int(rec["N"]), tuple(float(s) for s in rec["scales"]),
                    loop, quads)


def plan_from_dict(doc) -> ConstructionPlan:
    validator = jsonschema.Draft202012Validator(plan_schema())
    errors = sorted(validator.iter_errors(doc), key=lambda e: (len(e.absolute_path),
                                                               list(map(str, e.absolute_path))))
    if errors:
        e = errors[0]
        raise SchemaError(_path(e.absolute_path), e.message)
    cap = {}
    for key, value in doc["cap"].items():
        if key in ANGLE_KEYS:
            if not (0.0 < value < 180.0):
                raise UnitError(f".cap.{key}", f"angle {value} is not in (0, 180) degrees")
            cap[key] = math.radians(value)
        else:
            cap[key] = float(value)
    subtype = SubType(doc["subtype"])
    need, have = set(required_keys(subtype)), set(cap)
    if need != have:
        raise SchemaError(".cap", f"{subtype.value} needs {sorted(need)}, got {sorted(have)}")
    stages = []
    for i, rec in enumerate(doc["stages"]):
        try:
            stages.append(_stage(rec))
        except ConstructionError as exc:
            raise SchemaError(f".stages[{i}]", str(exc)) from None
    try:
        torus = _torus(doc.get("torus"))
    except ConstructionError as exc:
        raise SchemaError(".torus", str(exc)) from None
    try:
        return ConstructionPlan(
            subtype,
            CapParams.of(doc.get("oas_assignment"), doc.get("closure_variant", "standard"), **cap),
            doc.get("root_choice"),
            math.radians(doc.get("phi_seed_degrees", math.degrees(1.0))),
            tuple(stages),
            torus,
        )
    except ConstructionError as exc:
        raise SchemaError(".stages", str(exc)) from None


def load_plan(text: str) -> ConstructionPlan:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(str(exc)) from None
    return plan_from_dict(doc)


def read_plan(path: str | Path) -> ConstructionPlan:
    return load_plan(Path(path).read_text())


# ---------------------------------------------------------------- dump


def _stage_dict(s) -> dict:
    if isinstance(s, Scale):
        d = {"kind": "scale", "direction": s.direction, "vertex": s.vertex}
        if s.factor is not None:
            d["factor"] = s.factor
        else:
            d["extension"] = s.extension
        return d
    if isinstance(s, Edges):
        d = {"kind": "edges", "extensions": dict(s.extensions)}
        for k in ("oas", "variant", "root_choice"):
            if getattr(s, k) is not None:
                d[k] = getattr(s, k)
        return d
    if isinstance(s, RespecifyCap):
        return {"kind": "respecify", "retain": s.retain, "lateral_a": s.lateral_a,
                "lateral_b": s.lateral_b, "apex_side": s.apex_side}
    if isinstance(s, Close):
        return {"kind": "close"}
    return {"kind": "torus_close"}


def plan_to_dict(plan: ConstructionPlan) -> dict:
    cap = {k: (to_degrees(v) if k in ANGLE_KEYS else v) for k, v in plan.cap.values}
    doc = {
        "subtype": plan.subtype.value,
        "cap": cap,
        "oas_assignment": plan.cap.oas,
        "closure_variant": plan.cap.variant,
        "root_choice": plan.root_choice,
        "phi_seed_degrees": to_degrees(plan.phi_seed),
        "stages": [_stage_dict(s) for s in plan.stages],
    }
    t = plan.torus
    if isinstance(t, TorusPlan):
        doc["torus"] = {"f": t.f}
    elif isinstance(t, TorusContraction):
        doc["torus"] = {"contraction": {"vertex": t.vertex, "length": t.length}}
    elif isinstance(t, RingPlan):
        r = {"M": t.M, "N": t.N, "scales": list(t.scales)}
        if t.loop:
            r["loop"] = [list(p) for p in t.loop]
        else:
            r["quads"] = [[list(p), list(q), side] for p, q, side in t.quads]
        doc["torus"] = r
    return doc


def dump_plan(plan: ConstructionPlan) -> str:
    return json.dumps(plan_to_dict(plan), indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------- fixtures


def fixture_names() -> list[str]:
    root = resources.files("bricardflex").joinpath("fixtures")
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def fixture_text(name: str) -> str:
    return resources.files("bricardflex").joinpath("fixtures", f"{name}.json").read_text()


def load_fixture(name: str) -> ConstructionPlan:
    return load_plan(fixture_text(name))


# ---------------------------------------------------------------- meshes


@dataclass(frozen=True)
class MeshSnapshot:
    phi: float
    labels: tuple[str, ...]
    vertices: np.ndarray
    faces: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        n = len(self.labels)
        if np.shape(self.vertices) != (n, 3):
            raise ValueError("one 3-d vertex per label")
        if any(not (0 <= i < n) for f in self.faces for i in f):
            raise ValueError("face index out of range")


def snapshot_of(poly: FlexiblePolyhedron, state: FlexState) -> MeshSnapshot:
    labels = poly.labels
    idx = {v: i for i, v in enumerate(labels)}
    verts = np.array([state.coords[v] for v in labels])
    faces = tuple(tuple(idx[v] for v in f) for f in poly.faces)
    return MeshSnapshot(float(state.phi), labels, verts, faces)


def snapshot(poly: FlexiblePolyhedron, phi: float,
             previous: FlexState | None = None) -> tuple[MeshSnapshot, FlexState]:
    st = poly.realize(phi, previous)
    return snapshot_of(poly, st), st


def _g(x: float) -> str:
    return format(float(x), ".17g")


def export_obj(snap: MeshSnapshot) -> str:
    lines = [f"# phi {_g(snap.phi)}"]
    lines += [f"v {_g(x)} {_g(y)} {_g(z)}" for x, y, z in snap.vertices]
    lines += ["f " + " ".join(str(i + 1) for i in f) for f in snap.faces]
    return "\n".join(lines) + "\n"


def mesh_json(snap: MeshSnapshot) -> str:
    doc = {
        "phi": snap.phi,
        "vertices": [[lab] + [float(c) for c in p] for lab, p in zip(snap.labels, snap.vertices)],
        "faces": [list(f) for f in snap.faces],
    }
    return json.dumps(doc, indent=1) + "\n"


def export_frames(poly: FlexiblePolyhedron, phis: Sequence[float], outdir: str | Path,
                  stem: str = "frame") -> list[Path]:
    """One OBJ per value of ``phis`` (monotone), named ``stem_0000.obj`` and
    so on, flexed continuously outward from the seed."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for k, st in enumerate(realize_grid(poly, [float(p) for p in phis])):
        snap = snapshot_of(poly, st)
        p = out / f"{stem}_{k:04d}.obj"
        p.write_text(export_obj(snap))
        paths.append(p)
    return paths


# ---------------------------------------------------------------- traces and reports


def export_trace(report) -> str:
    """CSV of an InvariantReport: one row per sample, row flags last."""
    names = list(report.columns) + [name for name, _ in report.flags]
    lines = [",".join(names)]
    for k, row in enumerate(report.rows):
        vals = [_g(x) for x in row]
        vals += ["true" if flags[k] else "false" for _, flags in report.flags]
        lines.append(",".join(vals))
    return "\n".join(lines) + "\n"


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def report_json(doc: dict) -> str:
    return json.dumps(_clean(doc), indent=2, sort_keys=True) + "\n"
