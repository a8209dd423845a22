"""Composite flexible polyhedra built from chains of Bricard octahedra.

A composite is stored as a face list plus a small realization program: the
base octahedron is flexed, then each stage appends points by homothety, by
extending rays from a shared apex, by trilaterating a new apex, or (for tori)
as affine combinations of base points.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from itertools import product
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import root as nsolve

from .geometry import (
    SAS,
    DegenerateCenters,
    DegenerateFace,
    NoRealIntersection,
    NotClosed,
    face_metrics,
    solve_triangle,
    trilaterate,
)
from .mesh import FaceComplex, clean_loop, orient_faces
from .octahedra import (
    BASE,
    FACES,
    CapParams,
    FlexError,
    FlexionInterval,
    FlexState,
    Inconsistent,
    NoRealClosure,
    NoRealRoot,
    OctahedronError,
    OctahedronSpec,
    OutOfRange,
    SubType,
    choose_branch,
    complete_spec,
    flex,
    flex_tolerance,
    frame_transform,
    scan_interval,
)

FAMILIES = ("A", "B", "C", "D")
RING_EDGES = (("A", "B"), ("B", "C"), ("C", "D"), ("D", "A"))


class ConstructionError(ValueError):
    pass


class ZeroRuleViolation(ConstructionError):
    pass


class StageError(ConstructionError):
    pass


class RingMismatch(ConstructionError):
    pass


class DegenerateRing(RingMismatch):
    pass


# ---------------------------------------------------------------- plan values


@dataclass(frozen=True)
class Scale:
    """Homothety about the shared apex, given directly or as an extension
    ``L`` of edge X_i V_{i-1}: factor 1 + L/|X_i V_{i-1}| (out) or 1 - L/... (in)."""

    factor: float | None = None
    extension: float | None = None
    direction: str = "out"
    vertex: str = "A"

    def __post_init__(self):
        if (self.factor is None) == (self.extension is None):
            raise StageError("give exactly one of factor or extension")
        if self.direction not in ("out", "in"):
            raise StageError("direction must be 'out' or 'in'")
        if self.vertex not in FAMILIES:
            raise StageError("vertex must be one of A, B, C, D")
        if self.factor is not None and (self.factor <= 0.0 or self.factor == 1.0):
            raise StageError("scale factor must be positive and different from 1")
        if self.extension is not None and self.extension <= 0.0:
            raise StageError("extension length must be positive")


@dataclass(frozen=True)
class Edges:
    """Extension lengths along the rays of the shared cap. Families left out
    are solved for. ``oas``, ``variant`` and ``root_choice`` steer the
    third-type closure of the new octahedron."""

    extensions: tuple[tuple[str, float], ...]
    oas: str | None = None
    variant: str | None = None
    root_choice: int | None = None

    def __post_init__(self):
        fams = [f for f, _ in self.extensions]
        if len(set(fams)) != len(fams) or not set(fams) <= set(FAMILIES):
            raise StageError("extensions must be keyed by distinct A, B, C, D")
        if any(v < 0.0 or not math.isfinite(v) for _, v in self.extensions):
            raise StageError("extension lengths must be finite and >= 0")

    @classmethod
    def of(cls, oas=None, variant=None, root_choice=None, **ext: float) -> "Edges":
        return cls(tuple(sorted((k, float(v)) for k, v in ext.items())), oas, variant, root_choice)

    def get(self, fam: str) -> float | None:
        return dict(self.extensions).get(fam)


@dataclass(frozen=True)
class RespecifyCap:
    """II-OEE stage: rays scaled by ``retain`` and new lateral lengths
    |X_{i+1} A_i| and |X_{i+1} B_i|; ``apex_side`` picks the mirror apex."""

    retain: float
    lateral_a: float
    lateral_b: float
    apex_side: int = 1

    def __post_init__(self):
        if self.retain <= 0.0 or self.lateral_a <= 0.0 or self.lateral_b <= 0.0:
            raise StageError("respecify values must be positive")
        if self.apex_side not in (1, -1):
            raise StageError("apex_side must be +1 or -1")


@dataclass(frozen=True)
class Close:
    pass


@dataclass(frozen=True)
class TorusClose:
    pass


Stage = Scale | Edges | RespecifyCap | Close | TorusClose


@dataclass(frozen=True)
class TorusPlan:
    """Sixteen-face torus: contraction ``f`` in (0, 1), closing factor 2 - f."""

    f: float

    def __post_init__(self):
        if not (0.0 < self.f < 1.0):
            raise StageError("contraction factor must lie in (0, 1)")

    @property
    def F(self) -> float:
        return 2.0 - self.f


@dataclass(frozen=True)
class TorusContraction:
    """Sixteen-face torus whose contraction is a length along X1 V0."""

    vertex: str
    length: float

    def __post_init__(self):
        if self.vertex not in FAMILIES:
            raise StageError("vertex must be one of A, B, C, D")
        if not self.length > 0.0:
            raise StageError("contraction length must be positive")


@dataclass(frozen=True)
class RingPlan:
    """Overlapping copies with scales f_2..f_M; the torus is either a closed
    ``loop`` of lattice points or an explicit list of candidate ``quads``
    given as ((l, r), (l, r), side)."""

    M: int
    N: int
    scales: tuple[float, ...]
    loop: tuple[tuple[float, float], ...] = ()
    quads: tuple = ()

    def __post_init__(self):
        if bool(self.loop) == bool(self.quads):
            raise StageError("give exactly one of loop or quads")


@dataclass(frozen=True)
class ConstructionPlan:
    subtype: SubType
    cap: CapParams
    root_choice: int | None = None
    phi_seed: float = 1.0
    stages: tuple = (Close(),)
    torus: TorusPlan | TorusContraction | RingPlan | None = None

    def __post_init__(self):
        object.__setattr__(self, "subtype", SubType(self.subtype))
        if not self.stages:
            raise StageError("a plan needs at least a closing stage")
        for s in self.stages[:-1]:
            if isinstance(s, (Close, TorusClose)):
                raise StageError("no stage may follow a closing stage")
        last = self.stages[-1]
        if not isinstance(last, (Close, TorusClose)):
            raise StageError("the last stage must be Close or TorusClose")
        if isinstance(last, TorusClose) and self.torus is None:
            raise StageError("TorusClose needs torus data")

    @property
    def n(self) -> int:
        """Number of octahedra in a genus-0 build."""
        return len(self.stages)


# ---------------------------------------------------------------- realization program


@dataclass(frozen=True)
class _Homothety:
    center: str
    pairs: tuple[tuple[str, str], ...]
    factor: float


@dataclass(frozen=True)
class _Ray:
    apex: str
    src: str
    dst: str
    length: float


@dataclass(frozen=True)
class _Apex:
    target: str
    centers: tuple[str, str, str]
    dists: tuple[float, float, float]
    check: str
    check_dist: float
    side: int | None = None


@dataclass(frozen=True)
class _Affine:
    target: str
    terms: tuple[tuple[str, float], ...]


def run_program(base: OctahedronSpec, steps: Sequence, phi: float,
                previous: FlexState | None, scale: float) -> FlexState:
    st = flex(base, phi, previous)
    coords = dict(st.coords)
    signs = list(st.branch_signs)
    residual = st.residual
    tol = flex_tolerance(scale)
    prev = previous.coords if previous is not None else None
    for step in steps:
        if isinstance(step, _Homothety):
            c = coords[step.center]
            for src, dst in step.pairs:
                coords[dst] = c + step.factor * (coords[src] - c)
        elif isinstance(step, _Ray):
            a = coords[step.apex]
            u = coords[step.src] - a
            coords[step.dst] = a + (step.length / float(np.linalg.norm(u))) * u
        elif isinstance(step, _Affine):
            coords[step.target] = sum(w * coords[k] for k, w in step.terms)
        elif isinstance(step, _Apex):
            cands = []
            cs = [coords[k] for k in step.centers]
            for s in (1, -1):
                try:
                    p, z2 = trilaterate(*cs, *step.dists, s, return_discriminant=True)
                except (NoRealIntersection, DegenerateCenters):
                    continue
                res = abs(float(np.linalg.norm(p - coords[step.check])) - step.check_dist)
                cands.append((res, (s,), {step.target: p}, z2))
            if not cands:
                raise OutOfRange(f"apex {step.target} not realizable at phi = {phi!r}")
            if prev is None and step.side is not None:
                forced = [c for c in cands if c[1] == (step.side,)]
                pick = forced[0] if forced and forced[0][0] <= tol else choose_branch(cands, None, tol)
            else:
                pick = choose_branch(cands, prev, tol)
            if pick[0] > 1e-6 * scale:
                raise Inconsistent(f"apex {step.target} residual {pick[0]:.3e} at phi = {phi!r}")
            coords[step.target] = pick[2][step.target]
            residual = max(residual, pick[0])
            signs.append(pick[1][0])
        else:  # pragma: no cover
            raise TypeError(step)
    return FlexState(phi, coords, residual, tuple(signs), st.discriminant)


@dataclass(frozen=True)
class FlexiblePolyhedron:
    """Closed face complex whose coordinates are a function of the flexion variable."""

    faces: tuple[tuple[str, ...], ...]
    genus: int
    subtype: SubType | None
    base: OctahedronSpec
    steps: tuple = field(repr=False)
    phi_seed: float
    end_caps: tuple[str, ...] = ()
    octahedra: tuple = field(default=(), repr=False)
    scale: float = 0.0
    seed_state: FlexState | None = field(default=None, repr=False, compare=False)

    @property
    def complex(self) -> FaceComplex:
        return FaceComplex(self.faces)

    @property
    def labels(self) -> tuple[str, ...]:
        return FaceComplex(self.faces).vertices

    @property
    def tolerance(self) -> float:
        return flex_tolerance(self.scale)

    def realize(self, phi: float, previous: FlexState | None = None) -> FlexState:
        if previous is None and phi == self.phi_seed:
            previous = self.seed_state
        return run_program(self.base, self.steps, phi, previous, self.scale)

    def flexion_range(self, samples: int = 720) -> FlexionInterval:
        return scan_interval(self.realize, self.phi_seed, self.tolerance, samples)

    def sweep(self, phis: Sequence[float]) -> list[FlexState]:
        out, prev = [], None
        for p in phis:
            prev = self.realize(float(p), prev)
            out.append(prev)
        return out


def propagate_flex(poly: FlexiblePolyhedron, phi: float,
                   previous: FlexState | None = None) -> dict[str, np.ndarray]:
    """Coordinates of every vertex label of ``poly`` at ``phi``."""
    st = poly.realize(phi, previous)
    return {k: st.coords[k] for k in poly.labels}


def _finish(faces, genus, subtype, base, steps, phi_seed, end_caps=(), octahedra=()):
    faces = [clean_loop(f) for f in faces]
    faces = [f for f in faces if len(f) >= 3]
    faces = orient_faces(faces, seed=0)
    fc = FaceComplex(faces)
    if not fc.is_closed:
        raise NotClosed(f"{fc.boundary_edges} boundary and {fc.nonmanifold_edges} "
                        f"non-manifold edges")
    scale0 = base.scale
    st = run_program(base, steps, phi_seed, None, scale0)
    lengths = [float(np.linalg.norm(st.coords[a] - st.coords[b])) for a, b in fc.edges]
    scale = max(max(lengths), scale0)
    if min(lengths) <= 1e-9 * scale:
        raise DegenerateFace("an edge collapsed without a merge")
    tol = flex_tolerance(scale)
    if st.residual > tol:
        raise Inconsistent(f"construction does not close at the seed (residual {st.residual:.3e})")
    for f in faces:
        try:
            face_metrics([st.coords[v] for v in f])
        except DegenerateFace as exc:
            raise DegenerateFace(f"face {f}: {exc}") from None
    return FlexiblePolyhedron(tuple(faces), genus, subtype, base, tuple(steps), phi_seed,
                              tuple(end_caps), tuple(octahedra), scale)


def octahedron_polyhedron(spec: OctahedronSpec, phi_seed: float,
                          coords: Mapping[str, np.ndarray] | None = None) -> FlexiblePolyhedron:
    """A single octahedron as a closed polyhedron (faces counter-clockwise).

    ``coords``, when given, is a realization to start from: the seed branch
    is the one closest to it, and ``phi_seed`` should be its flexion value.
    """
    poly = _finish(FACES, 0, spec.subtype, spec, (), phi_seed, ("X0", "X1"),
                   ((spec, tuple((r, r) for r in ("X0", "X1") + BASE)),))
    if coords is None:
        return poly
    R, o = frame_transform(coords, None)
    framed = {k: R @ (np.asarray(v, dtype=float) - o) for k, v in coords.items()}
    return replace(poly, seed_state=FlexState(phi_seed, framed, 0.0, ()))


# ---------------------------------------------------------------- genus 0


@dataclass(frozen=True)
class CompositeModel:
    subtype: SubType
    base: OctahedronSpec
    phi_seed: float
    octahedra: tuple  # (spec, ((role, label), ...)) per octahedron
    steps: tuple
    faces: tuple
    apex: str
    prev_apex: str
    ring: tuple[str, str, str, str]
    level: int = 1
    log: tuple = ()

    @classmethod
    def start(cls, spec: OctahedronSpec, phi_seed: float) -> "CompositeModel":
        roles = tuple((r, r) for r in ("X0", "X1") + BASE)
        return cls(spec.subtype, spec, phi_seed, ((spec, roles),), (), FACES[:4],
                   "X1", "X0", BASE)

    def _last(self):
        spec, roles = self.octahedra[-1]
        inv = {lab: r for r, lab in roles}
        return spec, inv

    def ray(self, fam: str) -> float:
        """Length |X_i V| for the current base vertex of family ``fam``."""
        spec, inv = self._last()
        return spec.length(inv[self.apex], inv[self.ring[FAMILIES.index(fam)]])

    def apex_angle(self, f1: str, f2: str) -> float:
        spec, inv = self._last()
        q1 = inv[self.ring[FAMILIES.index(f1)]]
        q2 = inv[self.ring[FAMILIES.index(f2)]]
        return spec.angle(inv[self.apex], q1, q2)

    @property
    def scale(self) -> float:
        return max(spec.scale for spec, _ in self.octahedra)


def _bands(old_ring, new_ring):
    out = []
    for (f1, f2) in RING_EDGES:
        i, j = FAMILIES.index(f1), FAMILIES.index(f2)
        out.append((old_ring[i], old_ring[j], new_ring[j], new_ring[i]))
    return tuple(out)


def extend_scale(model: CompositeModel, stage: Scale) -> CompositeModel:
    """Append the homothetic image of the last octahedron about the open apex."""
    s = stage.factor
    if s is None:
        rho = model.ray(stage.vertex)
        s = 1.0 + stage.extension / rho if stage.direction == "out" else 1.0 - stage.extension / rho
        if s <= 0.0:
            raise StageError(f"inward extension {stage.extension} exceeds the ray length {rho}")
    i = model.level
    new_apex = f"X{i + 1}"
    new_ring = tuple(f"{f}{i}" for f in FAMILIES)
    pairs = ((model.prev_apex, new_apex),) + tuple(zip(model.ring, new_ring))
    step = _Homothety(model.apex, pairs, s)
    spec, inv = model._last()
    relabel = {model.prev_apex: new_apex, **dict(zip(model.ring, new_ring))}
    roles = tuple((inv[old], new) for old, new in relabel.items()) + ((inv[model.apex], model.apex),)
    return replace(
        model,
        octahedra=model.octahedra + ((spec.scaled(s), roles),),
        steps=model.steps + (step,),
        faces=model.faces + _bands(model.ring, new_ring),
        apex=new_apex, prev_apex=model.apex, ring=new_ring, level=i + 1,
        log=model.log + ((("kind", "scale"), ("factor", s)),),
    )


def _law_of_cosines(r1: float, r2: float, ang: float) -> float:
    return solve_triangle(SAS(r1, r2, ang)).sides[0]


def _solve_pair_rays(model: CompositeModel, known: dict[str, float]) -> dict[str, float]:
    """Rays for I-OEE / II-AEE caps: two given, two from the base-edge equalities.

    Newton iteration starts from the similarity scaling implied by the given
    rays, so the root closest to a pure scaling is returned.
    """
    pairs = (
        (("A", "B"), ("C", "D")), (("B", "C"), ("D", "A"))
    ) if model.subtype is SubType.I_OEE else (
        (("A", "B"), ("B", "C")), (("C", "D"), ("D", "A"))
    )
    ang = {e: model.apex_angle(*e) for e in RING_EDGES}
    free = [f for f in FAMILIES if f not in known]
    old = {f: model.ray(f) for f in FAMILIES}
    ratio = float(np.mean([known[f] / old[f] for f in known]))

    def rays(x):
        r = dict(known)
        r.update(zip(free, x))
        return r

    def sq(r, e):
        a, b = e
        return r[a] ** 2 + r[b] ** 2 - 2.0 * r[a] * r[b] * math.cos(ang[e])

    def fun(x):
        r = rays(x)
        return [sq(r, e1) - sq(r, e2) for e1, e2 in pairs]

    x0 = [ratio * old[f] for f in free]
    sol = nsolve(fun, x0, tol=1e-15)
    r = rays(sol.x)
    sc = max(r.values())
    # judged by residual: hybr flags an exact starting root as a failed xtol
    if max(abs(v) for v in fun(sol.x)) > 1e-10 * sc * sc:
        raise NoRealRoot("law-of-cosines equations for the free rays have no solution nearby")
    if min(r.values()) <= 0.0:
        raise NoRealRoot("solved ray length is not positive")
    return r


def _zero_limit(subtype: SubType) -> int:
    return {SubType.I_OEE: 1, SubType.II_AEE: 1, SubType.II_OEE: 0,
            SubType.III_OAE: 3, SubType.III_OAS: 2}[subtype]


def _new_octahedron(model: CompositeModel, rays: dict[str, float], spec: OctahedronSpec,
                    role_of_family: dict[str, str], apex_side: int | None, log) -> CompositeModel:
    i = model.level
    new_apex = f"X{i + 1}"
    steps = []
    new_ring = []
    for f, old_label in zip(FAMILIES, model.ring):
        if abs(rays[f] - model.ray(f)) <= 1e-9 * model.scale:
            new_ring.append(old_label)
        else:
            lab = f"{f}{i}"
            steps.append(_Ray(model.apex, old_label, lab, rays[f]))
            new_ring.append(lab)
    new_ring = tuple(new_ring)
    lab_of_role = {role_of_family[f]: new_ring[FAMILIES.index(f)] for f in FAMILIES}
    lab_of_role.update({"X0": model.apex, "X1": new_apex})
    cent = tuple(new_ring[:3])
    dists = tuple(spec.length("X1", role_of_family[f]) for f in FAMILIES[:3])
    steps.append(_Apex(new_apex, cent, dists, new_ring[3],
                       spec.length("X1", role_of_family["D"]), apex_side))
    return replace(
        model,
        octahedra=model.octahedra + ((spec, tuple(lab_of_role.items())),),
        steps=model.steps + tuple(steps),
        faces=model.faces + _bands(model.ring, new_ring),
        apex=new_apex, prev_apex=model.apex, ring=new_ring, level=i + 1,
        log=model.log + (log,),
    )


def _check_at_seed(model: CompositeModel) -> None:
    st = run_program(model.base, model.steps, model.phi_seed, None, model.scale)
    if st.residual > flex_tolerance(model.scale):
        raise Inconsistent(f"new apex misses its fourth edge by {st.residual:.3e}")


def extend_edges(model: CompositeModel, stage: Edges) -> CompositeModel:
    """Append a new octahedron sharing the open cap, with rays extended by
    the given lengths and the remaining rays solved for."""
    st = model.subtype
    if st is SubType.II_OEE:
        raise StageError("II-OEE stages use RespecifyCap")
    known = {f: model.ray(f) + v for f, v in stage.extensions}
    if st.is_third_type:
        if len(known) != 3:
            raise StageError("third-type edge stages give exactly three extensions")
        zeros = sum(1 for _, v in stage.extensions if v == 0.0)
        if zeros > _zero_limit(st):
            raise ZeroRuleViolation(f"{st.value} allows at most {_zero_limit(st)} zero extensions")
        return _extend_third_type(model, stage, known)
    if len(known) != 2:
        raise StageError(f"{st.value} edge stages give exactly two extensions")
    rays = _solve_pair_rays(model, known)
    ext = {f: rays[f] - model.ray(f) for f in FAMILIES}
    zeros = sum(1 for v in ext.values() if abs(v) <= 1e-9 * model.scale)
    if zeros > _zero_limit(st):
        raise ZeroRuleViolation(f"{st.value} allows at most {_zero_limit(st)} zero extensions")
    cap = {f"X0{f}0": rays[f] for f in FAMILIES}
    a = {e: _law_of_cosines(rays[e[0]], rays[e[1]], model.apex_angle(*e)) for e in RING_EDGES}
    if st is SubType.I_OEE:
        cap.update(A0B0=a[("A", "B")], B0C0=a[("B", "C")])
    else:
        cap.update(A0B0=a[("A", "B")], C0D0=a[("C", "D")])
    spec = complete_spec(st, CapParams.of(**cap))
    roles = {f: f"{f}0" for f in FAMILIES}
    out = _new_octahedron(model, rays, spec, roles, None,
                          (("kind", "edges"),) + tuple(sorted(ext.items())))
    _check_at_seed(out)
    return out


def _extend_third_type(model: CompositeModel, stage: Edges, known: dict[str, float]):
    U = next(f for f in FAMILIES if f not in known)
    k = FAMILIES.index(U)
    P, Q, R = (FAMILIES[(k + j) % 4] for j in (1, 2, 3))
    tPQ, tQR = model.apex_angle(P, Q), model.apex_angle(Q, R)
    fpq = solve_triangle(SAS(known[P], known[Q], tPQ))  # X, P, Q
    fqr = solve_triangle(SAS(known[Q], known[R], tQR))  # X, Q, R
    role_of_family = {P: "A0", Q: "B0", R: "C0", U: "D0"}
    base_vals = dict(X0A0=known[P], A0X0B0=tPQ, B0X0C0=tQR, B0A0X0=fpq.angles[1],
                     C0B0X0=fqr.angles[1])
    if stage.oas is None:
        oas_opts = ["BD", "AC"]
    else:
        fam = set(stage.oas)
        if fam == {Q, U}:
            oas_opts = ["BD"]
        elif fam == {P, R}:
            oas_opts = ["AC"]
        else:
            raise StageError(f"OAS pair {stage.oas} is not an opposite pair of the cap")
    base_var = model.base.closure[0].variant if model.base.closure else "standard"
    if stage.variant is not None:
        var_opts = [stage.variant]
    else:
        var_opts = [base_var] + [v for v in ("standard", "alternate") if v != base_var]
    if model.subtype is SubType.III_OAS:
        oas_opts = [None]
    tried = []
    for oas, var in product(oas_opts, var_opts):
        params = CapParams.of(oas=oas, variant=var, **base_vals)
        roots = [stage.root_choice] if stage.root_choice is not None else [0, 1]
        for r in roots:
            try:
                spec = complete_spec(model.subtype, params, root_choice=r)
            except OctahedronError as exc:
                tried.append(f"{oas}/{var}/root {r}: {exc}")
                continue
            rays = dict(known)
            rays[U] = spec.length("X0", "D0")
            ext = {f: rays[f] - model.ray(f) for f in FAMILIES}
            log = (("kind", "edges"), ("oas", oas), ("variant", var), ("root", r)) + tuple(
                sorted(ext.items()))
            try:
                out = _new_octahedron(model, rays, spec, role_of_family, None, log)
                _check_at_seed(out)
            except (FlexError, DegenerateFace) as exc:
                tried.append(f"{oas}/{var}/root {r}: {exc}")
                continue
            return out
    raise NoRealClosure("no closure choice continues the cap: " + "; ".join(tried))


def respecify_cap(model: CompositeModel, stage: RespecifyCap) -> CompositeModel:
    """II-OEE stage: new octahedron on the open cap with rays scaled by
    ``retain`` and free lateral lengths at the new apex."""
    if model.subtype is not SubType.II_OEE:
        raise StageError("RespecifyCap applies to II-OEE only")
    t = stage.retain
    rays = {f: t * model.ray(f) for f in FAMILIES}
    a = {e: _law_of_cosines(rays[e[0]], rays[e[1]], model.apex_angle(*e)) for e in RING_EDGES}
    cap = {f"X0{f}0": rays[f] for f in FAMILIES}
    cap.update(A0B0=a[("A", "B")], B0C0=a[("B", "C")], X1A0=stage.lateral_a,
               X1B0=stage.lateral_b)
    spec = complete_spec(SubType.II_OEE, CapParams.of(**cap))
    roles = {f: f"{f}0" for f in FAMILIES}
    out = _new_octahedron(model, rays, spec, roles, stage.apex_side,
                          (("kind", "respecify"), ("retain", t)))
    _check_at_seed(out)
    return out


def close(model: CompositeModel) -> FlexiblePolyhedron:
    cap = tuple((model.apex, model.ring[FAMILIES.index(a)], model.ring[FAMILIES.index(b)])
                for a, b in RING_EDGES)
    return _finish(model.faces + cap, 0, model.subtype, model.base, model.steps,
                   model.phi_seed, ("X0", model.apex), model.octahedra)


def apply_stage(model: CompositeModel, stage) -> CompositeModel:
    if isinstance(stage, Scale):
        return extend_scale(model, stage)
    if isinstance(stage, Edges):
        return extend_edges(model, stage)
    if isinstance(stage, RespecifyCap):
        return respecify_cap(model, stage)
    raise StageError(f"cannot apply {type(stage).__name__} here")


def base_spec(plan: ConstructionPlan) -> OctahedronSpec:
    return complete_spec(plan.subtype, plan.cap, plan.root_choice)


def assemble_genus0(plan: ConstructionPlan, *, closed: bool = True):
    """Run every stage of ``plan`` and close with the cap at the last apex.

    With ``closed=False`` the open model is returned instead.
    """
    if not isinstance(plan.stages[-1], Close):
        raise StageError("genus-0 plans end with Close")
    model = CompositeModel.start(base_spec(plan), plan.phi_seed)
    for stage in plan.stages[:-1]:
        model = apply_stage(model, stage)
    return close(model) if closed else model


# ---------------------------------------------------------------- apex lattice / tori


def _lattice_terms(l: float, r: float, fam: str) -> tuple[tuple[str, float], ...]:
    """Base vertex of the octahedron spanning [l, r] on the apex axis:
    X0 + l (X1 - X0) + (r - l) (V0 - X0)."""
    return (("X0", 1.0 - r), ("X1", l), (f"{fam}0", r - l))


def _pkey(x: float) -> float:
    return float(round(x, 12))


@dataclass(frozen=True)
class CandidateQuad:
    p: tuple[float, float]
    q: tuple[float, float]
    side: str

    def key(self):
        a, b = sorted((self.p, self.q))
        return (a, b, self.side)


@dataclass(frozen=True)
class RingStructure:
    """Overlapping homothetic copies of one octahedron sharing its apex axis.

    A copy spans an interval [l, r] of the axis (the base octahedron is
    [0, 1]). Point (l, r) is where the ray family from apex l meets the one
    from apex r; it is the base of the (possibly implicit) copy [l, r].
    """

    base: OctahedronSpec
    phi_seed: float
    M: int
    N: int
    scales: tuple[float, ...]
    intervals: tuple[tuple[float, float], ...]
    points: tuple[tuple[float, float], ...]
    candidate_quads: tuple[CandidateQuad, ...]
    closure_error: float = 0.0

    def label(self, p: tuple[float, float], fam: str) -> str:
        return f"{fam}[{p[0]:g},{p[1]:g}]"

    def coords(self, phi: float, previous: FlexState | None = None) -> dict[tuple, dict]:
        st = flex(self.base, phi, previous)
        out = {}
        for p in self.points:
            out[p] = {f: sum(w * st.coords[k] for k, w in _lattice_terms(*p, f)) for f in FAMILIES}
        return out


def _lattice(intervals):
    lows = sorted({_pkey(l) for l, _ in intervals})
    highs = sorted({_pkey(r) for _, r in intervals})
    rmax = {l: max(_pkey(r) for ll, r in intervals if _pkey(ll) == l) for l in lows}
    lmin = {r: min(_pkey(l) for l, rr in intervals if _pkey(rr) == r) for r in highs}
    pts = [(l, r) for l in lows for r in highs if l < r and r <= rmax[l] and l >= lmin[r]]
    quads = []
    for l in lows:
        line = sorted(p for p in pts if p[0] == l)
        for a, b in zip(line, line[1:]):
            quads += [CandidateQuad(a, b, x + y) for x, y in RING_EDGES]
    for r in highs:
        line = sorted((p for p in pts if p[1] == r), key=lambda p: p[0])
        for a, b in zip(line, line[1:]):
            quads += [CandidateQuad(a, b, x + y) for x, y in RING_EDGES]
    return tuple(pts), tuple(quads)


def _loop_closure_error(base: OctahedronSpec, phi: float, loop) -> float:
    """Carry the octahedron of loop[0] around the loop by homotheties about
    shared apexes and measure how far it lands from where it started."""
    st = flex(base, phi)
    P = st.coords
    axis = P["X1"] - P["X0"]

    def octa(iv):
        l, r = iv
        pts = [P["X0"] + l * axis, P["X0"] + r * axis]
        pts += [sum(w * P[k] for k, w in _lattice_terms(l, r, f)) for f in FAMILIES]
        return np.array(pts)

    cur = octa(loop[0])
    for a, b in zip(loop, loop[1:] + loop[:1]):
        if a[0] == b[0]:
            c, s = cur[0], (b[1] - b[0]) / (a[1] - a[0])
        elif a[1] == b[1]:
            c, s = cur[1], (b[1] - b[0]) / (a[1] - a[0])
        else:
            raise RingMismatch(f"octahedra {a} and {b} share no apex")
        cur = c + s * (cur - c)
    return float(np.abs(cur - octa(loop[0])).max())


def unit_rectangles(points) -> list[list[tuple[float, float]]]:
    """Loops of four lattice points with adjacent coordinates on every side."""
    ls = sorted({p[0] for p in points})
    rs = sorted({p[1] for p in points})
    have = set(points)
    out = []
    for l1, l2 in zip(ls, ls[1:]):
        for r1, r2 in zip(rs, rs[1:]):
            loop = [(l1, r1), (l1, r2), (l2, r2), (l2, r1)]
            if all(p in have for p in loop):
                out.append(loop)
    return out


def _structure(base, phi_seed, M, N, scales, intervals) -> RingStructure:
    pts, quads = _lattice(intervals)
    rects = unit_rectangles(pts)
    if not rects:
        raise RingMismatch("the copies enclose no closed ring of octahedra")
    err = max(_loop_closure_error(base, phi_seed, loop) for loop in rects)
    scale = base.scale * max(r for _, r in intervals)
    if err > 1e-8 * scale:
        raise RingMismatch(f"ring closure error {err:.3e}")
    return RingStructure(base, phi_seed, M, N, tuple(scales), tuple(intervals), pts, quads, err)


def build_ring_structure(cap: CapParams, M: int, N: int, scales: Sequence[float], *,
                         subtype: SubType | str = SubType.I_OEE, root_choice: int | None = None,
                         phi_seed: float = 1.0) -> RingStructure:
    """Two nested families of copies of the base octahedron.

    With scales 1 = f_1 < f_2 < ... < f_M the copies are [0, f_k] (sharing
    apex X0) and [f_M - f_k, f_M] (sharing the far apex of the largest
    copy). The overlap yields N = M - 1 levels of smaller octahedra.
    """
    if M < 3 or N < 2:
        raise RingMismatch("need M >= 3 and N >= 2")
    sc = [float(s) for s in scales]
    if len(sc) == M and sc[0] == 1.0:
        sc = sc[1:]
    if len(sc) != M - 1:
        raise RingMismatch(f"expected {M - 1} scales f_2..f_M, got {len(sc)}")
    if all(s == 1.0 for s in sc):
        raise DegenerateRing("all scales equal 1: no levels")
    if any(s <= 1.0 for s in sc) or len(set(sc)) != len(sc):
        raise RingMismatch("scales f_2..f_M must be distinct and greater than 1")
    if N != len(sc):
        raise RingMismatch(f"{M} copies give {len(sc)} levels, not {N}")
    fs = [1.0] + sorted(sc)
    fm = fs[-1]
    intervals = sorted({(0.0, _pkey(f)) for f in fs} | {(_pkey(fm - f), _pkey(fm)) for f in fs})
    base = complete_spec(subtype, cap, root_choice)
    return _structure(base, phi_seed, M, N, sc, intervals)


def lattice_structure(base: OctahedronSpec, intervals, phi_seed: float) -> RingStructure:
    """Structure over an explicit set of copies (used for consistency checks)."""
    iv = tuple(sorted((_pkey(l), _pkey(r)) for l, r in intervals))
    return _structure(base, phi_seed, len(iv), 0, (), iv)


def _torus_from_loops(base, phi_seed, quads, label) -> FlexiblePolyhedron:
    faces, steps, seen = [], [], set()
    for cq in quads:
        x, y = cq.side[0], cq.side[1]
        faces.append((label(cq.p, x), label(cq.p, y), label(cq.q, y), label(cq.q, x)))
        for p in (cq.p, cq.q):
            for f in FAMILIES:
                lab = label(p, f)
                if lab in seen:
                    continue
                seen.add(lab)
                if p == (0.0, 1.0):
                    if lab != f"{f}0":
                        steps.append(_Affine(lab, ((f"{f}0", 1.0),)))
                else:
                    steps.append(_Affine(lab, _lattice_terms(p[0], p[1], f)))
    if not faces:
        raise NotClosed("empty selection")
    poly = _finish(faces, 1, base.subtype, base, steps, phi_seed)
    fc = poly.complex
    euler = len(fc.vertices) - len(fc.edges) + len(fc.faces)
    if euler != 0:
        raise NotClosed(f"selection closes with Euler characteristic {euler}, not a torus")
    return poly


def extract_torus(structure: RingStructure, selection: Sequence) -> FlexiblePolyhedron:
    """Torus made of the selected candidate quads.

    ``selection`` items are CandidateQuad values or ``((l, r), (l, r), side)`` triples.
    """
    allowed = {cq.key() for cq in structure.candidate_quads}
    chosen = []
    for item in selection:
        cq = item if isinstance(item, CandidateQuad) else CandidateQuad(
            (_pkey(item[0][0]), _pkey(item[0][1])), (_pkey(item[1][0]), _pkey(item[1][1])), item[2])
        if cq.key() not in allowed:
            raise RingMismatch(f"{cq} is not a candidate quad of the structure")
        chosen.append(cq)
    return _torus_from_loops(structure.base, structure.phi_seed, chosen, structure.label)


def loop_selection(loop: Sequence[tuple[float, float]]) -> tuple[CandidateQuad, ...]:
    """All four side quads for every step of a closed lattice loop."""
    out = []
    for a, b in zip(loop, list(loop[1:]) + [loop[0]]):
        out += [CandidateQuad(a, b, x + y) for x, y in RING_EDGES]
    return tuple(out)


def torus16_intervals(f: float) -> tuple[tuple[float, float], ...]:
    """Octahedra P0..P3 of the sixteen-face torus as axis intervals."""
    return ((0.0, 1.0), (1.0 - f, 1.0), (1.0 - f, 2.0 - f), (0.0, 2.0 - f))


def build_torus16(cap: CapParams | OctahedronSpec, plan: TorusPlan, phi_seed: float = 1.0,
                  root_choice: int | None = None) -> FlexiblePolyhedron:
    """P0; P1 = P0 scaled by f about X1; P2 = P1 scaled by 1/f about X2;
    P3 = P0 scaled by F = 2 - f about X0; faces are the 16 band quads."""
    base = cap if isinstance(cap, OctahedronSpec) else complete_spec(SubType.I_OEE, cap, root_choice)
    if base.subtype is not SubType.I_OEE:
        raise StageError("the sixteen-face torus starts from an I-OEE octahedron")
    loop = [(_pkey(l), _pkey(r)) for l, r in torus16_intervals(plan.f)]
    level = {p: i for i, p in enumerate(loop)}
    return _torus_from_loops(base, phi_seed, loop_selection(loop),
                             lambda p, fam: f"{fam}{level[p]}")


def contraction_factor(spec: OctahedronSpec, vertex: str, length: float) -> float:
    """f = 1 - L / |X1 V0| for a contraction of length L along X1 V0."""
    return 1.0 - length / spec.length("X1", f"{vertex}0")


def build_polyhedron(plan: ConstructionPlan) -> FlexiblePolyhedron:
    """Assemble whatever ``plan`` describes: a genus-0 chain, the
    sixteen-face torus or a torus cut from a ring structure."""
    if isinstance(plan.stages[-1], Close):
        return assemble_genus0(plan)
    if len(plan.stages) != 1:
        raise StageError("torus plans consist of the TorusClose stage alone")
    t = plan.torus
    if isinstance(t, RingPlan):
        rs = build_ring_structure(plan.cap, t.M, t.N, t.scales, subtype=plan.subtype,
                                  root_choice=plan.root_choice, phi_seed=plan.phi_seed)
        sel = loop_selection([(_pkey(l), _pkey(r)) for l, r in t.loop]) if t.loop else t.quads
        return extract_torus(rs, sel)
    spec = base_spec(plan)
    if isinstance(t, TorusContraction):
        t = TorusPlan(contraction_factor(spec, t.vertex, t.length))
    return build_torus16(spec, t, plan.phi_seed)
