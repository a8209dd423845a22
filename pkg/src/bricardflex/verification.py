"""Numerical certificates: topology counts, invariant sweeps, flat positions,
and a first-order rigidity oracle independent of the construction code."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import least_squares

from .construction import FlexiblePolyhedron
from .geometry import face_metrics, oriented_volume
from .mesh import FaceComplex, directed_edges
from .octahedra import FlexError, FlexionInterval, FlexState

FULL = 4.0 * math.pi
HALF = 2.0 * math.pi

LENGTH_TOL = 1e-10
AREA_TOL = 1e-10
CURVATURE_TOL = 1e-8
ANGLE_TOL = 1e-9
VOLUME_TOL = 1e-9
NULLITY_THRESHOLD = 1e-8
FLAT_TOL = 1e-8
MIN_DIHEDRAL_VARIATION = 0.01
MARCH_STEP = 2.0 * math.pi / 720


class DegenerateInput(ValueError):
    pass


# ---------------------------------------------------------------- topology


@dataclass(frozen=True)
class TopologyReport:
    V: int
    E: int
    F: int
    euler: int
    genus: int | None
    boundary_edges: int
    nonmanifold_edges: int
    oriented: bool

    def as_dict(self) -> dict:
        return dict(V=self.V, E=self.E, F=self.F, euler=self.euler, genus=self.genus,
                    boundary_edges=self.boundary_edges,
                    nonmanifold_edges=self.nonmanifold_edges, oriented=self.oriented)


def topology_check(faces: Sequence[Sequence[str]]) -> TopologyReport:
    if not faces:
        raise DegenerateInput("no faces")
    fc = FaceComplex(faces)
    V, E, F = len(fc.vertices), len(fc.edges), len(fc.faces)
    euler = V - E + F
    oriented = fc.consistently_oriented
    genus = (2 - euler) // 2 if fc.is_closed and oriented else None
    return TopologyReport(V, E, F, euler, genus, fc.boundary_edges, fc.nonmanifold_edges,
                          oriented)


# ---------------------------------------------------------------- rigidity oracle


def framework_constraints(faces: Sequence[Sequence[str]]):
    """Bars and coplanarity quadruples that make the face complex a framework.

    Polygons with more than three vertices are fanned from their first
    vertex; each extra vertex adds one coplanarity condition.
    """
    bars: dict[frozenset, tuple[str, str]] = {}
    planes = []
    for f in faces:
        for a, b in directed_edges(f):
            bars.setdefault(frozenset((a, b)), (a, b))
        for k in range(2, len(f) - 1):
            bars.setdefault(frozenset((f[0], f[k])), (f[0], f[k]))
        for k in range(3, len(f)):
            planes.append((f[0], f[1], f[2], f[k]))
    return list(bars.values()), planes


def rigidity_matrix(coords: Mapping[str, np.ndarray], edges, coplanar=()) -> np.ndarray:
    labels = sorted({v for e in edges for v in e} | {v for q in coplanar for v in q})
    col = {v: 3 * i for i, v in enumerate(labels)}
    P = {v: np.asarray(coords[v], dtype=float) for v in labels}
    rows = []
    for a, b in edges:
        d = P[a] - P[b]
        if np.linalg.norm(d) == 0.0:
            raise DegenerateInput(f"edge {a}{b} has coincident endpoints")
        r = np.zeros(3 * len(labels))
        r[col[a]:col[a] + 3] = d
        r[col[b]:col[b] + 3] = -d
        rows.append(r)
    for p0, p1, p2, p3 in coplanar:
        u, v, w = P[p1] - P[p0], P[p2] - P[p0], P[p3] - P[p0]
        # gradient of det[u, v, w]
        gu, gv, gw = np.cross(v, w), np.cross(w, u), np.cross(u, v)
        r = np.zeros(3 * len(labels))
        r[col[p1]:col[p1] + 3] += gu
        r[col[p2]:col[p2] + 3] += gv
        r[col[p3]:col[p3] + 3] += gw
        r[col[p0]:col[p0] + 3] -= gu + gv + gw
        rows.append(r)
    return np.array(rows)


def first_order_flex_dim(coords: Mapping[str, np.ndarray], edges, coplanar=()) -> int:
    """Nullity of the rigidity matrix, trivial motions included."""
    R = rigidity_matrix(coords, edges, coplanar)
    n = R.shape[1]
    sv = np.linalg.svd(R, compute_uv=False)
    if sv.size == 0 or sv[0] == 0.0:
        return n
    rank = int(np.sum(sv > NULLITY_THRESHOLD * sv[0]))
    return n - rank


# ---------------------------------------------------------------- invariant sweep


@dataclass(frozen=True)
class QuantityRecord:
    """``kind`` is "drift" (max - min against ``tolerance``) or "bound"
    (largest distance from ``target``)."""

    name: str
    kind: str
    min: float
    max: float
    drift: float
    relative_drift: float
    tolerance: float
    passed: bool
    target: float | None = None

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("name", "kind", "min", "max", "drift",
                                              "relative_drift", "tolerance", "passed", "target")}


@dataclass(frozen=True)
class InvariantReport:
    records: tuple[QuantityRecord, ...]
    grid: tuple[float, ...]
    columns: tuple[str, ...] = field(repr=False)
    rows: tuple[tuple[float, ...], ...] = field(repr=False)
    flags: tuple[tuple[str, tuple[bool, ...]], ...] = field(repr=False, default=())

    @property
    def samples(self) -> int:
        return len(self.grid)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.records)

    def record(self, name: str) -> QuantityRecord:
        for r in self.records:
            if r.name == name:
                return r
        raise KeyError(name)

    def failures(self) -> list[QuantityRecord]:
        return [r for r in self.records if not r.passed]


def _drift(name, values, tol, denom=None) -> QuantityRecord:
    v = np.asarray(values, dtype=float)
    lo, hi = float(v.min()), float(v.max())
    drift = hi - lo
    scale = float(np.abs(v).mean()) if denom is None else denom
    rel = drift / scale if scale > 0.0 else drift
    return QuantityRecord(name, "drift", lo, hi, drift, rel, tol, bool(rel <= tol))


def _bound(name, values, target, tol) -> QuantityRecord:
    v = np.asarray(values, dtype=float)
    dev = float(np.abs(v - target).max())
    lo, hi = float(v.min()), float(v.max())
    return QuantityRecord(name, "bound", lo, hi, hi - lo, dev, tol, bool(dev <= tol), target)


def realize_grid(poly: FlexiblePolyhedron, grid: Sequence[float]) -> list[FlexState]:
    """Realize at every grid value, marching outward from the point closest to the seed.

    Consecutive values further apart than the scan step are bridged by
    intermediate states so that branch tracking never takes a long hop.
    """
    g = list(grid)
    k0 = int(np.argmin([abs(p - poly.phi_seed) for p in g]))
    out: list[FlexState | None] = [None] * len(g)

    def march(st, a, b):
        hops = int(math.ceil(abs(b - a) / MARCH_STEP))
        for phi in np.linspace(a, b, hops + 1)[1:-1]:
            st = poly.realize(float(phi), st)
        return poly.realize(b, st)

    start = poly.realize(poly.phi_seed)
    out[k0] = start if g[k0] == poly.phi_seed else march(start, poly.phi_seed, g[k0])
    for rng in (range(k0 + 1, len(g)), range(k0 - 1, -1, -1)):
        prev, at = out[k0], g[k0]
        for k in rng:
            prev = march(prev, at, g[k])
            at = g[k]
            out[k] = prev
    return out


def _moved(coords, motion):
    if motion is None:
        return coords
    R, t = motion
    return {k: R @ np.asarray(v) + t for k, v in coords.items()}


def _label(parts) -> str:
    return "_".join(parts)


def invariant_sweep(poly: FlexiblePolyhedron, grid: Sequence[float], *,
                    motion: tuple[np.ndarray, np.ndarray] | None = None) -> InvariantReport:
    """Evaluate every invariant at each grid value.

    The grid is sorted first, so the report does not depend on its order.
    Dihedral angles are unwrapped along the sorted grid before entering the
    cap solid angles and the total mean curvature. ``motion = (R, t)`` is
    applied to every realized state (a rigid motion changes nothing).
    """
    grid = tuple(sorted(float(p) for p in grid))
    if not grid:
        raise ValueError("empty grid")
    fc = poly.complex
    states = realize_grid(poly, grid)
    coords = [_moved(st.coords, motion) for st in states]
    edges = fc.edges
    E = np.array([[np.linalg.norm(c[a] - c[b]) for a, b in edges] for c in coords])
    A = np.array([[face_metrics([c[v] for v in f]).area for f in fc.faces] for c in coords])
    vol = np.array([oriented_volume(fc.faces, c) for c in coords])
    raw = np.array([[fc.interior_dihedral(c, a, b) for a, b in edges] for c in coords])
    # anchor the unwrapped branch at the sample nearest the seed: range ends
    # can fold faces flat, where 0 and 2 pi differ only by rounding
    k0 = int(np.argmin(np.abs(np.array(grid) - poly.phi_seed)))
    D = np.unwrap(raw, axis=0)
    D += raw[k0] - D[k0]
    tmc = (E * (math.pi - D)).sum(axis=1)
    scale = max(poly.scale, float(E.max()))
    res = np.array([st.residual for st in states])

    records = []
    columns = ["phi", "residual"]
    data = [np.array(grid), res]
    flags = []
    for j, (a, b) in enumerate(edges):
        name = _label(("length", a, b))
        records.append(_drift(name, E[:, j], LENGTH_TOL))
        columns.append(name)
        data.append(E[:, j])
    for j, f in enumerate(fc.faces):
        name = _label(("area",) + f)
        records.append(_drift(name, A[:, j], AREA_TOL))
        columns.append(name)
        data.append(A[:, j])
    vtol = VOLUME_TOL * scale ** 3
    records.append(_bound("volume", vol, 0.0, vtol))
    columns.append("volume")
    data.append(vol)
    flags.append(("volume_ok", tuple(bool(abs(x) <= vtol) for x in vol)))

    third = poly.subtype is not None and poly.subtype.is_third_type
    if poly.end_caps:
        idx = {e: j for j, e in enumerate(edges)}
        caps = []
        for v in poly.end_caps:
            js = [idx[e] for e in edges if v in e]
            omega = D[:, js].sum(axis=1) - (len(js) - 2) * math.pi
            caps.append(omega)
            columns.append(_label(("cap", v)))
            data.append(omega)
            if third:
                records.append(_bound(_label(("cap", v)), omega, HALF, ANGLE_TOL))
                flags.append((_label(("cap", v, "ok")),
                              tuple(bool(abs(x - HALF) <= ANGLE_TOL) for x in omega)))
        total = sum(caps)
        records.append(_bound("cap_sum", total, FULL, ANGLE_TOL))
        columns.append("cap_sum")
        data.append(total)
        flags.append(("cap_sum_ok", tuple(bool(abs(x - FULL) <= ANGLE_TOL) for x in total)))

    lsum = float(E.mean(axis=0).sum())
    records.append(_drift("mean_curvature", tmc, CURVATURE_TOL, math.pi * lsum))
    columns.append("mean_curvature")
    data.append(tmc)
    rows = tuple(tuple(float(x) for x in row) for row in np.array(data).T)
    return InvariantReport(tuple(records), grid, tuple(columns), rows, tuple(flags))


# ---------------------------------------------------------------- certificate


@dataclass(frozen=True)
class FlexCertificate:
    range: FlexionInterval
    max_residual: float
    max_dihedral_variation: float
    flat_positions: tuple[FlatPosition, ...]
    verdict: str
    tolerance: float

    def as_dict(self) -> dict:
        return dict(range=[self.range.lo, self.range.hi], periodic=self.range.periodic,
                    max_residual=self.max_residual,
                    max_dihedral_variation=self.max_dihedral_variation,
                    flat_positions=[f.as_dict() for f in self.flat_positions],
                    verdict=self.verdict, tolerance=self.tolerance)


def plane_deviation(coords: Mapping[str, np.ndarray]) -> tuple[float, float]:
    """(largest distance to the best-fit plane, sum of squared distances)."""
    P = np.array([np.asarray(v, dtype=float) for v in coords.values()])
    Q = P - P.mean(axis=0)
    _, s, vt = np.linalg.svd(Q, full_matrices=False)
    return float(np.abs(Q @ vt[2]).max()), float(s[2] ** 2)


@dataclass(frozen=True)
class FlatPosition:
    """A located coplanar state.

    ``swept_deviation`` is the plane deviation of the realized state at
    ``phi``; ``deviation`` and ``length_error`` belong to the planar state
    obtained by fitting 2-d coordinates to every bar length, starting from
    the projection of the realized state onto its best-fit plane.
    """

    phi: float
    swept_deviation: float
    deviation: float
    length_error: float
    distance: float

    def as_dict(self) -> dict:
        return dict(phi=self.phi, swept_deviation=self.swept_deviation,
                    deviation=self.deviation, length_error=self.length_error,
                    distance=self.distance)


def planar_polish(coords: Mapping[str, np.ndarray], bars) -> tuple[dict, float]:
    """Nearest planar realization of ``bars``; returns it with the largest
    relative bar-length error."""
    labels = list(coords)
    P = np.array([np.asarray(coords[v], dtype=float) for v in labels])
    c = P.mean(axis=0)
    _, _, vt = np.linalg.svd(P - c, full_matrices=False)
    uv = (P - c) @ vt[:2].T
    idx = {v: i for i, v in enumerate(labels)}
    pairs = np.array([(idx[a], idx[b]) for a, b in bars])
    target = np.linalg.norm(P[pairs[:, 0]] - P[pairs[:, 1]], axis=1)

    def fun(x):
        q = x.reshape(-1, 2)
        return np.linalg.norm(q[pairs[:, 0]] - q[pairs[:, 1]], axis=1) - target

    sol = least_squares(fun, uv.ravel(), method="trf", xtol=1e-15, ftol=1e-15, gtol=1e-15)
    q = sol.x.reshape(-1, 2)
    flat = {v: c + q[i, 0] * vt[0] + q[i, 1] * vt[1] for v, i in idx.items()}
    return flat, float(np.abs(fun(sol.x) / target).max())


def find_flat_positions(poly: FlexiblePolyhedron, interval: FlexionInterval,
                        samples: int = 720) -> tuple[FlatPosition, ...]:
    """Flexion values where every vertex lies in one plane.

    Local minima of the plane deviation on a grid are refined by bisection
    on the sign of a symmetric difference (the derivative proxy). Close to
    a flat state the realized heights lose half their digits, so each
    candidate is polished into a planar realization; it counts when that
    realization keeps every bar length to 1e-10 relative, lies within
    1e-5 * scale of the swept state and deviates from its plane by at most
    1e-8 * scale.
    """
    grid = interval.grid(samples)
    states = realize_grid(poly, grid)
    labels = poly.labels

    def vertices(st):
        return {v: st.coords[v] for v in labels}

    h = np.array([plane_deviation(vertices(st))[1] for st in states])
    n = len(grid)
    step = float(grid[1] - grid[0]) if n > 1 else 0.0
    if interval.periodic:
        ks = [k for k in range(n) if h[k] <= h[k - 1] and h[k] < h[(k + 1) % n]]
    else:
        ks = [k for k in range(1, n - 1) if h[k] <= h[k - 1] and h[k] < h[k + 1]]
    bars, _ = framework_constraints(poly.faces)
    scale = poly.scale

    found: list[FlatPosition] = []
    for k in ks:
        anchor = states[k]

        def dev(phi):
            return plane_deviation(vertices(poly.realize(phi, anchor)))[0]

        lo, hi = float(grid[k]) - step, float(grid[k]) + step
        if not interval.periodic:
            lo, hi = max(lo, interval.lo), min(hi, interval.hi)
        try:
            while hi - lo > 1e-15 * max(1.0, abs(lo)):
                mid, e = 0.5 * (lo + hi), 0.125 * (hi - lo)
                if dev(mid + e) > dev(mid - e):
                    hi = mid + e
                else:
                    lo = mid - e
            phi = 0.5 * (lo + hi)
            pts = vertices(poly.realize(phi, anchor))
        except FlexError:
            continue
        swept = plane_deviation(pts)[0]
        if swept > 1e-5 * scale:
            continue
        flat, err = planar_polish(pts, bars)
        dist = max(float(np.linalg.norm(flat[v] - pts[v])) for v in flat)
        d = plane_deviation(flat)[0]
        if err > LENGTH_TOL or dist > 1e-5 * scale or d > FLAT_TOL * scale:
            continue
        if interval.periodic:
            phi = interval.lo + (phi - interval.lo) % (2.0 * math.pi)
        if all(abs(phi - f.phi) > 1e-9 for f in found):
            found.append(FlatPosition(phi, swept, d, err, dist))
    return tuple(sorted(found, key=lambda f: f.phi))


def flex_certificate(poly: FlexiblePolyhedron, samples: int = 1000, *,
                     tolerance: float | None = None) -> FlexCertificate:
    """Sweep the flexion range and classify the model.

    ``flexible`` needs residuals within tolerance and some dihedral angle
    changing by at least 0.01 rad; a range that collapses to the seed is
    ``rigid``. Third-type builds also get their flat positions.
    """
    tol = poly.tolerance if tolerance is None else tolerance * poly.scale
    interval = poly.flexion_range()
    if interval.width <= 1e-6:
        return FlexCertificate(interval, 0.0, 0.0, (), "rigid", tol)
    grid = interval.grid(samples)
    states = realize_grid(poly, grid)
    fc = poly.complex
    max_res = max(st.residual for st in states)
    D = np.unwrap(np.array([[fc.interior_dihedral(st.coords, a, b) for a, b in fc.edges]
                            for st in states]), axis=0)
    variation = float((D.max(axis=0) - D.min(axis=0)).max())
    flats = ()
    if poly.subtype is not None and poly.subtype.is_third_type:
        flats = find_flat_positions(poly, interval)
    if max_res > tol:
        verdict = "inconsistent"
    elif variation < MIN_DIHEDRAL_VARIATION:
        verdict = "rigid"
    else:
        verdict = "flexible"
    return FlexCertificate(interval, float(max_res), variation, flats, verdict, tol)


def rigidity_profile(poly: FlexiblePolyhedron, grid: Sequence[float]) -> list[int]:
    """first_order_flex_dim of the face framework at each grid value."""
    bars, planes = framework_constraints(poly.faces)
    return [first_order_flex_dim(st.coords, bars, planes) for st in realize_grid(poly, grid)]


@dataclass(frozen=True)
class VerificationReport:
    topology: TopologyReport
    certificate: FlexCertificate
    invariants: InvariantReport

    @property
    def passed(self) -> bool:
        t = self.topology
        return (t.boundary_edges == 0 and t.nonmanifold_edges == 0 and t.oriented
                and self.certificate.verdict == "flexible" and self.invariants.passed)

    def as_dict(self) -> dict:
        return dict(passed=self.passed, topology=self.topology.as_dict(),
                    certificate=self.certificate.as_dict(),
                    invariants=dict(samples=self.invariants.samples,
                                    passed=self.invariants.passed,
                                    records=[r.as_dict() for r in self.invariants.records]))


def verify_polyhedron(poly: FlexiblePolyhedron, samples: int = 1000, *,
                      tolerance: float | None = None) -> VerificationReport:
    """Topology, certificate and the invariant suite on the certificate's grid."""
    topo = topology_check(poly.faces)
    cert = flex_certificate(poly, samples, tolerance=tolerance)
    grid = cert.range.grid(samples) if cert.range.width > 0.0 else (poly.phi_seed,)
    return VerificationReport(topo, cert, invariant_sweep(poly, grid))
