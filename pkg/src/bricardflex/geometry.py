"""Floating-point primitives: rotations, trilateration, triangles, angles, areas, volumes.

Points are plain ``numpy`` arrays of shape (3,). Angles are radians.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.spatial.transform import Rotation

TWO_PI = 2.0 * math.pi


class GeometryError(ValueError):
    """Base class for kernel errors."""


class NoRealIntersection(GeometryError):
    pass


class DegenerateCenters(GeometryError):
    pass


class InvalidTriangle(GeometryError):
    pass


class DegenerateWing(GeometryError):
    pass


class BrokenFan(GeometryError):
    pass


class NotClosed(GeometryError):
    pass


class DegenerateFace(GeometryError):
    pass


def as_point(p) -> np.ndarray:
    """Return ``p`` as a finite float vector of length 3."""
    a = np.asarray(p, dtype=float).reshape(3)
    if not np.all(np.isfinite(a)):
        raise ValueError(f"non-finite coordinates {a!r}")
    return a


@dataclass(frozen=True)
class AxisLine:
    origin: np.ndarray
    direction: np.ndarray

    def __post_init__(self):
        d = as_point(self.direction)
        n = np.linalg.norm(d)
        if n == 0.0:
            raise ValueError("axis direction is the zero vector")
        object.__setattr__(self, "origin", as_point(self.origin))
        object.__setattr__(self, "direction", d / n)


@dataclass(frozen=True)
class Homothety:
    """Scaling map ``p -> center + factor * (p - center)``."""

    center: np.ndarray
    factor: float

    def __post_init__(self):
        if self.factor == 0.0 or not math.isfinite(self.factor):
            raise ValueError("homothety factor must be finite and nonzero")
        object.__setattr__(self, "center", as_point(self.center))

    def __call__(self, p) -> np.ndarray:
        return self.center + self.factor * (np.asarray(p, dtype=float) - self.center)


def rotate_about_axis(p, axis: AxisLine, angle: float) -> np.ndarray:
    """Right-handed rotation of ``p`` about ``axis`` by ``angle``."""
    rot = Rotation.from_rotvec(axis.direction * angle)
    return axis.origin + rot.apply(as_point(p) - axis.origin)


def trilaterate(c1, c2, c3, d1: float, d2: float, d3: float, branch: int,
                return_discriminant: bool = False):
    """Point at distances ``d1, d2, d3`` from ``c1, c2, c3``.

    ``branch`` (+1 or -1) is the sign of ((c2-c1) x (c3-c1)) . (result-c1).
    A slightly negative discriminant (down to -1e-12 * scale**2) counts as
    tangency and is clamped to zero.
    """
    if branch not in (1, -1):
        raise ValueError("branch must be +1 or -1")
    c1 = np.asarray(c1, dtype=float)
    ex = np.asarray(c2, dtype=float) - c1
    dd = float(np.linalg.norm(ex))
    t = np.asarray(c3, dtype=float) - c1
    scale = max(dd, float(np.linalg.norm(t)), d1, d2, d3)
    if dd <= 1e-12 * scale:
        raise DegenerateCenters("first two centers coincide")
    ex = ex / dd
    i = float(ex @ t)
    ey = t - i * ex
    j = float(np.linalg.norm(ey))
    if j <= 1e-12 * scale:
        raise DegenerateCenters("centers are collinear")
    ey = ey / j
    ez = np.cross(ex, ey)
    x = (d1 * d1 - d2 * d2 + dd * dd) / (2.0 * dd)
    y = (d1 * d1 - d3 * d3 + i * i + j * j) / (2.0 * j) - (i / j) * x
    z2 = d1 * d1 - x * x - y * y
    if z2 < -1e-12 * scale * scale:
        raise NoRealIntersection(f"spheres do not meet (discriminant {z2:.3e})")
    z = math.sqrt(max(z2, 0.0))
    p = c1 + x * ex + y * ey + branch * z * ez
    if return_discriminant:
        return p, z2
    return p


@dataclass(frozen=True)
class ASA:
    """Side |P0P1| with the angles at P0 and P1."""

    side: float
    angle0: float
    angle1: float


@dataclass(frozen=True)
class SAS:
    """Sides |P0P1|, |P0P2| and the included angle at P0."""

    side01: float
    side02: float
    angle0: float


@dataclass(frozen=True)
class Triangle:
    """``sides[i]`` is opposite vertex i; ``angles[i]`` is at vertex i."""

    sides: tuple[float, float, float]
    angles: tuple[float, float, float]


def _check_angle(a: float) -> None:
    if not (0.0 < a < math.pi):
        raise InvalidTriangle(f"angle {a!r} outside (0, pi)")


def solve_triangle(spec: ASA | SAS) -> Triangle:
    if isinstance(spec, ASA):
        if spec.side <= 0.0:
            raise InvalidTriangle("nonpositive side")
        _check_angle(spec.angle0)
        _check_angle(spec.angle1)
        a2 = math.pi - spec.angle0 - spec.angle1
        if a2 <= 0.0:
            raise InvalidTriangle("angle sum >= pi")
        r = spec.side / math.sin(a2)
        return Triangle(
            (r * math.sin(spec.angle0), r * math.sin(spec.angle1), spec.side),
            (spec.angle0, spec.angle1, a2),
        )
    if isinstance(spec, SAS):
        if spec.side01 <= 0.0 or spec.side02 <= 0.0:
            raise InvalidTriangle("nonpositive side")
        _check_angle(spec.angle0)
        p1 = np.array([spec.side01, 0.0])
        p2 = spec.side02 * np.array([math.cos(spec.angle0), math.sin(spec.angle0)])
        s0 = float(np.linalg.norm(p2 - p1))
        a1 = _planar_angle(-p1, p2 - p1)
        a2 = math.pi - spec.angle0 - a1
        return Triangle((s0, spec.side02, spec.side01), (spec.angle0, a1, a2))
    raise TypeError("spec must be ASA or SAS")


def _planar_angle(u, v) -> float:
    cross = u[0] * v[1] - u[1] * v[0]
    return math.atan2(abs(cross), float(u @ v))


def angle_at(p, a, b) -> float:
    """Angle at ``p`` between rays to ``a`` and ``b``."""
    u = np.asarray(a, dtype=float) - p
    v = np.asarray(b, dtype=float) - p
    return math.atan2(float(np.linalg.norm(np.cross(u, v))), float(u @ v))


def triangle_angle(opposite: float, s1: float, s2: float) -> float:
    """Angle between sides ``s1`` and ``s2`` of a triangle whose third side is ``opposite``.

    Uses the half-angle form, which stays accurate for small angles.
    Raises InvalidTriangle when the triangle inequality fails.
    """
    s = 0.5 * (opposite + s1 + s2)
    num = (s - s1) * (s - s2)
    den = s * (s - opposite)
    if min(opposite, s1, s2) <= 0.0 or num < 0.0 or den <= 0.0:
        raise InvalidTriangle(f"sides {opposite}, {s1}, {s2} violate the triangle inequality")
    return 2.0 * math.atan(math.sqrt(num / den))


def dihedral_angle(edge_p, edge_q, wing_r1, wing_r2) -> float:
    """Angle in [0, 2*pi) from the half-plane through ``wing_r1`` to the one
    through ``wing_r2``, turning right-handed about ``edge_q - edge_p``."""
    p = np.asarray(edge_p, dtype=float)
    e = np.asarray(edge_q, dtype=float) - p
    ln = np.linalg.norm(e)
    e = e / ln
    u = np.asarray(wing_r1, dtype=float) - p
    u = u - (u @ e) * e
    w = np.asarray(wing_r2, dtype=float) - p
    w = w - (w @ e) * e
    tol = 1e-12 * ln
    if np.linalg.norm(u) <= tol or np.linalg.norm(w) <= tol:
        raise DegenerateWing("wing point lies on the edge line")
    ang = math.atan2(float(np.cross(u, w) @ e), float(u @ w))
    ang = ang % TWO_PI
    return 0.0 if ang == TWO_PI else ang


def _triangle_solid_angle(a, b, c) -> float:
    la, lb, lc = np.linalg.norm(a), np.linalg.norm(b), np.linalg.norm(c)
    num = float(a @ np.cross(b, c))
    den = la * lb * lc + float(a @ b) * lc + float(a @ c) * lb + float(b @ c) * la
    return 2.0 * math.atan2(num, den)


def solid_angle(apex, fan: Sequence[Sequence]) -> float:
    """Signed solid angle subtended at ``apex`` by a closed sequence of triangles.

    Each triangle contributes its signed spherical area, positive when its
    right-hand normal points away from the apex. A triangle that has the
    apex as a vertex (a cone face) contributes the spherical triangle
    spanned by a common pole and its two far directions, the pole being the
    mean far direction, so a cone fan yields the area of its spherical
    polygon. Consecutive triangles, cyclically, must share an edge.
    """
    apex = as_point(apex)
    tris = [np.asarray(t, dtype=float).reshape(3, 3) for t in fan]
    if not tris:
        raise BrokenFan("empty fan")
    scale = max(max(np.abs(t - apex).max() for t in tris), 1e-300)
    if len(tris) > 1:
        for k in range(len(tris)):
            t0, t1 = tris[k], tris[(k + 1) % len(tris)]
            shared = sum(
                1 for p in t0 if any(np.linalg.norm(p - q) <= 1e-12 * scale for q in t1)
            )
            if shared < 2:
                raise BrokenFan(f"triangles {k} and {(k + 1) % len(tris)} share no edge")
    rel = [t - apex for t in tris]
    far = []
    for r in rel:
        at = [i for i in range(3) if np.linalg.norm(r[i]) <= 1e-12 * scale]
        far.append(None if not at else (r[(at[0] + 1) % 3], r[(at[0] + 2) % 3]))
    cone = [f for f in far if f is not None]
    pole = None
    if cone:
        dirs = [v / np.linalg.norm(v) for f in cone for v in f]
        pole = np.sum(dirs, axis=0)
        if np.linalg.norm(pole) <= 1e-9 * len(dirs):
            pole = np.sum([np.cross(b, c) for b, c in cone], axis=0)
    total = 0.0
    for r, f in zip(rel, far):
        if f is None:
            total += _triangle_solid_angle(r[0], r[1], r[2])
        else:
            total += _triangle_solid_angle(pole, f[0], f[1])
    return total


def face_normal(points: np.ndarray) -> np.ndarray:
    """Area vector (Newell) of a polygon given as an (m, 3) array."""
    pts = np.asarray(points, dtype=float)
    nxt = np.roll(pts, -1, axis=0)
    return 0.5 * np.cross(pts, nxt).sum(axis=0)


@dataclass(frozen=True)
class FaceMetrics:
    area: float
    planarity_deviation: float
    centroid: np.ndarray


def face_metrics(points) -> FaceMetrics:
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 3 or pts.shape[1] != 3:
        raise DegenerateFace("a face needs at least three 3-d vertices")
    c = pts.mean(axis=0)
    q = pts - c
    sv = np.linalg.svd(q, compute_uv=False)
    if sv[0] == 0.0 or sv[1] <= 1e-12 * sv[0]:
        raise DegenerateFace("face vertices are collinear")
    if pts.shape[0] == 3:
        dev = 0.0
    else:
        normal = np.linalg.svd(q)[2][2]
        dev = float(np.abs(q @ normal).max())
    nxt = np.roll(q, -1, axis=0)
    area = 0.5 * float(np.linalg.norm(np.cross(q, nxt), axis=1).sum())
    return FaceMetrics(area, dev, c)


def _edge_use(faces: Iterable[Sequence]) -> dict:
    use: dict = {}
    for f in faces:
        m = len(f)
        for k in range(m):
            key = frozenset((f[k], f[(k + 1) % m]))
            use[key] = use.get(key, 0) + 1
    return use


def oriented_volume(faces: Sequence[Sequence], coords: Mapping | Sequence) -> float:
    """Signed volume of a closed face complex (sum of cones from the origin).

    ``faces`` are vertex-key loops into ``coords``; each edge must be used by
    exactly two faces.
    """
    bad = [tuple(e) for e, n in _edge_use(faces).items() if n != 2]
    if bad:
        raise NotClosed(f"{len(bad)} edges not shared by exactly two faces")
    vol = 0.0
    for f in faces:
        p0 = np.asarray(coords[f[0]], dtype=float)
        for k in range(1, len(f) - 1):
            p1 = np.asarray(coords[f[k]], dtype=float)
            p2 = np.asarray(coords[f[k + 1]], dtype=float)
            vol += float(p0 @ np.cross(p1, p2))
    return vol / 6.0
