"""Bricard octahedra: metric completion for the five sub-types, closure
equations for the third type, and realization as coordinates along the flex.

Vertex names follow the cap notation: apexes X0, X1 and base A0, B0, C0, D0.
Faces are stored counter-clockwise, i.e. with normals given by
(v1 - v0) x (v2 - v0).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from .geometry import (
    ASA,
    SAS,
    DegenerateCenters,
    InvalidTriangle,
    NoRealIntersection,
    angle_at,
    solve_triangle,
    triangle_angle,
    trilaterate,
)


class SubType(str, Enum):
    I_OEE = "I-OEE"
    II_AEE = "II-AEE"
    II_OEE = "II-OEE"
    III_OAE = "III-OAE"
    III_OAS = "III-OAS"

    @property
    def is_third_type(self) -> bool:
        return self in (SubType.III_OAE, SubType.III_OAS)


class VertexLabel(NamedTuple):
    family: str
    level: int

    def __str__(self) -> str:
        return f"{self.family}{self.level}"

    @classmethod
    def parse(cls, text: str) -> "VertexLabel":
        fam, lev = text[0], text[1:]
        if fam not in "XABCD" or not lev.isdigit():
            raise ValueError(f"bad vertex label {text!r}")
        return cls(fam, int(lev))


LABELS = ("X0", "X1", "A0", "B0", "C0", "D0")
BASE = ("A0", "B0", "C0", "D0")
EDGE_PAIRS = (
    ("X0", "A0"), ("X0", "B0"), ("X0", "C0"), ("X0", "D0"),
    ("X1", "A0"), ("X1", "B0"), ("X1", "C0"), ("X1", "D0"),
    ("A0", "B0"), ("B0", "C0"), ("C0", "D0"), ("D0", "A0"),
)
EDGE_NAMES = tuple(a + b for a, b in EDGE_PAIRS)
FACES = (
    ("X0", "A0", "B0"), ("X0", "B0", "C0"), ("X0", "C0", "D0"), ("X0", "D0", "A0"),
    ("X1", "B0", "A0"), ("X1", "C0", "B0"), ("X1", "D0", "C0"), ("X1", "A0", "D0"),
)
# Neighbours of each vertex in the cyclic order of its faces. Face angle k sits
# between ring[k] and ring[k+1]; opposite angles are (0, 2) and (1, 3).
RING = {
    "X0": ("A0", "B0", "C0", "D0"),
    "X1": ("B0", "A0", "D0", "C0"),
    "A0": ("X0", "D0", "X1", "B0"),
    "B0": ("X0", "A0", "X1", "C0"),
    "C0": ("X0", "B0", "X1", "D0"),
    "D0": ("X0", "C0", "X1", "A0"),
}

DEGENERATE_ANGLE = 1e-9
# largest vertex move accepted between consecutive states, relative to scale
MAX_JUMP = 0.5


class OctahedronError(ValueError):
    pass


class InvalidCap(OctahedronError):
    pass


class InfeasibleCap(OctahedronError):
    pass


class NoRealClosure(OctahedronError):
    pass


class NoRealRoot(NoRealClosure):
    pass


class NoAdmissibleRoot(NoRealClosure):
    pass


class FlexError(OctahedronError):
    pass


class OutOfRange(FlexError):
    pass


class Inconsistent(FlexError):
    pass


class SeedInvalid(FlexError):
    pass


class SymmetryNotFound(OctahedronError):
    pass


def edge_key(p: str, q: str) -> str:
    """Canonical name of the edge joining ``p`` and ``q``."""
    if p + q in EDGE_NAMES:
        return p + q
    if q + p in EDGE_NAMES:
        return q + p
    raise KeyError(f"{p}{q} is not an octahedron edge")


def _face_key(v: str, a: str, b: str) -> tuple[str, str, str]:
    s = {v, a, b}
    for f in FACES:
        if set(f) == s:
            return f
    raise KeyError(f"{v}{a}{b} is not a face")


# ---------------------------------------------------------------- parameters

LENGTH_KEYS = {
    SubType.I_OEE: ("X0A0", "X0B0", "X0C0", "X0D0", "A0B0", "B0C0"),
    SubType.II_AEE: ("X0A0", "X0B0", "X0C0", "X0D0", "A0B0", "C0D0"),
    SubType.II_OEE: ("X0A0", "X0B0", "X0C0", "X0D0", "A0B0", "B0C0", "X1A0", "X1B0"),
    SubType.III_OAE: ("X0A0",),
    SubType.III_OAS: ("X0A0",),
}
ANGLE_KEYS = ("A0X0B0", "B0X0C0", "B0A0X0", "C0B0X0")
VARIANTS = ("standard", "alternate")
OAS_CHOICES = ("BD", "AC")


@dataclass(frozen=True)
class CapParams:
    """Parameters of the cap at X0.

    ``values`` maps edge names (``"X0A0"``) to lengths and, for the third
    type, angle names (``"A0X0B0"`` = angle at X0) to radians. ``oas`` says
    which base pair is OAS for III-OAE; ``variant`` picks the closure family.
    """

    values: tuple[tuple[str, float], ...]
    oas: str | None = None
    variant: str = "standard"

    @classmethod
    def of(cls, oas: str | None = None, variant: str = "standard", **values: float) -> "CapParams":
        return cls(tuple(sorted((k, float(v)) for k, v in values.items())), oas, variant)

    def __getitem__(self, key: str) -> float:
        for k, v in self.values:
            if k == key:
                return v
        raise KeyError(key)

    def keys(self) -> tuple[str, ...]:
        return tuple(k for k, _ in self.values)

    def as_dict(self) -> dict[str, float]:
        return dict(self.values)

    def scaled(self, c: float) -> "CapParams":
        vals = {k: (v * c if k in EDGE_NAMES else v) for k, v in self.values}
        return CapParams.of(self.oas, self.variant, **vals)


def required_keys(subtype: SubType) -> tuple[str, ...]:
    subtype = SubType(subtype)
    if subtype.is_third_type:
        return LENGTH_KEYS[subtype] + ANGLE_KEYS
    return LENGTH_KEYS[subtype]


def _validate_params(subtype: SubType, params: CapParams) -> None:
    need = set(required_keys(subtype))
    have = set(params.keys())
    if need != have:
        raise InvalidCap(
            f"{subtype.value} cap needs {sorted(need)}; missing {sorted(need - have)}, "
            f"unexpected {sorted(have - need)}"
        )
    for k, v in params.values:
        if not math.isfinite(v):
            raise InvalidCap(f"{k} is not finite")
        if k in EDGE_NAMES and v <= 0.0:
            raise InvalidCap(f"{k} must be positive")
        if k in ANGLE_KEYS and not (DEGENERATE_ANGLE < v < math.pi - DEGENERATE_ANGLE):
            raise InvalidCap(f"{k} must lie in (0, pi) away from the ends")
    if params.variant not in VARIANTS:
        raise InvalidCap(f"variant must be one of {VARIANTS}")
    if subtype is SubType.III_OAE and params.oas not in (None,) + OAS_CHOICES:
        raise InvalidCap(f"oas must be one of {OAS_CHOICES}")


# ---------------------------------------------------------------- closure


@dataclass(frozen=True)
class ClosureProblem:
    """Closure quadratic for the third type.

    With c = ctn(I2/2) the standard form is (k - a) c^2 - 2 b k c + k (a k - 1) = 0
    and B1 follows from ctn(B1/2) = c / k. In the alternate form c = ctn(G2/2),
    (k + a) c^2 - 2 b k c - k (1 + a k) = 0 and tan(B1/2) = c / k.
    Both pair with ctn(I2) = a ctn(B1) + b.
    """

    a: float
    b: float
    k: float
    variant: str = "standard"
    source: tuple[tuple[str, float], ...] = ()

    @classmethod
    def from_geometry(cls, L1: float, L2: float, B2: float, I1: float, beta1: float,
                      gamma2: float, variant: str = "standard") -> "ClosureProblem":
        """``L1 = |A0B0|``, ``L2 = |B0C0|``, ``B2 = angle X1B0C0``,
        ``I1 = angle A0B0X1``, ``beta1 = angle B0A0X0``, ``gamma2 = angle X0C0B0``."""
        sb2 = math.sin(B2)
        if abs(sb2) < 1e-15:
            raise NoRealClosure("sin B2 vanishes")
        a = L2 * math.sin(I1) / (L1 * sb2)
        b = (L2 * math.cos(I1) - L1 * math.cos(B2)) / (L1 * sb2)
        half = beta1 / 2.0
        kb = math.tan(half) if variant == "standard" else 1.0 / math.tan(half)
        k = kb / math.tan(gamma2 / 2.0)
        src = (("L1", L1), ("L2", L2), ("B2", B2), ("I1", I1), ("beta1", beta1),
               ("gamma2", gamma2))
        return cls(a, b, k, variant, src)

    @property
    def coefficients(self) -> tuple[float, float, float]:
        a, b, k = self.a, self.b, self.k
        if self.variant == "standard":
            return (k - a, -2.0 * b * k, k * (a * k - 1.0))
        if self.variant == "alternate":
            return (k + a, -2.0 * b * k, -k * (1.0 + a * k))
        raise ValueError(f"unknown variant {self.variant!r}")


class ClosureRoot(NamedTuple):
    I2: float  # the G2 angle in the alternate form
    B1: float
    c: float


def closure_residuals(problem: ClosureProblem, root: ClosureRoot) -> tuple[float, float]:
    """Residuals of the linear-fraction relation and of the half-angle relation,
    both multiplied through by their sine denominators."""
    I2, B1 = root.I2, root.B1
    r1 = (math.cos(I2) * math.sin(B1) - problem.a * math.cos(B1) * math.sin(I2)
          - problem.b * math.sin(I2) * math.sin(B1))
    h, g = I2 / 2.0, B1 / 2.0
    if problem.variant == "standard":
        r2 = math.cos(h) * math.sin(g) - problem.k * math.sin(h) * math.cos(g)
    else:
        r2 = math.cos(h) * math.cos(g) - problem.k * math.sin(h) * math.sin(g)
    return r1, r2


def _admissible(x: float) -> bool:
    return 0.0 < x <= math.pi


def solve_closure(problem: ClosureProblem) -> tuple[ClosureRoot, ...]:
    """Admissible roots ordered by increasing I2 (index 0 = smaller I2).

    Angles are admissible in (0, pi]; the closed upper end keeps the forced
    c = 0 solution (I2 = pi) visible to callers.
    """
    A, B, C = problem.coefficients
    scale = max(abs(A), abs(B), abs(C))
    if scale == 0.0:
        raise NoRealRoot("closure quadratic is identically zero")
    if abs(A) <= 1e-14 * scale:
        if abs(B) <= 1e-14 * scale:
            raise NoRealRoot("closure equation has no solution")
        cs = [-C / B]
    else:
        disc = B * B - 4.0 * A * C
        if disc < -1e-14 * (B * B + abs(4.0 * A * C)):
            raise NoRealRoot(f"negative discriminant {disc:.3e}")
        sq = math.sqrt(max(disc, 0.0))
        if sq == 0.0:
            cs = [-B / (2.0 * A)]
        else:
            q = -0.5 * (B + math.copysign(sq, B))
            cs = [q / A, C / q] if q != 0.0 else [sq / (2 * A), -sq / (2 * A)]
    roots = []
    for c in cs:
        if not math.isfinite(c):
            continue
        I2 = 2.0 * math.atan2(1.0, c)
        if problem.variant == "standard":
            B1 = 2.0 * math.atan2(problem.k, c)
        else:
            B1 = 2.0 * math.atan2(c, problem.k)
        if _admissible(I2) and _admissible(B1):
            roots.append(ClosureRoot(I2, B1, c))
    if not roots:
        raise NoAdmissibleRoot("roots give angles outside (0, pi]")
    roots.sort(key=lambda r: r.I2)
    return tuple(roots)


# ---------------------------------------------------------------- specs


@dataclass(frozen=True)
class OctahedronSpec:
    """Complete metric description: 12 edge lengths and 24 face angles."""

    subtype: SubType | None
    edges: tuple[tuple[str, float], ...]
    face_angles: tuple[tuple[tuple[str, tuple[str, str, str]], float], ...] = field(repr=False)
    oas_assignment: frozenset = frozenset()
    closure: tuple = field(default=(), repr=False, compare=False)

    @classmethod
    def from_edges(cls, subtype: SubType | None, edges: Mapping[str, float],
                   oas_assignment: Iterable[str] = (), closure: tuple = ()) -> "OctahedronSpec":
        lengths = {}
        for name in EDGE_NAMES:
            v = float(edges[name])
            if not (v > 0.0 and math.isfinite(v)):
                raise InfeasibleCap(f"edge {name} has length {v}")
            lengths[name] = v
        angles = []
        for face in FACES:
            for i in range(3):
                v, a, b = face[i], face[(i + 1) % 3], face[(i + 2) % 3]
                try:
                    ang = triangle_angle(lengths[edge_key(a, b)], lengths[edge_key(v, a)],
                                         lengths[edge_key(v, b)])
                except InvalidTriangle as exc:
                    raise InfeasibleCap(f"face {''.join(face)}: {exc}") from None
                if not (DEGENERATE_ANGLE < ang < math.pi - DEGENERATE_ANGLE):
                    raise InfeasibleCap(f"face {''.join(face)} is degenerate at {v}")
                angles.append(((v, face), ang))
        st = SubType(subtype) if subtype is not None else None
        return cls(st, tuple((n, lengths[n]) for n in EDGE_NAMES), tuple(angles),
                   frozenset(oas_assignment), closure)

    @classmethod
    def from_coordinates(cls, coords: Mapping[str, np.ndarray],
                         subtype: SubType | None = None) -> "OctahedronSpec":
        edges = {a + b: float(np.linalg.norm(np.asarray(coords[a]) - np.asarray(coords[b])))
                 for a, b in EDGE_PAIRS}
        return cls.from_edges(subtype, edges)

    def length(self, p: str, q: str) -> float:
        key = edge_key(p, q)
        for n, v in self.edges:
            if n == key:
                return v
        raise KeyError(key)

    @property
    def edge_map(self) -> dict[str, float]:
        return dict(self.edges)

    @property
    def scale(self) -> float:
        return max(v for _, v in self.edges)

    def angle(self, v: str, a: str, b: str) -> float:
        """Face angle at ``v`` in the face (v, a, b)."""
        face = _face_key(v, a, b)
        for (vv, f), ang in self.face_angles:
            if vv == v and f == face:
                return ang
        raise KeyError((v, a, b))

    def vertex_angles(self, v: str) -> tuple[float, float, float, float]:
        r = RING[v]
        return tuple(self.angle(v, r[k], r[(k + 1) % 4]) for k in range(4))

    def scaled(self, c: float) -> "OctahedronSpec":
        return OctahedronSpec.from_edges(
            self.subtype, {n: v * c for n, v in self.edges}, self.oas_assignment, self.closure
        )


def vertex_kind(spec: OctahedronSpec, v: str, tol: float = 1e-12) -> str | None:
    """``"OAE"``, ``"OAS"`` or None for the face angles around ``v``."""
    f = spec.vertex_angles(v)
    if abs(f[0] - f[2]) <= tol and abs(f[1] - f[3]) <= tol:
        return "OAE"
    if abs(f[0] + f[2] - math.pi) <= tol and abs(f[1] + f[3] - math.pi) <= tol:
        return "OAS"
    return None


def vertex_relation_residual(spec: OctahedronSpec, v: str) -> float:
    """Deviation from the OAE or OAS relation expected at ``v``."""
    f = spec.vertex_angles(v)
    if v in spec.oas_assignment:
        return max(abs(f[0] + f[2] - math.pi), abs(f[1] + f[3] - math.pi))
    return max(abs(f[0] - f[2]), abs(f[1] - f[3]))


def _forced_edges(subtype: SubType, e: dict[str, float]) -> dict[str, float]:
    if subtype is SubType.I_OEE:
        e.update(X1A0=e["X0C0"], X1B0=e["X0D0"], X1C0=e["X0A0"], X1D0=e["X0B0"],
                 C0D0=e["A0B0"], D0A0=e["B0C0"])
    elif subtype is SubType.II_AEE:
        e.update(X1A0=e["X0C0"], X1B0=e["X0B0"], X1C0=e["X0A0"], X1D0=e["X0D0"],
                 B0C0=e["A0B0"], D0A0=e["C0D0"])
    elif subtype is SubType.II_OEE:
        for p, q in (("X0C0", "X0A0"), ("X0D0", "X0B0")):
            if abs(e[p] - e[q]) > 1e-12 * max(e[p], e[q]):
                raise InvalidCap(f"II-OEE requires {p} = {q}")
        e.update(C0D0=e["A0B0"], D0A0=e["B0C0"], X1C0=e["X1A0"], X1D0=e["X1B0"])
    return e


@dataclass(frozen=True)
class TypeIIIRoles:
    """Role assignment for the third-type chain: apex X, ring P, Q, R, S
    (faces XPQ and XQR are given) and the opposite apex Y."""

    X: str = "X0"
    Y: str = "X1"
    P: str = "A0"
    Q: str = "B0"
    R: str = "C0"
    S: str = "D0"


def _third_type_edges(subtype: SubType, params: CapParams, root_choice: int | None):
    XA = params["X0A0"]
    t1, t2 = params["A0X0B0"], params["B0X0C0"]
    beta1, cbx = params["B0A0X0"], params["C0B0X0"]
    oae = subtype is SubType.III_OAE
    oas = (params.oas or "BD") if oae else None
    try:
        tri1 = solve_triangle(ASA(XA, t1, beta1))  # X0, A0, B0
        AB, XB = tri1.sides[0], tri1.sides[1]
        xba = tri1.angles[2]
        tri2 = solve_triangle(ASA(XB, t2, cbx))  # X0, B0, C0
    except InvalidTriangle as exc:
        raise InfeasibleCap(str(exc)) from None
    BC, XC = tri2.sides[0], tri2.sides[1]
    g2 = tri2.angles[2]
    q_oas = oas == "BD"
    pr_oas = oas == "AC"
    I1 = math.pi - cbx if q_oas else cbx
    B2 = math.pi - xba if q_oas else xba
    if oae:
        th2, th3 = t1, t2
        oas_set = {"B0", "D0"} if q_oas else {"A0", "C0"}
    else:
        th2, th3 = math.pi - t1, math.pi - t2
        oas_set = {"X0", "X1"}
    problem = ClosureProblem.from_geometry(AB, BC, B2, I1, beta1, g2, params.variant)
    roots = solve_closure(problem)
    candidates = range(len(roots)) if root_choice is None else [root_choice]
    if root_choice is not None and not (0 <= root_choice < len(roots)):
        raise NoRealClosure(f"root index {root_choice} not available ({len(roots)} roots)")
    last_err = None
    for idx in candidates:
        I2, B1, _ = roots[idx]
        aXD = math.pi - B1 if pr_oas else B1
        aX1D = math.pi - beta1 if pr_oas else beta1
        cDX = math.pi - I2 if pr_oas else I2
        cX1D = math.pi - g2 if pr_oas else g2
        try:
            f_xad = solve_triangle(ASA(XA, th3, aXD))  # X0, A0, D0
            f_xcd = solve_triangle(ASA(XC, th2, cDX))  # X0, C0, D0
            f_aby = solve_triangle(ASA(AB, B1, I1))  # A0, B0, X1
            f_bcy = solve_triangle(ASA(BC, B2, I2))  # B0, C0, X1
            YC = f_bcy.sides[0]
            CD = f_xcd.sides[0]
            f_ycd = solve_triangle(SAS(YC, CD, cX1D))  # C0, X1, D0
        except InvalidTriangle as exc:
            last_err = exc
            continue
        e = {
            "X0A0": XA, "X0B0": XB, "X0C0": XC, "X0D0": f_xad.sides[1],
            "A0B0": AB, "B0C0": BC, "C0D0": CD, "D0A0": f_xad.sides[0],
            "X1A0": f_aby.sides[1], "X1B0": f_aby.sides[0], "X1C0": YC,
            "X1D0": f_ycd.sides[0],
        }
        # the chain reaches X0D0, X1B0 and X1D0 by two routes each
        checks = (
            (e["X0D0"], f_xcd.sides[1]),
            (e["X1B0"], f_bcy.sides[1]),
            (e["X1D0"], solve_triangle(SAS(e["X1A0"], e["D0A0"], aX1D)).sides[0]),
        )
        bad = [x for x, y in checks if abs(x - y) > 1e-9 * max(x, y)]
        if bad:
            last_err = NoRealClosure("closure root does not close the chain")
            continue
        return e, oas_set, (problem, roots, idx)
    if isinstance(last_err, NoRealClosure):
        raise last_err
    raise NoRealClosure(f"no closure root yields a feasible octahedron ({last_err})")


def complete_spec(subtype: SubType | str, params: CapParams,
                  root_choice: int | None = None) -> OctahedronSpec:
    """Fill in all 12 edges and 24 face angles from cap parameters.

    For the third type ``root_choice`` selects a closure root (0 = smaller
    I2); ``None`` takes the first root giving a feasible octahedron.
    """
    subtype = SubType(subtype)
    _validate_params(subtype, params)
    if subtype.is_third_type:
        e, oas_set, closure = _third_type_edges(subtype, params, root_choice)
        return OctahedronSpec.from_edges(subtype, e, oas_set, closure)
    e = _forced_edges(subtype, params.as_dict())
    return OctahedronSpec.from_edges(subtype, e)


# ---------------------------------------------------------------- flexing


@dataclass(frozen=True)
class FlexState:
    phi: float
    coords: Mapping[str, np.ndarray] = field(repr=False)
    residual: float
    branch_signs: tuple[int, ...]
    discriminant: float = math.inf


def flex_tolerance(scale: float) -> float:
    """Closure residual below which a state counts as realized."""
    return 1e-9 * scale


def _displacement(a: Mapping[str, np.ndarray], b: Mapping[str, np.ndarray]) -> float:
    return sum(float(np.linalg.norm(a[k] - b[k])) for k in a if k in b)


def _jump(a: Mapping[str, np.ndarray], b: Mapping[str, np.ndarray]) -> float:
    return max((float(np.linalg.norm(a[k] - b[k])) for k in a if k in b), default=0.0)


def choose_branch(candidates, previous_coords, tol: float, max_jump: float | None = None):
    """Pick among ``(residual, signs, coords, disc)`` tuples.

    With a previous state: the closest candidate among those within ``tol``
    (or the lowest-residual one when none is); candidates moving some vertex
    farther than ``max_jump`` are not continuations and are dropped, and
    None is returned when nothing is left. Without a previous state: the
    lowest residual, ties going to positive signs.
    """
    if previous_coords is not None:
        if max_jump is not None:
            candidates = [c for c in candidates if _jump(c[2], previous_coords) <= max_jump]
            if not candidates:
                return None
        good = [c for c in candidates if c[0] <= tol]
        if good:
            return min(good, key=lambda c: _displacement(c[2], previous_coords))
    best = min(c[0] for c in candidates)
    tie = [c for c in candidates if c[0] <= best + tol * 1e-3]
    return max(tie, key=lambda c: tuple(c[1][::-1]))


def flex(spec: OctahedronSpec, phi: float, previous: FlexState | None = None) -> FlexState:
    """Coordinates of ``spec`` with dihedral angle ``phi`` at edge X0A0.

    X0 sits at the origin, A0 on the +z axis and B0 in the x > 0 half of the
    x-z plane; D0 is the in-plane solution of triangle X0A0D0 turned by
    ``phi`` about z. C0 and X1 come from two trilaterations and the closure
    residual is the error of the remaining edge X1D0.
    """
    if not math.isfinite(phi):
        raise ValueError("phi must be finite")
    L = spec.length
    h = L("X0", "A0")
    X0 = np.zeros(3)
    A0 = np.array([0.0, 0.0, h])

    def in_plane(q: str) -> tuple[float, float]:
        a, c = L("X0", q), L("A0", q)
        z = (a * a - c * c + h * h) / (2.0 * h)
        return math.sqrt(max(a * a - z * z, 0.0)), z

    bx, bz = in_plane("B0")
    B0 = np.array([bx, 0.0, bz])
    dr, dz = in_plane("D0")
    D0 = np.array([dr * math.cos(phi), dr * math.sin(phi), dz])
    xd = L("X1", "D0")
    cands = []
    for s1 in (1, -1):
        try:
            C0, z1 = trilaterate(X0, B0, D0, L("X0", "C0"), L("B0", "C0"), L("C0", "D0"), s1,
                                 return_discriminant=True)
        except (NoRealIntersection, DegenerateCenters):
            continue
        for s2 in (1, -1):
            try:
                X1, z2 = trilaterate(A0, B0, C0, L("X1", "A0"), L("X1", "B0"), L("X1", "C0"),
                                     s2, return_discriminant=True)
            except (NoRealIntersection, DegenerateCenters):
                continue
            res = abs(float(np.linalg.norm(X1 - D0)) - xd)
            coords = {"X0": X0, "X1": X1, "A0": A0, "B0": B0, "C0": C0, "D0": D0}
            cands.append((res, (s1, s2), coords, min(z1, z2)))
    if not cands:
        raise OutOfRange(f"no real placement at phi = {phi!r}")
    tol = flex_tolerance(spec.scale)
    pick = choose_branch(cands, previous.coords if previous is not None else None, tol,
                         MAX_JUMP * spec.scale)
    if pick is None:
        raise OutOfRange(f"branch lost at phi = {phi!r}")
    res, signs, coords, disc = pick
    if res > 1e-6 * spec.scale:
        raise Inconsistent(f"closure residual {res:.3e} at phi = {phi!r}")
    return FlexState(phi, coords, res, signs, disc)


def assembly_phi(coords: Mapping[str, np.ndarray]) -> float:
    """The flexion variable read off a coordinate set."""
    from .geometry import dihedral_angle

    return dihedral_angle(coords["X0"], coords["A0"], coords["B0"], coords["D0"])


# ---------------------------------------------------------------- ranges


@dataclass(frozen=True)
class FlexionInterval:
    lo: float
    hi: float
    samples_validated: int
    periodic: bool = False

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def grid(self, n: int) -> np.ndarray:
        """``n`` points; a periodic interval omits its duplicate end."""
        return np.linspace(self.lo, self.hi, n, endpoint=not self.periodic)


def scan_interval(realize: Callable, seed: float, tol: float, samples: int = 720,
                  resolution: float = 1e-12) -> FlexionInterval:
    """Largest interval about ``seed`` on which ``realize(phi, previous)``
    succeeds with residual at most ``tol``; ends located by bisection."""

    def attempt(phi, prev):
        try:
            st = realize(phi, prev)
        except FlexError:
            return None
        return st if st.residual <= tol else None

    start = attempt(seed, None)
    if start is None:
        raise SeedInvalid(f"seed {seed!r} is not realizable")
    step = 2.0 * math.pi / samples
    count = 1
    ends = []
    for direction in (1.0, -1.0):
        prev, good = start, seed
        end = None
        for k in range(1, samples + 1):
            phi = seed + direction * k * step
            st = attempt(phi, prev)
            if st is None:
                bad = phi
                while abs(bad - good) > resolution:
                    mid = 0.5 * (good + bad)
                    sm = attempt(mid, prev)
                    if sm is None:
                        bad = mid
                    else:
                        good, prev = mid, sm
                end = good
                break
            prev, good = st, phi
            count += 1
        if end is None:
            return FlexionInterval(seed - math.pi, seed + math.pi, count, periodic=True)
        ends.append(end)
    return FlexionInterval(ends[1], ends[0], count)


def flexion_range(spec: OctahedronSpec, phi_seed: float, samples: int = 720) -> FlexionInterval:
    return scan_interval(lambda p, prev: flex(spec, p, prev), phi_seed,
                         flex_tolerance(spec.scale), samples)


def sweep(spec: OctahedronSpec, phis: Sequence[float]) -> list[FlexState]:
    """Flex along ``phis`` in order, keeping branch continuity."""
    out, prev = [], None
    for p in phis:
        prev = flex(spec, float(p), prev)
        out.append(prev)
    return out


# ---------------------------------------------------------------- frames


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


def _orthogonal(v: np.ndarray, z: np.ndarray) -> np.ndarray:
    return v - (v @ z) * z


def _pick(z: np.ndarray, *candidates: np.ndarray) -> np.ndarray:
    best = max((_orthogonal(c, z) for c in candidates), key=lambda w: np.linalg.norm(w))
    return _unit(best)


def frame_transform(coords: Mapping[str, np.ndarray], subtype: SubType | None):
    """Rotation ``R`` and origin ``o`` such that ``R @ (p - o)`` is the
    symmetric coordinate model of the sub-type."""
    P = {k: np.asarray(v, dtype=float) for k, v in coords.items()}
    st = SubType(subtype) if subtype is not None else None
    if st is SubType.I_OEE:
        o = 0.5 * (P["X0"] + P["X1"])
        z = _unit(P["X0"] - P["X1"])
        y = _pick(z, np.cross(P["A0"] - P["C0"], z), np.cross(P["B0"] - P["D0"], z))
    elif st is SubType.II_AEE:
        o = 0.5 * (P["X0"] + P["X1"])
        z = _unit(P["X0"] - P["X1"])
        y = _pick(z, 0.5 * (P["A0"] + P["C0"]) - o, P["A0"] - o)
    elif st is SubType.II_OEE:
        o = 0.5 * (P["A0"] + P["C0"])
        z = _unit(P["A0"] - P["C0"])
        y = _pick(z, 0.5 * (P["B0"] + P["D0"]) - o, P["B0"] - o)
    else:
        o = P["X0"]
        z = _unit(P["A0"] - P["X0"])
        x = _pick(z, P["B0"] - o)
        y = np.cross(z, x)
        return np.vstack([x, y, z]), o
    x = np.cross(y, z)
    return np.vstack([x, y, z]), o


SYMMETRY_MAPS = {
    SubType.I_OEE: (np.diag([-1.0, 1.0, -1.0]),
                    {"X0": "X1", "X1": "X0", "A0": "C0", "C0": "A0", "B0": "D0", "D0": "B0"}),
    SubType.II_AEE: (np.diag([1.0, 1.0, -1.0]),
                     {"X0": "X1", "X1": "X0", "A0": "C0", "C0": "A0", "B0": "B0", "D0": "D0"}),
    SubType.II_OEE: (np.diag([1.0, 1.0, -1.0]),
                     {"X0": "X0", "X1": "X1", "A0": "C0", "C0": "A0", "B0": "D0", "D0": "B0"}),
}


def symmetry_error(coords: Mapping[str, np.ndarray], subtype: SubType) -> float:
    """Largest mismatch of the sub-type's symmetry in framed coordinates."""
    M, perm = SYMMETRY_MAPS[SubType(subtype)]
    return max(float(np.linalg.norm(M @ coords[a] - coords[b])) for a, b in perm.items())


def canonical_frame(state: FlexState, subtype: SubType | None) -> FlexState:
    """Rigidly move ``state`` into the symmetric model of its sub-type."""
    R, o = frame_transform(state.coords, subtype)
    coords = {k: R @ (np.asarray(v) - o) for k, v in state.coords.items()}
    st = SubType(subtype) if subtype is not None else None
    if st in SYMMETRY_MAPS:
        scale = max(float(np.linalg.norm(v)) for v in coords.values())
        err = symmetry_error(coords, st)
        if err > 1e-9 * max(scale, 1.0):
            raise SymmetryNotFound(f"{st.value} symmetry violated by {err:.3e}")
    return replace(state, coords=coords)
