"""Face-complex bookkeeping: edges, orientation, interior dihedrals, cap solid angles."""
from __future__ import annotations

import math
from collections import deque
from typing import Mapping, Sequence

import numpy as np

from .geometry import NotClosed, dihedral_angle


class NotOrientable(ValueError):
    pass


def clean_loop(loop: Sequence[str]) -> tuple[str, ...]:
    """Drop cyclically repeated labels, e.g. (A0, B0, B0, A1) -> (A0, B0, A1)."""
    out: list[str] = []
    for v in loop:
        if not out or out[-1] != v:
            out.append(v)
    while len(out) > 1 and out[0] == out[-1]:
        out.pop()
    return tuple(out)


def directed_edges(face: Sequence[str]):
    m = len(face)
    return [(face[k], face[(k + 1) % m]) for k in range(m)]


def orient_faces(faces: Sequence[Sequence[str]], seed: int = 0) -> list[tuple[str, ...]]:
    """Flip faces so every shared edge is traversed in opposite directions.

    The face at index ``seed`` keeps its given orientation; each connected
    component is oriented from its lowest-index face.
    """
    faces = [tuple(f) for f in faces]
    adj: dict[frozenset, list[int]] = {}
    for i, f in enumerate(faces):
        for a, b in directed_edges(f):
            adj.setdefault(frozenset((a, b)), []).append(i)
    flip: dict[int, bool] = {}
    order = [seed] + [i for i in range(len(faces)) if i != seed]
    for start in order:
        if start in flip:
            continue
        flip[start] = False
        queue = deque([start])
        while queue:
            i = queue.popleft()
            fi = faces[i][::-1] if flip[i] else faces[i]
            for a, b in directed_edges(fi):
                for j in adj[frozenset((a, b))]:
                    if j == i:
                        continue
                    same = (a, b) in directed_edges(faces[j])
                    want = same  # neighbour must run b->a
                    if j in flip:
                        if flip[j] != want:
                            raise NotOrientable("face complex is not orientable")
                    else:
                        flip[j] = want
                        queue.append(j)
    return [f[::-1] if flip[i] else f for i, f in enumerate(faces)]


class FaceComplex:
    """Immutable view over a list of oriented vertex loops."""

    def __init__(self, faces: Sequence[Sequence[str]]):
        self.faces: tuple[tuple[str, ...], ...] = tuple(tuple(f) for f in faces)
        self._edge: dict[frozenset, list[tuple[int, tuple[str, str]]]] = {}
        verts: dict[str, None] = {}
        for i, f in enumerate(self.faces):
            for v in f:
                verts.setdefault(v)
            for a, b in directed_edges(f):
                self._edge.setdefault(frozenset((a, b)), []).append((i, (a, b)))
        self.vertices: tuple[str, ...] = tuple(verts)
        self.edges: tuple[tuple[str, str], ...] = tuple(
            uses[0][1] for uses in self._edge.values()
        )

    def edge_uses(self, a: str, b: str):
        return self._edge.get(frozenset((a, b)), [])

    @property
    def boundary_edges(self) -> int:
        return sum(1 for u in self._edge.values() if len(u) == 1)

    @property
    def nonmanifold_edges(self) -> int:
        return sum(1 for u in self._edge.values() if len(u) > 2)

    @property
    def consistently_oriented(self) -> bool:
        for u in self._edge.values():
            if len(u) == 2 and u[0][1] == u[1][1]:
                return False
        return True

    @property
    def is_closed(self) -> bool:
        return self.boundary_edges == 0 and self.nonmanifold_edges == 0

    def degree(self, v: str) -> int:
        return sum(1 for e in self._edge if v in e)

    def _wing(self, face: tuple[str, ...], after: str) -> str:
        k = face.index(after)
        return face[(k + 1) % len(face)]

    def interior_dihedral(self, coords: Mapping[str, np.ndarray], a: str, b: str) -> float:
        """Dihedral at edge ab measured through the side the face normals point away from."""
        uses = self.edge_uses(a, b)
        if len(uses) != 2:
            raise NotClosed(f"edge {a}{b} is not shared by two faces")
        (i1, (p, q)), (i2, _) = uses
        f1, f2 = self.faces[i1], self.faces[i2]
        return dihedral_angle(coords[p], coords[q], coords[self._wing(f2, p)],
                              coords[self._wing(f1, q)])

    def dihedrals(self, coords: Mapping[str, np.ndarray]) -> dict[tuple[str, str], float]:
        return {e: self.interior_dihedral(coords, *e) for e in self.edges}

    def cap_solid_angle(self, coords: Mapping[str, np.ndarray], apex: str) -> float:
        """Interior solid angle at ``apex``: sum of interior dihedrals of its
        edges minus (m - 2) * pi, m being the vertex degree."""
        around = [e for e in self.edges if apex in e]
        total = sum(self.interior_dihedral(coords, *e) for e in around)
        return total - (len(around) - 2) * math.pi

    def total_mean_curvature(self, coords: Mapping[str, np.ndarray],
                             dihedrals: Mapping[tuple[str, str], float] | None = None) -> float:
        if dihedrals is None:
            dihedrals = self.dihedrals(coords)
        return sum(
            float(np.linalg.norm(coords[a] - coords[b])) * (math.pi - dihedrals[(a, b)])
            for a, b in self.edges
        )
