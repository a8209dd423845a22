import math

import numpy as np
import pytest

from bricardflex.geometry import NotClosed
from bricardflex.mesh import FaceComplex, NotOrientable, clean_loop, orient_faces
from bricardflex.octahedra import FACES

from models import REGULAR


def test_clean_loop_drops_repeats():
    assert clean_loop(("A0", "B0", "B0", "A1")) == ("A0", "B0", "A1")
    assert clean_loop(("A0", "B0", "A1", "A0")) == ("A0", "B0", "A1")


def test_orient_faces_repairs_flips():
    faces = [f if i % 2 == 0 else f[::-1] for i, f in enumerate(FACES)]
    fixed = orient_faces(faces)
    assert fixed[0] == faces[0]
    assert FaceComplex(fixed).consistently_oriented


def test_mobius_band_is_not_orientable():
    # five-vertex Moebius band: triangles (i, i+1, i+2) mod 5
    faces = [tuple(str((i + k) % 5) for k in range(3)) for i in range(5)]
    with pytest.raises(NotOrientable):
        orient_faces(faces)


def test_octahedron_counts():
    fc = FaceComplex(FACES)
    assert (len(fc.vertices), len(fc.edges), len(fc.faces)) == (6, 12, 8)
    assert fc.is_closed and fc.consistently_oriented
    assert all(fc.degree(v) == 4 for v in fc.vertices)


def test_open_complex():
    fc = FaceComplex(FACES[:4])
    assert fc.boundary_edges == 4
    assert not fc.is_closed
    with pytest.raises(NotClosed):
        fc.interior_dihedral({k: np.array(v) for k, v in REGULAR.items()}, "A0", "B0")


def test_regular_octahedron_dihedrals_and_caps():
    coords = {k: np.array(v) for k, v in REGULAR.items()}
    fc = FaceComplex(FACES)
    interior = math.acos(-1.0 / 3.0)
    for e, ang in fc.dihedrals(coords).items():
        assert ang == pytest.approx(interior, abs=1e-14)
    # solid angle of a regular octahedron vertex: 4 * asin(1/3)
    expect = 4.0 * math.asin(1.0 / 3.0)
    assert fc.cap_solid_angle(coords, "X0") == pytest.approx(expect, abs=1e-13)
    tmc = fc.total_mean_curvature(coords)
    assert tmc == pytest.approx(12 * math.sqrt(2) * (math.pi - interior), rel=1e-14)
