import math

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from bricardflex.construction import Close, ConstructionPlan, Scale, assemble_genus0, octahedron_polyhedron
from bricardflex.octahedra import FACES, OctahedronSpec, assembly_phi
from bricardflex.verification import (
    DegenerateInput,
    first_order_flex_dim,
    flex_certificate,
    framework_constraints,
    invariant_sweep,
    plane_deviation,
    topology_check,
    verify_polyhedron,
)

from models import AEE_CAP, fixture_poly, regular_coords, spec_for


def test_topology_octahedron():
    t = topology_check(FACES)
    assert (t.V, t.E, t.F, t.euler, t.genus) == (6, 12, 8, 2, 0)
    assert t.boundary_edges == 0 and t.oriented


def test_topology_torus16():
    t = topology_check(fixture_poly("torus16").faces)
    assert (t.V, t.E, t.F, t.genus) == (16, 32, 16, 1)


def test_topology_open_composite():
    plan = ConstructionPlan("II-AEE", AEE_CAP, stages=(Scale(factor=1.5), Close()))
    model = assemble_genus0(plan, closed=False)
    t = topology_check(model.faces)
    assert t.boundary_edges == 4
    assert t.genus is None


def test_topology_empty():
    with pytest.raises(DegenerateInput):
        topology_check([])


def test_flex_dim_tetrahedron_and_square():
    tet = {"a": np.array([0.0, 0, 0]), "b": np.array([1.0, 0, 0]),
           "c": np.array([0.0, 1, 0]), "d": np.array([0.0, 0, 1])}
    bars = [("a", "b"), ("a", "c"), ("a", "d"), ("b", "c"), ("b", "d"), ("c", "d")]
    assert first_order_flex_dim(tet, bars) == 6
    sq = {"a": np.array([0.0, 0, 0]), "b": np.array([1.0, 0, 0]),
          "c": np.array([1.0, 1, 0]), "d": np.array([0.0, 1, 0])}
    assert first_order_flex_dim(sq, [("a", "b"), ("b", "c"), ("c", "d"), ("d", "a")]) == 8


def test_flex_dim_octahedra():
    bars, planes = framework_constraints(FACES)
    # convex octahedron: infinitesimally rigid, only the 6 trivial motions
    assert first_order_flex_dim(regular_coords(), bars, planes) == 6
    poly = octahedron_polyhedron(spec_for("I-OEE"), 1.0)
    assert first_order_flex_dim(poly.realize(1.3).coords, bars, planes) == 7


def test_sweep_rigid_motion_invariance():
    poly = fixture_poly("ii_aee_32")
    iv = poly.flexion_range()
    grid = iv.grid(40)
    R = Rotation.from_rotvec([0.3, -1.1, 0.7]).as_matrix()
    t = np.array([5.0, -2.0, 11.0])
    a = invariant_sweep(poly, grid)
    b = invariant_sweep(poly, grid, motion=(R, t))
    assert a.passed and b.passed
    for ra, rb in zip(a.records, b.records):
        assert ra.name == rb.name
        assert ra.min == pytest.approx(rb.min, rel=1e-9, abs=1e-9)


def test_sweep_grid_order_independent():
    poly = fixture_poly("torus16")
    grid = list(poly.flexion_range().grid(30))
    rng = np.random.default_rng(3)
    shuffled = list(rng.permutation(grid))
    a, b = invariant_sweep(poly, grid), invariant_sweep(poly, shuffled)
    assert a.rows == b.rows and a.grid == b.grid


def test_sweep_records_lengths_areas_volume():
    poly = fixture_poly("torus16")
    rep = invariant_sweep(poly, poly.flexion_range().grid(50))
    names = {r.name for r in rep.records}
    assert "volume" in names and "mean_curvature" in names
    assert sum(1 for n in names if n.startswith("length")) == 32
    assert sum(1 for n in names if n.startswith("area")) == 16
    assert rep.passed


def test_cap_sum_is_full_sphere():
    poly = fixture_poly("decahedron")
    rep = invariant_sweep(poly, poly.flexion_range().grid(60))
    assert rep.record("cap_sum").passed
    assert rep.record("mean_curvature").passed
    assert rep.record("volume").passed


def test_certificate_hendecahedron_flats():
    cert = flex_certificate(fixture_poly("hendecahedron"), 400)
    assert cert.verdict == "flexible"
    assert len(cert.flat_positions) == 2
    for fp in cert.flat_positions:
        assert fp.deviation <= 1e-8 * fixture_poly("hendecahedron").scale
        assert fp.length_error <= 1e-8


def test_certificate_32_face_flexible():
    cert = flex_certificate(fixture_poly("ii_aee_32"), 200)
    assert cert.verdict == "flexible"
    assert cert.max_dihedral_variation >= 0.01
    assert cert.max_residual <= cert.tolerance


def test_certificate_rigid_control():
    coords = regular_coords()
    spec = OctahedronSpec.from_coordinates(coords)
    poly = octahedron_polyhedron(spec, assembly_phi(coords), coords)
    assert flex_certificate(poly, 100).verdict == "rigid"


def test_plane_deviation():
    pts = {str(i): np.array([math.cos(i), math.sin(i), 0.0]) for i in range(6)}
    assert plane_deviation(pts)[0] <= 1e-15
    pts["z"] = np.array([0.0, 0.0, 1.0])
    assert plane_deviation(pts)[0] > 0.1


def test_verify_report_shape():
    rep = verify_polyhedron(fixture_poly("torus16"), 100)
    d = rep.as_dict()
    assert d["passed"] is True
    assert set(d) == {"passed", "topology", "certificate", "invariants"}
    assert d["invariants"]["samples"] == 100
