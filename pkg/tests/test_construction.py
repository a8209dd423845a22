import math

import numpy as np
import pytest

from bricardflex.construction import (
    CandidateQuad,
    Close,
    CompositeModel,
    ConstructionPlan,
    DegenerateRing,
    Edges,
    RespecifyCap,
    RingMismatch,
    RingPlan,
    Scale,
    StageError,
    TorusClose,
    TorusContraction,
    TorusPlan,
    ZeroRuleViolation,
    apply_stage,
    assemble_genus0,
    build_polyhedron,
    build_ring_structure,
    build_torus16,
    contraction_factor,
    extract_torus,
    loop_selection,
    propagate_flex,
)
from bricardflex.geometry import NotClosed, face_metrics
from bricardflex.mesh import FaceComplex
from bricardflex.octahedra import FlexError

from models import AEE_CAP, DECA_CAP, HEXA_CAP, OAS_CAP, OEE_CAP, fixture_poly, spec_for

RING_LOOP = [(0, 2.5), (0, 4), (0, 5), (1, 5), (2, 5), (2, 4), (1, 4), (1, 2.5)]


def counts(poly):
    fc = poly.complex
    return len(fc.vertices), len(fc.edges), len(fc.faces)


def test_stage_validation():
    with pytest.raises(StageError):
        Scale()
    with pytest.raises(StageError):
        Scale(factor=1.0)
    with pytest.raises(StageError):
        Scale(factor=2.0, direction="up")
    with pytest.raises(StageError):
        Edges.of(A=-1.0)
    with pytest.raises(StageError):
        RespecifyCap(0.0, 1.0, 1.0)
    with pytest.raises(StageError):
        TorusPlan(1.0)
    with pytest.raises(StageError):
        RingPlan(5, 4, (2.5, 4, 5, 6))


def test_plan_validation():
    with pytest.raises(StageError):
        ConstructionPlan("I-OEE", HEXA_CAP, stages=())
    with pytest.raises(StageError):
        ConstructionPlan("I-OEE", HEXA_CAP, stages=(Close(), Scale(factor=2.0), Close()))
    with pytest.raises(StageError):
        ConstructionPlan("I-OEE", HEXA_CAP, stages=(Scale(factor=2.0),))
    with pytest.raises(StageError):
        ConstructionPlan("I-OEE", HEXA_CAP, stages=(TorusClose(),))
    assert ConstructionPlan("I-OEE", HEXA_CAP, stages=(Scale(factor=2.0), Close())).n == 2


def test_octahedron_base_case():
    poly = assemble_genus0(ConstructionPlan("I-OEE", HEXA_CAP))
    assert counts(poly) == (6, 12, 8)


def test_dodecahedron():
    poly = assemble_genus0(ConstructionPlan("I-OEE", HEXA_CAP, stages=(Scale(factor=1.5), Close())))
    assert counts(poly)[0] == 10 and counts(poly)[2] == 12
    sizes = sorted(len(f) for f in poly.faces)
    assert sizes == [3] * 8 + [4] * 4


def test_32_face_counts():
    assert counts(fixture_poly("ii_aee_32"))[0::2] == (30, 32)


def test_decahedron_and_hendecahedron():
    deca = fixture_poly("decahedron")
    assert counts(deca) == (7, 15, 10)
    assert all(len(f) == 3 for f in deca.faces)
    hende = fixture_poly("hendecahedron")
    assert counts(hende)[0::2] == (8, 11)
    assert sorted(len(f) for f in hende.faces) == [3] * 10 + [4]


def test_scale_stage_keeps_apex_angles():
    spec = spec_for("II-AEE")
    m0 = CompositeModel.start(spec, 1.0)
    m1 = apply_stage(m0, Scale(extension=4.0))
    s = 1.0 + 4.0 / m0.ray("A")
    # the new open apex is the image of X0
    for f, g in (("A", "B"), ("B", "C"), ("C", "D"), ("D", "A")):
        assert m1.apex_angle(f, g) == pytest.approx(spec.angle("X0", f"{f}0", f"{g}0"), abs=1e-14)
        assert m1.ray(f) == pytest.approx(s * spec.length("X0", f"{f}0"), rel=1e-14)


def test_scaling_commutes_with_realization():
    poly = assemble_genus0(ConstructionPlan("II-AEE", AEE_CAP, stages=(Scale(factor=1.4), Close())))
    c = poly.realize(1.1).coords
    for f in "ABCD":
        assert np.allclose(c[f"{f}1"], c["X1"] + 1.4 * (c[f"{f}0"] - c["X1"]), atol=1e-14)
    assert np.allclose(c["X2"], c["X1"] + 1.4 * (c["X0"] - c["X1"]), atol=1e-14)


def test_proportional_edges_match_scaling():
    spec = spec_for("I-OEE")
    m0 = CompositeModel.start(spec, 1.0)
    s = 1.3
    ext = {f: (s - 1.0) * m0.ray(f) for f in "AB"}
    via_edges = assemble_genus0(ConstructionPlan("I-OEE", HEXA_CAP, stages=(Edges.of(**ext), Close())))
    via_scale = assemble_genus0(ConstructionPlan("I-OEE", HEXA_CAP, stages=(Scale(factor=s), Close())))
    a, b = propagate_flex(via_edges, 1.2), propagate_flex(via_scale, 1.2)
    assert len(a) == len(b) == 10
    pa = sorted(tuple(np.round(v, 9)) for v in a.values())
    pb = sorted(tuple(np.round(v, 9)) for v in b.values())
    assert np.allclose(pa, pb, atol=1e-8)


def test_zero_rules():
    with pytest.raises(ZeroRuleViolation):
        assemble_genus0(ConstructionPlan("III-OAS", OAS_CAP, None, 1.0,
                                         (Edges.of(A=0.0, B=0.0, C=0.0), Close())))
    with pytest.raises(StageError):
        assemble_genus0(ConstructionPlan("II-OEE", OEE_CAP, stages=(Edges.of(A=1, B=1), Close())))
    with pytest.raises(StageError):
        assemble_genus0(ConstructionPlan("I-OEE", HEXA_CAP, stages=(Edges.of(A=1), Close())))
    with pytest.raises(StageError):
        assemble_genus0(ConstructionPlan("I-OEE", HEXA_CAP,
                                         stages=(RespecifyCap(1.5, 9, 7), Close())))


def test_third_type_edge_stage_chain():
    plan = ConstructionPlan("III-OAE", DECA_CAP, 0, 1.0,
                            (Edges.of(B=1.0, C=1.0, D=1.0), Edges.of(B=1.0, C=1.0, D=1.0), Close()))
    poly = assemble_genus0(plan)
    assert counts(poly)[0::2] == (14, 16)
    fc = poly.complex
    st = poly.realize(1.4)
    assert st.residual <= poly.tolerance
    for a, b in fc.edges:
        assert np.linalg.norm(st.coords[a] - st.coords[b]) > 0.0


def test_band_quads_planar_and_edges_constant():
    poly = fixture_poly("ii_aee_32")
    iv = poly.flexion_range()
    states = poly.sweep(np.linspace(poly.phi_seed, iv.hi - 1e-6, 100))
    states += poly.sweep(np.linspace(poly.phi_seed, iv.lo + 1e-6, 100))
    fc = poly.complex
    ref = {e: np.linalg.norm(states[0].coords[e[0]] - states[0].coords[e[1]]) for e in fc.edges}
    for st in states:
        for e, l0 in ref.items():
            assert abs(np.linalg.norm(st.coords[e[0]] - st.coords[e[1]]) / l0 - 1) <= 1e-10
        for f in fc.faces:
            m = face_metrics([st.coords[v] for v in f])
            assert m.planarity_deviation <= 1e-9 * poly.scale


def test_ii_oee_respecify_fixture():
    poly = fixture_poly("ii_oee")
    assert counts(poly)[0::2] == (18, 20)
    with pytest.raises(FlexError):
        poly.realize(3.0)


def test_contraction_factor():
    spec = spec_for("I-OEE")
    assert spec.length("X1", "C0") == 10.0
    assert contraction_factor(spec, "C", 5.0) == 0.5
    assert TorusPlan(0.5).F == 1.5


def test_torus16():
    spec = spec_for("I-OEE")
    poly = build_torus16(spec, TorusPlan(0.5), 1.0)
    assert counts(poly) == (16, 32, 16)
    assert poly.genus == 1
    assert all(len(f) == 4 for f in poly.faces)
    c = poly.realize(0.8).coords
    x0, x1 = c["X0"], c["X1"]
    # P3 is P0 scaled by 1.5 about X0: its far apex sits at 1.5 |X1 - X0|
    for f in "ABCD":
        assert np.allclose(c[f"{f}3"], x0 + 1.5 * (c[f"{f}0"] - x0), atol=1e-12)
        # A0 on segment X0 A3; A2 on segment X3 A3 with X3 = X0 + 1.5 (X1 - X0)
        x3 = x0 + 1.5 * (x1 - x0)
        u, v = c[f"{f}2"] - x3, c[f"{f}3"] - x3
        assert np.linalg.norm(np.cross(u, v)) <= 1e-10 * poly.scale ** 2
        assert u @ v > 0


def test_torus_plan_from_contraction():
    plan = ConstructionPlan("I-OEE", HEXA_CAP, None, 1.0, (TorusClose(),), TorusContraction("C", 5.0))
    assert counts(build_polyhedron(plan)) == (16, 32, 16)


def test_torus16_needs_i_oee():
    with pytest.raises(StageError):
        build_torus16(spec_for("II-AEE"), TorusPlan(0.5))


def test_ring_structure_5x4():
    rs = build_ring_structure(HEXA_CAP, 5, 4, (2.5, 4, 5, 6))
    assert rs.closure_error <= 1e-8 * 60
    torus = extract_torus(rs, loop_selection(RING_LOOP))
    assert counts(torus) == (32, 64, 32)
    assert len(torus.complex.vertices) % 8 == 0
    for phi in (0.5, 1.0, 2.0):
        c = rs.coords(phi)
        for cq in rs.candidate_quads[::7]:
            x, y = cq.side
            pts = [c[cq.p][x], c[cq.p][y], c[cq.q][y], c[cq.q][x]]
            assert face_metrics(pts).planarity_deviation <= 1e-9 * 60


def test_ring_structure_guards():
    with pytest.raises(DegenerateRing):
        build_ring_structure(HEXA_CAP, 5, 4, (1, 1, 1, 1))
    with pytest.raises(RingMismatch):
        build_ring_structure(HEXA_CAP, 5, 3, (2.5, 4, 5, 6))
    with pytest.raises(RingMismatch):
        build_ring_structure(HEXA_CAP, 2, 2, (2.0,))
    rs = build_ring_structure(HEXA_CAP, 5, 4, (2.5, 4, 5, 6))
    with pytest.raises(NotClosed):
        extract_torus(rs, [])
    with pytest.raises(RingMismatch):
        extract_torus(rs, [CandidateQuad((0.0, 1.0), (3.0, 6.0), "AB")])


def test_ring_selection_reproduces_torus16():
    f = 0.5
    spec = spec_for("I-OEE")
    from bricardflex.construction import lattice_structure, torus16_intervals
    ls = lattice_structure(spec, torus16_intervals(f), 1.0)
    loop = [(0.0, 1.0), (0.5, 1.0), (0.5, 1.5), (0.0, 1.5)]
    ring = extract_torus(ls, loop_selection(loop))
    t16 = build_torus16(spec, TorusPlan(f), 1.0)
    a, b = ring.realize(0.7).coords, t16.realize(0.7).coords
    pa = sorted(tuple(np.round(a[v], 9)) for v in ring.labels)
    pb = sorted(tuple(np.round(b[v], 9)) for v in t16.labels)
    assert pa == pb
    assert counts(ring) == counts(t16)
