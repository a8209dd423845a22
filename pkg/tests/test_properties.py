import math

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from bricardflex.construction import Close, ConstructionPlan, Scale, assemble_genus0
from bricardflex.geometry import oriented_volume
from bricardflex.plans import dump_plan, load_plan

from models import AEE_CAP, HEXA_CAP

CAPS = {"I-OEE": HEXA_CAP, "II-AEE": AEE_CAP}

factors = st.floats(1.1, 1.8)
stage = st.builds(lambda s, d: Scale(factor=s if d == "out" else 1.0 / s, direction=d),
                  factors, st.sampled_from(["out", "in"]))


@st.composite
def scale_plans(draw, max_stages=7):
    subtype = draw(st.sampled_from(sorted(CAPS)))
    stages = draw(st.lists(stage, min_size=0, max_size=max_stages))
    return ConstructionPlan(subtype, CAPS[subtype], None, 1.0, tuple(stages) + (Close(),))


@settings(max_examples=30)
@given(scale_plans())
def test_genus0_counts(plan):
    poly = assemble_genus0(plan)
    n = plan.n
    assert len(poly.labels) == 4 * n + 2
    assert len(poly.faces) == 4 * (n + 1)
    assert poly.complex.is_closed and poly.complex.consistently_oriented


def test_counts_each_n():
    for subtype, cap in CAPS.items():
        for n in range(1, 9):
            stages = tuple(Scale(factor=1.2) for _ in range(n - 1)) + (Close(),)
            poly = assemble_genus0(ConstructionPlan(subtype, cap, None, 1.0, stages))
            assert (len(poly.labels), len(poly.faces)) == (4 * n + 2, 4 * (n + 1))


@settings(max_examples=30)
@given(scale_plans(), st.floats(0.7, 1.3))
def test_lengths_and_volume_invariant(plan, phi):
    poly = assemble_genus0(plan)
    a, b = poly.realize(plan.phi_seed), poly.realize(phi)
    for u, v in poly.complex.edges:
        la = np.linalg.norm(a.coords[u] - a.coords[v])
        lb = np.linalg.norm(b.coords[u] - b.coords[v])
        assert abs(la / lb - 1.0) <= 1e-10
    assert abs(oriented_volume(poly.faces, b.coords)) <= 1e-9 * poly.scale ** 3


@settings(max_examples=40)
@given(scale_plans(), st.floats(10.0, 170.0))
def test_plan_round_trip(plan, seed_deg):
    from dataclasses import replace
    plan = replace(plan, phi_seed=math.radians(seed_deg))
    text = dump_plan(plan)
    assert load_plan(text) == plan
    assert dump_plan(load_plan(text)) == text
