"""Bricard flexible octahedra and the flexible polyhedra assembled from them."""
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
    build_polyhedron,
    build_ring_structure,
    build_torus16,
    contraction_factor,
    extract_torus,
    octahedron_polyhedron,
)
from .octahedra import (
    CapParams,
    ClosureProblem,
    FlexionInterval,
    FlexState,
    OctahedronError,
    OctahedronSpec,
    SubType,
    complete_spec,
    flex,
    flexion_range,
    solve_closure,
)
from .plans import (
    MeshSnapshot,
    ParseError,
    PlanError,
    SchemaError,
    UnitError,
    dump_plan,
    export_frames,
    export_obj,
    export_trace,
    fixture_names,
    load_fixture,
    load_plan,
    snapshot,
)
from .verification import (
    first_order_flex_dim,
    flex_certificate,
    invariant_sweep,
    topology_check,
    verify_polyhedron,
)

__version__ = "0.1.0"
