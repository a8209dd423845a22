"""Random search for cap parameters that complete to a flexible octahedron.

Values are drawn on a half-unit grid for lengths and a whole-degree grid
for angles, so that accepted candidates can be written down exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .octahedra import (
    LABELS,
    CapParams,
    FlexionInterval,
    OctahedronError,
    OctahedronSpec,
    SubType,
    complete_spec,
    flexion_range,
    vertex_relation_residual,
)


@dataclass(frozen=True)
class Candidate:
    trial: int
    params: CapParams
    spec: OctahedronSpec
    interval: FlexionInterval


def _half(rng: np.random.Generator, lo: float, hi: float) -> float:
    return float(rng.integers(int(2 * lo), int(2 * hi) + 1)) / 2.0


def sample_params(subtype: SubType, rng: np.random.Generator) -> CapParams:
    subtype = SubType(subtype)
    if subtype is SubType.II_OEE:
        xa, xb = _half(rng, 6, 14), _half(rng, 6, 14)
        ab, bc = _half(rng, 1, 8), _half(rng, 1, 8)
        ya, yb = _half(rng, 6, 14), _half(rng, 6, 14)
        return CapParams.of(X0A0=xa, X0B0=xb, X0C0=xa, X0D0=xb, A0B0=ab, B0C0=bc,
                            X1A0=ya, X1B0=yb)
    if subtype.is_third_type:
        deg = [int(rng.integers(10, 140)) for _ in range(4)]
        variant = "standard" if rng.random() < 0.5 else "alternate"
        oas = ("BD" if rng.random() < 0.5 else "AC") if subtype is SubType.III_OAE else None
        return CapParams.of(oas, variant, X0A0=10.0, A0X0B0=math.radians(deg[0]),
                            B0X0C0=math.radians(deg[1]), B0A0X0=math.radians(deg[2]),
                            C0B0X0=math.radians(deg[3]))
    if subtype is SubType.I_OEE:
        keys = ("X0A0", "X0B0", "X0C0", "X0D0")
        vals = {k: _half(rng, 6, 14) for k in keys}
        return CapParams.of(A0B0=_half(rng, 1, 6), B0C0=_half(rng, 1, 6), **vals)
    keys = ("X0A0", "X0B0", "X0C0", "X0D0")
    vals = {k: _half(rng, 6, 14) for k in keys}
    return CapParams.of(A0B0=_half(rng, 1, 8), C0D0=_half(rng, 1, 8), **vals)


def feasibility_search(subtype: SubType | str, seed: int = 0, trials: int = 200,
                       phi_seed: float = 1.0, min_width: float = 0.5,
                       limit: int = 1, max_aspect: float = 8.0) -> list[Candidate]:
    """Draw caps until ``limit`` of them complete, meet their vertex
    conditions to 1e-12 rad (third type), keep longest/shortest edge within
    ``max_aspect`` and flex over an interval of width at least
    ``min_width`` about ``phi_seed``."""
    subtype = SubType(subtype)
    rng = np.random.default_rng(seed)
    out: list[Candidate] = []
    for trial in range(trials):
        params = sample_params(subtype, rng)
        try:
            spec = complete_spec(subtype, params)
            iv = flexion_range(spec, phi_seed, samples=180)
        except (OctahedronError, ValueError):
            continue
        lengths = [v for _, v in spec.edges]
        if max(lengths) > max_aspect * min(lengths):
            continue
        if subtype.is_third_type and max(vertex_relation_residual(spec, v) for v in LABELS) > 1e-12:
            continue
        if iv.width >= min_width:
            out.append(Candidate(trial, params, spec, iv))
            if len(out) >= limit:
                break
    return out
