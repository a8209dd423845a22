"""Shared models for the test modules."""
import math
from functools import lru_cache

import numpy as np

from bricardflex.construction import build_polyhedron
from bricardflex.octahedra import CapParams, complete_spec
from bricardflex.plans import load_fixture

d = math.radians

DECA_CAP = CapParams.of("BD", X0A0=10.0, A0X0B0=d(17), B0X0C0=d(47), B0A0X0=d(65),
                        C0B0X0=d(40))
HEXA_CAP = CapParams.of(X0A0=10.0, X0B0=10.5, X0C0=9.5, X0D0=9.0, A0B0=1.5, B0C0=1.75)
AEE_CAP = CapParams.of(X0A0=10.0, X0B0=11.0, X0C0=12.0, X0D0=13.0, A0B0=3.0, C0D0=8.0)
OEE_CAP = CapParams.of(X0A0=13.0, X0B0=11.0, X0C0=13.0, X0D0=11.0, A0B0=4.5, B0C0=3.0,
                       X1A0=8.5, X1B0=6.0)
OAS_CAP = CapParams.of(None, "alternate", X0A0=10.0, A0X0B0=d(61), B0X0C0=d(121), B0A0X0=d(82),
                       C0B0X0=d(14))

CAPS = {
    "I-OEE": (HEXA_CAP, None),
    "II-AEE": (AEE_CAP, None),
    "II-OEE": (OEE_CAP, None),
    "III-OAE": (DECA_CAP, 0),
    "III-OAS": (OAS_CAP, None),
}

REGULAR = {
    "X0": (0.0, 0.0, 1.0), "X1": (0.0, 0.0, -1.0), "A0": (1.0, 0.0, 0.0),
    "B0": (0.0, 1.0, 0.0), "C0": (-1.0, 0.0, 0.0), "D0": (0.0, -1.0, 0.0),
}


@lru_cache(maxsize=None)
def spec_for(subtype: str):
    cap, root = CAPS[subtype]
    return complete_spec(subtype, cap, root)


@lru_cache(maxsize=None)
def fixture_poly(name: str):
    return build_polyhedron(load_fixture(name))


def regular_coords(noise: float = 0.0, seed: int = 0) -> dict:
    rng = np.random.default_rng(seed)
    return {k: np.array(v) + noise * rng.standard_normal(3) for k, v in REGULAR.items()}
