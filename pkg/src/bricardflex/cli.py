"""Command-line entry point: build, sweep, verify, export, flexrange."""
from __future__ import annotations

import functools
import math
import sys
from pathlib import Path

import click
import numpy as np

from .construction import ConstructionError, FlexiblePolyhedron, build_polyhedron
from .geometry import GeometryError
from .octahedra import OctahedronError
from .plans import (
    PlanError,
    export_frames,
    export_obj,
    export_trace,
    mesh_json,
    read_plan,
    report_json,
    snapshot_of,
)
from .verification import invariant_sweep, realize_grid, verify_polyhedron

INPUT_ERROR = 2
VERIFY_FAILED = 1


def _input_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (PlanError, OctahedronError, ConstructionError, GeometryError, OSError) as exc:
            click.echo(f"error: {type(exc).__name__}: {exc}", err=True)
            sys.exit(INPUT_ERROR)
    return wrapper


def _load(plan: str) -> FlexiblePolyhedron:
    return build_polyhedron(read_plan(plan))


def _phi(poly: FlexiblePolyhedron, deg: float | None) -> float:
    return poly.phi_seed if deg is None else math.radians(deg)


@click.group()
def main() -> None:
    """Build and certify flexible polyhedra from JSON plans."""


@main.command()
@click.argument("plan", type=click.Path(dir_okay=False))
@click.option("-o", "--output", required=True, type=click.Path(dir_okay=False),
              help="mesh file, .obj or .json")
@click.option("--phi", type=float, default=None, help="dihedral parameter in degrees")
@_input_errors
def build(plan: str, output: str, phi: float | None) -> None:
    """Assemble PLAN and write one snapshot."""
    poly = _load(plan)
    target = _phi(poly, phi)
    snap = snapshot_of(poly, realize_grid(poly, [target])[0])
    out = Path(output)
    out.write_text(export_obj(snap) if out.suffix.lower() == ".obj" else mesh_json(snap))
    click.echo(f"V={len(snap.labels)} F={len(snap.faces)} genus={poly.genus} -> {out}")


@main.command()
@click.argument("plan", type=click.Path(dir_okay=False))
@click.option("--from", "start", type=float, required=True, help="degrees")
@click.option("--to", "stop", type=float, required=True, help="degrees")
@click.option("--steps", type=click.IntRange(min=1), required=True)
@click.option("-o", "--output", required=True, type=click.Path(dir_okay=False))
@_input_errors
def sweep(plan: str, start: float, stop: float, steps: int, output: str) -> None:
    """Write the invariant trace of PLAN as CSV."""
    poly = _load(plan)
    grid = np.radians(np.linspace(start, stop, steps))
    report = invariant_sweep(poly, grid)
    Path(output).write_text(export_trace(report))
    click.echo(f"{report.samples} samples, invariants {'pass' if report.passed else 'FAIL'}")
    if not report.passed:
        sys.exit(VERIFY_FAILED)


@main.command()
@click.argument("plan", type=click.Path(dir_okay=False))
@click.option("--tol", type=float, default=None,
              help="closure tolerance relative to the model scale")
@click.option("--samples", type=click.IntRange(min=2), default=1000)
@click.option("-o", "--output", type=click.Path(dir_okay=False), default=None,
              help="write the JSON report here instead of stdout")
@_input_errors
def verify(plan: str, tol: float | None, samples: int, output: str | None) -> None:
    """Certificate plus invariant suite; exit 0 only if everything passes."""
    report = verify_polyhedron(_load(plan), samples, tolerance=tol)
    text = report_json(report.as_dict())
    if output:
        Path(output).write_text(text)
    else:
        click.echo(text, nl=False)
    if not report.passed:
        sys.exit(VERIFY_FAILED)


@main.command()
@click.argument("plan", type=click.Path(dir_okay=False))
@click.option("--frames", type=click.IntRange(min=1), required=True)
@click.option("--outdir", required=True, type=click.Path(file_okay=False))
@click.option("--format", "fmt", type=click.Choice(["obj"]), default="obj")
@_input_errors
def export(plan: str, frames: int, outdir: str, fmt: str) -> None:
    """Animation frames spread over the flexion range."""
    poly = _load(plan)
    iv = poly.flexion_range()
    phis = iv.grid(frames) if frames > 1 else [poly.phi_seed]
    paths = export_frames(poly, [float(p) for p in phis], outdir, Path(plan).stem)
    click.echo(f"{len(paths)} frames -> {outdir}")


@main.command()
@click.argument("plan", type=click.Path(dir_okay=False))
@_input_errors
def flexrange(plan: str) -> None:
    """Print the flexion interval in degrees."""
    iv = _load(plan).flexion_range()
    tag = " periodic" if iv.periodic else ""
    click.echo(f"{math.degrees(iv.lo):.12g} {math.degrees(iv.hi):.12g}{tag}")


if __name__ == "__main__":
    main()
