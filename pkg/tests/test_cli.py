import json

import pytest
from click.testing import CliRunner

from bricardflex.cli import main
from bricardflex.plans import fixture_text


@pytest.fixture
def plan(tmp_path):
    def write(name):
        p = tmp_path / f"{name}.json"
        p.write_text(fixture_text(name))
        return str(p)
    return write


def run(*args):
    return CliRunner().invoke(main, [str(a) for a in args])


def test_build_obj(plan, tmp_path):
    out = tmp_path / "m.obj"
    r = run("build", plan("torus16"), "-o", out, "--phi", 50)
    assert r.exit_code == 0, r.output
    text = out.read_text()
    assert text.count("\nv ") == 16 and text.count("\nf ") == 16


def test_build_json(plan, tmp_path):
    out = tmp_path / "m.json"
    assert run("build", plan("decahedron"), "-o", out).exit_code == 0
    d = json.loads(out.read_text())
    assert len(d["vertices"]) == 7 and len(d["faces"]) == 10


def test_sweep(plan, tmp_path):
    out = tmp_path / "t.csv"
    r = run("sweep", plan("torus16"), "--from", 50, "--to", 60, "--steps", 5, "-o", out)
    assert r.exit_code == 0, r.output
    assert len(out.read_text().splitlines()) == 6


def test_verify_pass(plan, tmp_path):
    out = tmp_path / "r.json"
    r = run("verify", plan("torus16"), "--samples", 60, "-o", out)
    assert r.exit_code == 0, r.output
    assert json.loads(out.read_text())["passed"] is True


def test_verify_failure_exit(plan):
    # per-cap check on a type-III build does not hold
    r = run("verify", plan("decahedron"), "--samples", 60)
    assert r.exit_code == 1
    assert json.loads(r.output)["passed"] is False


def test_export(plan, tmp_path):
    r = run("export", plan("hendecahedron"), "--frames", 5, "--outdir", tmp_path / "f")
    assert r.exit_code == 0, r.output
    assert sorted(p.name for p in (tmp_path / "f").iterdir()) == [
        f"hendecahedron_{k:04d}.obj" for k in range(5)]


def test_flexrange(plan):
    r = run("flexrange", plan("decahedron"))
    assert r.exit_code == 0
    lo, hi = map(float, r.output.split()[:2])
    assert lo < 57.29 < hi


def test_input_errors(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"subtype": "IV-XYZ"}')
    r = run("flexrange", bad)
    assert r.exit_code == 2
    assert "SchemaError" in r.output
    assert run("flexrange", tmp_path / "missing.json").exit_code == 2
    bad.write_text("{")
    assert run("verify", bad).exit_code == 2
