from pathlib import Path

import numpy as np
import pytest

from porevox.geometry import VoxelGrid, reactive_face_arrays
from porevox.io import (
    BUDGET_HEADER, SURFACE_HEADER, read_manifest, vtk_text, write_budget_csv, write_manifest, write_residual_csv,
    write_surface_csv, write_vtk,
)

DATA = Path(__file__).parent / "data"


def read_vtk(path):
    """Minimal legacy-VTK reader: returns dims, spacing and {name: array} of cell data."""
    tokens = Path(path).read_text().split("\n")
    assert tokens[0] == "# vtk DataFile Version 3.0" and tokens[2] == "ASCII"
    head = {}
    i = 3
    while not tokens[i].startswith("CELL_DATA"):
        key, *vals = tokens[i].split()
        head[key] = vals
        i += 1
    n = int(tokens[i].split()[1])
    i += 1
    fields = {}
    while i < len(tokens) and tokens[i]:
        parts = tokens[i].split()
        if parts[0] == "SCALARS":
            vals = [float(v) for v in tokens[i + 2:i + 2 + n]]
            fields[parts[1]] = np.array(vals)
            i += 2 + n
        elif parts[0] == "VECTORS":
            fields[parts[1]] = np.array([[float(v) for v in t.split()] for t in tokens[i + 1:i + 1 + n]])
            i += 1 + n
        else:
            raise AssertionError(f"unexpected line {tokens[i]!r}")
    dims = tuple(int(v) - 1 for v in head["DIMENSIONS"])
    return dims, float(head["SPACING"][0]), fields


def test_unit_cell_golden(tmp_path):
    g = VoxelGrid(np.zeros((1, 1, 1), np.uint8), 2.5e-6)
    vel = np.zeros((1, 1, 1, 3))
    vel[..., 2] = 1.0
    out = write_vtk(g, tmp_path / "u.vtk", pressure=np.full((1, 1, 1), 0.125), velocity=vel,
                    concentration=np.ones((1, 1, 1)), adsorbed=np.zeros((1, 1, 1)))
    assert out.read_bytes() == (DATA / "unit_cell.vtk").read_bytes()


def test_all_solid_grid():
    g = VoxelGrid(np.array([[[1, 2], [3, 4]]], np.uint8), 1.0)
    text = vtk_text(g, concentration=np.zeros(g.dims))
    lines = text.splitlines()
    conc = lines[lines.index("SCALARS concentration double 1") + 2:][:4]
    mat = lines[lines.index("SCALARS material int 1") + 2:][:4]
    assert conc == ["0"] * 4
    assert mat == ["1", "3", "2", "4"]   # x fastest, then y, then z


def test_reader_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    labels = rng.choice(np.array([0, 0, 5], np.uint8), size=(3, 4, 5))
    g = VoxelGrid(labels, 1e-5)
    p, c = rng.standard_normal(g.dims), rng.uniform(0, 1, g.dims)
    v = rng.standard_normal(g.dims + (3,))
    write_vtk(g, tmp_path / "r.vtk", pressure=p, velocity=v, concentration=c)
    dims, spacing, fields = read_vtk(tmp_path / "r.vtk")
    assert dims == g.dims and spacing == 1e-5
    order = lambda a: a.ravel(order="F")
    assert np.allclose(fields["pressure"], order(p), rtol=1e-8, atol=0)
    assert np.allclose(fields["concentration"], order(c), rtol=1e-8, atol=0)
    assert np.array_equal(fields["material"], order(labels).astype(float))
    assert np.allclose(fields["velocity"], np.stack([order(v[..., k]) for k in range(3)], 1), rtol=1e-8, atol=0)


def test_vtk_shape_check():
    g = VoxelGrid(np.zeros((2, 2, 2), np.uint8), 1.0)
    with pytest.raises(ValueError):
        vtk_text(g, pressure=np.zeros((2, 2)))


def test_surface_csv_empty(tmp_path):
    g = VoxelGrid(np.zeros((2, 2, 2), np.uint8), 1.0)
    out = write_surface_csv(reactive_face_arrays(g), [], tmp_path / "s.csv", 1.0, 1.0)
    assert out.read_text() == SURFACE_HEADER + "\n"


def test_surface_csv_one_face(tmp_path):
    g = VoxelGrid(np.array([[[0]], [[1]]], np.uint8), 1e-6)
    out = write_surface_csv(reactive_face_arrays(g), [0.25], tmp_path / "s.csv", 1e-6, 2.0)
    assert out.read_bytes() == (DATA / "one_face.csv").read_bytes()


def test_surface_csv_length_check(tmp_path):
    g = VoxelGrid(np.array([[[0]], [[1]]], np.uint8), 1.0)
    with pytest.raises(ValueError):
        write_surface_csv(reactive_face_arrays(g), [0.1, 0.2], tmp_path / "s.csv", 1.0, 1.0)


def test_manifest_golden(tmp_path):
    entries = {"n": 3, "alpha": 0.1, "flag": True, "config.dt_hat": None, "list": (1, 2.5),
               "geometry.hash": "3b18e512dba79e4c8300dd08aeb37f8e728b8dad"}
    out = write_manifest(entries, tmp_path / "m.txt")
    assert out.read_bytes() == (DATA / "manifest.txt").read_bytes()
    assert read_manifest(out)["alpha"] == "0.1"


def test_budget_and_residual_csv(tmp_path):
    b = write_budget_csv([(0, 0.0, 1.0, 0.0, 0.0, 0.0), (1, 0.1, 0.9, 0.2, 0.15, 0.05)], tmp_path / "b.csv")
    assert b.read_text() == BUDGET_HEADER + "\n0,0.0,1.0,0.0,0.0,0.0\n1,0.1,0.9,0.2,0.15,0.05\n"
    r = write_residual_csv([(1, 0.5), (2, 1e-7)], tmp_path / "r.csv")
    assert r.read_text() == "step,residual\n1,0.5\n2,1e-07\n"
