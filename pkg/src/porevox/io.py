"""Deterministic writers: legacy VTK, surface and budget CSVs, run manifest."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .geometry import DIRECTION_NAMES, VoxelGrid


def _g(x) -> str:
    return format(float(x), ".9g")


def _cells(a: np.ndarray) -> np.ndarray:
    """Flatten a (nx, ny, nz, ...) array in VTK point order (x fastest)."""
    a = np.asarray(a)
    if a.ndim == 3:
        return a.ravel(order="F")
    return np.stack([a[..., i].ravel(order="F") for i in range(a.shape[-1])], axis=1)


def vtk_text(grid: VoxelGrid, pressure=None, velocity=None, concentration=None, adsorbed=None,
             title: str = "porevox") -> str:
    """Legacy ASCII STRUCTURED_POINTS text with one CELL_DATA block per given field.

    Blocks appear in the order pressure, velocity, concentration, material,
    adsorbed; ``material`` (the voxel labels) is always written.  Scalars are
    (nx, ny, nz) arrays, ``velocity`` is (nx, ny, nz, 3).
    """
    nx, ny, nz = grid.dims
    s = _g(grid.voxel_size)
    lines = [
        "# vtk DataFile Version 3.0",
        title,
        "ASCII",
        "DATASET STRUCTURED_POINTS",
        f"DIMENSIONS {nx + 1} {ny + 1} {nz + 1}",
        f"SPACING {s} {s} {s}",
        "ORIGIN 0 0 0",
        f"CELL_DATA {grid.n_voxels}",
    ]

    def scalars(name, values, kind="double", fmt=_g):
        values = np.asarray(values)
        if values.shape != grid.dims:
            raise ValueError(f"{name} has shape {values.shape}, expected {grid.dims}")
        lines.extend([f"SCALARS {name} {kind} 1", "LOOKUP_TABLE default"])
        lines.extend(fmt(v) for v in _cells(values).tolist())

    if pressure is not None:
        scalars("pressure", pressure)
    if velocity is not None:
        velocity = np.asarray(velocity)
        if velocity.shape != grid.dims + (3,):
            raise ValueError(f"velocity has shape {velocity.shape}, expected {grid.dims + (3,)}")
        lines.append("VECTORS velocity double")
        lines.extend(f"{_g(a)} {_g(b)} {_g(c)}" for a, b, c in _cells(velocity).tolist())
    if concentration is not None:
        scalars("concentration", concentration)
    scalars("material", grid.labels, "int", lambda v: str(int(v)))
    if adsorbed is not None:
        scalars("adsorbed", adsorbed)
    return "\n".join(lines) + "\n"


def write_vtk(grid: VoxelGrid, path, **fields) -> Path:
    path = Path(path)
    path.write_text(vtk_text(grid, **fields))
    return path


SURFACE_HEADER = "x,y,z,normal,boundary_type,m_hat,m_dimensional"


def write_surface_csv(faces, m_hat, path, voxel_size: float, m_scale: float) -> Path:
    """One row per reactive face; coordinates are face centres in meters."""
    m_hat = np.asarray(m_hat, dtype=float)
    if len(m_hat) != len(faces):
        raise ValueError(f"{len(m_hat)} m values for {len(faces)} faces")
    rows = [SURFACE_HEADER]
    if len(faces):
        centers = faces.centers() * voxel_size
        for (x, y, z), d, b, m in zip(centers.tolist(), faces.direction.tolist(), faces.btype.tolist(),
                                      m_hat.tolist()):
            rows.append(f"{x!r},{y!r},{z!r},{DIRECTION_NAMES[d]},{b},{m!r},{m * m_scale!r}")
    path = Path(path)
    path.write_text("\n".join(rows) + "\n")
    return path


BUDGET_HEADER = "step,t_hat,dissolved,adsorbed,influx,outflux"


def write_budget_csv(history, path) -> Path:
    rows = [BUDGET_HEADER]
    rows += [f"{int(k)},{float(t)!r},{float(d)!r},{float(a)!r},{float(i)!r},{float(o)!r}"
             for k, t, d, a, i, o in history]
    path = Path(path)
    path.write_text("\n".join(rows) + "\n")
    return path


def write_residual_csv(history, path) -> Path:
    rows = ["step,residual"] + [f"{int(k)},{float(r)!r}" for k, r in history]
    path = Path(path)
    path.write_text("\n".join(rows) + "\n")
    return path


def manifest_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple)):
        return ",".join(manifest_value(x) for x in v)
    if v is None:
        return "none"
    return str(v)


def write_manifest(entries: dict, path) -> Path:
    """Sorted ``key = value`` lines."""
    lines = [f"{k} = {manifest_value(entries[k])}" for k in sorted(entries)]
    path = Path(path)
    path.write_text("\n".join(lines) + "\n")
    return path


def read_manifest(path) -> dict[str, str]:
    out = {}
    for line in Path(path).read_text().splitlines():
        if line.strip():
            k, _, v = line.partition(" = ")
            out[k] = v
    return out
