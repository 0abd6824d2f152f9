"""Synthetic voxel geometries for verification runs."""
from __future__ import annotations

import numpy as np
from scipy import ndimage

from .geometry import FLUID, MaterialMap, VoxelGrid, connectivity

SOLID = 1


def plane_channel(gap: int, length: int, width: int = 1, voxel_size: float = 1.0) -> VoxelGrid:
    """Parallel plates one voxel thick at y = 0 and y = gap + 1; flow along z.

    Use with symmetry lateral boundaries to get plane Poiseuille flow.
    """
    labels = np.zeros((width, gap + 2, length), dtype=np.uint8)
    labels[:, 0, :] = SOLID
    labels[:, -1, :] = SOLID
    return VoxelGrid(labels, voxel_size, flow_axis="z")


def open_box(nx: int, ny: int, nz: int, voxel_size: float = 1.0) -> VoxelGrid:
    return VoxelGrid(np.zeros((nx, ny, nz), dtype=np.uint8), voxel_size, flow_axis="z")


def bead_pack(n: int, radius: float = 4.0, porosity: float = 0.45, seed: int = 0, voxel_size: float = 1.0,
              material: int = SOLID, max_beads: int = 10_000, fill_isolated: bool = True) -> VoxelGrid:
    """Random overlapping spheres in an ``n``-cube until the target porosity.

    With ``fill_isolated`` fluid voxels without a path from inlet to outlet
    are turned solid.  Raises ValueError if the pack has no through-path.
    """
    rng = np.random.default_rng(seed)
    solid = np.zeros((n, n, n), dtype=bool)
    xs = np.arange(n) + 0.5
    X, Y, Z = np.meshgrid(xs, xs, xs, indexing="ij")
    for _ in range(max_beads):
        if 1.0 - solid.mean() <= porosity:
            break
        cx, cy, cz = rng.uniform(0, n, size=3)
        solid |= (X - cx) ** 2 + (Y - cy) ** 2 + (Z - cz) ** 2 <= radius ** 2
    labels = np.where(solid, material, FLUID).astype(np.uint8)
    grid = VoxelGrid(labels, voxel_size, flow_axis="z")
    through = connectivity(grid).through
    if not through.any():
        raise ValueError("bead pack has no inlet-outlet path; lower the solid fraction")
    if fill_isolated:
        labels = np.where(grid.fluid & ~through, material, labels).astype(np.uint8)
        grid = VoxelGrid(labels, voxel_size, flow_axis="z")
    return grid


def random_labels(shape, solid_fraction: float = 0.3, seed: int = 0, materials=(SOLID,),
                  smooth: float = 0.0, voxel_size: float = 1.0, flow_axis="z",
                  material_map: MaterialMap | None = None) -> VoxelGrid:
    """Random solid voxels, optionally Gaussian-smoothed into blobs before thresholding."""
    rng = np.random.default_rng(seed)
    field = rng.random(shape)
    if smooth > 0:
        field = ndimage.gaussian_filter(field, smooth, mode="wrap")
        threshold = np.quantile(field, solid_fraction)
        solid = field < threshold
    else:
        solid = field < solid_fraction
    mats = rng.choice(np.asarray(materials, dtype=np.uint8), size=shape)
    labels = np.where(solid, mats, FLUID).astype(np.uint8)
    return VoxelGrid(labels, voxel_size, flow_axis=flow_axis, material_map=material_map or MaterialMap())
