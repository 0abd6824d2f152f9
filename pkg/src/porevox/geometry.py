"""Voxel geometry: loading, padding, face classification and connectivity.

Arrays are indexed ``labels[x, y, z]``.  On disk the payload is x-fastest,
i.e. byte ``x + nx * (y + ny * z)``.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

FLUID = 0

AXES = {"x": 0, "y": 1, "z": 2}
AXIS_NAMES = "xyz"

# (axis, sign) for the six faces of a cell, in the order used by FaceIndex
DIRECTIONS = ((0, 1), (0, -1), (1, 1), (1, -1), (2, 1), (2, -1))
DIRECTION_NAMES = ("+x", "-x", "+y", "-y", "+z", "-z")

# face classifications
INTERIOR = 0
REACTIVE = 1
INLET = 2
OUTLET = 3
WALL = 4
NOT_FLUID = -1

HEADER_MAGIC = b"POREVOX"


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class MaterialMap:
    """Maps solid material codes to boundary-type indices ``0..N-1``."""

    codes: dict[int, int] = field(default_factory=dict)
    default: int = 0

    def lookup(self, labels: np.ndarray) -> np.ndarray:
        table = np.full(256, self.default, dtype=np.int16)
        for code, btype in self.codes.items():
            table[int(code)] = btype
        out = table[labels]
        out[labels == FLUID] = -1
        return out


def _axis_index(axis) -> int:
    if isinstance(axis, str):
        try:
            return AXES[axis.lower()]
        except KeyError:
            raise GeometryError(f"unknown axis {axis!r}") from None
    if axis not in (0, 1, 2):
        raise GeometryError(f"unknown axis {axis!r}")
    return int(axis)


@dataclass(frozen=True, eq=False)
class VoxelGrid:
    labels: np.ndarray
    voxel_size: float
    padding: tuple[int, int] = (0, 0)
    flow_axis: int = 2
    material_map: MaterialMap = field(default_factory=MaterialMap)

    def __post_init__(self):
        labels = np.ascontiguousarray(self.labels, dtype=np.uint8)
        if labels.ndim != 3 or min(labels.shape) < 1:
            raise GeometryError(f"labels must be a non-empty 3D array, got shape {labels.shape}")
        if not self.voxel_size > 0:
            raise GeometryError("voxel_size must be positive")
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "flow_axis", _axis_index(self.flow_axis))
        object.__setattr__(self, "padding", tuple(int(p) for p in self.padding))

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.labels.shape

    @property
    def n_voxels(self) -> int:
        return self.labels.size

    @property
    def fluid(self) -> np.ndarray:
        return self.labels == FLUID

    @property
    def n_fluid(self) -> int:
        return int(np.count_nonzero(self.labels == FLUID))

    def boundary_types(self) -> np.ndarray:
        """Per-voxel boundary type (-1 for fluid voxels)."""
        return self.material_map.lookup(self.labels)

    def validate(self):
        """Check the through-flow invariants required by the simulation pipeline."""
        if self.n_fluid == 0:
            raise GeometryError("geometry has no fluid voxels")
        a = self.flow_axis
        first = np.take(self.labels, 0, axis=a)
        last = np.take(self.labels, self.dims[a] - 1, axis=a)
        if not np.any(first == FLUID):
            raise GeometryError("inlet layer contains no fluid voxel")
        if not np.any(last == FLUID):
            raise GeometryError("outlet layer contains no fluid voxel")
        lo, hi = self.padding
        n = self.dims[a]
        pads = [np.take(self.labels, np.arange(lo), axis=a), np.take(self.labels, np.arange(n - hi, n), axis=a)]
        if any(np.any(p != FLUID) for p in pads):
            raise GeometryError("padding layers must be entirely fluid")

    def __eq__(self, other):
        if not isinstance(other, VoxelGrid):
            return NotImplemented
        return (
            self.voxel_size == other.voxel_size
            and self.padding == other.padding
            and self.flow_axis == other.flow_axis
            and self.material_map == other.material_map
            and np.array_equal(self.labels, other.labels)
        )


def read_header(raw: bytes) -> tuple[tuple[int, int, int], int]:
    nl = raw.find(b"\n")
    if nl < 0:
        raise GeometryError("missing header line")
    parts = raw[:nl].split()
    if len(parts) != 5 or parts[0] != HEADER_MAGIC or parts[1] != b"1":
        raise GeometryError(f"malformed header {raw[:nl][:80]!r}")
    try:
        dims = tuple(int(p) for p in parts[2:])
    except ValueError:
        raise GeometryError(f"malformed dimensions in header {raw[:nl]!r}") from None
    if min(dims) < 1:
        raise GeometryError(f"dimensions must be positive, got {dims}")
    return dims, nl + 1


def load_geometry(path, material_map: MaterialMap | None = None, *, voxel_size: float = 1.0,
                  flow_axis="z") -> VoxelGrid:
    """Read a POREVOX file.

    Raises GeometryError on a truncated or oversized payload, a malformed
    header, or a geometry without fluid voxels.
    """
    raw = Path(path).read_bytes()
    (nx, ny, nz), start = read_header(raw)
    payload = raw[start:]
    expected = nx * ny * nz
    if len(payload) < expected:
        raise GeometryError(f"truncated payload: expected {expected} bytes, found {len(payload)}")
    if len(payload) > expected:
        raise GeometryError(f"payload longer than header dimensions: expected {expected} bytes, found {len(payload)}")
    labels = np.frombuffer(payload, dtype=np.uint8).reshape(nz, ny, nx).transpose(2, 1, 0)
    grid = VoxelGrid(labels, voxel_size, flow_axis=flow_axis, material_map=material_map or MaterialMap())
    if grid.n_fluid == 0:
        raise GeometryError("geometry has no fluid voxels")
    return grid


def geometry_bytes(grid: VoxelGrid) -> bytes:
    nx, ny, nz = grid.dims
    header = f"POREVOX 1 {nx} {ny} {nz}\n".encode("ascii")
    return header + grid.labels.transpose(2, 1, 0).tobytes()


def write_geometry(path, grid: VoxelGrid):
    Path(path).write_bytes(geometry_bytes(grid))


def content_hash(data: bytes) -> str:
    """git blob hash of ``data``."""
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def pad_inlet_outlet(grid: VoxelGrid, layers: int) -> VoxelGrid:
    if layers < 0:
        raise GeometryError("layers must be >= 0")
    if layers == 0:
        return grid
    widths = [(0, 0)] * 3
    widths[grid.flow_axis] = (layers, layers)
    labels = np.pad(grid.labels, widths, constant_values=FLUID)
    lo, hi = grid.padding
    return VoxelGrid(labels, grid.voxel_size, (lo + layers, hi + layers), grid.flow_axis, grid.material_map)


def porosity(grid: VoxelGrid, exclude_padding: bool = False) -> float:
    labels = grid.labels
    if exclude_padding:
        lo, hi = grid.padding
        n = grid.dims[grid.flow_axis]
        labels = np.take(labels, np.arange(lo, n - hi), axis=grid.flow_axis)
        if labels.size == 0:
            return 0.0
    return float(np.count_nonzero(labels == FLUID)) / labels.size


def shifted(a: np.ndarray, axis: int, sign: int, fill) -> np.ndarray:
    """``out[i] = a[i + sign]`` along ``axis``, with ``fill`` outside the domain."""
    out = np.empty_like(a)
    n = a.shape[axis]
    src = [slice(None)] * a.ndim
    dst = [slice(None)] * a.ndim
    pad = [slice(None)] * a.ndim
    if sign > 0:
        dst[axis], src[axis], pad[axis] = slice(0, n - 1), slice(1, n), slice(n - 1, n)
    else:
        dst[axis], src[axis], pad[axis] = slice(1, n), slice(0, n - 1), slice(0, 1)
    out[tuple(dst)] = a[tuple(src)]
    out[tuple(pad)] = fill
    return out


@dataclass(frozen=True, eq=False)
class FaceIndex:
    """Six-face classification of every voxel, ordered as DIRECTIONS.

    ``kind[x, y, z, d]`` is one of INTERIOR, REACTIVE, INLET, OUTLET, WALL for
    fluid voxels and NOT_FLUID for solids; ``btype`` holds the boundary type of
    reactive faces and -1 elsewhere.
    """

    kind: np.ndarray
    btype: np.ndarray

    def counts(self) -> dict[str, int]:
        names = {INTERIOR: "interior", REACTIVE: "reactive", INLET: "inlet", OUTLET: "outlet", WALL: "wall"}
        return {name: int(np.count_nonzero(self.kind == k)) for k, name in names.items()}


def classify_faces(grid: VoxelGrid) -> FaceIndex:
    fluid = grid.fluid
    btypes = grid.boundary_types()
    kind = np.full(grid.dims + (6,), NOT_FLUID, dtype=np.int8)
    btype = np.full(grid.dims + (6,), -1, dtype=np.int16)
    for d, (axis, sign) in enumerate(DIRECTIONS):
        nb_fluid = shifted(fluid, axis, sign, False)
        nb_btype = shifted(btypes, axis, sign, -1)
        inside = shifted(np.ones_like(fluid), axis, sign, False)
        k = np.full(grid.dims, WALL, dtype=np.int8)
        k[inside & nb_fluid] = INTERIOR
        reactive = inside & ~nb_fluid
        k[reactive] = REACTIVE
        if axis == grid.flow_axis:
            k[~inside] = INLET if sign < 0 else OUTLET
        k[~fluid] = NOT_FLUID
        kind[..., d] = k
        btype[..., d] = np.where(fluid & reactive, nb_btype, -1)
    return FaceIndex(kind, btype)


@dataclass(frozen=True)
class ReactiveFace:
    fluid_cell: int  # flat x-fastest index into the grid
    direction: str
    boundary_type: int
    area: float


def flat_index(grid: VoxelGrid, ijk) -> np.ndarray:
    nx, ny, _ = grid.dims
    i, j, k = ijk
    return np.asarray(i) + nx * (np.asarray(j) + ny * np.asarray(k))


@dataclass(frozen=True, eq=False)
class ReactiveFaces:
    """Array view of the reactive faces, sorted by (flat cell index, direction)."""

    cell: np.ndarray       # flat x-fastest index
    ijk: np.ndarray        # (n, 3) voxel coordinates of the fluid cell
    direction: np.ndarray  # index into DIRECTIONS
    btype: np.ndarray

    def __len__(self):
        return len(self.cell)

    def centers(self) -> np.ndarray:
        """Face centers in voxel units."""
        c = self.ijk.astype(float) + 0.5
        axes = np.array([DIRECTIONS[d][0] for d in self.direction], dtype=int)
        signs = np.array([DIRECTIONS[d][1] for d in self.direction], dtype=float)
        if len(self):
            c[np.arange(len(self)), axes] += 0.5 * signs
        return c


def reactive_face_arrays(grid: VoxelGrid, faces: FaceIndex | None = None) -> ReactiveFaces:
    faces = faces or classify_faces(grid)
    x, y, z, d = np.nonzero(faces.kind == REACTIVE)
    cell = flat_index(grid, (x, y, z))
    order = np.lexsort((d, cell))
    x, y, z, d, cell = x[order], y[order], z[order], d[order], cell[order]
    return ReactiveFaces(cell, np.stack([x, y, z], axis=1), d, faces.btype[x, y, z, d])


def enumerate_reactive_faces(grid: VoxelGrid, dx_hat: float = 1.0) -> list[ReactiveFace]:
    rf = reactive_face_arrays(grid)
    area = dx_hat ** 2
    return [ReactiveFace(int(c), DIRECTION_NAMES[d], int(b), area) for c, d, b in zip(rf.cell, rf.direction, rf.btype)]


@dataclass(frozen=True, eq=False)
class Connectivity:
    fluid: np.ndarray
    to_inlet: np.ndarray
    to_outlet: np.ndarray

    @property
    def through(self) -> np.ndarray:
        return self.to_inlet & self.to_outlet

    @property
    def isolated(self) -> np.ndarray:
        """Fluid voxels touching neither inlet nor outlet; they carry no flow."""
        return self.fluid & ~self.to_inlet & ~self.to_outlet


def connectivity(grid: VoxelGrid) -> Connectivity:
    fluid = grid.fluid
    comp, _ = ndimage.label(fluid)
    a = grid.flow_axis
    inlet_ids = np.unique(np.take(comp, 0, axis=a))
    outlet_ids = np.unique(np.take(comp, grid.dims[a] - 1, axis=a))
    inlet_ids = inlet_ids[inlet_ids > 0]
    outlet_ids = outlet_ids[outlet_ids > 0]
    return Connectivity(fluid, np.isin(comp, inlet_ids), np.isin(comp, outlet_ids))


def describe(grid: VoxelGrid) -> dict:
    """Geometry statistics reported by ``porevox inspect``."""
    conn = connectivity(grid)
    faces = classify_faces(grid)
    counts = faces.counts()
    return {
        "dims": "x".join(str(n) for n in grid.dims),
        "voxel_size": grid.voxel_size,
        "flow_axis": AXIS_NAMES[grid.flow_axis],
        "padding": f"{grid.padding[0]},{grid.padding[1]}",
        "n_voxels": grid.n_voxels,
        "n_fluid": grid.n_fluid,
        "porosity": porosity(grid),
        "porosity_sample": porosity(grid, exclude_padding=True),
        "n_reactive_faces": counts["reactive"],
        "n_inlet_faces": counts["inlet"],
        "n_outlet_faces": counts["outlet"],
        "n_through_voxels": int(np.count_nonzero(conn.through)),
        "n_isolated_voxels": int(np.count_nonzero(conn.isolated)),
        "materials": ",".join(str(int(c)) for c in np.unique(grid.labels) if c != FLUID),
    }
