import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from porevox.geometry import (
    DIRECTION_NAMES, INLET, INTERIOR, NOT_FLUID, OUTLET, REACTIVE, WALL, GeometryError, MaterialMap,
    VoxelGrid, classify_faces, connectivity, content_hash, enumerate_reactive_faces, geometry_bytes,
    load_geometry, pad_inlet_outlet, porosity, reactive_face_arrays, write_geometry,
)

from oracles import brute_force_faces

label_arrays = arrays(np.uint8, st.tuples(*[st.integers(1, 5)] * 3), elements=st.sampled_from([0, 0, 1, 2, 7]))


def grid_of(labels, **kw):
    return VoxelGrid(np.asarray(labels, dtype=np.uint8), 1.0, **kw)


def test_load_all_fluid(tmp_path):
    p = tmp_path / "g.raw"
    p.write_bytes(b"POREVOX 1 2 2 2\n" + bytes(8))
    g = load_geometry(p)
    assert g.dims == (2, 2, 2) and g.n_fluid == 8 and porosity(g) == 1.0


def test_load_truncated(tmp_path):
    p = tmp_path / "g.raw"
    p.write_bytes(b"POREVOX 1 3 3 3\n" + bytes(26))
    with pytest.raises(GeometryError, match="truncated"):
        load_geometry(p)


@pytest.mark.parametrize("raw", [b"POREVOX 1 2 2\n" + bytes(4), b"VOXELS 1 1 1 1\n\0", b"POREVOX 1 1 1 1\n\0\0",
                                 b"POREVOX 1 1 1 1\n\x01", b"no header"])
def test_load_rejects_bad_files(tmp_path, raw):
    p = tmp_path / "g.raw"
    p.write_bytes(raw)
    with pytest.raises(GeometryError):
        load_geometry(p)


def test_x_fastest_ordering(tmp_path):
    p = tmp_path / "g.raw"
    p.write_bytes(b"POREVOX 1 3 2 1\n" + bytes([0, 1, 2, 3, 4, 5]))
    g = load_geometry(p)
    for x in range(3):
        for y in range(2):
            assert g.labels[x, y, 0] == x + 3 * y


@given(label_arrays)
def test_write_load_roundtrip(labels):
    if not (labels == 0).any():
        labels = labels.copy()
        labels[0, 0, 0] = 0
    g = grid_of(labels)
    data = geometry_bytes(g)
    from tempfile import TemporaryDirectory
    with TemporaryDirectory() as d:
        write_geometry(f"{d}/g.raw", g)
        assert load_geometry(f"{d}/g.raw") == g
    assert len(content_hash(data)) == 40


def test_unknown_code_maps_to_default():
    g = VoxelGrid(np.array([[[0, 3, 9]]], dtype=np.uint8), 1.0, material_map=MaterialMap({3: 1}, default=2))
    assert g.boundary_types().tolist() == [[[-1, 1, 2]]]


def test_pad_paper_sizes():
    g = pad_inlet_outlet(grid_of(np.zeros((100, 100, 100))), 10)
    assert g.dims == (100, 100, 120)
    assert pad_inlet_outlet(grid_of(np.zeros((20, 20, 280))), 10).dims == (20, 20, 300)


def test_pad_zero_is_identity():
    g = grid_of(np.ones((2, 2, 2)))
    assert pad_inlet_outlet(g, 0) is g


def test_pad_solid_core():
    g = pad_inlet_outlet(grid_of(np.ones((4, 4, 4))), 1)
    assert g.dims == (4, 4, 6) and g.padding == (1, 1)
    assert (g.labels[:, :, 0] == 0).all() and (g.labels[:, :, -1] == 0).all()
    assert (g.labels[:, :, 1:-1] == 1).all()
    g.validate()


@given(label_arrays, st.integers(0, 3), st.integers(0, 3), st.sampled_from(["x", "y", "z"]))
def test_pad_composes(labels, a, b, axis):
    g = grid_of(labels, flow_axis=axis)
    twice = pad_inlet_outlet(pad_inlet_outlet(g, a), b)
    once = pad_inlet_outlet(g, a + b)
    assert twice.dims == once.dims and np.array_equal(twice.labels, once.labels)
    assert twice.padding == once.padding


def test_porosity_examples():
    assert porosity(grid_of(np.zeros((2, 2, 2)))) == 1.0
    assert porosity(grid_of(np.ones((2, 2, 2)))) == 0.0
    assert porosity(grid_of([[[0]], [[1]]])) == 0.5
    padded = pad_inlet_outlet(grid_of(np.ones((2, 2, 2))), 1)
    assert porosity(padded) == 0.5 and porosity(padded, exclude_padding=True) == 0.0


def test_single_solid_voxel_has_six_faces():
    labels = np.zeros((3, 3, 3))
    labels[1, 1, 1] = 1
    faces = enumerate_reactive_faces(grid_of(labels))
    assert len(faces) == 6
    assert sorted(f.direction for f in faces) == sorted(DIRECTION_NAMES)


def test_two_voxel_face_points_to_solid():
    faces = enumerate_reactive_faces(grid_of([[[0]], [[1]]]), dx_hat=0.5)
    assert len(faces) == 1
    assert faces[0].fluid_cell == 0 and faces[0].direction == "+x" and faces[0].area == 0.25


def test_random_faces_match_brute_force():
    rng = np.random.default_rng(3)
    labels = rng.choice(np.array([0, 0, 1, 4], dtype=np.uint8), size=(8, 8, 8))
    mm = MaterialMap({4: 1}, default=0)
    g = VoxelGrid(labels, 1.0, material_map=mm)
    rf = reactive_face_arrays(g)
    got = sorted(zip(rf.cell.tolist(), rf.direction.tolist(), rf.btype.tolist()))
    assert got == brute_force_faces(labels, lambda code: 1 if code == 4 else 0)


@given(label_arrays)
def test_classification_exhaustive(labels):
    g = grid_of(labels)
    kind = classify_faces(g).kind
    fluid = labels == 0
    assert (kind[~fluid] == NOT_FLUID).all()
    assert np.isin(kind[fluid], [INTERIOR, REACTIVE, INLET, OUTLET, WALL]).all()
    # interior faces are symmetric: +axis of a cell is -axis of its neighbour
    for axis in range(3):
        plus = kind[..., 2 * axis] == INTERIOR
        minus = kind[..., 2 * axis + 1] == INTERIOR
        assert np.array_equal(np.take(plus, range(labels.shape[axis] - 1), axis=axis),
                              np.take(minus, range(1, labels.shape[axis]), axis=axis))
    # inlet/outlet only on the flow axis ends
    assert (kind[:, :, 1:, 5] != INLET).all() and (kind[:, :, :-1, 4] != OUTLET).all()


@given(label_arrays, st.permutations([0, 1, 2]))
def test_reactive_faces_axis_permutation(labels, perm):
    """Permuting the axes permutes face directions accordingly."""
    def face_set(lab):
        rf = reactive_face_arrays(grid_of(lab))
        return {(tuple(ijk), d) for ijk, d in zip(rf.ijk.tolist(), rf.direction.tolist())}

    base = face_set(labels)
    permuted = face_set(np.transpose(labels, perm))
    mapped = set()
    for ijk, d in permuted:
        axis, sign = divmod(d, 2)
        orig = [0, 0, 0]
        for new_axis, old_axis in enumerate(perm):
            orig[old_axis] = ijk[new_axis]
        mapped.add((tuple(orig), 2 * perm[axis] + sign))
    assert mapped == base


def test_connectivity_flags_isolated_pore():
    labels = np.ones((3, 3, 5), dtype=np.uint8)
    labels[1, 1, :] = 0        # through channel
    labels[0, 0, 2] = 0        # sealed pocket
    conn = connectivity(grid_of(labels))
    assert conn.through[1, 1, :].all()
    assert conn.isolated[0, 0, 2] and conn.isolated.sum() == 1


def test_validate_rejects_blocked_inlet():
    labels = np.zeros((2, 2, 3), dtype=np.uint8)
    labels[:, :, 0] = 1
    with pytest.raises(GeometryError, match="inlet"):
        grid_of(labels).validate()


def test_labels_immutable():
    g = grid_of(np.zeros((2, 2, 2)))
    with pytest.raises(ValueError):
        g.labels[0, 0, 0] = 1
