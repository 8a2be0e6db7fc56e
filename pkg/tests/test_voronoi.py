import math
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.spatial.distance import pdist

from conftest import torus_grid
from manifold_fp.manifolds import PointCloud, random_orthogonal, sample_manifold
from manifold_fp.voronoi import (Tessellation, TessellationError, build_tessellation,
                                 cell_polytope, tangent_frame, theory_threshold)


# tangent frames

def test_frame_on_flat_plane_in_r5():
    rng = np.random.default_rng(0)
    B = random_orthogonal(5, 1)[:, :2]
    uv = rng.uniform(-0.5, 0.5, (200, 2))
    pts = uv @ B.T + 0.3
    frame = tangent_frame(PointCloud(pts, 2), 0, 0.09)
    np.testing.assert_allclose(frame.basis.T @ frame.basis, np.eye(2), atol=1e-10)
    off = pts[frame.projected_ids] - pts[0]
    resid = off - (off @ frame.basis) @ frame.basis.T
    assert np.max(np.abs(resid)) <= 1e-10


def test_frame_on_circle_is_tangent():
    t = np.linspace(0, 2 * np.pi, 2000, endpoint=False)
    pts = np.column_stack([np.cos(t), np.sin(t)])
    for r in (0.04, 0.01):
        frame = tangent_frame(PointCloud(pts, 1), 0, r)
        # tangent at (1, 0) is (0, 1); the error shrinks like O(r)
        angle = math.acos(min(1.0, abs(frame.basis[1, 0])))
        assert angle <= r


def test_frame_on_torus_grid_is_isometric():
    cloud = torus_grid(20)
    frame = tangent_frame(cloud, 37, 0.15, period=1.0)
    off = cloud.points[frame.projected_ids] - cloud.points[37]
    off = off - np.round(off)
    np.testing.assert_allclose(pdist(frame.projected), pdist(off), atol=1e-10)
    assert frame.projected.shape[1] == 2


def test_frame_needs_enough_neighbours():
    pts = np.array([[0.0, 0.0], [0.1, 0.0], [5.0, 5.0], [6.0, 5.0]])
    with pytest.raises(TessellationError, match="point 0: only 1 neighbours"):
        tangent_frame(PointCloud(pts, 2), 0, 0.04)


def test_frame_degenerate_covariance():
    # a square lattice in R^3 looked at with d = 1 has two equal eigenvalues
    cloud = PointCloud(np.column_stack([torus_grid(10).points, np.zeros(100)]), 1)
    with pytest.raises(TessellationError, match="degenerate"):
        tangent_frame(cloud, 44, 0.25)


# single cells

def test_square_cell():
    h = 0.1
    V = np.array([[h, 0], [-h, 0], [0, h], [0, -h]])
    vol, faces, clipped = cell_polytope(V, 1.0)
    assert vol == pytest.approx(h * h, abs=1e-15)
    np.testing.assert_allclose(faces, h, atol=1e-15)
    assert not clipped


def test_hexagon_cell():
    h = 0.2
    ang = np.arange(6) * np.pi / 3
    V = h * np.column_stack([np.cos(ang), np.sin(ang)])
    vol, faces, clipped = cell_polytope(V, 5.0)
    assert vol == pytest.approx(math.sqrt(3) / 2 * h * h, rel=1e-13)
    np.testing.assert_allclose(faces, h / math.sqrt(3), rtol=1e-13)
    assert not clipped


def test_single_neighbour_circular_segment():
    h, r = 0.6, 1.0
    vol, faces, clipped = cell_polytope(np.array([[h, 0.0]]), r)
    a = h / 2
    theta = 2 * math.acos(a / r)
    segment = r * r / 2 * (theta - math.sin(theta))
    assert vol == pytest.approx(math.pi * r * r - segment, abs=1e-9)
    assert faces[0] == pytest.approx(2 * math.sqrt(r * r - a * a), abs=1e-9)
    assert clipped


def test_far_neighbour_gives_disk_and_no_face():
    vol, faces, clipped = cell_polytope(np.array([[3.0, 0.0]]), 1.0)
    assert vol == pytest.approx(math.pi, rel=1e-12)
    assert faces[0] == 0.0
    assert clipped


def test_cube_cell_in_three_dimensions():
    h = 0.1
    V = np.vstack([h * np.eye(3), -h * np.eye(3)])
    vol, faces, clipped = cell_polytope(V, 1.0)
    assert vol == pytest.approx(h**3, rel=1e-12)
    np.testing.assert_allclose(faces, h * h, rtol=1e-12)
    assert not clipped


def test_cell_errors():
    with pytest.raises(ValueError):
        cell_polytope(np.zeros((0, 2)), 1.0)
    with pytest.raises(ValueError):
        cell_polytope(np.array([[np.nan, 0.0]]), 1.0)
    with pytest.raises(ValueError):
        cell_polytope(np.ones((2, 4)), 1.0)


def _mc_volume(V, r, rng, samples=10**6):
    d = V.shape[1]
    if d == 2:
        rad = r * np.sqrt(rng.random(samples))
        ang = 2 * np.pi * rng.random(samples)
        X = np.column_stack([rad * np.cos(ang), rad * np.sin(ang)])
        box = math.pi * r * r
    else:
        X = rng.uniform(-r, r, (samples, d))
        box = (2 * r) ** d
    inside = np.ones(samples, dtype=bool)
    # nearest-site test against the origin, neighbour by neighbour
    for v in V:
        inside &= X @ v <= 0.5 * (v @ v)
    p = inside.mean()
    return box * p, box * math.sqrt(p * (1 - p) / samples)


def test_monte_carlo_cell_volumes():
    rng = np.random.default_rng(42)
    for _ in range(20):
        m = int(rng.integers(1, 13))
        r = 0.3
        V = rng.uniform(-1.5 * r, 1.5 * r, (m, 2))
        V = V[np.linalg.norm(V, axis=1) > 0.02]
        if len(V) == 0:
            continue
        vol, _, _ = cell_polytope(V, r)
        est, se = _mc_volume(V, r, rng)
        assert abs(vol - est) <= 3 * se + 1e-12


def test_monte_carlo_cell_volume_3d():
    rng = np.random.default_rng(7)
    V = rng.uniform(-0.3, 0.3, (9, 3))
    vol, _, _ = cell_polytope(V, 0.2)
    est, se = _mc_volume(V, 0.2, rng)
    assert abs(vol - est) <= 3 * se


@given(st.lists(st.tuples(st.floats(-1, 1), st.floats(-1, 1)), min_size=1, max_size=10),
       st.floats(0.1, 1.0))
def test_cell_bounded_by_disk_and_faces_nonnegative(pts, r):
    V = np.array(pts)
    V = V[np.linalg.norm(V, axis=1) > 1e-3]
    if len(V) == 0:
        return
    vol, faces, _ = cell_polytope(V, r)
    assert 0 < vol <= math.pi * r * r * (1 + 1e-12)
    assert np.all(faces >= 0)
    # every face is a chord of the disk
    assert np.all(faces <= 2 * r * (1 + 1e-12))


# whole tessellations

def test_flat_torus_grid_is_exact():
    m = 20
    h = 1.0 / m
    tess = build_tessellation(torus_grid(m), 3 * h, period=1.0)
    np.testing.assert_allclose(tess.volumes, h * h, atol=1e-8)
    np.testing.assert_allclose(tess.face_area, h, atol=1e-8)
    # four lattice neighbours per site, each face stored once
    assert tess.n_faces == 2 * m * m
    np.testing.assert_allclose(tess.face_dist, h, atol=1e-12)


@pytest.fixture(scope="module")
def sphere2000():
    cloud = sample_manifold("sphere", 2000, seed=0)
    return cloud, build_tessellation(cloud, 0.3)


def test_sphere_total_area(sphere2000):
    _, tess = sphere2000
    assert tess.volumes.sum() == pytest.approx(4 * np.pi, rel=0.05)


def test_tessellation_invariants(sphere2000):
    cloud, tess = sphere2000
    A = tess.area_matrix()
    assert (A != A.T).nnz == 0
    assert np.all(tess.face_i < tess.face_j)
    assert np.all(tess.face_area > 0)
    assert np.all(tess.face_dist <= 2 * tess.r)
    lists = tess.neighbor_lists()
    for i in range(0, tess.n, 97):
        for j in lists[i]:
            assert i in lists[j]
            assert tess.area(i, j) == tess.area(j, i) > 0
    diag = tess.diagnostics()
    assert diag["n_cells"] == 2000 and diag["n_faces"] == tess.n_faces


def test_rotation_invariance():
    cloud = sample_manifold("sphere", 600, seed=3)
    Q = random_orthogonal(3, 8)
    rot = PointCloud(cloud.points @ Q.T, 2)
    a = build_tessellation(cloud, 0.4)
    b = build_tessellation(rot, 0.4)
    np.testing.assert_allclose(b.volumes, a.volumes, atol=1e-8)
    np.testing.assert_array_equal(a.face_i, b.face_i)
    np.testing.assert_array_equal(a.face_j, b.face_j)
    np.testing.assert_allclose(b.face_area, a.face_area, atol=1e-8)


def test_refinement_of_total_area():
    errors = []
    for n in (500, 2000, 8000):
        r = 0.3 * math.sqrt(2000 / n)
        tess = build_tessellation(sample_manifold("sphere", n, seed=0), r)
        errors.append(abs(tess.volumes.sum() / (4 * np.pi) - 1))
    assert errors[0] > errors[1] > errors[2]


def test_threshold_floors_only_existing_faces():
    cloud = sample_manifold("sphere", 400, seed=5)
    base = build_tessellation(cloud, 0.5)
    s = theory_threshold(0.5, 2)
    assert s == pytest.approx(0.025)
    floored = build_tessellation(cloud, 0.5, s=s)
    np.testing.assert_array_equal(floored.face_i, base.face_i)
    np.testing.assert_allclose(floored.face_area, np.maximum(base.face_area, s))


def test_warns_outside_unit_interval():
    cloud = torus_grid(10)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        build_tessellation(PointCloud(cloud.points * 20, 2), 9.0)
    assert any("outside (0, 1)" in str(w.message) for w in caught)


def test_error_carries_point_index():
    pts = np.vstack([torus_grid(10).points, [[5.0, 5.0]]])
    with pytest.raises(TessellationError) as info:
        build_tessellation(PointCloud(pts, 2), 0.2)
    assert info.value.index == 100


def test_from_faces():
    t = Tessellation.from_faces([1.0, 2.0, 3.0], [(2, 1, 0.5, 1.0), (0, 1, 1.0, 2.0)], d=1)
    np.testing.assert_array_equal(t.face_i, [0, 1])
    np.testing.assert_array_equal(t.face_j, [1, 2])
    assert t.area(2, 1) == 0.5
    with pytest.raises(ValueError):
        Tessellation.from_faces([1.0, 0.0], [(0, 1, 1.0, 1.0)], d=1)
    with pytest.raises(ValueError, match="duplicate"):
        Tessellation.from_faces([1.0, 1.0], [(0, 1, 1.0, 1.0), (1, 0, 2.0, 1.0)], d=1)
