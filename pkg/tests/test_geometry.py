import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mapmetrics.geometry import (
    PointCloud, PoseSE3, Trajectory, aggregate_map, compose, inverse, orthonormalize, rotation_error,
)
from conftest import random_pose, random_rotation


def close_pose(a, b, tol=1e-12):
    return np.allclose(a.matrix, b.matrix, atol=tol, rtol=0)


def test_identity_compose():
    i = PoseSE3.identity()
    assert close_pose(compose(i, i), i, 0)


def test_compose_inverse_identity(rng):
    for _ in range(50):
        p = random_pose(rng)
        assert close_pose(compose(p, inverse(p)), PoseSE3.identity())
        assert close_pose(compose(inverse(p), p), PoseSE3.identity())


def test_compose_matches_homogeneous_product(rng):
    for _ in range(50):
        a, b = random_pose(rng), random_pose(rng)
        oracle = np.zeros((4, 4))
        ma, mb = a.matrix, b.matrix
        for r in range(4):
            for c in range(4):
                oracle[r, c] = sum(ma[r, k] * mb[k, c] for k in range(4))
        assert np.allclose(compose(a, b).matrix, oracle, atol=1e-12)
        assert close_pose(a @ b, compose(a, b), 0)


def test_inverse_identity_and_translation():
    assert close_pose(inverse(PoseSE3.identity()), PoseSE3.identity(), 0)
    inv = inverse(PoseSE3.from_translation((1, 2, 3)))
    assert np.array_equal(inv.translation, [-1, -2, -3])
    assert np.array_equal(inv.rotation, np.eye(3))


def test_inverse_formula(rng):
    p = random_pose(rng)
    inv = inverse(p)
    assert np.allclose(inv.rotation, p.rotation.T)
    assert np.allclose(inv.translation, -p.rotation.T @ p.translation)


def test_compose_associative(rng):
    for _ in range(50):
        a, b, c = (random_pose(rng) for _ in range(3))
        assert close_pose(compose(compose(a, b), c), compose(a, compose(b, c)), 1e-11)


def test_long_chain_stays_orthonormal(rng):
    p = PoseSE3(random_rotation(rng), np.zeros(3))
    acc = PoseSE3.identity()
    for _ in range(1000):
        acc = compose(acc, p)
    assert rotation_error(acc.rotation) < 1e-9


def test_pose_validation():
    with pytest.raises(ValueError):
        PoseSE3(np.diag([1.0, 1.0, 1.001]), np.zeros(3))
    with pytest.raises(ValueError):
        PoseSE3(np.diag([1.0, 1.0, -1.0]), np.zeros(3))
    with pytest.raises(ValueError):
        PoseSE3(np.eye(3), [np.nan, 0, 0])
    fixed = PoseSE3.from_matrix(np.hstack([np.diag([1.0, 1.0, 1.0005]), np.zeros((3, 1))]), repair=True)
    assert rotation_error(fixed.rotation) < 1e-12


def test_pose_is_immutable():
    p = PoseSE3.identity()
    with pytest.raises(ValueError):
        p.translation[0] = 1.0


def test_orthonormalize_keeps_rotation(rng):
    r = random_rotation(rng)
    assert np.allclose(orthonormalize(r + 1e-6 * rng.normal(size=(3, 3))), r, atol=1e-5)
    assert np.linalg.det(orthonormalize(r)) > 0


def test_aggregate_single_identity(rng):
    c = PointCloud(rng.normal(size=(20, 3)))
    out = aggregate_map([c], Trajectory([PoseSE3.identity()]))
    assert np.array_equal(out.points, c.points)


def test_aggregate_translation_shift(rng):
    c = PointCloud(rng.normal(size=(20, 3)))
    out = aggregate_map([c], Trajectory([PoseSE3.from_translation((5, 0, 0))]))
    assert np.allclose(out.points - c.points, [5, 0, 0], atol=1e-12)


def test_aggregate_shared_plane_coplanar(rng):
    # plane z = 2 in world; two sensors see it from different poses
    world = [np.column_stack([rng.uniform(-1, 1, (50, 2)), np.full(50, 2.0)]) for _ in range(2)]
    poses = Trajectory([random_pose(rng), random_pose(rng)])
    clouds = [PointCloud(inverse(p).apply(w)) for p, w in zip(poses, world)]
    pts = aggregate_map(clouds, poses).points
    # plane-fit oracle: smallest singular value of centered points
    centered = pts - pts.mean(axis=0)
    residual = np.linalg.svd(centered, compute_uv=False)[-1] / np.sqrt(len(pts))
    assert residual < 1e-9


def test_aggregate_rotates_normals(rng):
    n = np.tile([0.0, 0.0, 1.0], (5, 1))
    c = PointCloud(rng.normal(size=(5, 3)), n)
    p = random_pose(rng)
    out = aggregate_map([c, PointCloud(rng.normal(size=(3, 3)))], Trajectory([p, p]))
    assert np.allclose(out.normals[:5], p.rotation @ [0, 0, 1])
    assert np.all(np.isnan(out.normals[5:]))


def test_aggregate_misaligned():
    c = PointCloud(np.zeros((1, 3)))
    with pytest.raises(ValueError, match="misaligned"):
        aggregate_map([c, c], Trajectory([PoseSE3.identity()]))


def test_pointcloud_validation():
    with pytest.raises(ValueError):
        PointCloud([[0, 0, np.inf]])
    with pytest.raises(ValueError):
        PointCloud(np.zeros((2, 3)), np.array([[0, 0, 2.0], [0, 0, 1.0]]))
    with pytest.raises(ValueError):
        PointCloud(np.zeros((2, 3)), np.array([[0, 0, 1.0]]))
    c = PointCloud(np.zeros((2, 3)), np.array([[0, 0, 1.0], [np.nan] * 3]))
    assert c.has_normal.tolist() == [True, False]


def test_trajectory_helpers():
    t = Trajectory.from_translations(np.arange(12.0).reshape(4, 3))
    assert len(t) == 4 and t.is_rotation_free()
    assert np.array_equal(t.translations[2], [6, 7, 8])
    moved = t.transformed(PoseSE3.from_translation((1, 0, 0)))
    assert np.array_equal(moved.translations[:, 0], t.translations[:, 0] + 1)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_rigid_map_transform_preserves_distances(seed):
    rng = np.random.default_rng(seed)
    c = PointCloud(rng.normal(size=(10, 3)))
    p = random_pose(rng)
    moved = c.transformed(p).points
    d0 = np.linalg.norm(c.points[:, None] - c.points[None], axis=-1)
    d1 = np.linalg.norm(moved[:, None] - moved[None], axis=-1)
    assert np.allclose(d0, d1, atol=1e-10)
