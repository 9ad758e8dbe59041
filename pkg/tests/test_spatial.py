import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mapmetrics.errors import DegenerateVicinityError
from mapmetrics import spatial
from mapmetrics.geometry import PointCloud
from mapmetrics.spatial import (
    IndexConfig, SpatialIndex, Vicinity, build_index, covariance, estimate_normals,
    min_eigenpairs, min_eigenvalue, sample_covariance, symmetric_eigenvalues, vicinity_covariances,
)
from conftest import random_rotation


def brute_radius(points, q, r):
    return np.flatnonzero(np.linalg.norm(points - q, axis=1) <= r)


def brute_knn(points, q, k):
    return np.argsort(np.linalg.norm(points - q, axis=1), kind="stable")[:k]


def textbook_covariance(pts):
    n = len(pts)
    mean = [sum(p[a] for p in pts) / n for a in range(3)]
    c = np.zeros((3, 3))
    for a in range(3):
        for b in range(3):
            c[a, b] = sum((p[a] - mean[a]) * (p[b] - mean[b]) for p in pts) / (n - 1)
    return c


def cubic_root_oracle(m):
    """Eigenvalues as roots of det(lambda I - m), solved in 60-digit arithmetic."""
    with mpmath.workdps(60):
        mp = mpmath.matrix([[mpmath.mpf(float(v)) for v in row] for row in m])
        c2 = -(mp[0, 0] + mp[1, 1] + mp[2, 2])
        c1 = (mp[0, 0] * mp[1, 1] - mp[0, 1] * mp[1, 0] + mp[0, 0] * mp[2, 2] - mp[0, 2] * mp[2, 0]
              + mp[1, 1] * mp[2, 2] - mp[1, 2] * mp[2, 1])
        c0 = -mpmath.det(mp)
        roots = mpmath.polyroots([1, c2, c1, c0], maxsteps=500, extraprec=300)
        return np.sort([float(mpmath.re(r)) for r in roots])


def test_single_point_query():
    idx = build_index(PointCloud([[1.0, 2.0, 3.0]]))
    assert idx.query_radius([1, 2, 3], 0.1).tolist() == [0]


def test_empty_cloud_rejected():
    with pytest.raises(ValueError):
        SpatialIndex(np.empty((0, 3)))


def test_grid_face_neighbors():
    g = np.stack(np.meshgrid(*[np.arange(10.0)] * 3, indexing="ij"), axis=-1).reshape(-1, 3)
    idx = SpatialIndex(g)
    center = np.flatnonzero(np.all(g == [4, 5, 6], axis=1))[0]
    got = idx.query_radius(g[center], 1.05)
    assert len(got) == 7
    assert set(got) == set(brute_radius(g, g[center], 1.05))


def test_queries_match_brute_force():
    rng = np.random.default_rng(7)
    for trial in range(100):
        pts = rng.uniform(-1, 1, size=(int(rng.integers(1, 300)), 3))
        idx = SpatialIndex(pts)
        for q in rng.uniform(-1.2, 1.2, size=(5, 3)):
            r = rng.uniform(0.05, 0.8)
            assert idx.query_radius(q, r).tolist() == brute_radius(pts, q, r).tolist()
            k = int(rng.integers(1, 12))
            assert sorted(idx.query_knn(q, k)) == sorted(brute_knn(pts, q, k))


def test_random_1k_radius():
    rng = np.random.default_rng(8)
    pts = rng.normal(size=(1000, 3))
    idx = SpatialIndex(pts)
    for c in range(0, 1000, 37):
        v = idx.vicinity(c, IndexConfig(radius=0.4))
        assert v.center == c
        assert v.neighbors.tolist() == brute_radius(pts, pts[c], 0.4).tolist()


def test_index_config_validation():
    with pytest.raises(ValueError):
        IndexConfig(radius=0)
    with pytest.raises(ValueError):
        IndexConfig(mode="knn", k=3)
    with pytest.raises(ValueError):
        IndexConfig(mode="ball")


def test_covariance_examples():
    assert np.array_equal(covariance(np.array([[1.0, 2, 3], [1.0, 2, 3]])), np.zeros((3, 3)))
    assert np.allclose(covariance(np.array([[0.0, 0, 0], [1.0, 0, 0]])), np.diag([0.5, 0, 0]), atol=0)
    with pytest.raises(DegenerateVicinityError):
        covariance(np.zeros((1, 3)))


def test_covariance_two_pass_oracle():
    rng = np.random.default_rng(9)
    for _ in range(20):
        pts = rng.normal(size=(50, 3)) * rng.uniform(0.1, 3, size=3) + rng.normal(scale=10, size=3)
        cloud = PointCloud(pts)
        c = sample_covariance(cloud, Vicinity(0, np.arange(50)))
        assert np.allclose(c, textbook_covariance(pts.tolist()), atol=1e-12, rtol=0)
        assert np.array_equal(c, c.T)
        assert np.min(np.linalg.eigvalsh(c)) > -1e-12


@pytest.mark.parametrize("mode", ["radius", "knn"])
def test_batched_covariances_match_per_vicinity(mode):
    rng = np.random.default_rng(10)
    pts = rng.uniform(0, 2, size=(400, 3))
    cfg = IndexConfig(mode=mode, radius=0.3, k=12)
    idx = SpatialIndex(pts)
    for centers in (None, np.arange(0, 400, 7), np.arange(350)):
        covs, counts = vicinity_covariances(pts, cfg, centers=centers, index=idx)
        cs = np.arange(400) if centers is None else centers
        for row, c in enumerate(cs):
            v = idx.vicinity(int(c), cfg)
            assert counts[row] == len(v)
            if len(v) >= 2:
                assert np.allclose(covs[row], covariance(pts[v.neighbors]), atol=1e-13)
            else:
                assert np.all(np.isnan(covs[row]))


def test_exact_plane_vicinity_has_zero_normal_spread():
    rng = np.random.default_rng(11)
    pts = np.column_stack([rng.uniform(0, 2, (500, 2)), np.full(500, 3.7)])
    covs, _ = vicinity_covariances(pts, IndexConfig())
    assert np.max(np.abs(covs[:, 2, :])) < 1e-24


def test_min_eigenvalue_diagonal_and_zero():
    lam, v = min_eigenvalue(np.diag([3.0, 2.0, 1.0]))
    assert lam == pytest.approx(1.0, abs=1e-14)
    assert abs(abs(v[2]) - 1) < 1e-12
    lam, v = min_eigenvalue(np.zeros((3, 3)))
    assert lam == 0.0 and np.linalg.norm(v) == pytest.approx(1.0)


def test_min_eigenvalue_rejects_asymmetric():
    m = np.eye(3)
    m[0, 1] = 1e-3
    with pytest.raises(ValueError):
        min_eigenvalue(m)
    with pytest.raises(ValueError):
        min_eigenvalue(np.eye(2))


def test_min_eigenvalue_clamps_roundoff():
    lam, _ = min_eigenvalue(np.diag([1.0, 1.0, -1e-14]))
    assert lam == 0.0


def _random_symmetric(rng, kind):
    q = random_rotation(rng)
    if kind == 0:
        w = rng.uniform(0, 10, 3)
    elif kind == 1:
        w = np.array([0.0, rng.uniform(0, 1), rng.uniform(1, 2)])
    elif kind == 2:
        a = rng.uniform(0.1, 5)
        w = np.array([a, a * (1 + 1e-7), rng.uniform(5, 10)])
    else:
        w = 10.0 ** rng.uniform(-6, 2, 3)
    return q @ np.diag(w) @ q.T


def test_eigenvalues_match_cubic_root_oracle():
    rng = np.random.default_rng(12)
    mats = np.array([_random_symmetric(rng, i % 4) for i in range(1000)])
    mats = (mats + mats.transpose(0, 2, 1)) / 2
    ours = symmetric_eigenvalues(mats)
    lam, vec, evals = min_eigenpairs(mats)
    for m, e, l, v in zip(mats, ours, lam, vec):
        oracle = cubic_root_oracle(m)
        scale = max(1.0, np.max(np.abs(m)))
        assert np.allclose(e, oracle, atol=1e-9 * scale, rtol=0)
        assert l == pytest.approx(oracle[0], abs=1e-9 * scale)
        assert np.linalg.norm(m @ v - l * v) <= 1e-8 * np.linalg.norm(m) + 1e-15
        assert np.linalg.norm(v) == pytest.approx(1.0, abs=1e-12)


def test_repeated_eigenvalues():
    for m in (np.eye(3) * 2.0, np.diag([1.0, 1.0, 5.0]), np.diag([1.0, 5.0, 5.0])):
        lam, v = min_eigenvalue(m)
        assert lam == pytest.approx(np.min(np.diag(m)))
        assert np.linalg.norm(m @ v - lam * v) < 1e-12


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-100, 100), min_size=6, max_size=6))
def test_eigenpair_residual_property(vals):
    a = np.array([[vals[0], vals[1], vals[2]], [vals[1], vals[3], vals[4]], [vals[2], vals[4], vals[5]]])
    lam, vec, evals = min_eigenpairs(a[None])
    norm = max(np.linalg.norm(a), 1e-300)
    assert np.linalg.norm(a @ vec[0] - lam[0] * vec[0]) <= 1e-8 * norm
    assert np.allclose(evals[0], np.linalg.eigvalsh(a), atol=1e-9 * max(1.0, norm))


def test_normals_on_plane():
    rng = np.random.default_rng(13)
    pts = np.column_stack([rng.uniform(-2, 2, (800, 2)), np.zeros(800)])
    n = estimate_normals(PointCloud(pts)).normals
    ang = np.degrees(np.arccos(np.clip(np.abs(n[:, 2]), 0, 1)))
    assert np.max(ang) < 1.0


def test_normals_on_two_perpendicular_planes():
    rng = np.random.default_rng(14)
    a = np.column_stack([rng.uniform(0, 2, (600, 2)), np.zeros(600)])
    b = np.column_stack([np.full(600, -0.5), rng.uniform(0, 2, (600, 2))])
    n = estimate_normals(PointCloud(np.vstack([a, b]))).normals
    ok = ~np.isnan(n[:, 0])
    # points near the fold may mix; the bulk of each plane must be clean
    za = np.degrees(np.arccos(np.clip(np.abs(n[:600][ok[:600]][:, 2]), 0, 1)))
    xb = np.degrees(np.arccos(np.clip(np.abs(n[600:][ok[600:]][:, 0]), 0, 1)))
    assert np.median(za) < 2 and np.median(xb) < 2
    assert np.mean(za < 2) > 0.9 and np.mean(xb < 2) > 0.9


def test_collinear_points_have_no_normals():
    t = np.linspace(0, 1, 50)
    n = estimate_normals(PointCloud(np.column_stack([t, 2 * t, -t]))).normals
    assert np.all(np.isnan(n))


def test_normals_sign_canonical():
    rng = np.random.default_rng(15)
    pts = np.column_stack([np.zeros(300), rng.uniform(0, 1, (300, 2))])
    n = estimate_normals(PointCloud(pts)).normals
    assert np.all(n[:, 0] > 0)


def test_normals_rotation_equivariant():
    rng = np.random.default_rng(16)
    pts = np.column_stack([rng.uniform(-1, 1, (500, 2)), 0.02 * rng.normal(size=500)])
    r = random_rotation(rng)
    n0 = estimate_normals(PointCloud(pts)).normals
    n1 = estimate_normals(PointCloud(pts @ r.T)).normals
    cos = np.abs(np.einsum("ij,ij->i", n0 @ r.T, n1))
    assert np.degrees(np.arccos(np.clip(cos.min(), 0, 1))) < 1.0


def test_chunked_radius_queries_match_single_pass(monkeypatch):
    rng = np.random.default_rng(8)
    pts = rng.uniform(-1, 1, size=(3000, 3))
    cfg = IndexConfig(radius=0.3)
    whole, n_whole = vicinity_covariances(pts, cfg)
    monkeypatch.setattr(spatial, "PAIR_BUDGET", 2000)
    parts, n_parts = vicinity_covariances(pts, cfg)
    assert np.array_equal(n_whole, n_parts)
    assert np.allclose(parts, whole, rtol=1e-12, atol=1e-15)
    for c in rng.choice(3000, 20, replace=False):
        assert n_parts[c] == len(brute_radius(pts, pts[c], 0.3))
