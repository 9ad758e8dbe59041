"""Neighbor queries, vicinity covariances and normal estimation.

Vicinities are either all map points within a radius of the center (the
center included) or its k nearest neighbors. Covariances are unbiased
(divide by n - 1) and computed two-pass so that exactly planar vicinities
give exactly zero spread along the normal.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import DegenerateVicinityError
from .geometry import PointCloud

LINEARITY_RATIO = 1e-6


@dataclass(frozen=True)
class IndexConfig:
    mode: str = "radius"
    radius: float = 0.5
    k: int = 30
    min_points: int = 4

    def __post_init__(self):
        if self.mode not in ("radius", "knn"):
            raise ValueError(f"unknown query mode {self.mode!r}")
        if not self.radius > 0:
            raise ValueError("radius must be positive")
        if self.k < 4:
            raise ValueError("k must be at least 4")
        if self.min_points < 2:
            raise ValueError("min_points must be at least 2")

    @classmethod
    def for_normals(cls, k: int = 30) -> "IndexConfig":
        return cls(mode="knn", k=k)


@dataclass(frozen=True)
class Vicinity:
    center: int
    neighbors: np.ndarray

    def __len__(self):
        return len(self.neighbors)


class SpatialIndex:
    """Exact radius / kNN queries over a fixed point set (immutable)."""

    def __init__(self, points: np.ndarray | PointCloud):
        if isinstance(points, PointCloud):
            points = points.points
        self.points = np.asarray(points, dtype=float).reshape(-1, 3)
        if len(self.points) == 0:
            raise ValueError("cannot index an empty cloud")
        self.tree = cKDTree(self.points)

    def __len__(self):
        return len(self.points)

    def query_radius(self, point, radius: float) -> np.ndarray:
        idx = self.tree.query_ball_point(np.asarray(point, dtype=float), radius)
        return np.array(sorted(idx), dtype=np.intp)

    def query_knn(self, point, k: int) -> np.ndarray:
        k = min(k, len(self.points))
        _, idx = self.tree.query(np.asarray(point, dtype=float), k=k)
        return np.atleast_1d(idx).astype(np.intp)

    def vicinity(self, center: int, cfg: IndexConfig) -> Vicinity:
        p = self.points[center]
        if cfg.mode == "radius":
            nb = self.query_radius(p, cfg.radius)
        else:
            nb = self.query_knn(p, cfg.k)
        return Vicinity(int(center), nb)


def build_index(cloud: PointCloud) -> SpatialIndex:
    return SpatialIndex(cloud)


def covariance(points: np.ndarray) -> np.ndarray:
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(pts) < 2:
        raise DegenerateVicinityError(f"covariance needs >= 2 points, got {len(pts)}")
    d = pts - pts.mean(axis=0)
    c = d.T @ d / (len(pts) - 1)
    return (c + c.T) / 2


def sample_covariance(cloud: PointCloud, vicinity: Vicinity) -> np.ndarray:
    return covariance(cloud.points[vicinity.neighbors])


# neighbor pairs held in memory at once by radius vicinity queries
PAIR_BUDGET = 4_000_000


def _radius_covariances(x: np.ndarray, rows: np.ndarray, nb: np.ndarray, m: int):
    """Two-pass covariances from (row, neighbor) incidence lists."""
    counts = np.bincount(rows, minlength=m)
    xn = x[nb]
    mean = np.stack([np.bincount(rows, weights=xn[:, a], minlength=m) for a in range(3)], axis=1)
    mean /= counts[:, None]
    d = xn - mean[rows]
    covs = np.empty((m, 3, 3))
    with np.errstate(invalid="ignore", divide="ignore"):
        denom = (counts - 1).astype(float)
        for a in range(3):
            for b in range(a, 3):
                v = np.bincount(rows, weights=d[:, a] * d[:, b], minlength=m) / denom
                covs[:, a, b] = v
                covs[:, b, a] = v
    return covs, counts


def _spatial_order(x: np.ndarray, cell: float) -> np.ndarray:
    keys = np.floor((x - x.min(axis=0)) / cell).astype(np.int64)
    return np.lexsort((keys[:, 2], keys[:, 1], keys[:, 0]))


def vicinity_covariances(
    points: np.ndarray | PointCloud,
    cfg: IndexConfig,
    centers: np.ndarray | None = None,
    index: SpatialIndex | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Covariance of every center's vicinity.

    Returns ``(covs, counts)``: an (m, 3, 3) array and the vicinity sizes.
    Vicinities with fewer than two points get NaN covariances.
    """
    if index is None:
        index = SpatialIndex(points)
    x = index.points
    if centers is None:
        centers = np.arange(len(x))
    centers = np.asarray(centers, dtype=np.intp)
    m = len(centers)
    if m == 0:
        return np.empty((0, 3, 3)), np.empty(0, dtype=np.intp)

    if cfg.mode == "knn":
        k = min(cfg.k, len(x))
        _, idx = index.tree.query(x[centers], k=k)
        idx = idx.reshape(m, k)
        nbp = x[idx]
        d = nbp - nbp.mean(axis=1, keepdims=True)
        counts = np.full(m, k, dtype=np.intp)
        with np.errstate(invalid="ignore", divide="ignore"):
            covs = np.einsum("nki,nkj->nij", d, d) / (k - 1)
        return covs, counts

    # chunks of spatially adjacent centers, each queried against the full
    # tree, keep the pair lists near PAIR_BUDGET
    probe = x[centers[:: max(1, m // 64)]]
    per_center = max(1.0, float(np.mean(index.tree.query_ball_point(probe, cfg.radius, return_length=True))))
    chunk = int(np.clip(PAIR_BUDGET / per_center, 64, m))
    order = np.arange(m) if chunk >= m else _spatial_order(x[centers], cfg.radius)
    covs = np.empty((m, 3, 3))
    counts = np.empty(m, dtype=np.intp)
    for lo in range(0, m, chunk):
        pos = order[lo:lo + chunk]
        pairs = cKDTree(x[centers[pos]]).sparse_distance_matrix(index.tree, cfg.radius, output_type="ndarray")
        covs[pos], counts[pos] = _radius_covariances(
            x, pairs["i"].astype(np.intp), pairs["j"].astype(np.intp), len(pos))
    covs[counts < 2] = np.nan
    return covs, counts


def symmetric_eigenvalues(m: np.ndarray) -> np.ndarray:
    """Eigenvalues of symmetric 3x3 matrices, ascending, closed form.

    Uses the trigonometric solution of the characteristic cubic; works on a
    single (3, 3) matrix or a stack (..., 3, 3).
    """
    a = np.asarray(m, dtype=float)
    a00, a11, a22 = a[..., 0, 0], a[..., 1, 1], a[..., 2, 2]
    a01, a02, a12 = a[..., 0, 1], a[..., 0, 2], a[..., 1, 2]
    q = (a00 + a11 + a22) / 3.0
    b00, b11, b22 = a00 - q, a11 - q, a22 - q
    p1 = a01 * a01 + a02 * a02 + a12 * a12
    p = np.sqrt((b00 * b00 + b11 * b11 + b22 * b22 + 2.0 * p1) / 6.0)
    det_b = (
        b00 * (b11 * b22 - a12 * a12)
        - a01 * (a01 * b22 - a12 * a02)
        + a02 * (a01 * a12 - b11 * a02)
    )
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.where(p > 0, det_b / (2.0 * p**3), 0.0)
    phi = np.arccos(np.clip(r, -1.0, 1.0)) / 3.0
    hi = q + 2.0 * p * np.cos(phi)
    lo = q + 2.0 * p * np.cos(phi + 2.0 * np.pi / 3.0)
    mid = 3.0 * q - hi - lo
    out = np.sort(np.stack([lo, mid, hi], axis=-1), axis=-1)
    # arccos amplifies rounding in r to ~sqrt(eps) near +-1 (two equal
    # eigenvalues); hand those rows to LAPACK
    near = (np.abs(r) > 1.0 - 1e-8) & np.isfinite(r) & (p > 0)
    if np.any(near):
        out[near] = np.linalg.eigvalsh(a[near])
    return out


def _null_vectors(a: np.ndarray) -> np.ndarray:
    """Unit vectors v with a @ v ~ 0 for a stack of (near-)singular 3x3 a."""
    r0, r1, r2 = a[:, 0], a[:, 1], a[:, 2]
    c = np.stack([np.cross(r0, r1), np.cross(r0, r2), np.cross(r1, r2)], axis=1)
    cn = np.einsum("nij,nij->ni", c, c)
    best = np.argmax(cn, axis=1)
    rows = np.arange(len(a))
    v = c[rows, best]
    vn = np.sqrt(cn[rows, best])
    scale = np.max(np.abs(a), axis=(1, 2))
    rank_low = vn <= 1e-14 * np.maximum(scale, 1e-300) ** 2
    with np.errstate(invalid="ignore", divide="ignore"):
        v = v / vn[:, None]
    if np.any(rank_low):
        # eigenvalue of multiplicity >= 2: any vector orthogonal to the
        # dominant row lies in the eigenspace
        for n in np.flatnonzero(rank_low):
            rn = np.linalg.norm(a[n], axis=1)
            row = a[n][np.argmax(rn)]
            if np.max(rn) == 0:
                v[n] = (1.0, 0.0, 0.0)
                continue
            axis = np.eye(3)[np.argmin(np.abs(row))]
            w = np.cross(row, axis)
            v[n] = w / np.linalg.norm(w)
    return v


def min_eigenpairs(m: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Batched ``(lambda_min, eigvec_min, all_eigenvalues)`` for (n, 3, 3) input."""
    a = np.asarray(m, dtype=float).reshape(-1, 3, 3)
    evals = symmetric_eigenvalues(a)
    lam = evals[:, 0]
    shifted = a - lam[:, None, None] * np.eye(3)
    vec = _null_vectors(shifted)
    # cross products lose accuracy when the two smallest eigenvalues nearly
    # coincide; re-solve those few with LAPACK
    scale = np.maximum(np.max(np.abs(a), axis=(1, 2)), 1e-300)
    resid = np.linalg.norm(np.einsum("nij,nj->ni", shifted, vec), axis=1)
    bad = ~(resid <= 1e-10 * scale) & np.all(np.isfinite(a), axis=(1, 2))
    if np.any(bad):
        w, u = np.linalg.eigh(a[bad])
        evals[bad] = w
        lam[bad] = w[:, 0]
        vec[bad] = u[:, :, 0]
    return lam, vec, evals


def min_eigenvalue(m: np.ndarray) -> tuple[float, np.ndarray]:
    """Smallest eigenvalue and a unit eigenvector of a symmetric 3x3 matrix.

    Tiny negative round-off (>= -1e-12 relative to the matrix scale) is
    clamped to zero.
    """
    a = np.asarray(m, dtype=float)
    if a.shape != (3, 3):
        raise ValueError(f"expected a 3x3 matrix, got shape {a.shape}")
    scale = max(1.0, float(np.max(np.abs(a))))
    if np.max(np.abs(a - a.T)) > 1e-9 * scale:
        raise ValueError("matrix is not symmetric")
    a = (a + a.T) / 2
    lam, vec, _ = min_eigenpairs(a[None])
    value = float(lam[0])
    if -1e-12 * scale <= value < 0:
        value = 0.0
    return value, vec[0]


def canonicalize_normals(normals: np.ndarray) -> np.ndarray:
    """Flip each normal so its largest-magnitude component is positive."""
    n = np.array(normals, dtype=float)
    ok = ~np.isnan(n[:, 0])
    big = np.argmax(np.abs(n[ok]), axis=1)
    sign = np.sign(n[ok][np.arange(ok.sum()), big])
    sign[sign == 0] = 1.0
    n[ok] *= sign[:, None]
    return n


def estimate_normals(cloud: PointCloud, cfg: IndexConfig | None = None,
                     index: SpatialIndex | None = None) -> PointCloud:
    """PCA normals: eigenvector of the smallest vicinity eigenvalue.

    Points whose vicinity has fewer than ``max(4, cfg.min_points)`` points or
    is near-linear (lambda_mid / lambda_max < 1e-6) get no normal (NaN row).
    Normals are unsigned lines, canonicalized by ``canonicalize_normals``.
    """
    if cfg is None:
        cfg = IndexConfig.for_normals()
    if len(cloud) < 4:
        raise ValueError("normal estimation needs at least 4 points")
    covs, counts = vicinity_covariances(cloud, cfg, index=index)
    normals = np.full((len(cloud), 3), np.nan)
    ok = counts >= max(4, cfg.min_points)
    if np.any(ok):
        _, vec, evals = min_eigenpairs(covs[ok])
        with np.errstate(invalid="ignore", divide="ignore"):
            planar = evals[:, 1] > LINEARITY_RATIO * evals[:, 2]
        vec[~planar] = np.nan
        normals[ok] = vec
    return PointCloud(cloud.points, canonicalize_normals(normals))
