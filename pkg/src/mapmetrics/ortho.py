"""Extraction of points lying on mutually orthogonal surfaces.

Pipeline: per-point normals -> complete-linkage clustering of unsigned
normal directions -> graph over cluster centers whose edges join nearly
co-linear or nearly orthogonal pairs -> maximum clique (ties broken by
member-point count) -> clique clusters merged into at most three direction
groups.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.cluster.hierarchy import fcluster, linkage
from scipy.spatial.distance import squareform

from ._rng import make_rng
from .errors import DegenerateSceneError
from .geometry import PointCloud
from .spatial import IndexConfig, SpatialIndex, canonicalize_normals, estimate_normals


@dataclass(frozen=True)
class ExtractConfig:
    """Extraction parameters.

    ``eps`` is the tolerance on |n_i . n_j|: pairs with |dot| > 1 - eps are
    nearly co-linear, pairs with |dot| < eps nearly orthogonal.
    ``max_points`` caps the returned subset (split evenly over direction
    groups); ``None`` keeps every qualifying point.
    """

    eps: float = 0.0872
    cluster_threshold_deg: float = 10.0
    max_clusters: int = 100
    min_cluster_fraction: float = 0.005
    max_points: int | None = 2000
    max_representatives: int = 2000
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.eps < 0.5:
            raise ValueError("eps must lie in (0, 0.5)")
        if not 0 < self.cluster_threshold_deg < 45:
            raise ValueError("cluster threshold must lie in (0, 45) degrees")
        if self.max_clusters < 1:
            raise ValueError("max_clusters must be positive")
        if self.max_points is not None and self.max_points < 3:
            raise ValueError("max_points must be at least 3")


@dataclass(frozen=True, eq=False)
class NormalCluster:
    center: np.ndarray
    members: np.ndarray

    @property
    def size(self) -> int:
        return len(self.members)


@dataclass(frozen=True, eq=False)
class OrthoSubset:
    """Three direction groups of map-point indices and their orthonormal basis.

    ``basis[k]`` is the direction of ``groups[k]``. Missing directions have
    empty groups (and an arbitrary completing basis vector); ``degraded`` is
    set whenever fewer than three groups are populated.
    """

    basis: np.ndarray
    groups: tuple
    degraded: bool
    n_input: int = 0
    n_candidates: int = 0
    n_clusters: int = 0
    clique: tuple = field(default=())

    @property
    def size(self) -> int:
        return int(sum(len(g) for g in self.groups))

    @property
    def n_directions(self) -> int:
        return sum(1 for g in self.groups if len(g))

    @property
    def indices(self) -> np.ndarray:
        return np.sort(np.concatenate([np.asarray(g, dtype=np.intp) for g in self.groups]))

    def labels(self, n: int) -> np.ndarray:
        """Per-point group label for a cloud of ``n`` points (-1 = not in subset)."""
        lab = np.full(n, -1, dtype=np.intp)
        for k, g in enumerate(self.groups):
            lab[np.asarray(g, dtype=np.intp)] = k
        return lab


def _principal_axis(scatter: np.ndarray) -> np.ndarray:
    _, u = np.linalg.eigh(scatter)
    v = u[:, -1]
    return canonicalize_normals(v[None])[0]


def _angular_distances(dirs: np.ndarray) -> np.ndarray:
    dots = np.clip(np.abs(dirs @ dirs.T), 0.0, 1.0)
    d = np.arccos(dots)
    np.fill_diagonal(d, 0.0)
    return squareform(d, checks=False)


def _representatives(normals: np.ndarray, limit: int):
    """Collapse near-identical normals into grid bins when there are too many."""
    if len(normals) <= limit:
        return normals, np.arange(len(normals))
    step = 0.01
    while True:
        keys = np.round(normals / step).astype(np.int64)
        uniq, inv = np.unique(keys, axis=0, return_inverse=True)
        inv = inv.ravel()
        if len(uniq) <= limit:
            break
        step *= 1.5
    sums = np.stack([np.bincount(inv, weights=normals[:, a], minlength=len(uniq)) for a in range(3)], axis=1)
    reps = sums / np.linalg.norm(sums, axis=1, keepdims=True)
    return reps, inv


def _cut(reps: np.ndarray, cfg: ExtractConfig) -> np.ndarray:
    if len(reps) == 1:
        return np.zeros(1, dtype=np.intp)
    z = linkage(_angular_distances(reps), method="complete")
    threshold = np.deg2rad(cfg.cluster_threshold_deg)
    limit = np.deg2rad(45.0)
    while True:
        labels = fcluster(z, t=threshold, criterion="distance")
        if labels.max() <= cfg.max_clusters or threshold >= limit:
            return labels - 1
        threshold = min(threshold * 1.25, limit)


def cluster_normals(cloud: PointCloud, cfg: ExtractConfig | None = None) -> list[NormalCluster]:
    """Complete-linkage clusters of unsigned normals (largest first).

    Distance between normals is arccos|n_i . n_j|; the dendrogram is cut at
    ``cfg.cluster_threshold_deg`` (raised when more than ``max_clusters``
    clusters would result). A cluster center is the principal eigenvector of
    the members' summed outer products.
    """
    cfg = cfg or ExtractConfig()
    if cloud.normals is None:
        raise DegenerateSceneError("cloud has no normals")
    valid = np.flatnonzero(cloud.has_normal)
    if len(valid) == 0:
        raise DegenerateSceneError("cloud has no usable normals")
    normals = canonicalize_normals(cloud.normals[valid])
    reps, inv = _representatives(normals, cfg.max_representatives)
    labels = _cut(reps, cfg)[inv]

    n_lab = labels.max() + 1
    scatter = np.zeros((n_lab, 3, 3))
    np.add.at(scatter, labels, normals[:, :, None] * normals[:, None, :])
    clusters = []
    for lab in range(n_lab):
        members = valid[labels == lab]
        if len(members):
            clusters.append(NormalCluster(_principal_axis(scatter[lab]), members))
    clusters.sort(key=lambda c: (-c.size, int(c.members[0])))
    return clusters


def build_orthogonality_graph(clusters, cfg: ExtractConfig | None = None) -> np.ndarray:
    """Boolean adjacency: |c_i . c_j| > 1 - eps (co-linear) or < eps (orthogonal)."""
    cfg = cfg or ExtractConfig()
    centers = np.array([c.center if isinstance(c, NormalCluster) else c for c in clusters], dtype=float)
    if len(centers) == 0:
        raise ValueError("graph needs at least one cluster")
    dots = np.abs(centers @ centers.T)
    adj = (dots > 1.0 - cfg.eps) | (dots < cfg.eps)
    np.fill_diagonal(adj, False)
    return adj


def max_clique(adj: np.ndarray, weights=None) -> list[int]:
    """Exact maximum clique, ties broken by total vertex weight.

    Bron-Kerbosch with Tomita pivoting over integer bitsets, pruned by the
    (size, weight) bound of the candidate set. Remaining ties go to the
    lexicographically smallest vertex list.
    """
    adj = np.asarray(adj, dtype=bool)
    n = len(adj)
    if n == 0:
        return []
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    nbrs = [0] * n
    for i in range(n):
        for j in np.flatnonzero(adj[i]):
            if j != i:
                nbrs[i] |= 1 << int(j)

    def bits(mask):
        while mask:
            low = mask & -mask
            yield low.bit_length() - 1
            mask ^= low

    best = [0, -np.inf, ()]

    def better(size, weight, verts):
        if size != best[0]:
            return size > best[0]
        if weight != best[1]:
            return weight > best[1]
        return verts < best[2]

    def expand(r, r_w, p, x):
        if p == 0:
            if x == 0:
                verts = tuple(sorted(r))
                if better(len(r), r_w, verts):
                    best[:] = [len(r), r_w, verts]
            return
        bound = len(r) + bin(p).count("1")
        if bound < best[0]:
            return
        if bound == best[0] and r_w + sum(w[v] for v in bits(p)) < best[1]:
            return
        pivot = max(bits(p | x), key=lambda u: bin(p & nbrs[u]).count("1"))
        for v in list(bits(p & ~nbrs[pivot])):
            expand(r + [v], r_w + w[v], p & nbrs[v], x & nbrs[v])
            p &= ~(1 << v)
            x |= 1 << v

    expand([], 0.0, (1 << n) - 1, 0)
    return list(best[2])


def _direction_groups(clique: list[int], adj_colinear: np.ndarray) -> list[list[int]]:
    groups: list[list[int]] = []
    seen = set()
    for v in clique:
        if v in seen:
            continue
        comp, stack = [], [v]
        seen.add(v)
        while stack:
            u = stack.pop()
            comp.append(u)
            for t in clique:
                if t not in seen and adj_colinear[u, t]:
                    seen.add(t)
                    stack.append(t)
        groups.append(sorted(comp))
    return groups


def _orthonormal_basis(dirs: np.ndarray) -> np.ndarray:
    """Nearest orthonormal rows to ``dirs`` (polar factor), completed to 3."""
    k = len(dirs)
    u, _, vt = np.linalg.svd(dirs, full_matrices=False)
    q = u @ vt
    if k == 3:
        return q
    if k == 2:
        return np.vstack([q, np.cross(q[0], q[1])])
    a = q[0]
    helper = np.eye(3)[np.argmin(np.abs(a))]
    b = np.cross(a, helper)
    b /= np.linalg.norm(b)
    return np.vstack([a, b, np.cross(a, b)])


def extract_orthogonal_subset(
    cloud: PointCloud,
    cfg: ExtractConfig | None = None,
    idx_cfg: IndexConfig | None = None,
    index: SpatialIndex | None = None,
) -> OrthoSubset:
    """Indices of points on mutually orthogonal surfaces, grouped by direction.

    Normals are estimated with ``idx_cfg`` (kNN 30 by default) unless the
    cloud already carries them. Groups are ordered by candidate count.
    """
    cfg = cfg or ExtractConfig()
    if len(cloud) == 0:
        raise DegenerateSceneError("empty cloud")
    if cloud.normals is None:
        if len(cloud) < 4:
            raise DegenerateSceneError("too few points to estimate normals")
        cloud = estimate_normals(cloud, idx_cfg or IndexConfig.for_normals(), index=index)
    clusters = cluster_normals(cloud, cfg)

    n_valid = sum(c.size for c in clusters)
    min_size = max(1, int(np.ceil(cfg.min_cluster_fraction * n_valid)))
    kept = [c for c in clusters if c.size >= min_size] or clusters[:1]

    adj = build_orthogonality_graph(kept, cfg)
    weights = np.array([c.size for c in kept], dtype=float)
    clique = max_clique(adj, weights)

    centers = np.array([c.center for c in kept])
    colinear = np.abs(centers @ centers.T) > 1.0 - cfg.eps
    groups = _direction_groups(clique, colinear)

    normals = cloud.normals
    dirs, members = [], []
    for grp in groups:
        idx = np.concatenate([kept[v].members for v in grp])
        nrm = normals[idx]
        dirs.append(_principal_axis(nrm.T @ nrm))
        members.append(idx)
    # more than three mutually orthogonal groups cannot occur for eps < 0.5,
    # but keep the three largest defensively
    order = sorted(range(len(groups)), key=lambda k: -len(members[k]))[:3]
    dirs = np.array([dirs[k] for k in order])
    members = [members[k] for k in order]
    basis = _orthonormal_basis(dirs)

    out = []
    n_candidates = 0
    budget = None
    if cfg.max_points is not None:
        budget = cfg.max_points // len(members)
    for k, idx in enumerate(members):
        keep = np.abs(normals[idx] @ basis[k]) > 1.0 - cfg.eps
        idx = np.sort(idx[keep])
        n_candidates += len(idx)
        if budget is not None and len(idx) > budget:
            rng = make_rng(cfg.seed, "subset", k)
            idx = np.sort(rng.choice(idx, size=budget, replace=False))
        out.append(idx)
    while len(out) < 3:
        out.append(np.empty(0, dtype=np.intp))

    return OrthoSubset(
        basis=basis,
        groups=tuple(out),
        degraded=len(members) < 3,
        n_input=len(cloud),
        n_candidates=n_candidates,
        n_clusters=len(clusters),
        clique=tuple(clique),
    )


def extract_per_scan(clouds, cfg: ExtractConfig | None = None,
                     idx_cfg: IndexConfig | None = None) -> list[OrthoSubset | None]:
    """Extraction on every sensor-frame scan; ``None`` where a scan has no structure."""
    out = []
    for cloud in clouds:
        try:
            out.append(extract_orthogonal_subset(cloud, cfg, idx_cfg))
        except DegenerateSceneError:
            out.append(None)
    return out


def merge_scan_subsets(subsets, sizes, trajectory, eps: float = ExtractConfig.eps) -> OrthoSubset:
    """One subset of the aggregated map from per-scan subsets.

    Scan ``i``'s indices are offset by the sizes of the scans before it, the
    order ``aggregate_map`` concatenates in. Each scan's group directions are
    rotated into the map frame by its pose and matched (|dot| > 1 - eps) to
    the directions seen so far; a direction orthogonal to all of them opens a
    new group, anything else is dropped.
    """
    if not (len(subsets) == len(sizes) == len(trajectory)):
        raise ValueError("subsets, sizes and trajectory must align")
    offsets = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(np.intp)
    dirs: list[np.ndarray] = []
    members: list[list[np.ndarray]] = []
    for sub, off, pose in zip(subsets, offsets, trajectory):
        if sub is None:
            continue
        world = sub.basis @ pose.rotation.T
        for k, g in enumerate(sub.groups):
            if len(g) == 0:
                continue
            dots = np.array([abs(float(world[k] @ d)) for d in dirs])
            if len(dirs) and dots.max() > 1.0 - eps:
                members[int(np.argmax(dots))].append(np.asarray(g, dtype=np.intp) + off)
            elif len(dirs) < 3 and (len(dirs) == 0 or dots.max() < eps):
                dirs.append(world[k])
                members.append([np.asarray(g, dtype=np.intp) + off])
    if not dirs:
        raise DegenerateSceneError("no scan has orthogonal structure")
    groups = [np.sort(np.concatenate(m)) for m in members]
    while len(groups) < 3:
        groups.append(np.empty(0, dtype=np.intp))
    return OrthoSubset(
        basis=_orthonormal_basis(np.array(dirs)),
        groups=tuple(groups),
        degraded=len(dirs) < 3,
        n_input=int(np.sum(sizes)),
        n_candidates=sum(s.n_candidates for s in subsets if s is not None),
    )
