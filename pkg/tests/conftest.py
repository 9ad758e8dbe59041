import numpy as np
import pytest

from mapmetrics.geometry import PoseSE3


def random_rotation(rng):
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def random_pose(rng, scale=5.0):
    return PoseSE3(random_rotation(rng), rng.normal(scale=scale, size=3))


# criterion number -> (passed, summary line), filled by test_acceptance
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n][1])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def labeled_ortho_scene(rng, distractor=True, n_per_plane=1500, noise=0.0, rotate=True):
    """Three mutually orthogonal square patches (labels 0-2), optionally a
    fourth patch at 45 degrees to two of them (label 3) with fewer points.
    Patches are separated so no kNN vicinity straddles two of them."""
    specs = [
        (np.array([1.0, 0, 0]), np.array([4.0, 0, 0]), n_per_plane),
        (np.array([0, 1.0, 0]), np.array([0, 4.0, 0]), n_per_plane),
        (np.array([0, 0, 1.0]), np.array([0, 0, 4.0]), n_per_plane),
    ]
    if distractor:
        specs.append((np.array([1.0, 1.0, 0]) / np.sqrt(2), np.array([-4.0, -4.0, 0]), n_per_plane // 2))
    pts, labels = [], []
    for lab, (normal, center, m) in enumerate(specs):
        helper = np.eye(3)[np.argmin(np.abs(normal))]
        u = np.cross(normal, helper)
        u /= np.linalg.norm(u)
        v = np.cross(normal, u)
        st = rng.uniform(-1.0, 1.0, size=(m, 2))
        p = center + st[:, :1] * u + st[:, 1:] * v
        if noise:
            p = p + rng.normal(scale=noise, size=(m, 1)) * normal
        pts.append(p)
        labels.append(np.full(m, lab))
    pts = np.vstack(pts)
    rot = random_rotation(rng) if rotate else np.eye(3)
    return pts @ rot.T, np.concatenate(labels), rot


def brute_force_max_clique(adj, weights):
    """Best (size, weight) over every vertex subset, by bitmask doubling."""
    n = len(adj)
    nbr = [sum(1 << j for j in range(n) if adj[i][j]) for i in range(n)]
    total = 1 << n
    masks = np.arange(total, dtype=np.int64)
    ok = np.zeros(total, dtype=bool)
    ok[0] = True
    wsum = np.zeros(total)
    size = np.zeros(total, dtype=np.int64)
    for b in range(n):
        lo, hi = 1 << b, 1 << (b + 1)
        rest = masks[lo:hi] - lo
        ok[lo:hi] = ok[rest] & ((rest & nbr[b]) == rest)
        wsum[lo:hi] = wsum[rest] + weights[b]
        size[lo:hi] = size[rest] + 1
    best_size = size[ok].max()
    best_weight = wsum[ok & (size == best_size)].max()
    return int(best_size), float(best_weight)
