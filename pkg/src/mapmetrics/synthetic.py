"""Synthetic plane worlds, per-pose rendering and trajectory perturbation.

A plane world holds the three axis planes plus 0-7 randomly oriented
planes. For every pose each plane is sampled uniformly inside the disk of
radius 1 m centered at the projection of the pose position onto the plane;
the expected count is ``density * pi * r^2`` and the sampled points are
returned in the sensor frame of that pose.

Environment files use an INI layout::

    [env]
    seed = 7
    disk_radius = 1.0

    [plane.0]
    normal = 1.0, 0.0, 0.0
    displacement = -4.5, 2.0, 7.25
    density = 63.1
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._rng import make_rng
from .geometry import PointCloud, PoseSE3, Trajectory, inverse

AXES = np.eye(3)
DENSITY_RANGE = (30.0, 100.0)
DISPLACEMENT_RANGE = (-10.0, 10.0)
# pose spacing (m) of the default straight trajectory; at 1 m consecutive
# 1 m sampling disks barely overlap and dense plane worlds rarely fit
POSE_SPACING = 0.05


@dataclass(frozen=True, eq=False)
class PlaneSpec:
    normal: np.ndarray
    displacement: np.ndarray
    density: float

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=float).reshape(3)
        d = np.asarray(self.displacement, dtype=float).reshape(3)
        if abs(np.linalg.norm(n) - 1.0) > 1e-9:
            raise ValueError("plane normal must be a unit vector")
        if not DENSITY_RANGE[0] <= self.density <= DENSITY_RANGE[1]:
            raise ValueError(f"density {self.density} outside {DENSITY_RANGE}")
        if np.any(d < DISPLACEMENT_RANGE[0]) or np.any(d > DISPLACEMENT_RANGE[1]):
            raise ValueError(f"displacement {d} outside {DISPLACEMENT_RANGE}")
        object.__setattr__(self, "normal", n)
        object.__setattr__(self, "displacement", d)
        object.__setattr__(self, "density", float(self.density))

    def project(self, p: np.ndarray) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        return p - np.outer(p @ self.normal - self.normal @ self.displacement, self.normal).reshape(p.shape)

    def in_plane_basis(self) -> tuple[np.ndarray, np.ndarray]:
        n = self.normal
        helper = AXES[np.argmin(np.abs(n))]
        u = np.cross(n, helper)
        u /= np.linalg.norm(u)
        return u, np.cross(n, u)


@dataclass(frozen=True, eq=False)
class EnvSpec:
    planes: tuple
    seed: int = 0
    disk_radius: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "planes", tuple(self.planes))
        if not self.planes:
            raise ValueError("environment needs at least one plane")

    def __eq__(self, other):
        if not isinstance(other, EnvSpec):
            return NotImplemented
        return self.to_config() == other.to_config()

    @property
    def n_extra(self) -> int:
        return len(self.planes) - 3

    def to_config(self) -> str:
        cp = configparser.ConfigParser()
        cp["env"] = {"seed": str(self.seed), "disk_radius": repr(self.disk_radius)}
        for k, pl in enumerate(self.planes):
            cp[f"plane.{k}"] = {
                "normal": ", ".join(repr(float(v)) for v in pl.normal),
                "displacement": ", ".join(repr(float(v)) for v in pl.displacement),
                "density": repr(pl.density),
            }
        lines = []
        for sec in cp.sections():
            lines.append(f"[{sec}]")
            lines.extend(f"{k} = {v}" for k, v in cp[sec].items())
            lines.append("")
        return "\n".join(lines)

    @classmethod
    def from_config(cls, text: str) -> "EnvSpec":
        cp = configparser.ConfigParser()
        cp.read_string(text)
        planes = []
        names = sorted((s for s in cp.sections() if s.startswith("plane.")), key=lambda s: int(s.split(".")[1]))
        for s in names:
            sec = cp[s]
            planes.append(PlaneSpec(
                normal=_floats(sec["normal"]),
                displacement=_floats(sec["displacement"]),
                density=float(sec["density"]),
            ))
        env = cp["env"] if cp.has_section("env") else {}
        return cls(tuple(planes), int(env.get("seed", 0)), float(env.get("disk_radius", 1.0)))

    def save(self, path) -> None:
        Path(path).write_text(self.to_config())

    @classmethod
    def load(cls, path) -> "EnvSpec":
        return cls.from_config(Path(path).read_text())


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.replace(",", " ").split()]


@dataclass(frozen=True)
class PerturbSpec:
    """Gaussian pose noise.

    ``translation_sigma`` is a scalar or a per-axis triple (meters);
    ``rotation_sigma`` is the std of the rotation angle (radians) about a
    uniformly random axis; set it to 0 for rotation-free plane-world runs.
    """

    translation_sigma: float | tuple = 0.05
    rotation_sigma: float = float(np.deg2rad(0.5))
    seed: int = 0

    def __post_init__(self):
        s = np.broadcast_to(np.asarray(self.translation_sigma, dtype=float), (3,))
        if np.any(s < 0) or self.rotation_sigma < 0:
            raise ValueError("perturbation sigmas must be non-negative")


def straight_trajectory(n: int, spacing: float = 1.0, direction=(1.0, 0.0, 0.0), start=(0.0, 0.0, 0.0)) -> Trajectory:
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    t = np.asarray(start, dtype=float) + spacing * np.arange(n)[:, None] * d
    return Trajectory.from_translations(t)


def sample_plane_normal(rng: np.random.Generator) -> np.ndarray:
    theta = rng.uniform(0.0, 2.0 * np.pi)
    phi = rng.uniform(0.0, np.pi)
    return np.array([np.sin(phi) * np.cos(theta), np.sin(phi) * np.sin(theta), np.cos(phi)])


def _disks_clear(a: PlaneSpec, b: PlaneSpec, positions: np.ndarray, radius: float, margin: float) -> bool:
    """True when every sampling disk of ``a`` stays ``margin`` away from plane ``b``."""
    centers = a.project(positions)
    reach = radius * np.sqrt(max(0.0, 1.0 - float(a.normal @ b.normal) ** 2))
    gap = np.abs((centers - b.displacement) @ b.normal) - reach
    return bool(np.all(gap > margin))


def sample_env(
    seed: int,
    positions: np.ndarray | None = None,
    n_extra: int | None = None,
    margin: float = 0.5,
    disk_radius: float = 1.0,
    max_attempts: int = 10_000,
    restart_after: int = 200,
) -> EnvSpec:
    """Random plane world: three axis planes plus ``n_extra`` (0-7) random ones.

    Displacements are re-drawn until no two planes come within ``margin`` of
    each other inside any sampling disk around ``positions`` (default: the
    30-pose straight trajectory at ``POSE_SPACING``). Placement is greedy; when one plane fails
    ``restart_after`` times in a row all displacements are re-drawn.
    """
    rng = make_rng(seed, "env")
    if positions is None:
        positions = straight_trajectory(30, POSE_SPACING).translations
    positions = np.atleast_2d(np.asarray(positions, dtype=float))
    if n_extra is None:
        n_extra = int(rng.integers(0, 8))
    if not 0 <= n_extra <= 7:
        raise ValueError("extra plane count must lie in [0, 7]")
    normals = [AXES[0], AXES[1], AXES[2]] + [sample_plane_normal(rng) for _ in range(n_extra)]
    densities = rng.uniform(*DENSITY_RANGE, size=len(normals))

    attempts = 0
    while True:
        planes = _place(normals, densities, positions, disk_radius, margin, rng, restart_after)
        attempts += len(planes[1])
        if planes[0] is not None or attempts >= max_attempts:
            break
    if planes[0] is None:
        raise ValueError(f"could not place {len(normals)} non-intersecting planes "
                         f"in {max_attempts} attempts (over-constrained)")
    planes = planes[0]
    return EnvSpec(tuple(planes), seed, disk_radius)


def _place(normals, densities, positions, radius, margin, rng, restart_after):
    planes: list[PlaneSpec] = []
    tries = []
    for n, dens in zip(normals, densities):
        for _ in range(restart_after):
            tries.append(1)
            cand = PlaneSpec(n, rng.uniform(*DISPLACEMENT_RANGE, size=3), dens)
            if all(_disks_clear(cand, p, positions, radius, margin)
                   and _disks_clear(p, cand, positions, radius, margin) for p in planes):
                planes.append(cand)
                break
        else:
            return None, tries
    return planes, tries


def expected_count(plane: PlaneSpec, disk_radius: float = 1.0) -> int:
    return int(round(plane.density * np.pi * disk_radius**2))


def render_pose(env: EnvSpec, pose: PoseSE3, seed: int, index: int = 0, with_labels: bool = False):
    """Sample every plane around ``pose`` and return the sensor-frame cloud.

    The RNG stream is keyed by ``(seed, index)``, so rendering a trajectory
    pose by pose gives the same clouds in any order. With ``with_labels``
    a per-point plane index array is returned too.
    """
    rng = make_rng(seed, "render", index)
    chunks, labels = [], []
    for k, plane in enumerate(env.planes):
        m = expected_count(plane, env.disk_radius)
        center = plane.project(pose.translation)
        u, v = plane.in_plane_basis()
        r = env.disk_radius * np.sqrt(rng.uniform(size=m))
        a = rng.uniform(0.0, 2.0 * np.pi, size=m)
        pts = center + (r * np.cos(a))[:, None] * u + (r * np.sin(a))[:, None] * v
        chunks.append(pts)
        labels.append(np.full(m, k, dtype=np.intp))
    world = np.concatenate(chunks) if chunks else np.empty((0, 3))
    cloud = PointCloud(inverse(pose).apply(world))
    if with_labels:
        return cloud, np.concatenate(labels)
    return cloud


def render_trajectory(env: EnvSpec, trajectory: Trajectory, seed: int, with_labels: bool = False):
    out = [render_pose(env, p, seed, index=i, with_labels=with_labels) for i, p in enumerate(trajectory)]
    if with_labels:
        return [c for c, _ in out], [lab for _, lab in out]
    return out


def _axis_angle(axis: np.ndarray, angle: float) -> np.ndarray:
    k = np.array([[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]])
    return np.eye(3) + np.sin(angle) * k + (1 - np.cos(angle)) * (k @ k)


def perturb_trajectory(gt: Trajectory, spec: PerturbSpec, *key: int) -> Trajectory:
    """i.i.d. Gaussian noise on every pose; deterministic in ``(spec.seed, key)``."""
    rng = make_rng(spec.seed, "perturb", *key)
    sigma = np.broadcast_to(np.asarray(spec.translation_sigma, dtype=float), (3,))
    noise = rng.normal(size=(len(gt), 3)) * sigma
    poses = []
    for pose, dt in zip(gt, noise):
        r = pose.rotation
        if spec.rotation_sigma > 0:
            axis = rng.normal(size=3)
            axis /= np.linalg.norm(axis)
            r = _axis_angle(axis, rng.normal() * spec.rotation_sigma) @ r
        poses.append(PoseSE3(r, pose.translation + dt))
    return Trajectory(poses)


def axis_planes_env(displacements=((-3.0, 0.0, 0.0), (0.0, -3.0, 0.0), (0.0, 0.0, -3.0)),
                    densities=(65.0, 65.0, 65.0), seed: int = 0) -> EnvSpec:
    """The three axis planes alone (balanced by default)."""
    planes = tuple(PlaneSpec(AXES[k], displacements[k], densities[k]) for k in range(3))
    return EnvSpec(planes, seed)


@dataclass(frozen=True, eq=False)
class UrbanScene:
    cloud: PointCloud
    labels: np.ndarray
    label_names: tuple = field(default=("ground", "facade_y", "facade_x", "clutter"))


def urban_canyon(seed: int = 0, n_points: int = 120_000, clutter_fraction: float = 0.15) -> UrbanScene:
    """Street canyon: ground, facades facing +-y, cross-street walls facing x, clutter.

    The street runs along x (60 m long, 16 m wide) between two 12 m facades;
    a side street cuts the north facade and contributes walls normal to x.
    Clutter is made of tree-like Gaussian blobs and parked boxes at random yaw.
    """
    rng = make_rng(seed, "preset")
    surfaces = [
        # (label, origin, edge_u, edge_v)
        (0, (-30, -8, 0), (60, 0, 0), (0, 16, 0)),
        (1, (-30, -8, 0), (60, 0, 0), (0, 0, 12)),
        (1, (-30, 8, 0), (35, 0, 0), (0, 0, 12)),
        (1, (12, 8, 0), (18, 0, 0), (0, 0, 12)),
        (2, (5, 8, 0), (0, 14, 0), (0, 0, 12)),
        (2, (12, 8, 0), (0, 14, 0), (0, 0, 12)),
        (0, (5, 8, 0), (7, 0, 0), (0, 14, 0)),
        (2, (-30, -8, 0), (0, 16, 0), (0, 0, 12)),
    ]
    areas = np.array([np.linalg.norm(np.cross(u, v)) for _, _, u, v in surfaces])
    n_clutter = int(round(clutter_fraction * n_points))
    counts = np.floor((n_points - n_clutter) * areas / areas.sum()).astype(int)
    counts[0] += n_points - n_clutter - counts.sum()

    pts, labels = [], []
    for (lab, o, u, v), m in zip(surfaces, counts):
        s = rng.uniform(size=(m, 2))
        pts.append(np.asarray(o, float) + s[:, :1] * np.asarray(u, float) + s[:, 1:] * np.asarray(v, float))
        labels.append(np.full(m, lab))

    n_trees = n_clutter // 2
    n_boxes = n_clutter - n_trees
    centers = np.column_stack([rng.uniform(-28, 28, 12), rng.choice([-6.5, 6.5], 12), rng.uniform(2, 4, 12)])
    which = rng.integers(0, 12, n_trees)
    pts.append(centers[which] + rng.normal(scale=0.8, size=(n_trees, 3)))
    labels.append(np.full(n_trees, 3))

    per_box = n_boxes // 8
    for b in range(8):
        m = per_box if b < 7 else n_boxes - 7 * per_box
        yaw = rng.uniform(np.deg2rad(15), np.deg2rad(35)) * rng.choice([-1, 1])
        c, s_ = np.cos(yaw), np.sin(yaw)
        rot = np.array([[c, -s_, 0], [s_, c, 0], [0, 0, 1]])
        dims = np.array([4.2, 1.8, 1.5])
        # uniform samples on the four vertical faces and the roof
        face = rng.integers(0, 5, m)
        q = rng.uniform(-0.5, 0.5, size=(m, 3)) * dims
        q[face == 0, 0] = dims[0] / 2
        q[face == 1, 0] = -dims[0] / 2
        q[face == 2, 1] = dims[1] / 2
        q[face == 3, 1] = -dims[1] / 2
        q[face == 4, 2] = dims[2] / 2
        origin = np.array([rng.uniform(-25, 25), rng.choice([-4.0, 4.0]), dims[2] / 2 + 0.2])
        pts.append(q @ rot.T + origin)
        labels.append(np.full(m, 3))

    return UrbanScene(PointCloud(np.concatenate(pts)), np.concatenate(labels).astype(np.intp))


COUNTEREXAMPLE_KINDS = ("orthogonal-balanced", "orthogonal-unbalanced", "non-orthogonal")


def counterexample_env(kind: str, seed: int = 0) -> EnvSpec:
    """Three-plane scenes contrasting balanced, unbalanced and non-orthogonal layouts.

    All planes are vertical or horizontal around the origin; perturbing only
    the x and y translation keeps the comparison inside the planes' span.
    """
    if kind == "orthogonal-balanced":
        return axis_planes_env(densities=(65.0, 65.0, 65.0), seed=seed)
    if kind == "orthogonal-unbalanced":
        return axis_planes_env(densities=(100.0, 55.0, 30.0), seed=seed)
    if kind == "non-orthogonal":
        diag = np.array([1.0, 1.0, 0.0]) / np.sqrt(2.0)
        planes = (
            PlaneSpec(AXES[0], (-3.0, 0.0, 0.0), 65.0),
            PlaneSpec(AXES[1], (0.0, -3.0, 0.0), 65.0),
            PlaneSpec(diag, (3.0, 3.0, 0.0), 65.0),
        )
        return EnvSpec(planes, seed)
    raise ValueError(f"unknown counterexample kind {kind!r}; expected one of {COUNTEREXAMPLE_KINDS}")
