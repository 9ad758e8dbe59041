"""Rigid transforms, trajectories and point clouds.

Poses are stored as a 3x3 rotation matrix plus a translation vector. A pose
``T`` maps sensor-frame points into the world frame: ``x_w = R @ x_s + t``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

ROTATION_TOL = 1e-9
NORMAL_TOL = 1e-6


def orthonormalize(rotation: np.ndarray) -> np.ndarray:
    """Project a near-rotation matrix onto SO(3) (polar decomposition)."""
    u, _, vt = np.linalg.svd(np.asarray(rotation, dtype=float))
    r = u @ vt
    if np.linalg.det(r) < 0:
        u[:, -1] *= -1
        r = u @ vt
    return r


_EYE = np.eye(3)
_EYE.flags.writeable = False


def rotation_error(rotation: np.ndarray) -> float:
    r = np.asarray(rotation, dtype=float)
    return float(np.abs(r @ r.T - _EYE).max())


@dataclass(frozen=True, eq=False)
class PoseSE3:
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.array(self.rotation, dtype=float).reshape(3, 3)
        t = np.array(self.translation, dtype=float).reshape(3)
        if not np.all(np.isfinite(r)) or not np.all(np.isfinite(t)):
            raise ValueError("pose contains non-finite values")
        if rotation_error(r) > ROTATION_TOL or np.linalg.det(r) < 0:
            raise ValueError("rotation is not orthonormal with det +1")
        r.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def _trusted(cls, r: np.ndarray, t: np.ndarray) -> "PoseSE3":
        # r must already be a proper rotation; only t is checked
        t = np.array(t, dtype=float).reshape(3)
        if not np.isfinite(t).all():
            raise ValueError("pose contains non-finite values")
        t.flags.writeable = False
        pose = object.__new__(cls)
        object.__setattr__(pose, "rotation", r)
        object.__setattr__(pose, "translation", t)
        return pose

    @classmethod
    def identity(cls) -> "PoseSE3":
        return cls._trusted(_EYE, np.zeros(3))

    @classmethod
    def from_translation(cls, t: Sequence[float]) -> "PoseSE3":
        return cls._trusted(_EYE, t)

    @classmethod
    def from_matrix(cls, m: np.ndarray, repair: bool = False) -> "PoseSE3":
        """Build from a 4x4 homogeneous or 3x4 ``[R|t]`` matrix.

        With ``repair=True`` the rotation block is re-orthonormalized first.
        """
        m = np.asarray(m, dtype=float)
        r = m[:3, :3]
        if repair:
            r = orthonormalize(r)
        return cls(r, m[:3, 3])

    @property
    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform an (n, 3) array of points."""
        return np.asarray(points, dtype=float) @ self.rotation.T + self.translation

    def is_pure_translation(self, tol: float = 1e-9) -> bool:
        return bool(np.abs(self.rotation - _EYE).max() <= tol)

    def __matmul__(self, other: "PoseSE3") -> "PoseSE3":
        return compose(self, other)

    def __repr__(self):
        return f"PoseSE3(rotation={self.rotation.tolist()}, translation={self.translation.tolist()})"


def compose(a: PoseSE3, b: PoseSE3) -> PoseSE3:
    """Homogeneous product ``a @ b``."""
    r = a.rotation @ b.rotation
    # long chains drift; snap back onto SO(3) well before the validation bound
    if rotation_error(r) > 1e-12:
        r = orthonormalize(r)
    r.flags.writeable = False
    return PoseSE3._trusted(r, a.rotation @ b.translation + a.translation)


def inverse(a: PoseSE3) -> PoseSE3:
    rt = a.rotation.T
    return PoseSE3(rt, -rt @ a.translation)


class Trajectory(Sequence[PoseSE3]):
    """Ordered, immutable sequence of poses.

    Any length >= 1 is accepted; error metrics that need pairs check N >= 2
    themselves.
    """

    def __init__(self, poses: Iterable[PoseSE3]):
        self._poses = tuple(poses)
        if not self._poses:
            raise ValueError("trajectory needs at least one pose")
        for p in self._poses:
            if not isinstance(p, PoseSE3):
                raise TypeError(f"expected PoseSE3, got {type(p).__name__}")

    def __getitem__(self, i):
        if isinstance(i, slice):
            return Trajectory(self._poses[i])
        return self._poses[i]

    def __len__(self):
        return len(self._poses)

    def __repr__(self):
        return f"Trajectory(n={len(self)})"

    @property
    def rotations(self) -> np.ndarray:
        return np.stack([p.rotation for p in self._poses])

    @property
    def translations(self) -> np.ndarray:
        return np.stack([p.translation for p in self._poses])

    def is_rotation_free(self, tol: float = 1e-9) -> bool:
        return all(p.is_pure_translation(tol) for p in self._poses)

    @classmethod
    def from_translations(cls, translations: np.ndarray) -> "Trajectory":
        return cls(PoseSE3.from_translation(t) for t in np.asarray(translations, dtype=float))

    def transformed(self, left: PoseSE3) -> "Trajectory":
        """Left-multiply every pose by ``left`` (change of world frame)."""
        return Trajectory(compose(left, p) for p in self._poses)


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Points as an (n, 3) array with optional per-point unit normals.

    Rows of ``normals`` that are all-NaN mark points without a normal
    (degenerate vicinities); every other row has unit norm.
    """

    points: np.ndarray
    normals: np.ndarray | None = field(default=None)

    def __post_init__(self):
        pts = np.array(self.points, dtype=float).reshape(-1, 3)
        if not np.all(np.isfinite(pts)):
            raise ValueError("point coordinates must be finite")
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)
        if self.normals is not None:
            nrm = np.array(self.normals, dtype=float).reshape(-1, 3)
            if len(nrm) != len(pts):
                raise ValueError(f"{len(nrm)} normals for {len(pts)} points")
            present = ~np.all(np.isnan(nrm), axis=1)
            norms = np.linalg.norm(nrm[present], axis=1)
            if np.any(~np.isfinite(norms)) or np.any(np.abs(norms - 1.0) > NORMAL_TOL):
                raise ValueError("normals must be unit vectors (or all-NaN when absent)")
            nrm.flags.writeable = False
            object.__setattr__(self, "normals", nrm)

    def __len__(self):
        return len(self.points)

    @property
    def has_normal(self) -> np.ndarray:
        if self.normals is None:
            return np.zeros(len(self.points), dtype=bool)
        return ~np.isnan(self.normals[:, 0])

    def transformed(self, pose: PoseSE3) -> "PointCloud":
        pts = pose.apply(self.points)
        nrm = None if self.normals is None else self.normals @ pose.rotation.T
        return PointCloud(pts, nrm)

    def select(self, idx: np.ndarray) -> "PointCloud":
        nrm = None if self.normals is None else self.normals[idx]
        return PointCloud(self.points[idx], nrm)


def aggregate_map(clouds: Sequence[PointCloud], trajectory: Trajectory) -> PointCloud:
    """Transform each sensor-frame cloud by its pose and concatenate.

    No deduplication is done; metrics see the raw accumulated density.
    """
    if len(clouds) != len(trajectory):
        raise ValueError(
            f"misaligned inputs: {len(clouds)} clouds for {len(trajectory)} poses"
        )
    moved = [c.transformed(p) for c, p in zip(clouds, trajectory)]
    points = np.concatenate([c.points for c in moved]) if moved else np.empty((0, 3))
    with_normals = [c.normals is not None for c in moved]
    normals = None
    if any(with_normals):
        normals = np.concatenate(
            [c.normals if c.normals is not None else np.full((len(c), 3), np.nan) for c in moved]
        )
    return PointCloud(points, normals)
