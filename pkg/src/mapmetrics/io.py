"""Scan and pose file formats.

* ``kitti-bin``: little-endian float32 records ``x y z intensity``; the
  intensity is dropped on load and written as 0.
* ``xyz-text``: one point per line, whitespace-separated; the first three
  columns are x y z, extra columns are ignored; ``#`` starts a comment.
* KITTI poses: one pose per line, 12 reals forming the row-major 3x4
  ``[R|t]``. Rotations must be orthonormal within 1e-3 and are
  re-orthonormalized on load.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .geometry import PointCloud, PoseSE3, Trajectory, orthonormalize, rotation_error

SCAN_FORMATS = ("kitti-bin", "xyz-text")
POSE_TOLERANCE = 1e-3
_RECORD = np.dtype("<f4")


class FormatError(ValueError):
    """Malformed input file; the message carries the byte or line offset."""


def guess_format(path) -> str:
    return "kitti-bin" if Path(path).suffix.lower() == ".bin" else "xyz-text"


def _parse_bin(data: bytes, name: str) -> np.ndarray:
    if not data:
        raise FormatError(f"{name}: empty scan file")
    whole = len(data) // 16 * 16
    if whole != len(data):
        raise FormatError(f"{name}: truncated record at byte offset {whole} "
                          f"({len(data) - whole} trailing bytes)")
    rec = np.frombuffer(data, dtype=_RECORD).reshape(-1, 4)
    bad = ~np.all(np.isfinite(rec[:, :3]), axis=1)
    if np.any(bad):
        raise FormatError(f"{name}: non-finite coordinate at byte offset {int(np.argmax(bad)) * 16}")
    return rec[:, :3].astype(float)


def _parse_text(text: str, name: str) -> np.ndarray:
    rows = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        cols = body.split()
        if len(cols) < 3:
            raise FormatError(f"{name}:{lineno}: expected at least 3 values, got {len(cols)}")
        try:
            xyz = [float(c) for c in cols[:3]]
        except ValueError:
            raise FormatError(f"{name}:{lineno}: unparsable number in {body!r}") from None
        if not all(np.isfinite(xyz)):
            raise FormatError(f"{name}:{lineno}: non-finite coordinate")
        rows.append(xyz)
    if not rows:
        raise FormatError(f"{name}: scan file contains no points")
    return np.array(rows, dtype=float)


def load_scan(path, fmt: str | None = None) -> PointCloud:
    path = Path(path)
    fmt = fmt or guess_format(path)
    if fmt == "kitti-bin":
        return PointCloud(_parse_bin(path.read_bytes(), str(path)))
    if fmt == "xyz-text":
        return PointCloud(_parse_text(path.read_text(), str(path)))
    raise ValueError(f"unknown scan format {fmt!r}; expected one of {SCAN_FORMATS}")


def format_xyz(points: np.ndarray, labels=None, header: str | None = None) -> str:
    lines = [f"# {header}"] if header else []
    pts = np.asarray(points, dtype=float)
    if labels is None:
        lines += [f"{x!r} {y!r} {z!r}" for x, y, z in pts.tolist()]
    else:
        lines += [f"{x!r} {y!r} {z!r} {int(lab)}" for (x, y, z), lab in zip(pts.tolist(), labels)]
    return "\n".join(lines) + "\n"


def write_scan(path, cloud: PointCloud, fmt: str | None = None) -> None:
    path = Path(path)
    fmt = fmt or guess_format(path)
    if fmt == "kitti-bin":
        rec = np.zeros((len(cloud), 4), dtype=_RECORD)
        rec[:, :3] = cloud.points
        path.write_bytes(rec.tobytes())
    elif fmt == "xyz-text":
        path.write_text(format_xyz(cloud.points))
    else:
        raise ValueError(f"unknown scan format {fmt!r}; expected one of {SCAN_FORMATS}")


def parse_poses(text: str, name: str = "<poses>") -> Trajectory:
    poses = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        cols = body.split()
        if len(cols) != 12:
            raise FormatError(f"{name}:{lineno}: expected 12 values, got {len(cols)}")
        try:
            m = np.array([float(c) for c in cols]).reshape(3, 4)
        except ValueError:
            raise FormatError(f"{name}:{lineno}: unparsable number in {body!r}") from None
        if not np.all(np.isfinite(m)):
            raise FormatError(f"{name}:{lineno}: non-finite value")
        if rotation_error(m[:, :3]) > POSE_TOLERANCE or np.linalg.det(m[:, :3]) <= 0:
            raise FormatError(f"{name}:{lineno}: rotation not orthonormal within {POSE_TOLERANCE}")
        poses.append(PoseSE3(orthonormalize(m[:, :3]), m[:, 3]))
    if not poses:
        raise FormatError(f"{name}: pose file is empty")
    return Trajectory(poses)


def load_poses(path) -> Trajectory:
    return parse_poses(Path(path).read_text(), str(path))


def format_poses(trajectory: Trajectory) -> str:
    lines = []
    for p in trajectory:
        m = np.hstack([p.rotation, p.translation[:, None]])
        lines.append(" ".join(repr(float(v)) for v in m.ravel()))
    return "\n".join(lines) + "\n"


def write_poses(path, trajectory: Trajectory) -> None:
    Path(path).write_text(format_poses(trajectory))
