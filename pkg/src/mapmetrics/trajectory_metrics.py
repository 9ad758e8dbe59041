"""Full-reference trajectory error: translation Relative Pose Error.

RPE here is the mean-squared translation of ``E_ij = dT_gt_ij @ inv(dT_est_ij)``
with ``dT_ij = T_i @ inv(T_j)``. In the default all-pairs mode the sum runs
over ordered pairs i != j and is divided by N (not by the pair count).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Trajectory


@dataclass(frozen=True)
class RpeResult:
    value: float
    pair_count: int
    per_axis: np.ndarray | None = None


def rpe_1d(a) -> float:
    """(1/N) * sum over ordered pairs i != j of (a_i - a_j)^2."""
    a = np.asarray(a, dtype=float).ravel()
    n = len(a)
    if n < 2:
        raise ValueError("1D RPE needs at least two values")
    diff = np.subtract.outer(a, a)
    return float(np.sum(diff * diff) / n)


def _pair_indices(n: int, pairs: str) -> tuple[np.ndarray, np.ndarray]:
    if pairs == "all":
        i, j = np.nonzero(~np.eye(n, dtype=bool))
    elif pairs == "consecutive":
        i = np.arange(1, n)
        j = np.arange(n - 1)
    else:
        raise ValueError(f"unknown pair mode {pairs!r}")
    return i, j


def relative_errors(gt: Trajectory, est: Trajectory, pairs: str = "all") -> np.ndarray:
    """Translation parts of E_ij for the selected pairs, shape (P, 3)."""
    if len(gt) != len(est):
        raise ValueError(f"trajectory lengths differ: {len(gt)} vs {len(est)}")
    if len(gt) < 2:
        raise ValueError("RPE needs at least two poses")
    rg, tg = gt.rotations, gt.translations
    re, te = est.rotations, est.translations
    i, j = _pair_indices(len(gt), pairs)

    def delta(r, t):
        # T_i inv(T_j) = (R_i R_j^T, t_i - R_i R_j^T t_j)
        dr = r[i] @ r[j].transpose(0, 2, 1)
        dt = t[i] - (dr @ t[j][:, :, None])[:, :, 0]
        return dr, dt

    drg, dtg = delta(rg, tg)
    dre, dte = delta(re, te)
    # transl(G inv(E)) = t_G - R_G R_E^T t_E
    rel = drg @ dre.transpose(0, 2, 1)
    return dtg - (rel @ dte[:, :, None])[:, :, 0]


def rpe_translation(gt: Trajectory, est: Trajectory, pairs: str = "all") -> RpeResult:
    err = relative_errors(gt, est, pairs)
    sq = err * err
    if pairs == "all":
        norm = len(gt)
    else:
        # benchmark convention: plain mean over consecutive pairs
        norm = len(err)
    per_axis = sq.sum(axis=0) / norm
    return RpeResult(float(np.sum(sq) / norm), len(err), per_axis)


def rpe_axis_decomposition(gt: Trajectory, est: Trajectory, basis: np.ndarray | None = None) -> np.ndarray:
    """Per-axis 1D RPEs of the translation error series.

    Only defined for rotation-free trajectories; ``basis`` rows give the
    axes (identity by default). For any orthonormal basis the components
    sum to ``rpe_translation(gt, est).value``.
    """
    if len(gt) != len(est):
        raise ValueError(f"trajectory lengths differ: {len(gt)} vs {len(est)}")
    if not (gt.is_rotation_free() and est.is_rotation_free()):
        raise ValueError("axis decomposition requires rotation-free trajectories")
    b = np.eye(3) if basis is None else np.asarray(basis, dtype=float)
    err = (gt.translations - est.translations) @ b.T
    return np.array([rpe_1d(err[:, k]) for k in range(b.shape[0])])
