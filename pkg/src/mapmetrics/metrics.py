"""No-reference map metrics: MME, MPV and their orthogonal-subset variants.

* MPV  - mean smallest eigenvalue of vicinity covariances over all points.
* MME  - mean Gaussian differential entropy ``0.5 * ln det(2 pi e Sigma)``.
* MOM  - MPV evaluated per direction group of an orthogonal subset, then
  averaged over the available directions.
* OMME - MME with the same per-direction structure as MOM.

Vicinities for the subset variants are centered on subset points but
gathered from the whole map.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateSceneError
from .geometry import PointCloud
from .spatial import IndexConfig, SpatialIndex, symmetric_eigenvalues, vicinity_covariances

DET_FLOOR = 1e-30
LOG_2PIE3 = 3.0 * np.log(2.0 * np.pi * np.e)
ENTROPY_FLOOR = 0.5 * (LOG_2PIE3 + np.log(DET_FLOOR))


@dataclass(frozen=True)
class MetricResult:
    value: float
    points_evaluated: int
    points_skipped: int
    per_direction: np.ndarray | None = None
    degraded: bool = False
    points_floored: int = 0

    def as_dict(self) -> dict:
        d = {
            "value": self.value,
            "points_evaluated": self.points_evaluated,
            "points_skipped": self.points_skipped,
            "points_floored": self.points_floored,
            "degraded": self.degraded,
        }
        if self.per_direction is not None:
            d["per_direction"] = [None if np.isnan(v) else float(v) for v in self.per_direction]
        return d


def plane_variances(covs: np.ndarray) -> np.ndarray:
    lam = symmetric_eigenvalues(covs)[:, 0]
    return np.maximum(lam, 0.0)


def entropies(covs: np.ndarray, degenerate: str = "skip") -> tuple[np.ndarray, np.ndarray]:
    """Per-point entropies and the mask of determinants below ``DET_FLOOR``.

    In ``skip`` mode the low-determinant entries are NaN; in ``floor`` mode
    their determinant is replaced by the floor.
    """
    det = np.linalg.det(covs) if len(covs) else np.empty(0)
    low = ~(det >= DET_FLOOR)
    if degenerate == "floor":
        det = np.where(low, DET_FLOOR, det)
    elif degenerate != "skip":
        raise ValueError(f"unknown degenerate mode {degenerate!r}")
    with np.errstate(invalid="ignore", divide="ignore"):
        h = 0.5 * (LOG_2PIE3 + np.log(det))
    if degenerate == "skip":
        h[low] = np.nan
    return h, low


class MapEvaluator:
    """Shares one spatial index and per-point covariances across metrics."""

    def __init__(self, cloud: PointCloud, cfg: IndexConfig | None = None,
                 index: SpatialIndex | None = None):
        if len(cloud) < 4:
            raise ValueError("map metrics need at least 4 points")
        self.cloud = cloud
        self.cfg = cfg or IndexConfig()
        self.index = index or SpatialIndex(cloud)
        self._covs = None
        self._counts = None

    def _all(self):
        if self._covs is None:
            self._covs, self._counts = vicinity_covariances(self.cloud, self.cfg, index=self.index)
        return self._covs, self._counts

    def covariances(self, centers: np.ndarray | None = None):
        if centers is None:
            return self._all()
        if self._covs is not None:
            return self._covs[centers], self._counts[centers]
        return vicinity_covariances(self.cloud, self.cfg, centers=centers, index=self.index)

    def _usable(self, counts):
        return counts >= self.cfg.min_points

    def mpv(self) -> MetricResult:
        covs, counts = self.covariances()
        ok = self._usable(counts)
        if not np.any(ok):
            raise DegenerateSceneError("every vicinity is degenerate; MPV undefined")
        v = plane_variances(covs[ok])
        return MetricResult(float(np.mean(v)), int(ok.sum()), int((~ok).sum()))

    def mme(self, degenerate: str = "skip") -> MetricResult:
        covs, counts = self.covariances()
        ok = self._usable(counts)
        h = np.full(len(counts), np.nan)
        low = np.zeros(len(counts), dtype=bool)
        h[ok], low[ok] = entropies(covs[ok], degenerate)
        used = ok & ~np.isnan(h)
        if not np.any(used):
            raise DegenerateSceneError("every vicinity is degenerate; MME undefined")
        floored = int((low & ok).sum()) if degenerate == "floor" else 0
        return MetricResult(float(np.mean(h[used])), int(used.sum()), int((~used).sum()),
                            points_floored=floored)

    def _per_direction(self, subset, term) -> MetricResult:
        groups = [np.asarray(g, dtype=np.intp) for g in subset.groups]
        if sum(len(g) for g in groups) == 0:
            raise DegenerateSceneError("orthogonal subset is empty: no orthogonal structure")
        values = np.full(len(groups), np.nan)
        evaluated = skipped = floored = 0
        for k, g in enumerate(groups):
            if len(g) == 0:
                continue
            covs, counts = self.covariances(g)
            ok = self._usable(counts)
            t, n_floor = term(covs[ok])
            used = ~np.isnan(t)
            evaluated += int(used.sum())
            skipped += len(g) - int(used.sum())
            floored += n_floor
            if np.any(used):
                values[k] = float(np.mean(t[used]))
        have = ~np.isnan(values)
        if not np.any(have):
            raise DegenerateSceneError("no direction group has a usable vicinity")
        degraded = bool(have.sum() < 3 or getattr(subset, "degraded", False))
        return MetricResult(float(np.mean(values[have])), evaluated, skipped, values,
                            degraded, floored)

    def mom(self, subset) -> MetricResult:
        return self._per_direction(subset, lambda c: (plane_variances(c), 0))

    def omme(self, subset, degenerate: str = "floor") -> MetricResult:
        def term(c):
            h, low = entropies(c, degenerate)
            return h, int(low.sum()) if degenerate == "floor" else 0
        return self._per_direction(subset, term)


def mpv(cloud: PointCloud, cfg: IndexConfig | None = None) -> MetricResult:
    return MapEvaluator(cloud, cfg).mpv()


def mme(cloud: PointCloud, cfg: IndexConfig | None = None, degenerate: str = "skip") -> MetricResult:
    return MapEvaluator(cloud, cfg).mme(degenerate)


def mom(cloud: PointCloud, subset, cfg: IndexConfig | None = None) -> MetricResult:
    return MapEvaluator(cloud, cfg).mom(subset)


def omme(cloud: PointCloud, subset, cfg: IndexConfig | None = None, degenerate: str = "floor") -> MetricResult:
    return MapEvaluator(cloud, cfg).omme(subset, degenerate)
