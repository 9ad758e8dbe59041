"""Metric-quality experiments: perturbation ensembles, metrics, correlations.

For every environment and trajectory length a ground-truth trajectory is
rendered once, an ensemble of perturbed trajectories is drawn, and each
rostered no-reference metric is evaluated on the map aggregated with the
perturbed poses. Per (environment, length, metric) the Pearson, Spearman
and Kendall coefficients against translation RPE are reported.

CSV report columns (header line ``# schema=mapmetrics.correlation/1``)::

    env,env_seed,length,metric,n,pearson,spearman,kendall

JSON summary (``"schema": "mapmetrics.summary/1"``) holds the config and,
per metric and length, mean and median of every coefficient.
"""

from __future__ import annotations

import configparser
import io
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import DegenerateSceneError, UndefinedCorrelationError
from .geometry import PointCloud, Trajectory, aggregate_map
from .metrics import MapEvaluator
from .ortho import (ExtractConfig, OrthoSubset, extract_orthogonal_subset, extract_per_scan,
                    merge_scan_subsets)
from .spatial import IndexConfig
from .stats import kendall, pearson, spearman
from .synthetic import (
    COUNTEREXAMPLE_KINDS,
    POSE_SPACING,
    PerturbSpec,
    counterexample_env,
    perturb_trajectory,
    render_trajectory,
    sample_env,
    straight_trajectory,
)
from .trajectory_metrics import rpe_translation

METRICS = ("mme", "mpv", "omme", "mom")
CSV_SCHEMA = "mapmetrics.correlation/1"
PAIRS_SCHEMA = "mapmetrics.pairs/1"
SUMMARY_SCHEMA = "mapmetrics.summary/1"
HOTMAP_SCHEMA = "mapmetrics.hotmap/1"
SUBSET_SOURCES = ("scans", "first", "map")
COEFFICIENTS = ("pearson", "spearman", "kendall")


@dataclass(frozen=True)
class ExperimentConfig:
    """Experiment parameters.

    Environment ``k`` uses seed ``env_seed + k``. ``subset_source`` selects
    where the orthogonal subset comes from (see :func:`orthogonal_subset`).
    """

    lengths: tuple = (5, 15, 30)
    ensemble: int = 200
    n_envs: int = 50
    metrics: tuple = METRICS
    env_seed: int = 0
    render_seed: int = 0
    perturb_seed: int = 0
    translation_sigma: float | tuple = 0.05
    rotation_sigma: float = 0.0
    spacing: float = POSE_SPACING
    direction: tuple = (1.0, 0.0, 0.0)
    subset_source: str = "scans"
    index: IndexConfig = field(default_factory=IndexConfig)
    extract: ExtractConfig = field(default_factory=ExtractConfig)

    def __post_init__(self):
        object.__setattr__(self, "lengths", tuple(int(n) for n in self.lengths))
        object.__setattr__(self, "metrics", tuple(m.lower() for m in self.metrics))
        if self.ensemble < 3:
            raise ValueError("ensemble size must be at least 3 (correlations are undefined below)")
        if not self.lengths or min(self.lengths) < 2:
            raise ValueError("trajectory lengths must be at least 2")
        if self.n_envs < 1:
            raise ValueError("need at least one environment")
        unknown = set(self.metrics) - set(METRICS)
        if unknown or not self.metrics:
            raise ValueError(f"unknown metrics {sorted(unknown)}; roster must be a subset of {METRICS}")
        if self.subset_source not in SUBSET_SOURCES:
            raise ValueError(f"subset_source must be one of {SUBSET_SOURCES}")

    @classmethod
    def from_config(cls, text: str) -> "ExperimentConfig":
        """Parse the INI layout written by :meth:`to_config`."""
        cp = configparser.ConfigParser()
        cp.read_string(text)
        kw = {}
        if cp.has_section("experiment"):
            sec = cp["experiment"]
            ints = ("ensemble", "n_envs", "env_seed", "render_seed", "perturb_seed")
            for key in ints:
                if key in sec:
                    kw[key] = sec.getint(key)
            for key in ("rotation_sigma", "spacing"):
                if key in sec:
                    kw[key] = sec.getfloat(key)
            if "lengths" in sec:
                kw["lengths"] = tuple(int(v) for v in _split(sec["lengths"]))
            if "metrics" in sec:
                kw["metrics"] = tuple(_split(sec["metrics"]))
            if "translation_sigma" in sec:
                sig = [float(v) for v in _split(sec["translation_sigma"])]
                kw["translation_sigma"] = sig[0] if len(sig) == 1 else tuple(sig)
            if "direction" in sec:
                kw["direction"] = tuple(float(v) for v in _split(sec["direction"]))
            if "subset_source" in sec:
                kw["subset_source"] = sec["subset_source"].strip()
        if cp.has_section("index"):
            sec = cp["index"]
            kw["index"] = IndexConfig(
                mode=sec.get("mode", "radius"),
                radius=sec.getfloat("radius", 0.5),
                k=sec.getint("k", 30),
                min_points=sec.getint("min_points", 4),
            )
        if cp.has_section("extract"):
            sec = cp["extract"]
            mp = sec.get("max_points", "2000").strip()
            kw["extract"] = ExtractConfig(
                eps=sec.getfloat("eps", 0.0872),
                cluster_threshold_deg=sec.getfloat("cluster_threshold_deg", 10.0),
                max_clusters=sec.getint("max_clusters", 100),
                max_points=None if mp.lower() == "none" else int(mp),
                seed=sec.getint("seed", 0),
            )
        return cls(**kw)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_config(Path(path).read_text())

    def to_config(self) -> str:
        sig = np.atleast_1d(np.asarray(self.translation_sigma, dtype=float))
        lines = [
            "[experiment]",
            f"lengths = {', '.join(map(str, self.lengths))}",
            f"ensemble = {self.ensemble}",
            f"n_envs = {self.n_envs}",
            f"metrics = {', '.join(self.metrics)}",
            f"env_seed = {self.env_seed}",
            f"render_seed = {self.render_seed}",
            f"perturb_seed = {self.perturb_seed}",
            f"translation_sigma = {', '.join(repr(float(v)) for v in sig)}",
            f"rotation_sigma = {self.rotation_sigma!r}",
            f"spacing = {self.spacing!r}",
            f"direction = {', '.join(repr(float(v)) for v in self.direction)}",
            f"subset_source = {self.subset_source}",
            "",
            "[index]",
            f"mode = {self.index.mode}",
            f"radius = {self.index.radius!r}",
            f"k = {self.index.k}",
            f"min_points = {self.index.min_points}",
            "",
            "[extract]",
            f"eps = {self.extract.eps!r}",
            f"cluster_threshold_deg = {self.extract.cluster_threshold_deg!r}",
            f"max_clusters = {self.extract.max_clusters}",
            f"max_points = {self.extract.max_points}",
            f"seed = {self.extract.seed}",
            "",
        ]
        return "\n".join(lines)

    def trajectory(self, length: int) -> Trajectory:
        return straight_trajectory(length, self.spacing, self.direction)


def _split(text: str) -> list[str]:
    return [v for v in text.replace(",", " ").split() if v]


@dataclass(frozen=True)
class CorrelationRow:
    env: int
    env_seed: int
    length: int
    metric: str
    n: int
    pearson: float
    spearman: float
    kendall: float


@dataclass
class CorrelationReport:
    config: ExperimentConfig
    rows: list
    # (env, length) -> {"rpe": array, metric: array}
    samples: dict

    def coefficients(self, metric: str, length: int | None = None, kind: str = "pearson") -> np.ndarray:
        return np.array([getattr(r, kind) for r in self.rows
                         if r.metric == metric and (length is None or r.length == length)])

    def mean(self, metric: str, kind: str = "pearson", length: int | None = None) -> float:
        return float(np.mean(self.coefficients(metric, length, kind)))

    def summary(self) -> dict:
        out = {}
        for metric in self.config.metrics:
            per_len = {}
            for length in self.config.lengths:
                entry = {"n_envs": len(self.coefficients(metric, length))}
                for kind in COEFFICIENTS:
                    c = self.coefficients(metric, length, kind)
                    entry[kind] = {"mean": float(np.mean(c)), "median": float(np.median(c))}
                per_len[str(length)] = entry
            out[metric] = per_len
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# schema={CSV_SCHEMA}\n")
        buf.write("env,env_seed,length,metric,n,pearson,spearman,kendall\n")
        for r in self.rows:
            buf.write(f"{r.env},{r.env_seed},{r.length},{r.metric},{r.n},"
                      f"{r.pearson!r},{r.spearman!r},{r.kendall!r}\n")
        return buf.getvalue()

    def pairs_csv(self) -> str:
        """Raw (RPE, metric) samples for audit, one row per ensemble member."""
        buf = io.StringIO()
        buf.write(f"# schema={PAIRS_SCHEMA}\n")
        buf.write("env,length,member,rpe," + ",".join(self.config.metrics) + "\n")
        for (env, length), s in sorted(self.samples.items()):
            for m in range(len(s["rpe"])):
                vals = ",".join(repr(float(s[k][m])) for k in self.config.metrics)
                buf.write(f"{env},{length},{m},{float(s['rpe'][m])!r},{vals}\n")
        return buf.getvalue()

    def to_json(self) -> str:
        cfg = asdict(self.config)
        cfg["translation_sigma"] = np.atleast_1d(np.asarray(self.config.translation_sigma, float)).tolist()
        doc = {"schema": SUMMARY_SCHEMA, "config": cfg, "summary": self.summary()}
        return json.dumps(doc, indent=2, sort_keys=True)


@dataclass(frozen=True)
class _Task:
    env_index: int
    length: int
    cfg: ExperimentConfig


def orthogonal_subset(clouds, trajectory: Trajectory, source: str = "scans",
                      extract_cfg: ExtractConfig | None = None, per_scan=None) -> OrthoSubset:
    """Orthogonal subset of ``aggregate_map(clouds, trajectory)``.

    * ``scans``: extract from every scan and merge (pass ``per_scan`` from
      :func:`extract_per_scan` to reuse the extractions across trajectories).
    * ``first``: extract from the first scan only; its points lead the map.
    * ``map``: extract from the aggregated map itself.
    """
    extract_cfg = extract_cfg or ExtractConfig()
    normals_cfg = IndexConfig.for_normals()
    if source == "scans":
        if per_scan is None:
            per_scan = extract_per_scan(clouds, extract_cfg, normals_cfg)
        return merge_scan_subsets(per_scan, [len(c) for c in clouds], trajectory, extract_cfg.eps)
    if source == "first":
        return extract_orthogonal_subset(clouds[0], extract_cfg, normals_cfg)
    if source == "map":
        return extract_orthogonal_subset(aggregate_map(clouds, trajectory), extract_cfg, normals_cfg)
    raise ValueError(f"unknown subset source {source!r}; expected one of {SUBSET_SOURCES}")


def evaluate_map(cloud: PointCloud, metrics, subset: OrthoSubset | None,
                 index_cfg: IndexConfig, extract_cfg: ExtractConfig | None = None) -> dict:
    """Every requested metric on one map, sharing a single covariance pass."""
    ev = MapEvaluator(cloud, index_cfg)
    if subset is None and any(m in ("mom", "omme") for m in metrics):
        subset = extract_orthogonal_subset(cloud, extract_cfg or ExtractConfig(), IndexConfig.for_normals())
    out = {}
    for m in metrics:
        if m == "mpv":
            out[m] = ev.mpv().value
        elif m == "mme":
            out[m] = ev.mme().value
        elif m == "mom":
            out[m] = ev.mom(subset).value
        elif m == "omme":
            out[m] = ev.omme(subset).value
    return out


def _run_task(task: _Task):
    cfg = task.cfg
    k, length = task.env_index, task.length
    seed = cfg.env_seed + k
    # clearance is checked along at least 30 poses so an env seed means the
    # same scene whatever the configured lengths
    longest = cfg.trajectory(max(30, *cfg.lengths))
    env = sample_env(seed, positions=longest.translations)
    gt = cfg.trajectory(length)
    clouds = render_trajectory(env, gt, cfg.render_seed + k)
    spec = PerturbSpec(cfg.translation_sigma, cfg.rotation_sigma, cfg.perturb_seed)
    ctx = f"environment {k} (env seed {seed}), length {length}"
    wants_subset = any(m in ("mom", "omme") for m in cfg.metrics)
    per_scan = None
    if wants_subset and cfg.subset_source == "scans":
        per_scan = extract_per_scan(clouds, cfg.extract, IndexConfig.for_normals())
    rpe = np.empty(cfg.ensemble)
    values = {m: np.empty(cfg.ensemble) for m in cfg.metrics}
    for member in range(cfg.ensemble):
        est = perturb_trajectory(gt, spec, k, length, member)
        rpe[member] = rpe_translation(gt, est).value
        try:
            subset = None
            if wants_subset:
                subset = orthogonal_subset(clouds, est, cfg.subset_source, cfg.extract, per_scan)
            res = evaluate_map(aggregate_map(clouds, est), cfg.metrics, subset, cfg.index, cfg.extract)
        except DegenerateSceneError as e:
            raise DegenerateSceneError(f"{ctx}, member {member} (perturb seed {cfg.perturb_seed}): {e}") from e
        for m, v in res.items():
            values[m][member] = v
    rows = []
    for m in cfg.metrics:
        try:
            coeffs = [f(rpe, values[m]) for f in (pearson, spearman, kendall)]
        except UndefinedCorrelationError as e:
            raise UndefinedCorrelationError(f"{ctx}, metric {m}: {e}") from e
        rows.append(CorrelationRow(k, seed, length, m, cfg.ensemble, *coeffs))
    return k, length, rows, {"rpe": rpe, **values}


def run_experiment(cfg: ExperimentConfig, threads: int = 1) -> CorrelationReport:
    """Run every (environment, length) task; output does not depend on ``threads``."""
    tasks = [_Task(k, n, cfg) for k in range(cfg.n_envs) for n in cfg.lengths]
    if threads > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_run_task, tasks))
    else:
        results = [_run_task(t) for t in tasks]
    rows, samples = [], {}
    for k, length, task_rows, s in results:
        rows.extend(task_rows)
        samples[(k, length)] = s
    return CorrelationReport(cfg, rows, samples)


def counterexample_experiment(ensemble: int = 200, length: int = 5, sigma: float = 0.05,
                              seed: int = 0, metrics=("mpv", "mom"),
                              cfg: ExperimentConfig | None = None) -> dict:
    """Correlation of each metric with RPE on the three counterexample scenes.

    Perturbations act on x and y only. Returns
    ``{kind: {metric: {"pearson": .., "spearman": .., "kendall": ..}}}``.
    """
    base = cfg or ExperimentConfig(lengths=(length,), ensemble=ensemble, n_envs=1, metrics=tuple(metrics),
                                   perturb_seed=seed, render_seed=seed)
    base = replace(base, translation_sigma=(sigma, sigma, 0.0), rotation_sigma=0.0)
    gt = base.trajectory(length)
    spec = PerturbSpec(base.translation_sigma, 0.0, base.perturb_seed)
    out = {}
    for kind in COUNTEREXAMPLE_KINDS:
        env = counterexample_env(kind, seed)
        clouds = render_trajectory(env, gt, base.render_seed)
        wants_subset = any(m in ("mom", "omme") for m in base.metrics)
        per_scan = extract_per_scan(clouds, base.extract, IndexConfig.for_normals()) \
            if wants_subset and base.subset_source == "scans" else None
        rpe = np.empty(base.ensemble)
        vals = {m: np.empty(base.ensemble) for m in base.metrics}
        for member in range(base.ensemble):
            est = perturb_trajectory(gt, spec, member)
            rpe[member] = rpe_translation(gt, est).value
            subset = orthogonal_subset(clouds, est, base.subset_source, base.extract, per_scan) \
                if wants_subset else None
            res = evaluate_map(aggregate_map(clouds, est), base.metrics, subset, base.index, base.extract)
            for m, v in res.items():
                vals[m][member] = v
        out[kind] = {m: {"pearson": pearson(rpe, vals[m]), "spearman": spearman(rpe, vals[m]),
                         "kendall": kendall(rpe, vals[m])} for m in base.metrics}
    return out


@dataclass(frozen=True)
class HotmapEntry:
    window: int
    start: int
    value: float | None
    degraded: bool
    reason: str = ""


def hotmap(clouds, poses: Trajectory, window: int = 10, stride: int | None = None,
           index_cfg: IndexConfig | None = None, extract_cfg: ExtractConfig | None = None,
           subset_source: str = "scans") -> list[HotmapEntry]:
    """MOM over windows of consecutive poses (non-overlapping unless ``stride`` is given).

    A trailing partial window is dropped. Windows where MOM is undefined
    get ``value=None`` and the reason instead of raising.
    """
    if window < 2:
        raise ValueError("window must be at least 2")
    if len(clouds) != len(poses):
        raise ValueError(f"misaligned inputs: {len(clouds)} clouds vs {len(poses)} poses")
    if len(poses) < window:
        raise ValueError(f"trajectory of {len(poses)} poses is shorter than the window ({window})")
    stride = window if stride is None else stride
    if stride < 1:
        raise ValueError("stride must be positive")
    index_cfg = index_cfg or IndexConfig()
    extract_cfg = extract_cfg or ExtractConfig()
    out = []
    for w, start in enumerate(range(0, len(poses) - window + 1, stride)):
        sl = slice(start, start + window)
        part = Trajectory(list(poses)[sl])
        try:
            cloud = aggregate_map(list(clouds)[sl], part)
            subset = orthogonal_subset(list(clouds)[sl], part, subset_source, extract_cfg)
            res = MapEvaluator(cloud, index_cfg).mom(subset)
            out.append(HotmapEntry(w, start, res.value, res.degraded))
        except DegenerateSceneError as e:
            out.append(HotmapEntry(w, start, None, True, str(e)))
    return out


def hotmap_csv(entries) -> str:
    buf = io.StringIO()
    buf.write(f"# schema={HOTMAP_SCHEMA}\n")
    buf.write("window,start_pose,mom,degraded\n")
    for e in entries:
        val = "" if e.value is None else repr(float(e.value))
        buf.write(f"{e.window},{e.start},{val},{int(e.degraded)}\n")
    return buf.getvalue()
