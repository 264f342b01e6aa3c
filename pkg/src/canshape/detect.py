"""Online anomaly statistics over the learned manifold, plus calibration.

Two statistics per observation: distance from the embedded point to the
embedded training set (mean over the r nearest training embeddings), and
the jump between consecutive embedded points. Thresholds come from an
ambient holdout: a high quantile of each statistic times a safety
multiplier. Detection is a strict single pass — the decision at
observation i never looks past observation i.
"""

from __future__ import annotations

import time as _time
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .diffusion import DiffusionModel, EmbeddedPoint, ZeroKernelRow, embed, embed_many
from .pipeline import Observation

DETECTOR_DIST = "DistanceToManifold"
DETECTOR_CONT = "IncrementDiscontinuity"
DEFAULT_NEIGHBORS = 5
MIN_HOLDOUT = 1000


class DetectError(ValueError):
    """Base class for detection failures."""


class OutOfOrder(DetectError):
    """Observation times went backwards within one stream."""


class InsufficientHoldout(DetectError):
    """Too few holdout observations to calibrate a tail quantile."""


@dataclass(frozen=True)
class Thresholds:
    k_dist: float
    k_cont: float
    q: float = 0.999
    c: float = 1.5

    def __post_init__(self) -> None:
        if self.k_dist <= 0 or self.k_cont <= 0:
            raise ValueError("thresholds must be positive")


@dataclass(frozen=True)
class Alert:
    time: float
    detector: str
    statistic: float
    threshold: float
    observation_index: int


@dataclass(frozen=True)
class TraceRow:
    time: float
    manifold_dist: float
    increment_dist: float | None  # None before the first increment exists
    alert_dist: bool
    alert_cont: bool


class ManifoldIndex:
    """Static nearest-neighbor index over the embedded training set."""

    def __init__(self, model: DiffusionModel, r: int = DEFAULT_NEIGHBORS):
        if r < 1:
            raise ValueError(f"r must be >= 1, got {r}")
        self.r = min(r, model.n)
        self._tree = cKDTree(model.train_embed)

    def distance(self, psi: np.ndarray) -> float:
        d, _ = self._tree.query(psi, k=self.r)
        return float(np.mean(d))

    def distances(self, psis: np.ndarray) -> np.ndarray:
        d, _ = self._tree.query(psis, k=self.r)
        return d.mean(axis=1) if self.r > 1 else np.asarray(d, dtype=float)


def manifold_distance(index: ManifoldIndex, p: EmbeddedPoint) -> float:
    return index.distance(p.psi)


@dataclass
class DetectorState:
    previous: EmbeddedPoint | None = None


def increment_distance(state: DetectorState, p: EmbeddedPoint) -> float | None:
    """Jump size from the previous embedding; None on the first point."""
    prev = state.previous
    if prev is not None and p.time < prev.time:
        raise OutOfOrder(f"observation at {p.time} after one at {prev.time}")
    state.previous = p
    if prev is None:
        return None
    return float(np.linalg.norm(p.psi - prev.psi))


def calibrate(
    model: DiffusionModel,
    holdout: Sequence[Observation],
    q: float = 0.999,
    c: float = 1.5,
    r: int = DEFAULT_NEIGHBORS,
) -> Thresholds:
    """Set both thresholds from an ambient holdout's statistic tails."""
    if not 0 < q < 1:
        raise ValueError(f"q must be in (0,1), got {q}")
    if c < 1:
        raise ValueError(f"c must be >= 1, got {c}")
    if len(holdout) < MIN_HOLDOUT:
        raise InsufficientHoldout(
            f"need >= {MIN_HOLDOUT} holdout observations, got {len(holdout)}"
        )
    times = np.array([o.time for o in holdout])
    if np.any(np.diff(times) < 0):
        raise OutOfOrder("holdout observations must be time-ordered")
    psis = embed_many(model, np.vstack([o.x for o in holdout]))
    index = ManifoldIndex(model, r)
    dists = index.distances(psis)
    incrs = np.linalg.norm(np.diff(psis, axis=0), axis=1)
    return Thresholds(
        k_dist=float(c * np.quantile(dists, q)),
        k_cont=float(c * np.quantile(incrs, q)),
        q=q,
        c=c,
    )


def detect_stream(
    model: DiffusionModel,
    thresholds: Thresholds,
    observations: Iterable[Observation],
    r: int = DEFAULT_NEIGHBORS,
) -> tuple[list[Alert], list[TraceRow]]:
    """Single online pass: embed, score, compare, alert.

    A query with no kernel mass at all (so far from the manifold that the
    embedding is undefined) is itself the strongest possible signal: it
    raises a DistanceToManifold alert with an infinite statistic rather
    than an exception, and leaves the increment state untouched.
    """
    index = ManifoldIndex(model, r)
    state = DetectorState()
    alerts: list[Alert] = []
    trace: list[TraceRow] = []
    for i, obs in enumerate(observations):
        prev = state.previous
        if prev is not None and obs.time < prev.time:
            raise OutOfOrder(f"observation at {obs.time} after one at {prev.time}")
        try:
            p = embed(model, obs.x, obs.time)
        except ZeroKernelRow:
            alerts.append(
                Alert(obs.time, DETECTOR_DIST, float("inf"), thresholds.k_dist, i)
            )
            trace.append(TraceRow(obs.time, float("inf"), None, True, False))
            continue
        dist = index.distance(p.psi)
        incr = increment_distance(state, p)
        hit_dist = dist > thresholds.k_dist
        hit_cont = incr is not None and incr > thresholds.k_cont
        if hit_dist:
            alerts.append(Alert(obs.time, DETECTOR_DIST, dist, thresholds.k_dist, i))
        if hit_cont:
            alerts.append(Alert(obs.time, DETECTOR_CONT, incr, thresholds.k_cont, i))
        trace.append(TraceRow(obs.time, dist, incr, hit_dist, hit_cont))
    return alerts, trace


def apply_cooldown(alerts: Sequence[Alert], cooldown_s: float) -> list[Alert]:
    """Drop alerts within the cooldown of the last kept alert per detector."""
    if cooldown_s <= 0:
        return list(alerts)
    last: dict[str, float] = {}
    kept = []
    for a in alerts:
        t0 = last.get(a.detector)
        if t0 is None or a.time - t0 >= cooldown_s:
            kept.append(a)
            last[a.detector] = a.time
    return kept


@dataclass(frozen=True)
class BenchReport:
    observations: int
    elapsed_s: float
    obs_per_s: float
    p50_ms: float
    p99_ms: float
    alerts: int


def bench_detect(
    model: DiffusionModel,
    thresholds: Thresholds,
    observations: Sequence[Observation],
    r: int = DEFAULT_NEIGHBORS,
) -> BenchReport:
    """Time the full per-observation detection path, one point at a time."""
    index = ManifoldIndex(model, r)
    state = DetectorState()
    n_alerts = 0
    lat = np.empty(len(observations))
    t_start = _time.perf_counter()
    for i, obs in enumerate(observations):
        t0 = _time.perf_counter()
        try:
            p = embed(model, obs.x, obs.time)
        except ZeroKernelRow:
            n_alerts += 1
            lat[i] = _time.perf_counter() - t0
            continue
        dist = index.distance(p.psi)
        incr = increment_distance(state, p)
        if dist > thresholds.k_dist:
            n_alerts += 1
        if incr is not None and incr > thresholds.k_cont:
            n_alerts += 1
        lat[i] = _time.perf_counter() - t0
    elapsed = _time.perf_counter() - t_start
    count = len(observations)
    if count == 0:
        return BenchReport(0, 0.0, 0.0, 0.0, 0.0, 0)
    return BenchReport(
        observations=count,
        elapsed_s=elapsed,
        obs_per_s=count / elapsed,
        p50_ms=float(np.percentile(lat, 50) * 1000),
        p99_ms=float(np.percentile(lat, 99) * 1000),
        alerts=n_alerts,
    )
