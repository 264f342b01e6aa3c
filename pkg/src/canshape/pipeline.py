"""From raw frames to analysis-ready series and observation vectors.

This module owns the plumbing between the codec and the numerical stages:
per-signal time series extraction, removal of signals that never change,
resampling onto a fixed-length grid (step interpolation for byte pairs,
natural cubic splines for real-valued reference series), min-max scaling,
and the latest-value-register stream that turns asynchronous frames into
observation vectors.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np
from scipy.interpolate import CubicSpline

from .can_codec import BytePairId, CanFrame, decompose

DEFAULT_INTERP_LEN = 5000


class PipelineError(ValueError):
    """Base class for signal-pipeline failures."""


class EmptyCapture(PipelineError):
    """Capture contains no frames."""


class TooShort(PipelineError):
    """Not enough points for the requested interpolation."""


class ConstantSeries(PipelineError):
    """A series has zero variance where variation is required."""


class LengthMismatch(PipelineError):
    """Vectors that must share a length do not."""


class UnknownMember(PipelineError):
    """A requested byte pair never appeared in the frame stream."""


@dataclass(frozen=True)
class CanonicalSeries:
    """Real-valued reference measurements (e.g. true speed) with own clock."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if t.ndim != 1 or v.ndim != 1:
            raise ValueError("canonical series must be 1-d")
        if len(t) != len(v):
            raise LengthMismatch(f"{len(t)} times vs {len(v)} values")
        if len(t) == 0:
            raise ValueError("canonical series is empty")
        if len(t) > 1 and not np.all(np.diff(t) > 0):
            raise ValueError("canonical timestamps must be strictly increasing")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class StateCapture:
    """One labeled capture: a vehicle state plus its recorded frames."""

    label: str
    frames: Sequence[CanFrame]
    duration: float
    canonical: CanonicalSeries | None = None

    def __post_init__(self) -> None:
        if self.duration <= 0:
            raise ValueError(f"duration must be positive, got {self.duration}")
        ts = [f.timestamp for f in self.frames]
        if any(b < a for a, b in zip(ts, ts[1:])):
            raise ValueError("frames must be sorted by timestamp")

    def span(self) -> tuple[float, float]:
        if not self.frames:
            raise EmptyCapture(f"capture {self.label!r} has no frames")
        return self.frames[0].timestamp, self.frames[-1].timestamp


@dataclass(frozen=True)
class BytePairSeries:
    id: BytePairId
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values)
        if len(t) == 0:
            raise ValueError(f"series {self.id} is empty")
        if len(t) != len(v):
            raise LengthMismatch(f"series {self.id}: {len(t)} times vs {len(v)} values")
        if len(t) > 1 and not np.all(np.diff(t) > 0):
            raise ValueError(f"series {self.id}: times must be strictly increasing")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)


def extract_series(capture: StateCapture) -> dict[BytePairId, BytePairSeries]:
    """Decode every frame into its four byte pairs, one series per pair id.

    Two frames of the same AID at the same instant collapse to the later
    value, keeping timestamps strictly increasing per series.
    """
    if not capture.frames:
        raise EmptyCapture(f"capture {capture.label!r} has no frames")
    acc: dict[BytePairId, tuple[list[float], list[int]]] = {}
    for frame in capture.frames:
        for pid, value in decompose(frame):
            times, values = acc.setdefault(pid, ([], []))
            if times and times[-1] == frame.timestamp:
                values[-1] = value
            else:
                times.append(frame.timestamp)
                values.append(value)
    return {
        pid: BytePairSeries(pid, np.array(t), np.array(v, dtype=np.int64))
        for pid, (t, v) in acc.items()
    }


def constant_filter(
    series_by_state: Mapping[str, Mapping[BytePairId, BytePairSeries]],
) -> set[BytePairId]:
    """Keep ids whose pooled observed values (all captures) take ≥ 2 values.

    A pair that is constant within every capture but at different levels
    across captures still carries state information and is retained.
    """
    if not series_by_state:
        raise EmptyCapture("no captures given")
    observed: dict[BytePairId, set[int]] = {}
    for series_map in series_by_state.values():
        for pid, series in series_map.items():
            observed.setdefault(pid, set()).update(np.unique(series.values).tolist())
    return {pid for pid, vals in observed.items() if len(vals) >= 2}


def interpolate_to_length(
    series: BytePairSeries | CanonicalSeries,
    L: int,
    kind: str = "step",
    span: tuple[float, float] | None = None,
) -> np.ndarray:
    """Resample a series onto L uniformly spaced times covering `span`.

    kind="step" holds the previous value (byte pairs change only when a
    frame arrives); kind="cubic" fits a natural cubic spline (reference
    series are genuinely continuous). Default span is the series' own
    time range; pass the capture span to align several series.
    """
    if L < 1:
        raise ValueError(f"L must be positive, got {L}")
    if kind not in ("step", "cubic"):
        raise ValueError(f"unknown interpolation kind {kind!r}")
    times = series.times
    values = np.asarray(series.values, dtype=float)
    if span is None:
        span = (float(times[0]), float(times[-1]))
    grid = np.linspace(span[0], span[1], L)
    if kind == "step":
        idx = np.searchsorted(times, grid, side="right") - 1
        return values[np.clip(idx, 0, len(values) - 1)]
    if len(times) < 2:
        raise TooShort(f"cubic interpolation needs >= 2 points, got {len(times)}")
    return CubicSpline(times, values, bc_type="natural")(grid)


def assemble_interpolated(
    captures: Sequence[StateCapture],
    L: int = DEFAULT_INTERP_LEN,
) -> tuple[dict[BytePairId, np.ndarray], dict[str, np.ndarray]]:
    """Build aligned length-(L·captures) vectors for correlation analysis.

    Each capture contributes one L-sample segment; segments are then
    concatenated in capture order. Ids are first filtered for constancy.
    An id absent from a capture (and a reference series outside its own
    capture) fills that segment with the series' overall mean, so the
    segment contributes nothing to covariances.
    """
    if not captures:
        raise EmptyCapture("no captures given")
    per_state = {cap.label: extract_series(cap) for cap in captures}
    if len(per_state) != len(captures):
        raise ValueError("capture labels must be unique")
    retained = constant_filter(per_state)
    spans = {cap.label: cap.span() for cap in captures}

    series_out: dict[BytePairId, np.ndarray] = {}
    for pid in sorted(retained, key=lambda p: (p.aid, p.pair_index)):
        segments: list[np.ndarray | None] = []
        for cap in captures:
            s = per_state[cap.label].get(pid)
            segments.append(
                None
                if s is None
                else interpolate_to_length(s, L, "step", spans[cap.label])
            )
        present = [seg for seg in segments if seg is not None]
        mean = float(np.concatenate(present).mean())
        series_out[pid] = np.concatenate(
            [seg if seg is not None else np.full(L, mean) for seg in segments]
        )

    canonical_out: dict[str, np.ndarray] = {}
    for cap in captures:
        if cap.canonical is None:
            continue
        segments = []
        own = interpolate_to_length(cap.canonical, L, "cubic", spans[cap.label])
        mean = float(own.mean())
        for other in captures:
            segments.append(own if other.label == cap.label else np.full(L, mean))
        canonical_out[cap.label] = np.concatenate(segments)
    return series_out, canonical_out


@dataclass(frozen=True)
class Scaler:
    """Per-coordinate min-max ranges learned from training captures."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self) -> None:
        lo = np.asarray(self.lo, dtype=float)
        hi = np.asarray(self.hi, dtype=float)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("scaler bounds must be 1-d and congruent")
        if np.any(hi < lo):
            raise ValueError("scaler max must be >= min")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    def transform(self, x: np.ndarray) -> np.ndarray:
        """Map to [0,1] per coordinate; values beyond the training range clamp."""
        x = np.asarray(x, dtype=float)
        return np.clip((x - self.lo) / (self.hi - self.lo), 0.0, 1.0)


def fit_scaler(
    captures: Iterable[StateCapture],
    members: Sequence[BytePairId],
) -> Scaler:
    """Scan training captures for each member's min and max raw value."""
    members = list(members)
    lo = {m: None for m in members}
    hi = {m: None for m in members}
    wanted = set(members)
    for cap in captures:
        for frame in cap.frames:
            for pid, value in decompose(frame):
                if pid not in wanted:
                    continue
                if lo[pid] is None or value < lo[pid]:
                    lo[pid] = value
                if hi[pid] is None or value > hi[pid]:
                    hi[pid] = value
    missing = [str(m) for m in members if lo[m] is None]
    if missing:
        raise UnknownMember(f"never observed in training captures: {missing}")
    flat = [m for m in members if lo[m] == hi[m]]
    if flat:
        raise ConstantSeries(
            f"constant in training data (should have been filtered): "
            f"{[str(m) for m in flat]}"
        )
    return Scaler(
        np.array([lo[m] for m in members], dtype=float),
        np.array([hi[m] for m in members], dtype=float),
    )


@dataclass(frozen=True)
class Observation:
    """The vector of one cluster's current byte-pair values at one instant."""

    time: float
    x: np.ndarray


@dataclass
class ObservationStats:
    """Bookkeeping for one observation stream pass."""

    frames_total: int = 0
    frames_applied: int = 0
    emitted: int = 0
    ignored_ids: set = field(default_factory=set)


def _parse_emit(emit: str) -> tuple[str, float | None]:
    if emit == "per-message":
        return "per-message", None
    if emit.startswith("rate:"):
        try:
            hz = float(emit[len("rate:"):])
        except ValueError:
            raise ValueError(f"bad emit spec {emit!r}") from None
        if hz <= 0:
            raise ValueError(f"emit rate must be positive, got {hz}")
        return "rate", hz
    raise ValueError(f"emit must be 'per-message' or 'rate:<hz>', got {emit!r}")


def observation_stream(
    frames: Iterable[CanFrame],
    members: Sequence[BytePairId],
    scaler: Scaler | None = None,
    emit: str = "per-message",
    stats: ObservationStats | None = None,
) -> Iterator[Observation]:
    """Turn asynchronous frames into synchronous observation vectors.

    A latest-value register is kept per member. Nothing is emitted until
    every member has been seen once (warm-up). per-message mode then emits
    one observation for every frame that touches a member; rate mode emits
    on a fixed grid anchored at warm-up completion, each grid point seeing
    exactly the frames at or before it. With scaler=None coordinates are
    raw values; otherwise they are min-max scaled and clamped to [0,1].

    Non-member byte pairs are ignored but counted in `stats` so callers
    can report signals the model has never seen.
    """
    members = list(members)
    positions = {m: i for i, m in enumerate(members)}
    if len(positions) != len(members):
        raise ValueError("duplicate member ids")
    if not members:
        raise ValueError("members must be non-empty")
    mode, hz = _parse_emit(emit)
    stats = stats if stats is not None else ObservationStats()

    reg = np.zeros(len(members), dtype=float)
    seen = np.zeros(len(members), dtype=bool)
    n_seen = 0
    warm = False
    anchor = 0.0
    next_k = 0
    step = 1.0 / hz if hz else 0.0
    last_t = None
    TIE = 1e-12  # grid time == frame time applies the frame first

    def make(t: float) -> Observation:
        stats.emitted += 1
        x = reg.copy() if scaler is None else scaler.transform(reg)
        return Observation(t, x)

    for frame in frames:
        stats.frames_total += 1
        if warm and mode == "rate":
            while anchor + next_k * step < frame.timestamp - TIE:
                yield make(anchor + next_k * step)
                next_k += 1
        touched = False
        for pid, value in decompose(frame):
            i = positions.get(pid)
            if i is None:
                stats.ignored_ids.add(pid)
                continue
            if not seen[i]:
                seen[i] = True
                n_seen += 1
            reg[i] = value
            touched = True
        if touched:
            stats.frames_applied += 1
        last_t = frame.timestamp
        if not warm:
            if n_seen == len(members):
                warm = True
                yield make(frame.timestamp)
                if mode == "rate":
                    anchor = frame.timestamp
                    next_k = 1
            continue
        if mode == "per-message" and touched:
            yield make(frame.timestamp)

    if warm and mode == "rate" and last_t is not None:
        while anchor + next_k * step <= last_t + TIE:
            yield make(anchor + next_k * step)
            next_k += 1
    if not warm:
        missing = [str(m) for m, s in zip(members, seen) if not s]
        if missing:
            raise UnknownMember(f"stream never carried members: {missing}")
