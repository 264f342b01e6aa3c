"""Desk-scale traffic generation: a latent vehicle, attacks, and scoring.

The generator follows the premise that bus traffic has far fewer degrees
of freedom than signals: a handful of smooth latent variables (speed,
throttle, brake) drive every sensor reading through simple monotone or
periodic maps plus noise and 16-bit quantization. Each AID transmits on
a fixed period with a little jitter, like real ECUs. Attacks are applied
to finished captures: injection floods chosen byte pairs with perturbed
values at a multiple of the native rate; replay re-transmits a recorded
slice of traffic verbatim inside each attack window.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Sequence

import numpy as np

from .can_codec import BytePairId, CanFrame, reassemble
from .pipeline import CanonicalSeries, StateCapture
from .util import named_rng

CANONICAL_RATE_HZ = 50.0
CANONICAL_NOISE = 0.05  # measurement noise keeps an idle state's series alive
JITTER_FRACTION = 0.05
INJECTION_RATE_MULTIPLE = 10.0
INJECTION_DELTA_FRACTION = 0.10


class SimulateError(ValueError):
    """Base class for simulator failures."""


class WindowOutOfRange(SimulateError):
    """An attack window does not fit inside the capture."""


class UnknownTarget(SimulateError):
    """An attack target never appears in the ambient capture."""


@dataclass(frozen=True)
class Sensor:
    """How one byte pair reads the latent state.

    kind="affine": offset + sum(weights[latent] * latent(t)), monotone in
    each driving latent. kind="sine": center + amp*sin(2*pi*freq*latent + phase),
    periodic in one latent. kind="saturating": offset + amp*tanh((latent - center)
    / width), a monotone gauge whose scale compresses toward its ends.
    kind="constant": a fixed value. All kinds add Gaussian noise (sigma in
    raw units) then round and clamp to [0, 65535].
    """

    aid: int
    pair: int
    kind: str = "affine"
    weights: Mapping[str, float] = field(default_factory=dict)
    offset: float = 0.0
    latent: str | None = None
    center: float = 0.0
    amp: float = 0.0
    freq: float = 1.0
    phase: float = 0.0
    width: float = 1.0
    value: float = 0.0
    noise: float = 0.0

    def evaluate(self, latents: Mapping[str, np.ndarray]) -> np.ndarray:
        if self.kind == "affine":
            out = np.full_like(next(iter(latents.values())), self.offset)
            for name, w in self.weights.items():
                out = out + w * latents[name]
            return out
        if self.kind == "sine":
            x = latents[self.latent]
            return self.center + self.amp * np.sin(
                2.0 * math.pi * self.freq * x + self.phase
            )
        if self.kind == "saturating":
            x = latents[self.latent]
            return self.offset + self.amp * np.tanh((x - self.center) / self.width)
        if self.kind == "constant":
            return np.full_like(next(iter(latents.values())), self.value)
        raise ValueError(f"unknown sensor kind {self.kind!r}")


@dataclass(frozen=True)
class StateSpec:
    """One entry of the drive schedule: a label, a duration, latent curves."""

    label: str
    duration: float
    latents: Mapping[str, Mapping]

    def __post_init__(self) -> None:
        if self.duration <= 0:
            raise ValueError(f"state {self.label!r}: duration must be positive")


@dataclass(frozen=True)
class LatentVehicle:
    latents: tuple[str, ...]
    canonical_latent: str
    states: tuple[StateSpec, ...]
    sensors: tuple[Sensor, ...]
    aid_periods_ms: Mapping[int, float]

    def __post_init__(self) -> None:
        if not self.latents:
            raise ValueError("need at least one latent variable")
        if self.canonical_latent not in self.latents:
            raise ValueError(f"canonical latent {self.canonical_latent!r} undefined")
        for aid, period in self.aid_periods_ms.items():
            if period <= 0:
                raise ValueError(f"aid 0x{aid:X}: period must be positive")
        for s in self.sensors:
            if s.aid not in self.aid_periods_ms:
                raise ValueError(f"sensor on 0x{s.aid:X} has no transmit period")


def _build_latent(
    spec: Mapping, duration: float, rng: np.random.Generator
) -> Callable[[np.ndarray], np.ndarray]:
    kind = spec.get("kind", "constant")
    if kind == "constant":
        v = float(spec["value"])
        return lambda t: np.full_like(np.asarray(t, dtype=float), v)
    if kind == "ramp":
        a, b = float(spec["start"]), float(spec["end"])
        return lambda t: a + (b - a) * np.asarray(t, dtype=float) / duration
    if kind == "sine":
        base = float(spec["base"])
        amp = float(spec["amp"])
        period = float(spec["period"])
        phase = float(spec.get("phase", 0.0))
        return lambda t: base + amp * np.sin(
            2.0 * math.pi * np.asarray(t, dtype=float) / period + phase
        )
    if kind == "wander":
        # smooth random drift that covers its band evenly: a rounded
        # triangle sweep (asin of a sine stays smooth for k < 1 and its
        # dwell is near-uniform, unlike a plain sinusoid that piles up at
        # the turnarounds) plus a faster low-amplitude wobble, with seeded
        # phases and slightly detuned periods so captures differ per seed
        base = float(spec["base"])
        amp = float(spec["amp"])
        period = float(spec["period"])
        k = 0.95
        mults = rng.uniform(0.9, 1.1, 2)
        phases = rng.uniform(0.0, 2.0 * math.pi, 2)
        a_sweep = 0.85 * amp / math.asin(k)
        a_wobble = 0.15 * amp

        def wander(t: np.ndarray) -> np.ndarray:
            t = np.asarray(t, dtype=float)
            sweep = np.arcsin(
                k * np.sin(2.0 * math.pi * t * mults[0] / period + phases[0])
            )
            wobble = np.sin(
                2.0 * math.pi * t * mults[1] * 2.618 / period + phases[1]
            )
            return base + a_sweep * sweep + a_wobble * wobble

        return wander
    raise ValueError(f"unknown latent kind {kind!r}")


def generate_ambient(vehicle: LatentVehicle, seed: int = 0) -> list[StateCapture]:
    """Emit one capture per scheduled state, with the true canonical series.

    Frame k of an AID goes out at (k + u_k)·period with u_k uniform in
    [0, 5%] — fixed cadence with transmission jitter. The canonical series
    samples the true canonical latent at 50 Hz plus slight measurement
    noise, mimicking an external reference instrument.
    """
    captures = []
    for state in vehicle.states:
        latfns = {
            name: _build_latent(
                state.latents[name],
                state.duration,
                named_rng(seed, f"latent:{state.label}:{name}"),
            )
            for name in vehicle.latents
        }
        sensors_by_aid: dict[int, list[Sensor]] = {}
        for s in vehicle.sensors:
            sensors_by_aid.setdefault(s.aid, []).append(s)

        frames: list[CanFrame] = []
        for aid in sorted(vehicle.aid_periods_ms):
            period = vehicle.aid_periods_ms[aid] / 1000.0
            count = int(math.floor(state.duration / period))
            if count == 0:
                continue
            jig = named_rng(seed, f"jitter:{state.label}:{aid:X}")
            times = (np.arange(count) + jig.uniform(0, JITTER_FRACTION, count)) * period
            times = times[times < state.duration]
            lat_at = {name: fn(times) for name, fn in latfns.items()}
            values = np.zeros((len(times), 4), dtype=np.int64)
            noise_rng = named_rng(seed, f"noise:{state.label}:{aid:X}")
            for s in sensors_by_aid.get(aid, []):
                raw = s.evaluate(lat_at)
                if s.noise > 0:
                    raw = raw + noise_rng.normal(0.0, s.noise, len(times))
                values[:, s.pair] = np.clip(np.rint(raw), 0, 0xFFFF).astype(np.int64)
            for t, row in zip(times, values):
                frames.append(CanFrame(float(t), aid, reassemble(row.tolist())))
        frames.sort(key=lambda f: f.timestamp)

        canon_t = np.arange(0.0, state.duration, 1.0 / CANONICAL_RATE_HZ)
        canon_rng = named_rng(seed, f"canonical:{state.label}")
        canon_v = latfns[vehicle.canonical_latent](canon_t) + canon_rng.normal(
            0.0, CANONICAL_NOISE, len(canon_t)
        )
        captures.append(
            StateCapture(
                label=state.label,
                frames=frames,
                duration=state.duration,
                canonical=CanonicalSeries(canon_t, canon_v),
            )
        )
    return captures


@dataclass(frozen=True)
class AttackSpec:
    """What to attack, where, and how hard.

    delta=None means 10% of each target's observed value range; a number
    applies the same raw offset to every target. frequency_hz=None means
    10x each target AID's native frame rate. `source` is the replayed
    time interval (replay kind only).
    """

    kind: str
    targets: tuple[BytePairId, ...]
    windows: tuple[tuple[float, float], ...]
    delta: float | None = None
    frequency_hz: float | None = None
    source: tuple[float, float] | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("injection", "replay"):
            raise ValueError(f"unknown attack kind {self.kind!r}")
        if not self.targets:
            raise ValueError("attack needs at least one target")
        if not self.windows:
            raise ValueError("attack needs at least one window")
        if self.frequency_hz is not None and self.frequency_hz <= 0:
            raise ValueError("injection frequency must be positive")
        if self.kind == "replay" and self.source is None:
            raise ValueError("replay attack needs a source interval")


def _check_windows(
    windows: Sequence[tuple[float, float]], duration: float
) -> list[tuple[float, float]]:
    ordered = sorted((float(s), float(e)) for s, e in windows)
    for s, e in ordered:
        if not (0.0 <= s < e <= duration):
            raise WindowOutOfRange(f"window [{s}, {e}] outside [0, {duration}]")
    for (_, e0), (s1, _) in zip(ordered, ordered[1:]):
        if s1 < e0:
            raise WindowOutOfRange(f"windows overlap at {s1}")
    return ordered


def inject_attack(
    capture: StateCapture, spec: AttackSpec, seed: int = 0
) -> tuple[StateCapture, list[tuple[float, float]]]:
    """Merge attack traffic into an ambient capture.

    Injection: inside each window, every target AID gets extra frames at
    the attack rate; the target pairs carry the latest authentic value
    plus delta, the remaining pairs copy the latest authentic frame, which
    is what a compromised node spoofing one signal would transmit. Replay:
    the source interval's frames for the target AIDs are re-emitted with
    shifted timestamps, clipped at the window end. Ambient frames are
    never modified. Returns the merged capture and the ground-truth
    windows.
    """
    windows = _check_windows(spec.windows, capture.duration)
    by_aid: dict[int, list[int]] = {}
    for t in spec.targets:
        by_aid.setdefault(t.aid, []).append(t.pair_index)
    aids_present = {f.aid for f in capture.frames}
    missing = sorted(set(by_aid) - aids_present)
    if missing:
        raise UnknownTarget(f"no ambient frames for AIDs {[hex(a) for a in missing]}")

    frames_by_aid: dict[int, list[CanFrame]] = {aid: [] for aid in by_aid}
    for f in capture.frames:
        if f.aid in frames_by_aid:
            frames_by_aid[f.aid].append(f)

    injected: list[CanFrame] = []
    if spec.kind == "injection":
        for aid, pairs in sorted(by_aid.items()):
            auth = frames_by_aid[aid]
            auth_times = np.array([f.timestamp for f in auth])
            auth_vals = np.array(
                [[(f.payload.ljust(8, b"\x00")[2 * i] << 8)
                  | f.payload.ljust(8, b"\x00")[2 * i + 1] for i in range(4)]
                 for f in auth],
                dtype=np.int64,
            )
            span = auth_times[-1] - auth_times[0]
            native_hz = (len(auth) - 1) / span if span > 0 else 1.0
            freq = spec.frequency_hz or INJECTION_RATE_MULTIPLE * native_hz
            deltas = {}
            for p in sorted(set(pairs)):
                if spec.delta is not None:
                    deltas[p] = float(spec.delta)
                else:
                    rng = np.ptp(auth_vals[:, p])
                    deltas[p] = INJECTION_DELTA_FRACTION * float(rng)
            for s, e in windows:
                n_shots = int(math.ceil((e - s) * freq))
                for k in range(n_shots):
                    t = s + k / freq
                    if t >= e:
                        break
                    base = int(np.searchsorted(auth_times, t, side="right")) - 1
                    base = max(base, 0)
                    row = auth_vals[base].copy()
                    for p in sorted(set(pairs)):
                        row[p] = int(np.clip(round(row[p] + deltas[p]), 0, 0xFFFF))
                    injected.append(CanFrame(t, aid, reassemble(row.tolist())))
    else:
        s0, e0 = spec.source
        if not (0.0 <= s0 < e0 <= capture.duration):
            raise WindowOutOfRange(f"replay source [{s0}, {e0}] outside capture")
        for aid in sorted(by_aid):
            src = [f for f in frames_by_aid[aid] if s0 <= f.timestamp < e0]
            for s, e in windows:
                for f in src:
                    t = f.timestamp - s0 + s
                    if t > e:
                        break
                    injected.append(replace(f, timestamp=t))

    merged = sorted(
        list(capture.frames) + injected, key=lambda f: f.timestamp
    )
    attacked = StateCapture(
        label=capture.label,
        frames=merged,
        duration=capture.duration,
        canonical=capture.canonical,
    )
    return attacked, windows


@dataclass(frozen=True)
class EvalResult:
    hits: tuple[bool, ...]
    latencies: tuple[float | None, ...]
    false_alarms: int
    ambient_observations: int

    @property
    def detected(self) -> int:
        return sum(self.hits)

    @property
    def false_alarm_rate(self) -> float:
        if self.ambient_observations == 0:
            return 0.0
        return self.false_alarms / self.ambient_observations


def evaluate(
    alerts: Sequence,
    windows: Sequence[tuple[float, float]],
    observation_times: Sequence[float],
    detector: str | None = None,
) -> EvalResult:
    """Score alerts against ground truth windows.

    A window counts as detected when at least one alert lands inside it
    (boundaries inclusive); latency is first-alert time minus window
    start. The false alarm rate divides out-of-window alerts by
    out-of-window observations. `detector` restricts scoring to one
    statistic; None scores all alerts together.
    """
    windows = [(float(s), float(e)) for s, e in windows]
    picked = [a for a in alerts if detector is None or a.detector == detector]

    def window_of(t: float) -> int | None:
        for i, (s, e) in enumerate(windows):
            if s <= t <= e:
                return i
        return None

    first: dict[int, float] = {}
    false_alarms = 0
    for a in picked:
        w = window_of(a.time)
        if w is None:
            false_alarms += 1
        elif w not in first or a.time < first[w]:
            first[w] = a.time
    ambient_obs = sum(1 for t in observation_times if window_of(t) is None)
    hits = tuple(i in first for i in range(len(windows)))
    latencies = tuple(
        first[i] - windows[i][0] if i in first else None for i in range(len(windows))
    )
    return EvalResult(hits, latencies, false_alarms, ambient_obs)


def make_constant_speed_vehicle(duration: float = 70.0) -> LatentVehicle:
    """Three latent variables, 24 sensors on six AIDs, ~100 frames/s total.

    The drive holds a roughly constant speed with gentle wander, the way a
    highway cruise looks on the bus. Sensor groups: wheel speeds and
    speed readouts follow the speed latent; engine quantities follow
    throttle; brake gauges follow brake; a few mixed sensors blend two
    latents; one pair is frozen to exercise downstream constant filtering.
    """
    speed = {"kind": "wander", "base": 55.0, "amp": 1.5, "period": 13.0}
    throttle = {"kind": "wander", "base": 30.0, "amp": 4.0, "period": 7.0}
    brake = {"kind": "wander", "base": 2.0, "amp": 0.8, "period": 5.0}
    sensors = (
        # wheel speeds, one per corner
        Sensor(0x100, 0, weights={"speed": 300.0}, offset=500, noise=8),
        Sensor(0x100, 1, weights={"speed": 301.0}, offset=480, noise=8),
        Sensor(0x100, 2, weights={"speed": 299.0}, offset=510, noise=8),
        Sensor(0x100, 3, weights={"speed": 300.5}, offset=495, noise=8),
        # speed readouts and engine state; the second readout is a gauge
        # with a compressed scale, nonlinear in speed but monotone
        Sensor(0x101, 0, weights={"speed": 180.0}, offset=150, noise=6),
        Sensor(0x101, 1, kind="saturating", latent="speed", center=54.6,
               width=1.4, amp=6000, offset=12000, noise=6),
        Sensor(0x101, 2, weights={"throttle": 500.0}, offset=2000, noise=25),
        Sensor(0x101, 3, weights={"speed": 40.0, "throttle": 250.0}, offset=800, noise=30),
        # pedal / fuel / intake
        Sensor(0x102, 0, weights={"throttle": 600.0}, offset=100, noise=25),
        Sensor(0x102, 1, weights={"throttle": 450.0, "speed": 20.0}, offset=300, noise=25),
        Sensor(0x102, 2, weights={"throttle": 380.0}, offset=8000, noise=25),
        Sensor(0x102, 3, kind="sine", latent="throttle", center=20000, amp=2000,
               freq=0.04, noise=30),
        # brake group, one inverted gauge, one frozen pair
        Sensor(0x103, 0, weights={"brake": 1200.0}, offset=200, noise=15),
        Sensor(0x103, 1, weights={"brake": 800.0}, offset=120, noise=15),
        Sensor(0x103, 2, weights={"brake": -900.0}, offset=30000, noise=15),
        Sensor(0x103, 3, kind="constant", value=12345, noise=0),
        # mixed chassis sensors
        Sensor(0x104, 0, weights={"speed": 150.0, "brake": -40.0}, offset=1000, noise=10),
        Sensor(0x104, 1, weights={"throttle": 90.0, "brake": 55.0}, offset=600, noise=20),
        Sensor(0x104, 2, weights={"speed": 60.0, "throttle": 60.0}, offset=400, noise=20),
        Sensor(0x104, 3, kind="sine", latent="speed", center=30000, amp=1500,
               freq=0.05, noise=30),
        # slow diagnostics; this speed gauge compresses above cruise,
        # complementing the below-cruise knee of 0x101:1
        Sensor(0x105, 0, kind="saturating", latent="speed", center=55.4,
               width=1.2, amp=9000, offset=20000, noise=8),
        Sensor(0x105, 1, weights={"brake": 500.0, "speed": -15.0}, offset=9000, noise=18),
        Sensor(0x105, 2, weights={"throttle": 300.0}, offset=4500, noise=18),
        Sensor(0x105, 3, weights={"speed": 100.0, "throttle": 100.0, "brake": 100.0},
               offset=2500, noise=24),
    )
    return LatentVehicle(
        latents=("speed", "throttle", "brake"),
        canonical_latent="speed",
        states=(
            StateSpec(
                "Speed", duration,
                {"speed": speed, "throttle": throttle, "brake": brake},
            ),
        ),
        sensors=sensors,
        aid_periods_ms={
            0x100: 40.0,
            0x101: 60.0,
            0x102: 40.0,
            0x103: 120.0,
            0x104: 60.0,
            0x105: 120.0,
        },
    )


def make_drive_cycle_vehicle() -> LatentVehicle:
    """The constant-speed vehicle driven through a five-state cycle."""
    base = make_constant_speed_vehicle()
    states = (
        StateSpec("KeyOn", 20.0, {
            "speed": {"kind": "constant", "value": 0.0},
            "throttle": {"kind": "wander", "base": 8.0, "amp": 1.0, "period": 6.0},
            "brake": {"kind": "wander", "base": 0.5, "amp": 0.3, "period": 4.0},
        }),
        StateSpec("Accelerating", 25.0, {
            "speed": {"kind": "ramp", "start": 0.0, "end": 60.0},
            "throttle": {"kind": "wander", "base": 70.0, "amp": 6.0, "period": 8.0},
            "brake": {"kind": "constant", "value": 0.0},
        }),
        StateSpec("Speed", 70.0, {
            "speed": {"kind": "wander", "base": 55.0, "amp": 1.5, "period": 13.0},
            "throttle": {"kind": "wander", "base": 30.0, "amp": 4.0, "period": 7.0},
            "brake": {"kind": "wander", "base": 2.0, "amp": 0.8, "period": 5.0},
        }),
        StateSpec("Braking", 20.0, {
            "speed": {"kind": "ramp", "start": 60.0, "end": 3.0},
            "throttle": {"kind": "constant", "value": 5.0},
            "brake": {"kind": "wander", "base": 60.0, "amp": 8.0, "period": 5.0},
        }),
        StateSpec("Reverse", 15.0, {
            "speed": {"kind": "ramp", "start": 0.0, "end": 8.0},
            "throttle": {"kind": "wander", "base": 15.0, "amp": 2.0, "period": 6.0},
            "brake": {"kind": "wander", "base": 10.0, "amp": 2.0, "period": 5.0},
        }),
    )
    return LatentVehicle(
        latents=base.latents,
        canonical_latent=base.canonical_latent,
        states=states,
        sensors=base.sensors,
        aid_periods_ms=base.aid_periods_ms,
    )
