"""File formats: model artifacts, manifests, vehicle/attack specs, outputs.

Tool-written JSON artifacts share one envelope:

    {"version": 1, "tool_version": "...", "config": {...}, "payload": {...}}

with the payload carrying a "kind" tag. User-authored inputs (capture
manifests, vehicle and attack specs) are bare versioned JSON documents so
they stay easy to write by hand. Numbers are emitted in shortest
round-trip decimal form, and nothing here embeds wall-clock time, so a
rerun with the same inputs produces byte-identical files.
"""

from __future__ import annotations

import json
from dataclasses import asdict
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import __version__
from .can_codec import BytePairId
from .cocluster import CanonicalId, CoClusterModel, parse_signal_id
from .detect import Alert, Thresholds, TraceRow
from .diffusion import DiffusionModel
from .pipeline import CanonicalSeries, Scaler, StateCapture
from .simulate import AttackSpec, LatentVehicle, Sensor, StateSpec
from .util import atomic_write_text, fmt_float

ARTIFACT_VERSION = 1


class ArtifactError(ValueError):
    """A file failed structural validation."""


def to_jsonable(obj):
    """Recursively convert numpy containers and ids into JSON-safe values."""
    if isinstance(obj, (BytePairId, CanonicalId)):
        return str(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, Mapping):
        return {to_jsonable(k) if not isinstance(k, str) else k: to_jsonable(v)
                for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    return obj


def dump_envelope(path: str | Path, kind: str, config: Mapping, payload: Mapping) -> None:
    doc = {
        "version": ARTIFACT_VERSION,
        "tool_version": __version__,
        "config": to_jsonable(dict(config)),
        "payload": {"kind": kind, **to_jsonable(dict(payload))},
    }
    atomic_write_text(path, json.dumps(doc, indent=2) + "\n")


def load_envelope(path: str | Path, kind: str) -> tuple[dict, dict]:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ArtifactError(f"{path}: not valid JSON ({exc})") from None
    if not isinstance(doc, dict) or doc.get("version") != ARTIFACT_VERSION:
        raise ArtifactError(
            f"{path}: expected version {ARTIFACT_VERSION} envelope, "
            f"got version {doc.get('version')!r}"
        )
    payload = doc.get("payload")
    if not isinstance(payload, dict) or payload.get("kind") != kind:
        raise ArtifactError(
            f"{path}: expected payload kind {kind!r}, got "
            f"{payload.get('kind') if isinstance(payload, dict) else None!r}"
        )
    return doc.get("config", {}), payload


# ---------------------------------------------------------------- models

def save_cluster_model(path: str | Path, model: CoClusterModel, config: Mapping) -> None:
    dump_envelope(path, "cluster-model", config, {
        "k": model.cluster_count,
        "ids": [str(i) for i in model.ids],
        "assignment": {str(i): model.assignment[i] for i in model.ids},
        "labels": {str(c): lab for c, lab in sorted(model.labels.items())},
        "disagreement_count": model.disagreement_count,
    })


def load_cluster_model(path: str | Path) -> CoClusterModel:
    _, p = load_envelope(path, "cluster-model")
    try:
        ids = tuple(parse_signal_id(s) for s in p["ids"])
        assignment = {parse_signal_id(s): int(c) for s, c in p["assignment"].items()}
        labels = {int(c): str(lab) for c, lab in p["labels"].items()}
        return CoClusterModel(
            cluster_count=int(p["k"]),
            ids=ids,
            assignment=assignment,
            labels=labels,
            disagreement_count=int(p["disagreement_count"]),
        )
    except (KeyError, ValueError, TypeError) as exc:
        raise ArtifactError(f"{path}: bad cluster model ({exc})") from None


def save_diffusion_model(path: str | Path, model: DiffusionModel, config: Mapping) -> None:
    scaler = None
    if model.scaler is not None:
        scaler = {"lo": model.scaler.lo, "hi": model.scaler.hi}
    dump_envelope(path, "diffusion-model", config, {
        "gamma": model.gamma,
        "m": model.m,
        "k": model.k,
        "member_ids": [str(i) for i in model.member_ids or ()],
        "scaler": scaler,
        "landmarks": model.landmarks,
        "pinv": model.pinv,
        "eigvals": model.eigvals,
        "eigvecs": model.eigvecs,
        "train_embed": model.train_embed,
        "projection_cache": {"num": model.proj_num, "den": model.proj_den},
    })


def load_diffusion_model(path: str | Path) -> DiffusionModel:
    _, p = load_envelope(path, "diffusion-model")
    try:
        scaler = None
        if p.get("scaler") is not None:
            scaler = Scaler(
                np.array(p["scaler"]["lo"], dtype=float),
                np.array(p["scaler"]["hi"], dtype=float),
            )
        member_ids = tuple(BytePairId.parse(s) for s in p.get("member_ids", []))
        return DiffusionModel(
            gamma=float(p["gamma"]),
            m=int(p["m"]),
            landmarks=np.array(p["landmarks"], dtype=float),
            pinv=np.array(p["pinv"], dtype=float),
            eigvals=np.array(p["eigvals"], dtype=float),
            eigvecs=np.array(p["eigvecs"], dtype=float),
            train_embed=np.array(p["train_embed"], dtype=float),
            proj_num=np.array(p["projection_cache"]["num"], dtype=float),
            proj_den=np.array(p["projection_cache"]["den"], dtype=float),
            member_ids=member_ids or None,
            scaler=scaler,
        )
    except (KeyError, ValueError, TypeError) as exc:
        raise ArtifactError(f"{path}: bad diffusion model ({exc})") from None


def save_thresholds(path: str | Path, th: Thresholds, holdout_n: int, config: Mapping) -> None:
    dump_envelope(path, "thresholds", config, {
        "k_dist": th.k_dist,
        "k_cont": th.k_cont,
        "q": th.q,
        "c": th.c,
        "holdout_observations": holdout_n,
    })


def load_thresholds(path: str | Path) -> Thresholds:
    _, p = load_envelope(path, "thresholds")
    try:
        return Thresholds(
            k_dist=float(p["k_dist"]),
            k_cont=float(p["k_cont"]),
            q=float(p["q"]),
            c=float(p["c"]),
        )
    except (KeyError, ValueError, TypeError) as exc:
        raise ArtifactError(f"{path}: bad thresholds ({exc})") from None


def save_truth(path: str | Path, spec: AttackSpec, windows, config: Mapping) -> None:
    dump_envelope(path, "truth", config, {
        "attack_kind": spec.kind,
        "targets": [str(t) for t in spec.targets],
        "windows": [[s, e] for s, e in windows],
    })


def load_truth(path: str | Path) -> list[tuple[float, float]]:
    _, p = load_envelope(path, "truth")
    return [(float(s), float(e)) for s, e in p["windows"]]


# ------------------------------------------------------------- user inputs

def _load_bare(path: str | Path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ArtifactError(f"{path}: not valid JSON ({exc})") from None
    if not isinstance(doc, dict) or doc.get("version") != ARTIFACT_VERSION:
        raise ArtifactError(f"{path}: expected a version-{ARTIFACT_VERSION} document")
    return doc


def load_manifest(path: str | Path) -> list[dict]:
    """Read a capture manifest; relative paths resolve against the manifest."""
    path = Path(path)
    doc = _load_bare(path)
    captures = doc.get("captures")
    if not isinstance(captures, list) or not captures:
        raise ArtifactError(f"{path}: manifest needs a non-empty 'captures' list")
    out = []
    for i, entry in enumerate(captures):
        if not isinstance(entry, dict) or "label" not in entry or "path" not in entry:
            raise ArtifactError(f"{path}: capture {i} needs 'label' and 'path'")
        out.append({
            "label": str(entry["label"]),
            "path": str((path.parent / entry["path"]).resolve()),
            "format": str(entry.get("format", "candump")),
            "canonical": (
                str((path.parent / entry["canonical"]).resolve())
                if entry.get("canonical")
                else None
            ),
        })
    return out


def read_canonical_csv(path: str | Path) -> CanonicalSeries:
    times, values = [], []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if lineno == 1 and line.lower().startswith("time"):
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise ArtifactError(f"{path}:{lineno}: expected 'time,value'")
            try:
                times.append(float(parts[0]))
                values.append(float(parts[1]))
            except ValueError:
                raise ArtifactError(f"{path}:{lineno}: bad number") from None
    if not times:
        raise ArtifactError(f"{path}: empty reference series")
    return CanonicalSeries(np.array(times), np.array(values))


def write_canonical_csv(path: str | Path, series: CanonicalSeries) -> None:
    lines = ["time,value"]
    lines += [f"{fmt_float(t)},{fmt_float(v)}"
              for t, v in zip(series.times, series.values)]
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_captures(manifest: Sequence[dict]) -> list[StateCapture]:
    from .can_codec import read_log

    captures = []
    for entry in manifest:
        frames, _ = read_log(entry["path"], format=entry["format"])
        if not frames:
            raise ArtifactError(f"{entry['path']}: capture is empty")
        canonical = (
            read_canonical_csv(entry["canonical"]) if entry["canonical"] else None
        )
        captures.append(StateCapture(
            label=entry["label"],
            frames=frames,
            duration=frames[-1].timestamp or 1.0,
            canonical=canonical,
        ))
    return captures


def load_vehicle(path: str | Path) -> LatentVehicle:
    doc = _load_bare(path)
    try:
        states = tuple(
            StateSpec(str(s["label"]), float(s["duration"]), dict(s["latents"]))
            for s in doc["states"]
        )
        sensors = tuple(
            Sensor(
                aid=_parse_aid(s["aid"]),
                pair=int(s["pair"]),
                kind=str(s.get("kind", "affine")),
                weights=dict(s.get("weights", {})),
                offset=float(s.get("offset", 0.0)),
                latent=s.get("latent"),
                center=float(s.get("center", 0.0)),
                width=float(s.get("width", 1.0)),
                amp=float(s.get("amp", 0.0)),
                freq=float(s.get("freq", 1.0)),
                phase=float(s.get("phase", 0.0)),
                value=float(s.get("value", 0.0)),
                noise=float(s.get("noise", 0.0)),
            )
            for s in doc["sensors"]
        )
        periods = {_parse_aid(a): float(p) for a, p in doc["aid_periods_ms"].items()}
        return LatentVehicle(
            latents=tuple(doc["latents"]),
            canonical_latent=str(doc["canonical_latent"]),
            states=states,
            sensors=sensors,
            aid_periods_ms=periods,
        )
    except (KeyError, ValueError, TypeError) as exc:
        raise ArtifactError(f"{path}: bad vehicle spec ({exc})") from None


def save_vehicle(path: str | Path, vehicle: LatentVehicle) -> None:
    doc = {
        "version": ARTIFACT_VERSION,
        "latents": list(vehicle.latents),
        "canonical_latent": vehicle.canonical_latent,
        "states": [
            {"label": s.label, "duration": s.duration,
             "latents": to_jsonable(dict(s.latents))}
            for s in vehicle.states
        ],
        "sensors": [to_jsonable(asdict(s)) for s in vehicle.sensors],
        "aid_periods_ms": {f"0x{aid:X}": p
                           for aid, p in sorted(vehicle.aid_periods_ms.items())},
    }
    atomic_write_text(path, json.dumps(doc, indent=2) + "\n")


def _parse_aid(value) -> int:
    if isinstance(value, int):
        return value
    return int(str(value), 16)


def load_attack(path: str | Path) -> AttackSpec:
    doc = _load_bare(path)
    try:
        return AttackSpec(
            kind=str(doc["kind"]),
            targets=tuple(BytePairId.parse(t) for t in doc["targets"]),
            windows=tuple((float(s), float(e)) for s, e in doc["windows"]),
            delta=None if doc.get("delta") is None else float(doc["delta"]),
            frequency_hz=(
                None if doc.get("frequency_hz") is None
                else float(doc["frequency_hz"])
            ),
            source=(
                None if doc.get("source") is None
                else (float(doc["source"][0]), float(doc["source"][1]))
            ),
        )
    except (KeyError, ValueError, TypeError) as exc:
        raise ArtifactError(f"{path}: bad attack spec ({exc})") from None


def save_attack(path: str | Path, spec: AttackSpec) -> None:
    doc = {
        "version": ARTIFACT_VERSION,
        "kind": spec.kind,
        "targets": [str(t) for t in spec.targets],
        "windows": [[s, e] for s, e in spec.windows],
        "delta": spec.delta,
        "frequency_hz": spec.frequency_hz,
        "source": list(spec.source) if spec.source else None,
    }
    atomic_write_text(path, json.dumps(doc, indent=2) + "\n")


# ----------------------------------------------------------------- outputs

TRACE_HEADER = "time,manifold_dist,increment_dist,alert_dist,alert_cont"


def write_trace_csv(path: str | Path, trace: Sequence[TraceRow]) -> None:
    lines = [TRACE_HEADER]
    for row in trace:
        incr = "" if row.increment_dist is None else fmt_float(row.increment_dist)
        lines.append(
            f"{fmt_float(row.time)},{fmt_float(row.manifold_dist)},{incr},"
            f"{int(row.alert_dist)},{int(row.alert_cont)}"
        )
    atomic_write_text(path, "\n".join(lines) + "\n")


def write_alerts_jsonl(path: str | Path, alerts: Sequence[Alert]) -> None:
    lines = [
        json.dumps({
            "time": a.time,
            "detector": a.detector,
            "statistic": a.statistic,
            "threshold": a.threshold,
            "observation_index": a.observation_index,
        })
        for a in alerts
    ]
    atomic_write_text(path, "\n".join(lines) + ("\n" if lines else ""))


def write_heatmap_csv(path: str | Path, order: Sequence, matrix: np.ndarray) -> None:
    names = [str(i) for i in order]
    lines = ["id," + ",".join(names)]
    for name, row in zip(names, matrix):
        lines.append(name + "," + ",".join(fmt_float(v) for v in row))
    atomic_write_text(path, "\n".join(lines) + "\n")
