"""Command-line entry point: simulate, cluster, train, calibrate, detect, bench.

Every command is a thin composition of library calls plus file I/O. All
randomness flows from --seed through named sub-streams, outputs are
written atomically (temp file + rename, so failures leave nothing
behind), and every JSON artifact embeds the config that produced it.
Exit codes: 0 success, 1 input/validation problem, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace as _dc_replace
from pathlib import Path

import numpy as np

from . import __version__
from .artifacts import (
    ArtifactError,
    load_attack,
    load_captures,
    load_cluster_model,
    load_diffusion_model,
    load_manifest,
    load_thresholds,
    load_truth,
    load_vehicle,
    save_cluster_model,
    save_diffusion_model,
    save_thresholds,
    save_truth,
    save_vehicle,
    write_alerts_jsonl,
    write_canonical_csv,
    write_heatmap_csv,
    write_trace_csv,
)
from .can_codec import CanFrame, CodecError, read_log, write_log
from .cocluster import (
    CanonicalId,
    cluster_heatmap_order,
    correlation_matrix,
    reorder_matrix,
    spectral_cocluster,
)
from .can_codec import BytePairId
from .detect import (
    DETECTOR_CONT,
    DETECTOR_DIST,
    Thresholds,
    apply_cooldown,
    bench_detect,
    calibrate,
    detect_stream,
)
from .diffusion import RankCollapse, ZeroKernelRow, fit
from .pipeline import (
    ObservationStats,
    StateCapture,
    assemble_interpolated,
    fit_scaler,
    observation_stream,
)
from .simulate import (
    generate_ambient,
    inject_attack,
    make_constant_speed_vehicle,
    make_drive_cycle_vehicle,
)
from .util import atomic_write_text, named_rng

RUNTIME_ERRORS = (
    RankCollapse,
    ZeroKernelRow,
    np.linalg.LinAlgError,
    FloatingPointError,
    MemoryError,
)

BUILTIN_VEHICLES = {
    "builtin:constant-speed": make_constant_speed_vehicle,
    "builtin:drive-cycle": make_drive_cycle_vehicle,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0,
                        help="run seed; all randomness derives from it")
    common.add_argument("--format", choices=["candump", "csv"], default="candump",
                        help="capture file format for reads and writes")
    common.add_argument("--errors-json", action="store_true",
                        help="report failures as one JSON object on stdout")

    parser = argparse.ArgumentParser(
        prog="canshape",
        description="Shape-based CAN bus anomaly detection toolkit.",
    )
    parser.add_argument("--version", action="version", version=f"canshape {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("cluster", parents=[common],
                       help="group byte pairs by correlation co-clustering")
    p.add_argument("--manifest", required=True, help="capture manifest JSON")
    p.add_argument("--k", type=int, default=5, help="number of clusters")
    p.add_argument("--interp-len", type=int, default=5000,
                   help="samples per capture for correlation")
    p.add_argument("--out", required=True, help="cluster model JSON to write")
    p.add_argument("--heatmap", default=None,
                   help="optional CSV of the cluster-ordered correlation matrix")
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("train", parents=[common],
                       help="fit the manifold for one cluster")
    p.add_argument("--manifest", required=True)
    p.add_argument("--cluster-model", required=True)
    p.add_argument("--cluster", required=True,
                   help="cluster label (e.g. Speed) or index to train on")
    p.add_argument("--k", type=int, default=1000, help="landmark count")
    p.add_argument("--m", type=int, default=3, help="embedding dimension")
    p.add_argument("--gamma", default="auto",
                   help="kernel bandwidth, or 'auto' for the curve heuristic")
    p.add_argument("--emit", default="per-message",
                   help="observation emission: per-message or rate:<hz>")
    p.add_argument("--out", required=True, help="manifold model JSON to write")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("calibrate", parents=[common],
                       help="set detector thresholds from an ambient holdout")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True, help="ambient holdout capture")
    p.add_argument("--q", type=float, default=0.999, help="tail quantile")
    p.add_argument("--c", type=float, default=1.5, help="safety multiplier")
    p.add_argument("--r", type=int, default=5, help="nearest neighbors for distance")
    p.add_argument("--emit", default="per-message")
    p.add_argument("--out", required=True, help="thresholds JSON to write")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("detect", parents=[common],
                       help="score a capture against a trained manifold")
    p.add_argument("--model", required=True)
    p.add_argument("--thresholds", required=True)
    p.add_argument("--input", required=True, help="capture to score")
    p.add_argument("--trace", default=None, help="statistic trace CSV to write")
    p.add_argument("--alerts", default=None, help="alert JSON-lines to write")
    p.add_argument("--r", type=int, default=5)
    p.add_argument("--emit", default="per-message")
    p.add_argument("--cooldown", type=float, default=0.0,
                   help="suppress repeat alerts within this many ms")
    p.add_argument("--truth", default=None,
                   help="optional truth JSON; prints detection metrics")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("simulate", parents=[common],
                       help="generate a synthetic capture, optionally attacked")
    p.add_argument("--vehicle", required=True,
                   help="vehicle spec JSON, or builtin:constant-speed / "
                        "builtin:drive-cycle")
    p.add_argument("--attack", default=None, help="attack spec JSON")
    p.add_argument("--out", required=True, help="capture log to write")
    p.add_argument("--truth", default=None,
                   help="ground-truth JSON to write (with --attack)")
    p.add_argument("--ambient-dir", default=None,
                   help="also write per-state logs, reference CSVs and a "
                        "manifest into this directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("bench", parents=[common],
                       help="measure per-observation detection throughput")
    p.add_argument("--model", required=True)
    p.add_argument("--thresholds", default=None)
    p.add_argument("--input", default=None, help="capture to replay")
    p.add_argument("--synthetic", type=int, default=None,
                   help="time this many synthetic observations instead")
    p.add_argument("--rate", type=float, default=2000.0,
                   help="bus frame rate to compare against (obs/s)")
    p.add_argument("--r", type=int, default=5)
    p.add_argument("--emit", default="per-message")
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except RUNTIME_ERRORS as exc:
        return _fail(args, exc, 2)
    except (ValueError, OSError, KeyError) as exc:
        return _fail(args, exc, 1)
    except Exception as exc:  # noqa: BLE001 - last-resort CLI boundary
        return _fail(args, exc, 2)


def _fail(args, exc: BaseException, code: int) -> int:
    if getattr(args, "errors_json", False):
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}))
    else:
        print(f"canshape {args.command}: error: {exc}", file=sys.stderr)
    return code


def _config(args, keys: list[str]) -> dict:
    cfg = {"command": args.command, "seed": args.seed}
    for key in keys:
        cfg[key] = getattr(args, key.replace("-", "_"))
    return cfg


def _stream_capture(path, fmt, model, emit):
    frames, _ = read_log(path, format=fmt)
    stats = ObservationStats()
    obs = list(observation_stream(
        frames, model.member_ids, model.scaler, emit, stats=stats
    ))
    return obs, stats


def cmd_cluster(args) -> int:
    manifest = load_manifest(args.manifest)
    captures = load_captures(manifest)
    series, canonical = assemble_interpolated(captures, L=args.interp_len)
    corr = correlation_matrix(series, canonical)
    model = spectral_cocluster(corr, k=args.k, seed=args.seed)
    config = _config(args, ["manifest", "k", "interp_len", "out", "heatmap"])
    save_cluster_model(args.out, model, config)
    if args.heatmap:
        order = cluster_heatmap_order(model, corr)
        write_heatmap_csv(args.heatmap, order, reorder_matrix(corr, order))
    labeled = {c: lab for c, lab in sorted(model.labels.items())}
    print(f"clustered {len(corr.ids)} signals into {model.cluster_count} groups "
          f"(row/column disagreements: {model.disagreement_count})")
    for c in range(model.cluster_count):
        name = labeled.get(c, "unlabeled")
        print(f"  cluster {c} [{name}]: {len(model.members(c))} signals")
    print(f"wrote {args.out}")
    return 0


def cmd_train(args) -> int:
    manifest = load_manifest(args.manifest)
    captures = load_captures(manifest)
    cluster_model = load_cluster_model(args.cluster_model)
    try:
        cluster_idx = (
            int(args.cluster)
            if args.cluster.isdigit()
            else cluster_model.cluster_for_label(args.cluster)
        )
    except KeyError:
        raise ArtifactError(
            f"no cluster labeled {args.cluster!r} in {args.cluster_model}; "
            f"labels: {sorted(cluster_model.labels.values())}"
        ) from None
    members = [sid for sid in cluster_model.members(cluster_idx)
               if isinstance(sid, BytePairId)]
    if not members:
        raise ArtifactError(f"cluster {args.cluster!r} has no real byte pairs")

    scaler = fit_scaler(captures, members)
    observations = []
    for cap in captures:
        observations.extend(observation_stream(cap.frames, members, scaler, args.emit))
    X = np.vstack([o.x for o in observations])
    k = args.k
    if k > len(X):
        print(f"note: only {len(X)} observations; lowering landmarks from {k}")
        k = len(X)
    gamma = args.gamma if args.gamma == "auto" else float(args.gamma)
    model = fit(X, k=k, m=args.m, gamma=gamma, seed=args.seed,
                member_ids=members, scaler=scaler)
    config = _config(args, ["manifest", "cluster_model", "cluster", "k", "m",
                            "gamma", "emit", "out"])
    save_diffusion_model(args.out, model, config)
    lam = ", ".join(f"{v:.6f}" for v in model.eigvals)
    print(f"trained on {model.n} observations of {len(members)} signals: "
          f"k={model.k}, m={model.m}, gamma={model.gamma:.6g}")
    print(f"  leading eigenvalues: {lam}")
    print(f"wrote {args.out}")
    return 0


def cmd_calibrate(args) -> int:
    model = load_diffusion_model(args.model)
    obs, _ = _stream_capture(args.input, args.format, model, args.emit)
    th = calibrate(model, obs, q=args.q, c=args.c, r=args.r)
    config = _config(args, ["model", "input", "q", "c", "r", "emit", "out"])
    save_thresholds(args.out, th, len(obs), config)
    print(f"calibrated on {len(obs)} observations: "
          f"k_dist={th.k_dist:.6g}, k_cont={th.k_cont:.6g}")
    print(f"wrote {args.out}")
    return 0


def cmd_detect(args) -> int:
    model = load_diffusion_model(args.model)
    thresholds = load_thresholds(args.thresholds)
    obs, stats = _stream_capture(args.input, args.format, model, args.emit)
    alerts, trace = detect_stream(model, thresholds, obs, r=args.r)
    if args.cooldown > 0:
        alerts = apply_cooldown(alerts, args.cooldown / 1000.0)
    if args.trace:
        write_trace_csv(args.trace, trace)
    if args.alerts:
        write_alerts_jsonl(args.alerts, alerts)
    n_dist = sum(1 for a in alerts if a.detector == DETECTOR_DIST)
    n_cont = sum(1 for a in alerts if a.detector == DETECTOR_CONT)
    print(f"{len(obs)} observations: {n_dist} distance alerts, "
          f"{n_cont} discontinuity alerts")
    if stats.ignored_ids:
        print(f"note: {len(stats.ignored_ids)} byte pairs in the capture are "
              f"not cluster members and were ignored")
    if args.truth:
        from .simulate import evaluate

        windows = load_truth(args.truth)
        res = evaluate(alerts, windows, [o.time for o in obs])
        lat = ["-" if v is None else f"{v:.3f}s" for v in res.latencies]
        print(f"truth: {res.detected}/{len(windows)} windows detected, "
              f"latencies {lat}, false alarm rate {res.false_alarm_rate:.4%}")
    for out in (args.trace, args.alerts):
        if out:
            print(f"wrote {out}")
    return 0


def cmd_simulate(args) -> int:
    if args.vehicle in BUILTIN_VEHICLES:
        vehicle = BUILTIN_VEHICLES[args.vehicle]()
    else:
        vehicle = load_vehicle(args.vehicle)
    captures = generate_ambient(vehicle, seed=args.seed)

    if args.ambient_dir:
        amb = Path(args.ambient_dir)
        amb.mkdir(parents=True, exist_ok=True)
        entries = []
        ext = "log" if args.format == "candump" else "csv"
        for cap in captures:
            log_name = f"{cap.label.lower()}.{ext}"
            canon_name = f"{cap.label.lower()}_reference.csv"
            write_log(amb / log_name, cap.frames, format=args.format)
            write_canonical_csv(amb / canon_name, cap.canonical)
            entries.append({"label": cap.label, "path": log_name,
                            "format": args.format, "canonical": canon_name})
        atomic_write_text(
            amb / "manifest.json",
            json.dumps({"version": 1, "captures": entries}, indent=2) + "\n",
        )
        print(f"wrote ambient corpus ({len(entries)} captures) to {amb}")

    capture = _concat_captures(captures)
    truth_windows = None
    if args.attack:
        spec = load_attack(args.attack)
        capture, truth_windows = inject_attack(capture, spec, seed=args.seed)
    write_log(args.out, capture.frames, format=args.format)
    print(f"wrote {len(capture.frames)} frames over {capture.duration:.1f}s "
          f"to {args.out}")
    if args.attack:
        truth_path = args.truth or (args.out + ".truth.json")
        config = _config(args, ["vehicle", "attack", "out"])
        save_truth(truth_path, spec, truth_windows, config)
        print(f"wrote {truth_path}")
    return 0


def _concat_captures(captures: list[StateCapture]) -> StateCapture:
    if len(captures) == 1:
        return captures[0]
    frames: list[CanFrame] = []
    canon_t, canon_v = [], []
    offset = 0.0
    for cap in captures:
        frames.extend(_dc_replace(f, timestamp=f.timestamp + offset)
                      for f in cap.frames)
        if cap.canonical is not None:
            canon_t.extend(cap.canonical.times + offset)
            canon_v.extend(cap.canonical.values)
        offset += cap.duration
    from .pipeline import CanonicalSeries

    return StateCapture(
        label="+".join(c.label for c in captures),
        frames=frames,
        duration=offset,
        canonical=CanonicalSeries(np.array(canon_t), np.array(canon_v))
        if canon_t else None,
    )


def cmd_bench(args) -> int:
    model = load_diffusion_model(args.model)
    thresholds = (
        load_thresholds(args.thresholds)
        if args.thresholds
        else Thresholds(k_dist=1e18, k_cont=1e18)
    )
    if (args.input is None) == (args.synthetic is None):
        raise ArtifactError("bench needs exactly one of --input or --synthetic")
    if args.input:
        obs, _ = _stream_capture(args.input, args.format, model, args.emit)
    else:
        from .pipeline import Observation

        rng = named_rng(args.seed, "bench-synthetic")
        picks = rng.integers(0, model.k, size=args.synthetic)
        X = model.landmarks[picks] + rng.normal(0, 0.01, (args.synthetic, model.dim))
        obs = [Observation(i * 1e-3, x) for i, x in enumerate(X)]
    report = bench_detect(model, thresholds, obs, r=args.r)
    verdict = "meets" if report.obs_per_s >= args.rate else "BELOW"
    print(f"{report.observations} observations in {report.elapsed_s:.3f}s: "
          f"{report.obs_per_s:.0f} obs/s ({verdict} the {args.rate:.0f}/s bus rate)")
    print(f"latency p50 {report.p50_ms:.3f} ms, p99 {report.p99_ms:.3f} ms; "
          f"{report.alerts} alerts")
    return 0


if __name__ == "__main__":
    sys.exit(main())
