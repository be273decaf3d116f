"""Command-line entry point.

Verbs:
  generate  synthesize trace sets (.vvdtrace, plus .vvddepth in scene mode)
  estimate  run a built-in estimator over a trace, write a .vvdest file
  compare   evaluate techniques over all set combinations, write CSV/JSON
  aging     sweep estimate age on one trace, write the curve CSV
  report    print a mean-per-technique table from a summary.json

All randomness flows from --seed. Exit code is nonzero on any configuration
or validation error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from typing import List, Optional

import numpy as np

from . import estimation, harness, scene, traceio
from .channel import ArModel, ChannelConfig, generate_trace
from .harness import ConfigError, RunConfig
from .types import EstimateRecord, TraceFormatError, TraceValidationError


def _add_link_args(p: argparse.ArgumentParser):
    p.add_argument("--n-taps", type=int, default=11)
    p.add_argument("--pre-cursor", type=int, default=6)
    p.add_argument("--spc", type=int, default=4, help="samples per chip")
    p.add_argument("--snr-db", type=float, default=20.0, help="inf for noiseless")
    p.add_argument("--phase-drift", type=float, default=0.0, help="rad/block std")


def _channel_config(args, seed: int) -> ChannelConfig:
    return ChannelConfig(
        n_taps=args.n_taps,
        pre_cursor_count=args.pre_cursor,
        samples_per_chip=args.spc,
        snr_db=args.snr_db,
        phase_drift_std_rad=args.phase_drift,
        rng_seed=seed,
    )


def cmd_generate(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    for set_id in range(1, args.sets + 1):
        seed = harness.set_seed(args.seed, set_id)
        cfg = _channel_config(args, seed)
        if args.mode == "ar":
            model = ArModel(
                order=len(args.ar_phi),
                phi=np.array(args.ar_phi),
                process_noise_var=args.sigma_w,
            )
            tset = generate_trace(cfg, model, args.packets, set_id=set_id)
            frames = None
        else:
            walk = scene.BlockerWalk(step_std_m=args.walk_step)
            tset, frames = scene.generate_scene_trace(
                walk,
                cfg,
                args.packets,
                set_id=set_id,
                blockage_factor=args.blockage,
                cir_jitter_std=args.cir_jitter,
            )
        path = os.path.join(args.out, harness.trace_filename(set_id))
        traceio.write_trace(tset, path)
        print(f"wrote {path} ({len(tset)} packets)")
        if frames is not None:
            dpath = os.path.join(args.out, harness.depth_filename(set_id))
            traceio.write_depth_frames(frames, dpath)
            print(f"wrote {dpath} ({len(frames)} frames)")
    return 0


def cmd_estimate(args) -> int:
    tset = traceio.read_trace(args.trace)
    gt = harness.ground_truth_cirs(tset)
    technique = args.technique
    records: List[EstimateRecord]
    if technique == "ground-truth":
        records = harness._estimates_ground_truth(tset, gt, technique)
    elif technique == "genie":
        records = harness._estimates_genie(tset, technique)
    elif technique in ("aged-100ms", "aged-500ms"):
        age = 100 if technique == "aged-100ms" else 500
        records = harness._estimates_aged(tset, gt, age, 100, technique)
    elif technique.startswith("kalman-ar"):
        order = int(technique.removeprefix("kalman-ar"))
        train_sets = [traceio.read_trace(p) for p in args.train_traces]
        if not train_sets:
            raise ConfigError(f"{technique} needs --train-traces")
        gt_by_set = {t.set_id: harness.ground_truth_cirs(t) for t in train_sets}
        model, mean_cir = harness.fit_kalman_model(train_sets, gt_by_set, order)
        records = harness._estimates_kalman(
            tset, gt, model, mean_cir, estimation.DEFAULT_OBS_NOISE, technique
        )
    else:
        raise ConfigError(f"unsupported estimate technique {technique!r}")
    n = traceio.write_estimates(records, args.out)
    print(f"wrote {args.out} ({len(records)} records, {n} bytes)")
    return 0


def cmd_compare(args) -> int:
    cfg = RunConfig(
        techniques=tuple(args.techniques.split(",")),
        n_sets=args.sets,
        packets_per_set=args.packets,
        seed=args.seed,
        trace_mode="file" if args.traces else args.mode,
        trace_dir=args.traces,
        estimates_dir=args.estimates,
        out_dir=args.out,
        n_taps=args.n_taps,
        pre_cursor_count=args.pre_cursor,
        samples_per_chip=args.spc,
        snr_db=args.snr_db,
        phase_drift_std_rad=args.phase_drift,
        ar_phi=tuple(args.ar_phi),
        ar_sigma_w=args.sigma_w,
        eq_length=args.eq_length,
        detector=args.detector,
        detector_threshold=args.detector_threshold,
    )
    result = harness.run_comparison(cfg)
    csv_path, json_path = harness.write_outputs(result, cfg)
    print(f"wrote {csv_path}")
    print(f"wrote {json_path}")
    return 0


def _parse_ages(spec: str) -> List[int]:
    # "0.1:20" -> every 100 ms block from 0.1 s to 2 s, then 1 s steps to 20 s
    lo_s, hi_s = (float(x) for x in spec.split(":"))
    lo = max(1, int(round(lo_s * 10)))
    hi = int(round(hi_s * 10))
    ages = list(range(lo, min(hi, 20) + 1))
    ages += [a for a in range(30, hi + 1, 10)]
    return [a for a in ages if a <= hi]


def cmd_aging(args) -> int:
    tset = traceio.read_trace(args.trace)
    cfg = RunConfig(
        techniques=("genie",),
        estimates_dir=args.estimates,
        eq_length=args.eq_length,
    )
    ages = _parse_ages(args.ages)
    rows = harness.run_aging(tset, args.techniques.split(","), ages, cfg)
    harness.write_aging_csv(rows, args.out)
    print(f"wrote {args.out}")
    return 0


def cmd_report(args) -> int:
    with open(args.summary) as fh:
        summary = json.load(fh)
    means = summary["mean_by_technique"]
    width = max(len(t) for t in means) + 2
    print(f"{'technique':<{width}}{'PER':>12}{'CER':>12}{'MSE':>14}")
    for technique in sorted(means):
        m = means[technique]

        def fmt(v, digits=6):
            return "-" if v is None else f"{v:.{digits}g}"

        print(
            f"{technique:<{width}}{fmt(m['per']):>12}{fmt(m['cer']):>12}{fmt(m['mse']):>14}"
        )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vvdlab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="synthesize trace sets")
    g.add_argument("--out", required=True)
    g.add_argument("--sets", type=int, default=15)
    g.add_argument("--packets", type=int, default=60)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--mode", choices=("ar", "scene"), default="ar")
    g.add_argument("--ar-phi", type=float, nargs="+", default=[0.9])
    g.add_argument("--sigma-w", type=float, default=2e-3, help="AR innovation variance")
    g.add_argument("--blockage", type=float, default=scene.DEFAULT_BLOCKAGE_FACTOR)
    g.add_argument("--walk-step", type=float, default=0.25)
    g.add_argument("--cir-jitter", type=float, default=2e-3)
    _add_link_args(g)
    g.set_defaults(func=cmd_generate)

    e = sub.add_parser("estimate", help="write a .vvdest file for one trace")
    e.add_argument("--trace", required=True)
    e.add_argument("--technique", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--train-traces", nargs="*", default=[])
    e.set_defaults(func=cmd_estimate)

    c = sub.add_parser("compare", help="run the technique comparison")
    c.add_argument("--techniques", required=True, help="comma-separated tags")
    c.add_argument("--out", required=True)
    c.add_argument("--traces", help="directory of setNN.vvdtrace files")
    c.add_argument("--estimates", help="directory of <tag>_setNN.vvdest files")
    c.add_argument("--mode", choices=("ar", "scene"), default="ar")
    c.add_argument("--sets", type=int, default=15)
    c.add_argument("--packets", type=int, default=60)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--ar-phi", type=float, nargs="+", default=[0.9])
    c.add_argument("--sigma-w", type=float, default=2e-3)
    c.add_argument("--eq-length", type=int, default=21)
    c.add_argument("--detector", default="correlation")
    c.add_argument("--detector-threshold", type=int, default=10)
    _add_link_args(c)
    c.set_defaults(func=cmd_compare)

    a = sub.add_parser("aging", help="age-vs-error curves on one trace")
    a.add_argument("--trace", required=True)
    a.add_argument("--techniques", default="genie")
    a.add_argument("--ages", default="0.1:20", help="seconds, lo:hi")
    a.add_argument("--out", required=True)
    a.add_argument("--estimates")
    a.add_argument("--eq-length", type=int, default=21)
    a.set_defaults(func=cmd_aging)

    r = sub.add_parser("report", help="print a summary table")
    r.add_argument("--summary", required=True)
    r.set_defaults(func=cmd_report)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, TraceFormatError, TraceValidationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
