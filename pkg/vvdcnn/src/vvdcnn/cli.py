"""`vvd` command line: train a model per set combination, export estimates.

  vvd train    --traces DIR --combination N --out model.pt [--horizon ...]
  vvd predict  --model model.pt --traces DIR --set-id N --out file.vvdest

Trace directories follow the lab naming: setNN.vvdtrace + setNN.vvddepth.
"""

from __future__ import annotations

import argparse
import os
import sys
from typing import List, Optional

from . import combos, data, fileio, predict, training


def _load_set(traces_dir: str, set_id: int):
    trace_path = os.path.join(traces_dir, f"set{set_id:02d}.vvdtrace")
    depth_path = os.path.join(traces_dir, f"set{set_id:02d}.vvddepth")
    for path in (trace_path, depth_path):
        if not os.path.exists(path):
            raise FileNotFoundError(f"missing {path}")
    return fileio.read_trace_labels(trace_path), fileio.read_depth(depth_path)


def cmd_train(args) -> int:
    train_ids, val_id, _test_id = combos.split(args.combination, args.sets)
    parts = []
    for sid in train_ids:
        labels, frames = _load_set(args.traces, sid)
        parts.append(data.build_dataset(labels, frames, args.horizon))
    train_set = data.merge_datasets(parts)
    val_labels, val_frames = _load_set(args.traces, val_id)
    val_set = data.build_dataset(val_labels, val_frames, args.horizon)
    cfg = training.TrainConfig(
        horizon=args.horizon,
        epochs=args.epochs,
        initial_lr=args.lr,
        batch_size=args.batch_size,
        seed=args.seed,
    )
    trained = training.train(train_set, val_set, cfg)
    trained.save(args.out)
    print(
        f"trained on {train_set.inputs.shape[0]} frames, "
        f"best epoch {trained.best_epoch} "
        f"(val loss {min(trained.val_losses):.3e}); wrote {args.out}"
    )
    return 0


def cmd_predict(args) -> int:
    trained = training.TrainedModel.load(args.model)
    horizon = args.horizon or trained.horizon
    depth_path = os.path.join(args.traces, f"set{args.set_id:02d}.vvddepth")
    if not os.path.exists(depth_path):
        raise FileNotFoundError(f"missing {depth_path}")
    frames = fileio.read_depth(depth_path)
    n = predict.predict_to_file(trained, frames, args.out, horizon)
    print(f"wrote {args.out} ({n} bytes)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vvd", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train one combination's model")
    t.add_argument("--traces", required=True, help="directory of setNN.vvdtrace/.vvddepth")
    t.add_argument("--combination", type=int, required=True)
    t.add_argument("--sets", type=int, default=15)
    t.add_argument("--out", required=True, help="model checkpoint path")
    t.add_argument("--horizon", choices=sorted(data.HORIZONS), default="current")
    t.add_argument("--epochs", type=int, default=200)
    t.add_argument("--lr", type=float, default=1e-4)
    t.add_argument("--batch-size", type=int, default=32)
    t.add_argument("--seed", type=int, default=0)
    t.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="export .vvdest estimates for one set")
    p.add_argument("--model", required=True)
    p.add_argument("--traces", required=True)
    p.add_argument("--set-id", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--horizon", choices=sorted(data.HORIZONS))
    p.set_defaults(func=cmd_predict)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError, fileio.FormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
