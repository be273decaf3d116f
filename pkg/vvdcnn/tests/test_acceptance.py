"""Acceptance suite for the image-driven estimator.

Three criteria: network shape/gradient correctness, overfit capability on a
32-sample synthetic dataset, and cross-modal learnability over the full
15-combination protocol (driven end to end through the lab's CLI and file
formats). The last test trains fifteen models and takes on the order of
15-20 minutes on two CPU cores.
"""

import csv
import subprocess
import sys
import time
from collections import defaultdict

import numpy as np
import torch

from vvdcnn import TrainConfig, build_dataset, build_model, merge_datasets, train
from vvdcnn.combos import split
from vvdcnn.data import Dataset
from vvdcnn.fileio import read_depth, read_trace_labels
from vvdcnn.predict import predict_to_file


def report(name: str, ok: bool, detail: str = "") -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] {name}"
    if detail:
        line += f"  ({detail})"
    print(line)


def run_lab(*args: str) -> None:
    cmd = [sys.executable, "-m", "vvdlab.cli", *args]
    proc = subprocess.run(cmd, capture_output=True, text=True)
    if proc.returncode != 0:
        raise RuntimeError(f"vvdlab {' '.join(args)} failed:\n{proc.stderr}")


class TestSecondaryAcceptance:
    def test_shape_and_gradient(self):
        """Input (50,90,1) -> output (22,); sampled-weight gradients match
        central finite differences within 1e-3 relative."""
        torch.manual_seed(0)
        model = build_model().double()
        out = model(torch.zeros(1, 1, 50, 90, dtype=torch.float64))
        shape_ok = tuple(out.shape) == (1, 22)

        x = torch.randn(3, 1, 50, 90, dtype=torch.float64)
        y = torch.randn(3, 22, dtype=torch.float64)
        loss_fn = torch.nn.MSELoss()
        loss = loss_fn(model(x), y)
        loss.backward()
        rng = np.random.default_rng(1)
        worst = 0.0
        for _name, p in model.named_parameters():
            flat = p.detach().reshape(-1)
            grad = p.grad.reshape(-1)
            for _ in range(3):
                i = int(rng.integers(0, flat.numel()))
                h = 1e-6
                with torch.no_grad():
                    orig = float(flat[i])
                    flat[i] = orig + h
                    lp = float(loss_fn(model(x), y))
                    flat[i] = orig - h
                    lm = float(loss_fn(model(x), y))
                    flat[i] = orig
                fd = (lp - lm) / (2 * h)
                an = float(grad[i])
                worst = max(worst, abs(fd - an) / max(abs(fd), abs(an), 1e-12))
        ok = shape_ok and worst <= 1e-3
        report("CNN shape/gradient", ok, f"shape {tuple(out.shape)}, max rel err {worst:.2e}")
        assert ok

    def test_overfit_smoke(self, scene_corpus):
        """32-sample synthetic dataset reaches < 10% of the epoch-1 training
        MSE within 200 epochs."""
        labels = read_trace_labels(str(scene_corpus / "set01.vvdtrace"))
        frames = read_depth(str(scene_corpus / "set01.vvddepth"))
        full = build_dataset(labels, frames, "current")
        rng = np.random.default_rng(5)
        # 12 real pairs tiled and jittered up to 32 distinct samples
        idx = rng.integers(0, full.inputs.shape[0], 32)
        ds = Dataset(
            inputs=full.inputs[idx] + rng.uniform(0, 1e-3, (32, 50, 90)),
            targets=full.targets[idx],
            label_seq_nos=np.arange(32),
            n_taps=full.n_taps,
            pre_cursor_count=full.pre_cursor_count,
        )
        result = train(ds, None, TrainConfig(epochs=200, seed=1))
        ratio = result.train_losses[-1] / result.train_losses[0]
        ok = ratio < 0.10
        report(
            "Overfit smoke",
            ok,
            f"epoch-1 {result.train_losses[0]:.4e} -> epoch-200 "
            f"{result.train_losses[-1]:.4e} (ratio {ratio:.3f})",
        )
        assert ok

    def test_cross_modal_learnability(self, tmp_path):
        """On scene data (deterministic blocker -> CIR plus small noise),
        trained test MSE beats the 100 ms-aged estimator on >= 12 of the 15
        combinations. Runs the full protocol through the lab CLI."""
        t0 = time.time()
        traces = tmp_path / "traces"
        estimates = tmp_path / "estimates"
        out = tmp_path / "out"
        estimates.mkdir()
        run_lab(
            "generate",
            "--out", str(traces),
            "--sets", "15",
            "--packets", "40",
            "--seed", "97",
            "--mode", "scene",
            "--snr-db", "30",
            "--spc", "2",
        )
        cache = {}
        for sid in range(1, 16):
            labels = read_trace_labels(str(traces / f"set{sid:02d}.vvdtrace"))
            frames = read_depth(str(traces / f"set{sid:02d}.vvddepth"))
            cache[sid] = build_dataset(labels, frames, "current")
        for combo in range(1, 16):
            train_ids, val_id, test_id = split(combo)
            trained = train(
                merge_datasets([cache[i] for i in train_ids]),
                cache[val_id],
                TrainConfig(horizon="current", epochs=24, seed=100 + combo),
            )
            frames = read_depth(str(traces / f"set{test_id:02d}.vvddepth"))
            predict_to_file(
                trained,
                frames,
                str(estimates / f"vvd-current_set{test_id:02d}.vvdest"),
            )
            print(f"combination {combo}: trained, test set {test_id} exported "
                  f"({time.time() - t0:.0f}s)")
        run_lab(
            "compare",
            "--techniques", "vvd-current,aged-100ms",
            "--traces", str(traces),
            "--estimates", str(estimates),
            "--sets", "15",
            "--out", str(out),
        )
        mse = defaultdict(dict)
        with open(out / "comparison.csv") as fh:
            for row in csv.DictReader(fh):
                if row["metric"] == "mse":
                    mse[int(row["combination"])][row["technique"]] = float(row["value"])
        wins = sum(
            1 for c in range(1, 16) if mse[c]["vvd-current"] < mse[c]["aged-100ms"]
        )
        ok = wins >= 12
        report(
            "Cross-modal learnability",
            ok,
            f"{wins}/15 combinations, {time.time() - t0:.0f}s",
        )
        assert ok
