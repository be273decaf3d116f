"""Comparison harness: set combinations, technique runners, CSV/JSON output.

Every randomized step is a pure function of (config, seeds); running the
same comparison twice produces byte-identical artifacts.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import estimation, link, metrics, scene, traceio
from .channel import ArModel, ChannelConfig, generate_trace
from .estimation import (
    AlwaysDetect,
    BernoulliDetector,
    CorrelationDetector,
    KalmanTracker,
    NeverDetect,
)
from .metrics import MetricsReport
from .types import Cir, EstimateRecord, TraceSet


class ConfigError(ValueError):
    """Invalid run configuration (missing files, unknown techniques...)."""


# ---------------------------------------------------------------------------
# Set combinations
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SetCombination:
    """One train/validation/test partition of the trace sets."""

    number: int
    train_ids: Tuple[int, ...]
    validation_id: int
    test_id: int

    def validate(self, all_ids: Sequence[int]) -> None:
        ids = set(all_ids)
        used = set(self.train_ids) | {self.validation_id, self.test_id}
        if len(self.train_ids) != len(ids) - 2 or used != ids:
            raise ValueError(f"combination {self.number} is not an exact partition")
        if self.validation_id in self.train_ids or self.test_id in self.train_ids:
            raise ValueError(f"combination {self.number} overlaps train and holdout")
        if self.validation_id == self.test_id:
            raise ValueError(f"combination {self.number} uses one set twice")


# (validation, test) per combination for the canonical 15-set evaluation.
# Reproduced verbatim; note set 13 serves as validation twice (combinations
# 8 and 13) while set 15 never does -- kept as published, not "fixed".
_CANONICAL_15 = (
    (6, 8),
    (11, 15),
    (14, 9),
    (5, 2),
    (12, 4),
    (10, 1),
    (9, 6),
    (13, 3),
    (8, 5),
    (4, 7),
    (3, 10),
    (7, 11),
    (13, 12),
    (2, 13),
    (1, 14),
)


def make_combinations(n_sets: int = 15) -> List[SetCombination]:
    """The cross-validation partitions; the default 15 match the canonical
    table exactly, each set appearing as test exactly once."""
    if n_sets < 3:
        raise ValueError("need at least 3 sets")
    all_ids = list(range(1, n_sets + 1))
    combos: List[SetCombination] = []
    if n_sets == 15:
        pairs = _CANONICAL_15
    else:
        pairs = tuple((i % n_sets + 1, i) for i in all_ids)
    for number, (val, test) in enumerate(pairs, start=1):
        train = tuple(i for i in all_ids if i not in (val, test))
        combo = SetCombination(number, train, val, test)
        combo.validate(all_ids)
        combos.append(combo)
    return combos


# ---------------------------------------------------------------------------
# Run configuration
# ---------------------------------------------------------------------------

KNOWN_TECHNIQUES = (
    "standard",
    "ground-truth",
    "preamble",
    "genie",
    "aged-100ms",
    "aged-500ms",
    "kalman-ar1",
    "kalman-ar5",
    "kalman-ar20",
    "vvd-current",
    "vvd-33ms",
    "vvd-100ms",
    "combined-kalman",
    "combined-vvd",
    "combined-gt",
)

KALMAN_ORDERS = {"kalman-ar1": 1, "kalman-ar5": 5, "kalman-ar20": 20}
COMBINED_KALMAN_ORDER = 20


@dataclass(frozen=True)
class RunConfig:
    """Everything a comparison run depends on. Seeds are explicit."""

    techniques: Tuple[str, ...] = ("standard", "ground-truth", "genie")
    n_sets: int = 15
    packets_per_set: int = 60
    seed: int = 0
    trace_mode: str = "ar"  # "ar" | "scene" | "file"
    trace_dir: Optional[str] = None
    estimates_dir: Optional[str] = None
    out_dir: Optional[str] = None
    # synthetic link parameters
    n_taps: int = 11
    pre_cursor_count: int = 6
    samples_per_chip: int = 4
    snr_db: float = 20.0
    phase_drift_std_rad: float = 0.0
    ar_phi: Tuple[float, ...] = (0.9,)
    ar_sigma_w: float = 2e-3
    blockage_factor: float = scene.DEFAULT_BLOCKAGE_FACTOR
    walk_step_std_m: float = 0.25
    cir_jitter_std: float = 2e-3
    # receiver parameters
    eq_length: int = 21
    detector: str = "correlation"  # correlation | always | never | bernoulli:<p>
    detector_threshold: int = 10
    kalman_warmup: int = 200
    kalman_obs_noise: float = estimation.DEFAULT_OBS_NOISE

    def __post_init__(self):
        if not self.techniques:
            raise ConfigError("at least one technique is required")
        for t in self.techniques:
            if t not in KNOWN_TECHNIQUES:
                raise ConfigError(f"unknown technique {t!r}; known: {KNOWN_TECHNIQUES}")
        if self.trace_mode not in ("ar", "scene", "file"):
            raise ConfigError(f"trace_mode must be ar|scene|file, got {self.trace_mode!r}")
        if self.trace_mode == "file" and not self.trace_dir:
            raise ConfigError("trace_mode=file requires trace_dir")
        if self.n_sets < 3:
            raise ConfigError("need at least 3 sets")
        if self.packets_per_set < 1:
            raise ConfigError("packets_per_set must be >= 1")


def set_seed(master_seed: int, set_id: int) -> int:
    """Deterministic per-set child seed."""
    ss = np.random.SeedSequence(entropy=master_seed, spawn_key=(set_id,))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def make_detector(cfg: RunConfig) -> Callable:
    spec = cfg.detector
    if spec == "correlation":
        return CorrelationDetector(margin_threshold=cfg.detector_threshold)
    if spec == "always":
        return AlwaysDetect()
    if spec == "never":
        return NeverDetect()
    if spec.startswith("bernoulli:"):
        try:
            p = float(spec.split(":", 1)[1])
        except ValueError as exc:
            raise ConfigError(f"bad detector spec {spec!r}") from exc
        return BernoulliDetector(p, seed=cfg.seed)
    raise ConfigError(f"unknown detector {spec!r}")


def trace_filename(set_id: int) -> str:
    return f"set{set_id:02d}.vvdtrace"


def depth_filename(set_id: int) -> str:
    return f"set{set_id:02d}.vvddepth"


def estimate_filename(technique: str, set_id: int) -> str:
    return f"{technique}_set{set_id:02d}.vvdest"


def build_sets(cfg: RunConfig) -> Dict[int, TraceSet]:
    """Generate or load the trace sets, keyed by set id (1-based)."""
    sets: Dict[int, TraceSet] = {}
    for set_id in range(1, cfg.n_sets + 1):
        if cfg.trace_mode == "file":
            path = os.path.join(cfg.trace_dir, trace_filename(set_id))
            if not os.path.exists(path):
                raise ConfigError(f"missing trace file: {path}")
            sets[set_id] = traceio.read_trace(path)
            continue
        ch_cfg = ChannelConfig(
            n_taps=cfg.n_taps,
            pre_cursor_count=cfg.pre_cursor_count,
            samples_per_chip=cfg.samples_per_chip,
            snr_db=cfg.snr_db,
            phase_drift_std_rad=cfg.phase_drift_std_rad,
            rng_seed=set_seed(cfg.seed, set_id),
        )
        if cfg.trace_mode == "ar":
            model = ArModel(
                order=len(cfg.ar_phi),
                phi=np.array(cfg.ar_phi),
                process_noise_var=cfg.ar_sigma_w,
            )
            sets[set_id] = generate_trace(
                ch_cfg, model, cfg.packets_per_set, set_id=set_id
            )
        else:
            walk = scene.BlockerWalk(step_std_m=cfg.walk_step_std_m)
            tset, _frames = scene.generate_scene_trace(
                walk,
                ch_cfg,
                cfg.packets_per_set,
                set_id=set_id,
                blockage_factor=cfg.blockage_factor,
                cir_jitter_std=cfg.cir_jitter_std,
            )
            sets[set_id] = tset
    return sets


# ---------------------------------------------------------------------------
# Technique evaluation
# ---------------------------------------------------------------------------

def ground_truth_cirs(tset: TraceSet) -> List[Cir]:
    return [estimation.ground_truth_estimate(rec) for rec in tset.records]


def _estimates_ground_truth(tset: TraceSet, gt: List[Cir], tag: str) -> List[EstimateRecord]:
    return [
        EstimateRecord(rec.seq_no, tag, cir, available=True)
        for rec, cir in zip(tset.records, gt)
    ]


def _estimates_genie(tset: TraceSet, tag: str) -> List[EstimateRecord]:
    return [
        EstimateRecord(rec.seq_no, tag, estimation.genie_estimate(rec), available=True)
        for rec in tset.records
    ]


def _estimates_preamble(tset: TraceSet, detector, tag: str) -> List[EstimateRecord]:
    return [estimation.preamble_estimate(rec, detector, tag) for rec in tset.records]


def _estimates_aged(
    tset: TraceSet, gt: List[Cir], age_ms: int, block_ms: int, tag: str
) -> List[EstimateRecord]:
    out = []
    for k, rec in enumerate(tset.records):
        cir = estimation.previous_estimate(gt[: k + 1], age_ms, block_ms)
        out.append(
            EstimateRecord(rec.seq_no, tag, cir, available=cir is not None)
        )
    return out


def _estimates_kalman(
    tset: TraceSet,
    gt: List[Cir],
    model: ArModel,
    mean_cir: Cir,
    obs_noise: float,
    tag: str,
) -> List[EstimateRecord]:
    tracker = KalmanTracker(model, mean_cir, obs_noise=obs_noise)
    out = []
    for rec, obs in zip(tset.records, gt):
        pred = tracker.predict()
        out.append(
            EstimateRecord(rec.seq_no, tag, pred, available=pred is not None)
        )
        tracker.observe(obs)
    return out


def fit_kalman_model(
    training_sets: Sequence[TraceSet],
    gt_by_set: Dict[int, List[Cir]],
    order: int,
) -> Tuple[ArModel, Cir]:
    """Yule-Walker fit plus mean profile over the combination's train sets."""
    seqs = [np.stack([c.taps for c in gt_by_set[t.set_id]]) for t in training_sets]
    concat = np.concatenate(seqs, axis=0)
    model = estimation.fit_ar(concat, order)
    pre = training_sets[0].records[0].true_cir.pre_cursor_count
    mean_cir = Cir(concat.mean(axis=0), pre)
    return model, mean_cir


def load_estimate_file(cfg: RunConfig, technique: str, set_id: int) -> List[EstimateRecord]:
    if not cfg.estimates_dir:
        raise ConfigError(
            f"technique {technique!r} needs estimates_dir with "
            f"{estimate_filename(technique, set_id)}"
        )
    path = os.path.join(cfg.estimates_dir, estimate_filename(technique, set_id))
    if not os.path.exists(path):
        raise ConfigError(f"missing estimate file for {technique!r}: {path}")
    return traceio.read_estimates(path)


def _align_estimates(
    tset: TraceSet, records: List[EstimateRecord]
) -> List[EstimateRecord]:
    by_seq = {r.seq_no: r for r in records}
    out = []
    for rec in tset.records:
        est = by_seq.get(rec.seq_no)
        if est is None:
            est = EstimateRecord(rec.seq_no, "missing", None, available=False)
        out.append(est)
    return out


def score_technique(
    tset: TraceSet,
    gt: List[Cir],
    estimates: Optional[List[EstimateRecord]],
    technique: str,
    cfg: RunConfig,
    skip: int = 0,
) -> MetricsReport:
    """Decode every scored packet with the technique's estimates and reduce.

    ``skip`` drops warm-up packets from scoring (Kalman techniques). MSE is
    averaged over packets with an available estimate; a packet without one
    counts as erroneous for PER and fully erroneous for CER.
    """
    records = tset.records[skip:]
    if not records:
        raise ConfigError(f"no packets left to score after skipping {skip}")
    decoded: List[Optional[bytes]] = []
    truths: List[bytes] = []
    masks: List[Optional[np.ndarray]] = []
    mse_pairs: List[Tuple[Cir, Cir]] = []
    for idx, rec in enumerate(records, start=skip):
        truths.append(metrics.transmitted_psdu(rec))
        if technique == "standard":
            result = link.standard_decode(rec)
        else:
            est = estimates[idx]
            cir = est.cir if est.available else None
            if cir is not None:
                mse_pairs.append((cir, gt[idx]))
            result = link.decode_with_estimate(rec, cir, eq_length=cfg.eq_length)
        decoded.append(result.psdu)
        masks.append(result.chip_errors)
    per = metrics.packet_error_rate(decoded, truths)
    cer = metrics.chip_error_rate_from_masks(masks)
    mse_val = None
    if mse_pairs:
        mse_val = metrics.mse([p[0] for p in mse_pairs], [p[1] for p in mse_pairs])
    return MetricsReport(
        technique_tag=technique,
        per=per,
        cer=cer,
        mse=mse_val,
        n_packets=len(records),
        set_id=tset.set_id,
    )


@dataclass
class ComparisonResult:
    combinations: List[SetCombination]
    reports: Dict[Tuple[int, str], MetricsReport] = field(default_factory=dict)

    def csv_rows(self) -> List[str]:
        rows = ["combination,technique,metric,value"]
        for combo in self.combinations:
            for (number, technique), rep in self.reports.items():
                if number != combo.number:
                    continue
                rows.append(f"{number},{technique},per,{rep.per!r}")
                rows.append(f"{number},{technique},cer,{rep.cer!r}")
                if rep.mse is not None:
                    rows.append(f"{number},{technique},mse,{rep.mse!r}")
        return rows

    def summary(self) -> Dict:
        per_technique: Dict[str, Dict[str, List[float]]] = {}
        for (_, technique), rep in self.reports.items():
            bucket = per_technique.setdefault(technique, {"per": [], "cer": [], "mse": []})
            bucket["per"].append(rep.per)
            bucket["cer"].append(rep.cer)
            if rep.mse is not None:
                bucket["mse"].append(rep.mse)
        means = {
            tech: {
                metric: (sum(vals) / len(vals) if vals else None)
                for metric, vals in buckets.items()
            }
            for tech, buckets in per_technique.items()
        }
        return {
            "combinations": [
                {
                    "number": c.number,
                    "train": list(c.train_ids),
                    "validation": c.validation_id,
                    "test": c.test_id,
                }
                for c in self.combinations
            ],
            "mean_by_technique": means,
        }


def run_comparison(cfg: RunConfig, sets: Optional[Dict[int, TraceSet]] = None) -> ComparisonResult:
    """Evaluate every requested technique on every combination's test set."""
    if sets is None:
        sets = build_sets(cfg)
    combos = make_combinations(cfg.n_sets)
    detector = make_detector(cfg)
    gt_by_set: Dict[int, List[Cir]] = {
        sid: ground_truth_cirs(tset) for sid, tset in sets.items()
    }
    block_ms = 100

    # Combination-independent estimates, cached per set.
    per_set_estimates: Dict[Tuple[str, int], List[EstimateRecord]] = {}

    def set_estimates(technique: str, set_id: int) -> List[EstimateRecord]:
        key = (technique, set_id)
        if key in per_set_estimates:
            return per_set_estimates[key]
        tset = sets[set_id]
        gt = gt_by_set[set_id]
        if technique == "ground-truth":
            est = _estimates_ground_truth(tset, gt, technique)
        elif technique == "genie":
            est = _estimates_genie(tset, technique)
        elif technique == "preamble":
            est = _estimates_preamble(tset, detector, technique)
        elif technique == "aged-100ms":
            est = _estimates_aged(tset, gt, 100, block_ms, technique)
        elif technique == "aged-500ms":
            est = _estimates_aged(tset, gt, 500, block_ms, technique)
        elif technique.startswith("vvd-"):
            est = _align_estimates(tset, load_estimate_file(cfg, technique, set_id))
        elif technique == "combined-gt":
            blind = {rec.seq_no: cir for rec, cir in zip(tset.records, gt)}
            est = [
                estimation.combined_estimate(
                    rec, lambda r: blind[r.seq_no], detector, technique
                )
                for rec in tset.records
            ]
        elif technique == "combined-vvd":
            vvd = _align_estimates(tset, load_estimate_file(cfg, "vvd-current", set_id))
            blind = {e.seq_no: (e.cir if e.available else None) for e in vvd}
            est = [
                estimation.combined_estimate(
                    rec, lambda r: blind.get(r.seq_no), detector, technique
                )
                for rec in tset.records
            ]
        else:
            raise ConfigError(f"technique {technique!r} is combination-dependent")
        per_set_estimates[key] = est
        return est

    result = ComparisonResult(combinations=combos)
    for combo in combos:
        test_set = sets[combo.test_id]
        gt = gt_by_set[combo.test_id]
        train_sets = [sets[i] for i in combo.train_ids]
        for technique in cfg.techniques:
            skip = 0
            if technique in KALMAN_ORDERS or technique == "combined-kalman":
                order = KALMAN_ORDERS.get(technique, COMBINED_KALMAN_ORDER)
                model, mean_cir = fit_kalman_model(train_sets, gt_by_set, order)
                kalman_est = _estimates_kalman(
                    test_set, gt, model, mean_cir, cfg.kalman_obs_noise, technique
                )
                if technique == "combined-kalman":
                    blind = {
                        e.seq_no: (e.cir if e.available else None) for e in kalman_est
                    }
                    est = [
                        estimation.combined_estimate(
                            rec, lambda r: blind.get(r.seq_no), detector, technique
                        )
                        for rec in test_set.records
                    ]
                else:
                    est = kalman_est
                if len(test_set.records) <= cfg.kalman_warmup:
                    raise ConfigError(
                        f"set {combo.test_id} has {len(test_set.records)} packets; "
                        f"Kalman scoring skips the first {cfg.kalman_warmup}"
                    )
                skip = cfg.kalman_warmup
            elif technique == "standard":
                est = None
            else:
                est = set_estimates(technique, combo.test_id)
            report = score_technique(test_set, gt, est, technique, cfg, skip=skip)
            result.reports[(combo.number, technique)] = report
    return result


def write_outputs(result: ComparisonResult, cfg: RunConfig) -> Tuple[str, str]:
    if not cfg.out_dir:
        raise ConfigError("out_dir is required to write artifacts")
    os.makedirs(cfg.out_dir, exist_ok=True)
    csv_path = os.path.join(cfg.out_dir, "comparison.csv")
    json_path = os.path.join(cfg.out_dir, "summary.json")
    with open(csv_path, "w", newline="\n") as fh:
        fh.write("\n".join(result.csv_rows()) + "\n")
    summary = result.summary()
    summary["config"] = {
        "techniques": list(cfg.techniques),
        "n_sets": cfg.n_sets,
        "packets_per_set": cfg.packets_per_set,
        "seed": cfg.seed,
        "trace_mode": cfg.trace_mode,
        "snr_db": cfg.snr_db,
        "detector": cfg.detector,
    }
    with open(json_path, "w", newline="\n") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return csv_path, json_path


# ---------------------------------------------------------------------------
# Aging runs
# ---------------------------------------------------------------------------

def run_aging(
    tset: TraceSet,
    techniques: Sequence[str],
    ages_blocks: Sequence[int],
    cfg: RunConfig,
) -> List[Tuple[str, metrics.AgingPoint]]:
    """Aging curves for always-available estimators on one trace set."""
    gt = ground_truth_cirs(tset)
    rows: List[Tuple[str, metrics.AgingPoint]] = []
    for technique in techniques:
        if technique == "genie":
            cirs = [estimation.genie_estimate(rec) for rec in tset.records]
        elif technique == "ground-truth":
            cirs = gt
        elif technique.startswith("vvd-"):
            est = _align_estimates(
                tset, load_estimate_file(cfg, technique, tset.set_id)
            )
            if not all(e.available for e in est):
                raise ConfigError(f"{technique} estimates must be fully available for aging")
            cirs = [e.cir for e in est]
        else:
            raise ConfigError(f"aging supports genie/ground-truth/vvd-*, got {technique!r}")
        for point in metrics.aging_sweep(
            tset, gt, cirs, ages_blocks, eq_length=cfg.eq_length
        ):
            rows.append((technique, point))
    return rows


def write_aging_csv(rows: List[Tuple[str, metrics.AgingPoint]], path: str) -> str:
    lines = ["technique,age_seconds,mse,per"]
    for technique, pt in rows:
        lines.append(f"{technique},{pt.age_seconds!r},{pt.mse!r},{pt.per!r}")
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    return path
