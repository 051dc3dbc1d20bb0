"""Experiment runner: data pipeline, training loop, strategy comparison and
noise-robustness sweeps.

A run is fully determined by its :class:`ExperimentConfig`. The data seed
fixes the synthetic records; the run seed fixes model initialisation and
batch order. Records are split into train/validation/test groups by index,
so no record contributes segments to more than one split.
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np
import yaml

from . import synth
from .balance import LossHistory, apply_update, make_strategy
from .errors import InvalidConfigError, UndefinedMetricError
from .metrics import (
    DEFAULT_SPECS,
    MetricRow,
    anchor_match,
    delta_m,
    mean_ci,
    pcc,
    ppi_error,
    r_squared,
    rmse,
    safe,
    welch_t,
)
from .netcore import Batch, HeadSGD, MultiTaskNet, per_task_gradients, task_losses

log = logging.getLogger(__name__)

TASKS = ("waveform", "anchor", "length")
ANCHOR_CLASSES = 200
POOL = 4
ANCHOR_REL_THRESHOLD = 0.3
ANCHOR_MIN_SEP_S = 0.3
SINGLE_TASK = "single_task"


# --- configuration --------------------------------------------------------


@dataclass
class NoiseProtocol:
    type: str = "none"  # none | constant | abrupt
    snr_db: float = 0.0
    fraction: float = 0.2
    duration_s: float = 1.0

    def validate(self) -> None:
        if self.type not in ("none", "constant", "abrupt"):
            raise InvalidConfigError(f"unknown noise type {self.type!r}")
        if self.type == "abrupt":
            if not 0 < self.fraction <= 1:
                raise InvalidConfigError("abrupt fraction must be in (0, 1]")
            if not 0 < self.duration_s <= 4:
                raise InvalidConfigError("abrupt duration_s must be in (0, 4]")

    @property
    def label(self) -> str:
        if self.type == "abrupt":
            return f"abrupt-{self.duration_s:g}s"
        return self.type


@dataclass
class StrategySpec:
    name: str = "ega"
    temperature: float = 1.0

    @property
    def label(self) -> str:
        return f"ega(T={self.temperature:g})" if self.name == "ega" else self.name


def constant_protocols() -> list[NoiseProtocol]:
    return [NoiseProtocol("constant", db) for db in (6.0, 3.0, 0.0, -1.0, -2.0, -3.0)]


def abrupt_protocols() -> list[NoiseProtocol]:
    return [
        NoiseProtocol("abrupt", db, 0.2, dur) for db in (0.0, -9.0) for dur in (1.0, 2.0, 3.0)
    ]


@dataclass
class ExperimentConfig:
    seed: int = 0
    data_seed: int = 0
    epochs: int = 60
    batch_size: int = 32
    strategy: str = "ega"
    temperature: float = 1.0
    t_warm: int = 4
    rank_tol: float | None = None
    eta_trunk: float = 0.2
    eta_head: float = 0.02
    momentum: float = 0.937
    weight_decay: float = 5e-4
    loss_scales: list = field(default_factory=lambda: [1.0, 1.0, 1.0])
    trunk_hidden: list = field(default_factory=lambda: [64, 64])
    head_hidden: list = field(default_factory=list)
    n_records: int = 40
    split: list = field(default_factory=lambda: [28, 6, 6])
    window_s: float = 4.0
    step_s: float = 1.0
    synth: synth.SynthConfig = field(default_factory=synth.SynthConfig)
    noise: list = field(default_factory=list)  # NoiseProtocol list, used by sweeps
    repeats: int = 5
    strategies: list = field(default_factory=list)  # StrategySpec list, used by compare
    baseline: str = "equal_weight"

    def validate(self) -> None:
        if self.epochs < 0:
            raise InvalidConfigError("epochs must be >= 0")
        if self.batch_size < 1:
            raise InvalidConfigError("batch_size must be >= 1")
        make_strategy(self.strategy, self.temperature, self.rank_tol)
        if self.t_warm < 1:
            raise InvalidConfigError("t_warm must be >= 1")
        if self.eta_trunk <= 0 or self.eta_head <= 0:
            raise InvalidConfigError("learning rates must be > 0")
        if not 0 <= self.momentum < 1 or self.weight_decay < 0:
            raise InvalidConfigError("momentum must be in [0, 1) and weight_decay >= 0")
        if len(self.loss_scales) != 3 or any(s < 0 for s in self.loss_scales):
            raise InvalidConfigError("loss_scales needs three non-negative values")
        if len(self.split) != 3 or any(s < 1 for s in self.split) or sum(self.split) != self.n_records:
            raise InvalidConfigError("split must be three positive counts summing to n_records")
        if self.repeats < 1:
            raise InvalidConfigError("repeats must be >= 1")
        if self.window_s * self.synth.fs % POOL:
            raise InvalidConfigError(f"window length must be a multiple of {POOL} samples")
        self.synth.validate()
        for p in self.noise:
            p.validate()
        for s in self.strategies:
            make_strategy(s.name, s.temperature, self.rank_tol)
        if self.baseline != SINGLE_TASK:
            make_strategy(self.baseline)

    def digest(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _build(cls, data: dict, where: str):
    names = {f.name for f in fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise InvalidConfigError(f"unknown {where} keys: {sorted(unknown)}")
    return cls(**data)


def config_from_dict(data: dict | None) -> ExperimentConfig:
    data = dict(data or {})
    sub = data.pop("synth", None) or {}
    sub = {k: tuple(v) if isinstance(v, list) else v for k, v in sub.items()}
    noise = [_build(NoiseProtocol, dict(p), "noise") for p in data.pop("noise", None) or []]
    strategies = [
        StrategySpec(name=s) if isinstance(s, str) else _build(StrategySpec, dict(s), "strategies")
        for s in data.pop("strategies", None) or []
    ]
    cfg = _build(ExperimentConfig, data, "config")
    cfg.synth = _build(synth.SynthConfig, sub, "synth")
    cfg.noise = noise
    cfg.strategies = strategies
    for name in ("temperature", "eta_trunk", "eta_head", "momentum", "weight_decay", "window_s", "step_s"):
        setattr(cfg, name, float(getattr(cfg, name)))
    cfg.loss_scales = [float(s) for s in cfg.loss_scales]
    cfg.validate()
    return cfg


def load_config(path) -> ExperimentConfig:
    with open(path) as f:
        data = yaml.safe_load(f)
    if data is not None and not isinstance(data, dict):
        raise InvalidConfigError(f"{path}: top level must be a mapping")
    return config_from_dict(data)


# --- data -----------------------------------------------------------------


@dataclass
class Arrays:
    """Model-ready tensors for one split."""

    x: np.ndarray
    waveform: np.ndarray
    anchors: np.ndarray
    length: np.ndarray
    anchor_times: list  # per segment, seconds from window start
    ppi_ms: np.ndarray

    def __len__(self) -> int:
        return self.x.shape[0]

    def batch(self, idx) -> Batch:
        return Batch(self.x[idx], self.waveform[idx], self.anchors[idx], self.length[idx])

    def digest(self) -> str:
        h = hashlib.sha256()
        for a in (self.x, self.waveform, self.anchors, self.length, self.ppi_ms):
            h.update(np.ascontiguousarray(a).tobytes())
        return h.hexdigest()


@dataclass
class Dataset:
    train: Arrays
    val: Arrays
    test: Arrays
    test_records: list
    feature_scale: tuple  # (mean, std) of training features


def record_seeds(config: ExperimentConfig) -> list[int]:
    ss = np.random.SeedSequence([config.data_seed, 0xEC6])
    return [int(s.generate_state(1)[0]) for s in ss.spawn(config.n_records)]


def make_records(config: ExperimentConfig) -> list[synth.SyntheticRecord]:
    return [synth.make_record(s, config.synth) for s in record_seeds(config)]


def segments_of(records, config: ExperimentConfig) -> list[synth.Segment]:
    segs = []
    for r in records:
        segs.extend(s for s in synth.segment(r, config.window_s, config.step_s) if s.labeled)
    return segs


def to_arrays(segments, config: ExperimentConfig, scale: tuple) -> Arrays:
    windows = np.stack([s.window for s in segments])
    x = (synth.pooled_envelope(windows, POOL) - scale[0]) / scale[1]
    return Arrays(
        x=x,
        waveform=np.stack([s.target for s in segments]),
        anchors=np.stack([synth.anchor_mask(s.anchors, config.window_s, ANCHOR_CLASSES) for s in segments]),
        length=synth.ppi_bin([s.ppi for s in segments]),
        anchor_times=[s.anchors for s in segments],
        ppi_ms=np.array([s.ppi * 1000.0 for s in segments]),
    )


def build_dataset(config: ExperimentConfig) -> Dataset:
    records = make_records(config)
    n_train, n_val, _ = config.split
    groups = records[:n_train], records[n_train : n_train + n_val], records[n_train + n_val :]
    seg_groups = [segments_of(g, config) for g in groups]
    env = synth.pooled_envelope(np.stack([s.window for s in seg_groups[0]]), POOL)
    scale = (float(env.mean()), float(env.std()) or 1.0)
    train, val, test = (to_arrays(s, config, scale) for s in seg_groups)
    return Dataset(train, val, test, list(groups[2]), scale)


@dataclass
class NoiseReport:
    doped: int = 0  # segments that received a burst
    segments: list = field(default_factory=list)  # labeled segments per test record
    snr_db: list = field(default_factory=list)  # realised SNR per noisy trace or burst


def _burst_snr(clean: np.ndarray, noisy: np.ndarray, burst: synth.Burst) -> float:
    """Window signal power over the noise power inside the burst, in dB."""
    noise = (noisy - clean)[burst.start : burst.stop]
    return 10 * math.log10(float(np.mean(clean**2)) / float(np.mean(noise**2)))


def noisy_test(dataset: Dataset, config: ExperimentConfig, protocol: NoiseProtocol, seed: int):
    """Evaluation copy of the test split with ``protocol`` applied.

    Returns the arrays and a :class:`NoiseReport`. Abrupt noise dopes each
    test record's segments separately, so the doped count is a per-record
    rounding.
    """
    report = NoiseReport()
    if protocol.type == "none":
        return dataset.test, report
    if protocol.type == "constant":
        noisy = []
        for k, rec in enumerate(dataset.test_records):
            radar = synth.add_constant_noise(rec.radar, protocol.snr_db, seed + k)
            report.snr_db.append(synth.snr_db(rec.radar, radar))
            noisy.append(replace(rec, radar=radar))
        return to_arrays(segments_of(noisy, config), config, dataset.feature_scale), report
    segs = []
    for k, rec in enumerate(dataset.test_records):
        clean = segments_of([rec], config)
        doped, bursts = synth.add_abrupt_noise(
            clean, protocol.fraction, protocol.duration_s, protocol.snr_db, seed + k
        )
        report.doped += len(bursts)
        report.segments.append(len(clean))
        report.snr_db.extend(_burst_snr(clean[b.segment].window, doped[b.segment].window, b) for b in bursts)
        segs.extend(doped)
    return to_arrays(segs, config, dataset.feature_scale), report


# --- evaluation -----------------------------------------------------------


def _softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def decode_anchors(logits: np.ndarray, window_s: float) -> np.ndarray:
    """Anchor times from one window's anchor logits.

    Local maxima of the softmax above ``0.3 * max`` are kept, strongest first,
    suppressing any candidate closer than 0.3 s to one already kept.
    """
    p = _softmax(logits)
    n = p.size
    left = np.concatenate([[-np.inf], p[:-1]])
    right = np.concatenate([p[1:], [-np.inf]])
    cand = np.nonzero((p >= left) & (p > right) & (p >= ANCHOR_REL_THRESHOLD * p.max()))[0]
    cand = cand[np.argsort(-p[cand], kind="stable")]
    dt = window_s / n
    kept: list[int] = []
    for c in cand:
        if all(abs(c - k) * dt >= ANCHOR_MIN_SEP_S for k in kept):
            kept.append(int(c))
    return np.sort(np.array(kept, dtype=float)) * dt


def evaluate(net: MultiTaskNet, data: Arrays, window_s: float) -> tuple[dict, np.ndarray]:
    """Metric values keyed by (task, metric) and the three unscaled losses."""
    preds = net.predict(data.x)
    losses = task_losses(preds, data.batch(np.arange(len(data))))
    wave, anchor_logits, length_logits = preds

    per = {"rmse": [], "pcc": [], "r2": []}
    for truth, pred in zip(data.waveform, wave):
        per["rmse"].append(rmse(truth, pred))
        for name, fn in (("pcc", pcc), ("r2", r_squared)):
            v = safe(fn, truth, pred)
            if v is not None:
                per[name].append(v)

    errors, missed, total = [], 0, 0
    for truth, logits in zip(data.anchor_times, anchor_logits):
        matched, mdr = anchor_match(truth, decode_anchors(logits, window_s))
        errors.extend(matched.tolist())
        missed += round(mdr * len(truth))
        total += len(truth)

    pred_ppi = synth.bin_center_ms(np.argmax(length_logits, axis=1))
    nan = float("nan")
    metrics = {
        ("waveform", "rmse"): float(np.mean(per["rmse"])),
        ("waveform", "pcc"): float(np.mean(per["pcc"])) if per["pcc"] else nan,
        ("waveform", "r2"): float(np.mean(per["r2"])) if per["r2"] else nan,
        ("anchor", "timing_error_ms"): 1000.0 * float(np.mean(errors)) if errors else nan,
        ("anchor", "mdr"): missed / total,
        ("length", "ppi_error_ms"): ppi_error(data.ppi_ms, pred_ppi),
    }
    return metrics, losses


# --- training -------------------------------------------------------------


@dataclass
class RunRecord:
    config_hash: str
    seed: int
    strategy: str
    temperature: float
    train_losses: np.ndarray  # (epochs, 3) mean training loss per epoch
    val_losses: np.ndarray  # (epochs, 3)
    test_losses: np.ndarray  # (3,)
    metrics: dict
    skipped_updates: int
    train_data_hash: str
    duration_s: float
    trunk_trajectory: list = field(default_factory=list)
    net: MultiTaskNet | None = None

    def rows(self, noise_type: str = "none", noise_db: float = float("nan"), metrics: dict | None = None) -> list[MetricRow]:
        metrics = self.metrics if metrics is None else metrics
        t = self.temperature if self.strategy == "ega" else float("nan")
        return [
            MetricRow(self.config_hash, self.seed, self.strategy, t, noise_type, float(noise_db),
                      spec.task, spec.metric, float(metrics[spec.key]))
            for spec in DEFAULT_SPECS
        ]


def train(config: ExperimentConfig, dataset: Dataset | None = None, keep_trajectory: bool = False) -> RunRecord:
    """One training run; the trunk follows the configured strategy, each head
    its own momentum SGD."""
    config.validate()
    started = time.perf_counter()
    dataset = dataset or build_dataset(config)
    data = dataset.train
    net = MultiTaskNet.build(
        data.x.shape[1],
        trunk_hidden=config.trunk_hidden,
        head_hidden=config.head_hidden,
        out_dims=(data.waveform.shape[1], ANCHOR_CLASSES, synth.N_PPI_BINS),
        seed=config.seed,
    )
    strategy = make_strategy(config.strategy, config.temperature, config.rank_tol)
    heads = HeadSGD(net, config.eta_head, config.momentum, config.weight_decay)
    history = LossHistory(3, config.t_warm)
    rng = np.random.default_rng([config.seed, 0x5EED])
    n = len(data)
    skipped = 0
    val_losses, trajectory = [], []

    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        total = np.zeros(3)
        for i in range(0, n, config.batch_size):
            idx = order[i : i + config.batch_size]
            grads = per_task_gradients(net, data.batch(idx), config.loss_scales)
            balanced = strategy.step(grads.trunk, history, epoch)
            if balanced.skipped:
                skipped += 1
            else:
                net.trunk.set_flat(apply_update(net.trunk.get_flat(), balanced, config.eta_trunk))
            heads.step(net, grads.heads)
            total += grads.losses * len(idx)
        history.record(epoch, total / n)
        val_losses.append(task_losses(net.predict(dataset.val.x), dataset.val.batch(np.arange(len(dataset.val)))))
        if keep_trajectory:
            trajectory.append(net.trunk.get_flat())

    metrics, test_losses = evaluate(net, dataset.test, config.window_s)
    return RunRecord(
        config_hash=config.digest(),
        seed=config.seed,
        strategy=config.strategy,
        temperature=config.temperature,
        train_losses=history.as_array(),
        val_losses=np.array(val_losses).reshape(-1, 3),
        test_losses=test_losses,
        metrics=metrics,
        skipped_updates=skipped,
        train_data_hash=data.digest(),
        duration_s=time.perf_counter() - started,
        trunk_trajectory=trajectory,
        net=net,
    )


def init_gradient_norms(config: ExperimentConfig, dataset: Dataset | None = None) -> np.ndarray:
    """Per-task trunk gradient norms of the untrained model, one row per
    training batch of the first epoch's order."""
    dataset = dataset or build_dataset(config)
    data = dataset.train
    net = MultiTaskNet.build(
        data.x.shape[1],
        trunk_hidden=config.trunk_hidden,
        head_hidden=config.head_hidden,
        out_dims=(data.waveform.shape[1], ANCHOR_CLASSES, synth.N_PPI_BINS),
        seed=config.seed,
    )
    order = np.random.default_rng([config.seed, 0x5EED]).permutation(len(data))
    norms = []
    for i in range(0, len(data), config.batch_size):
        grads = per_task_gradients(net, data.batch(order[i : i + config.batch_size]), config.loss_scales)
        norms.append(np.linalg.norm(grads.trunk, axis=1))
    return np.array(norms)


def progress_ratios(run: RunRecord, t_warm: int) -> np.ndarray:
    """Final over warmup-epoch training loss per task; the largest marks
    the task that progressed least."""
    if len(run.train_losses) < t_warm:
        raise InvalidConfigError(f"run has {len(run.train_losses)} epochs, fewer than t_warm={t_warm}")
    return run.train_losses[-1] / run.train_losses[t_warm - 1]


# --- aggregation helpers --------------------------------------------------


def _delta_samples(runs: list[dict], reference: dict) -> list[float]:
    out = []
    for m in runs:
        try:
            out.append(delta_m(m, reference))
        except UndefinedMetricError:
            out.append(float("nan"))
    return out


def _mean_metrics(runs: list[dict]) -> dict:
    return {spec.key: float(np.nanmean([r[spec.key] for r in runs])) for spec in DEFAULT_SPECS}


def _welch(a, b) -> float:
    a = [v for v in a if math.isfinite(v)]
    b = [v for v in b if math.isfinite(v)]
    try:
        return welch_t(a, b)[1]
    except UndefinedMetricError:
        return float("nan")


def _summary_row(label: str, runs: list[dict], deltas: list[float], p: float) -> dict:
    row = {"label": label}
    for spec in DEFAULT_SPECS:
        mean, ci = mean_ci([r[spec.key] for r in runs])
        row[spec.metric] = mean
        row[spec.metric + "_ci"] = ci
    row["delta_m"], row["delta_m_ci"] = mean_ci([d for d in deltas if math.isfinite(d)])
    row["p_value"] = p
    return row


def sort_rows(rows: list[MetricRow]) -> list[MetricRow]:
    return sorted(rows, key=lambda r: (r.run_id, r.strategy, str(r.T), r.noise_type, str(r.noise_db), r.task, r.metric))


# --- strategy comparison --------------------------------------------------


@dataclass
class CompareResult:
    rows: list
    summary: list  # one dict per strategy
    runs: dict  # label -> list of RunRecord


def _single_task_metrics(config: ExperimentConfig, dataset: Dataset) -> dict:
    metrics = {}
    for t, task in enumerate(TASKS):
        scales = [0.0, 0.0, 0.0]
        scales[t] = 1.0
        run = train(replace(config, strategy="equal_weight", loss_scales=scales), dataset)
        metrics.update({k: v for k, v in run.metrics.items() if k[0] == task})
    return metrics


def compare_strategies(config: ExperimentConfig, strategies=None, baseline: str | None = None) -> CompareResult:
    """Repeated runs of every strategy; delta_m and Welch p against a baseline.

    ``baseline`` names a strategy id or ``"single_task"`` (one run per task
    whose trunk sees only that task's loss). Metric rows cover the listed
    strategies only.
    """
    strategies = list(strategies if strategies is not None else config.strategies)
    if len(strategies) < 1:
        raise InvalidConfigError("compare needs at least one strategy")
    baseline = baseline or config.baseline
    dataset = build_dataset(config)
    seeds = [config.seed + r for r in range(config.repeats)]

    runs: dict[str, list[RunRecord]] = {}
    for spec in strategies:
        runs[spec.label] = [
            train(replace(config, seed=s, strategy=spec.name, temperature=spec.temperature), dataset)
            for s in seeds
        ]

    if baseline == SINGLE_TASK:
        base_metrics = [_single_task_metrics(replace(config, seed=s), dataset) for s in seeds]
    else:
        match = [s for s in strategies if s.name == baseline]
        if match:
            base_metrics = [r.metrics for r in runs[match[0].label]]
        else:
            base_metrics = [
                train(replace(config, seed=s, strategy=baseline), dataset).metrics for s in seeds
            ]
    reference = _mean_metrics(base_metrics)
    base_deltas = _delta_samples(base_metrics, reference)

    rows, summary = [], []
    for spec in strategies:
        recs = runs[spec.label]
        deltas = _delta_samples([r.metrics for r in recs], reference)
        summary.append(_summary_row(spec.label, [r.metrics for r in recs], deltas, _welch(deltas, base_deltas)))
        for r in recs:
            rows.extend(r.rows())
    return CompareResult(sort_rows(rows), summary, runs)


# --- noise sweep ----------------------------------------------------------


@dataclass
class SweepResult:
    rows: list
    summary: list  # one dict per protocol, clean first
    train_hashes: list
    doped: dict  # protocol label/db -> doped segment counts per repeat
    reports: dict  # protocol label/db -> NoiseReport per repeat
    monotone: bool | None


def noise_sweep(config: ExperimentConfig, protocols=None) -> SweepResult:
    """Train on clean data, then evaluate the same model under each protocol.

    Noise touches evaluation copies of the test split only. delta_m compares
    each protocol with the clean test metrics of the same model.
    """
    protocols = list(protocols if protocols is not None else config.noise)
    dataset = build_dataset(config)
    seeds = [config.seed + r for r in range(config.repeats)]
    clean: list[dict] = []
    noisy: dict[int, list[dict]] = {i: [] for i in range(len(protocols))}
    doped: dict[str, list[int]] = {}
    reports: dict[str, list[NoiseReport]] = {}
    rows, hashes = [], []
    for s in seeds:
        run = train(replace(config, seed=s), dataset)
        clean.append(run.metrics)
        rows.extend(run.rows())
        for i, proto in enumerate(protocols):
            data, report = noisy_test(dataset, config, proto, seed=1_000_003 * (s + 1) + 7919 * i)
            metrics, _ = evaluate(run.net, data, config.window_s)
            noisy[i].append(metrics)
            key = f"{proto.label}@{proto.snr_db:g}dB"
            doped.setdefault(key, []).append(report.doped)
            reports.setdefault(key, []).append(report)
            rows.extend(run.rows(proto.label, proto.snr_db, metrics))
        hashes.append(dataset.train.digest())

    clean_deltas = [0.0 for _ in clean]
    summary = [_summary_row("clean", clean, clean_deltas, float("nan"))]
    for i, proto in enumerate(protocols):
        deltas = [delta_m(m, c) for m, c in zip(noisy[i], clean)]
        summary.append(_summary_row(f"{proto.label}@{proto.snr_db:g}dB", noisy[i], deltas, _welch(deltas, clean_deltas)))

    constant = [row["delta_m"] for row, p in zip(summary[1:], protocols) if p.type == "constant"]
    monotone = bool(np.all(np.diff(constant) <= 0)) if len(constant) > 1 else None
    return SweepResult(sort_rows(rows), summary, hashes, doped, reports, monotone)


# --- formatting -----------------------------------------------------------


def format_table(summary: list[dict]) -> str:
    cols = [spec.metric for spec in DEFAULT_SPECS]
    header = f"{'method':<22}" + "".join(f"{c:>18}" for c in cols) + f"{'delta_m%':>18}{'p':>10}"
    lines = [header, "-" * len(header)]
    for row in summary:
        cells = "".join(f"{row[c]:>10.4f}±{row[c + '_ci']:<7.4f}" for c in cols)
        lines.append(
            f"{row['label']:<22}{cells}{row['delta_m']:>10.2f}±{row['delta_m_ci']:<7.2f}{row['p_value']:>10.4f}"
        )
    return "\n".join(lines)
