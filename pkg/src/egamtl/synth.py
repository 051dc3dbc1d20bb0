"""Synthetic paired radar-vibration / ECG-template records.

Each cardiac cycle contributes two Gaussian-windowed tones to the radar
trace: one centred on the R-peak time ``t1`` and a second one at ``t2``
later in the cycle. The ECG trace is a sum-of-Gaussians PQRST template whose
R wave sits exactly on ``t1``. The template is a convenience stand-in and is
not physiological.

Records are cut into 4-s windows with a 1-s step. Each window is labelled
with the cycle whose R anchor is nearest the window centre (earlier anchor
on ties), that cycle's ECG piece resampled to 200 samples, its
peak-to-peak interval (PPI) bin, and every anchor inside the window.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import InvalidConfigError, InvalidInputError

RECORD_FORMAT = "egamtl-record"
RECORD_VERSION = 1

PIECE_LEN = 200
PPI_BIN_MS = 10.0
PPI_MIN_MS = 400.0
PPI_MAX_MS = 1400.0
N_PPI_BINS = int((PPI_MAX_MS - PPI_MIN_MS) / PPI_BIN_MS)
ENVELOPE_SPAN = 8.0  # Gaussian windows are evaluated over t0 +/- 8 widths


@dataclass(frozen=True)
class CycleParams:
    a1: float
    a2: float
    b1: float
    b2: float
    f1: float
    f2: float
    t1: float
    t2: float
    ppi: float


@dataclass(frozen=True)
class Wave:
    name: str
    amplitude: float  # mV
    offset: float  # fraction of the cycle PPI, relative to the R peak
    width: float  # seconds


DEFAULT_TEMPLATE = (
    Wave("P", 0.15, -0.20, 0.025),
    Wave("Q", -0.12, -0.04, 0.010),
    Wave("R", 1.00, 0.00, 0.010),
    Wave("S", -0.22, 0.04, 0.012),
    Wave("T", 0.30, 0.35, 0.045),
)


@dataclass
class SynthConfig:
    fs: float = 200.0
    duration_s: float = 30.0
    first_anchor_s: float = 0.5
    ppi_range: tuple = (0.6, 1.0)
    max_ppi_step: float = 0.05
    a1_range: tuple = (1.0, 1.0)
    a2_range: tuple = (0.3, 0.6)
    b1_range: tuple = (0.04, 0.07)
    b2_range: tuple = (0.02, 0.05)
    f1_range: tuple = (18.0, 25.0)
    f2_range: tuple = (30.0, 40.0)
    t2_frac_range: tuple = (0.28, 0.38)

    def validate(self) -> None:
        for name in ("ppi_range", "a1_range", "a2_range", "b1_range", "b2_range",
                     "f1_range", "f2_range", "t2_frac_range"):
            lo, hi = getattr(self, name)
            if not (math.isfinite(lo) and math.isfinite(hi)) or lo > hi:
                raise InvalidConfigError(f"{name} must be a finite (lo, hi) with lo <= hi")
        for name in ("ppi_range", "b1_range", "b2_range", "f1_range", "f2_range"):
            if getattr(self, name)[0] <= 0:
                raise InvalidConfigError(f"{name} must be positive")
        if self.a1_range[0] < 0 or self.a2_range[0] < 0:
            raise InvalidConfigError("amplitudes must be non-negative")
        lo, hi = self.t2_frac_range
        if lo <= 0 or hi >= 1:
            raise InvalidConfigError("t2_frac_range must lie inside (0, 1)")
        if not 0 <= self.max_ppi_step < 1:
            raise InvalidConfigError("max_ppi_step must be in [0, 1)")
        if self.fs <= 0 or self.duration_s <= 0 or self.first_anchor_s < 0:
            raise InvalidConfigError("fs and duration_s must be positive")
        fmax = max(self.f1_range[1], self.f2_range[1])
        if self.fs <= 2 * fmax:
            raise InvalidConfigError(f"fs={self.fs} undersamples {fmax} Hz vibrations")

    def digest(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def gen_cycles(seed: int, K: int, config: SynthConfig | None = None) -> list[CycleParams]:
    """Draw ``K`` cycles whose PPI follows a bounded random walk.

    Consecutive PPIs differ by at most ``max_ppi_step`` (relative) and stay
    inside ``ppi_range``. Other parameters are drawn independently per cycle.
    """
    config = config or SynthConfig()
    config.validate()
    if K < 1:
        raise InvalidConfigError(f"K must be >= 1, got {K}")
    rng = np.random.default_rng(seed)

    def draw(rng_range):
        lo, hi = rng_range
        return float(rng.uniform(lo, hi)) if hi > lo else float(lo)

    lo, hi = config.ppi_range
    cycles = []
    t1 = config.first_anchor_s
    ppi = draw(config.ppi_range)
    for k in range(K):
        if k > 0:
            step = rng.uniform(-config.max_ppi_step, config.max_ppi_step) if config.max_ppi_step > 0 else 0.0
            ppi = float(np.clip(ppi * (1.0 + step), lo, hi))
        frac = draw(config.t2_frac_range)
        cycles.append(
            CycleParams(
                a1=draw(config.a1_range),
                a2=draw(config.a2_range),
                b1=draw(config.b1_range),
                b2=draw(config.b2_range),
                f1=draw(config.f1_range),
                f2=draw(config.f2_range),
                t1=t1,
                t2=t1 + frac * ppi,
                ppi=ppi,
            )
        )
        t1 = t1 + ppi
    return cycles


def _default_length(cycles, fs: float) -> int:
    if not cycles:
        return 0
    last = cycles[-1]
    return int(math.ceil((last.t1 + last.ppi) * fs))


def _windowed_tone(n: int, fs: float, amp: float, freq: float, centre: float, width: float) -> tuple[slice, np.ndarray]:
    i0 = max(0, int(math.floor((centre - ENVELOPE_SPAN * width) * fs)))
    i1 = min(n, int(math.ceil((centre + ENVELOPE_SPAN * width) * fs)) + 1)
    t = np.arange(i0, i1) / fs
    return slice(i0, i1), amp * np.cos(2 * np.pi * freq * t) * np.exp(-((t - centre) ** 2) / width**2)


def _check_sampling(cycles, fs: float) -> None:
    if fs <= 0:
        raise InvalidConfigError("fs must be positive")
    if cycles:
        fmax = max(max(c.f1, c.f2) for c in cycles)
        if fs <= 2 * fmax:
            raise InvalidConfigError(f"fs={fs} undersamples {fmax} Hz vibrations")


def render_radar(cycles, fs: float, n_samples: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Clean radar trace (sum of both vibrations of every cycle) and anchors.

    Cycles are accumulated one at a time in order, so rendering each cycle on
    its own and summing the results in order reproduces this trace exactly.
    """
    _check_sampling(cycles, fs)
    n = _default_length(cycles, fs) if n_samples is None else int(n_samples)
    x = np.zeros(n)
    for c in cycles:
        x += _cycle_radar(c, fs, n)
    return x, np.array([c.t1 for c in cycles])


def _cycle_radar(c: CycleParams, fs: float, n: int) -> np.ndarray:
    out = np.zeros(n)
    sl, v1 = _windowed_tone(n, fs, c.a1, c.f1, c.t1, c.b1)
    out[sl] += v1
    sl, v2 = _windowed_tone(n, fs, c.a2, c.f2, c.t2, c.b2)
    out[sl] += v2
    return out


def render_ecg(cycles, fs: float, n_samples: int | None = None, template=DEFAULT_TEMPLATE) -> np.ndarray:
    _check_sampling(cycles, fs)
    n = _default_length(cycles, fs) if n_samples is None else int(n_samples)
    e = np.zeros(n)
    for c in cycles:
        for w in template:
            centre = c.t1 + w.offset * c.ppi
            i0 = max(0, int(math.floor((centre - ENVELOPE_SPAN * w.width) * fs)))
            i1 = min(n, int(math.ceil((centre + ENVELOPE_SPAN * w.width) * fs)) + 1)
            t = np.arange(i0, i1) / fs
            e[i0:i1] += w.amplitude * np.exp(-((t - centre) ** 2) / (2 * w.width**2))
    return e


# --- records --------------------------------------------------------------


@dataclass
class SyntheticRecord:
    radar: np.ndarray
    ecg: np.ndarray
    fs: float
    anchors: np.ndarray  # R-peak times, seconds
    ppi: np.ndarray  # per-cycle PPI, seconds
    seed: int = 0
    config_hash: str = ""
    noise: list = field(default_factory=list)

    def __post_init__(self):
        if self.radar.shape != self.ecg.shape:
            raise InvalidInputError("radar and ECG traces differ in length")
        if self.anchors.shape != self.ppi.shape:
            raise InvalidInputError("anchors and ppi lists differ in length")
        if self.anchors.size and (np.any(np.diff(self.anchors) <= 0) or self.anchors[0] < 0
                                  or self.anchors[-1] > (self.radar.size - 1) / self.fs):
            raise InvalidInputError("anchors must be increasing and inside the trace")

    @property
    def duration_s(self) -> float:
        return self.radar.size / self.fs


def make_record(seed: int, config: SynthConfig | None = None, template=DEFAULT_TEMPLATE) -> SyntheticRecord:
    """A clean record of ``config.duration_s`` seconds."""
    config = config or SynthConfig()
    config.validate()
    n = int(round(config.duration_s * config.fs))
    K = int(math.ceil((config.duration_s - config.first_anchor_s) / config.ppi_range[0])) + 1
    cycles = gen_cycles(seed, max(K, 1), config)
    last_t = (n - 1) / config.fs
    cycles = [c for c in cycles if c.t1 <= last_t]
    radar, anchors = render_radar(cycles, config.fs, n)
    ecg = render_ecg(cycles, config.fs, n, template)
    return SyntheticRecord(
        radar=radar,
        ecg=ecg,
        fs=config.fs,
        anchors=anchors,
        ppi=np.array([c.ppi for c in cycles]),
        seed=seed,
        config_hash=config.digest(),
    )


def write_record(record: SyntheticRecord, path) -> None:
    """Text container: two ``#`` header lines, then ``radar,ecg`` CSV rows.

    The second header line is JSON with fs, seed, config hash, noise
    annotations, anchors and PPIs. Floats are written with ``repr`` so a
    read-back is bit-exact.
    """
    header = {
        "fs": record.fs,
        "seed": record.seed,
        "config_hash": record.config_hash,
        "noise": record.noise,
        "anchors": record.anchors.tolist(),
        "ppi": record.ppi.tolist(),
    }
    lines = [f"# {RECORD_FORMAT} v{RECORD_VERSION}", "# " + json.dumps(header), "radar,ecg"]
    lines += [f"{r!r},{e!r}" for r, e in zip(record.radar.tolist(), record.ecg.tolist())]
    Path(path).write_text("\n".join(lines) + "\n")


def read_record(path) -> SyntheticRecord:
    lines = Path(path).read_text().splitlines()
    if len(lines) < 3 or lines[0] != f"# {RECORD_FORMAT} v{RECORD_VERSION}":
        raise InvalidInputError(f"{path} is not a v{RECORD_VERSION} record file")
    header = json.loads(lines[1][2:])
    if lines[2] != "radar,ecg":
        raise InvalidInputError(f"{path}: unexpected column header {lines[2]!r}")
    body = [row.split(",") for row in lines[3:] if row]
    radar = np.array([float(r) for r, _ in body])
    ecg = np.array([float(e) for _, e in body])
    return SyntheticRecord(
        radar=radar,
        ecg=ecg,
        fs=float(header["fs"]),
        anchors=np.array(header["anchors"], dtype=np.float64),
        ppi=np.array(header["ppi"], dtype=np.float64),
        seed=int(header["seed"]),
        config_hash=header["config_hash"],
        noise=header["noise"],
    )


# --- noise ----------------------------------------------------------------


def _power(x: np.ndarray) -> float:
    return float(np.mean(x * x))


def _scaled_noise(rng: np.random.Generator, n: int, power: float) -> np.ndarray:
    w = rng.standard_normal(n)
    return w * math.sqrt(power / _power(w))


def add_constant_noise(trace, snr_db: float, seed: int) -> np.ndarray:
    """Add white Gaussian noise whose realised power hits ``snr_db`` exactly."""
    trace = np.asarray(trace, dtype=np.float64)
    if trace.size == 0:
        raise InvalidInputError("trace is empty")
    p_signal = _power(trace)
    if p_signal == 0:
        raise InvalidInputError("trace has zero power; SNR is undefined")
    rng = np.random.default_rng(seed)
    return trace + _scaled_noise(rng, trace.size, p_signal / 10 ** (snr_db / 10))


def snr_db(clean, noisy) -> float:
    clean = np.asarray(clean, dtype=np.float64)
    return 10 * math.log10(_power(clean) / _power(np.asarray(noisy) - clean))


# --- segmentation ---------------------------------------------------------


@dataclass
class Segment:
    window: np.ndarray  # raw radar samples, window_s * fs long
    target: np.ndarray  # ECG piece of the centre cycle, PIECE_LEN samples
    anchors: np.ndarray  # anchor times relative to the window start, seconds
    ppi: float  # centre-cycle PPI, seconds
    start: int  # first sample index in the record
    fs: float
    record_seed: int = 0
    labeled: bool = True


@dataclass(frozen=True)
class Burst:
    segment: int
    start: int
    stop: int  # exclusive
    snr_db: float


def ecg_piece(ecg: np.ndarray, fs: float, t1: float, ppi: float, length: int = PIECE_LEN) -> np.ndarray:
    """One cycle of ECG, from a third of a PPI before R to two thirds after."""
    t = np.linspace(t1 - ppi / 3.0, t1 + 2.0 * ppi / 3.0, length, endpoint=False)
    return np.interp(t, np.arange(ecg.size) / fs, ecg)


def segment(record: SyntheticRecord, window_s: float = 4.0, step_s: float = 1.0) -> list[Segment]:
    fs = record.fs
    win = int(round(window_s * fs))
    step = int(round(step_s * fs))
    if win <= 0 or step <= 0:
        raise InvalidConfigError("window and step must be positive")
    n = record.radar.size
    if n < win:
        raise InvalidInputError(f"record of {n} samples is shorter than the {win}-sample window")
    out = []
    for s in range((n - win) // step + 1):
        i0 = s * step
        t0, t_end = i0 / fs, (i0 + win) / fs
        inside = np.nonzero((record.anchors >= t0) & (record.anchors < t_end))[0]
        window = record.radar[i0 : i0 + win].copy()
        if inside.size == 0:
            out.append(Segment(window, np.zeros(PIECE_LEN), np.zeros(0), float("nan"), i0, fs,
                               record.seed, labeled=False))
            continue
        centre = t0 + window_s / 2.0
        dist = np.abs(record.anchors[inside] - centre)
        k = inside[int(np.argmin(dist))]  # argmin keeps the earlier anchor on ties
        piece = ecg_piece(record.ecg, fs, record.anchors[k], record.ppi[k])
        out.append(Segment(window, piece, record.anchors[inside] - t0, float(record.ppi[k]), i0, fs,
                           record.seed))
    return out


def add_abrupt_noise(segments, fraction: float, duration_s: float, snr_db: float, seed: int):
    """Dope ``round(fraction * N)`` randomly chosen segments with one burst each.

    Each burst is a contiguous run of Gaussian noise of ``duration_s``
    seconds placed uniformly inside the window. Its power is set relative to
    that window's signal power. Returns new segments and the burst list.
    """
    if not 0 < fraction <= 1:
        raise InvalidConfigError(f"fraction must be in (0, 1], got {fraction}")
    if not 0 < duration_s <= 4:
        raise InvalidConfigError(f"duration_s must be in (0, 4], got {duration_s}")
    segments = list(segments)
    N = len(segments)
    n_doped = int(math.floor(fraction * N + 0.5))
    rng = np.random.default_rng(seed)
    chosen = np.sort(rng.choice(N, size=n_doped, replace=False)) if n_doped else np.zeros(0, int)
    out = list(segments)
    bursts = []
    for idx in chosen.tolist():
        seg = segments[idx]
        L = seg.window.size
        length = min(L, int(round(duration_s * seg.fs)))
        start = int(rng.integers(0, L - length + 1))
        p_signal = _power(seg.window)
        if p_signal == 0:
            raise InvalidInputError(f"segment {idx} has zero power")
        window = seg.window.copy()
        window[start : start + length] += _scaled_noise(rng, length, p_signal / 10 ** (snr_db / 10))
        out[idx] = replace(seg, window=window)
        bursts.append(Burst(idx, start, start + length, float(snr_db)))
    return out, bursts


# --- model-facing encodings -----------------------------------------------


def pooled_envelope(windows: np.ndarray, pool: int = 4) -> np.ndarray:
    """Mean of |x| over non-overlapping blocks of ``pool`` samples."""
    windows = np.atleast_2d(windows)
    B, L = windows.shape
    if L % pool:
        raise InvalidInputError(f"window length {L} is not a multiple of pool={pool}")
    return np.abs(windows).reshape(B, L // pool, pool).mean(axis=2)


def ppi_bin(ppi_s) -> np.ndarray:
    idx = np.floor((np.asarray(ppi_s) * 1000.0 - PPI_MIN_MS) / PPI_BIN_MS)
    return np.clip(idx, 0, N_PPI_BINS - 1).astype(int)


def bin_center_ms(idx) -> np.ndarray:
    return PPI_MIN_MS + PPI_BIN_MS * (np.asarray(idx) + 0.5)


def anchor_mask(anchors_rel, window_s: float, n_classes: int) -> np.ndarray:
    idx = np.round(np.asarray(anchors_rel) * n_classes / window_s).astype(int)
    mask = np.zeros(n_classes, dtype=bool)
    mask[np.clip(idx, 0, n_classes - 1)] = True
    return mask
