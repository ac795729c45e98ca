"""Signal conditioning: baseline normalization, Hampel outlier filtering,
noisy-trial exclusion, temporal alignment, resampling, and per-trial
min-max scaling to [-1, 1].

Every operation is pure; the pipeline applies them per sample and is
order-independent across samples.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .core import Dataset, KinematicsSample, MTSample, N_CHANNELS, TARGET_T
from .errors import AlignmentError, ConfigError, DataError

MAD_SCALE = 1.4826  # Gaussian-consistency factor for the median absolute deviation


@dataclass(frozen=True)
class RawTrial:
    """One unprocessed recording: resistance in ohms plus per-channel
    unstrained baseline, with optional raw joint angles in degrees."""

    resistance: np.ndarray          # (6, T_raw) ohms
    baseline_r0: np.ndarray         # (6,) ohms
    kinematics: Optional[np.ndarray] = None  # (6, T_raw') degrees
    mt_offset: float = 0.0          # start-time offsets, seconds
    kin_offset: float = 0.0
    dt: float = 0.020

    def __post_init__(self):
        res = np.asarray(self.resistance, dtype=np.float64)
        if res.ndim != 2 or res.shape[1] < 2:
            raise DataError("resistance must be a (channels, T>=2) matrix")
        object.__setattr__(self, "resistance", res)
        object.__setattr__(self, "baseline_r0",
                           np.asarray(self.baseline_r0, dtype=np.float64))
        if self.kinematics is not None:
            object.__setattr__(self, "kinematics",
                               np.asarray(self.kinematics, dtype=np.float64))


@dataclass(frozen=True)
class PreprocessParams:
    hampel_half_width: int = 5
    hampel_k: float = 3.0
    exclusion_zscore: float = 10.0
    target_T: int = TARGET_T

    def validate(self):
        if self.hampel_half_width < 1:
            raise ConfigError(f"hampel_half_width must be >= 1, got {self.hampel_half_width}")
        if self.hampel_k <= 0:
            raise ConfigError(f"hampel_k must be > 0, got {self.hampel_k}")
        if self.exclusion_zscore <= 0:
            raise ConfigError(f"exclusion_zscore must be > 0, got {self.exclusion_zscore}")
        if self.target_T < 2:
            raise ConfigError(f"target_T must be >= 2, got {self.target_T}")


def baseline_normalize(trial: RawTrial) -> np.ndarray:
    """(R - R0) / R0 per channel; dimensionless strain-proportional output."""
    r0 = trial.baseline_r0
    bad = np.flatnonzero(r0 <= 0)
    if bad.size:
        raise DataError(f"degenerate baseline: channel {bad[0] + 1} has R0 = {r0[bad[0]]}")
    return (trial.resistance - r0[:, None]) / r0[:, None]


def hampel_filter(series: np.ndarray, window_half_width: int = 5, k: float = 3.0) -> np.ndarray:
    """Sliding-window outlier filter.

    A point farther than ``k * 1.4826 * MAD`` from its window median is
    replaced by that median; all other points pass through bitwise
    unchanged.  Windows are centered, 2*half_width+1 wide, and truncated
    at the boundaries.  Series shorter than 2 pass through.
    """
    if window_half_width < 1:
        raise ConfigError(f"window_half_width must be >= 1, got {window_half_width}")
    if k <= 0:
        raise ConfigError(f"k must be > 0, got {k}")
    x = np.asarray(series, dtype=np.float64)
    n = x.shape[-1]
    if x.ndim != 1:
        raise DataError("hampel_filter expects a 1-D series")
    if n < 2:
        return x.copy()

    w = window_half_width
    medians = np.empty(n)
    mads = np.empty(n)
    if n >= 2 * w + 1:
        windows = np.lib.stride_tricks.sliding_window_view(x, 2 * w + 1)
        med = np.median(windows, axis=1)
        mad = np.median(np.abs(windows - med[:, None]), axis=1)
        medians[w:n - w] = med
        mads[w:n - w] = mad
        edges = list(range(w)) + list(range(n - w, n))
    else:
        edges = range(n)
    for i in edges:
        lo, hi = max(0, i - w), min(n, i + w + 1)
        win = x[lo:hi]
        medians[i] = np.median(win)
        mads[i] = np.median(np.abs(win - medians[i]))

    outlier = np.abs(x - medians) > k * MAD_SCALE * mads
    out = x.copy()
    out[outlier] = medians[outlier]
    return out


@dataclass(frozen=True)
class ExclusionRecord:
    key: tuple       # (subject_id, label code, repetition)
    channel: int     # 1-based offending channel
    max_z: float     # peak z-score within that channel


def exclude_noisy_trials(d: Dataset, zscore: float = 10.0) -> Tuple[Dataset, List[ExclusionRecord]]:
    """Drop samples with any value more than ``zscore`` standard deviations
    above that channel's own within-sample mean (one-sided exceedance)."""
    kept_idx = []
    excluded = []
    for i, s in enumerate(d.samples):
        mean = s.values.mean(axis=1, keepdims=True)
        std = s.values.std(axis=1, keepdims=True)
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.where(std > 0, (s.values - mean) / std, 0.0)
        peak = z.max(axis=1)
        worst = int(np.argmax(peak))
        if peak[worst] > zscore:
            excluded.append(ExclusionRecord(s.key, worst + 1, float(peak[worst])))
        else:
            kept_idx.append(i)
    kept = d.subset(kept_idx)
    if not excluded and d.metadata.get("complete"):
        kept = kept.replace(metadata=dict(d.metadata))
    return kept, excluded


def align_and_trim(mt: np.ndarray, kin: np.ndarray,
                   offsets: Tuple[float, float] = (0.0, 0.0),
                   dt: float = 0.020) -> Tuple[np.ndarray, np.ndarray]:
    """Synchronize two streams recorded with different start times.

    The stream that started earlier drops leading samples until both begin
    at the common (later) start, then both are trimmed at the tail to the
    shorter length.
    """
    mt = np.asarray(mt, dtype=np.float64)
    kin = np.asarray(kin, dtype=np.float64)
    mt_off, kin_off = offsets
    start = max(mt_off, kin_off)
    mt_drop = int(round((start - mt_off) / dt))
    kin_drop = int(round((start - kin_off) / dt))
    mt = mt[:, mt_drop:]
    kin = kin[:, kin_drop:]
    n = min(mt.shape[1], kin.shape[1])
    if n == 0:
        raise AlignmentError("streams have no overlap after offset removal")
    return mt[:, :n], kin[:, :n]


def resample_to(series: np.ndarray, T: int) -> np.ndarray:
    """Linear interpolation onto T uniform points over the original range;
    endpoints are preserved exactly."""
    if T < 2:
        raise ConfigError(f"target length must be >= 2, got {T}")
    series = np.asarray(series, dtype=np.float64)
    squeeze = series.ndim == 1
    if squeeze:
        series = series[None, :]
    n = series.shape[1]
    if n < 2:
        raise DataError(f"cannot resample a length-{n} series")
    old = np.arange(n, dtype=np.float64)
    new = np.linspace(0.0, n - 1.0, T)
    out = np.empty((series.shape[0], T))
    for c in range(series.shape[0]):
        out[c] = np.interp(new, old, series[c])
    # np.interp is exact at grid points except for float fuzz at the ends
    out[:, 0] = series[:, 0]
    out[:, -1] = series[:, -1]
    return out[0] if squeeze else out


def minmax_normalize(trial_group: Sequence[np.ndarray]) -> List[np.ndarray]:
    """Scale each channel to [-1, 1] using min/max pooled over the whole
    trial group (all repetitions of one subject's movement trial).
    Constant channels map to zero."""
    if not len(trial_group):
        raise DataError("minmax_normalize requires a nonempty trial group")
    mats = [np.asarray(m, dtype=np.float64) for m in trial_group]
    lo = np.min([m.min(axis=1) for m in mats], axis=0)
    hi = np.max([m.max(axis=1) for m in mats], axis=0)
    span = hi - lo
    out = []
    for m in mats:
        scaled = np.zeros_like(m)
        nz = span > 0
        scaled[nz] = 2.0 * (m[nz] - lo[nz, None]) / span[nz, None] - 1.0
        out.append(scaled)
    return out


def preprocess_raw_trial(trial: RawTrial, params: PreprocessParams = PreprocessParams()):
    """Raw-ohms ingestion path: baseline-normalize, filter, align, resample.

    Returns (mt, kin) matrices ready for per-trial min-max grouping; kin is
    None when the trial has no paired angles.
    """
    params.validate()
    mt = baseline_normalize(trial)
    mt = np.stack([hampel_filter(ch, params.hampel_half_width, params.hampel_k) for ch in mt])
    kin = trial.kinematics
    if kin is not None:
        mt, kin = align_and_trim(mt, kin, (trial.mt_offset, trial.kin_offset), trial.dt)
        kin = resample_to(kin, params.target_T)
    mt = resample_to(mt, params.target_T)
    return mt, kin


def run_pipeline(d: Dataset, params: PreprocessParams = PreprocessParams()):
    """Full per-sample pipeline for an already baseline-normalized dataset:
    Hampel filter -> noisy-trial exclusion -> resample to the target length
    -> per-(subject, movement) min-max scaling of all repetitions together.

    Returns (processed Dataset, exclusion records).
    """
    params.validate()
    filtered = []
    for s in d.samples:
        vals = np.stack([hampel_filter(ch, params.hampel_half_width, params.hampel_k)
                         for ch in s.values])
        filtered.append(MTSample(s.subject_id, s.repetition, s.label, vals,
                                 dt=s.dt, provenance=s.provenance))
    stage = Dataset(tuple(filtered), d.kinematics, dict(d.metadata), processed=False)

    stage, excluded = exclude_noisy_trials(stage, params.exclusion_zscore)

    mt_mats = [resample_to(s.values, params.target_T) for s in stage.samples]
    kin_mats = None
    if stage.kinematics is not None:
        kin_mats = [None if k is None else resample_to(k.values, params.target_T)
                    for k in stage.kinematics]

    groups: dict = {}
    for i, s in enumerate(stage.samples):
        groups.setdefault((s.subject_id, s.label), []).append(i)

    norm_mt: dict = {}
    norm_kin: dict = {}
    for idx in groups.values():
        scaled = minmax_normalize([mt_mats[i] for i in idx])
        for i, m in zip(idx, scaled):
            norm_mt[i] = m
        if kin_mats is not None:
            present = [i for i in idx if kin_mats[i] is not None]
            if present:
                scaled_k = minmax_normalize([kin_mats[i] for i in present])
                for i, m in zip(present, scaled_k):
                    norm_kin[i] = m

    samples = []
    kins = [] if stage.kinematics is not None else None
    for i, s in enumerate(stage.samples):
        samples.append(MTSample(s.subject_id, s.repetition, s.label, norm_mt[i],
                                dt=s.dt, provenance=s.provenance))
        if kins is not None:
            old = stage.kinematics[i]
            if i in norm_kin:
                kins.append(KinematicsSample(norm_kin[i], provenance=old.provenance))
            else:
                kins.append(None)

    meta = dict(stage.metadata)
    meta["preprocessed"] = True
    out = Dataset(tuple(samples), tuple(kins) if kins is not None else None,
                  meta, processed=True)
    return out, excluded


def format_exclusion_log(excluded: Sequence[ExclusionRecord]) -> str:
    """One line per excluded sample: id, offending channel, max z-score."""
    lines = []
    for rec in excluded:
        subject, label, rep = rec.key
        lines.append(f"{subject}/{label}/{rep},channel={rec.channel},max_z={rec.max_z:.3f}")
    return "\n".join(lines) + ("\n" if lines else "")
