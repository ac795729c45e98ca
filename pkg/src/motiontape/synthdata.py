"""Physics-inspired simulator standing in for the (non-public) wearable corpus.

Each movement has a fixed six-channel strain signature and a paired
six-channel joint-angle signature, modulated by one raised-cosine bump per
repetition sample.  Subjects differ only by a multiplicative gain (which
downstream per-trial min-max scaling removes, so subject identity is
deliberately weakly encoded).  Noise is a single dial: additive Gaussian
noise plus outlier spikes on the strain channels, and proportionally
scaled amplitude/timing jitter and (smaller) joint-angle noise.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict

import numpy as np

from .core import Dataset, KinematicsSample, MovementLabel, MTSample, N_CHANNELS, SCHEMA_VERSION
from .errors import ConfigError, NotApplicableError

# Strain channels are laid out as three sensor rows (top, middle, bottom)
# in left/right pairs: ch0/ch1 top, ch2/ch3 middle, ch4/ch5 bottom.
# Positive amplitude = tension, negative = compression.
#
# Flexion stretches the whole back, strongest at the bottom sensors;
# extension compresses it.  Lateral bending compresses the bent-towards
# side and stretches the other; seated rotation shears diagonally (top and
# bottom rows move oppositely) with only a weak response in the middle row.
MT_SIGNATURES: Dict[MovementLabel, np.ndarray] = {
    MovementLabel.EXTENSION:          np.array([-0.45, -0.45, -0.60, -0.60, -0.75, -0.75]),
    MovementLabel.FLEXION:            np.array([+0.40, +0.40, +0.65, +0.65, +0.95, +0.95]),
    MovementLabel.LATERAL_BEND_LEFT:  np.array([-0.55, +0.55, -0.50, +0.50, -0.45, +0.45]),
    MovementLabel.LATERAL_BEND_RIGHT: np.array([+0.55, -0.55, +0.50, -0.50, +0.45, -0.45]),
    MovementLabel.ROTATION_LEFT:      np.array([+0.50, -0.50, +0.15, -0.15, -0.55, +0.55]),
    MovementLabel.ROTATION_RIGHT:     np.array([-0.50, +0.50, -0.15, +0.15, +0.55, -0.55]),
}

# Joint-angle channels: lower-to-pelvis (x, y, z) then upper-to-lower (x, y, z).
# Sagittal movements live on x, lateral bending on y, rotation on z.
KIN_SIGNATURES: Dict[MovementLabel, np.ndarray] = {
    MovementLabel.EXTENSION:          np.array([+0.60, 0.0, 0.0, +0.45, 0.0, 0.0]),
    MovementLabel.FLEXION:            np.array([-0.90, 0.0, 0.0, -0.70, 0.0, 0.0]),
    MovementLabel.LATERAL_BEND_LEFT:  np.array([0.0, +0.80, 0.0, 0.0, +0.60, 0.0]),
    MovementLabel.LATERAL_BEND_RIGHT: np.array([0.0, -0.80, 0.0, 0.0, -0.60, 0.0]),
    MovementLabel.ROTATION_LEFT:      np.array([0.0, 0.0, +0.75, 0.0, 0.0, +0.50]),
    MovementLabel.ROTATION_RIGHT:     np.array([0.0, 0.0, -0.75, 0.0, 0.0, -0.50]),
}

#: Left/right mirror: swap each strain sensor with its row partner.
MT_MIRROR_PERMUTATION = np.array([1, 0, 3, 2, 5, 4])
#: Left/right mirror for joint angles: frontal/transverse axes flip sign.
KIN_MIRROR_SIGNS = np.array([1.0, -1.0, -1.0, 1.0, -1.0, -1.0])

MIRROR_PAIRS = (
    (MovementLabel.LATERAL_BEND_LEFT, MovementLabel.LATERAL_BEND_RIGHT),
    (MovementLabel.ROTATION_LEFT, MovementLabel.ROTATION_RIGHT),
)

ENVELOPE_ONSET = 0.15
ENVELOPE_RETURN = 0.85


@dataclass(frozen=True)
class SimulatorConfig:
    """Simulator knobs.  ``noise_sigma`` is the master noise dial: amplitude
    jitter, timing jitter, and joint-angle noise scale with it (via the
    ``*_ratio`` fields), so ``noise_sigma = 0`` yields exactly
    ``subject_gain x signature`` samples."""

    n_subjects: int = 10
    reps_per_movement: int = 3
    T: int = 300
    noise_sigma: float = 0.22
    spike_rate: float = 0.002
    subject_gain_range: tuple = (0.8, 1.2)
    seed: int = 0
    amp_jitter_ratio: float = 1.0
    time_jitter_ratio: float = 0.3
    kin_noise_ratio: float = 0.25


def validate_config(cfg: SimulatorConfig) -> None:
    if cfg.n_subjects < 1:
        raise ConfigError(f"n_subjects must be >= 1, got {cfg.n_subjects}")
    if cfg.reps_per_movement < 1:
        raise ConfigError(f"reps_per_movement must be >= 1, got {cfg.reps_per_movement}")
    if cfg.T < 2:
        raise ConfigError(f"T must be >= 2, got {cfg.T}")
    if cfg.noise_sigma < 0:
        raise ConfigError(f"noise_sigma must be >= 0, got {cfg.noise_sigma}")
    if not (0.0 <= cfg.spike_rate < 1.0):
        raise ConfigError(f"spike_rate must be in [0, 1), got {cfg.spike_rate}")
    lo, hi = cfg.subject_gain_range
    if not (0 < lo <= hi):
        raise ConfigError(f"subject_gain_range must satisfy 0 < lo <= hi, got {cfg.subject_gain_range}")
    for name in ("amp_jitter_ratio", "time_jitter_ratio", "kin_noise_ratio"):
        if getattr(cfg, name) < 0:
            raise ConfigError(f"{name} must be >= 0, got {getattr(cfg, name)}")


def envelope(u: np.ndarray) -> np.ndarray:
    """Raised-cosine bump: zero before 15% and after 85%, peak 1.0 at 50%."""
    u = np.asarray(u, dtype=np.float64)
    span = ENVELOPE_RETURN - ENVELOPE_ONSET
    inside = (u >= ENVELOPE_ONSET) & (u <= ENVELOPE_RETURN)
    out = np.zeros_like(u)
    out[inside] = 0.5 * (1.0 - np.cos(2.0 * np.pi * (u[inside] - ENVELOPE_ONSET) / span))
    return out


def signature_sample(label: MovementLabel, T: int, gain: float = 1.0):
    """Noise-free (strain, kinematics) pair for one repetition: the closed
    form that generate_dataset reduces to when every noise term is zero."""
    env = envelope(np.arange(T) / T)
    mt = gain * MT_SIGNATURES[label][:, None] * env[None, :]
    kin = gain * KIN_SIGNATURES[label][:, None] * env[None, :]
    return mt, kin


def generate_dataset(cfg: SimulatorConfig) -> Dataset:
    """Deterministically generate n_subjects x 6 movements x reps samples.

    Each subject draws from its own seed-derived substream, so per-subject
    generation could run in parallel without changing the output.
    """
    validate_config(cfg)
    t_grid = np.arange(cfg.T) / cfg.T
    sigma = cfg.noise_sigma
    amp_jitter = cfg.amp_jitter_ratio * sigma
    time_jitter = cfg.time_jitter_ratio * sigma
    kin_sigma = cfg.kin_noise_ratio * sigma

    samples = []
    kins = []
    for subj_idx in range(cfg.n_subjects):
        rng = np.random.default_rng([cfg.seed, subj_idx])
        subject_id = f"S{subj_idx + 1:02d}"
        lo, hi = cfg.subject_gain_range
        gain = rng.uniform(lo, hi)
        for label in MovementLabel:
            mt_amp = MT_SIGNATURES[label]
            kin_amp = KIN_SIGNATURES[label]
            for rep in range(1, cfg.reps_per_movement + 1):
                shift = rng.uniform(-time_jitter, time_jitter)
                env = envelope(t_grid - shift)
                channel_gain = 1.0 + rng.normal(0.0, amp_jitter, size=N_CHANNELS) \
                    if amp_jitter > 0 else np.ones(N_CHANNELS)
                mt = (gain * mt_amp * channel_gain)[:, None] * env[None, :]
                if sigma > 0:
                    mt = mt + rng.normal(0.0, sigma, size=mt.shape)
                if cfg.spike_rate > 0:
                    mask = rng.random(size=mt.shape) < cfg.spike_rate
                    spikes = rng.uniform(5.0 * sigma, 15.0 * sigma, size=mt.shape)
                    signs = rng.choice([-1.0, 1.0], size=mt.shape)
                    mt = mt + mask * signs * spikes
                kin = (gain * kin_amp)[:, None] * env[None, :]
                if kin_sigma > 0:
                    kin = kin + rng.normal(0.0, kin_sigma, size=kin.shape)
                samples.append(MTSample(subject_id, rep, label, mt, provenance="real"))
                kins.append(KinematicsSample(kin, provenance="measured"))

    metadata = {
        "schema_version": SCHEMA_VERSION,
        "provenance": "synthetic-groundtruth",
        "seed": cfg.seed,
        "noise_sigma": cfg.noise_sigma,
        "spike_rate": cfg.spike_rate,
        "complete": True,
    }
    return Dataset(tuple(samples), tuple(kins), metadata, processed=False)


def min_signature_separation() -> float:
    """Smallest pairwise L2 distance between the strain signatures; positive
    by construction, which is what makes the noise-free task separable."""
    labels = list(MovementLabel)
    best = np.inf
    for i, a in enumerate(labels):
        for b in labels[i + 1:]:
            best = min(best, float(np.linalg.norm(MT_SIGNATURES[a] - MT_SIGNATURES[b])))
    return best


def mirror_check(d: Dataset) -> bool:
    """True iff every left/right movement pair in a noise-free dataset is
    exactly mirror-symmetric under the simulator's channel-swap map."""
    if d.metadata.get("noise_sigma", None) != 0 or d.metadata.get("spike_rate", None) != 0:
        raise NotApplicableError(
            "mirror_check requires a noise-free simulator dataset "
            "(noise_sigma = 0 and spike_rate = 0 in metadata)"
        )
    by_key = {s.key: i for i, s in enumerate(d.samples)}
    for left, right in MIRROR_PAIRS:
        for i, s in enumerate(d.samples):
            if s.label != left:
                continue
            j = by_key.get((s.subject_id, int(right), s.repetition))
            if j is None:
                continue
            other = d.samples[j]
            if not np.array_equal(s.values, other.values[MT_MIRROR_PERMUTATION, :]):
                return False
            if d.kinematics is not None and d.kinematics[i] is not None \
                    and d.kinematics[j] is not None:
                mirrored = KIN_MIRROR_SIGNS[:, None] * d.kinematics[j].values
                if not np.array_equal(d.kinematics[i].values, mirrored):
                    return False
    return True
