"""Feature assembly: frequency-magnitude channels plus optional joint-angle
channels stacked onto the strain channels (6 -> 12 -> 18 configurations)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import KinematicsSample, MTSample, MovementLabel, N_CHANNELS
from .errors import ConfigError, ShapeError

MT_ROLES = tuple(f"mt{i}" for i in range(1, N_CHANNELS + 1))
DTFT_ROLES = tuple(f"dtft{i}" for i in range(1, N_CHANNELS + 1))
KIN_ROLES = tuple(f"kin{i}" for i in range(1, N_CHANNELS + 1))


def dtft_magnitude(channel: np.ndarray) -> np.ndarray:
    """Magnitude of the discrete Fourier evaluation of one channel, sampled
    at T uniform frequencies so the output length matches the time axis."""
    x = np.asarray(channel, dtype=np.float64)
    if x.ndim != 1 or x.size < 1:
        raise ShapeError("dtft_magnitude expects a nonempty 1-D channel")
    return np.abs(np.fft.fft(x))


def dtft_channels(values: np.ndarray, kind: str = "magnitude",
                  normalized: bool = True) -> np.ndarray:
    """Per-channel frequency features for a (C, T) matrix.

    ``normalized`` divides by T so the features share the scale of the
    [-1, 1] time-domain channels; ``kind`` switches to log magnitude.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2:
        raise ShapeError("dtft_channels expects a (channels, T) matrix")
    mags = np.stack([dtft_magnitude(ch) for ch in values])
    if normalized:
        mags = mags / values.shape[1]
    if kind == "magnitude":
        return mags
    if kind == "log_magnitude":
        return np.log1p(mags)
    raise ConfigError(f"unknown dtft kind: {kind!r}")


@dataclass(frozen=True)
class FeatureTensor:
    """Stacked classifier input with an explicit channel manifest."""

    values: np.ndarray       # (C, T), C in {6, 12, 18}
    manifest: tuple          # ordered channel roles
    label: MovementLabel

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != 2:
            raise ShapeError("feature values must be a (C, T) matrix")
        if vals.shape[0] != len(self.manifest):
            raise ShapeError(
                f"{vals.shape[0]} channels but manifest lists {len(self.manifest)}")
        vals = vals.copy()
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "manifest", tuple(self.manifest))

    @property
    def n_channels(self) -> int:
        return self.values.shape[0]

    @property
    def n_steps(self) -> int:
        return self.values.shape[1]


def assemble_features(mt: MTSample, dtft: np.ndarray | None = None,
                      kin: KinematicsSample | None = None) -> FeatureTensor:
    """Stack strain channels, optional frequency channels, and optional
    joint-angle channels in fixed manifest order."""
    blocks = [np.asarray(mt.values, dtype=np.float64)]
    manifest = list(MT_ROLES)
    T = mt.n_steps

    if dtft is not None:
        dtft = np.asarray(dtft, dtype=np.float64)
        if dtft.shape != (N_CHANNELS, T):
            raise ShapeError(
                f"dtft channels have shape {dtft.shape}, expected ({N_CHANNELS}, {T})")
        blocks.append(dtft)
        manifest += list(DTFT_ROLES)

    if kin is not None:
        if kin.values.shape != (N_CHANNELS, T):
            raise ShapeError(
                f"kin channels have shape {kin.values.shape}, expected ({N_CHANNELS}, {T})")
        blocks.append(kin.values)
        manifest += list(KIN_ROLES)

    return FeatureTensor(np.concatenate(blocks, axis=0), tuple(manifest), mt.label)
