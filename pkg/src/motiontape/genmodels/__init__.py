"""Conditional generative models: configuration, training entry points,
sampling/translation operations, artifact persistence, and the
mode-collapse diagnostic."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
import torch

from ..artifacts import read_artifact, write_artifact
from ..core import Dataset, KinematicsSample, MovementLabel, MTSample, dataset_fingerprint
from ..errors import ArityError, ConfigError, DataError, ModeError, ShapeError
from .cvae import VAEGenerator, elbo_loss
from .diffusion import DiffusionGenerator, cosine_alpha_bar
from .gan import GANGenerator

FAMILIES = ("cvae", "diffusion", "gan")
CONDITIONING_MODES = ("movement_label", "mt_sequence")

#: A diversity ratio below this flags likely mode collapse.
COLLAPSE_WARNING_THRESHOLD = 0.1


@dataclass(frozen=True)
class GeneratorConfig:
    """Family-tagged hyperparameters; family-specific fields are only
    consulted for that family."""

    family: str
    conditioning_mode: str = "movement_label"
    decoder_layers: int = 4
    hidden_dim: int = 12
    latent_dim: int = 12
    sampling_steps: int = 500        # diffusion only
    embedding_layers: int = 3        # gan only
    generator_advantage: int = 2     # gan only
    epochs: int = 400
    learning_rate: float = 1e-3
    batch_size: int = 32
    beta: float = 1.0                # cvae KL weight
    seed: int = 0

    @classmethod
    def for_family(cls, family: str, **overrides) -> "GeneratorConfig":
        """Defaults per family; the architecture numbers are the
        grid-search optima reported for each model."""
        defaults = {
            "cvae": dict(decoder_layers=4, hidden_dim=12, latent_dim=12, epochs=400),
            "diffusion": dict(decoder_layers=12, hidden_dim=64, sampling_steps=500,
                              epochs=400),
            "gan": dict(latent_dim=12, embedding_layers=3, generator_advantage=2,
                        epochs=60),
        }
        if family not in defaults:
            raise ConfigError(f"unknown generator family: {family!r}")
        params = dict(defaults[family])
        params.update(overrides)
        return cls(family=family, **params)


def validate_generator_config(cfg: GeneratorConfig) -> None:
    if cfg.family not in FAMILIES:
        raise ConfigError(f"unknown generator family: {cfg.family!r}")
    if cfg.conditioning_mode not in CONDITIONING_MODES:
        raise ConfigError(f"unknown conditioning_mode: {cfg.conditioning_mode!r}")
    positive = ["hidden_dim", "latent_dim", "decoder_layers"]
    if cfg.family == "diffusion":
        if cfg.sampling_steps < 1:
            raise ConfigError(f"sampling_steps must be >= 1, got {cfg.sampling_steps}")
    if cfg.family == "gan":
        positive += ["embedding_layers", "generator_advantage"]
    for name in positive:
        if getattr(cfg, name) < 1:
            raise ConfigError(f"{name} must be positive, got {getattr(cfg, name)}")
    if cfg.epochs < 0:
        raise ConfigError(f"epochs must be >= 0, got {cfg.epochs}")
    if cfg.learning_rate <= 0:
        raise ConfigError(f"learning_rate must be > 0, got {cfg.learning_rate}")
    if cfg.batch_size < 1:
        raise ConfigError(f"batch_size must be >= 1, got {cfg.batch_size}")


def make_generator(cfg: GeneratorConfig):
    validate_generator_config(cfg)
    common = dict(conditioning_mode=cfg.conditioning_mode, epochs=cfg.epochs,
                  learning_rate=cfg.learning_rate, batch_size=cfg.batch_size,
                  seed=cfg.seed)
    if cfg.family == "cvae":
        return VAEGenerator(decoder_layers=cfg.decoder_layers, hidden_dim=cfg.hidden_dim,
                            latent_dim=cfg.latent_dim, beta=cfg.beta, **common)
    if cfg.family == "diffusion":
        return DiffusionGenerator(decoder_layers=cfg.decoder_layers,
                                  hidden_dim=cfg.hidden_dim,
                                  sampling_steps=cfg.sampling_steps, **common)
    return GANGenerator(latent_dim=cfg.latent_dim,
                        embedding_layers=cfg.embedding_layers,
                        generator_advantage=cfg.generator_advantage, **common)


@dataclass
class GeneratorArtifact:
    config: GeneratorConfig
    estimator: object
    training_log: list
    metadata: dict = field(default_factory=dict)


def train_generator(cfg: GeneratorConfig, train: Dataset) -> GeneratorArtifact:
    """Fit one generator family on a dataset.

    In ``mt_sequence`` mode every sample must carry paired kinematics; the
    angles are the generated modality and the strain sequence conditions it.
    """
    validate_generator_config(cfg)
    if len(train) == 0:
        raise DataError("cannot train a generator on an empty dataset")
    X = train.values_array()
    if cfg.conditioning_mode == "movement_label":
        y = train.labels()
    else:
        if train.kinematics is None or any(k is None for k in train.kinematics):
            raise DataError("mt_sequence mode requires paired kinematics for every sample")
        y = train.kinematics_array()
    est = make_generator(cfg)
    est.fit(X, y)
    meta = {
        "dataset_fingerprint": dataset_fingerprint(train),
        "seed": cfg.seed,
        "T": int(X.shape[-1]),
        "n_train": int(X.shape[0]),
    }
    return GeneratorArtifact(cfg, est, list(est.training_log_), meta)


def sample_mt(artifact: GeneratorArtifact, label: MovementLabel, n: int,
              seed: int = 0) -> list:
    """Draw n label-conditioned synthetic strain samples (clipped to [-1, 1])."""
    if artifact.config.conditioning_mode != "movement_label":
        raise ModeError("sample_mt requires a movement_label artifact")
    if n < 0:
        raise ConfigError(f"sample count must be >= 0, got {n}")
    label = MovementLabel(label)
    values = artifact.estimator.sample(int(label), n, seed=seed)
    subject = f"syn-{artifact.config.family}-{seed}"
    return [MTSample(subject, i + 1, label, values[i], provenance="synthetic")
            for i in range(n)]


def translate_kinematics(artifact: GeneratorArtifact, mt: MTSample,
                         seed: int = 0) -> KinematicsSample:
    """Predict the joint-angle trajectories for one strain sample."""
    if artifact.config.conditioning_mode != "mt_sequence":
        raise ModeError("translate_kinematics requires an mt_sequence artifact")
    if mt.n_steps != artifact.estimator.T_:
        raise ShapeError(f"sample length {mt.n_steps} != training length "
                         f"{artifact.estimator.T_}")
    values = artifact.estimator.transform(mt.values[None], seed=seed)[0]
    return KinematicsSample(values, provenance="generated")


def translate_batch(artifact: GeneratorArtifact, samples, seed: int = 0) -> list:
    """Translate many samples with one fixed noise seed (one draw per sample)."""
    if artifact.config.conditioning_mode != "mt_sequence":
        raise ModeError("translate_batch requires an mt_sequence artifact")
    if not samples:
        return []
    X = np.stack([s.values for s in samples])
    if X.shape[-1] != artifact.estimator.T_:
        raise ShapeError(f"sample length {X.shape[-1]} != training length "
                         f"{artifact.estimator.T_}")
    values = artifact.estimator.transform(X, seed=seed)
    return [KinematicsSample(values[i], provenance="generated") for i in range(len(samples))]


def detect_mode_collapse(samples, reference) -> float:
    """Diversity ratio: mean pairwise distance among generated samples over
    mean distance from generated to real samples.  Near zero means the
    generator emits (nearly) identical outputs; around one matches real
    within-set diversity."""
    gen = np.stack([np.asarray(s, dtype=np.float64).ravel() for s in samples])
    if gen.shape[0] < 2:
        raise ArityError("mode-collapse score needs at least 2 samples")
    ref = np.stack([np.asarray(r, dtype=np.float64).ravel() for r in reference])

    diffs = gen[:, None, :] - gen[None, :, :]
    pair = np.sqrt((diffs ** 2).sum(axis=2))
    iu = np.triu_indices(gen.shape[0], k=1)
    within = float(pair[iu].mean())

    cross = np.sqrt(((gen[:, None, :] - ref[None, :, :]) ** 2).sum(axis=2))
    to_real = float(cross.mean())
    if to_real == 0.0:
        return 0.0 if within == 0.0 else float("inf")
    return within / to_real


# ------------------------------------------------------------------ #
#  Persistence                                                        #
# ------------------------------------------------------------------ #

def save_generator(artifact: GeneratorArtifact, path) -> None:
    module = artifact.estimator.net_
    arrays = {k: v.detach().cpu().numpy() for k, v in module.state_dict().items()}
    write_artifact(path, "generator", asdict(artifact.config),
                   artifact.training_log, artifact.metadata, arrays)


def load_generator(path) -> GeneratorArtifact:
    header, arrays = read_artifact(path)
    if header["kind"] != "generator":
        raise DataError(f"{path}: artifact holds a {header['kind']}, not a generator")
    cfg = GeneratorConfig(**header["config"])
    est = make_generator(cfg)
    est._build(int(header["metadata"]["T"]))
    module = est.net_
    state = {k: torch.from_numpy(np.array(v)) for k, v in arrays.items()}
    module.load_state_dict(state)
    est.training_log_ = list(header["training_log"])
    return GeneratorArtifact(cfg, est, list(header["training_log"]), header["metadata"])
