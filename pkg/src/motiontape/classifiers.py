"""Movement classifiers over feature tensors: gradient-boosted trees on
per-channel summary statistics, an attention-encoder classifier, and a
convolutional-recurrent classifier, plus exhaustive grid search.

All three are sklearn-style estimators (fit/predict/predict_proba,
get_params) so they compose with the wider ecosystem; the spec-level
train/predict operations wrap them with channel-manifest bookkeeping.
"""

from __future__ import annotations

import itertools
import pickle
from dataclasses import asdict, dataclass, replace
from typing import Optional, Sequence

import numpy as np
import torch
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.ensemble import GradientBoostingClassifier
from torch import nn

from ._torchutils import (attention_heads, count_parameters, minibatch_indices,
                          seeded_generator, sinusoidal_positions, to_tensor)
from .artifacts import read_artifact, write_artifact
from .core import MovementLabel
from .errors import (ConfigError, DataError, DegenerateDataError, ShapeError,
                     TrainingFailure)
from .features import FeatureTensor

FAMILIES = ("gbdt", "attention", "conv_recurrent")
N_LABELS = len(MovementLabel)


@dataclass(frozen=True)
class ClassifierConfig:
    """Family-tagged hyperparameters; family-specific fields are consulted
    only for that family."""

    family: str
    # gbdt
    learning_rate: Optional[float] = None
    max_depth: Optional[int] = None
    n_rounds: Optional[int] = None
    # attention
    encoder_layers: Optional[int] = None
    latent_dim: Optional[int] = None
    # conv_recurrent
    hidden_dim: Optional[int] = None
    recurrent_layers: Optional[int] = None
    conv_kernel: Optional[int] = None
    conv_channels: Optional[int] = None
    pool_size: Optional[int] = None
    # shared training knobs (neural families)
    epochs: int = 30
    batch_size: int = 32
    seed: int = 0

    @classmethod
    def for_family(cls, family: str, **overrides) -> "ClassifierConfig":
        """Per-family defaults; the architecture numbers are the reported
        grid-search optima (boosting: lr 0.01 / depth 3; attention: 4 layers,
        width 12; recurrent: hidden 100, 2 layers)."""
        defaults = {
            "gbdt": dict(learning_rate=0.01, max_depth=3, n_rounds=300),
            "attention": dict(encoder_layers=4, latent_dim=12, epochs=45,
                              learning_rate=1e-3),
            "conv_recurrent": dict(hidden_dim=100, recurrent_layers=2, conv_kernel=5,
                                   conv_channels=32, pool_size=4, epochs=30,
                                   learning_rate=2e-3),
        }
        if family not in defaults:
            raise ConfigError(f"unknown classifier family: {family!r}")
        params = dict(defaults[family])
        params.update(overrides)
        return cls(family=family, **params)


def validate_classifier_config(cfg: ClassifierConfig) -> None:
    if cfg.family not in FAMILIES:
        raise ConfigError(f"unknown classifier family: {cfg.family!r}")
    required = {
        "gbdt": ("learning_rate", "max_depth", "n_rounds"),
        "attention": ("encoder_layers", "latent_dim"),
        "conv_recurrent": ("hidden_dim", "recurrent_layers", "conv_kernel", "conv_channels"),
    }[cfg.family]
    for name in required:
        value = getattr(cfg, name)
        if value is None:
            raise ConfigError(f"{cfg.family} config requires {name}")
        minimum = 0 if name == "max_depth" else 1
        if value < minimum:
            raise ConfigError(f"{name} must be >= {minimum}, got {value}")
    if cfg.epochs < 0:
        raise ConfigError(f"epochs must be >= 0, got {cfg.epochs}")
    if cfg.family == "gbdt" and cfg.learning_rate <= 0:
        raise ConfigError(f"learning_rate must be > 0, got {cfg.learning_rate}")


# ------------------------------------------------------------------ #
#  Gradient-boosted trees on summary statistics                       #
# ------------------------------------------------------------------ #

def channel_summary_stats(X: np.ndarray) -> np.ndarray:
    """Six scalars per channel (min, max, mean, std, argmax fraction,
    energy), flattening (n, C, T) inputs into fixed-width vectors for the
    tree model."""
    X = np.asarray(X, dtype=np.float64)
    T = X.shape[-1]
    feats = [X.min(axis=2), X.max(axis=2), X.mean(axis=2), X.std(axis=2),
             X.argmax(axis=2) / T, np.mean(X ** 2, axis=2)]
    return np.concatenate(feats, axis=1)


class GradientBoostedClassifier(BaseEstimator, ClassifierMixin):
    """Boosted trees over channel summary statistics.

    ``max_depth = 0`` degenerates to predicting the training prior, which
    gives the majority-label baseline by construction.
    """

    family = "gbdt"

    def __init__(self, learning_rate=0.01, max_depth=3, n_rounds=300, seed=0):
        self.learning_rate = learning_rate
        self.max_depth = max_depth
        self.n_rounds = n_rounds
        self.seed = seed

    def fit(self, X, y):
        y = np.asarray(y, dtype=np.int64)
        self.classes_ = np.unique(y)
        if self.classes_.size < 2 and self.max_depth != 0:
            raise DegenerateDataError("gbdt needs at least 2 classes")
        self.input_shape_ = tuple(np.asarray(X).shape[1:])
        feats = channel_summary_stats(X)
        if self.max_depth == 0:
            if self.classes_.size == 0:
                raise DataError("empty training set")
            counts = np.array([(y == c).sum() for c in self.classes_], dtype=np.float64)
            self.prior_ = counts / counts.sum()
            self.model_ = None
        else:
            self.prior_ = None
            self.model_ = GradientBoostingClassifier(
                n_estimators=self.n_rounds, learning_rate=self.learning_rate,
                max_depth=self.max_depth, random_state=self.seed)
            self.model_.fit(feats, y)
        self.training_log_ = []
        return self

    def predict_proba(self, X):
        feats = channel_summary_stats(X)
        if self.model_ is None:
            return np.tile(self.prior_, (feats.shape[0], 1))
        return self.model_.predict_proba(feats)

    def predict(self, X):
        return self.classes_[np.argmax(self.predict_proba(X), axis=1)]


# ------------------------------------------------------------------ #
#  Torch classifiers                                                  #
# ------------------------------------------------------------------ #

class _AttentionNet(nn.Module):
    def __init__(self, in_channels, latent_dim, encoder_layers, n_classes, T):
        super().__init__()
        self.proj = nn.Linear(in_channels, latent_dim)
        layer = nn.TransformerEncoderLayer(
            d_model=latent_dim, nhead=attention_heads(latent_dim),
            dim_feedforward=4 * latent_dim, dropout=0.0, batch_first=True)
        self.encoder = nn.TransformerEncoder(layer, num_layers=encoder_layers)
        self.head = nn.Linear(latent_dim, n_classes)
        self.register_buffer("positions", sinusoidal_positions(T, latent_dim))

    def forward(self, x):  # (B, C, T)
        h = self.proj(x.transpose(1, 2)) + self.positions[None]
        h = self.encoder(h)
        return self.head(h.mean(dim=1))


class _ConvRecurrentNet(nn.Module):
    def __init__(self, in_channels, conv_channels, conv_kernel, pool_size,
                 hidden_dim, recurrent_layers, n_classes):
        super().__init__()
        self.conv = nn.Conv1d(in_channels, conv_channels, conv_kernel,
                              padding=conv_kernel // 2)
        self.pool = nn.MaxPool1d(pool_size) if pool_size > 1 else nn.Identity()
        self.lstm = nn.LSTM(conv_channels, hidden_dim, num_layers=recurrent_layers,
                            batch_first=True)
        self.head = nn.Linear(hidden_dim, n_classes)

    def forward(self, x):  # (B, C, T)
        h = self.pool(torch.relu(self.conv(x))).transpose(1, 2)
        out, _ = self.lstm(h)
        return self.head(out[:, -1])


class _TorchClassifierBase(BaseEstimator, ClassifierMixin):
    """Shared seeded training loop: cross-entropy, Adam, per-epoch loss log,
    divergence detection."""

    def _build_net(self, in_channels, T, n_classes) -> nn.Module:
        raise NotImplementedError

    def _check_input(self, X) -> torch.Tensor:
        X = to_tensor(X)
        if X.ndim == 2:
            X = X[None]
        if X.ndim != 3:
            raise ShapeError(f"expected (n, C, T) input, got shape {tuple(X.shape)}")
        if hasattr(self, "input_shape_") and tuple(X.shape[1:]) != self.input_shape_:
            raise ShapeError(f"input shape {tuple(X.shape[1:])} does not match "
                             f"fitted shape {self.input_shape_}")
        return X

    def fit(self, X, y):
        X = to_tensor(X)
        if X.ndim != 3:
            raise ShapeError(f"expected (n, C, T) training input, got {tuple(X.shape)}")
        y = np.asarray(y, dtype=np.int64)
        self.classes_ = np.unique(y)
        if self.classes_.size < 2:
            raise DegenerateDataError("need at least 2 classes to train a classifier")
        index = {c: i for i, c in enumerate(self.classes_)}
        targets = torch.as_tensor(np.array([index[v] for v in y]), dtype=torch.long)

        torch.manual_seed(self.seed)
        self.input_shape_ = tuple(X.shape[1:])
        self.net_ = self._build_net(X.shape[1], X.shape[2], self.classes_.size)
        opt = torch.optim.Adam(self.net_.parameters(), lr=self.learning_rate)
        lossf = nn.CrossEntropyLoss()
        g = seeded_generator(self.seed * 7919 + 5)

        log = []
        n = X.shape[0]
        for epoch in range(self.epochs):
            total, seen = 0.0, 0
            for idx in minibatch_indices(n, self.batch_size, g):
                loss = lossf(self.net_(X[idx]), targets[idx])
                opt.zero_grad()
                loss.backward()
                opt.step()
                total += float(loss.detach()) * len(idx)
                seen += len(idx)
            epoch_loss = total / seen
            if not np.isfinite(epoch_loss):
                raise TrainingFailure(f"{self.family} loss diverged at epoch {epoch}",
                                      epoch=epoch)
            log.append(epoch_loss)
        self.training_log_ = log
        return self

    def predict_logits(self, X) -> np.ndarray:
        X = self._check_input(X)
        with torch.no_grad():
            return self.net_(X).numpy()

    def predict_proba(self, X) -> np.ndarray:
        logits = torch.as_tensor(self.predict_logits(X))
        return torch.softmax(logits, dim=1).numpy()

    def predict(self, X) -> np.ndarray:
        return self.classes_[np.argmax(self.predict_logits(X), axis=1)]


class AttentionClassifier(_TorchClassifierBase):
    """Attention-encoder classifier with sinusoidal positions and mean pooling."""

    family = "attention"

    def __init__(self, encoder_layers=4, latent_dim=12, epochs=45,
                 learning_rate=1e-3, batch_size=32, seed=0):
        self.encoder_layers = encoder_layers
        self.latent_dim = latent_dim
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.seed = seed

    def _build_net(self, in_channels, T, n_classes):
        return _AttentionNet(in_channels, self.latent_dim, self.encoder_layers,
                             n_classes, T)


class ConvRecurrentClassifier(_TorchClassifierBase):
    """1-D convolution (with temporal max-pooling) feeding an LSTM stack and
    a final-state linear head."""

    family = "conv_recurrent"

    def __init__(self, hidden_dim=100, recurrent_layers=2, conv_kernel=5,
                 conv_channels=32, pool_size=4, epochs=30, learning_rate=2e-3,
                 batch_size=32, seed=0):
        self.hidden_dim = hidden_dim
        self.recurrent_layers = recurrent_layers
        self.conv_kernel = conv_kernel
        self.conv_channels = conv_channels
        self.pool_size = pool_size
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.seed = seed

    def _build_net(self, in_channels, T, n_classes):
        return _ConvRecurrentNet(in_channels, self.conv_channels, self.conv_kernel,
                                 self.pool_size, self.hidden_dim,
                                 self.recurrent_layers, n_classes)


def make_classifier(cfg: ClassifierConfig):
    validate_classifier_config(cfg)
    if cfg.family == "gbdt":
        return GradientBoostedClassifier(learning_rate=cfg.learning_rate,
                                         max_depth=cfg.max_depth,
                                         n_rounds=cfg.n_rounds, seed=cfg.seed)
    if cfg.family == "attention":
        return AttentionClassifier(encoder_layers=cfg.encoder_layers,
                                   latent_dim=cfg.latent_dim, epochs=cfg.epochs,
                                   learning_rate=cfg.learning_rate or 1e-3,
                                   batch_size=cfg.batch_size, seed=cfg.seed)
    return ConvRecurrentClassifier(hidden_dim=cfg.hidden_dim,
                                   recurrent_layers=cfg.recurrent_layers,
                                   conv_kernel=cfg.conv_kernel,
                                   conv_channels=cfg.conv_channels,
                                   pool_size=cfg.pool_size or 1,
                                   epochs=cfg.epochs,
                                   learning_rate=cfg.learning_rate or 2e-3,
                                   batch_size=cfg.batch_size, seed=cfg.seed)


# ------------------------------------------------------------------ #
#  Spec-level operations over feature tensors                         #
# ------------------------------------------------------------------ #

@dataclass
class TrainedClassifier:
    config: ClassifierConfig
    estimator: object
    manifest: tuple          # expected channel roles
    T: int
    training_log: list


def _stack_features(train: Sequence[FeatureTensor]):
    if not train:
        raise DataError("empty training set")
    manifest = train[0].manifest
    T = train[0].n_steps
    for ft in train:
        if ft.manifest != manifest or ft.n_steps != T:
            raise ShapeError(
                f"inconsistent feature tensors: {ft.manifest}/{ft.n_steps} vs "
                f"{manifest}/{T}")
    X = np.stack([ft.values for ft in train]).astype(np.float32)
    y = np.array([int(ft.label) for ft in train], dtype=np.int64)
    return X, y, manifest, T


def train_classifier(cfg: ClassifierConfig, train: Sequence[FeatureTensor]) -> TrainedClassifier:
    validate_classifier_config(cfg)
    X, y, manifest, T = _stack_features(train)
    if np.unique(y).size < 2:
        raise DegenerateDataError("training set contains a single label")
    est = make_classifier(cfg)
    est.fit(X, y)
    return TrainedClassifier(cfg, est, manifest, T, list(getattr(est, "training_log_", [])))


def predict(model: TrainedClassifier, x: FeatureTensor):
    """Classify one feature tensor; returns (label, scores over all six
    movements, summing to one)."""
    if x.manifest != model.manifest:
        raise ShapeError(f"channel manifest {x.manifest} does not match the "
                         f"model's {model.manifest}")
    if x.n_steps != model.T:
        raise ShapeError(f"length {x.n_steps} does not match the model's {model.T}")
    proba = model.estimator.predict_proba(x.values[None].astype(np.float32))[0]
    scores = np.zeros(N_LABELS)
    for p, c in zip(proba, model.estimator.classes_):
        scores[int(c)] = p
    label = MovementLabel(int(np.argmax(scores)))
    return label, scores


def predict_batch(model: TrainedClassifier, tensors: Sequence[FeatureTensor]) -> np.ndarray:
    if not tensors:
        return np.empty(0, dtype=np.int64)
    for x in tensors:
        if x.manifest != model.manifest or x.n_steps != model.T:
            raise ShapeError("feature tensor does not match the model manifest")
    X = np.stack([x.values for x in tensors]).astype(np.float32)
    return model.estimator.predict(X)


# ------------------------------------------------------------------ #
#  Grid search                                                        #
# ------------------------------------------------------------------ #

@dataclass(frozen=True)
class GridCell:
    config: ClassifierConfig
    fold_accuracies: tuple
    mean: float
    std: float


def _config_complexity(cfg: ClassifierConfig, in_channels: int, T: int) -> float:
    """Trained-parameter count, used for tie-breaking toward smaller models."""
    if cfg.family == "gbdt":
        # worst-case node count per round per class
        return cfg.n_rounds * (2 ** (cfg.max_depth + 1) - 1) * N_LABELS
    est = make_classifier(cfg)
    net = est._build_net(in_channels, T, N_LABELS)
    return count_parameters(net)


def grid_search(family: str, grid: dict, data: Sequence[FeatureTensor],
                folds: int = 3, seed: int = 0, base_config: ClassifierConfig | None = None):
    """Exhaustively evaluate a config lattice with shared fold assignments.

    Returns (best config, list of GridCell).  Ties break toward the model
    with fewer parameters, then lexicographic config order.
    """
    if not grid or any(len(v) == 0 for v in grid.values()):
        raise ConfigError("grid search requires a nonempty config lattice")
    X, y, manifest, T = _stack_features(data)
    base = base_config or ClassifierConfig.for_family(family)

    keys = sorted(grid)
    combos = [dict(zip(keys, values)) for values in itertools.product(*(grid[k] for k in keys))]

    # one shared, label-stratified fold assignment for every cell
    rng = np.random.default_rng(seed)
    fold_ids = np.empty(len(y), dtype=np.int64)
    for label in np.unique(y):
        idx = np.flatnonzero(y == label)
        rng.shuffle(idx)
        fold_ids[idx] = np.arange(idx.size) % folds

    cells = []
    for combo in combos:
        cfg = replace(base, **combo)
        validate_classifier_config(cfg)
        accs = []
        for f in range(folds):
            test = fold_ids == f
            est = make_classifier(cfg)
            est.fit(X[~test], y[~test])
            accs.append(float(np.mean(est.predict(X[test]) == y[test])))
        accs = tuple(accs)
        cells.append(GridCell(cfg, accs, float(np.mean(accs)),
                              float(np.std(accs, ddof=1)) if folds > 1 else 0.0))

    def sort_key(cell: GridCell):
        ordered = tuple(sorted((k, v) for k, v in asdict(cell.config).items()
                               if v is not None))
        return (-cell.mean, _config_complexity(cell.config, X.shape[1], T), ordered)

    best = min(cells, key=sort_key)
    return best.config, cells


# ------------------------------------------------------------------ #
#  Persistence                                                        #
# ------------------------------------------------------------------ #

def save_classifier(model: TrainedClassifier, path) -> None:
    est = model.estimator
    meta = {"manifest": list(model.manifest), "T": model.T,
            "classes": [int(c) for c in est.classes_]}
    if model.config.family == "gbdt":
        blob = pickle.dumps((est.model_, est.prior_))
        arrays = {"gbdt_pickle": np.frombuffer(blob, dtype=np.uint8)}
        meta["input_shape"] = list(est.input_shape_)
    else:
        arrays = {k: v.detach().cpu().numpy() for k, v in est.net_.state_dict().items()}
        meta["input_shape"] = list(est.input_shape_)
    write_artifact(path, "classifier", asdict(model.config), model.training_log,
                   meta, arrays)


def load_classifier(path) -> TrainedClassifier:
    header, arrays = read_artifact(path)
    if header["kind"] != "classifier":
        raise DataError(f"{path}: artifact holds a {header['kind']}, not a classifier")
    cfg = ClassifierConfig(**header["config"])
    meta = header["metadata"]
    est = make_classifier(cfg)
    est.classes_ = np.array(meta["classes"], dtype=np.int64)
    est.input_shape_ = tuple(meta["input_shape"])
    est.training_log_ = list(header["training_log"])
    if cfg.family == "gbdt":
        est.model_, est.prior_ = pickle.loads(arrays["gbdt_pickle"].tobytes())
    else:
        torch.manual_seed(cfg.seed)
        est.net_ = est._build_net(est.input_shape_[0], est.input_shape_[1],
                                  est.classes_.size)
        est.net_.load_state_dict({k: torch.from_numpy(np.array(v))
                                  for k, v in arrays.items()})
    return TrainedClassifier(cfg, est, tuple(meta["manifest"]), int(meta["T"]),
                             list(header["training_log"]))
