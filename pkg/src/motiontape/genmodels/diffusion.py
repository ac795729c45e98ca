"""Denoising diffusion generator with a cosine noise schedule and
noise-prediction objective, conditioned on movement labels or (via the
attention conditioning path) on strain sequences."""

from __future__ import annotations

import numpy as np
import torch
from sklearn.base import BaseEstimator
from torch import nn

from .._torchutils import SequenceConditioner, seeded_generator, minibatch_indices, sinusoidal_positions, to_tensor
from ..core import N_CHANNELS
from ..errors import ConfigError, DataError, ModeError, TrainingFailure


def cosine_alpha_bar(steps: int, s: float = 0.008) -> torch.Tensor:
    """Cumulative signal fractions alpha_bar_t for t = 0..steps (alpha_bar_0 = 1)."""
    t = torch.linspace(0, 1, steps + 1, dtype=torch.float64)
    f = torch.cos((t + s) / (1 + s) * torch.pi / 2) ** 2
    ab = (f / f[0]).clamp(min=1e-8)
    # keep per-step signal loss bounded, like the usual beta clamp
    for i in range(1, steps + 1):
        ab[i] = torch.maximum(ab[i], ab[i - 1] * 1e-3)
    return ab.to(torch.float32)


class _Denoiser(nn.Module):
    """MLP noise predictor over flattened samples, with sinusoidal timestep
    features and a summed conditioning embedding."""

    def __init__(self, data_dim: int, hidden_dim: int, decoder_layers: int,
                 steps: int, conditioning_mode: str, n_labels: int, T: int):
        super().__init__()
        self.inp = nn.Linear(data_dim, hidden_dim)
        self.register_buffer("t_table", sinusoidal_positions(steps + 1, hidden_dim))
        self.t_proj = nn.Sequential(nn.Linear(hidden_dim, hidden_dim), nn.SiLU(),
                                    nn.Linear(hidden_dim, hidden_dim))
        if conditioning_mode == "movement_label":
            self.label_emb = nn.Embedding(n_labels, hidden_dim)
            self.conditioner = None
        else:
            self.label_emb = None
            self.conditioner = SequenceConditioner(N_CHANNELS, hidden_dim, hidden_dim, T)
        blocks = []
        for _ in range(decoder_layers):
            blocks += [nn.Linear(hidden_dim, hidden_dim), nn.SiLU()]
        self.blocks = nn.Sequential(*blocks)
        self.out = nn.Linear(hidden_dim, data_dim)

    def condition(self, cond_input: torch.Tensor) -> torch.Tensor:
        if self.label_emb is not None:
            return self.label_emb(cond_input)
        return self.conditioner(cond_input)

    def forward(self, x_flat: torch.Tensor, t: torch.Tensor, cond_vec: torch.Tensor) -> torch.Tensor:
        h = self.inp(x_flat) + self.t_proj(self.t_table[t]) + cond_vec
        return self.out(self.blocks(h))


class DiffusionGenerator(BaseEstimator):
    """Sklearn-style estimator for the diffusion family.

    fit(X, y): X is (n, 6, T) strain data; y is the label vector
    (movement_label mode) or the paired (n, 6, T) joint angles
    (mt_sequence mode, where the angles are the generated modality).
    """

    family = "diffusion"

    def __init__(self, conditioning_mode="movement_label", decoder_layers=12,
                 hidden_dim=64, sampling_steps=500, epochs=400,
                 learning_rate=1e-3, batch_size=32, seed=0, n_labels=6):
        self.conditioning_mode = conditioning_mode
        self.decoder_layers = decoder_layers
        self.hidden_dim = hidden_dim
        self.sampling_steps = sampling_steps
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.seed = seed
        self.n_labels = n_labels

    def _validate(self):
        for name in ("decoder_layers", "hidden_dim"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.sampling_steps < 1:
            raise ConfigError(f"sampling_steps must be >= 1, got {self.sampling_steps}")
        if self.conditioning_mode not in ("movement_label", "mt_sequence"):
            raise ConfigError(f"unknown conditioning_mode: {self.conditioning_mode!r}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")

    def _build(self, T: int) -> "_Denoiser":
        self.T_ = T
        self.data_dim_ = N_CHANNELS * T
        self.alpha_bar_ = cosine_alpha_bar(self.sampling_steps)
        self.net_ = _Denoiser(self.data_dim_, self.hidden_dim, self.decoder_layers,
                              self.sampling_steps, self.conditioning_mode,
                              self.n_labels, T)
        return self.net_

    def _prepare(self, X, y):
        X = to_tensor(X)
        if X.ndim != 3 or X.shape[1] != N_CHANNELS:
            raise DataError(f"X must be (n, {N_CHANNELS}, T), got {tuple(X.shape)}")
        if self.conditioning_mode == "movement_label":
            if y is None:
                raise DataError("movement_label mode needs integer labels y")
            cond = torch.as_tensor(np.asarray(y), dtype=torch.long)
            target = X.reshape(X.shape[0], -1)
        else:
            if y is None:
                raise DataError("mt_sequence mode needs paired kinematics y")
            y = to_tensor(y)
            if y.shape != X.shape:
                raise DataError(f"kinematics shape {tuple(y.shape)} != strain shape {tuple(X.shape)}")
            cond = X
            target = y.reshape(y.shape[0], -1)
        return X, target, cond

    def fit(self, X, y):
        self._validate()
        X, target, cond = self._prepare(X, y)
        torch.manual_seed(self.seed)
        net = self._build(X.shape[-1])
        opt = torch.optim.Adam(net.parameters(), lr=self.learning_rate)
        g = seeded_generator(self.seed * 7919 + 2)
        ab = self.alpha_bar_
        n = target.shape[0]
        # fixed evaluation draws make the per-epoch log comparable across
        # epochs (the running batch loss varies with the sampled timesteps)
        ge = seeded_generator(self.seed + 202)
        n_eval = min(n, 256)
        eval_idx = torch.randint(0, n, (n_eval,), generator=ge)
        eval_t = torch.randint(1, self.sampling_steps + 1, (n_eval,), generator=ge)
        eval_eps = torch.randn(n_eval, self.data_dim_, generator=ge)
        log = []
        for epoch in range(self.epochs):
            for idx in minibatch_indices(n, self.batch_size, g):
                x0 = target[idx]
                t = torch.randint(1, self.sampling_steps + 1, (len(idx),), generator=g)
                eps = torch.randn(x0.shape, generator=g)
                x_t = torch.sqrt(ab[t])[:, None] * x0 + torch.sqrt(1 - ab[t])[:, None] * eps
                pred = net(x_t, t, net.condition(cond[idx]))
                loss = torch.mean((pred - eps) ** 2)
                opt.zero_grad()
                loss.backward()
                opt.step()
            with torch.no_grad():
                x0 = target[eval_idx]
                x_t = torch.sqrt(ab[eval_t])[:, None] * x0 \
                    + torch.sqrt(1 - ab[eval_t])[:, None] * eval_eps
                pred = net(x_t, eval_t, net.condition(cond[eval_idx]))
                epoch_loss = float(torch.mean((pred - eval_eps) ** 2))
            if not np.isfinite(epoch_loss):
                raise TrainingFailure(f"diffusion loss diverged at epoch {epoch}", epoch=epoch)
            log.append(epoch_loss)
        self.training_log_ = log
        return self

    def _denoise_chain(self, x: torch.Tensor, cond_vec: torch.Tensor,
                       g: torch.Generator) -> torch.Tensor:
        """Ancestral sampling from t = sampling_steps down to 1; with a
        single step this is exactly one denoiser application."""
        ab = self.alpha_bar_
        for t in range(self.sampling_steps, 0, -1):
            tt = torch.full((x.shape[0],), t, dtype=torch.long)
            eps_hat = self.net_(x, tt, cond_vec)
            x0_hat = (x - torch.sqrt(1 - ab[t]) * eps_hat) / torch.sqrt(ab[t])
            x0_hat = x0_hat.clamp(-1.0, 1.0)
            if t == 1:
                x = x0_hat
                break
            alpha_t = ab[t] / ab[t - 1]
            beta_t = 1 - alpha_t
            mean = (torch.sqrt(ab[t - 1]) * beta_t * x0_hat
                    + torch.sqrt(alpha_t) * (1 - ab[t - 1]) * x) / (1 - ab[t])
            var = beta_t * (1 - ab[t - 1]) / (1 - ab[t])
            x = mean + torch.sqrt(var) * torch.randn(x.shape, generator=g)
        return x

    def sample(self, label: int, n: int, seed: int = 0) -> np.ndarray:
        if self.conditioning_mode != "movement_label":
            raise ModeError("sampling by label requires a movement_label artifact")
        if n == 0:
            return np.empty((0, N_CHANNELS, self.T_))
        g = seeded_generator(seed)
        with torch.no_grad():
            x = torch.randn(n, self.data_dim_, generator=g)
            cond = torch.full((n,), int(label), dtype=torch.long)
            x = self._denoise_chain(x, self.net_.condition(cond), g)
        out = x.reshape(n, N_CHANNELS, self.T_).numpy().astype(np.float64)
        return np.clip(out, -1.0, 1.0)

    def transform(self, X, seed: int = 0) -> np.ndarray:
        """Translate strain sequences into predicted joint angles."""
        if self.conditioning_mode != "mt_sequence":
            raise ModeError("translation requires an mt_sequence artifact")
        X = to_tensor(X)
        if X.ndim == 2:
            X = X[None]
        if X.shape[-1] != self.T_:
            raise DataError(f"expected T={self.T_}, got {X.shape[-1]}")
        g = seeded_generator(seed)
        with torch.no_grad():
            x = torch.randn(X.shape[0], self.data_dim_, generator=g)
            x = self._denoise_chain(x, self.net_.condition(X), g)
        out = x.reshape(X.shape[0], N_CHANNELS, self.T_).numpy().astype(np.float64)
        return np.clip(out, -1.0, 1.0)

    def reconstruction_error(self, X, y=None, n_eval: int = 64) -> float:
        """Denoising error on fixed seeded (t, eps) draws; comparable across
        training states of the same data."""
        X, target, cond = self._prepare(X, y)
        g = seeded_generator(12345)
        idx = torch.randint(0, target.shape[0], (n_eval,), generator=g)
        t = torch.randint(1, self.sampling_steps + 1, (n_eval,), generator=g)
        eps = torch.randn(n_eval, self.data_dim_, generator=g)
        ab = self.alpha_bar_
        with torch.no_grad():
            x0 = target[idx]
            x_t = torch.sqrt(ab[t])[:, None] * x0 + torch.sqrt(1 - ab[t])[:, None] * eps
            pred = self.net_(x_t, t, self.net_.condition(cond[idx]))
            return float(torch.mean((pred - eps) ** 2))
