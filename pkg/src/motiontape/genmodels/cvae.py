"""Conditional variational autoencoder over fixed-length sample matrices.

Two conditioning modes share one network family:

* ``movement_label`` -- reconstruct strain samples; a learned label
  embedding is added to the encoder summary and to the decoder latent.
  Sampling decodes Gaussian latents plus the label embedding.
* ``mt_sequence`` -- reconstruct joint-angle samples; the conditioning
  embedding comes from an attention encoder over the paired strain
  sequence and is summed into the latent before decoding.  Translation
  replaces the learned latent with fresh Gaussian noise.
"""

from __future__ import annotations

import numpy as np
import torch
from sklearn.base import BaseEstimator
from torch import nn

from .._torchutils import SequenceConditioner, mlp, seeded_generator, minibatch_indices, to_tensor
from ..core import N_CHANNELS
from ..errors import ConfigError, DataError, ModeError, TrainingFailure


class _CVAENet(nn.Module):
    def __init__(self, data_dim: int, hidden_dim: int, latent_dim: int,
                 decoder_layers: int, conditioning_mode: str, n_labels: int, T: int):
        super().__init__()
        self.conditioning_mode = conditioning_mode
        self.enc_in = nn.Linear(data_dim, hidden_dim)
        self.enc_hidden = nn.Linear(hidden_dim, hidden_dim)
        self.enc_mu = nn.Linear(hidden_dim, latent_dim)
        self.enc_logvar = nn.Linear(hidden_dim, latent_dim)
        sizes = [latent_dim] + [hidden_dim] * max(decoder_layers - 1, 0) + [data_dim]
        self.decoder = mlp(sizes)
        if conditioning_mode == "movement_label":
            self.label_enc = nn.Embedding(n_labels, hidden_dim)
            self.label_dec = nn.Embedding(n_labels, latent_dim)
            self.conditioner = None
        else:
            self.label_enc = None
            self.label_dec = None
            self.conditioner = SequenceConditioner(N_CHANNELS, hidden_dim, latent_dim, T)

    def condition(self, cond_input: torch.Tensor) -> torch.Tensor:
        """Latent-width conditioning vector from labels or strain sequences."""
        if self.conditioning_mode == "movement_label":
            return self.label_dec(cond_input)
        return self.conditioner(cond_input)

    def encode(self, target_flat: torch.Tensor, cond_input: torch.Tensor):
        h = torch.relu(self.enc_in(target_flat))
        if self.label_enc is not None:
            h = h + self.label_enc(cond_input)
        h = torch.relu(self.enc_hidden(h))
        return self.enc_mu(h), self.enc_logvar(h)

    def decode(self, z: torch.Tensor, cond_vec: torch.Tensor) -> torch.Tensor:
        return self.decoder(z + cond_vec)


def elbo_loss(net: _CVAENet, target_flat: torch.Tensor, cond_input: torch.Tensor,
              noise: torch.Tensor, beta: float = 1.0) -> torch.Tensor:
    """Mean-squared reconstruction plus (dimension-normalized) KL, as a
    deterministic function of the parameters given an explicit noise draw."""
    mu, logvar = net.encode(target_flat, cond_input)
    z = mu + torch.exp(0.5 * logvar) * noise
    recon = net.decode(z, net.condition(cond_input))
    recon_err = torch.mean((recon - target_flat) ** 2)
    kl = -0.5 * torch.sum(1 + logvar - mu ** 2 - torch.exp(logvar), dim=1).mean()
    return recon_err + beta * kl / target_flat.shape[1]


class VAEGenerator(BaseEstimator):
    """Sklearn-style estimator wrapping the conditional VAE.

    fit(X, y): X is (n, 6, T) strain data.  In ``movement_label`` mode y is
    the integer label vector; in ``mt_sequence`` mode y is the paired
    (n, 6, T) joint-angle data being modeled.
    """

    family = "cvae"

    def __init__(self, conditioning_mode="movement_label", decoder_layers=4,
                 hidden_dim=12, latent_dim=12, epochs=400, learning_rate=1e-3,
                 batch_size=32, beta=1.0, seed=0, n_labels=6):
        self.conditioning_mode = conditioning_mode
        self.decoder_layers = decoder_layers
        self.hidden_dim = hidden_dim
        self.latent_dim = latent_dim
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.beta = beta
        self.seed = seed
        self.n_labels = n_labels

    def _validate(self):
        for name in ("decoder_layers", "hidden_dim", "latent_dim"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.conditioning_mode not in ("movement_label", "mt_sequence"):
            raise ConfigError(f"unknown conditioning_mode: {self.conditioning_mode!r}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")

    def _build(self, T: int) -> "_CVAENet":
        self.T_ = T
        self.data_dim_ = N_CHANNELS * T
        self.net_ = _CVAENet(self.data_dim_, self.hidden_dim, self.latent_dim,
                             self.decoder_layers, self.conditioning_mode,
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
        g = seeded_generator(self.seed * 7919 + 1)
        n = target.shape[0]
        # the per-epoch log holds a fixed-noise evaluation of the objective,
        # so consecutive entries are comparable across epochs and runs
        eval_noise = torch.randn(n, self.latent_dim, generator=seeded_generator(self.seed + 101))
        log = []
        for epoch in range(self.epochs):
            for idx in minibatch_indices(n, self.batch_size, g):
                noise = torch.randn(len(idx), self.latent_dim, generator=g)
                loss = elbo_loss(net, target[idx], cond[idx], noise, self.beta)
                opt.zero_grad()
                loss.backward()
                opt.step()
            with torch.no_grad():
                epoch_loss = float(elbo_loss(net, target, cond, eval_noise, self.beta))
            if not np.isfinite(epoch_loss):
                raise TrainingFailure(f"cvae loss diverged at epoch {epoch}", epoch=epoch)
            log.append(epoch_loss)
        self.training_log_ = log
        return self

    def sample(self, label: int, n: int, seed: int = 0) -> np.ndarray:
        if self.conditioning_mode != "movement_label":
            raise ModeError("sampling by label requires a movement_label artifact")
        if n == 0:
            return np.empty((0, N_CHANNELS, self.T_))
        g = seeded_generator(seed)
        with torch.no_grad():
            z = torch.randn(n, self.latent_dim, generator=g)
            cond = torch.full((n,), int(label), dtype=torch.long)
            out = self.net_.decode(z, self.net_.condition(cond))
        out = out.reshape(n, N_CHANNELS, self.T_).numpy().astype(np.float64)
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
            z = torch.randn(X.shape[0], self.latent_dim, generator=g)
            out = self.net_.decode(z, self.net_.condition(X))
        out = out.reshape(X.shape[0], N_CHANNELS, self.T_).numpy().astype(np.float64)
        return np.clip(out, -1.0, 1.0)

    def reconstruction_error(self, X, y=None) -> float:
        """Deterministic reconstruction MSE using the posterior mean latent."""
        X, target, cond = self._prepare(X, y)
        with torch.no_grad():
            mu, _ = self.net_.encode(target, cond)
            recon = self.net_.decode(mu, self.net_.condition(cond))
            return float(torch.mean((recon - target) ** 2))
