"""Adversarial sequence generator following the embedder/recovery +
supervisor + joint-adversarial recipe, with conditioning summed into the
latent path.

Training runs three phases (autoencoding, supervised next-step, joint
adversarial), with the generator taking ``generator_advantage`` updates
per discriminator update in the joint phase.  The per-epoch training log
records the autoencoder reconstruction error so the whole run shares one
comparable loss series.
"""

from __future__ import annotations

import numpy as np
import torch
from sklearn.base import BaseEstimator
from torch import nn

from .._torchutils import SequenceConditioner, seeded_generator, minibatch_indices, to_tensor
from ..core import N_CHANNELS
from ..errors import ConfigError, DataError, ModeError, TrainingFailure

_BCE = nn.BCEWithLogitsLoss()


class _SeqNet(nn.Module):
    """GRU stack with a per-step linear head."""

    def __init__(self, in_dim, hidden, out_dim, layers, sigmoid_out):
        super().__init__()
        self.rnn = nn.GRU(in_dim, hidden, num_layers=max(layers, 1), batch_first=True)
        self.head = nn.Linear(hidden, out_dim)
        self.sigmoid_out = sigmoid_out

    def forward(self, x, bias=None):
        h, _ = self.rnn(x)
        out = self.head(h)
        if bias is not None:
            out = out + bias[:, None, :]
        return torch.sigmoid(out) if self.sigmoid_out else out


class _GANNets(nn.Module):
    def __init__(self, data_dim, hidden, layers, conditioning_mode, n_labels, T):
        super().__init__()
        self.embedder = _SeqNet(data_dim, hidden, hidden, layers, sigmoid_out=True)
        self.recovery = _SeqNet(hidden, hidden, data_dim, layers, sigmoid_out=False)
        self.generator = _SeqNet(data_dim, hidden, hidden, layers, sigmoid_out=True)
        self.supervisor = _SeqNet(hidden, hidden, hidden, max(layers - 1, 1), sigmoid_out=True)
        self.discriminator = _SeqNet(hidden, hidden, 1, layers, sigmoid_out=False)
        if conditioning_mode == "movement_label":
            self.label_emb = nn.Embedding(n_labels, hidden)
            self.conditioner = None
        else:
            self.label_emb = None
            self.conditioner = SequenceConditioner(N_CHANNELS, hidden, hidden, T)

    def condition(self, cond_input):
        if self.label_emb is not None:
            return self.label_emb(cond_input)
        return self.conditioner(cond_input)


class GANGenerator(BaseEstimator):
    """Sklearn-style estimator for the adversarial family.

    fit(X, y): X is (n, 6, T) strain data; in ``movement_label`` mode y is
    the label vector and the model generates strain samples, in
    ``mt_sequence`` mode y is the paired joint-angle data being generated
    (with an additional supervised pair loss).
    """

    family = "gan"

    def __init__(self, conditioning_mode="movement_label", latent_dim=12,
                 embedding_layers=3, generator_advantage=2, epochs=120,
                 learning_rate=1e-3, batch_size=32, seed=0, n_labels=6,
                 pair_loss_weight=10.0):
        self.conditioning_mode = conditioning_mode
        self.latent_dim = latent_dim
        self.embedding_layers = embedding_layers
        self.generator_advantage = generator_advantage
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.seed = seed
        self.n_labels = n_labels
        self.pair_loss_weight = pair_loss_weight

    def _validate(self):
        for name in ("latent_dim", "embedding_layers", "generator_advantage"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.conditioning_mode not in ("movement_label", "mt_sequence"):
            raise ConfigError(f"unknown conditioning_mode: {self.conditioning_mode!r}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")

    def _build(self, T: int) -> "_GANNets":
        self.T_ = T
        self.nets_ = _GANNets(N_CHANNELS, self.latent_dim, self.embedding_layers,
                              self.conditioning_mode, self.n_labels, T)
        self.net_ = self.nets_  # uniform handle for artifact persistence
        return self.nets_

    def _prepare(self, X, y):
        X = to_tensor(X)
        if X.ndim != 3 or X.shape[1] != N_CHANNELS:
            raise DataError(f"X must be (n, {N_CHANNELS}, T), got {tuple(X.shape)}")
        if self.conditioning_mode == "movement_label":
            if y is None:
                raise DataError("movement_label mode needs integer labels y")
            cond = torch.as_tensor(np.asarray(y), dtype=torch.long)
            target = X.transpose(1, 2)  # (n, T, C): the modeled modality
        else:
            if y is None:
                raise DataError("mt_sequence mode needs paired kinematics y")
            y = to_tensor(y)
            if y.shape != X.shape:
                raise DataError(f"kinematics shape {tuple(y.shape)} != strain shape {tuple(X.shape)}")
            cond = X
            target = y.transpose(1, 2)
        return X, target, cond

    def _recon_mse(self, target: torch.Tensor) -> float:
        with torch.no_grad():
            h = self.nets_.embedder(target)
            return float(torch.mean((self.nets_.recovery(h) - target) ** 2))

    def fit(self, X, y):
        self._validate()
        X, target, cond = self._prepare(X, y)
        torch.manual_seed(self.seed)
        nets = self._build(X.shape[-1])
        g = seeded_generator(self.seed * 7919 + 3)
        n, T = target.shape[0], target.shape[1]

        er_vars = list(nets.embedder.parameters()) + list(nets.recovery.parameters())
        gs_vars = list(nets.generator.parameters()) + list(nets.supervisor.parameters())
        if nets.label_emb is not None:
            gs_vars += list(nets.label_emb.parameters())
        else:
            gs_vars += list(nets.conditioner.parameters())
        opt_er = torch.optim.Adam(er_vars, lr=self.learning_rate)
        opt_gs = torch.optim.Adam(gs_vars, lr=self.learning_rate)
        opt_d = torch.optim.Adam(nets.discriminator.parameters(), lr=self.learning_rate)

        log = []

        def record(epoch):
            loss = self._recon_mse(target)
            if not np.isfinite(loss):
                raise TrainingFailure(f"gan reconstruction diverged at epoch {epoch}",
                                      epoch=epoch)
            log.append(loss)

        def supervised_loss(h):
            return torch.mean((nets.supervisor(h)[:, :-1] - h[:, 1:]) ** 2)

        epoch = 0
        # Phase 1: autoencoding
        for _ in range(self.epochs):
            for idx in minibatch_indices(n, self.batch_size, g):
                x = target[idx]
                h = nets.embedder(x)
                e_loss = 10 * torch.sqrt(torch.mean((nets.recovery(h) - x) ** 2))
                opt_er.zero_grad()
                e_loss.backward()
                opt_er.step()
            record(epoch)
            epoch += 1

        # Phase 2: supervised next-step prediction in latent space
        for _ in range(self.epochs):
            for idx in minibatch_indices(n, self.batch_size, g):
                h = nets.embedder(target[idx]).detach()
                s_loss = supervised_loss(h)
                opt_gs.zero_grad()
                s_loss.backward()
                opt_gs.step()
            record(epoch)
            epoch += 1

        # Phase 3: joint adversarial training
        for _ in range(self.epochs):
            for idx in minibatch_indices(n, self.batch_size, g):
                x = target[idx]
                c = nets.condition(cond[idx])
                b = len(idx)
                for _ in range(self.generator_advantage):
                    z = torch.randn(b, T, N_CHANNELS, generator=g)
                    e_hat = nets.generator(z, bias=c)
                    h_hat = nets.supervisor(e_hat)
                    x_hat = nets.recovery(h_hat)
                    h = nets.embedder(x)
                    y_fake = nets.discriminator(h_hat + c[:, None, :])
                    y_fake_e = nets.discriminator(e_hat + c[:, None, :])
                    g_loss_u = _BCE(y_fake, torch.ones_like(y_fake)) \
                        + _BCE(y_fake_e, torch.ones_like(y_fake_e))
                    g_loss_s = supervised_loss(h.detach())
                    v1 = torch.mean(torch.abs(x_hat.std(dim=0) - x.std(dim=0)))
                    v2 = torch.mean(torch.abs(x_hat.mean(dim=0) - x.mean(dim=0)))
                    g_loss = g_loss_u + 100 * torch.sqrt(g_loss_s) + 100 * (v1 + v2)
                    if self.conditioning_mode == "mt_sequence":
                        g_loss = g_loss + self.pair_loss_weight * torch.mean((x_hat - x) ** 2)
                    opt_gs.zero_grad()
                    g_loss.backward()
                    opt_gs.step()

                    h = nets.embedder(x)
                    e_loss = 10 * torch.sqrt(torch.mean((nets.recovery(h) - x) ** 2)) \
                        + 0.1 * supervised_loss(h)
                    opt_er.zero_grad()
                    e_loss.backward()
                    opt_er.step()

                with torch.no_grad():
                    h = nets.embedder(x)
                    z = torch.randn(b, T, N_CHANNELS, generator=g)
                    e_hat = nets.generator(z, bias=c)
                    h_hat = nets.supervisor(e_hat)
                y_real = nets.discriminator(h + c[:, None, :])
                y_fake = nets.discriminator(h_hat + c[:, None, :])
                y_fake_e = nets.discriminator(e_hat + c[:, None, :])
                d_loss = _BCE(y_real, torch.ones_like(y_real)) \
                    + _BCE(y_fake, torch.zeros_like(y_fake)) \
                    + _BCE(y_fake_e, torch.zeros_like(y_fake_e))
                # original recipe: skip the update while D is already ahead
                if float(d_loss.detach()) > 0.15:
                    opt_d.zero_grad()
                    d_loss.backward()
                    opt_d.step()
            record(epoch)
            epoch += 1

        self.training_log_ = log
        return self

    def _generate(self, cond_vec: torch.Tensor, g: torch.Generator) -> torch.Tensor:
        z = torch.randn(cond_vec.shape[0], self.T_, N_CHANNELS, generator=g)
        e_hat = self.nets_.generator(z, bias=cond_vec)
        return self.nets_.recovery(self.nets_.supervisor(e_hat))

    def sample(self, label: int, n: int, seed: int = 0) -> np.ndarray:
        if self.conditioning_mode != "movement_label":
            raise ModeError("sampling by label requires a movement_label artifact")
        if n == 0:
            return np.empty((0, N_CHANNELS, self.T_))
        g = seeded_generator(seed)
        with torch.no_grad():
            cond = torch.full((n,), int(label), dtype=torch.long)
            out = self._generate(self.nets_.condition(cond), g)
        out = out.transpose(1, 2).numpy().astype(np.float64)
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
            out = self._generate(self.nets_.condition(X), g)
        out = out.transpose(1, 2).numpy().astype(np.float64)
        return np.clip(out, -1.0, 1.0)

    def reconstruction_error(self, X, y=None) -> float:
        _, target, _ = self._prepare(X, y)
        return self._recon_mse(target)
