"""Shared torch building blocks for the generative models and classifiers."""

from __future__ import annotations

import math

import numpy as np
import torch
from torch import nn


def to_tensor(x, dtype=torch.float32) -> torch.Tensor:
    if isinstance(x, torch.Tensor):
        return x.to(dtype)
    return torch.as_tensor(np.asarray(x), dtype=dtype)


def sinusoidal_positions(T: int, dim: int) -> torch.Tensor:
    """Standard fixed sine/cosine positional table, shape (T, dim)."""
    pos = torch.arange(T, dtype=torch.float32)[:, None]
    half = (dim + 1) // 2
    freqs = torch.exp(-math.log(10000.0) * torch.arange(half, dtype=torch.float32) / max(half, 1))
    angles = pos * freqs[None, :]
    table = torch.zeros(T, dim)
    table[:, 0::2] = torch.sin(angles)[:, : table[:, 0::2].shape[1]]
    table[:, 1::2] = torch.cos(angles)[:, : table[:, 1::2].shape[1]]
    return table


def attention_heads(width: int) -> int:
    return 2 if width % 2 == 0 else 1


class SequenceConditioner(nn.Module):
    """Conditioning path for sequence-conditioned generation: one attention
    encoder layer over the input channels (with sinusoidal positions),
    mean-pooled and projected to the target embedding width.  The embedding
    is meant to be summed into the consumer's internal latent space."""

    def __init__(self, in_channels: int, hidden_dim: int, out_dim: int, T: int):
        super().__init__()
        self.proj = nn.Linear(in_channels, hidden_dim)
        self.encoder = nn.TransformerEncoderLayer(
            d_model=hidden_dim, nhead=attention_heads(hidden_dim),
            dim_feedforward=4 * hidden_dim, dropout=0.0, batch_first=True)
        self.out = nn.Linear(hidden_dim, out_dim)
        self.register_buffer("positions", sinusoidal_positions(T, hidden_dim))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        # x: (B, C, T) -> (B, out_dim)
        h = self.proj(x.transpose(1, 2)) + self.positions[None, : x.shape[-1]]
        h = self.encoder(h)
        return self.out(h.mean(dim=1))


def mlp(sizes, activation=nn.ReLU, final_activation=None) -> nn.Sequential:
    layers = []
    for i in range(len(sizes) - 1):
        layers.append(nn.Linear(sizes[i], sizes[i + 1]))
        if i < len(sizes) - 2:
            layers.append(activation())
    if final_activation is not None:
        layers.append(final_activation())
    return nn.Sequential(*layers)


def seeded_generator(seed: int) -> torch.Generator:
    g = torch.Generator()
    g.manual_seed(int(seed) & 0x7FFFFFFFFFFFFFFF)
    return g


def minibatch_indices(n: int, batch_size: int, generator: torch.Generator):
    """Seeded shuffled minibatch index chunks for one epoch."""
    perm = torch.randperm(n, generator=generator)
    for start in range(0, n, batch_size):
        yield perm[start:start + batch_size]


def count_parameters(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters() if p.requires_grad)
