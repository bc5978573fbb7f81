"""Toy conditional epsilon-prediction U-Net.

The conditioning vector enters through a bias-free, zero-initialised linear
layer. Its weight only receives gradient from nonzero conditions, so a model
trained exclusively on the empty condition keeps identical conditional and
unconditional outputs.
"""

from __future__ import annotations

import math

import numpy as np
import torch
from torch import nn

from ..metadata import FEATURE_DIM, UNCONDITIONAL, ConditioningVector


def timestep_embedding(t, dim):
    half = dim // 2
    freqs = torch.exp(-math.log(10000.0) * torch.arange(half, dtype=torch.float64) / half)
    args = t.to(torch.float64)[:, None] * freqs[None, :]
    return torch.cat([torch.cos(args), torch.sin(args)], dim=1)


def _groups(channels):
    for g in (8, 4, 2, 1):
        if channels % g == 0 and channels // g >= 2:
            return g
    return 1


class ResBlock(nn.Module):
    def __init__(self, cin, cout, emb_dim):
        super().__init__()
        self.norm1 = nn.GroupNorm(_groups(cin), cin)
        self.conv1 = nn.Conv2d(cin, cout, 3, padding=1)
        self.film = nn.Linear(emb_dim, 2 * cout)
        self.norm2 = nn.GroupNorm(_groups(cout), cout)
        self.conv2 = nn.Conv2d(cout, cout, 3, padding=1)
        self.skip = nn.Conv2d(cin, cout, 1) if cin != cout else nn.Identity()

    def forward(self, x, emb):
        h = self.conv1(nn.functional.silu(self.norm1(x)))
        scale, shift = self.film(emb)[:, :, None, None].chunk(2, dim=1)
        h = self.norm2(h) * (1 + scale) + shift
        h = self.conv2(nn.functional.silu(h))
        return h + self.skip(x)


class ScoreNet(nn.Module):
    """U-Net over 2-channel (real, imag) images with FiLM conditioning at every level."""

    def __init__(self, channels=(32, 64, 96), emb_dim=128, cond_dim=FEATURE_DIM,
                 in_channels=2):
        super().__init__()
        self.config = {"channels": list(channels), "emb_dim": emb_dim,
                       "cond_dim": cond_dim, "in_channels": in_channels}
        self.time_mlp = nn.Sequential(
            nn.Linear(emb_dim, emb_dim), nn.SiLU(), nn.Linear(emb_dim, emb_dim))
        self.cond_in = nn.Linear(cond_dim, emb_dim, bias=False)
        nn.init.zeros_(self.cond_in.weight)
        self.cond_mlp = nn.Sequential(nn.SiLU(), nn.Linear(emb_dim, emb_dim))

        self.stem = nn.Conv2d(in_channels, channels[0], 3, padding=1)
        self.down = nn.ModuleList()
        self.pool = nn.ModuleList()
        prev = channels[0]
        for i, ch in enumerate(channels):
            self.down.append(ResBlock(prev, ch, emb_dim))
            self.pool.append(nn.Conv2d(ch, ch, 3, stride=2, padding=1)
                             if i < len(channels) - 1 else nn.Identity())
            prev = ch
        self.mid = ResBlock(prev, prev, emb_dim)
        self.up = nn.ModuleList()
        self.upsample = nn.ModuleList()
        for i, ch in reversed(list(enumerate(channels))):
            self.up.append(ResBlock(prev + ch, ch, emb_dim))
            self.upsample.append(nn.Upsample(scale_factor=2, mode="nearest")
                                 if i > 0 else nn.Identity())
            prev = ch
        self.out_norm = nn.GroupNorm(_groups(prev), prev)
        self.out = nn.Conv2d(prev, in_channels, 3, padding=1)

    def embed(self, t, c):
        temb = self.time_mlp(timestep_embedding(t, self.config["emb_dim"]).to(c.dtype))
        return temb + self.cond_mlp(self.cond_in(c))

    def forward(self, x, t, c):
        emb = self.embed(t, c)
        h = self.stem(x)
        skips = []
        for block, pool in zip(self.down, self.pool):
            h = block(h, emb)
            skips.append(h)
            h = pool(h)
        h = self.mid(h, emb)
        for block, upsample in zip(self.up, self.upsample):
            h = block(torch.cat([h, skips.pop()], dim=1), emb)
            h = upsample(h)
        return self.out(nn.functional.silu(self.out_norm(h)))


def _cond_array(c, n):
    if isinstance(c, ConditioningVector):
        c = c.values
    c = np.asarray(c, dtype=np.float64)
    if c.ndim == 1:
        c = np.broadcast_to(c, (n, c.shape[0]))
    return np.array(c)


class ScoreModel:
    """Numpy-facing wrapper: ``predict(x_t, t, c)`` returns the epsilon estimate."""

    def __init__(self, net=None, schedule=None):
        self.net = net if net is not None else ScoreNet()
        self.schedule = schedule
        self.net.eval()

    @property
    def dtype(self):
        return next(self.net.parameters()).dtype

    def num_parameters(self):
        return sum(p.numel() for p in self.net.parameters())

    @torch.no_grad()
    def predict(self, x_t, t, c=UNCONDITIONAL):
        """Epsilon prediction for a ``(2, H, W)`` or ``(N, 2, H, W)`` array."""
        x = np.asarray(x_t)
        single = x.ndim == 3
        if single:
            x = x[None]
        n = x.shape[0]
        tt = torch.full((n,), int(t), dtype=torch.long) if np.ndim(t) == 0 \
            else torch.as_tensor(np.asarray(t), dtype=torch.long)
        xt = torch.as_tensor(x, dtype=self.dtype)
        ct = torch.as_tensor(_cond_array(c, n), dtype=self.dtype)
        out = self.net(xt, tt, ct).to(torch.float64).numpy()
        return out[0] if single else out
