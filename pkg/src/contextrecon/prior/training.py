"""Epsilon-matching training with metadata dropout."""

from __future__ import annotations

import copy
import logging
from dataclasses import dataclass, field, replace

import numpy as np
import torch

from ..core import to_channels
from ..errors import ConfigError, TrainingDivergenceError
from ..metadata import ScanMetadata, dropout_for_training, featurize, parse_prompt
from .network import ScoreModel, ScoreNet
from .schedule import make_schedule

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainingConfig:
    epochs: int = 50
    batch_size: int = 16
    learning_rate: float = 1e-4
    seed: int = 0
    p_uncond: float = 0.1
    p_mrparams_drop: float = 0.5
    # independent drop of each of contrast / slice / pathology / sequence; 0 disables
    p_group_drop: float = 0.0
    weight_decay: float = 0.01
    grad_clip: float = 1.0
    channels: tuple = (16, 32, 64)
    max_steps: int | None = None

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be positive")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be positive")
        for name in ("p_uncond", "p_mrparams_drop"):
            if not 0.0 < getattr(self, name) < 1.0:
                raise ConfigError(f"{name} must lie in (0, 1)")
        if not 0.0 <= self.p_group_drop < 1.0:
            raise ConfigError("p_group_drop must lie in [0, 1)")


@dataclass
class TrainingResult:
    model: ScoreModel
    history: list = field(default_factory=list)
    """``(epoch, step, loss)`` tuples, one per optimizer step."""


def epsilon_loss(net, x0, t, noise, cond, alpha_bars):
    """Mean squared error between injected and predicted noise."""
    ab = alpha_bars[t - 1].to(x0.dtype)[:, None, None, None]
    x_t = ab.sqrt() * x0 + (1.0 - ab).sqrt() * noise
    return torch.mean((net(x_t, t, cond) - noise) ** 2)


def _sample_seed(*key):
    return int(np.random.SeedSequence(list(key)).generate_state(1)[0])


def _group_drop(md, rng, p):
    if p <= 0.0 or md.is_empty:
        return md
    drop = rng.random(4) < p
    return replace(
        md,
        contrast=None if drop[0] else md.contrast,
        slice_index=None if drop[1] else md.slice_index,
        pathologies=() if drop[2] else md.pathologies,
        sequence=None if drop[3] else md.sequence,
    )


def training_condition(md, cfg, epoch, index):
    """Condition actually fed to the network for one (epoch, sample) pair."""
    seed = _sample_seed(cfg.seed, epoch, index)
    md = dropout_for_training(md, seed, cfg.p_mrparams_drop, cfg.p_uncond)
    if cfg.p_group_drop > 0.0:
        md = _group_drop(md, np.random.default_rng(_sample_seed(cfg.seed, epoch, index, 1)),
                         cfg.p_group_drop)
    return md


def smoothed(history, window=50):
    """Trailing moving average of the loss column of ``history``."""
    losses = np.array([h[2] for h in history], dtype=np.float64)
    if losses.size == 0:
        return losses
    window = max(1, min(window, losses.size))
    kernel = np.ones(window) / window
    return np.convolve(losses, kernel, mode="valid")


def gradient_check(seed=1, h=1e-6, per_tensor=3):
    """Relative error between autograd and central finite-difference gradients.

    Uses a one-level float64 micro-network (conv in, one residual level, conv
    out) and probes ``per_tensor`` random entries of every parameter tensor.
    """
    torch.manual_seed(seed)
    net = ScoreNet(channels=(4,), emb_dim=8).double()
    # a nonzero conditioning path so its gradients are exercised too
    torch.nn.init.normal_(net.cond_in.weight, std=0.2)
    ab = torch.as_tensor(make_schedule().alpha_bars)
    g = torch.Generator().manual_seed(seed)
    x0 = torch.randn(2, 2, 8, 8, generator=g, dtype=torch.float64)
    noise = torch.randn(2, 2, 8, 8, generator=g, dtype=torch.float64)
    t = torch.tensor([100, 700])
    md = parse_prompt("Knee, PDFS")
    cond = torch.as_tensor(np.stack([featurize(md).values, featurize(ScanMetadata()).values]))

    def loss():
        return epsilon_loss(net, x0, t, noise, cond, ab)

    params = list(net.parameters())
    grads = torch.autograd.grad(loss(), params)
    rng = np.random.default_rng(seed)
    analytic, numeric = [], []
    with torch.no_grad():
        for p, gp in zip(params, grads):
            flat = p.view(-1)
            for idx in rng.choice(flat.numel(), size=min(per_tensor, flat.numel()),
                                  replace=False):
                old = flat[idx].item()
                flat[idx] = old + h
                up = loss().item()
                flat[idx] = old - h
                down = loss().item()
                flat[idx] = old
                numeric.append((up - down) / (2 * h))
                analytic.append(gp.view(-1)[idx].item())
    analytic, numeric = np.array(analytic), np.array(numeric)
    return float(np.linalg.norm(analytic - numeric) / np.linalg.norm(analytic))


def train(records, cfg, schedule=None, model=None, progress=None):
    """Fit a conditional epsilon-prediction network.

    Parameters
    ----------
    records : sequence of PhantomRecord
        Normalized images with metadata.
    cfg : TrainingConfig
    schedule : DiffusionSchedule, optional
        Defaults to the 1000-step linear schedule.
    model : ScoreModel, optional
        Warm start; a fresh network seeded by ``cfg.seed`` otherwise.
    progress : callable, optional
        Called as ``progress(epoch, step, loss)`` after each step.
    """
    if len(records) == 0:
        raise ConfigError("training set is empty")
    schedule = schedule or make_schedule()
    torch.manual_seed(cfg.seed)
    if model is None:
        model = ScoreModel(ScoreNet(cfg.channels), schedule)
    model.schedule = schedule
    net = model.net
    dtype = model.dtype
    images = torch.as_tensor(
        np.stack([to_channels(r.image) for r in records]), dtype=dtype)
    metas = [r.metadata for r in records]
    alpha_bars = torch.as_tensor(schedule.alpha_bars, dtype=torch.float64)
    gen = torch.Generator().manual_seed(cfg.seed)
    opt = torch.optim.AdamW(net.parameters(), lr=cfg.learning_rate,
                            weight_decay=cfg.weight_decay)
    history = []
    step = 0
    n = len(records)
    feat_cache = {}

    def cond_of(md):
        key = md if not md.is_empty else ScanMetadata()
        if key not in feat_cache:
            feat_cache[key] = featurize(key).values
        return feat_cache[key]

    net.train()
    try:
        for epoch in range(cfg.epochs):
            order = np.random.default_rng(_sample_seed(cfg.seed, epoch, 2**31)).permutation(n)
            good_state = copy.deepcopy(net.state_dict())
            for start in range(0, n, cfg.batch_size):
                idx = order[start:start + cfg.batch_size]
                cond = torch.as_tensor(
                    np.stack([cond_of(training_condition(metas[i], cfg, epoch, int(i)))
                              for i in idx]), dtype=dtype)
                x0 = images[idx]
                t = torch.randint(1, schedule.num_steps + 1, (len(idx),), generator=gen)
                noise = torch.randn(x0.shape, generator=gen, dtype=dtype)
                loss = epsilon_loss(net, x0, t, noise, cond, alpha_bars)
                if not torch.isfinite(loss):
                    raise TrainingDivergenceError(
                        f"non-finite loss at epoch {epoch} step {step}", good_state)
                opt.zero_grad(set_to_none=True)
                loss.backward()
                if cfg.grad_clip:
                    torch.nn.utils.clip_grad_norm_(net.parameters(), cfg.grad_clip)
                opt.step()
                value = float(loss.detach())
                history.append((epoch, step, value))
                if progress is not None:
                    progress(epoch, step, value)
                step += 1
                if cfg.max_steps is not None and step >= cfg.max_steps:
                    return TrainingResult(model, history)
            if epoch % 10 == 0:
                log.info("epoch %d step %d loss %.4f", epoch, step, history[-1][2])
    finally:
        net.eval()
    return TrainingResult(model, history)
