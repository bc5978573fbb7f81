"""Discrete variance-preserving noise schedule."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, ShapeError


@dataclass(frozen=True, eq=False)
class DiffusionSchedule:
    """Linear-beta VP schedule; step ``t`` runs from 1 to ``num_steps``.

    ``alpha_bar(0)`` is defined as 1 so the last DDIM step lands on clean data.
    """

    betas: np.ndarray
    eta: float = 0.8

    def __post_init__(self):
        betas = np.asarray(self.betas, dtype=np.float64)
        betas.setflags(write=False)
        object.__setattr__(self, "betas", betas)
        if not 0.0 <= self.eta <= 1.0:
            raise ConfigError(f"eta must lie in [0, 1], got {self.eta}")

    @property
    def num_steps(self):
        return len(self.betas)

    @property
    def alphas(self):
        return 1.0 - self.betas

    @property
    def alpha_bars(self):
        """``alpha_bar[t - 1]`` for ``t = 1..T``."""
        return np.cumprod(self.alphas)

    def alpha_bar(self, t):
        t = int(t)
        if t == 0:
            return 1.0
        if not 1 <= t <= self.num_steps:
            raise ConfigError(f"step {t} outside [0, {self.num_steps}]")
        return float(self.alpha_bars[t - 1])

    def sigma(self, t, t_prev, eta=None):
        """DDIM noise level for the jump ``t -> t_prev``.

        With strided steps the one-step ``alpha_t`` is ``alpha_bar(t) / alpha_bar(t_prev)``.
        """
        eta = self.eta if eta is None else eta
        ab_t, ab_prev = self.alpha_bar(t), self.alpha_bar(t_prev)
        alpha_t = ab_t / ab_prev
        return float(eta * np.sqrt((1.0 - alpha_t) * (1.0 - ab_prev) / (1.0 - ab_t)))

    def timesteps(self, num_inference):
        """Descending, evenly strided steps ``T, T - s, ..., s``."""
        num_inference = int(num_inference)
        if not 1 <= num_inference <= self.num_steps:
            raise ConfigError(f"num_inference must lie in [1, {self.num_steps}]")
        stride = self.num_steps / num_inference
        steps = np.round(np.arange(num_inference, 0, -1) * stride).astype(int)
        return np.unique(steps)[::-1]

    def to_dict(self):
        return {"num_steps": self.num_steps, "beta_start": float(self.betas[0]),
                "beta_end": float(self.betas[-1]), "eta": self.eta}


def make_schedule(T=1000, beta_start=1e-4, beta_end=0.02, eta=0.8):
    if T < 2:
        raise ConfigError("schedule needs at least 2 steps")
    if not 0.0 < beta_start <= beta_end < 1.0:
        raise ConfigError(f"need 0 < beta_start <= beta_end < 1, got {beta_start}, {beta_end}")
    return DiffusionSchedule(np.linspace(beta_start, beta_end, T), eta)


def q_sample(x0, t, noise, sched):
    """``sqrt(alpha_bar_t) * x0 + sqrt(1 - alpha_bar_t) * noise``."""
    if getattr(x0, "shape", None) != getattr(noise, "shape", None):
        raise ShapeError(f"x0 {x0.shape} and noise {noise.shape} differ in shape")
    ab = sched.alpha_bar(t)
    return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * noise


def predict_x0(x_t, t, eps, sched):
    """Posterior-mean estimate ``(x_t - sqrt(1 - alpha_bar_t) eps) / sqrt(alpha_bar_t)``."""
    ab = sched.alpha_bar(t)
    return (x_t - np.sqrt(1.0 - ab) * eps) / np.sqrt(ab)
