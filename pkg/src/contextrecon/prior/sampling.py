"""Classifier-free guidance and the DDIM reverse loop."""

from __future__ import annotations

import numpy as np

from ..core import from_channels, to_channels
from ..errors import ConfigError, ScheduleError
from ..metadata import UNCONDITIONAL, ConditioningVector, ScanMetadata, featurize
from .schedule import predict_x0


def as_condition(c):
    """Accept metadata, a conditioning vector or ``None`` (unconditional)."""
    if c is None:
        return UNCONDITIONAL
    if isinstance(c, ScanMetadata):
        return featurize(c)
    if isinstance(c, ConditioningVector):
        return c
    raise TypeError(f"cannot build a condition from {type(c).__name__}")


def cfg_epsilon(model, x_t, t, c, gamma):
    """Guided noise estimate ``eps_u + gamma * (eps_c - eps_u)``.

    ``gamma == 0`` returns the unconditional prediction and ``gamma == 1`` the
    conditional one, both without floating-point mixing. An unconditional ``c``
    short-circuits to ``eps_u`` for every ``gamma``.
    """
    if gamma < 0:
        raise ConfigError(f"guidance scale must be nonnegative, got {gamma}")
    c = as_condition(c)
    if c.is_unconditional:
        return model.predict(x_t, t, UNCONDITIONAL)
    if gamma == 0:
        return model.predict(x_t, t, UNCONDITIONAL)
    eps_c = model.predict(x_t, t, c)
    if gamma == 1:
        return eps_c
    eps_u = model.predict(x_t, t, UNCONDITIONAL)
    return eps_u + gamma * (eps_c - eps_u)


def diffusion_loop(model, sched, shape, c, gamma, seed, num_steps=50, eta=None,
                   clamp=3.0, prox=None, trace=None):
    """Run the strided DDIM reverse process, optionally with a proximal step.

    Each step forms the posterior-mean estimate ``x0_hat`` from the guided noise,
    clamps it to ``[-clamp, clamp]`` per channel, passes it through ``prox`` (a
    map on complex images; identity when ``None``) and re-noises with the same
    guided noise plus ``sigma_t`` fresh noise. No fresh noise is drawn on the
    final jump to ``t = 0``, where ``sigma`` vanishes.

    Returns the final complex image.
    """
    c = as_condition(c)
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((2, *shape))
    steps = sched.timesteps(num_steps)
    for i, t in enumerate(steps):
        t_prev = int(steps[i + 1]) if i + 1 < len(steps) else 0
        eps = cfg_epsilon(model, x, int(t), c, gamma)
        x0 = predict_x0(x, int(t), eps, sched)
        if clamp is not None:
            x0 = np.clip(x0, -clamp, clamp)
        if prox is not None:
            x0 = to_channels(prox(from_channels(x0)))
        ab_prev = sched.alpha_bar(t_prev)
        sigma = sched.sigma(int(t), t_prev, eta)
        if ab_prev + sigma**2 > 1.0 + 1e-12:
            raise ScheduleError(f"alpha_bar + sigma^2 exceeds 1 at step {t}")
        x = np.sqrt(ab_prev) * x0 + np.sqrt(max(0.0, 1.0 - ab_prev - sigma**2)) * eps
        if sigma > 0:
            x = x + sigma * rng.standard_normal(x.shape)
        if trace is not None:
            trace(int(t), x0)
    return from_channels(x)


def ddim_sample(model, sched, c=None, gamma=1.0, seed=0, shape=(64, 64), num_steps=50,
                eta=None, clamp=3.0):
    """Draw one prior sample; ``eta = 0`` makes the run deterministic given ``seed``."""
    return diffusion_loop(model, sched, shape, c, gamma, seed, num_steps, eta, clamp)
