"""Decomposed diffusion sampling: DDIM with a conjugate-gradient data-consistency step."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, ShapeError
from .metadata import ScanMetadata
from .prior.sampling import diffusion_loop


@dataclass(frozen=True)
class SolverConfig:
    xi: float = 5.0
    cg_steps: int = 5
    gamma: float = 1.0
    eta: float = 0.8
    num_steps: int = 50
    seed: int = 0
    # clamp of the posterior-mean estimate per channel; None disables it
    clamp: float | None = 3.0

    def __post_init__(self):
        if self.xi < 0:
            raise ConfigError("xi must be nonnegative")
        if self.cg_steps < 0 or self.num_steps < 1:
            raise ConfigError("cg_steps must be >= 0 and num_steps >= 1")
        if self.gamma < 0:
            raise ConfigError("gamma must be nonnegative")
        if not 0.0 <= self.eta <= 1.0:
            raise ConfigError("eta must lie in [0, 1]")


def _rdot(a, b):
    """Real inner product ``Re <a, b>`` on complex arrays."""
    return float(np.real(np.vdot(a, b)))


@dataclass
class CGResult:
    x: np.ndarray
    iterations: int
    breakdown: bool = False
    objective: list = field(default_factory=list)


def conjugate_gradient(apply_op, rhs, x0, num_iters, objective=None, tol=0.0):
    """Conjugate gradient for a Hermitian positive-definite operator.

    Runs at most ``num_iters`` iterations from ``x0``. A direction with
    nonpositive curvature stops the iteration early and sets ``breakdown``.
    ``objective``, when given, is evaluated at every iterate including ``x0``.
    """
    x = np.array(x0, dtype=np.complex128, copy=True)
    r = rhs - apply_op(x)
    p = r.copy()
    rr = _rdot(r, r)
    track = [objective(x)] if objective is not None else []
    it = 0
    breakdown = False
    for it in range(1, num_iters + 1):
        if rr <= tol:
            it -= 1
            break
        ap = apply_op(p)
        curv = _rdot(p, ap)
        if not curv > 0:
            breakdown = True
            it -= 1
            break
        alpha = rr / curv
        x = x + alpha * p
        r = r - alpha * ap
        rr_new = _rdot(r, r)
        p = r + (rr_new / rr) * p
        rr = rr_new
        if objective is not None:
            track.append(objective(x))
    return CGResult(x, it, breakdown, track)


def prox_objective(x, x_hat, y, model, xi):
    """``xi/2 ||y - A x||^2 + 1/2 ||x - x_hat||^2``."""
    res = y - model.forward(x)
    return 0.5 * xi * _rdot(res, res) + 0.5 * _rdot(x - x_hat, x - x_hat)


def prox_data_consistency(x_hat, y, model, xi=5.0, cg_steps=5, return_info=False):
    """Approximate proximal data-consistency update.

    Solves ``(I + xi A^H A) x = x_hat + xi A^H y`` with ``cg_steps`` CG iterations
    started at ``x_hat``. ``xi = 0`` returns ``x_hat`` unchanged.
    """
    x_hat = np.asarray(x_hat)
    if x_hat.shape != model.shape:
        raise ShapeError(f"image shape {x_hat.shape} != model grid {model.shape}")
    if xi == 0 or cg_steps == 0:
        out = CGResult(x_hat, 0)
        return (x_hat, out) if return_info else x_hat
    rhs = x_hat + xi * model.adjoint(y)
    info = conjugate_gradient(
        lambda v: v + xi * model.normal(v), rhs, x_hat, cg_steps,
        objective=(lambda v: prox_objective(v, x_hat, y, model, xi)) if return_info else None)
    return (info.x, info) if return_info else info.x


def residual(y, model, x):
    """Relative data-consistency residual ``||y - A x|| / ||y||``."""
    ny = np.linalg.norm(y)
    return float(np.linalg.norm(y - model.forward(x)) / ny) if ny > 0 else 0.0


def dds_reconstruct(y, model, prior, sched, md=None, cfg=None, trace=None):
    """Reconstruct an image from undersampled multi-coil k-space.

    Parameters
    ----------
    y : ndarray, shape (C, H, W)
        Masked measurements consistent with ``model.mask``.
    model : ForwardModel
    prior : ScoreModel
    sched : DiffusionSchedule
    md : ScanMetadata, ConditioningVector or None
        Condition for guidance; ``None`` or empty metadata gives the
        unconditional path regardless of ``cfg.gamma``.
    cfg : SolverConfig
    trace : path or list, optional
        Per-step ``(t, residual, x0_norm)`` rows. A path writes them as CSV.

    Returns
    -------
    ndarray
        Complex image of shape ``model.shape``.
    """
    cfg = cfg or SolverConfig()
    y = np.asarray(y)
    if y.shape != (model.num_coils, *model.shape):
        raise ShapeError(f"k-space shape {y.shape} does not match model")
    if isinstance(md, ScanMetadata) and md.is_empty:
        md = None
    rows = []

    def prox(x0):
        return prox_data_consistency(x0, y, model, cfg.xi, cfg.cg_steps)

    def record(t, x0):
        x0c = x0[0] + 1j * x0[1]
        rows.append((t, residual(y, model, x0c), float(np.linalg.norm(x0))))

    out = diffusion_loop(prior, sched, model.shape, md, cfg.gamma, cfg.seed,
                         cfg.num_steps, cfg.eta, cfg.clamp, prox,
                         record if trace is not None else None)
    if trace is not None:
        if isinstance(trace, list):
            trace.extend(rows)
        else:
            with Path(trace).open("w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["t", "residual", "x0_norm"])
                w.writerows((t, repr(r), repr(n)) for t, r, n in rows)
    return out
