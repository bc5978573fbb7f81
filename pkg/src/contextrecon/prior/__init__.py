"""Diffusion prior: schedule, score network, training, guidance and sampling."""

from .checkpoint import load_checkpoint, save_checkpoint
from .network import ScoreModel, ScoreNet
from .sampling import cfg_epsilon, ddim_sample, diffusion_loop
from .schedule import DiffusionSchedule, make_schedule, predict_x0, q_sample
from .training import TrainingConfig, TrainingResult, train

__all__ = [
    "DiffusionSchedule", "ScoreModel", "ScoreNet", "TrainingConfig", "TrainingResult",
    "cfg_epsilon", "ddim_sample", "diffusion_loop", "load_checkpoint", "make_schedule",
    "predict_x0", "q_sample", "save_checkpoint", "train",
]
