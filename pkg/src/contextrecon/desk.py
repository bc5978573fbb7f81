"""Desk-scale reference configuration and a cached trained prior.

Training the reference prior takes tens of minutes on one CPU core, so the
result is stored under a cache directory keyed by a hash of every setting that
influences it. ``CONTEXTRECON_CACHE`` overrides the default location.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import os
import time
from pathlib import Path

from .io import write_loss_history, read_loss_history
from .phantom import generate_dataset
from .prior.checkpoint import load_checkpoint, read_header, save_checkpoint
from .prior.schedule import make_schedule
from .prior.training import TrainingConfig, train

log = logging.getLogger(__name__)

#: Training corpus: metadata-controlled phantoms on a 64 x 64 grid.
DESK_DATA = {"n": 500, "seed": 0, "grid": (64, 64), "num_coils": 4}

#: Held-out evaluation suite (disjoint seed from the training corpus). Every
#: phantom carries at least one pathology so pathology prompts are informative.
DESK_SUITE = {"n": 32, "seed": 1001, "grid": (64, 64), "num_coils": 4, "min_pathologies": 1}

#: Trend study on the held-out suite: CFG sweep, ablation chain, wrong pathology.
TREND_MASK = "uniform1d:4:0.08"
TREND_GAMMAS = (0.0, 1.0, 2.0, 3.0, 8.0)
TREND_ABLATION = ("Full", "NoMRParams", "NoContrast", "NoSlice", "Unconditional")
TREND_SEEDS = (0, 1, 2)

DESK_TRAINING = TrainingConfig(
    epochs=1000,
    batch_size=16,
    learning_rate=5e-4,
    seed=0,
    p_uncond=0.1,
    p_mrparams_drop=0.5,
    p_group_drop=0.15,
    channels=(16, 32, 64),
    max_steps=8000,
)


def cache_dir():
    root = os.environ.get("CONTEXTRECON_CACHE")
    return Path(root) if root else Path.home() / ".cache" / "contextrecon"


def config_key(data=None, cfg=None):
    data = data or DESK_DATA
    cfg = cfg or DESK_TRAINING
    blob = json.dumps({"data": data, "train": dataclasses.asdict(cfg),
                       "schedule": make_schedule().to_dict()}, sort_keys=True, default=list)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def desk_dataset(spec=None):
    spec = spec or DESK_DATA
    return generate_dataset(spec["n"], spec["seed"], spec["grid"], spec["num_coils"],
                            min_pathologies=spec.get("min_pathologies", 0))


def training_seconds(ckpt):
    """Wall-clock training time stored with a reference checkpoint, if any."""
    header, _ = read_header(ckpt)
    return header.get("extra", {}).get("train_seconds")


def desk_prior(root=None, data=None, cfg=None, progress=None):
    """Load the cached reference prior, training it first if needed.

    Returns
    -------
    model : ScoreModel
    history : list of (epoch, step, loss)
    path : Path
        Checkpoint location.
    """
    data = data or DESK_DATA
    cfg = cfg or DESK_TRAINING
    root = Path(root) if root else cache_dir()
    key = config_key(data, cfg)
    ckpt = root / f"prior-{key}.ckpt"
    hist = root / f"prior-{key}.loss.csv"
    if ckpt.exists() and hist.exists():
        return load_checkpoint(ckpt), read_loss_history(hist), ckpt
    log.info("training reference prior %s", key)
    root.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    result = train(desk_dataset(data), cfg, make_schedule(), progress=progress)
    seconds = time.perf_counter() - start
    tmp = ckpt.with_suffix(".tmp")
    save_checkpoint(result.model, tmp, extra={"key": key, "train_seconds": seconds})
    write_loss_history(result.history, hist)
    tmp.replace(ckpt)
    return load_checkpoint(ckpt), result.history, ckpt


def trend_study(prior, ckpt, root=None, seeds=TREND_SEEDS, records=None, progress=None):
    """Run the held-out trend sweeps and return seed-averaged mean PSNR per cell.

    Three sweeps share one output directory per seed so that identical cells
    (for instance Unconditional and the gamma = 0 Full run) are computed once:
    Full mode over ``TREND_GAMMAS``, the ablation chain at gamma = 2 and
    WrongPathology at gamma = 1. Finished cells are cached on disk, keyed by
    content, so an interrupted study resumes where it stopped.

    Returns
    -------
    means : dict
        ``{(mode, gamma): mean PSNR}`` averaged over records, then seeds.
    stats : dict
        Counts of computed and reused cells.
    """
    from .harness import ExperimentConfig, mean_psnr, run_sweep

    records = records if records is not None else desk_dataset(DESK_SUITE)
    root = Path(root) if root else cache_dir() / "trend"
    plans = [(("Full",), TREND_GAMMAS), (TREND_ABLATION[1:], (2.0,)),
             (("WrongPathology",), (1.0,))]
    per_seed, stats = [], {"computed": 0, "reused": 0}
    for seed in seeds:
        rows = []
        for modes, gammas in plans:
            cfg = ExperimentConfig(dataset="<memory>", checkpoint=str(ckpt),
                                   output_dir=str(root / f"seed{seed}"), masks=(TREND_MASK,),
                                   gammas=gammas, metadata_mode=modes, seed=seed)
            res = run_sweep(cfg, records=records, prior=prior)
            stats["computed"] += res.completed
            stats["reused"] += res.skipped
            rows += res.rows
            if progress:
                progress(seed, modes, res)
        keys = {(r["mode"], r["gamma"]) for r in rows}
        per_seed.append({k: mean_psnr(rows, *k) for k in keys})
    means = {k: sum(m[k] for m in per_seed) / len(per_seed) for k in per_seed[0]}
    return means, stats
