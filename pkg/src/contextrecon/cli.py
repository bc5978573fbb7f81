"""Command-line interface: ``contextrecon <subcommand> [options]``.

Exit codes: 0 on success, 2 for configuration errors, 3 for runtime failures
(partial sweep results stay on disk).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import yaml

from .errors import ConfigError, InvalidInputError, PromptParseError, UnknownVocabularyError
from .harness import (ExperimentConfig, MaskSpec, config_to_dict, emit_outputs, read_results,
                      run_sweep)
from .io import (read_dataset, save_image, save_mask, write_dataset,
                 write_loss_history)
from .masks import make_mask
from .metadata import ScanMetadata, parse_prompt
from .metrics import magnitude_metrics
from .phantom import generate_dataset
from .prior.checkpoint import load_checkpoint, save_checkpoint
from .prior.schedule import make_schedule
from .prior.training import TrainingConfig, train
from .sense import ForwardModel
from .solver import SolverConfig, dds_reconstruct

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

log = logging.getLogger("contextrecon")


def _load_config(path):
    if path is None:
        return {}
    try:
        data = yaml.safe_load(Path(path).read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must be a mapping")
    return data


def _merge(args, config, names):
    """Flag values overridden by config-file entries (dashes or underscores)."""
    out = {n: getattr(args, n) for n in names}
    for key, value in config.items():
        name = key.replace("-", "_")
        if name not in out:
            raise ConfigError(f"unknown config key {key!r}")
        out[name] = value
    return out


def _grid(text):
    parts = str(text).lower().split("x")
    if len(parts) == 1:
        parts = parts * 2
    try:
        return tuple(int(p) for p in parts)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad grid {text!r}") from exc


def cmd_gen_data(args, config):
    o = _merge(args, config, ("n", "seed", "grid", "num_coils", "min_pathologies",
                              "output_dir"))
    records = generate_dataset(int(o["n"]), int(o["seed"]), _grid(o["grid"]),
                               int(o["num_coils"]), min_pathologies=int(o["min_pathologies"]))
    path = write_dataset(records, o["output_dir"])
    print(f"wrote {len(records)} records to {path}")


def cmd_train(args, config):
    names = ("dataset", "output", "epochs", "batch_size", "learning_rate", "seed",
             "max_steps", "p_uncond", "p_mrparams_drop", "p_group_drop", "channels")
    o = _merge(args, config, names)
    records = read_dataset(o["dataset"])
    cfg = TrainingConfig(
        epochs=int(o["epochs"]), batch_size=int(o["batch_size"]),
        learning_rate=float(o["learning_rate"]), seed=int(o["seed"]),
        p_uncond=float(o["p_uncond"]), p_mrparams_drop=float(o["p_mrparams_drop"]),
        p_group_drop=float(o["p_group_drop"]),
        channels=tuple(int(c) for c in o["channels"]),
        max_steps=None if o["max_steps"] is None else int(o["max_steps"]))

    def progress(epoch, step, loss):
        if step % 100 == 0:
            log.info("epoch %d step %d loss %.5f", epoch, step, loss)

    result = train(records, cfg, make_schedule(), progress=progress)
    out = Path(o["output"])
    out.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(result.model, out)
    write_loss_history(result.history, out.with_suffix(".loss.csv"))
    print(f"checkpoint {out}, {len(result.history)} steps, "
          f"final loss {result.history[-1][2]:.5f}")


def cmd_reconstruct(args, config):
    names = ("checkpoint", "dataset", "record", "mask", "gamma", "prompt", "seed", "xi",
             "cg_steps", "eta", "num_steps", "noise_sigma", "output", "trace")
    o = _merge(args, config, names)
    records = read_dataset(o["dataset"])
    matches = [r for r in records if r.record_id == str(o["record"])]
    if not matches:
        try:
            rec = records[int(o["record"])]
        except (ValueError, IndexError) as exc:
            raise ConfigError(f"record {o['record']!r} not in dataset") from exc
    else:
        rec = matches[0]
    spec = MaskSpec.parse(o["mask"])
    h, w = rec.image.shape
    mask = make_mask(spec.kind, h, w, spec.accel, spec.acs, int(o["seed"]))
    fm = ForwardModel(rec.maps, mask, float(o["noise_sigma"]))
    y = fm.measure(rec.image, int(o["seed"]))
    md = rec.metadata if o["prompt"] is None else (
        parse_prompt(o["prompt"]) if o["prompt"] else ScanMetadata())
    prior = load_checkpoint(o["checkpoint"])
    if o["trace"]:
        Path(o["trace"]).parent.mkdir(parents=True, exist_ok=True)
    cfg = SolverConfig(float(o["xi"]), int(o["cg_steps"]), float(o["gamma"]),
                       float(o["eta"]), int(o["num_steps"]), int(o["seed"]))
    x = dds_reconstruct(y, ForwardModel(rec.maps, mask), prior,
                        prior.schedule or make_schedule(), md, cfg, trace=o["trace"])
    p, s = magnitude_metrics(rec.image, x)
    if o["output"]:
        out = Path(o["output"])
        out.parent.mkdir(parents=True, exist_ok=True)
        save_image(x, out)
        save_mask(mask, out.with_suffix(".mask"))
    print(json.dumps({"record": rec.record_id, "mask": spec.mask_id, "gamma": cfg.gamma,
                      "psnr": p, "ssim": s}))


def cmd_sweep(args, config):
    names = ("dataset", "checkpoint", "output_dir", "masks", "gammas", "metadata_mode",
             "maps_source", "noise_sigma", "seed", "xi", "cg_steps", "eta", "num_steps",
             "limit")
    o = _merge(args, config, names + ("max_cells",))
    max_cells = o.pop("max_cells")
    cfg = ExperimentConfig.from_dict(o)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.yaml").write_text(yaml.safe_dump(config_to_dict(cfg), sort_keys=True))
    result = run_sweep(cfg, max_cells=max_cells)
    state = "complete" if result.finished else "partial"
    print(f"{state}: {result.completed} computed, {result.skipped} reused, "
          f"{result.total} total -> {out}")
    return EXIT_OK if result.finished else EXIT_RUNTIME


def cmd_report(args, config):
    o = _merge(args, config, ("results", "output_dir"))
    rows = []
    for path in o["results"]:
        rows.extend(read_results(path))
    if not rows:
        raise ConfigError("no result rows found")
    out = Path(o["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    emit_outputs(rows, out)
    print((out / "table.txt").read_text(), end="")


def build_parser():
    p = argparse.ArgumentParser(prog="contextrecon", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--config", help="YAML file whose entries override flags")

    g = sub.add_parser("gen-data", help="generate a phantom dataset")
    common(g)
    g.add_argument("--n", type=int, default=100)
    g.add_argument("--grid", default="64x64")
    g.add_argument("--num-coils", dest="num_coils", type=int, default=4)
    g.add_argument("--min-pathologies", dest="min_pathologies", type=int, default=0)
    g.add_argument("--output_dir", "--output-dir", dest="output_dir", required=True)
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="train the conditional prior")
    common(t)
    d = TrainingConfig()
    t.add_argument("--dataset", required=True)
    t.add_argument("--output", required=True, help="checkpoint path")
    t.add_argument("--epochs", type=int, default=d.epochs)
    t.add_argument("--batch-size", dest="batch_size", type=int, default=d.batch_size)
    t.add_argument("--learning-rate", dest="learning_rate", type=float,
                   default=d.learning_rate)
    t.add_argument("--max-steps", dest="max_steps", type=int, default=None)
    t.add_argument("--p-uncond", dest="p_uncond", type=float, default=d.p_uncond)
    t.add_argument("--p-mrparams-drop", dest="p_mrparams_drop", type=float,
                   default=d.p_mrparams_drop)
    t.add_argument("--p-group-drop", dest="p_group_drop", type=float, default=d.p_group_drop)
    t.add_argument("--channels", type=int, nargs="+", default=list(d.channels))
    t.set_defaults(func=cmd_train)

    def solver_flags(sp):
        s = SolverConfig()
        sp.add_argument("--checkpoint", required=True)
        sp.add_argument("--dataset", required=True)
        sp.add_argument("--xi", type=float, default=s.xi)
        sp.add_argument("--cg-steps", dest="cg_steps", type=int, default=s.cg_steps)
        sp.add_argument("--eta", type=float, default=s.eta)
        sp.add_argument("--num-steps", dest="num_steps", type=int, default=s.num_steps)
        sp.add_argument("--noise-sigma", dest="noise_sigma", type=float, default=0.0)

    r = sub.add_parser("reconstruct", help="reconstruct one record")
    common(r)
    solver_flags(r)
    r.add_argument("--record", default="0", help="record id or index")
    r.add_argument("--mask", default="uniform1d:4:0.08", help="kind:accel[:acs]")
    r.add_argument("--gamma", type=float, default=1.0)
    r.add_argument("--prompt", default=None,
                   help="metadata prompt; defaults to the record's own, '' for none")
    r.add_argument("--output", default=None, help="reconstructed image (.cmri)")
    r.add_argument("--trace", default=None, help="per-step trace CSV")
    r.set_defaults(func=cmd_reconstruct)

    w = sub.add_parser("sweep", help="run a reconstruction sweep")
    common(w)
    solver_flags(w)
    w.add_argument("--output_dir", "--output-dir", dest="output_dir", required=True)
    w.add_argument("--masks", nargs="+", default=["uniform1d:4:0.08"])
    w.add_argument("--gammas", type=float, nargs="+", default=[0.0, 1.0, 2.0])
    w.add_argument("--metadata-mode", dest="metadata_mode", nargs="+", default=["Full"])
    w.add_argument("--maps-source", dest="maps_source", default="GroundTruth")
    w.add_argument("--limit", type=int, default=None)
    w.add_argument("--max-cells", dest="max_cells", type=int, default=None,
                   help="stop after this many new cells (resumable)")
    w.set_defaults(func=cmd_sweep)

    rp = sub.add_parser("report", help="tabulate and plot sweep results")
    common(rp)
    rp.add_argument("--results", nargs="+", required=True,
                    help="results.csv files or sweep directories")
    rp.add_argument("--output_dir", "--output-dir", dest="output_dir", required=True)
    rp.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = _load_config(args.config)
        code = args.func(args, config)
    except (ConfigError, InvalidInputError, PromptParseError, UnknownVocabularyError,
            FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except KeyboardInterrupt:
        print("interrupted; partial results retained", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 - report any runtime failure as exit 3
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK if code is None else code


if __name__ == "__main__":
    sys.exit(main())
