"""Experiment orchestration: reconstruction sweeps, persistence, tables and plots.

A sweep visits every ``(record, mask, gamma, metadata mode)`` cell. Each cell
is written to its own JSON file named by a hash of everything that determines
its result, so an interrupted sweep resumes by skipping finished cells.
"""

from __future__ import annotations

import csv
import enum
import hashlib
import io
import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .espirit import CalibrationConfig, estimate_maps
from .io import read_dataset
from .masks import MaskKind, acs_region, make_mask
from .metadata import ScanMetadata, ablate, parse_prompt, to_prompt
from .metrics import aggregate, format_mean_std, magnitude_metrics
from .prior.checkpoint import load_checkpoint
from .prior.schedule import make_schedule
from .sense import ForwardModel
from .solver import SolverConfig, dds_reconstruct

log = logging.getLogger(__name__)

THREADS_ENV = "CONTEXTRECON_THREADS"


class MetadataMode(enum.Enum):
    FULL = "Full"
    NO_MR_PARAMS = "NoMRParams"
    NO_CONTRAST = "NoContrast"
    NO_SLICE = "NoSlice"
    UNCONDITIONAL = "Unconditional"
    WRONG_PATHOLOGY = "WrongPathology"
    CORRECT_PATHOLOGY_ONLY = "CorrectPathologyOnly"


class MapsSource(enum.Enum):
    GROUND_TRUTH = "GroundTruth"
    ESPIRIT = "ESPIRiT-from-ACS"


_ABLATION = {
    MetadataMode.FULL: "full",
    MetadataMode.NO_MR_PARAMS: "no_mr_params",
    MetadataMode.NO_CONTRAST: "no_contrast",
    MetadataMode.NO_SLICE: "no_slice",
    MetadataMode.UNCONDITIONAL: "unconditional",
    MetadataMode.CORRECT_PATHOLOGY_ONLY: "pathology_only",
}


@dataclass(frozen=True)
class MaskSpec:
    kind: MaskKind
    accel: float
    acs: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", MaskKind.parse(self.kind))
        if not self.accel >= 1:
            raise ConfigError(f"acceleration must be >= 1, got {self.accel}")

    @property
    def mask_id(self):
        accel = int(self.accel) if float(self.accel).is_integer() else self.accel
        return f"{self.kind.label}x{accel}" + (f"-acs{self.acs:g}" if self.acs else "")

    @classmethod
    def parse(cls, value):
        """From a mapping or a ``"kind:accel[:acs]"`` string."""
        if isinstance(value, MaskSpec):
            return value
        if isinstance(value, dict):
            return cls(value["kind"], float(value["accel"]), float(value.get("acs", 0.0)))
        parts = str(value).split(":")
        if len(parts) not in (2, 3):
            raise ConfigError(f"mask spec {value!r} is not kind:accel[:acs]")
        return cls(parts[0], float(parts[1]), float(parts[2]) if len(parts) == 3 else 0.0)


def _parse_enum(enum_cls, value):
    if isinstance(value, enum_cls):
        return value
    for member in enum_cls:
        if str(value).lower() in (member.value.lower(), member.name.lower()):
            return member
    raise ConfigError(f"unknown {enum_cls.__name__} {value!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: str
    checkpoint: str
    output_dir: str
    masks: tuple = (MaskSpec(MaskKind.UNIFORM1D, 4, 0.08),)
    gammas: tuple = (0.0, 1.0, 2.0)
    metadata_mode: tuple = (MetadataMode.FULL,)
    maps_source: MapsSource = MapsSource.GROUND_TRUTH
    noise_sigma: float = 0.0
    seed: int = 0
    xi: float = 5.0
    cg_steps: int = 5
    eta: float = 0.8
    num_steps: int = 50
    limit: int | None = None

    def __post_init__(self):
        masks = tuple(MaskSpec.parse(m) for m in _as_tuple(self.masks))
        modes = tuple(_parse_enum(MetadataMode, m) for m in _as_tuple(self.metadata_mode))
        gammas = tuple(float(g) for g in _as_tuple(self.gammas))
        object.__setattr__(self, "masks", masks)
        object.__setattr__(self, "metadata_mode", modes)
        object.__setattr__(self, "gammas", gammas)
        object.__setattr__(self, "maps_source", _parse_enum(MapsSource, self.maps_source))
        if not gammas:
            raise ConfigError("gammas must be nonempty")
        if any(g < 0 for g in gammas):
            raise ConfigError("gammas must be nonnegative")
        if not masks:
            raise ConfigError("at least one mask spec is required")
        if not modes:
            raise ConfigError("at least one metadata mode is required")
        if self.noise_sigma < 0:
            raise ConfigError("noise_sigma must be nonnegative")

    @classmethod
    def from_dict(cls, d):
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def solver(self, gamma, seed):
        return SolverConfig(self.xi, self.cg_steps, gamma, self.eta, self.num_steps, seed)


def _as_tuple(v):
    if isinstance(v, (list, tuple)):
        return tuple(v)
    return (v,)


def derive_seed(*parts):
    """Stable 63-bit seed from arbitrary printable parts."""
    digest = hashlib.sha256("|".join(repr(p) for p in parts).encode()).digest()
    return int.from_bytes(digest[:8], "little") >> 1


def _vocab(md):
    return md.profile().pathologies


def wrong_pathology(md, seed):
    """Replace each pathology with a different label of the same anatomy.

    Replacements are drawn uniformly without replacement from the labels the
    record does not carry. A record without pathologies receives one label.
    """
    others = [p for p in _vocab(md) if p not in md.pathologies]
    if not others:
        return md
    rng = np.random.default_rng(seed)
    n = min(max(len(md.pathologies), 1), len(others))
    picks = rng.choice(len(others), size=n, replace=False)
    return replace(md, pathologies=tuple(others[i] for i in sorted(picks)))


def condition_for(md, mode, seed):
    """Metadata actually shown to the prior under ``mode``."""
    if mode is MetadataMode.WRONG_PATHOLOGY:
        return wrong_pathology(md, seed)
    return ablate(md, _ABLATION[mode])


@dataclass(frozen=True)
class Cell:
    record_id: str
    mask: MaskSpec
    gamma: float
    mode: MetadataMode
    prompt: str
    seed: int
    measurement_seed: int
    key: str = ""


@dataclass
class SweepResult:
    rows: list = field(default_factory=list)
    completed: int = 0
    skipped: int = 0
    total: int = 0

    @property
    def finished(self):
        return self.completed + self.skipped == self.total


RESULT_FIELDS = ("record_id", "mask", "accel", "acs", "mode", "gamma", "prompt",
                 "seed", "psnr", "ssim")


def plan_cells(cfg, records, checkpoint_digest):
    cells = []
    for rec in records:
        for spec in cfg.masks:
            meas_seed = derive_seed(cfg.seed, rec.record_id, spec.mask_id)
            for mode in cfg.metadata_mode:
                gammas = (0.0,) if mode is MetadataMode.UNCONDITIONAL else cfg.gammas
                md = condition_for(rec.metadata, mode,
                                   derive_seed(cfg.seed, rec.record_id, "wrong-pathology"))
                for gamma in gammas:
                    seed = derive_seed(cfg.seed, rec.record_id, spec.mask_id, gamma)
                    # the condition is irrelevant once guidance is off
                    prompt = "" if gamma == 0 else to_prompt(md)
                    content = {
                        "checkpoint": checkpoint_digest, "record": rec.record_id,
                        "image": hashlib.sha256(rec.image.tobytes()).hexdigest(),
                        "mask": spec.mask_id, "gamma": gamma, "prompt": prompt,
                        "seed": seed, "measurement_seed": meas_seed,
                        "maps": cfg.maps_source.value, "noise": cfg.noise_sigma,
                        "solver": [cfg.xi, cfg.cg_steps, cfg.eta, cfg.num_steps],
                    }
                    key = hashlib.sha256(json.dumps(content, sort_keys=True).encode()).hexdigest()
                    cells.append(Cell(rec.record_id, spec, gamma, mode, prompt, seed,
                                      meas_seed, key[:24]))
    return cells


def _espirit_maps(y, mask):
    region = acs_region(mask.kept)
    if region is None:
        raise ConfigError("ESPIRiT maps need a fully sampled calibration region")
    extent = min(region[0].stop - region[0].start, region[1].stop - region[1].start)
    cal = CalibrationConfig(kernel_size=min(CalibrationConfig().kernel_size, extent))
    return estimate_maps(y, cal, mask)


def run_cell(cell, rec, cfg, prior, sched):
    h, w = rec.image.shape
    mask = make_mask(cell.mask.kind, h, w, cell.mask.accel, cell.mask.acs,
                     cell.measurement_seed % 2**32)
    truth = ForwardModel(rec.maps, mask, cfg.noise_sigma)
    y = truth.measure(rec.image, cell.measurement_seed)
    if cfg.maps_source is MapsSource.ESPIRIT:
        model = ForwardModel(_espirit_maps(y, mask), mask)
    else:
        model = ForwardModel(rec.maps, mask)
    md = parse_prompt(cell.prompt) if cell.prompt else ScanMetadata()
    x = dds_reconstruct(y, model, prior, sched, md, cfg.solver(cell.gamma, cell.seed))
    p, s = magnitude_metrics(rec.image, x)
    return {"record_id": cell.record_id, "mask": cell.mask.kind.label,
            "accel": cell.mask.accel, "acs": cell.mask.acs, "mode": cell.mode.value,
            "gamma": cell.gamma, "prompt": cell.prompt, "seed": cell.seed,
            "psnr": p, "ssim": s}


def _threads():
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError as exc:
        raise ConfigError(f"{THREADS_ENV} must be an integer") from exc


def _digest(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def run_sweep(cfg, max_cells=None, records=None, prior=None):
    """Run (or resume) a sweep and write all outputs under ``cfg.output_dir``.

    Parameters
    ----------
    max_cells : int, optional
        Stop after computing this many new cells, leaving the sweep resumable.
    records, prior : optional
        Preloaded dataset records and score model, to skip disk loading.
    """
    ckpt = Path(cfg.checkpoint)
    if not ckpt.exists():
        raise ConfigError(f"checkpoint {ckpt} not found")
    if records is None:
        records = read_dataset(cfg.dataset)
    if cfg.limit is not None:
        records = records[:cfg.limit]
    if not records:
        raise ConfigError("dataset is empty")
    prior = prior or load_checkpoint(ckpt)
    sched = prior.schedule or make_schedule()
    out = Path(cfg.output_dir)
    cell_dir = out / "cells"
    cell_dir.mkdir(parents=True, exist_ok=True)
    by_id = {r.record_id: r for r in records}
    cells = plan_cells(cfg, records, _digest(ckpt))
    result = SweepResult(total=len(cells))

    todo = []
    for cell in cells:
        if (cell_dir / f"{cell.key}.json").exists():
            result.skipped += 1
        else:
            todo.append(cell)
    # cells sharing a key (e.g. Unconditional vs. gamma=0) are computed once
    unique = list({c.key: c for c in todo}.values())
    if max_cells is not None:
        unique = unique[:max_cells]

    def work(cell):
        return cell, run_cell(cell, by_id[cell.record_id], cfg, prior, sched)

    with ThreadPoolExecutor(max_workers=_threads()) as pool:
        for cell, row in pool.map(work, unique):
            tmp = cell_dir / f"{cell.key}.tmp"
            tmp.write_text(json.dumps({"psnr": row["psnr"], "ssim": row["ssim"]}))
            tmp.replace(cell_dir / f"{cell.key}.json")
    done = {c.key for c in todo if (cell_dir / f"{c.key}.json").exists()}
    result.completed = sum(1 for c in todo if c.key in done)

    for cell in cells:
        path = cell_dir / f"{cell.key}.json"
        if not path.exists():
            continue
        stored = json.loads(path.read_text())
        result.rows.append({
            "record_id": cell.record_id, "mask": cell.mask.kind.label,
            "accel": cell.mask.accel, "acs": cell.mask.acs, "mode": cell.mode.value,
            "gamma": cell.gamma, "prompt": cell.prompt, "seed": cell.seed,
            "psnr": stored["psnr"], "ssim": stored["ssim"]})
    write_results(result.rows, out)
    if result.finished:
        emit_outputs(result.rows, out)
    return result


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_results(rows, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with (out / "results.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULT_FIELDS)
        for r in rows:
            w.writerow([_fmt(r[k]) for k in RESULT_FIELDS])


def read_results(path):
    path = Path(path)
    if path.is_dir():
        path = path / "results.csv"
    rows = []
    with path.open(newline="") as fh:
        for r in csv.DictReader(fh):
            for k in ("accel", "acs", "gamma", "psnr", "ssim"):
                r[k] = float(r[k])
            r["seed"] = int(r["seed"])
            rows.append(r)
    return rows


def _group_key(r):
    return (r["mode"], r["mask"], float(r["accel"]), float(r["acs"]), float(r["gamma"]))


def summarize(rows):
    """Mean and population std of PSNR/SSIM per (mode, mask, accel, acs, gamma)."""
    groups = {}
    for r in rows:
        groups.setdefault(_group_key(r), []).append(r)
    out = []
    for (mode, mask, accel, acs, gamma), rs in sorted(groups.items()):
        pm, ps = aggregate(r["psnr"] for r in rs)
        sm, ss = aggregate(r["ssim"] for r in rs)
        out.append({"mode": mode, "mask": mask, "accel": accel, "acs": acs, "gamma": gamma,
                    "n": len(rs), "mean": {"psnr": pm, "ssim": sm},
                    "std": {"psnr": ps, "ssim": ss}})
    return out


def mean_psnr(rows, mode, gamma, mask=None):
    vals = [r["psnr"] for r in rows if r["mode"] == mode and float(r["gamma"]) == gamma
            and (mask is None or r["mask"] == mask)]
    return aggregate(vals)[0]


def emit_table(rows, path=None):
    """Plain-text table: rows are gammas, columns are (mask, accel) x (PSNR, SSIM).

    One block per metadata mode. A trailing ``*`` marks the largest mean in each
    column; tied maxima are all marked.
    """
    summary = summarize(rows)
    if not summary:
        raise ConfigError("no results to tabulate")
    buf = io.StringIO()
    modes = sorted({s["mode"] for s in summary})
    for mode in modes:
        part = [s for s in summary if s["mode"] == mode]
        cols = sorted({(s["mask"], s["accel"], s["acs"]) for s in part})
        gammas = sorted({s["gamma"] for s in part})
        cell = {(s["mask"], s["accel"], s["acs"], s["gamma"]): s for s in part}
        best = {}
        for col in cols:
            for metric in ("psnr", "ssim"):
                means = [round(cell[(*col, g)]["mean"][metric], 2)
                         for g in gammas if (*col, g) in cell]
                best[(col, metric)] = max(means)
        header = ["gamma"]
        for mask, accel, _ in cols:
            label = f"{mask} x{accel:g}"
            header += [f"{label} PSNR", f"{label} SSIM"]
        lines = [header]
        for g in gammas:
            line = [f"{g:g}"]
            for col in cols:
                s = cell.get((*col, g))
                for metric in ("psnr", "ssim"):
                    if s is None:
                        line.append("-")
                        continue
                    text = format_mean_std(s["mean"][metric], s["std"][metric])
                    if round(s["mean"][metric], 2) == best[(col, metric)]:
                        text += " *"
                    line.append(text)
            lines.append(line)
        widths = [max(len(row[i]) for row in lines) for i in range(len(header))]
        buf.write(f"[{mode}]\n")
        for row in lines:
            buf.write("  ".join(c.ljust(wd) for c, wd in zip(row, widths)).rstrip() + "\n")
        buf.write("\n")
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf")


def emit_plot(rows, path=None, metric="psnr", width=480, height=320):
    """SVG line plot of mean ``metric`` against gamma.

    One polyline per (metadata mode, mask) pair. The unconditional level (the
    Unconditional mode if present, else the gamma = 0 mean) of each mask is
    drawn as a horizontal dashed line.
    """
    summary = summarize(rows)
    curves = {}
    for s in summary:
        if s["mode"] == MetadataMode.UNCONDITIONAL.value:
            continue
        curves.setdefault((s["mode"], s["mask"], s["accel"]), []).append(
            (s["gamma"], s["mean"][metric]))
    baselines = {}
    for s in summary:
        key = (s["mask"], s["accel"])
        if s["mode"] == MetadataMode.UNCONDITIONAL.value:
            baselines[key] = s["mean"][metric]
        elif s["gamma"] == 0 and key not in baselines:
            baselines.setdefault(key, s["mean"][metric])
    gammas = sorted({g for pts in curves.values() for g, _ in pts})
    if len(gammas) < 2:
        raise ConfigError("a plot needs at least two gamma values")
    ys = [v for pts in curves.values() for _, v in pts] + list(baselines.values())
    ys = [v for v in ys if math.isfinite(v)]
    g0, g1 = gammas[0], gammas[-1]
    y0, y1 = min(ys), max(ys)
    if y1 - y0 < 1e-9:
        y0, y1 = y0 - 0.5, y1 + 0.5
    pad = 0.05 * (y1 - y0)
    y0, y1 = y0 - pad, y1 + pad
    left, right, top, bottom = 56, 16, 16, 40
    pw, ph = width - left - right, height - top - bottom

    def px(g):
        return left + pw * (g - g0) / (g1 - g0)

    def py(v):
        return top + ph * (1.0 - (v - y0) / (y1 - y0))

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
           f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="#000"/>']
    for g in gammas:
        out.append(f'<text x="{px(g):.2f}" y="{top + ph + 14}" text-anchor="middle">{g:g}</text>')
    for i in range(5):
        v = y0 + (y1 - y0) * i / 4
        out.append(f'<text x="{left - 4}" y="{py(v) + 4:.2f}" text-anchor="end">{v:.2f}</text>')
    out.append(f'<text x="{left + pw / 2:.2f}" y="{height - 6}" text-anchor="middle">'
               f'CFG scale</text>')
    out.append(f'<text x="12" y="{top + ph / 2:.2f}" text-anchor="middle" '
               f'transform="rotate(-90 12 {top + ph / 2:.2f})">{metric.upper()}</text>')
    for i, (key, value) in enumerate(sorted(baselines.items())):
        color = _PALETTE[i % len(_PALETTE)]
        out.append(f'<line class="baseline" x1="{left}" x2="{left + pw}" y1="{py(value):.2f}" '
                   f'y2="{py(value):.2f}" stroke="{color}" stroke-dasharray="6 4"/>')
    for i, (key, pts) in enumerate(sorted(curves.items())):
        color = _PALETTE[i % len(_PALETTE)]
        pts = sorted(pts)
        coords = " ".join(f"{px(g):.2f},{py(v):.2f}" for g, v in pts if math.isfinite(v))
        mode, mask, accel = key
        out.append(f'<polyline class="curve" data-label="{mode} {mask} x{accel:g}" '
                   f'points="{coords}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        out.append(f'<text x="{left + 6}" y="{top + 14 + 13 * i}" fill="{color}">'
                   f'{mode} {mask} x{accel:g}</text>')
    out.append("</svg>")
    text = "\n".join(out) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text


def emit_outputs(rows, out_dir):
    """Write summary.json, table.txt and (with two or more plotted gammas) plots/*.svg."""
    out = Path(out_dir)
    (out / "summary.json").write_text(json.dumps(summarize(rows), indent=2, sort_keys=True)
                                      + "\n")
    emit_table(rows, out / "table.txt")
    # the plot draws Unconditional rows as baselines, not as gamma points
    curve_gammas = {float(r["gamma"]) for r in rows
                    if r["mode"] != MetadataMode.UNCONDITIONAL.value}
    if len(curve_gammas) >= 2:
        (out / "plots").mkdir(exist_ok=True)
        for metric in ("psnr", "ssim"):
            emit_plot(rows, out / "plots" / f"{metric}_vs_gamma.svg", metric)


def config_to_dict(cfg):
    d = asdict(cfg)
    d["masks"] = [{"kind": m.kind.label, "accel": m.accel, "acs": m.acs} for m in cfg.masks]
    d["metadata_mode"] = [m.value for m in cfg.metadata_mode]
    d["maps_source"] = cfg.maps_source.value
    return d
