"""Binary containers for images, coil maps and masks, plus the dataset manifest.

ComplexImage container (little-endian)::

    b"CMRI"  u16 version  u32 height  u32 width  2 pad bytes   (16-byte header)
    height * width (re, im) float64 pairs, row-major

A maps file is a sequence of such blocks, one per coil, followed by one block
holding the eigenvalue map in its real part.

Mask container::

    b"MSK1"  u8 kind  u32 height  u32 width  f64 accel  f64 acs  u64 seed
    row-major kept grid, bit-packed MSB first
"""

from __future__ import annotations

import csv
import json
import struct
from pathlib import Path

import numpy as np

from .core import SensitivityMaps
from .errors import ConfigError, ShapeError
from .masks import MaskKind, SamplingMask
from .metadata import parse_prompt
from .phantom import PhantomRecord

IMAGE_MAGIC = b"CMRI"
IMAGE_VERSION = 1
_IMAGE_HEADER = struct.Struct("<4sHII2x")
MASK_MAGIC = b"MSK1"
_MASK_HEADER = struct.Struct("<4sBIIddQ")


def encode_image(img):
    img = np.asarray(img, dtype=np.complex128)
    if img.ndim != 2:
        raise ShapeError(f"expected a 2D image, got shape {img.shape}")
    h, w = img.shape
    body = np.ascontiguousarray(img).view(np.float64).astype("<f8").tobytes()
    return _IMAGE_HEADER.pack(IMAGE_MAGIC, IMAGE_VERSION, h, w) + body


def decode_images(raw):
    """Decode every image block in ``raw``."""
    out, pos = [], 0
    while pos < len(raw):
        magic, version, h, w = _IMAGE_HEADER.unpack_from(raw, pos)
        if magic != IMAGE_MAGIC:
            raise ConfigError(f"bad image magic {magic!r} at byte {pos}")
        if version != IMAGE_VERSION:
            raise ConfigError(f"unsupported image container version {version}")
        pos += _IMAGE_HEADER.size
        n = 16 * h * w
        if pos + n > len(raw):
            raise ConfigError("truncated image block")
        data = np.frombuffer(raw, dtype="<f8", count=2 * h * w, offset=pos)
        out.append(data.astype(np.float64).view(np.complex128).reshape(h, w))
        pos += n
    return out


def save_image(img, path):
    Path(path).write_bytes(encode_image(img))


def load_image(path):
    blocks = decode_images(Path(path).read_bytes())
    if len(blocks) != 1:
        raise ConfigError(f"{path} holds {len(blocks)} image blocks, expected 1")
    return blocks[0]


def save_maps(maps, path):
    blocks = [encode_image(m) for m in maps.maps]
    blocks.append(encode_image(maps.eigenvalue_map.astype(np.complex128)))
    Path(path).write_bytes(b"".join(blocks))


def load_maps(path):
    blocks = decode_images(Path(path).read_bytes())
    if len(blocks) < 2:
        raise ConfigError(f"{path} needs at least one coil block and an eigenvalue block")
    return SensitivityMaps(np.stack(blocks[:-1]), blocks[-1].real.copy())


def encode_mask(mask):
    h, w = mask.shape
    head = _MASK_HEADER.pack(MASK_MAGIC, int(mask.kind), h, w, float(mask.accel_nominal),
                             float(mask.acs_fraction), int(mask.seed) % 2**64)
    return head + np.packbits(mask.kept.ravel()).tobytes()


def decode_mask(raw):
    magic, kind, h, w, accel, acs, seed = _MASK_HEADER.unpack_from(raw, 0)
    if magic != MASK_MAGIC:
        raise ConfigError(f"bad mask magic {magic!r}")
    bits = np.frombuffer(raw, dtype=np.uint8, offset=_MASK_HEADER.size)
    if bits.size * 8 < h * w:
        raise ConfigError("truncated mask body")
    kept = np.unpackbits(bits, count=h * w).astype(bool).reshape(h, w)
    if seed >= 2**63:
        seed -= 2**64
    return SamplingMask(kept, MaskKind(kind), accel, acs, seed)


def save_mask(mask, path):
    Path(path).write_bytes(encode_mask(mask))


def load_mask(path):
    return decode_mask(Path(path).read_bytes())


MANIFEST_NAME = "manifest.jsonl"


def write_dataset(records, out_dir):
    """Write images, maps and a newline-delimited JSON manifest under ``out_dir``."""
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    (out / "maps").mkdir(exist_ok=True)
    lines = []
    for r in records:
        img_rel = f"images/{r.record_id}.cmri"
        maps_rel = f"maps/{r.record_id}.cmri"
        save_image(r.image, out / img_rel)
        save_maps(r.maps, out / maps_rel)
        lines.append(json.dumps({"id": r.record_id, "image": img_rel, "maps": maps_rel,
                                 "prompt": r.prompt, "seed": r.seed, "scale": r.scale},
                                sort_keys=True))
    path = out / MANIFEST_NAME
    path.write_text("\n".join(lines) + "\n")
    return path


def read_dataset(manifest):
    """Load every record listed in a manifest file (or a directory holding one)."""
    path = Path(manifest)
    if path.is_dir():
        path = path / MANIFEST_NAME
    if not path.exists():
        raise ConfigError(f"manifest {path} not found")
    root = path.parent
    records = []
    for line in path.read_text().splitlines():
        if not line.strip():
            continue
        e = json.loads(line)
        records.append(PhantomRecord(
            e["id"], load_image(root / e["image"]), parse_prompt(e["prompt"]),
            load_maps(root / e["maps"]), int(e["seed"]), float(e.get("scale", 1.0))))
    return records


def write_loss_history(history, path):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "step", "loss"])
        for epoch, step, loss in history:
            w.writerow([epoch, step, repr(float(loss))])


def read_loss_history(path):
    with Path(path).open(newline="") as fh:
        return [(int(r["epoch"]), int(r["step"]), float(r["loss"]))
                for r in csv.DictReader(fh)]
