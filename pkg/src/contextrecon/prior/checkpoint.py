"""Versioned checkpoint container.

Layout::

    b"CRCK"            magic
    u16                format version
    u32                header length in bytes
    header             UTF-8 JSON: schedule, network topology, tensor table
    tensor bytes       little-endian, concatenated in tensor-table order
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
import torch

from ..errors import ConfigError
from .network import ScoreModel, ScoreNet
from .schedule import make_schedule

MAGIC = b"CRCK"
VERSION = 1
_DTYPES = {"float32": "<f4", "float64": "<f8", "int64": "<i8"}


def save_checkpoint(model, path, extra=None):
    state = model.net.state_dict()
    table, blobs, offset = [], [], 0
    for name, tensor in state.items():
        arr = tensor.detach().cpu().numpy()
        dt = str(arr.dtype)
        data = arr.astype(_DTYPES[dt]).tobytes()
        table.append({"name": name, "dtype": dt, "shape": list(arr.shape),
                      "offset": offset, "nbytes": len(data)})
        blobs.append(data)
        offset += len(data)
    header = {
        "topology": {"class": "ScoreNet", **model.net.config},
        "schedule": model.schedule.to_dict() if model.schedule is not None else None,
        "tensors": table,
        "extra": extra or {},
    }
    raw = json.dumps(header, sort_keys=True).encode()
    path = Path(path)
    with path.open("wb") as fh:
        fh.write(MAGIC + struct.pack("<HI", VERSION, len(raw)))
        fh.write(raw)
        for blob in blobs:
            fh.write(blob)
    return path


def read_header(path):
    with Path(path).open("rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise ConfigError(f"{path} is not a checkpoint (magic {magic!r})")
        version, n = struct.unpack("<HI", fh.read(6))
        if version != VERSION:
            raise ConfigError(f"unsupported checkpoint version {version}")
        return json.loads(fh.read(n)), 10 + n


def load_checkpoint(path):
    header, start = read_header(path)
    topo = dict(header["topology"])
    topo.pop("class")
    net = ScoreNet(**topo)
    raw = Path(path).read_bytes()[start:]
    state = {}
    for entry in header["tensors"]:
        buf = raw[entry["offset"]:entry["offset"] + entry["nbytes"]]
        arr = np.frombuffer(buf, dtype=_DTYPES[entry["dtype"]]).reshape(entry["shape"])
        state[entry["name"]] = torch.from_numpy(arr.astype(entry["dtype"]))
    ref_dtype = state[header["tensors"][0]["name"]].dtype
    net = net.to(ref_dtype)
    net.load_state_dict(state)
    sched = header.get("schedule")
    schedule = None
    if sched is not None:
        schedule = make_schedule(sched["num_steps"], sched["beta_start"], sched["beta_end"],
                                 sched["eta"])
    return ScoreModel(net, schedule)
