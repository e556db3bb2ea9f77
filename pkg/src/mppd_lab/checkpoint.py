"""Versioned binary checkpoints.

Layout (all integers little-endian)::

    offset  size  field
    0       8     magic b"MPPDCKPT"
    8       4     format version (uint32), currently 1
    12      8     header length H (uint64)
    20      H     UTF-8 JSON header (sorted keys): network metadata, config
                  echo, RNG state, epoch counter, parameter layout
    20+H    8     parameter count P (uint64)
    28+H    8*P   parameters as float64, concatenated in layout order:
                  weights W^1..W^L (row-major), DLIF a per DLIF layer, readout

Files are written to a sibling temporary path and renamed into place, so a
failed write never leaves a partial checkpoint behind.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .network import NetworkDef
from .neuron import LifParams

MAGIC = b"MPPDCKPT"
VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    net: NetworkDef
    epoch: int
    config: dict = field(default_factory=dict)
    rng_state: Optional[dict] = None
    history: list = field(default_factory=list)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def rng_state(rng: np.random.Generator) -> dict:
    return _jsonable(rng.bit_generator.state)


def restore_rng(state: dict) -> np.random.Generator:
    if state.get("bit_generator") != "Philox":
        raise CheckpointError(f"unsupported bit generator {state.get('bit_generator')!r}")
    bg = np.random.Philox()
    st = dict(state)
    st["state"] = {k: np.asarray(v, dtype=np.uint64) for k, v in state["state"].items()}
    st["buffer"] = np.asarray(state["buffer"], dtype=np.uint64)
    bg.state = st
    return np.random.Generator(bg)


def _layout(net: NetworkDef) -> list:
    entries = [{"name": f"W{l + 1}", "shape": list(W.shape)} for l, W in enumerate(net.weights)]
    entries += [{"name": f"a{l + 1}", "shape": [net.T]} for l, a in enumerate(net.dlif_a) if a is not None]
    entries.append({"name": "readout", "shape": list(net.readout.shape)})
    return entries


def encode(ckpt: Checkpoint) -> bytes:
    net = ckpt.net
    header = {
        "T": net.T,
        "lambda": net.lif.lam,
        "u_th": net.lif.u_th,
        "kinds": list(net.kinds),
        "layer_sizes": net.layer_sizes,
        "num_classes": net.num_classes,
        "layout": _layout(net),
        "epoch": ckpt.epoch,
        "config": _jsonable(ckpt.config),
        "rng_state": ckpt.rng_state,
        "history": _jsonable(ckpt.history),
    }
    hbytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    params = [W.ravel() for W in net.weights]
    params += [a for a in net.dlif_a if a is not None]
    params.append(net.readout.ravel())
    flat = np.concatenate(params).astype("<f8")
    return b"".join(
        [
            MAGIC,
            struct.pack("<I", VERSION),
            struct.pack("<Q", len(hbytes)),
            hbytes,
            struct.pack("<Q", flat.size),
            flat.tobytes(),
        ]
    )


def decode(buf: bytes) -> Checkpoint:
    if len(buf) < 20 or buf[:8] != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    (version,) = struct.unpack("<I", buf[8:12])
    if version != VERSION:
        raise CheckpointError(f"checkpoint format version {version} is not supported (expected {VERSION})")
    (hlen,) = struct.unpack("<Q", buf[12:20])
    end = 20 + hlen
    if len(buf) < end + 8:
        raise CheckpointError("truncated checkpoint header")
    header = json.loads(buf[20:end].decode("utf-8"))
    (count,) = struct.unpack("<Q", buf[end : end + 8])
    if len(buf) != end + 8 + 8 * count:
        raise CheckpointError(f"checkpoint payload has {len(buf) - end - 8} bytes, expected {8 * count}")
    flat = np.frombuffer(buf, dtype="<f8", count=count, offset=end + 8).astype(np.float64)

    arrays = {}
    pos = 0
    for entry in header["layout"]:
        size = int(np.prod(entry["shape"]))
        arrays[entry["name"]] = flat[pos : pos + size].reshape(entry["shape"]).copy()
        pos += size
    if pos != count:
        raise CheckpointError("parameter layout does not match payload size")
    L = len(header["kinds"])
    net = NetworkDef(
        weights=[arrays[f"W{l + 1}"] for l in range(L)],
        readout=arrays["readout"],
        T=header["T"],
        lif=LifParams(lam=header["lambda"], u_th=header["u_th"]),
        kinds=header["kinds"],
        dlif_a=[arrays.get(f"a{l + 1}") for l in range(L)],
    )
    return Checkpoint(
        net=net,
        epoch=header["epoch"],
        config=header["config"],
        rng_state=header["rng_state"],
        history=header.get("history", []),
    )


def atomic_write(path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save(path, ckpt: Checkpoint) -> None:
    atomic_write(path, encode(ckpt))


def load(path) -> Checkpoint:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    return decode(path.read_bytes())
