"""NTF1 tensor files and asset-store directories.

Layout of a tensor file (all integers little-endian)::

    offset 0   4 bytes   magic b"NTF1"
    offset 4   u8        dtype code, 0 = float32
    offset 5   u8        rank
    offset 6   u64 x rank extents
    then       float32 payload, row-major, 4 * prod(extents) bytes

An asset store is a directory holding ``manifest.json``::

    {"assets": [{"tokens": "cat.ntf", "mask": "cat_mask.ntf", "label": "cat"}]}

``mask`` is optional and names a rank-2 grid of weights in [0, 1].
"""

import json
import os
import struct
from pathlib import Path

import numpy as np

from .exceptions import ConfigurationError, FormatError
from .harness import Asset, AssetStore

MAGIC = b"NTF1"
DTYPE_F32 = 0
_HEADER = 6


def dumps_tensor(t):
    arr = np.ascontiguousarray(t, dtype="<f4")
    if arr.ndim > 255:
        raise FormatError(f"rank {arr.ndim} exceeds 255", 5)
    header = MAGIC + struct.pack("<BB", DTYPE_F32, arr.ndim)
    header += struct.pack(f"<{arr.ndim}Q", *arr.shape)
    return header + arr.tobytes()


def loads_tensor(buf):
    buf = bytes(buf)
    if len(buf) < 4 or buf[:4] != MAGIC:
        raise FormatError(f"bad magic {buf[:4]!r}, expected {MAGIC!r}", 0)
    if len(buf) < _HEADER:
        raise FormatError("truncated header", len(buf))
    dtype, rank = buf[4], buf[5]
    if dtype != DTYPE_F32:
        raise FormatError(f"unsupported dtype code {dtype}", 4)
    end = _HEADER + 8 * rank
    if len(buf) < end:
        raise FormatError(f"truncated extents: need {end} header bytes, have {len(buf)}",
                          len(buf))
    shape = struct.unpack(f"<{rank}Q", buf[_HEADER:end])
    expected = 4 * int(np.prod(shape, dtype=np.int64))
    actual = len(buf) - end
    if actual != expected:
        raise FormatError(
            f"payload length mismatch for shape {tuple(shape)}: expected {expected} "
            f"bytes, found {actual}", end)
    return np.frombuffer(buf, dtype="<f4", offset=end).astype(np.float32).reshape(shape)


def write_tensor(path, t):
    Path(path).write_bytes(dumps_tensor(t))


def read_tensor(path):
    return loads_tensor(Path(path).read_bytes())


def load_asset_store(directory):
    directory = Path(directory)
    manifest = directory / "manifest.json"
    try:
        spec = json.loads(manifest.read_text())
    except FileNotFoundError:
        raise ConfigurationError(f"asset store {directory} has no manifest.json")
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"invalid asset manifest {manifest}: {e}")
    entries = spec.get("assets") if isinstance(spec, dict) else None
    if not entries:
        raise ConfigurationError(f"asset manifest {manifest} lists no assets")
    assets = []
    for entry in entries:
        tokens = read_tensor(directory / entry["tokens"])
        if tokens.ndim != 2:
            raise ConfigurationError(f"asset {entry['tokens']} must be rank 2 (N_ref, D)")
        mask = entry.get("mask")
        mask2d = read_tensor(directory / mask) if mask else None
        assets.append(Asset(tokens, mask2d, entry.get("label", "")))
    return AssetStore(assets)


def save_asset_store(directory, store, names=None):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, asset in enumerate(store.assets):
        stem = names[i] if names else f"asset_{i:03d}"
        entry = {"tokens": f"{stem}.ntf", "label": asset.label}
        write_tensor(directory / entry["tokens"], asset.tokens)
        if asset.mask2d is not None:
            entry["mask"] = f"{stem}_mask.ntf"
            write_tensor(directory / entry["mask"], asset.mask2d)
        entries.append(entry)
    (directory / "manifest.json").write_text(json.dumps({"assets": entries}, indent=2) + "\n")


def thread_count():
    """Worker cap from ``NEGTOME_THREADS``; 0 or unset means one per CPU."""
    raw = os.environ.get("NEGTOME_THREADS", "0")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigurationError(f"NEGTOME_THREADS must be an integer, got {raw!r}")
    if n < 0:
        raise ConfigurationError("NEGTOME_THREADS must be >= 0")
    return n or (os.cpu_count() or 1)
