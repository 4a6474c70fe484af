"""Checkpoint files: text key-value header, then raw little-endian float64.

Layout::

    refgame-checkpoint v1
    meta <key> <json value>          # repeated; at least role, seed, config
    param <name> <dim0> <dim1> ...   # one line per tensor, payload order
    end-header
    <float64 little-endian payloads, concatenated in param-line order>

Round-trips are bit-exact: payloads are written with ``tobytes()`` and read
back with ``frombuffer``.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..util import atomic_write_bytes
from .tensor import Tensor

MAGIC = "refgame-checkpoint v1"


def save_params(path: str | Path, params: dict[str, Tensor],
                meta: dict[str, object]) -> None:
    lines = [MAGIC]
    for key in meta:
        lines.append(f"meta {key} {json.dumps(meta[key], sort_keys=True)}")
    payloads = []
    for name, p in params.items():
        if " " in name:
            raise ValueError(f"parameter name {name!r} may not contain spaces")
        dims = " ".join(str(d) for d in p.data.shape)
        lines.append(f"param {name} {dims}".rstrip())
        payloads.append(np.ascontiguousarray(p.data, dtype="<f8").tobytes())
    header = "\n".join(lines) + "\nend-header\n"
    atomic_write_bytes(path, header.encode("utf-8") + b"".join(payloads))


def load_params(path: str | Path,
                requires_grad: bool = True) -> tuple[dict[str, Tensor], dict[str, object]]:
    blob = Path(path).read_bytes()
    marker = b"end-header\n"
    cut = blob.find(marker)
    if cut < 0:
        raise ValueError(f"{path}: missing end-header marker")
    header = blob[:cut].decode("utf-8").splitlines()
    if not header or header[0] != MAGIC:
        raise ValueError(f"{path}: not a {MAGIC} file")
    meta: dict[str, object] = {}
    shapes: list[tuple[str, tuple[int, ...]]] = []
    for line in header[1:]:
        kind, rest = line.split(" ", 1)
        if kind == "meta":
            key, value = rest.split(" ", 1)
            meta[key] = json.loads(value)
        elif kind == "param":
            parts = rest.split(" ")
            shapes.append((parts[0], tuple(int(d) for d in parts[1:])))
        else:
            raise ValueError(f"{path}: unknown header line {line!r}")
    params: dict[str, Tensor] = {}
    offset = cut + len(marker)
    for name, shape in shapes:
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(blob, dtype="<f8", count=count, offset=offset)
        offset += count * 8
        params[name] = Tensor(arr.reshape(shape).copy(), requires_grad=requires_grad)
    if offset != len(blob):
        raise ValueError(f"{path}: {len(blob) - offset} trailing payload bytes")
    return params, meta
