"""Small shared helpers: atomic file writes, tagged RNG construction, and an
allocator tweak for the training hot loop."""

from __future__ import annotations

import ctypes
import os
import tempfile
from pathlib import Path

import numpy as np

_allocator_tuned = False


def tune_allocator() -> None:
    """Keep large malloc blocks on the heap instead of mmap/munmap cycles.

    The training loop allocates multi-megabyte im2col buffers every batch;
    with glibc's default mmap threshold each one page-faults from scratch,
    which dominates runtime in some sandboxed environments. Best effort and
    idempotent; silently does nothing off glibc.
    """
    global _allocator_tuned
    if _allocator_tuned:
        return
    _allocator_tuned = True
    try:
        libc = ctypes.CDLL("libc.so.6")
        libc.mallopt(-4, 0)  # M_MMAP_MAX = 0
        libc.mallopt(-1, 2 ** 31 - 1)  # M_TRIM_THRESHOLD = max
    except (OSError, AttributeError):
        pass


def atomic_write_bytes(path: str | os.PathLike, data: bytes) -> None:
    """Write via a temp file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: str | os.PathLike, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def rng_from(seed: int, *tags: int) -> np.random.Generator:
    """Deterministic generator keyed by a seed plus integer stream tags."""
    return np.random.default_rng([int(seed) & 0xFFFFFFFF, *[int(t) for t in tags]])
