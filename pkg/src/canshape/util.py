"""Shared helpers: named RNG streams and atomic file writes."""

from __future__ import annotations

import hashlib
import os
import tempfile
from pathlib import Path

import numpy as np


def named_seed(run_seed: int, name: str) -> np.random.SeedSequence:
    """Derive an independent seed stream from a run seed and a label.

    The label is hashed so that streams stay decoupled no matter how the
    caller spells them; the same (run_seed, name) pair always yields the
    same stream, which is what makes whole runs replayable from one seed.
    """
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    words = [int.from_bytes(digest[i : i + 4], "big") for i in range(0, 16, 4)]
    return np.random.SeedSequence(entropy=run_seed, spawn_key=tuple(words))


def named_rng(run_seed: int, name: str) -> np.random.Generator:
    return np.random.default_rng(named_seed(run_seed, name))


def atomic_write_text(path: str | Path, text: str) -> None:
    """Write text so a crash never leaves a half-written artifact behind."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def fmt_float(x: float) -> str:
    """Shortest decimal string that round-trips the float exactly."""
    return repr(float(x))
