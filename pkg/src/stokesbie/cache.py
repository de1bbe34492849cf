"""Disk cache for precomputed operators.

Entries are .npz files keyed by a sha256 of the shape discretization and
QBX parameters, version-tagged so stale layouts are ignored.  The directory
comes from the STOKESBIE_CACHE environment variable, falling back to
~/.cache/stokesbie.
"""

from __future__ import annotations

import hashlib
import os
from pathlib import Path

import numpy as np

LAYOUT_VERSION = 1


def cache_root() -> Path:
    env = os.environ.get("STOKESBIE_CACHE")
    if env:
        return Path(env)
    return Path.home() / ".cache" / "stokesbie"


def _path(key: str) -> Path:
    digest = hashlib.sha256(key.encode()).hexdigest()[:32]
    return cache_root() / f"{digest}.npz"


def load(key: str) -> dict | None:
    path = _path(key)
    if not path.exists():
        return None
    try:
        with np.load(path, allow_pickle=False) as data:
            if int(data["__version__"]) != LAYOUT_VERSION:
                return None
            if str(data["__key__"]) != key:
                return None
            return {k: data[k] for k in data.files if not k.startswith("__")}
    except Exception:
        return None


def store(key: str, **arrays) -> None:
    root = cache_root()
    root.mkdir(parents=True, exist_ok=True)
    path = _path(key)
    tmp = path.with_suffix(".tmp.npz")
    np.savez(
        tmp,
        __version__=np.array(LAYOUT_VERSION),
        __key__=np.array(key),
        **arrays,
    )
    os.replace(tmp, path)
