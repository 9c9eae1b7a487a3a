"""Small helpers shared across stages: seed derivation, hashing, atomic writes."""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from pathlib import Path
from typing import Any


def derive_seed(master: int, stage: str, index: int = 0) -> int:
    """Derive a child seed from the master seed, a stage name and an index.

    The derivation is ``sha256(f"{master}:{stage}:{index}")`` truncated to
    63 bits, so any stage can be rerun in isolation and get the same stream.
    """
    digest = hashlib.sha256(f"{master}:{stage}:{index}".encode()).digest()
    return int.from_bytes(digest[:8], "big") >> 1


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), default=str)


def hash_obj(obj: Any) -> str:
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()


def file_digest(path: str | os.PathLike) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def atomic_write_bytes(path: str | os.PathLike, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: str | os.PathLike, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def write_json(path: str | os.PathLike, obj: Any) -> None:
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def month_bounds(baseline, months: int):
    """Epoch-second boundaries counted back from ``baseline`` in calendar
    months. Month ``k`` (1-based) spans ``[b[k], b[k-1])``."""
    import numpy as np
    import pandas as pd

    base = pd.Timestamp(baseline)
    base = base.tz_localize("UTC") if base.tzinfo is None else base.tz_convert("UTC")
    return np.array([(base - pd.DateOffset(months=k)).value // 10**9 for k in range(months + 1)],
                    dtype=np.int64)


def utc_timestamp(value):
    import pandas as pd

    ts = pd.Timestamp(value)
    return ts.tz_localize("UTC") if ts.tzinfo is None else ts.tz_convert("UTC")
