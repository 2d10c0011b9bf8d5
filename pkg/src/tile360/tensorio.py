"""Named-tensor container used for every checkpoint in the package.

A checkpoint ``NAME`` is two files:

* ``NAME.bin``: the tensors back to back as little-endian float64, C order.
* ``NAME.idx``: one line per tensor, ``name offset_bytes d0,d1,...``
  (an empty shape field means a scalar), preceded by ``#`` comment lines
  carrying free-form ``key=value`` metadata.
"""

from __future__ import annotations

from pathlib import Path
from typing import Mapping

import numpy as np


def _paths(path: str | Path) -> tuple[Path, Path]:
    p = Path(path)
    if p.suffix in (".bin", ".idx"):
        p = p.with_suffix("")
    return p.with_name(p.name + ".bin"), p.with_name(p.name + ".idx")


def save_tensors(path: str | Path, tensors: Mapping[str, np.ndarray], meta: Mapping[str, str] | None = None) -> None:
    bin_path, idx_path = _paths(path)
    bin_path.parent.mkdir(parents=True, exist_ok=True)
    offset = 0
    lines = [f"# {k}={v}" for k, v in (meta or {}).items()]
    with open(bin_path, "wb") as fh:
        for name, arr in tensors.items():
            if any(c.isspace() for c in name):
                raise ValueError(f"tensor name {name!r} contains whitespace")
            a = np.ascontiguousarray(arr, dtype="<f8")
            fh.write(a.tobytes())
            lines.append(f"{name} {offset} {','.join(str(d) for d in a.shape)}")
            offset += a.nbytes
    idx_path.write_text("\n".join(lines) + "\n")


def load_tensors(path: str | Path) -> tuple[dict[str, np.ndarray], dict[str, str]]:
    bin_path, idx_path = _paths(path)
    raw = bin_path.read_bytes()
    tensors: dict[str, np.ndarray] = {}
    meta: dict[str, str] = {}
    for line in idx_path.read_text().splitlines():
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition("=")
            meta[key] = value
            continue
        if not line.strip():
            continue
        parts = line.split()
        name, offset = parts[0], int(parts[1])
        shape = tuple(int(d) for d in parts[2].split(",")) if len(parts) > 2 and parts[2] else ()
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(raw, dtype="<f8", count=count, offset=offset).reshape(shape)
        tensors[name] = arr.astype(np.float64)
    return tensors, meta
