"""Parameter checkpoints: a JSON map {name -> shape + row-major values}.

Keys are written in sorted order so checkpoints diff cleanly.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .autodiff import Tensor
from .errors import DataError


def save_params(path, params: dict[str, Tensor]) -> None:
    entries = {
        name: {"shape": list(t.shape), "data": t.data.ravel().tolist()}
        for name, t in params.items()
    }
    Path(path).write_text(json.dumps(entries, sort_keys=True))


def load_params(path) -> dict[str, np.ndarray]:
    try:
        entries = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"malformed checkpoint {path}: {exc}") from exc
    out = {}
    for name, entry in entries.items():
        shape = tuple(entry["shape"])
        arr = np.array(entry["data"], dtype=np.float64).reshape(shape)
        out[name] = arr
    return out


def restore_params(path, params: dict[str, Tensor]) -> None:
    """Load a checkpoint into existing parameter tensors, in place."""
    loaded = load_params(path)
    missing = set(params) - set(loaded)
    extra = set(loaded) - set(params)
    if missing or extra:
        raise DataError(f"checkpoint mismatch: missing={sorted(missing)} extra={sorted(extra)}")
    for name, t in params.items():
        if loaded[name].shape != t.shape:
            raise DataError(f"checkpoint shape mismatch for {name}: "
                            f"{loaded[name].shape} != {t.shape}")
        t.data[...] = loaded[name]
