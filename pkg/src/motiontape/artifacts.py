"""Self-describing artifact container for trained models.

A single ``.npz`` file holds a versioned JSON header (config, training log,
metadata) plus named parameter arrays, so artifacts can be inspected
without importing torch.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import DataError

ARTIFACT_FORMAT = "motiontape-artifact"
ARTIFACT_VERSION = 1


def write_artifact(path, kind: str, config: dict, training_log: list,
                   metadata: dict, arrays: dict) -> None:
    header = {
        "format": ARTIFACT_FORMAT,
        "version": ARTIFACT_VERSION,
        "kind": kind,
        "config": config,
        "training_log": list(training_log),
        "metadata": metadata,
    }
    payload = np.frombuffer(json.dumps(header).encode("utf-8"), dtype=np.uint8)
    named = {f"param:{k}": np.asarray(v) for k, v in arrays.items()}
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savez(path, header=payload, **named)


def read_artifact(path):
    """Returns (header dict, {name: array})."""
    path = Path(path)
    with np.load(path if path.suffix == ".npz" else path.with_suffix(".npz"),
                 allow_pickle=False) as data:
        header = json.loads(bytes(data["header"].tobytes()).decode("utf-8"))
        if header.get("format") != ARTIFACT_FORMAT:
            raise DataError(f"{path}: not a motiontape artifact")
        if header.get("version") != ARTIFACT_VERSION:
            raise DataError(f"{path}: unsupported artifact version {header.get('version')}")
        arrays = {k[len("param:"):]: data[k] for k in data.files if k.startswith("param:")}
    return header, arrays
