"""Weights files, embedding files and run manifests.

Weights are stored as an ``.npz`` flat map name -> array (each entry carries
its own shape/dtype header) plus a ``__meta__`` JSON entry for configs and
counters. The same container backs encoder weights, VAE weights and diffusion
checkpoints.
"""

from __future__ import annotations

import hashlib
import json
import subprocess
from pathlib import Path

import numpy as np

from .errors import IntegrityError

META_KEY = "__meta__"


def save_weights(path: str | Path, arrays: dict[str, np.ndarray], meta: dict | None = None) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = dict(arrays)
    if META_KEY in payload:
        raise ValueError(f"{META_KEY} is reserved")
    blob = json.dumps(meta or {}, sort_keys=True).encode()
    payload[META_KEY] = np.frombuffer(blob, dtype=np.uint8)
    np.savez(path, **payload)


def load_weights(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    path = Path(path)
    if not path.exists():
        raise IntegrityError(f"weights file not found: {path}")
    with np.load(path) as data:
        arrays = {k: data[k] for k in data.files if k != META_KEY}
        meta = json.loads(bytes(data[META_KEY]).decode()) if META_KEY in data.files else {}
    return arrays, meta


def file_sha256(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def save_embeddings(path: str | Path, ids: list[str], tokens: np.ndarray, encoder_id: str) -> None:
    """Store (id -> global-condition tokens) records, one stacked array."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savez(
        path,
        ids=np.asarray(ids, dtype=object),
        tokens=np.asarray(tokens, dtype=np.float32),
        encoder_id=np.frombuffer(encoder_id.encode(), dtype=np.uint8),
    )


def load_embeddings(path: str | Path) -> tuple[list[str], np.ndarray, str]:
    with np.load(path, allow_pickle=True) as data:
        ids = [str(v) for v in data["ids"]]
        tokens = data["tokens"]
        encoder_id = bytes(data["encoder_id"]).decode()
    return ids, tokens, encoder_id


def _git_state(cwd: str | Path | None = None) -> str:
    try:
        head = subprocess.run(
            ["git", "rev-parse", "HEAD"],
            capture_output=True, text=True, cwd=cwd, timeout=5,
        )
        if head.returncode != 0:
            return "unknown"
        dirty = subprocess.run(
            ["git", "status", "--porcelain"],
            capture_output=True, text=True, cwd=cwd, timeout=5,
        )
        suffix = "-dirty" if dirty.stdout.strip() else ""
        return head.stdout.strip() + suffix
    except (OSError, subprocess.TimeoutExpired):
        return "unknown"


def write_run_manifest(
    out_dir: str | Path,
    command: str,
    config: dict,
    seeds: dict,
    filename: str = "run_manifest.json",
) -> dict:
    """Record enough to replay a run: config hash, seeds, git state, versions."""
    import torch

    from . import __version__

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    config_blob = json.dumps(config, sort_keys=True, default=str)
    manifest = {
        "command": command,
        "config": config,
        "config_sha256": hashlib.sha256(config_blob.encode()).hexdigest(),
        "seeds": seeds,
        "git_state": _git_state(),
        "versions": {
            "embdiff": __version__,
            "numpy": np.__version__,
            "torch": torch.__version__,
        },
    }
    (out_dir / filename).write_text(json.dumps(manifest, indent=2, default=str))
    return manifest


def write_file_manifest(out_file: str | Path, command: str, config: dict, seeds: dict) -> dict:
    """Sidecar manifest for commands whose output is a single file."""
    out_file = Path(out_file)
    return write_run_manifest(
        out_file.parent, command, config, seeds, filename=out_file.name + ".manifest.json"
    )
