"""Flat binary checkpoints: little-endian float64 blob plus a JSON manifest."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..errors import ContractError, DimensionError

FORMAT = "cnfgnn-f64le-v1"


def save_arrays(path, arrays: dict[str, np.ndarray]) -> Path:
    """Write ``path.bin`` and ``path.json``; entries keep insertion order."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    entries, offset = [], 0
    with open(path.with_suffix(".bin"), "wb") as f:
        for name, a in arrays.items():
            a = np.asarray(a, dtype="<f8")
            f.write(a.tobytes())
            entries.append({"name": name, "shape": list(a.shape), "offset": offset})
            offset += a.nbytes
    manifest = {"format": FORMAT, "nbytes": offset, "entries": entries}
    path.with_suffix(".json").write_text(json.dumps(manifest, indent=1) + "\n")
    return path


def load_arrays(path) -> dict[str, np.ndarray]:
    path = Path(path)
    manifest = json.loads(path.with_suffix(".json").read_text())
    if manifest.get("format") != FORMAT:
        raise ContractError(f"{path}: unknown checkpoint format {manifest.get('format')!r}")
    blob = path.with_suffix(".bin").read_bytes()
    if len(blob) != manifest["nbytes"]:
        raise DimensionError(f"{path}: expected {manifest['nbytes']} bytes, found {len(blob)}")
    out = {}
    for e in manifest["entries"]:
        count = int(np.prod(e["shape"], dtype=np.int64))
        a = np.frombuffer(blob, dtype="<f8", count=count, offset=e["offset"])
        out[e["name"]] = a.reshape(e["shape"]).astype(np.float64)
    return out


def save_run_state(directory, state) -> None:
    """Node weights and, when present, the GN weights of a finished run."""
    directory = Path(directory)
    save_arrays(directory / "nodes", {k: t.data for k, t in state.pool.params.items()})
    if state.server is not None:
        save_arrays(directory / "gn", dict((n, t.data) for n, t in state.server.gn.named_parameters()))


def restore_run_state(directory, state) -> None:
    directory = Path(directory)
    nodes = load_arrays(directory / "nodes")
    for k, t in state.pool.params.items():
        if nodes[k].shape != t.data.shape:
            raise DimensionError(f"checkpoint {k} has shape {nodes[k].shape}, model expects {t.data.shape}")
        t.data = nodes[k]
    if state.server is not None:
        gn = load_arrays(directory / "gn")
        for n, t in state.server.gn.named_parameters():
            t.data = gn[n]
