"""Checkpoint container: one npz archive holding a mentor/student pair.

The archive stores every parameter tensor under a model-prefixed key plus a
JSON manifest (format tag, model metadata, seed, note, and a hash of the
model configuration). The hash is checked at load so a checkpoint can never
be silently applied to a mismatched architecture.
"""

from __future__ import annotations

import io
import json
import os

import numpy as np
import torch

from .config import ModelConfig, config_hash
from .errors import CheckpointError

FORMAT_TAG = "semvid-pair-v1"
MANIFEST_KEY = "__manifest__"


def _state_arrays(model: torch.nn.Module, prefix: str) -> dict[str, np.ndarray]:
    return {f"{prefix}/{k}": v.detach().cpu().numpy()
            for k, v in model.state_dict().items()}


def save_pair_checkpoint(path: str, pair, *, seed: int | None = None,
                         note: str = "") -> None:
    from .training import ModelPair  # local import; training imports this module
    if not isinstance(pair, ModelPair):
        raise CheckpointError("can only checkpoint a ModelPair")
    cfg = pair.mentor.cfg
    shared = pair.mentor.extractor is pair.student.extractor
    arrays = _state_arrays(pair.mentor, "mentor")
    arrays.update(_state_arrays(pair.student, "student"))
    manifest = {
        "format": FORMAT_TAG,
        "config_hash": config_hash(cfg),
        "seed": seed,
        "note": note,
        "share_extractor": shared,
        "models": {
            "mentor": {"cr_tag": pair.mentor.cr.tag,
                       "encoding_length": pair.mentor.cr.encoding_length},
            "student": {"cr_tag": pair.student.cr.tag,
                        "encoding_length": pair.student.cr.encoding_length},
        },
        "shapes": {k: list(v.shape) for k, v in arrays.items()},
    }
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    buf = io.BytesIO()
    np.savez(buf, **{MANIFEST_KEY: np.array(json.dumps(manifest)), **arrays})
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def read_manifest(path: str) -> dict:
    try:
        with np.load(path, allow_pickle=False) as z:
            if MANIFEST_KEY not in z:
                raise CheckpointError(f"{path}: no manifest entry")
            return json.loads(str(z[MANIFEST_KEY]))
    except (OSError, ValueError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc


def load_pair_checkpoint(path: str, model_cfg: ModelConfig):
    """Rebuild a ModelPair from an archive, verifying format, config hash,
    and every tensor shape."""
    from .training import ModelPair, build_model_pair
    manifest = read_manifest(path)
    if manifest.get("format") != FORMAT_TAG:
        raise CheckpointError(f"{path}: unknown checkpoint format "
                              f"{manifest.get('format')!r}")
    want_hash = config_hash(model_cfg)
    if manifest.get("config_hash") != want_hash:
        raise CheckpointError(
            f"{path}: checkpoint was written for config {manifest.get('config_hash')}"
            f" but this run uses {want_hash}")
    lens = manifest.get("models", {})
    if lens.get("mentor", {}).get("encoding_length") != model_cfg.dynamic_len or \
            lens.get("student", {}).get("encoding_length") != model_cfg.static_len:
        raise CheckpointError(f"{path}: encoding lengths disagree with config")
    pair = build_model_pair(model_cfg, seed=int(manifest.get("seed") or 0),
                            share_extractor=bool(manifest.get("share_extractor")))
    with np.load(path, allow_pickle=False) as z:
        for prefix, model in (("mentor", pair.mentor), ("student", pair.student)):
            state = {}
            for key, tensor in model.state_dict().items():
                full = f"{prefix}/{key}"
                if full not in z:
                    raise CheckpointError(f"{path}: missing array {full}")
                arr = z[full]
                if tuple(arr.shape) != tuple(tensor.shape):
                    raise CheckpointError(
                        f"{path}: {full} has shape {arr.shape}, "
                        f"expected {tuple(tensor.shape)}")
                state[key] = torch.as_tensor(arr)
            model.load_state_dict(state)
    assert isinstance(pair, ModelPair)
    return pair
