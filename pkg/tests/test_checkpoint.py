"""Checkpoint save/load: exact roundtrip and refusal of mismatched archives."""

import dataclasses
import json

import numpy as np
import pytest
import torch

from semvid.checkpoint import (FORMAT_TAG, MANIFEST_KEY, load_pair_checkpoint,
                               read_manifest, save_pair_checkpoint)
from semvid.config import config_hash
from semvid.errors import CheckpointError
from semvid.training import build_model_pair


def _tamper(src, dst, mutate):
    """Rewrite an npz archive after applying `mutate` to its entry dict."""
    with np.load(src, allow_pickle=False) as z:
        entries = {k: z[k] for k in z.files}
    mutate(entries)
    np.savez(dst, **entries)


def test_roundtrip_is_exact(tmp_path, tiny_model_cfg):
    pair = build_model_pair(tiny_model_cfg, seed=3)
    with torch.no_grad():  # move off the seeded init so equality is informative
        for p in pair.mentor.parameters():
            p.add_(torch.randn_like(p) * 0.01)
    path = tmp_path / "pair.npz"
    save_pair_checkpoint(str(path), pair, seed=3, note="unit test")
    loaded = load_pair_checkpoint(str(path), tiny_model_cfg)
    for model, got in ((pair.mentor, loaded.mentor),
                       (pair.student, loaded.student)):
        for (k, a), (k2, b) in zip(model.state_dict().items(),
                                   got.state_dict().items()):
            assert k == k2
            assert torch.equal(a, b), k


def test_manifest_contents(tmp_path, tiny_model_cfg):
    pair = build_model_pair(tiny_model_cfg, seed=9)
    path = tmp_path / "pair.npz"
    save_pair_checkpoint(str(path), pair, seed=9, note="hello")
    m = read_manifest(str(path))
    assert m["format"] == FORMAT_TAG
    assert m["config_hash"] == config_hash(tiny_model_cfg)
    assert m["seed"] == 9 and m["note"] == "hello"
    assert m["models"]["mentor"]["encoding_length"] == tiny_model_cfg.dynamic_len
    assert m["models"]["student"]["encoding_length"] == tiny_model_cfg.static_len
    assert m["share_extractor"] is False


def test_shared_extractor_survives_roundtrip(tmp_path, tiny_model_cfg):
    pair = build_model_pair(tiny_model_cfg, seed=1, share_extractor=True)
    path = tmp_path / "shared.npz"
    save_pair_checkpoint(str(path), pair)
    loaded = load_pair_checkpoint(str(path), tiny_model_cfg)
    assert loaded.student.extractor is loaded.mentor.extractor


def test_rejects_config_mismatch(tmp_path, tiny_model_cfg):
    pair = build_model_pair(tiny_model_cfg, seed=0)
    path = tmp_path / "pair.npz"
    save_pair_checkpoint(str(path), pair)
    other = dataclasses.replace(tiny_model_cfg, token_dim=32)
    with pytest.raises(CheckpointError, match="config"):
        load_pair_checkpoint(str(path), other)


def test_rejects_non_pair(tmp_path):
    with pytest.raises(CheckpointError):
        save_pair_checkpoint(str(tmp_path / "x.npz"), torch.nn.Linear(2, 2))


def test_rejects_missing_file(tmp_path, tiny_model_cfg):
    with pytest.raises(CheckpointError):
        load_pair_checkpoint(str(tmp_path / "absent.npz"), tiny_model_cfg)


def test_rejects_garbage_file(tmp_path):
    path = tmp_path / "garbage.npz"
    path.write_text("not an archive")
    with pytest.raises(CheckpointError):
        read_manifest(str(path))


def test_rejects_unknown_format(tmp_path, tiny_model_cfg):
    pair = build_model_pair(tiny_model_cfg, seed=0)
    src = tmp_path / "pair.npz"
    save_pair_checkpoint(str(src), pair)
    bad = tmp_path / "bad.npz"

    def swap_format(entries):
        m = json.loads(str(entries[MANIFEST_KEY]))
        m["format"] = "bogus-v0"
        entries[MANIFEST_KEY] = np.array(json.dumps(m))

    _tamper(str(src), str(bad), swap_format)
    with pytest.raises(CheckpointError, match="format"):
        load_pair_checkpoint(str(bad), tiny_model_cfg)


def test_rejects_missing_array(tmp_path, tiny_model_cfg):
    pair = build_model_pair(tiny_model_cfg, seed=0)
    src = tmp_path / "pair.npz"
    save_pair_checkpoint(str(src), pair)
    bad = tmp_path / "missing.npz"
    victim = [None]

    def drop_one(entries):
        victim[0] = next(k for k in entries if k.startswith("mentor/"))
        del entries[victim[0]]

    _tamper(str(src), str(bad), drop_one)
    with pytest.raises(CheckpointError, match="missing array"):
        load_pair_checkpoint(str(bad), tiny_model_cfg)


def test_rejects_wrong_shape(tmp_path, tiny_model_cfg):
    pair = build_model_pair(tiny_model_cfg, seed=0)
    src = tmp_path / "pair.npz"
    save_pair_checkpoint(str(src), pair)
    bad = tmp_path / "shape.npz"

    def truncate_one(entries):
        key = next(k for k in entries if k.startswith("student/"))
        entries[key] = entries[key].ravel()[:-1]

    _tamper(str(src), str(bad), truncate_one)
    with pytest.raises(CheckpointError, match="shape"):
        load_pair_checkpoint(str(bad), tiny_model_cfg)
