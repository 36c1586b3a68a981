"""Frame container, loading, persistence, and geometry checks."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from semvid.errors import FrameError
from semvid.frames import (DYNAMIC, STATIC, Frame, VideoSequence, from_array,
                           load_frames, sample_one_fps, save_frames,
                           validate_geometry)


def test_frame_casts_to_float32():
    f = Frame(np.zeros((4, 4, 3), dtype=np.float64), index=1)
    assert f.pixels.dtype == np.float32
    assert f.shape == (4, 4, 3)
    assert f.source_bandwidth == 48


def test_frame_rejects_out_of_range():
    with pytest.raises(FrameError):
        Frame(np.full((2, 2, 1), 1.5, dtype=np.float32), index=1)
    with pytest.raises(FrameError):
        Frame(np.full((2, 2, 1), -0.1, dtype=np.float32), index=1)


def test_frame_rejects_bad_rank():
    with pytest.raises(FrameError):
        Frame(np.zeros((4, 4), dtype=np.float32), index=1)


def test_video_enforces_contiguous_indices():
    a = np.zeros((4, 4, 3), dtype=np.float32)
    with pytest.raises(FrameError):
        VideoSequence([Frame(a, 1), Frame(a, 3)])


def test_video_enforces_uniform_shape():
    with pytest.raises(FrameError):
        VideoSequence([Frame(np.zeros((4, 4, 3), np.float32), 1),
                       Frame(np.zeros((8, 8, 3), np.float32), 2)])


def test_from_array_roundtrip(small_video):
    stack = small_video.pixel_array()
    again = from_array(stack)
    assert len(again) == len(small_video)
    np.testing.assert_array_equal(again.pixel_array(), stack)


def test_labels_length_checked():
    a = np.zeros((4, 4, 3), dtype=np.float32)
    with pytest.raises(FrameError):
        VideoSequence([Frame(a, 1)], labels=[STATIC, DYNAMIC])


def test_save_load_png_dir(tmp_path, small_video):
    save_frames(small_video, tmp_path / "vid")
    back = load_frames(tmp_path / "vid")
    assert len(back) == 5
    # 8-bit quantization: within half a level
    err = np.abs(back.pixel_array() - small_video.pixel_array()).max()
    assert err <= 0.5 / 255.0 + 1e-7


def test_save_load_raw_dump_exact(tmp_path, small_video):
    save_frames(small_video, tmp_path / "vid.bin")
    back = load_frames(tmp_path / "vid.bin")
    np.testing.assert_array_equal(back.pixel_array(), small_video.pixel_array())


def test_load_missing_path_raises(tmp_path):
    with pytest.raises(FrameError):
        load_frames(tmp_path / "nope")


def test_load_truncated_raw_dump(tmp_path):
    p = tmp_path / "bad.bin"
    p.write_bytes(b"\x01\x02")
    with pytest.raises(FrameError):
        load_frames(p)


def test_resize_area_exact_block_mean(tmp_path, rng):
    stack = rng.uniform(size=(1, 8, 8, 3)).astype(np.float32)
    save_frames(from_array(stack), tmp_path / "vid.bin")
    back = load_frames(tmp_path / "vid.bin", target_size=(4, 4))
    want = stack.reshape(1, 4, 2, 4, 2, 3).mean(axis=(2, 4))
    np.testing.assert_allclose(back.pixel_array(), want, atol=1e-6)


def test_sample_one_fps():
    stack = np.linspace(0, 1, 10)[:, None, None, None] * np.ones((10, 4, 4, 1), np.float32)
    video = from_array(stack.astype(np.float32), fps_source=3.0)
    out = sample_one_fps(video)
    assert len(out) == 4  # frames 0, 3, 6, 9
    assert [f.index for f in out] == [1, 2, 3, 4]
    np.testing.assert_allclose(out.frames[1].pixels, stack[3], atol=1e-6)


def test_sample_one_fps_requires_fps():
    video = from_array(np.zeros((3, 4, 4, 1), np.float32))
    with pytest.raises(FrameError):
        sample_one_fps(video)


def test_validate_geometry():
    video = from_array(np.zeros((1, 16, 16, 3), np.float32))
    validate_geometry(video, patch=4, regions_per_side=2)
    with pytest.raises(FrameError):
        validate_geometry(video, patch=5, regions_per_side=2)
    with pytest.raises(FrameError):
        validate_geometry(video, patch=4, regions_per_side=3)


@settings(max_examples=25, deadline=None)
@given(v=st.integers(1, 4), h=st.integers(1, 6), w=st.integers(1, 6),
       c=st.sampled_from([1, 3]))
def test_raw_dump_roundtrip_property(tmp_path_factory, v, h, w, c):
    rng = np.random.default_rng(v * 1000 + h * 100 + w * 10 + c)
    stack = rng.uniform(size=(v, h, w, c)).astype(np.float32)
    p = tmp_path_factory.mktemp("raw") / "x.bin"
    save_frames(from_array(stack), p)
    np.testing.assert_array_equal(load_frames(p).pixel_array(), stack)


def test_load_frames_int_target_means_square(tmp_path):
    stack = np.full((2, 32, 32, 3), 0.5, np.float32)
    p = tmp_path / "dump.bin"
    save_frames(from_array(stack), p)
    out = load_frames(p, target_size=16)
    assert out.shape == (16, 16, 3)
    tup = load_frames(p, target_size=(16, 16))
    np.testing.assert_array_equal(out.pixel_array(), tup.pixel_array())
