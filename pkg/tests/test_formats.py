"""Binary containers: VOLCACHE arrays, parameter checkpoints, NIfTI, and the volume cache."""
import os
import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from volnorm import nifti, volcache
from volnorm.cli import VolumeCache, sha256_file
from volnorm.errors import MalformedHeader, TruncatedData
from volnorm.isgen import IsGenModel
from volnorm.tensorkit.checkpoint import decode_params, encode_params, load_params, save_params
from volnorm.volume import Mask3D, Orientation, Volume3D

f32 = hnp.arrays(np.float32, hnp.array_shapes(min_dims=0, max_dims=4, max_side=6),
                 elements=st.floats(width=32, allow_nan=False))


# -- VOLCACHE ----------------------------------------------------------------

@given(f32)
def test_volcache_bit_exact(arr):
    back = volcache.decode_array(volcache.encode_array(arr))
    assert back.dtype == np.float32 and back.shape == arr.shape
    assert back.tobytes() == arr.tobytes()


def test_volcache_layout():
    arr = np.arange(6, dtype=np.float32).reshape(2, 3)
    blob = volcache.encode_array(arr)
    assert blob[:8] == b"VOLCACHE"
    assert struct.unpack_from("<BB2I", blob, 8) == (1, 2, 2, 3)
    assert np.frombuffer(blob[18:], "<f4").tolist() == list(range(6))


def test_volcache_file_round_trip(tmp_path):
    arr = np.random.default_rng(0).normal(size=(128, 16, 16)).astype(np.float32)
    volcache.save_array(arr, tmp_path / "a.volcache")
    assert volcache.load_array(tmp_path / "a.volcache").tobytes() == arr.tobytes()
    assert os.listdir(tmp_path) == ["a.volcache"]  # no temp file left behind


def test_volcache_errors():
    blob = volcache.encode_array(np.ones((3, 4), np.float32))
    with pytest.raises(MalformedHeader):
        volcache.decode_array(b"NOTCACHE" + blob[8:])
    with pytest.raises(MalformedHeader):
        volcache.decode_array(blob[:8] + b"\x02" + blob[9:])
    with pytest.raises(TruncatedData):
        volcache.decode_array(blob[:-1])
    with pytest.raises(TruncatedData):
        volcache.decode_array(blob + b"\0\0\0\0")
    with pytest.raises(TruncatedData):
        volcache.decode_array(blob[:13])
    with pytest.raises(MalformedHeader):
        volcache.decode_array(b"VOL")


# -- checkpoints -------------------------------------------------------------

def test_params_bit_exact(tmp_path):
    rng = np.random.default_rng(1)
    params = {"g.w0": rng.normal(size=(16, 1, 4, 4)).astype(np.float32),
              "g.b0": rng.normal(size=16).astype(np.float32),
              "meta.x": np.float32(3.5) * np.ones(())}
    assert {k: v.tobytes() for k, v in decode_params(encode_params(params)).items()} == \
        {k: np.asarray(v, np.float32).tobytes() for k, v in params.items()}
    save_params(params, tmp_path / "p.ckpt")
    back = load_params(tmp_path / "p.ckpt")
    assert list(back) == list(params)
    for k in params:
        assert back[k].shape == np.shape(params[k])
        assert back[k].tobytes() == np.asarray(params[k], np.float32).tobytes()


def test_model_checkpoint_rewrite_is_byte_identical(tmp_path):
    m = IsGenModel.create(16, seed=3)
    m.save(tmp_path / "a.ckpt")
    IsGenModel.load(tmp_path / "a.ckpt").save(tmp_path / "b.ckpt")
    assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()


# -- NIfTI -------------------------------------------------------------------

@pytest.mark.parametrize("orientation", list(Orientation))
def test_nifti_bit_exact(tmp_path, orientation):
    data = np.random.default_rng(2).gamma(2.0, 50.0, size=(5, 7, 9)).astype(np.float32)
    vol = Volume3D(data, (3.0, 0.5, 0.75), orientation, "T2w")
    nifti.write_nifti(vol, tmp_path / "v.nii")
    back = nifti.read_nifti(tmp_path / "v.nii")
    assert back.data.tobytes() == data.tobytes()
    assert back.spacing == vol.spacing and back.orientation == orientation
    nifti.write_nifti(back, tmp_path / "w.nii")
    assert (tmp_path / "v.nii").read_bytes() == (tmp_path / "w.nii").read_bytes()


def test_nifti_mask_bit_exact(tmp_path):
    m = Mask3D(np.random.default_rng(3).random((4, 6, 6)) > 0.5, (1.0, 1.0, 2.0), Orientation.CORONAL)
    nifti.write_mask(m, tmp_path / "m.nii")
    back = nifti.read_mask(tmp_path / "m.nii")
    np.testing.assert_array_equal(back.data, m.data)


# -- volume cache ------------------------------------------------------------

@pytest.fixture
def cached(tmp_path):
    src = tmp_path / "input.nii"
    src.write_bytes(b"input")
    cache = VolumeCache(tmp_path / "cache")
    arr = np.random.default_rng(4).normal(size=(4, 4, 4)).astype(np.float32)
    cache.store("k", arr)
    return cache, src, arr


def test_cache_hit(cached):
    cache, src, arr = cached
    assert cache.lookup("k", src).tobytes() == arr.tobytes()
    assert cache.lookup("other", src) is None


def test_cache_corruption_is_a_miss(cached):
    cache, src, _ = cached
    entry = cache.root / "k.volcache"
    blob = bytearray(entry.read_bytes())
    blob[-1] ^= 0xFF
    entry.write_bytes(bytes(blob))
    assert cache.lookup("k", src) is None


def test_cache_truncated_entry_with_matching_digest_is_a_miss(cached):
    cache, src, _ = cached
    entry = cache.root / "k.volcache"
    entry.write_bytes(entry.read_bytes()[:20])
    (cache.root / "k.sha256").write_text(sha256_file(entry))
    assert cache.lookup("k", src) is None


def test_cache_stale_entry_is_a_miss(cached):
    cache, src, _ = cached
    entry = cache.root / "k.volcache"
    t = entry.stat().st_mtime
    os.utime(src, (t + 10, t + 10))
    assert cache.lookup("k", src) is None


def test_cache_missing_digest_is_a_miss(cached):
    cache, src, _ = cached
    (cache.root / "k.sha256").unlink()
    assert cache.lookup("k", src) is None
