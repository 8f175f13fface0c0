import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from volnorm.errors import LengthMismatch, ModelMissing, ShapeMismatch, TooFewSlices
from volnorm.isgen import Generator, GeneratorConfig, IsGenModel
from volnorm.mlkit.stats import t_two_sided_p
from volnorm.normalize import (SliceImputer, copy_impute_round, isgen_impute_round, mae_0_255,
                               normalize_volume, paired_comparison, rounds_needed)
from volnorm.phantom import Phantom
from volnorm.volume import Orientation, Volume3D


def midpoint(a, b):
    return (a + b) / 2


def slices_of(n, shape=(3, 4), seed=0):
    rng = np.random.default_rng(seed)
    return [rng.random(shape).astype(np.float32) for _ in range(n)]


# -- copy imputer ----------------------------------------------------------------

def test_copy_round_example():
    A, B, C = slices_of(3)
    out = copy_impute_round([A, B, C])
    assert [id(s) for s in out] == [id(A), id(A), id(B), id(B), id(C)]
    assert len(copy_impute_round(slices_of(33))) == 65
    with pytest.raises(TooFewSlices):
        copy_impute_round(slices_of(1))


@given(st.integers(2, 12), st.integers(0, 3))
def test_copy_never_synthesises(n, rounds):
    src = slices_of(n, seed=n)
    out = src
    for _ in range(rounds):
        out = copy_impute_round(out)
    originals = {s.tobytes() for s in src}
    assert all(s.tobytes() in originals for s in out)
    assert len(out) == 2 ** rounds * (n - 1) + 1


# -- generator imputer -----------------------------------------------------------

def test_isgen_round_interleaves():
    src = slices_of(2)
    out = isgen_impute_round(src, midpoint)
    assert len(out) == 3
    np.testing.assert_allclose(out[1], (src[0] + src[1]) / 2)
    src = slices_of(6)
    out = isgen_impute_round(src, midpoint)
    for i, s in enumerate(src):
        assert out[2 * i].tobytes() == s.tobytes()
    with pytest.raises(ModelMissing):
        isgen_impute_round(src, None)
    with pytest.raises(TooFewSlices):
        isgen_impute_round(src[:1], midpoint)
    with pytest.raises(ShapeMismatch):
        isgen_impute_round(src, lambda a, b: a[:1])


def test_isgen_round_with_generator_and_model():
    g = Generator(GeneratorConfig(16), seed=0)
    src = [s * 100 for s in slices_of(3, shape=(20, 24))]
    out = isgen_impute_round(src, g)
    assert len(out) == 5 and out[1].shape == (20, 24)
    lo = min(float(s.min()) for s in src)
    hi = max(float(s.max()) for s in src)
    assert lo <= out[1].min() and out[1].max() <= hi
    model = IsGenModel(g, None)
    assert np.array_equal(isgen_impute_round(src, model)[1], out[1])


def test_slice_imputer_maps_back_to_range():
    g = Generator(GeneratorConfig(16), seed=1)
    imp = SliceImputer(g, (10.0, 30.0))
    a, b = np.full((8, 8), 10.0), np.full((8, 8), 30.0)
    mid = imp(a, b)
    assert mid.shape == (8, 8) and (mid >= 10).all() and (mid <= 30).all()
    assert np.array_equal(SliceImputer(g, (5.0, 5.0))(a, b), a)


def test_midpoint_imputer_beats_copy_on_phantom():
    """Plumbing check with an interpolating stub: inserted slices are scored against
    the analytic phantom at the fractional position."""
    ph = Phantom.sample(4, n_blobs=5)
    shape = (17, 32, 32)
    fine = (33, 32, 32)
    vol = ph.render(shape).astype(np.float32)
    mids_stub = isgen_impute_round(list(vol), midpoint)[1::2]
    mids_copy = copy_impute_round(list(vol))[1::2]
    truth = [ph.slice_at(2 * i + 1, fine) for i in range(16)]
    e_stub = [mae_0_255(m, t, (0, vol.max())) for m, t in zip(mids_stub, truth)]
    e_copy = [mae_0_255(m, t, (0, vol.max())) for m, t in zip(mids_copy, truth)]
    assert np.mean(e_stub) < np.mean(e_copy)


# -- slice-count law and normalize_volume ----------------------------------------------

def test_rounds_needed_closed_form():
    for n in range(2, 201):
        want = max(0, math.ceil(math.log2(127 / (n - 1))))
        assert rounds_needed(n, 128) == want
        count = n
        for _ in range(want):
            count = 2 * count - 1
        assert count >= 128
        if want:
            assert (count + 1) // 2 < 128
    with pytest.raises(TooFewSlices):
        rounds_needed(1)


@pytest.mark.parametrize("n,k", [(n, k) for n in (2, 3, 17, 33, 64, 200) for k in range(5)])
def test_slice_count_after_k_rounds(n, k):
    out = [np.zeros(1)] * n
    for _ in range(k):
        out = copy_impute_round(out)
    assert len(out) == 2 ** k * (n - 1) + 1


def _vol(n, orient="Axial", h=20, w=24):
    data = np.arange(n, dtype=np.float32)[:, None, None] + np.zeros((1, h, w), np.float32)
    return Volume3D(data, (4.0, 1.0, 1.0), orient)


def test_normalize_33_slices():
    calls = []

    def stub(a, b):
        calls.append(1)
        return (a + b) / 2

    out = normalize_volume(_vol(33), stub)
    assert out.shape == (128, 128, 128)
    assert out.orientation is Orientation.CORONAL
    assert len(calls) == 32 + 64  # rounds 33 -> 65 -> 129


def test_normalize_many_slices_skips_imputation():
    out = normalize_volume(_vol(200), None)  # no generator needed
    assert out.shape == (128, 128, 128)


def test_normalize_identity_case():
    rng = np.random.default_rng(0)
    v = Volume3D(rng.random((128, 128, 128)).astype(np.float32), (1.0, 1.0, 1.0), "Coronal")
    out = normalize_volume(v, None)
    assert out == v


def test_normalize_spacing_preserves_extent():
    v = _vol(33, "Coronal", 20, 24)
    out = normalize_volume(v, midpoint)
    assert out.spacing[0] * 127 == pytest.approx(4.0 * 32)
    assert out.spacing[1] * 128 == pytest.approx(20.0)
    assert out.spacing[2] * 128 == pytest.approx(24.0)


@pytest.mark.parametrize("orient", list(Orientation))
def test_normalize_imputes_along_native_slice_axis(orient):
    out = normalize_volume(_vol(5, orient.value), midpoint, target=16)
    assert out.orientation is Orientation.CORONAL and out.shape == (16, 16, 16)
    # the native slice axis held values 0..4, linearly interpolated
    native = np.moveaxis(out.data, {"Axial": 1, "Sagittal": 2, "Coronal": 0}[orient.value], 0)
    prof = native[:, 0, 0]
    assert prof[0] == 0 and prof[-1] == 4
    assert (np.diff(prof) >= 0).all()


def test_normalize_too_few():
    with pytest.raises(TooFewSlices):
        normalize_volume(_vol(1), midpoint)


# -- MAE and paired test -------------------------------------------------------------------

def test_mae_examples():
    t = np.random.default_rng(0).random((4, 4)) * 255
    assert mae_0_255(t, t) == 0.0
    assert mae_0_255(np.zeros((2, 2)), np.full((2, 2), 255.0)) == 255.0
    assert mae_0_255(t + 1, t) == pytest.approx(1.0)
    assert mae_0_255(np.zeros(3), np.full(3, 2.0), (0, 2.0)) == 255.0
    with pytest.raises(ShapeMismatch):
        mae_0_255(np.zeros(3), np.zeros(4))


def test_paired_identical_is_degenerate_and_not_significant():
    a = [1.0, 2.0, 3.0]
    r = paired_comparison(a, a)
    assert r.degenerate and r.p == 1.0 and not r.significant
    r = paired_comparison([2.0, 3.0, 4.0], a)
    assert r.degenerate and r.p == 0.0 and r.significant


def test_paired_matches_scipy():
    rng = np.random.default_rng(1)
    b = rng.normal(20, 3, 100)
    a = b - 10 + rng.normal(0, 1, 100)
    r = paired_comparison(a, b)
    ref = stats.ttest_rel(a, b)
    assert r.significant
    assert r.t == pytest.approx(ref.statistic, rel=1e-10)
    assert r.p == pytest.approx(ref.pvalue, rel=1e-8, abs=1e-300)
    for seed in range(10):
        rng = np.random.default_rng(seed)
        a, b = rng.normal(0, 1, 12), rng.normal(0.3, 1, 12)
        assert paired_comparison(a, b).p == pytest.approx(stats.ttest_rel(a, b).pvalue, rel=1e-9)


def test_t_table_value():
    assert t_two_sided_p(2.262, 9) == pytest.approx(0.050, abs=5e-4)


def test_paired_length_errors():
    with pytest.raises(LengthMismatch):
        paired_comparison([1, 2], [1, 2, 3])
    with pytest.raises(LengthMismatch):
        paired_comparison([1], [2])
