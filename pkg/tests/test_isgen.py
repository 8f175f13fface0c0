import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp
from scipy.stats import chisquare

from volnorm.errors import (EmptyDataset, InvalidConfig, LengthMismatch, ShapeMismatch,
                            VolumeTooThin)
from volnorm.isgen import (Discriminator, DiscriminatorConfig, Generator, GeneratorConfig,
                           IsGenModel, TrainConfig, Triplet, TrainingLog, adversarial_step,
                           build_triplets, discriminator_loss, epoch_schedule, generator_loss,
                           mean_reconstruction_loss, nonadversarial_step, on_off_train,
                           reconstruction_loss, sample_triplet, sample_triplet_indices)
from volnorm.phantom import PhantomConfig, make_phantom
from volnorm.tensorkit import OptimizerState, Tensor, finite_difference_check
from volnorm.volume import Volume3D


def small_models(seed=0, size=16):
    g = Generator(GeneratorConfig(size, (2, 3, 3, 4)), seed=seed)
    d = Discriminator(DiscriminatorConfig(size, (2, 3, 3), 4), seed=seed + 1)
    return g, d


def jitter_biases(module, seed):
    """Zero biases put background pixels exactly on the leaky-ReLU kink, where
    central differences are meaningless; move them off it."""
    rng = np.random.default_rng(seed)
    for k, p in module.params.items():
        if k.endswith(".b"):
            p.data = rng.uniform(0.05, 0.2, p.shape).astype(p.data.dtype)


def images(seed, size=16, n=3):
    rng = np.random.default_rng(seed)
    out = rng.random((n, size, size)).astype(np.float32)
    out[:, : size // 4] = 0.0  # some background so both loss branches are active
    return out


# -- architecture ------------------------------------------------------------------

def test_generator_shapes():
    g = Generator(GeneratorConfig(64))
    x = Tensor(np.zeros((1, 64, 64)))
    assert g.encode("enc1", x).shape == (64, 4, 4)
    y = g(x, x)
    assert y.shape == (1, 64, 64)
    assert ((y.data > 0) & (y.data < 1)).all()
    assert set(k.split(".")[0] for k in g.params) == {"enc1", "enc2", "dec"}
    assert not any(g.params[f"enc1.{i}.w"] is g.params[f"enc2.{i}.w"] for i in range(4))


def test_generator_config_validation():
    with pytest.raises(InvalidConfig):
        Generator(GeneratorConfig(40))
    with pytest.raises(ShapeMismatch):
        Generator(GeneratorConfig(16))(Tensor(np.zeros((1, 32, 32))), Tensor(np.zeros((1, 32, 32))))


def test_discriminator_scalar_probability():
    d = Discriminator(DiscriminatorConfig(32))
    out = d(Tensor(np.random.default_rng(0).random((1, 32, 32))))
    assert out.shape == (1,) and 0 < out.data[0] < 1
    assert sum(1 for k in d.params if k.startswith("conv.") and k.endswith(".w")) == 3


# -- triplets -------------------------------------------------------------------------

def test_triplet_forced_case():
    rng = np.random.default_rng(0)
    for _ in range(20):
        assert sample_triplet_indices(3, rng, d_max=1) == (0, 1, 2)
    with pytest.raises(VolumeTooThin):
        sample_triplet_indices(8, rng, d_max=4)


def test_triplet_equal_spacing_and_content():
    data = np.arange(20, dtype=np.float32)[:, None, None] * np.ones((1, 4, 4), np.float32)
    vol = Volume3D(data)
    rng = np.random.default_rng(1)
    for _ in range(200):
        (x1, y, x2), (a, b, c) = sample_triplet(vol, rng, d_max=4, image_size=16, return_indices=True)
        assert b - a == c - b and 1 <= b - a <= 4
        assert x1.shape == (16, 16)
        assert np.allclose(x1, a / 19) and np.allclose(y, b / 19) and np.allclose(x2, c / 19)


def test_spacing_histogram_uniform():
    rng = np.random.default_rng(2)
    draws = [sample_triplet_indices(50, rng, 4) for _ in range(10_000)]
    d = np.array([b - a for a, b, _ in draws])
    counts = np.bincount(d, minlength=5)[1:]
    expected = 10_000 / 4
    sigma = math.sqrt(10_000 * 0.25 * 0.75)
    assert np.all(np.abs(counts - expected) < 3 * sigma)
    assert chisquare(counts).pvalue > 1e-3


def test_build_triplets_deterministic():
    vol, _ = make_phantom(0, PhantomConfig(shape=(16, 32, 32)))
    a = build_triplets([vol], 5, seed=3, image_size=16)
    b = build_triplets([vol], 5, seed=3, image_size=16)
    assert all(np.array_equal(p, q) for s, t in zip(a, b) for p, q in zip(s, t))


# -- losses ----------------------------------------------------------------------------

def test_reconstruction_loss_examples():
    assert reconstruction_loss(np.zeros((1, 2, 2)), np.zeros((1, 2, 2))).item() == 0.0
    assert reconstruction_loss([[0.0]], [[0.5]]).item() == pytest.approx(0.25, abs=1e-6)
    assert reconstruction_loss([[1.0]], [[0.8]]).item() == pytest.approx(0.2, abs=1e-6)
    # mean over pixels of the two branches
    assert reconstruction_loss([[0.0, 1.0]], [[0.5, 0.8]]).item() == pytest.approx(0.225, abs=1e-6)
    with pytest.raises(ShapeMismatch):
        reconstruction_loss(np.zeros((2, 2)), np.zeros((2, 3)))


@given(hnp.arrays(np.float32, (3, 4), elements=st.floats(0, 1, width=32)),
       hnp.arrays(np.float32, (3, 4), elements=st.floats(0, 1, width=32)))
def test_reconstruction_loss_properties(y, y_hat):
    assert reconstruction_loss(y, y).item() == 0.0
    assert reconstruction_loss(y, y_hat).item() >= 0.0
    brute = np.mean(np.where(y == 0, y_hat.astype(np.float64) ** 2, 5 * (y.astype(np.float64) - y_hat) ** 2))
    assert reconstruction_loss(y, y_hat).item() == pytest.approx(brute, rel=1e-5, abs=1e-7)


def test_discriminator_loss_examples():
    assert discriminator_loss([0, 1], [0.5, 0.5]).item() == pytest.approx(0.693147, abs=1e-6)
    assert discriminator_loss([0, 1], [0.9, 0.1]).item() == pytest.approx(2.302585, abs=1e-6)
    assert discriminator_loss([0, 1], [0.0, 1.0]).item() < 1e-6
    with pytest.raises(LengthMismatch):
        discriminator_loss([0, 1, 1], [0.5, 0.5])


@given(st.lists(st.tuples(st.integers(0, 1), st.floats(0.01, 0.99)), min_size=2, max_size=6),
       st.randoms())
def test_discriminator_loss_permutation_invariant(pairs, rnd):
    shuffled = list(pairs)
    rnd.shuffle(shuffled)
    a = discriminator_loss([p[0] for p in pairs], [p[1] for p in pairs]).item()
    b = discriminator_loss([p[0] for p in shuffled], [p[1] for p in shuffled]).item()
    assert a == pytest.approx(b, rel=1e-6)


def test_generator_loss_examples():
    y, yh = [[1.0]], [[0.8]]
    total = generator_loss(y, yh, [0.5, 0.5], 0.03).item()
    assert total == pytest.approx(0.220794, abs=1e-6)
    imgs = images(0)
    for lam0 in (0.0,):
        g0 = generator_loss(imgs[0], imgs[1], [0.3, 0.8], lam0)
        assert g0.data.tobytes() == reconstruction_loss(imgs[0], imgs[1]).data.tobytes()
    # inverted labels: a more convincing synthetic slice lowers the loss
    vals = [generator_loss(y, yh, [p, 0.5], 0.03).item() for p in (0.1, 0.4, 0.7, 0.95)]
    assert all(a > b for a, b in zip(vals, vals[1:]))


# -- gradient checks of the composed losses ---------------------------------------------

@pytest.mark.parametrize("seed", range(5))
def test_generator_loss_gradcheck(seed):
    g, d = small_models(seed)
    jitter_biases(g, seed)
    jitter_biases(d, seed + 100)
    x1, y, x2 = (Tensor(a[None].astype(np.float64)) for a in images(seed))

    def f():
        y_hat = g(x1, x2)
        return generator_loss(y, y_hat, d.score_pair(y_hat, x1), 0.03)

    params = {**{f"g.{k}": v for k, v in g.params.items()}, **{f"d.{k}": v for k, v in d.params.items()}}
    # eps balances roundoff on small gradients against crossing leaky-ReLU kinks
    assert finite_difference_check(f, params, eps=1e-5, max_coords=6, seed=seed) < 1e-4


@pytest.mark.parametrize("seed", range(5))
def test_discriminator_loss_gradcheck(seed):
    _, d = small_models(seed)
    jitter_biases(d, seed)
    fake, real = (Tensor(a[None].astype(np.float64)) for a in images(seed + 10, n=2))
    f = lambda: discriminator_loss([0.0, 1.0], d.score_pair(fake, real))  # noqa: E731
    assert finite_difference_check(f, d.params, eps=1e-5, max_coords=8, seed=seed) < 1e-4


# -- training steps ------------------------------------------------------------------------

def test_lambda_zero_adversarial_equals_nonadversarial_bitwise():
    x1, y, x2 = images(3)
    g1, d1 = small_models(5)
    g2, _ = small_models(5)
    adversarial_step(g1, d1, x1, x2, y, OptimizerState(), OptimizerState(), lam=0.0)
    nonadversarial_step(g2, x1, x2, y, OptimizerState())
    for k in g1.params:
        assert g1.params[k].data.tobytes() == g2.params[k].data.tobytes()


def test_adversarial_step_liveness_and_isolation():
    x1, y, x2 = images(4)
    g, d = small_models(6)
    g0, d0 = g.state_dict(), d.state_dict()
    l_g, l_d = adversarial_step(g, d, x1, x2, y, OptimizerState(), OptimizerState(), lam=0.03)
    assert math.isfinite(l_g) and math.isfinite(l_d)
    assert math.isfinite(reconstruction_loss(y, g.predict(x1, x2)).item())
    dg = sum(float(np.sum((g.params[k].data - g0[k]) ** 2)) for k in g0)
    dd = sum(float(np.sum((d.params[k].data - d0[k]) ** 2)) for k in d0)
    assert dg > 0 and dd > 0


def test_generator_update_does_not_see_discriminator_update():
    """The discriminator half of the step must not feed back into the generator update."""
    x1, y, x2 = images(7)
    g1, d1 = small_models(8)
    g2, d2 = small_models(8)
    adversarial_step(g1, d1, x1, x2, y, OptimizerState(), OptimizerState(), lam=0.03)
    # same step with a huge discriminator learning rate: generator result must be identical
    adversarial_step(g2, d2, x1, x2, y, OptimizerState(), OptimizerState(lr=1.0), lam=0.03)
    for k in g1.params:
        assert np.array_equal(g1.params[k].data, g2.params[k].data)


def test_discriminator_alone_converges_on_two_samples():
    _, d = small_models(9)
    fake, real = (Tensor(a[None]) for a in images(9, n=2))
    opt = OptimizerState(lr=1e-2)
    for _ in range(200):
        loss = discriminator_loss([0.0, 1.0], d.score_pair(fake, real))
        d.zero_grad()
        loss.backward()
        from volnorm.tensorkit import step
        step(d.params, opt)
    assert discriminator_loss([0.0, 1.0], d.score_pair(fake, real)).item() < 0.1


def test_nonadversarial_step_leaves_discriminator_and_decreases_loss():
    x1, y, x2 = images(11)
    g, d = small_models(12)
    d0 = {k: v.tobytes() for k, v in d.state_dict().items()}
    opt = OptimizerState(lr=1e-3)
    losses = [nonadversarial_step(g, x1, x2, y, opt) for _ in range(50)]
    assert {k: v.data.tobytes() for k, v in d.params.items()} == d0
    increases = sum(b > a for a, b in zip(losses, losses[1:]))
    assert increases <= 5
    assert losses[-1] < losses[0]


def test_zero_triplet_drives_output_to_zero():
    # default channel ladder and learning rate, small image for speed
    g = Generator(GeneratorConfig(16), seed=13)
    z = np.zeros((16, 16), np.float32)
    opt = OptimizerState(lr=1e-3)
    for _ in range(100):
        nonadversarial_step(g, z, z, z, opt)
    assert g.predict(z, z).mean() < 0.05


# -- On-Off training ----------------------------------------------------------------------

def test_paper_schedule():
    modes = epoch_schedule(TrainConfig(off_epochs=5, on_epochs=5, cycles=10))
    assert len(modes) == 100
    assert modes == (["off"] * 5 + ["on"] * 5) * 10
    assert epoch_schedule(TrainConfig(warmup_epochs=3, cycles=1))[:3] == ["off"] * 3


@pytest.mark.parametrize("kw", [dict(on_epochs=0), dict(off_epochs=0), dict(cycles=0),
                                dict(lam=-0.1), dict(d_max=0)])
def test_train_config_validation(kw):
    with pytest.raises(InvalidConfig):
        epoch_schedule(TrainConfig(**kw))


def _tiny_dataset(n=10):
    vol, _ = make_phantom(1, PhantomConfig(shape=(16, 32, 32)))
    return build_triplets([vol], n, seed=0, image_size=16)


def test_on_off_short_run():
    g, d = small_models(0)
    data = _tiny_dataset()
    log = on_off_train(g, d, data, TrainConfig(off_epochs=1, on_epochs=1, cycles=1), val=data[:3])
    assert log.modes == ["off", "on"]
    assert [r.l_d is None for r in log.records] == [True, False]
    assert sum(r.mode == "on" for r in log.records) == 1
    best = min(log.records, key=lambda r: r.val_l_rl)
    assert log.best_epoch == best.epoch
    assert mean_reconstruction_loss(g, data[:3]) == pytest.approx(best.val_l_rl, rel=1e-6)
    with pytest.raises(EmptyDataset):
        on_off_train(g, d, [], TrainConfig())


def test_on_off_deterministic():
    logs = []
    for _ in range(2):
        g, d = small_models(0)
        logs.append(on_off_train(g, d, _tiny_dataset(4), TrainConfig(off_epochs=1, on_epochs=1, cycles=1)).to_text())
    assert logs[0] == logs[1]


def test_training_log_text_round_trip():
    g, d = small_models(0)
    log = on_off_train(g, d, _tiny_dataset(3), TrainConfig(off_epochs=1, on_epochs=1, cycles=1))
    text = log.to_text()
    assert len(text.splitlines()) == 2
    assert TrainingLog.from_text(text).to_text() == text


def test_model_checkpoint_round_trip(tmp_path):
    model = IsGenModel.create(16, seed=4, gen_channels=(2, 3, 3, 4), disc_channels=(2, 3, 3), disc_hidden=4)
    model.save(tmp_path / "m.ckpt")
    back = IsGenModel.load(tmp_path / "m.ckpt")
    for a, b in ((model.generator, back.generator), (model.discriminator, back.discriminator)):
        assert a.config == b.config
        for k in a.params:
            assert a.params[k].data.tobytes() == b.params[k].data.tobytes()
    assert back.train.lam == pytest.approx(0.03)
    x = images(0)[0]
    assert np.array_equal(model.generator.predict(x, x), back.generator.predict(x, x))


def test_triplet_type():
    t = Triplet(np.zeros(1), np.ones(1), np.zeros(1))
    assert t.y[0] == 1
