import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import binom

from daepos import ensemble, nn
from daepos.dataset import NormalizationParams, SpaceLabel

SMALL = nn.chain([6, 12, 4, 12, 6])
FAST = nn.TrainConfig(max_epochs=150, early_stop_patience=20, batch_size=32, rng_seed=3)


def two_clusters(n=80, seed=0):
    rng = np.random.default_rng(seed)
    a = np.clip(0.2 + 0.03 * rng.standard_normal((n, 6)), 0, 1)
    b = np.clip(0.8 + 0.03 * rng.standard_normal((n, 6)), 0, 1)
    return {SpaceLabel(0, "A"): a, SpaceLabel(1, "B"): b}


@pytest.fixture(scope="module")
def trained():
    data = two_clusters()
    return ensemble.train_ensemble(data, FAST, 0.5, SMALL), data


class TestCorrupt:
    def test_zero_loss_identity(self):
        x = np.random.default_rng(0).random(6)
        np.testing.assert_array_equal(ensemble.corrupt(x, 0.0, np.random.default_rng(1)), x)

    def test_full_loss_zeroes(self):
        x = np.random.default_rng(0).random((4, 6)) + 0.1
        assert np.all(ensemble.corrupt(x, 1.0, np.random.default_rng(1)) == 0)

    def test_input_untouched(self):
        x = np.ones(6)
        ensemble.corrupt(x, 0.5, np.random.default_rng(1))
        assert np.all(x == 1)

    def test_rate(self):
        x = np.ones((100_000, 6))
        zeros = np.mean(ensemble.corrupt(x, 0.5, np.random.default_rng(123)) == 0)
        assert 0.495 <= zeros <= 0.505

    @pytest.mark.parametrize("p", [-0.1, 1.5])
    def test_range(self, p):
        with pytest.raises(ValueError):
            ensemble.corrupt(np.ones(6), p, np.random.default_rng(0))

    @pytest.mark.parametrize("p", [0.1, 0.5, 0.9])
    def test_binomial_interval(self, p):
        n = 100_000 * 6
        lo, hi = binom.interval(0.99, n, p)
        zeros = int(np.sum(ensemble.corrupt(np.ones((100_000, 6)), p, np.random.default_rng(99)) == 0))
        assert lo <= zeros <= hi


class TestPosterior:
    def test_uniform(self):
        np.testing.assert_allclose(ensemble.posterior(np.ones(8)).probs, 0.125)

    def test_two_values(self):
        probs = ensemble.posterior([0.5, 1.0]).probs
        np.testing.assert_allclose(probs, [0.73106, 0.26894], atol=1e-5)

    def test_tiny_loss(self):
        post = ensemble.posterior([1e-12, 1.0])
        assert np.all(np.isfinite(post.probs))
        np.testing.assert_allclose(post.probs, [1.0, 0.0], atol=1e-12)
        assert post.losses[0] == 1e-12

    def test_negative(self):
        with pytest.raises(ValueError):
            ensemble.posterior([0.1, -0.2])

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.floats(0, 50, allow_nan=False), min_size=1, max_size=12))
    def test_normalised_and_ordered(self, losses):
        post = ensemble.posterior(losses)
        assert abs(post.probs.sum() - 1.0) <= 1e-9
        assert np.all((post.probs >= 0) & (post.probs <= 1))
        L = np.maximum(np.asarray(losses), ensemble.LOSS_FLOOR)
        assert L[np.argmax(post.probs)] == L.min()

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.floats(1e-3, 5, allow_nan=False), min_size=2, max_size=8),
           st.floats(0.01, 100))
    def test_scale_keeps_argmin(self, losses, c):
        a = np.argmax(ensemble.posterior(losses).probs)
        b = np.argmax(ensemble.posterior(np.asarray(losses) * c).probs)
        assert np.asarray(losses)[a] == np.asarray(losses)[b] == min(losses)

    def test_strictly_decreasing(self):
        probs = ensemble.posterior([0.1, 0.2, 0.3, 0.4]).probs
        assert np.all(np.diff(probs) < 0)


class TestTraining:
    def test_own_space_reconstructs_better(self, trained):
        model, data = trained
        a, b = data[SpaceLabel(0, "A")], data[SpaceLabel(1, "B")]
        La, Lb = ensemble.reconstruction_losses(model, a), ensemble.reconstruction_losses(model, b)
        assert La[:, 0].mean() < La[:, 1].mean()
        assert Lb[:, 1].mean() < Lb[:, 0].mean()

    def test_centroid_classified(self, trained):
        model, data = trained
        rng = np.random.default_rng(0)
        hits = 0
        for _ in range(100):
            lab = int(rng.integers(2))
            centre = data[SpaceLabel(lab, "AB"[lab])].mean(axis=0)
            x = np.clip(centre + 0.01 * rng.standard_normal(6), 0, 1)
            hits += ensemble.predict(model, x)[0].index == lab
        assert hits >= 90

    def test_deterministic(self, tmp_path):
        data = two_clusters(30)
        cfg = nn.TrainConfig(max_epochs=10, batch_size=16, rng_seed=1)
        m1 = ensemble.train_ensemble(data, cfg, 0.5, SMALL)
        m2 = ensemble.train_ensemble(data, cfg, 0.5, SMALL)
        assert m1 == m2
        ensemble.save(m1, tmp_path / "a")
        ensemble.save(m2, tmp_path / "b")
        for name in ("ensemble.json", "dae_00.txt", "dae_01.txt"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_parallel_equals_serial(self):
        data = two_clusters(30)
        cfg = nn.TrainConfig(max_epochs=8, batch_size=16, rng_seed=2)
        assert ensemble.train_ensemble(data, cfg, 0.5, SMALL, n_jobs=2) == ensemble.train_ensemble(data, cfg, 0.5, SMALL)

    def test_per_space_seeds_differ(self):
        assert ensemble.space_seed(0, 0) != ensemble.space_seed(0, 1)

    def test_single_sample_space(self):
        data = {SpaceLabel(0, "A"): np.full((1, 6), 0.3), SpaceLabel(1, "B"): np.full((40, 6), 0.7)}
        model, hists = ensemble.train_ensemble(
            data, nn.TrainConfig(max_epochs=5, batch_size=8), 0.5, SMALL, return_histories=True
        )
        assert hists[0].stopped_epoch == 5 and not hists[0].val_loss
        assert model.n_spaces == 2

    def test_empty_space(self):
        data = {SpaceLabel(0, "A"): np.zeros((0, 6)), SpaceLabel(1, "B"): np.ones((5, 6))}
        with pytest.raises(ValueError):
            ensemble.train_ensemble(data, FAST, 0.5, SMALL)

    def test_wrong_input_width(self):
        with pytest.raises(nn.ConfigurationError):
            ensemble.train_ensemble(two_clusters(5), FAST, 0.5, nn.chain([5, 4, 6]))

    def test_default_architecture(self):
        widths = [s.input_dim for s in ensemble.default_architecture()] + [6]
        assert widths == [6, 256, 64, 16, 64, 256, 6]
        acts = [s.activation for s in ensemble.default_architecture()]
        assert acts == ["relu"] * 5 + ["sigmoid"]


class TestPrediction:
    def test_losses_shape(self, trained):
        model, _ = trained
        L = ensemble.reconstruction_losses(model, np.full(6, 0.5))
        assert L.shape == (2,) and np.all(L >= 0)

    def test_dimension_mismatch(self, trained):
        with pytest.raises(ValueError):
            ensemble.reconstruction_losses(trained[0], np.zeros(5))

    def test_duplicates_tie_to_first(self, trained):
        model, _ = trained
        dup = ensemble.EnsembleModel(
            (SpaceLabel(0, "x"), SpaceLabel(1, "y"), SpaceLabel(2, "z")),
            (model.daes[1],) * 3,
        )
        L = ensemble.reconstruction_losses(dup, np.full(6, 0.4))
        assert L[0] == L[1] == L[2]
        assert ensemble.predict(dup, np.full(6, 0.4))[0].index == 0

    def test_argmin_rule(self):
        assert int(np.argmin([0.9, 0.1, 0.5])) == int(np.argmax(ensemble.posterior([0.9, 0.1, 0.5]).probs)) == 1

    def test_prediction_is_argmax_posterior(self, trained):
        model, _ = trained
        X = np.random.default_rng(4).random((200, 6))
        labels, post = ensemble.predict_batch(model, X)
        np.testing.assert_array_equal(labels, np.argmax(post.probs, axis=1))
        np.testing.assert_array_equal(labels, np.argmin(post.losses, axis=1))
        for x, lab in zip(X[:10], labels[:10]):
            assert ensemble.predict(model, x)[0].index == lab

    def test_save_load_bitwise(self, trained, tmp_path):
        model, _ = trained
        model = ensemble.EnsembleModel(
            model.spaces, model.daes, NormalizationParams(np.zeros(6) - 0.1, np.ones(6) / 3), 0.5
        )
        ensemble.save(model, tmp_path / "m")
        back = ensemble.load(tmp_path / "m")
        assert back == model
        X = np.random.default_rng(5).random((50, 6))
        np.testing.assert_array_equal(
            ensemble.reconstruction_losses(back, X), ensemble.reconstruction_losses(model, X)
        )
        a, pa = ensemble.predict(model, X[0])
        b, pb = ensemble.predict(back, X[0])
        assert a == b and np.array_equal(pa.probs, pb.probs)

    def test_predict_raw(self, trained):
        model, data = trained
        norm = NormalizationParams(np.full(6, -100.0), np.full(6, 0.0))
        model = ensemble.EnsembleModel(model.spaces, model.daes, norm, 0.5)
        raw = -100 + 100 * data[SpaceLabel(1, "B")][0]
        assert ensemble.predict_raw(model, raw)[0].name == "B"

    def test_model_invariants(self, trained):
        model, _ = trained
        with pytest.raises(ValueError):
            ensemble.EnsembleModel(model.spaces[:1], model.daes[:1])
        other = nn.init_network(nn.chain([6, 3, 6]), 0)
        with pytest.raises(ValueError):
            ensemble.EnsembleModel(model.spaces, (model.daes[0], other))
