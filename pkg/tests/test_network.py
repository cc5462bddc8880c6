import numpy as np
import pytest
import scipy.sparse as sp

from gradrules import FeedForwardClassifier, load_network, save_network

from conftest import away_from_kinks, finite_difference_gradient, random_network


def _zeroed(net):
    net.weights_ = [np.zeros_like(w) for w in net.weights_]
    net.biases_ = [np.zeros_like(b) for b in net.biases_]
    return net


class TestPredict:
    def test_zero_network_uniform_probabilities(self):
        net = _zeroed(random_network(np.random.default_rng(0)))
        probs = net.predict_proba(np.ones((3, 20)))
        np.testing.assert_allclose(probs, 0.25, atol=1e-12)
        np.testing.assert_array_equal(net.predict(np.ones((3, 20))), 0)

    def test_probabilities_sum_to_one(self):
        rng = np.random.default_rng(1)
        net = random_network(rng)
        probs = net.predict_proba(rng.normal(size=(50, 20)))
        np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-9)
        assert (probs >= 0).all()

    def test_hand_built_net_favors_class_two(self):
        # single positive input flows through identity-ish hidden layers into
        # the class-2 logit only
        net = FeedForwardClassifier(hidden_units=(1, 1))
        net.classes_ = np.arange(3)
        net.n_features_in_ = 1
        net.weights_ = [np.array([[1.0]]), np.array([[1.0]]), np.array([[0.0, 0.0, 2.0]])]
        net.biases_ = [np.zeros(1), np.zeros(1), np.zeros(3)]
        x = np.array([1.5])
        probs = net.predict_proba(x)[0]
        expected = np.exp([0.0, 0.0, 3.0])
        np.testing.assert_allclose(probs, expected / expected.sum(), rtol=1e-12)
        assert net.predict(x)[0] == 2

    def test_tie_breaks_to_lower_class_index(self):
        net = FeedForwardClassifier(hidden_units=(1, 1))
        net.classes_ = np.arange(4)
        net.n_features_in_ = 2
        net.weights_ = [np.zeros((2, 1)), np.zeros((1, 1)), np.zeros((1, 4))]
        net.biases_ = [np.zeros(1), np.zeros(1), np.array([0.0, 1.0, 1.0, 0.0])]
        # classes 1 and 2 tie exactly
        assert net.predict(np.zeros(2))[0] == 1

    def test_sparse_and_dense_inputs_agree(self):
        rng = np.random.default_rng(2)
        net = random_network(rng)
        X = rng.normal(size=(6, 20)) * (rng.random((6, 20)) < 0.3)
        np.testing.assert_allclose(
            net.predict_proba(X), net.predict_proba(sp.csr_matrix(X)), atol=1e-15
        )


class TestInputGradient:
    def test_zero_network_zero_gradient(self):
        net = _zeroed(random_network(np.random.default_rng(0)))
        g = net.input_gradient(np.ones(20), 1)
        np.testing.assert_array_equal(g, 0.0)

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(3)
        checked = 0
        while checked < 5:
            net = random_network(rng)
            x = rng.normal(size=20)
            if not away_from_kinks(net, x):
                continue
            for out in range(4):
                bp = net.input_gradient(x, out)
                fd = finite_difference_gradient(net, x, out)
                rel = np.abs(bp - fd) / np.maximum(np.maximum(np.abs(bp), np.abs(fd)), 1e-6)
                assert rel.max() < 1e-4
            checked += 1

    def test_gradients_sum_to_zero_across_outputs(self):
        rng = np.random.default_rng(4)
        net = random_network(rng)
        x = rng.normal(size=20)
        total = sum(net.input_gradient(x, out) for out in range(4))
        assert np.abs(total).max() < 1e-9

    def test_gradient_dense_even_for_sparse_zero_inputs(self):
        rng = np.random.default_rng(5)
        net = random_network(rng)
        x = np.zeros(20)
        x[3] = 1.0
        g = net.input_gradient(sp.csr_matrix(x), 0)
        assert g.shape == (20,)
        assert (g != 0).sum() > 1  # nonzero where the input is zero

    def test_batched_matches_single(self):
        rng = np.random.default_rng(6)
        net = random_network(rng)
        X = rng.normal(size=(7, 20))
        outs = rng.integers(0, 4, 7)
        batch = net.input_gradients(X, outs)
        for i in range(7):
            np.testing.assert_allclose(batch[i], net.input_gradient(X[i], outs[i]), atol=1e-15)

    def test_output_index_validated(self):
        net = random_network(np.random.default_rng(7))
        with pytest.raises(ValueError, match="out of range"):
            net.input_gradient(np.zeros(20), 4)


class TestTraining:
    def test_xor_style_problem_fit(self):
        X = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]])
        y = np.array([0, 1, 1, 0])
        net = FeedForwardClassifier(hidden_units=(8, 8), epochs=200, batch_size=4, seed=0)
        net.fit(X, y)
        assert (net.predict(X) == y).mean() == 1.0

    def test_zero_epochs_rejected(self):
        with pytest.raises(ValueError, match="epochs"):
            FeedForwardClassifier(epochs=0).fit(np.zeros((4, 2)), [0, 1, 0, 1])

    def test_training_is_bit_reproducible(self):
        rng = np.random.default_rng(8)
        X = sp.csr_matrix(rng.normal(size=(60, 15)) * (rng.random((60, 15)) < 0.4))
        y = rng.integers(0, 3, 60)
        nets = [
            FeedForwardClassifier(hidden_units=(10, 10), epochs=5, seed=42).fit(X, y)
            for _ in range(2)
        ]
        for w1, w2 in zip(nets[0].weights_, nets[1].weights_):
            np.testing.assert_array_equal(w1, w2)
        for b1, b2 in zip(nets[0].biases_, nets[1].biases_):
            np.testing.assert_array_equal(b1, b2)

    def test_seed_changes_weights(self):
        X = np.random.default_rng(9).normal(size=(30, 5))
        y = np.arange(30) % 2
        a = FeedForwardClassifier(hidden_units=(4, 4), epochs=2, seed=0).fit(X, y)
        b = FeedForwardClassifier(hidden_units=(4, 4), epochs=2, seed=1).fit(X, y)
        assert not np.array_equal(a.weights_[0], b.weights_[0])

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence_detected(self):
        rng = np.random.default_rng(10)
        # inputs at the float64 ceiling overflow the first matmul into inf/nan
        X = rng.normal(size=(32, 4)) * 1e308
        y = rng.integers(0, 2, 32)
        net = FeedForwardClassifier(hidden_units=(4, 4), epochs=1, train_dtype="float64")
        with pytest.raises(RuntimeError, match="diverged"):
            net.fit(X, y)

    def test_loss_decreases_on_separable_data(self):
        rng = np.random.default_rng(11)
        X = np.vstack([rng.normal(-2, 0.5, size=(40, 6)), rng.normal(2, 0.5, size=(40, 6))])
        y = np.repeat([0, 1], 40)
        net = FeedForwardClassifier(hidden_units=(8, 8), epochs=20, seed=0).fit(X, y)
        assert net.loss_curve_[-1] < net.loss_curve_[0]


class TestCheckpoint:
    def test_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(12)
        X = rng.normal(size=(40, 10))
        y = rng.integers(0, 3, 40)
        net = FeedForwardClassifier(hidden_units=(6, 5), epochs=3, seed=5).fit(X, y)
        p1, p2 = tmp_path / "a.net", tmp_path / "b.net"
        save_network(p1, net)
        net2 = load_network(p1)
        save_network(p2, net2)
        assert p1.read_bytes() == p2.read_bytes()
        for w1, w2 in zip(net.weights_, net2.weights_):
            np.testing.assert_array_equal(w1, w2)
        np.testing.assert_array_equal(net.predict(X), net2.predict(X))
        assert net2.get_params() == net.get_params()

    def test_magic_checked(self, tmp_path):
        path = tmp_path / "bad.net"
        path.write_bytes(b"junk\n")
        with pytest.raises(ValueError, match="magic"):
            load_network(path)
