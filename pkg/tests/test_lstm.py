import math

import numpy as np
import pytest

from denoise_forecast.errors import DivergedLoss, EmptyDataset, NonFiniteInput, ShapeMismatch, StaleCache
from denoise_forecast.lstm import (
    GATES,
    AdamState,
    LstmNetwork,
    TrainConfig,
    adam_step,
    dropout_mask,
    load_checkpoint,
    lstm_backward,
    lstm_forward,
    mse_loss,
    save_checkpoint,
    train,
)

# Hand evaluation of the gate recurrences, one scalar at a time, for the fixed
# 2 -> 3 -> 2 -> 1 network built by `_hand_fixed_net` on [[0.5, -1.0], [1.5, 0.25]].
HAND_EVALUATED_PREDICTION = 0.1617338354396241


def _fixed_weight(layer, gate, r, c, kind):
    return 0.1 * (((layer * 7 + gate * 5 + r * 3 + c * 2 + (kind == "U") * 11) % 7) - 3)


def _fixed_bias(layer, gate, r):
    return 0.05 * (((layer + gate * 2 + r) % 5) - 2)


def _hand_fixed_net():
    net = LstmNetwork.create(2, (3, 2), dropout_rate=0.0, seed=0)
    for li, layer in enumerate(net.layers):
        for gi, name in enumerate(GATES):
            W, U, b = layer.gate(name)
            for r in range(layer.hidden_dim):
                b[r] = _fixed_bias(li, gi, r)
                for c in range(layer.input_dim):
                    W[r, c] = _fixed_weight(li, gi, r, c, "W")
                for c in range(layer.hidden_dim):
                    U[r, c] = _fixed_weight(li, gi, r, c, "U")
    net.dense_w[0] = [0.4, -0.7]
    net.dense_b[0] = 0.15
    return net


def _tiny(seed, dropout=0.0):
    return LstmNetwork.create(3, (4, 3), dropout_rate=dropout, seed=seed)


def _loss_at(net, X, y, mask_seed):
    rng = np.random.default_rng(mask_seed)
    pred, _ = lstm_forward(net, X, training=True, rng=rng)
    return mse_loss(pred, y)


def _finite_difference(net, X, y, mask_seed, h=1e-5):
    grads = {}
    for name, p in net.parameters().items():
        g = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            orig = p[idx]
            p[idx] = orig + h
            up = _loss_at(net, X, y, mask_seed)
            p[idx] = orig - h
            down = _loss_at(net, X, y, mask_seed)
            p[idx] = orig
            g[idx] = (up - down) / (2 * h)
        grads[name] = g
    return grads


def _rel_error(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(a) + np.linalg.norm(b), 1e-300)


class TestArchitecture:
    def test_defaults(self):
        net = LstmNetwork.create(4)
        assert net.hidden_dims == (150, 50)
        assert net.dropout_rate == 0.2
        assert net.dense_w.shape == (1, 50)
        assert net.layers[0].W.shape == (600, 4)
        assert net.layers[1].U.shape == (200, 50)

    def test_initialisation(self):
        net = LstmNetwork.create(5, (6, 4), seed=3)
        for layer in net.layers:
            _, _, bf = layer.gate("forget")
            assert np.all(bf == 1.0)
            for name in ("input", "cell", "output"):
                assert np.all(layer.gate(name)[2] == 0.0)
            assert np.abs(layer.W).max() <= 1 / math.sqrt(layer.input_dim)
            assert np.abs(layer.U).max() <= 1 / math.sqrt(layer.hidden_dim)

    def test_seeded(self):
        a, b = LstmNetwork.create(2, (5, 3), seed=9), LstmNetwork.create(2, (5, 3), seed=9)
        for (k, pa), pb in zip(a.parameters().items(), b.parameters().values()):
            np.testing.assert_array_equal(pa, pb, err_msg=k)

    def test_bad_dropout(self):
        with pytest.raises(ValueError):
            LstmNetwork.create(2, dropout_rate=1.0)


class TestForward:
    def test_zero_network_outputs_bias(self):
        net = _tiny(0)
        for p in net.parameters().values():
            p[...] = 0.0
        net.dense_b[0] = 0.37
        pred, cache = lstm_forward(net, np.random.default_rng(1).normal(size=(4, 6, 3)))
        np.testing.assert_array_equal(pred, 0.37)
        for lc in cache.layers:
            assert np.all(lc.c == 0)

    def test_hand_evaluated_prediction(self):
        pred, _ = lstm_forward(_hand_fixed_net(), np.array([[[0.5, -1.0], [1.5, 0.25]]]))
        assert pred[0] == pytest.approx(HAND_EVALUATED_PREDICTION, abs=1e-14)

    def test_inference_deterministic_and_pure(self):
        net = _tiny(2, dropout=0.5)
        before = {k: v.copy() for k, v in net.parameters().items()}
        X = np.random.default_rng(0).normal(size=(3, 4, 3))
        rng = np.random.default_rng(5)
        state = rng.bit_generator.state
        a, _ = lstm_forward(net, X, training=False, rng=rng)
        b, _ = lstm_forward(net, X, training=False, rng=rng)
        np.testing.assert_array_equal(a, b)
        assert rng.bit_generator.state == state
        for k, v in net.parameters().items():
            np.testing.assert_array_equal(v, before[k])

    def test_activations_bounded(self):
        net = LstmNetwork.create(3, (8, 5), seed=1)
        _, cache = lstm_forward(net, 50 * np.random.default_rng(0).normal(size=(6, 7, 3)))
        for lc in cache.layers:
            assert np.all(np.abs(lc.h) <= 1)
            for gate in (lc.i, lc.f, lc.o):
                assert np.all((gate >= 0) & (gate <= 1))

    def test_shape_and_input_errors(self):
        net = _tiny(0)
        with pytest.raises(ShapeMismatch):
            lstm_forward(net, np.zeros((2, 3, 2)))
        with pytest.raises(ShapeMismatch):
            lstm_forward(net, np.zeros((0, 3, 3)))
        with pytest.raises(NonFiniteInput):
            lstm_forward(net, np.full((1, 2, 3), np.nan))

    def test_dropout_requires_rng_in_training(self):
        with pytest.raises(ValueError):
            lstm_forward(_tiny(0, dropout=0.3), np.zeros((1, 2, 3)), training=True)


class TestDropout:
    def test_expectation_matches_unmasked(self):
        rng = np.random.default_rng(0)
        out = np.random.default_rng(1).uniform(0.2, 1.0, size=8)
        masks = dropout_mask(rng, (10_000, 8), 0.2)
        mean = (masks * out).mean(axis=0)
        assert np.all(np.abs(mean - out) <= 0.02 * np.abs(out))

    def test_mask_values(self):
        m = dropout_mask(np.random.default_rng(0), (1000,), 0.25)
        assert set(np.unique(m)) <= {0.0, 1 / 0.75}


class TestBackward:
    @pytest.mark.parametrize("seed", [0, 1, 2])
    @pytest.mark.parametrize("dropout", [0.0, 0.3])
    def test_finite_differences(self, seed, dropout):
        net = _tiny(seed, dropout)
        rng = np.random.default_rng(100 + seed)
        X, y = rng.normal(size=(2, 5, 3)), rng.normal(size=2)
        pred, cache = lstm_forward(net, X, training=True, rng=np.random.default_rng(7))
        analytic = lstm_backward(net, cache, y)
        numeric = _finite_difference(net, X, y, mask_seed=7)
        assert list(analytic) == list(net.parameters())
        for name in analytic:
            assert _rel_error(analytic[name], numeric[name]) <= 1e-4, name

    def test_zero_residual_zero_gradient(self):
        net = _tiny(4)
        X = np.random.default_rng(0).normal(size=(3, 4, 3))
        pred, cache = lstm_forward(net, X)
        for g in lstm_backward(net, cache, pred.copy()).values():
            assert np.abs(g).max() <= 1e-12

    def test_gradient_linear_in_residual(self):
        net = _tiny(5)
        X = np.random.default_rng(0).normal(size=(3, 4, 3))
        y = np.random.default_rng(1).normal(size=3)
        pred, cache = lstm_forward(net, X)
        g1 = lstm_backward(net, cache, y)
        g2 = lstm_backward(net, cache, pred - 2 * (pred - y))
        for k in g1:
            np.testing.assert_allclose(g2[k], 2 * g1[k], rtol=0, atol=1e-10)

    def test_stale_cache(self):
        net = _tiny(0)
        X, y = np.zeros((1, 2, 3)), np.zeros(1)
        _, cache = lstm_forward(net, X)
        adam_step(net, lstm_backward(net, cache, y), AdamState())
        with pytest.raises(StaleCache):
            lstm_backward(net, cache, y)
        with pytest.raises(StaleCache):
            lstm_backward(_tiny(0), lstm_forward(net, X)[1], y)

    def test_target_shape(self):
        net = _tiny(0)
        _, cache = lstm_forward(net, np.zeros((2, 2, 3)))
        with pytest.raises(ShapeMismatch):
            lstm_backward(net, cache, np.zeros(3))


class TestAdam:
    def test_zero_gradient_leaves_params(self):
        params = {"w": np.array([1.0, -2.0])}
        state = AdamState()
        adam_step(params, {"w": np.zeros(2)}, state)
        np.testing.assert_array_equal(params["w"], [1.0, -2.0])
        assert state.step_count == 1

    def test_first_step_hand_evaluated(self):
        # step 1: m_hat = g, v_hat = g^2, so delta = -lr * g / (|g| + eps)
        params = {"w": np.array([3.0])}
        adam_step(params, {"w": np.array([0.5])}, AdamState())
        expected = 3.0 - 0.001 * 0.5 / (0.5 + 1e-8)
        assert params["w"][0] == pytest.approx(expected, abs=1e-15)
        assert 3.0 - params["w"][0] == pytest.approx(0.001, rel=1e-7)

    def test_constant_gradient_monotone(self):
        params = {"w": np.array([0.0])}
        state = AdamState()
        seen = [0.0]
        for _ in range(3):
            adam_step(params, {"w": np.array([0.2])}, state)
            seen.append(params["w"][0])
        assert seen[0] > seen[1] > seen[2] > seen[3]

    def test_moment_shapes_and_step_count(self):
        net = _tiny(0)
        state = AdamState()
        grads = {k: np.ones_like(v) for k, v in net.parameters().items()}
        for n in range(1, 4):
            adam_step(net, grads, state)
            assert state.step_count == n
        for k, v in net.parameters().items():
            assert state.first_moment[k].shape == v.shape == state.second_moment[k].shape

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            adam_step({"w": np.zeros(2)}, {"w": np.zeros(3)}, AdamState())
        with pytest.raises(ShapeMismatch):
            adam_step({"w": np.zeros(2)}, {"v": np.zeros(2)}, AdamState())


def _toy_dataset(n=500, T=5, seed=0):
    rng = np.random.default_rng(seed)
    x = np.zeros(n + T)
    for t in range(1, n + T):
        x[t] = 0.9 * x[t - 1] + 0.3 * rng.normal()
    X = np.stack([x[i : i + T] for i in range(n)])[:, :, None]
    y = 0.9 * X[:, -1, 0]
    return X, y


class TestTrain:
    def test_learns_linear_recursion(self):
        X, y = _toy_dataset()
        net = LstmNetwork.create(1, (16, 8), dropout_rate=0.0, seed=0)
        net, losses = train(net, X, y, TrainConfig(epochs=50, seed=0))
        assert len(losses) == 50
        assert mse_loss(net.predict(X), y) < 0.1 * y.var()

    def test_default_epochs(self):
        assert TrainConfig().epochs == 10
        X, y = _toy_dataset(64)
        _, losses = train(LstmNetwork.create(1, (4,), seed=0), X, y)
        assert len(losses) == 10

    def test_deterministic(self):
        X, y = _toy_dataset(100)
        runs = []
        for _ in range(2):
            net = LstmNetwork.create(1, (6, 4), dropout_rate=0.2, seed=3)
            net, losses = train(net, X, y, TrainConfig(epochs=3, batch_size=16, seed=11))
            runs.append((losses, net.parameters()))
        assert runs[0][0] == runs[1][0]
        for k in runs[0][1]:
            np.testing.assert_array_equal(runs[0][1][k], runs[1][1][k])

    def test_empty_dataset(self):
        X, y = _toy_dataset(20)
        with pytest.raises(EmptyDataset):
            train(LstmNetwork.create(1, (4,)), X, y, TrainConfig(batch_size=32))

    def test_sequence_length_checked(self):
        X, y = _toy_dataset(64)
        with pytest.raises(ShapeMismatch):
            train(LstmNetwork.create(1, (4,)), X, y, TrainConfig(sequence_length=7))

    def test_divergence_detected(self):
        X, y = _toy_dataset(64)
        y = y * 1e200
        with pytest.raises(DivergedLoss):
            train(LstmNetwork.create(1, (4,)), X, y, TrainConfig(epochs=1))


class TestCheckpoint:
    def test_round_trip_bit_exact(self, tmp_path):
        net = LstmNetwork.create(3, (5, 4), dropout_rate=0.35, seed=8)
        path = tmp_path / "model.npz"
        save_checkpoint(net, path, {"lag": 4, "variant": "wt-lstm"})
        loaded, meta = load_checkpoint(path)
        assert meta == {"lag": 4, "variant": "wt-lstm"}
        assert loaded.hidden_dims == (5, 4)
        assert loaded.dropout_rate == 0.35 and loaded.rng_seed == 8
        assert list(loaded.parameters()) == list(net.parameters())
        for k, v in net.parameters().items():
            assert loaded.parameters()[k].tobytes() == v.tobytes()
        X = np.random.default_rng(0).normal(size=(2, 3, 3))
        np.testing.assert_array_equal(loaded.predict(X), net.predict(X))

    def test_no_temp_files_left(self, tmp_path):
        save_checkpoint(LstmNetwork.create(1, (2,)), tmp_path / "m.npz")
        assert [p.name for p in tmp_path.iterdir()] == ["m.npz"]

    def test_rejects_foreign_file(self, tmp_path):
        path = tmp_path / "x.npz"
        np.savez(path, __header__=np.array('{"format": "other", "version": 1}'))
        with pytest.raises(ValueError):
            load_checkpoint(path)
