import numpy as np
import pytest

from instmine import encoder, numerics
from instmine.encoder import AdamConfig, EncoderConfig
from instmine.errors import DegenerateVector, DimensionMismatch, InvalidConfig


def make_state(input_dim=6, embed_dim=3, seed=0, init_scale=0.5):
    return encoder.init_encoder(
        EncoderConfig(input_dim, embed_dim, init_scale, seed))


class TestInit:
    def test_seeded_determinism(self):
        a = make_state(seed=5)
        b = make_state(seed=5)
        np.testing.assert_array_equal(a.weights, b.weights)
        c = make_state(seed=6)
        assert not np.array_equal(a.weights, c.weights)

    def test_fresh_state_moments(self):
        s = make_state()
        assert s.adam_t == 0
        assert not s.adam_m.any()
        assert not s.adam_v.any()

    def test_zero_scale_encoder_degenerate(self):
        s = make_state(init_scale=0.0)
        with pytest.raises(DegenerateVector):
            encoder.encode(s, np.ones(6))

    def test_invalid_configs(self):
        with pytest.raises(InvalidConfig):
            encoder.init_encoder(EncoderConfig(4, 1))
        with pytest.raises(InvalidConfig):
            encoder.init_encoder(EncoderConfig(4, 8))


class TestEncode:
    def test_identity_block(self):
        s = make_state()
        s.weights = np.hstack([np.eye(3), np.zeros((3, 3))])
        x = np.array([3.0, 0.0, 4.0, 9.0, 9.0, 9.0])
        np.testing.assert_allclose(encoder.encode(s, x), [0.6, 0.0, 0.8])

    def test_shape_and_norm(self):
        s = make_state()
        rng = np.random.default_rng(1)
        for _ in range(20):
            f = encoder.encode(s, rng.normal(size=6))
            assert f.shape == (3,)
            assert abs(np.linalg.norm(f) - 1.0) <= 1e-5

    def test_batch_matches_single(self):
        s = make_state()
        rng = np.random.default_rng(2)
        xs = rng.normal(size=(5, 6))
        units, raws = encoder.encode_batch(s, xs)
        for i in range(5):
            np.testing.assert_allclose(units[i], encoder.encode(s, xs[i]),
                                       atol=1e-12)
            np.testing.assert_allclose(raws[i], encoder.encode_raw(s, xs[i]),
                                       atol=1e-12)

    def test_dimension_errors(self):
        s = make_state()
        with pytest.raises(DimensionMismatch):
            encoder.encode(s, np.ones(5))
        with pytest.raises(DimensionMismatch):
            encoder.encode_batch(s, np.ones((2, 7)))


class TestEncodeBackward:
    def test_zero_gradient(self):
        s = make_state()
        g = encoder.encode_backward(s, np.ones(6), np.zeros(3))
        assert not g.any()

    def test_outer_product_sparsity(self):
        s = make_state()
        x = np.zeros(6)
        x[0] = 1.0
        g = encoder.encode_backward(s, x, np.array([1.0, 2.0, 3.0]))
        np.testing.assert_array_equal(g[:, 0], [1.0, 2.0, 3.0])
        assert not g[:, 1:].any()

    def test_batch_accumulates_by_sum(self):
        s = make_state()
        rng = np.random.default_rng(3)
        xs = rng.normal(size=(4, 6))
        gs = rng.normal(size=(4, 3))
        total = encoder.encode_backward_batch(s, xs, gs)
        ref = sum(encoder.encode_backward(s, x, g) for x, g in zip(xs, gs))
        np.testing.assert_allclose(total, ref, atol=1e-12)

    def test_full_chain_matches_finite_differences(self):
        # Toy loss over 3 images: L = sum_i cos(encode(x_i), b_i).
        rng = np.random.default_rng(4)
        s = make_state(seed=11)
        xs = rng.normal(size=(3, 6))
        bs = numerics.normalize_rows(rng.normal(size=(3, 3)))

        def loss_of(weights):
            total = 0.0
            for x, b in zip(xs, bs):
                total += numerics.normalize(weights @ x) @ b
            return total

        grad = np.zeros_like(s.weights)
        for x, b in zip(xs, bs):
            raw = encoder.encode_raw(s, x)
            grad += encoder.encode_backward(
                s, x, numerics.cosine_grad_raw(raw, b))

        h = 1e-6
        fd = np.zeros_like(grad)
        for i in range(grad.shape[0]):
            for j in range(grad.shape[1]):
                wp = s.weights.copy()
                wm = s.weights.copy()
                wp[i, j] += h
                wm[i, j] -= h
                fd[i, j] = (loss_of(wp) - loss_of(wm)) / (2 * h)
        err = np.linalg.norm(grad - fd) / max(np.linalg.norm(fd), 1e-8)
        assert err < 1e-4


def scalar_adam_oracle(w0, grads, cfg):
    """Independent step-by-step Adam on a scalar parameter."""
    w, m, v = w0, 0.0, 0.0
    for t, g in enumerate(grads, start=1):
        m = cfg.beta1 * m + (1 - cfg.beta1) * g
        v = cfg.beta2 * v + (1 - cfg.beta2) * g * g
        mh = m / (1 - cfg.beta1 ** t)
        vh = v / (1 - cfg.beta2 ** t)
        w = w - cfg.lr * mh / (vh ** 0.5 + cfg.eps)
        w = w - cfg.lr * cfg.weight_decay * w
    return w


class TestAdam:
    def make_scalarish_state(self, w0):
        s = make_state(input_dim=4, embed_dim=2)
        s.weights = np.full((2, 4), w0)
        s.adam_m = np.zeros((2, 4))
        s.adam_v = np.zeros((2, 4))
        return s

    def test_zero_grad_zero_decay_is_identity(self):
        s = make_state()
        cfg = AdamConfig(lr=0.1, weight_decay=0.0)
        out = encoder.adam_step(s, np.zeros_like(s.weights), cfg)
        np.testing.assert_array_equal(out.weights, s.weights)
        assert out.adam_t == 1

    def test_first_step_magnitude(self):
        s = self.make_scalarish_state(1.0)
        cfg = AdamConfig(lr=0.1, weight_decay=0.0)
        out = encoder.adam_step(s, np.full((2, 4), 2.0), cfg)
        np.testing.assert_allclose(out.weights, 1.0 - 0.1, atol=1e-7)

    def test_trajectory_matches_scalar_oracle(self):
        # Quadratic loss 0.5 w^2 -> gradient w, evaluated before each step.
        cfg = AdamConfig(lr=0.05, beta1=0.9, beta2=0.999, eps=1e-8,
                         weight_decay=1e-4)
        s = self.make_scalarish_state(0.7)
        grads = []
        for _ in range(10):
            grads.append(s.weights[0, 0])
            s = encoder.adam_step(s, s.weights.copy(), cfg)
        ref = scalar_adam_oracle(0.7, grads, cfg)
        np.testing.assert_allclose(s.weights, ref, atol=1e-10)

    def test_decay_applies_without_gradient(self):
        s = self.make_scalarish_state(1.0)
        cfg = AdamConfig(lr=0.1, weight_decay=0.5)
        out = encoder.adam_step(s, np.zeros((2, 4)), cfg)
        np.testing.assert_allclose(out.weights, 1.0 - 0.1 * 0.5 * 1.0)

    def test_shape_mismatch(self):
        s = make_state()
        with pytest.raises(DimensionMismatch):
            encoder.adam_step(s, np.zeros((1, 1)), AdamConfig())


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        s = make_state(seed=7)
        s = encoder.adam_step(s, np.ones_like(s.weights), AdamConfig(lr=0.01))
        path = str(tmp_path / "enc.bin")
        encoder.save_checkpoint(s, path)
        back = encoder.load_checkpoint(path)
        assert back.config == s.config
        assert back.adam_t == 1
        np.testing.assert_array_equal(back.weights, s.weights)
        np.testing.assert_array_equal(back.adam_m, s.adam_m)
        np.testing.assert_array_equal(back.adam_v, s.adam_v)

    def test_warm_start(self, tmp_path):
        s = make_state(seed=7)
        path = str(tmp_path / "enc.bin")
        encoder.save_checkpoint(s, path)
        warm = encoder.init_encoder(s.config, warm_start=path)
        np.testing.assert_array_equal(warm.weights, s.weights)

    def test_checksum_tracks_weights(self):
        a = make_state(seed=1)
        b = make_state(seed=1)
        assert encoder.weights_checksum(a) == encoder.weights_checksum(b)
        b.weights = b.weights + 1e-9
        assert encoder.weights_checksum(a) != encoder.weights_checksum(b)
