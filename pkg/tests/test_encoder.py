import numpy as np
import pytest

from helpers import finite_difference_check
from mtnet import autograd as ag
from mtnet.encoder import (EncoderConfig, EncoderParams, conv_stage, encode,
                           gru_stage, temporal_attention)
from mtnet.errors import ConfigError, ShapeError


def build(cfg, seed=0):
    ps = ag.ParamSet()
    params = EncoderParams(cfg, ps, "enc", np.random.default_rng(seed))
    return ps, params


def zero_params(ps):
    for p in ps:
        p.value.data[...] = 0.0


def conv_reference(x, kernels, bias):
    """Direct-summation convolution plus ReLU, written independently."""
    d_c, d, w = kernels.shape
    t_c = x.shape[1] - w + 1
    out = np.empty((d_c, t_c))
    for k in range(d_c):
        for t in range(t_c):
            acc = bias[k]
            for i in range(d):
                for j in range(w):
                    acc += kernels[k, i, j] * x[i, t + j]
            out[k, t] = acc
    return np.maximum(out, 0.0)


def gru_reference(s, p):
    """Step-by-step gate recurrence, written independently of the graph ops."""
    def sig(z):
        return 1.0 / (1.0 + np.exp(-z))

    h = np.zeros(p.b_r.value.shape[0])
    for t in range(s.shape[1]):
        x = s[:, t]
        r = sig(x @ p.w_xr.value.data + h @ p.w_hr.value.data + p.b_r.value.data)
        u = sig(x @ p.w_xu.value.data + h @ p.w_hu.value.data + p.b_u.value.data)
        c = np.maximum(0.0, x @ p.w_xc.value.data + r * (h @ p.w_hc.value.data)
                       + p.b_c.value.data)
        h = (1.0 - u) * h + u * c
    return h


class TestConvStage:
    def test_zero_parameters_give_zeros(self):
        cfg = EncoderConfig(D=2, T=6, w=3, d_c=4, d=3)
        ps, p = build(cfg)
        zero_params(ps)
        out = conv_stage(ag.tensor(np.random.default_rng(0).standard_normal((2, 6))), cfg, p)
        np.testing.assert_array_equal(out.data, np.zeros((4, 4)))

    def test_negative_preactivation_clips_to_zero(self):
        cfg = EncoderConfig(D=1, T=4, w=1, d_c=1, d=1)
        ps, p = build(cfg)
        zero_params(ps)
        p.conv_bias.value.data[...] = -5.0
        out = conv_stage(ag.tensor(np.zeros((1, 4))), cfg, p)
        np.testing.assert_array_equal(out.data, np.zeros((1, 4)))

    def test_against_direct_summation(self):
        cfg = EncoderConfig(D=2, T=4, w=2, d_c=1, d=2)
        ps, p = build(cfg, seed=5)
        x = np.random.default_rng(6).standard_normal((2, 4))
        out = conv_stage(ag.tensor(x), cfg, p)
        expected = conv_reference(x, p.conv_kernels.value.data, p.conv_bias.value.data)
        np.testing.assert_allclose(out.data, expected, atol=1e-12)

    def test_wrong_input_shape(self):
        cfg = EncoderConfig(D=2, T=6, w=3, d_c=4, d=3)
        ps, p = build(cfg)
        with pytest.raises(ShapeError):
            conv_stage(ag.tensor(np.zeros((3, 6))), cfg, p)


class TestTemporalAttention:
    def test_zero_score_vector_is_identity(self):
        cfg = EncoderConfig(D=2, T=7, w=2, d_c=3, d=2)
        ps, p = build(cfg, seed=1)
        p.attn_weight.value.data[...] = 0.0
        p.attn_bias.value.data[...] = 0.0
        h = ag.tensor(np.random.default_rng(2).standard_normal((3, 6)))
        out = temporal_attention(h, p)
        np.testing.assert_allclose(out.data, h.data, atol=1e-12)

    def test_single_step_is_identity(self):
        cfg = EncoderConfig(D=1, T=1, w=1, d_c=2, d=2)
        ps, p = build(cfg, seed=3)
        h = ag.tensor(np.random.default_rng(4).standard_normal((2, 1)))
        out = temporal_attention(h, p)
        np.testing.assert_allclose(out.data, h.data, atol=1e-12)

    def test_hand_set_scores(self):
        cfg = EncoderConfig(D=1, T=2, w=1, d_c=1, d=1)
        ps, p = build(cfg)
        p.attn_weight.value.data[...] = 1.0
        p.attn_bias.value.data[...] = 0.0
        h = ag.tensor([[np.log(3.0), np.log(1.0)]])  # scores become ln 3, ln 1
        weights = []
        temporal_attention(h, p, weights_out=weights)
        np.testing.assert_allclose(weights[0], [0.75, 0.25], atol=1e-12)


class TestGruStage:
    def test_all_zero_parameters(self):
        cfg = EncoderConfig(D=2, T=5, w=2, d_c=3, d=4)
        ps, p = build(cfg)
        zero_params(ps)
        s = ag.tensor(np.random.default_rng(8).standard_normal((3, 4)))
        out = gru_stage(s, cfg, p)
        np.testing.assert_array_equal(out.data, np.zeros(4))

    def test_against_step_oracle(self):
        cfg = EncoderConfig(D=2, T=3, w=1, d_c=3, d=2)
        ps, p = build(cfg, seed=9)
        s = np.random.default_rng(10).standard_normal((3, 3))
        out = gru_stage(ag.tensor(s), cfg, p)
        np.testing.assert_allclose(out.data, gru_reference(s, p), atol=1e-12)


class TestEncode:
    def test_zero_parameters_give_zero_vector(self):
        cfg = EncoderConfig(D=2, T=5, w=2, d_c=3, d=4, dropout_rate=0.2)
        ps, p = build(cfg)
        zero_params(ps)
        out = encode(ag.tensor(np.random.default_rng(11).standard_normal((2, 5))), cfg, p)
        np.testing.assert_array_equal(out.data, np.zeros(4))

    def test_eval_mode_deterministic(self):
        cfg = EncoderConfig(D=3, T=6, w=2, d_c=4, d=3, dropout_rate=0.5)
        ps, p = build(cfg, seed=12)
        x = ag.tensor(np.random.default_rng(13).standard_normal((3, 6)))
        a = encode(x, cfg, p, training=False, rng=np.random.default_rng(1))
        b = encode(x, cfg, p, training=False, rng=np.random.default_rng(999))
        np.testing.assert_array_equal(a.data, b.data)

    @pytest.mark.parametrize("t_len", [2, 5, 9])
    def test_output_dimension_fixed(self, t_len):
        cfg = EncoderConfig(D=2, T=t_len, w=2, d_c=3, d=4)
        ps, p = build(cfg, seed=14)
        out = encode(ag.tensor(np.random.default_rng(15).standard_normal((2, t_len))), cfg, p)
        assert out.shape == (4,)

    def test_gradients_match_finite_differences(self):
        cfg = EncoderConfig(D=2, T=4, w=2, d_c=3, d=2, dropout_rate=0.0)
        ps, p = build(cfg, seed=16)
        x = np.random.default_rng(17).standard_normal((2, 4))

        def loss():
            return ag.sum_all(encode(ag.tensor(x), cfg, p))

        finite_difference_check(loss, ps)

    def test_training_dropout_draws_from_rng(self):
        cfg = EncoderConfig(D=2, T=5, w=2, d_c=3, d=2, dropout_rate=0.5)
        ps, p = build(cfg, seed=18)
        x = ag.tensor(np.random.default_rng(19).standard_normal((2, 5)))
        a = encode(x, cfg, p, training=True, rng=np.random.default_rng(3))
        b = encode(x, cfg, p, training=True, rng=np.random.default_rng(3))
        c = encode(x, cfg, p, training=True, rng=np.random.default_rng(4))
        np.testing.assert_array_equal(a.data, b.data)
        assert not np.array_equal(a.data, c.data)

    def test_bounded_inputs_stay_finite(self):
        # Unit-bounded parameters and inputs over many random trials.
        cfg = EncoderConfig(D=1, T=3, w=2, d_c=2, d=2, dropout_rate=0.0)
        ps, p = build(cfg)
        rng = np.random.default_rng(20)
        for _ in range(10_000):
            for par in ps:
                par.value.data[...] = rng.uniform(-1, 1, size=par.value.shape)
            x = rng.uniform(-1, 1, size=(1, 3))
            out = encode(ag.tensor(x), cfg, p)
            assert np.all(np.isfinite(out.data))


class TestEncoderConfig:
    def test_kernel_wider_than_window(self):
        with pytest.raises(ConfigError):
            EncoderConfig(D=1, T=3, w=4, d_c=1, d=1)

    def test_bad_dropout(self):
        with pytest.raises(ConfigError):
            EncoderConfig(D=1, T=3, w=2, d_c=1, d=1, dropout_rate=1.0)

    def test_conv_steps(self):
        assert EncoderConfig(D=1, T=24, w=3, d_c=1, d=1).conv_steps == 22
