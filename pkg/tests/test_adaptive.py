"""Adaptive attention: sememe soft attention, the gated LM context, the
scalar mix, and the decoder sublayer built from them."""

import numpy as np
import pytest

import defmod.tensor as T
from defmod.adaptive import (
    AdaptiveDecoderLayer,
    adaptive_mix,
    adaptive_multi_head_layer,
    lm_gate_context,
    sememe_soft_attention,
)
from defmod.layers import Linear
from defmod.tensor import ShapeError, Tensor


@pytest.fixture
def rng():
    return np.random.default_rng(7)


class TestSememeSoftAttention:
    def test_identical_states_give_uniform_alpha(self, f64, rng):
        row = rng.normal(size=4)
        h = Tensor(np.tile(row, (3, 1)))
        w = Tensor(rng.normal(size=6))
        context, alpha = sememe_soft_attention(h, Tensor(rng.normal(size=2)), w)
        assert np.allclose(alpha.data, 1 / 3, atol=1e-12)
        assert np.allclose(context.data, row, atol=1e-12)

    def test_single_position(self, f64, rng):
        h = Tensor(rng.normal(size=(1, 4)))
        w = Tensor(rng.normal(size=6))
        context, alpha = sememe_soft_attention(h, Tensor(rng.normal(size=2)), w)
        assert np.allclose(alpha.data, [1.0])
        assert np.allclose(context.data, h.data[0], atol=1e-12)

    def test_crafted_scores(self, f64):
        # w picks out the first coordinate of h_n; scores are [0, ln 3]
        h = Tensor(np.array([[0.0, 1.0], [np.log(3.0), 2.0]]))
        w = Tensor(np.array([1.0, 0.0, 0.0]))
        z = Tensor(np.zeros(1))
        context, alpha = sememe_soft_attention(h, z, w)
        assert np.allclose(alpha.data, [0.25, 0.75], atol=1e-12)
        assert np.allclose(context.data, 0.25 * h.data[0] + 0.75 * h.data[1], atol=1e-12)

    def test_empty_is_error(self, f64):
        with pytest.raises(ShapeError):
            sememe_soft_attention(Tensor(np.zeros((0, 4))), Tensor(np.zeros(2)),
                                  Tensor(np.zeros(6)))


class TestLmGateContext:
    def test_zero_state_gives_zero(self, f64, rng):
        gate = Linear(5, 3, rng, "gate")
        out = lm_gate_context(Tensor(rng.normal(size=2)), Tensor(np.zeros(3)), gate)
        assert np.all(out.data == 0.0)

    def test_zero_gate_params_halve_tanh(self, f64, rng):
        gate = Linear(5, 3, rng, "gate")
        gate.w.data[:] = 0
        gate.b.data[:] = 0
        z = rng.normal(size=3)
        out = lm_gate_context(Tensor(rng.normal(size=2)), Tensor(z), gate)
        assert np.allclose(out.data, 0.5 * np.tanh(z), atol=1e-12)

    def test_large_negative_bias_closes_gate(self, f64, rng):
        gate = Linear(5, 3, rng, "gate")
        gate.w.data[:] = 0
        gate.b.data[:] = -50.0
        out = lm_gate_context(Tensor(rng.normal(size=2)), Tensor(rng.normal(size=3)), gate)
        assert np.all(np.abs(out.data) < 1e-20)


class TestAdaptiveMix:
    def test_equal_contexts_mix_half(self, f64, rng):
        o = Tensor(rng.normal(size=4))
        z = Tensor(rng.normal(size=4))
        w = Tensor(rng.normal(size=8))
        ctx = adaptive_mix(o, o, z, w)
        assert ctx.beta.item() == pytest.approx(0.5, abs=1e-12)
        assert np.allclose(ctx.c.data, o.data, atol=1e-12)

    def test_log3_gap_gives_three_quarters(self, f64):
        # w_c reads the first coordinate; contexts differ by ln 3 there
        w = Tensor(np.array([1.0, 0.0, 0.0, 0.0]))
        o = Tensor(np.array([np.log(3.0), 5.0]))
        c_hat = Tensor(np.array([0.0, -5.0]))
        ctx = adaptive_mix(o, c_hat, Tensor(np.zeros(2)), w)
        assert ctx.beta.item() == pytest.approx(0.75, abs=1e-12)
        assert np.allclose(ctx.c.data, 0.75 * o.data + 0.25 * c_hat.data, atol=1e-12)

    def test_zero_scores_give_half(self, f64, rng):
        w = Tensor(np.zeros(8))
        ctx = adaptive_mix(Tensor(rng.normal(size=4)), Tensor(rng.normal(size=4)),
                           Tensor(rng.normal(size=4)), w)
        assert ctx.beta.item() == pytest.approx(0.5, abs=1e-15)

    def test_beta_in_open_interval_and_shift_invariant(self, f64, rng):
        # the z_ref contribution adds the same amount to both scores, so
        # beta must not move when z_ref changes
        o = Tensor(rng.normal(size=4))
        c_hat = Tensor(rng.normal(size=4))
        w = Tensor(rng.normal(size=8))
        betas = []
        for _ in range(5):
            ctx = adaptive_mix(o, c_hat, Tensor(rng.normal(size=4) * 10), w)
            assert 0.0 < ctx.beta.item() < 1.0
            betas.append(ctx.beta.item())
        assert np.allclose(betas, betas[0], atol=1e-9)

    def test_monotone_in_score_gap_with_saturation(self, f64):
        w = Tensor(np.array([1.0, 0.0]))
        c_hat = Tensor(np.array([0.0]))
        z = Tensor(np.zeros(1))
        last = -1.0
        for gap in (-40.0, -4.0, 0.0, 4.0, 40.0):
            ctx = adaptive_mix(Tensor(np.array([gap])), c_hat, z, w)
            assert ctx.beta.item() > last
            last = ctx.beta.item()
        assert last > 1.0 - 1e-12          # pure LM context in the +inf limit
        ctx = adaptive_mix(Tensor(np.array([-40.0])), c_hat, z, w)
        assert ctx.beta.item() < 1e-12     # pure sememe context in the -inf limit

    def test_gradients_reach_both_branches(self, f64, rng):
        o = Tensor(rng.normal(size=4), requires_grad=True)
        c_hat = Tensor(rng.normal(size=4), requires_grad=True)
        w = Tensor(rng.normal(size=8), requires_grad=True)
        ctx = adaptive_mix(o, c_hat, Tensor(rng.normal(size=4)), w)
        T.sum_all(T.mul(ctx.c, ctx.c)).backward()
        assert np.abs(o.grad).max() > 0
        assert np.abs(c_hat.grad).max() > 0
        assert np.abs(w.grad).max() > 0

    def test_mismatched_dims_rejected(self, f64):
        with pytest.raises(ShapeError):
            adaptive_mix(Tensor(np.zeros(3)), Tensor(np.zeros(4)),
                         Tensor(np.zeros(3)), Tensor(np.zeros(6)))

    def test_beta_override(self, f64, rng):
        o = Tensor(rng.normal(size=3))
        c_hat = Tensor(rng.normal(size=3))
        ctx = adaptive_mix(o, c_hat, Tensor(np.zeros(3)), Tensor(np.zeros(6)),
                           beta_override=1.0)
        assert np.allclose(ctx.c.data, o.data)


def _layer(rng, dim=6, heads=2, hidden=12):
    return AdaptiveDecoderLayer(dim, hidden, heads, rng, "dec.0")


class TestAdaptiveDecoderLayer:
    def test_zero_value_projection_tied_scores_halves_lm_context(self, f64, rng):
        layer = _layer(rng)
        layer.enc_attn.wv.w.data[:] = 0
        layer.enc_attn.wv.b.data[:] = 0
        layer.enc_attn.wo.b.data[:] = 0
        layer.w_c.data[:] = 0  # tied beta scores
        z_prefix = Tensor(rng.normal(size=(3, 6)))
        h_enc = Tensor(rng.normal(size=(4, 6)))
        c, beta, _ = adaptive_multi_head_layer(layer, z_prefix, h_enc)
        assert beta.item() == pytest.approx(0.5, abs=1e-15)
        # reconstruct o_t through the layer's own self-attention sublayer
        z_t = T.reshape(T.narrow(z_prefix, 0, 2, 1), (6,))
        o_t = layer.norm_self(T.add(z_t, layer.self_attn.attend(z_t, z_prefix, z_prefix)))
        assert np.allclose(c.data, 0.5 * o_t.data, atol=1e-12)

    def test_single_step_single_slot_collapses(self, f64, rng):
        layer = _layer(rng)
        z = Tensor(rng.normal(size=(1, 6)))
        h = Tensor(rng.normal(size=(1, 6)))
        c, beta, alpha = adaptive_multi_head_layer(layer, z, h)
        assert c.shape == (6,)
        assert 0.0 < beta.item() < 1.0
        assert np.allclose(alpha, 1.0)  # single encoder slot takes all weight

    def test_causal_exactness_in_sequence_form(self, f64, rng):
        layer = _layer(rng)
        h_enc = Tensor(rng.normal(size=(3, 6)))
        z = rng.normal(size=(5, 6))
        base = layer.forward_seq(Tensor(z), h_enc).data
        bumped = z.copy()
        bumped[4] += 3.0
        out = layer.forward_seq(Tensor(bumped), h_enc).data
        assert np.array_equal(base[:4], out[:4])  # bitwise: positions <= 3

    def test_sequence_form_matches_single_position_form(self, f64, rng):
        layer = _layer(rng)
        h_enc = Tensor(rng.normal(size=(4, 6)))
        z = Tensor(rng.normal(size=(3, 6)))
        seq = layer.forward_seq(z, h_enc).data
        for t in range(3):
            prefix = T.narrow(z, 0, 0, t + 1)
            c, _, _ = adaptive_multi_head_layer(layer, prefix, h_enc)
            z_t = T.reshape(T.narrow(z, 0, t, 1), (6,))
            sub = layer.norm_out(T.add(z_t, c))
            want = layer.norm_ffn(T.add(sub, layer.ffn(sub))).data
            assert np.allclose(seq[t], want, atol=1e-10)

    def test_ablated_form_is_standard_sublayer_stack(self, f64, rng):
        layer = _layer(rng)
        z = Tensor(rng.normal(size=(2, 6)))
        h_enc = Tensor(rng.normal(size=(3, 6)))
        out, beta, _ = adaptive_multi_head_layer(layer, z, h_enc, use_adaptive=False)
        assert beta is None
        z_t = T.reshape(T.narrow(z, 0, 1, 1), (6,))
        o_t = layer.norm_self(T.add(z_t, layer.self_attn.attend(z_t, z, z)))
        c_hat = layer.enc_attn.attend(o_t, h_enc, h_enc)
        want = layer.norm_out(T.add(o_t, c_hat)).data
        assert np.allclose(out.data, want, atol=1e-12)

    def test_beta_trace_recorded_per_position(self, f64, rng):
        layer = _layer(rng)
        trace = []
        layer.forward_seq(Tensor(rng.normal(size=(3, 6))),
                          Tensor(rng.normal(size=(2, 6))), trace=trace, layer_index=5)
        assert [r["t"] for r in trace] == [0, 1, 2]
        assert all(r["layer"] == 5 for r in trace)
        assert all(0.0 < r["beta"] < 1.0 for r in trace)
        assert all(abs(sum(r["alpha"]) - 1.0) < 1e-6 for r in trace)

    def test_empty_inputs_rejected(self, f64, rng):
        layer = _layer(rng)
        good = Tensor(np.zeros((2, 6)))
        with pytest.raises(ShapeError):
            adaptive_multi_head_layer(layer, Tensor(np.zeros((0, 6))), good)
        with pytest.raises(ShapeError):
            adaptive_multi_head_layer(layer, good, Tensor(np.zeros((0, 6))))
