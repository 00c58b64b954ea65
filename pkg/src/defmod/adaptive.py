"""Adaptive attention: sememe soft attention, the gated LM context, the
scalar mixing gate beta, and the decoder sublayer that computes both
contexts with multi-head attention and mixes them per position and layer.

beta is the two-way softmax over the LM-context score and the
sememe-context score; beta -> 1 means the decoder relies on its own
language-model state, beta -> 0 means it relies on the sememes.
"""

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .layers import FeedForward, LayerNormParams, Linear, MultiHeadAttention, parameter
from .tensor import ShapeError, Tensor


@dataclass
class AdaptiveContext:
    """Mixed context c = beta * lm + (1 - beta) * sememe."""

    c: Tensor
    beta: Tensor
    alpha: Tensor | None = None


def sememe_soft_attention(h: Tensor, z_prev: Tensor, w: Tensor):
    """Soft attention over encoder states h [N,2H], scored against the
    previous decoder state: e_n = w . [h_n ; z_prev].

    Returns (context [2H], alpha [N]).
    """
    if h.data.ndim != 2 or h.shape[0] < 1:
        raise ShapeError(f"sememe_soft_attention: need nonempty [N,2H] states, got {h.shape}")
    n, enc_dim = h.shape
    if w.shape != (enc_dim + z_prev.shape[0],):
        raise ShapeError("sememe_soft_attention: score vector does not fit [h;z]")
    w_h = T.narrow(w, 0, 0, enc_dim)
    w_z = T.narrow(w, 0, enc_dim, z_prev.shape[0])
    scores = T.add_scalar_t(T.matvec(h, w_h), T.dot(w_z, z_prev))
    alpha = T.softmax_lastdim(scores)
    context = T.reshape(T.matmul(T.reshape(alpha, (1, n)), h), (enc_dim,))
    return context, alpha


def lm_gate_context(y_prev_emb: Tensor, z_prev: Tensor, gate: Linear) -> Tensor:
    """Gated language-model context: sigmoid(W[y;z] + b) * tanh(z)."""
    g = T.sigmoid(gate(T.concat([y_prev_emb, z_prev], axis=-1)))
    return T.mul(g, T.tanh(z_prev))


def adaptive_mix(o: Tensor, c_hat: Tensor, z_ref: Tensor, w_c: Tensor,
                 alpha: Tensor | None = None,
                 beta_override: float | None = None) -> AdaptiveContext:
    """Two-way softmax over scores w_c.[o;z] vs w_c.[c_hat;z]; the result
    mixes the contexts: c = beta*o + (1-beta)*c_hat.

    `beta_override` bypasses the scores with a fixed gate value; it exists
    for diagnostics (e.g. pinning the gate fully onto the LM context).
    """
    if o.shape != c_hat.shape:
        raise ShapeError(f"adaptive_mix: context dims differ, {o.shape} vs {c_hat.shape}")
    if beta_override is not None:
        beta = Tensor(np.asarray(beta_override, dtype=o.data.dtype))
    else:
        e_o = T.dot(w_c, T.concat([o, z_ref], axis=-1))
        e_c = T.dot(w_c, T.concat([c_hat, z_ref], axis=-1))
        pair = T.softmax_lastdim(T.stack_rows([e_o, e_c]))
        beta = T.reshape(T.narrow(pair, 0, 0, 1), ())
    one_minus = T.add_const(T.neg(beta), 1.0)
    mixed = T.add(T.smul(beta, o), T.smul(one_minus, c_hat))
    return AdaptiveContext(c=mixed, beta=beta, alpha=alpha)


class AdaptiveDecoderLayer:
    """SAAM decoder layer: masked multi-head self-attention (residual +
    norm) produces the LM context, multi-head attention over the encoder
    outputs produces the sememe context, and a per-position scalar gate
    mixes them. A second residual + norm wraps the mixed output, then the
    feed-forward sublayer (residual + norm) follows.

    With use_adaptive=False the gate path is removed and the layer is the
    standard sublayer stack: self-attention and encoder attention, each
    with residual + norm, then feed-forward.
    """

    def __init__(self, dim: int, d_hidden: int, n_head: int, rng, name: str):
        self.dim = dim
        self.self_attn = MultiHeadAttention(dim, n_head, rng, f"{name}.self_attn")
        self.norm_self = LayerNormParams(dim, f"{name}.norm_self")
        self.enc_attn = MultiHeadAttention(dim, n_head, rng, f"{name}.enc_attn")
        self.norm_out = LayerNormParams(dim, f"{name}.norm_out")
        self.ffn = FeedForward(dim, d_hidden, rng, f"{name}.ffn")
        self.norm_ffn = LayerNormParams(dim, f"{name}.norm_ffn")
        self.w_c = parameter(rng, (2 * dim,), f"{name}.w_c")

    def forward_seq(self, z_prev: Tensor, h_enc: Tensor, use_adaptive: bool = True,
                    trace: list | None = None, layer_index: int = 0) -> Tensor:
        """Advance the whole prefix [T,d] one layer (causal)."""
        if z_prev.data.ndim != 2 or z_prev.shape[0] < 1:
            raise ShapeError("adaptive layer: empty decoder prefix")
        if h_enc.data.ndim != 2 or h_enc.shape[0] < 1:
            raise ShapeError("adaptive layer: empty encoder output")
        t_len = z_prev.shape[0]
        causal = np.tril(np.ones((t_len, t_len), dtype=bool))
        self_out = self.self_attn.attend(z_prev, z_prev, z_prev, mask=causal)
        o = self.norm_self(T.add(z_prev, self_out))
        enc_out, enc_weights = self.enc_attn.attend(o, h_enc, h_enc, return_weights=True)
        if not use_adaptive:
            sub = self.norm_out(T.add(o, enc_out))
            if trace is not None:
                for t in range(t_len):
                    trace.append({"t": t, "layer": layer_index, "beta": None,
                                  "alpha": enc_weights[:, t, :].mean(axis=0).tolist()})
            return self.norm_ffn(T.add(sub, self.ffn(sub)))

        rows = []
        for t in range(t_len):
            o_t = T.reshape(T.narrow(o, 0, t, 1), (self.dim,))
            c_hat_t = T.reshape(T.narrow(enc_out, 0, t, 1), (self.dim,))
            z_t = T.reshape(T.narrow(z_prev, 0, t, 1), (self.dim,))
            ctx = adaptive_mix(o_t, c_hat_t, z_t, self.w_c)
            rows.append(ctx.c)
            if trace is not None:
                trace.append({"t": t, "layer": layer_index, "beta": ctx.beta.item(),
                              "alpha": enc_weights[:, t, :].mean(axis=0).tolist()})
        sub = self.norm_out(T.add(z_prev, T.stack_rows(rows)))
        return self.norm_ffn(T.add(sub, self.ffn(sub)))

    def named_params(self):
        return (self.self_attn.named_params() + self.norm_self.named_params()
                + self.enc_attn.named_params() + self.norm_out.named_params()
                + self.ffn.named_params() + self.norm_ffn.named_params()
                + [(self.w_c.name, self.w_c)])


def adaptive_multi_head_layer(layer: AdaptiveDecoderLayer, z_prefix: Tensor,
                              h_enc: Tensor, use_adaptive: bool = True):
    """Single-position form for the newest prefix position t.

    Returns (context [d], beta, alpha_per_head) where the context is the
    mixed c_t (adaptive) or the residual+norm composition of the encoder
    attention over the LM context (ablated, beta is None).
    """
    if z_prefix.data.ndim != 2 or z_prefix.shape[0] < 1:
        raise ShapeError("adaptive_multi_head_layer: empty decoder prefix")
    if h_enc.data.ndim != 2 or h_enc.shape[0] < 1:
        raise ShapeError("adaptive_multi_head_layer: empty encoder output")
    t = z_prefix.shape[0] - 1
    z_t = T.reshape(T.narrow(z_prefix, 0, t, 1), (layer.dim,))
    self_out = layer.self_attn.attend(z_t, z_prefix, z_prefix)
    o_t = layer.norm_self(T.add(z_t, self_out))
    c_hat_t, alpha = layer.enc_attn.attend(o_t, h_enc, h_enc, return_weights=True)
    if not use_adaptive:
        return layer.norm_out(T.add(o_t, c_hat_t)), None, alpha[:, 0, :]
    ctx = adaptive_mix(o_t, c_hat_t, z_t, layer.w_c)
    return ctx.c, ctx.beta, alpha[:, 0, :]
