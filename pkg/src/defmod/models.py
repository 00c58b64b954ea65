"""The three definition generators.

All models share one calling convention:

    logits(word_id, sememe_ids, char_ids, prefix_ids) -> Tensor[T, V]

where prefix_ids is the BOS-led teacher-forcing prefix and row t scores
the token at position t. Arguments a model does not use are ignored.
"""

import numpy as np

from . import tensor as T
from .adaptive import AdaptiveDecoderLayer, adaptive_mix, lm_gate_context, sememe_soft_attention
from .config import ModelConfig
from .data import BOS
from .layers import (
    BiLstmEncoder,
    CharCnn,
    EmbeddingTable,
    Linear,
    LstmStack,
    PositionTable,
    SelfAttentionLayer,
    add_position_embeddings,
    parameter,
)
from .tensor import ShapeError, Tensor


class BaselineRnn:
    """Word-conditioned LSTM language model: the word embedding (optionally
    concatenated with a char-CNN embedding) primes the recurrence, then the
    definition prefix is teacher-forced. Output layer is W z_t + b."""

    arch = "baseline"

    def __init__(self, config: ModelConfig, n_src: int, n_tgt: int, n_char: int = 0,
                 rng=None, src_matrix=None, freeze_embeddings=False):
        cfg = config
        self.config = cfg
        self.src_emb = EmbeddingTable(n_src, cfg.d_model, rng, frozen=freeze_embeddings,
                                      name="src_emb", matrix=src_matrix)
        self.tgt_emb = EmbeddingTable(n_tgt, cfg.d_model, rng, name="tgt_emb")
        self.char_cnn = None
        char_dim = 0
        if cfg.use_char_cnn:
            if n_char == 0:
                raise ShapeError("use_char_cnn requires a character vocabulary")
            self.char_cnn = CharCnn(n_char, cfg.char_dim, cfg.char_widths,
                                    cfg.char_filters, rng)
            char_dim = self.char_cnn.out_dim
        self.char_dim = char_dim
        self.decoder = LstmStack(cfg.rnn_layers, cfg.d_model + char_dim,
                                 cfg.rnn_hidden, rng, "decoder")
        self.out = Linear(cfg.rnn_hidden, n_tgt, rng, "out")

    def logits(self, word_id: int, sememe_ids=None, char_ids=None, prefix_ids=None,
               trace=None, beta_override=None) -> Tensor:
        prefix_ids = list(prefix_ids)
        if not prefix_ids or prefix_ids[0] != BOS:
            raise ShapeError("definition prefix must begin with BOS")
        word_vec = T.reshape(self.src_emb.lookup([word_id]), (self.config.d_model,))
        if self.char_cnn is not None:
            word_vec = T.concat([word_vec, self.char_cnn.embed(char_ids)], axis=-1)
        states = self.decoder.initial_state(word_vec)
        _, states = self.decoder.step(word_vec, states)  # priming step, no prediction
        rows = []
        for tok in prefix_ids:
            x = T.reshape(self.tgt_emb.lookup([tok]), (self.config.d_model,))
            if self.char_dim:
                x = T.concat([x, T.zeros((self.char_dim,), like=x)], axis=-1)
            z, states = self.decoder.step(x, states)
            rows.append(self.out(z))
        return T.stack_rows(rows)

    def named_params(self):
        out = self.src_emb.named_params() + self.tgt_emb.named_params()
        if self.char_cnn is not None:
            out += self.char_cnn.named_params()
        return out + self.decoder.named_params() + self.out.named_params()


class AdaptiveRnn:
    """Bidirectional-LSTM encoder over [word ; sememe] rows, LSTM decoder
    with per-step adaptive attention: soft attention summarizes the
    sememes, a gated unit summarizes the decoder's own state, and a scalar
    gate mixes the two into the context fed to the recurrence and the
    output layer W [z_t ; c_t] + b."""

    arch = "aam"

    def __init__(self, config: ModelConfig, n_src: int, n_tgt: int, n_char: int = 0,
                 rng=None, src_matrix=None, freeze_embeddings=False):
        cfg = config
        self.config = cfg
        d, hidden = cfg.d_model, cfg.rnn_hidden
        self.src_emb = EmbeddingTable(n_src, d, rng, frozen=freeze_embeddings,
                                      name="src_emb", matrix=src_matrix)
        self.tgt_emb = EmbeddingTable(n_tgt, d, rng, name="tgt_emb")
        # per-direction size hidden//2 so [fwd;bwd] matches the decoder state
        self.encoder = BiLstmEncoder(2 * d, hidden // 2, cfg.rnn_layers, rng, "encoder")
        self.decoder = LstmStack(cfg.rnn_layers, d + hidden, hidden, rng, "decoder")
        self.w_chat = parameter(rng, (2 * hidden,), "w_chat")
        self.gate = Linear(d + hidden, hidden, rng, "gate")
        self.w_c = parameter(rng, (2 * hidden,), "w_c")
        self.out = Linear(2 * hidden, n_tgt, rng, "out")

    def encode(self, word_id: int, sememe_ids) -> Tensor:
        sememe_ids = list(sememe_ids)
        if not sememe_ids:
            raise ShapeError("this architecture needs at least one sememe")
        n = len(sememe_ids)
        word_rows = self.src_emb.lookup([word_id] * n)
        sem_rows = self.src_emb.lookup(sememe_ids)
        return self.encoder.encode(T.concat([word_rows, sem_rows], axis=-1))

    def logits(self, word_id: int, sememe_ids=None, char_ids=None, prefix_ids=None,
               trace=None, beta_override=None) -> Tensor:
        prefix_ids = list(prefix_ids)
        if not prefix_ids or prefix_ids[0] != BOS:
            raise ShapeError("definition prefix must begin with BOS")
        cfg = self.config
        h = self.encode(word_id, sememe_ids)
        states = self.decoder.initial_state(h)
        z_prev = T.zeros((cfg.rnn_hidden,), like=h)
        rows = []
        for t, tok in enumerate(prefix_ids):
            y_emb = T.reshape(self.tgt_emb.lookup([tok]), (cfg.d_model,))
            c_hat, alpha = sememe_soft_attention(h, z_prev, self.w_chat)
            o = lm_gate_context(y_emb, z_prev, self.gate)
            ctx = adaptive_mix(o, c_hat, z_prev, self.w_c, alpha=alpha,
                               beta_override=beta_override)
            if trace is not None:
                trace.append({"t": t, "layer": 0, "beta": ctx.beta.item(),
                              "alpha": alpha.data.tolist()})
            z_prev, states = self.decoder.step(T.concat([y_emb, ctx.c], axis=-1), states)
            rows.append(self.out(T.concat([z_prev, ctx.c], axis=-1)))
        return T.stack_rows(rows)

    def named_params(self):
        return (self.src_emb.named_params() + self.tgt_emb.named_params()
                + self.encoder.named_params() + self.decoder.named_params()
                + [("w_chat", self.w_chat)] + self.gate.named_params()
                + [("w_c", self.w_c)] + self.out.named_params())


class AdaptiveTransformer:
    """Self-attention encoder over [word, sememe...] slots with learned
    position embeddings; decoder stack of adaptive multi-head attention +
    feed-forward layers; final linear over the top decoder state."""

    arch = "saam"

    def __init__(self, config: ModelConfig, n_src: int, n_tgt: int, n_char: int = 0,
                 rng=None, src_matrix=None, freeze_embeddings=False):
        cfg = config
        self.config = cfg
        d = cfg.d_model
        self.src_emb = EmbeddingTable(n_src, d, rng, frozen=freeze_embeddings,
                                      name="src_emb", matrix=src_matrix)
        self.tgt_emb = EmbeddingTable(n_tgt, d, rng, name="tgt_emb")
        self.positions = PositionTable(cfg.max_sememes, d, rng)
        self.enc_layers = [
            SelfAttentionLayer(d, cfg.d_hidden, cfg.n_head, rng, f"enc.{i}")
            for i in range(cfg.n_layer)
        ]
        self.dec_layers = [
            AdaptiveDecoderLayer(d, cfg.d_hidden, cfg.n_head, rng, f"dec.{i}")
            for i in range(cfg.n_layer)
        ]
        self.out = Linear(d, n_tgt, rng, "out")

    def encode(self, word_id: int, sememe_ids) -> Tensor:
        sememe_ids = list(sememe_ids) if self.config.use_sememes else []
        if len(sememe_ids) > self.config.max_sememes:
            raise ShapeError(
                f"{len(sememe_ids)} sememes exceed max_sememes={self.config.max_sememes}")
        v = self.src_emb.lookup([word_id] + sememe_ids)  # slot 0 = the word
        v = add_position_embeddings(v, self.positions, enabled=self.config.use_position)
        for layer in self.enc_layers:
            v = layer(v)
        return v

    def logits(self, word_id: int, sememe_ids=None, char_ids=None, prefix_ids=None,
               trace=None, beta_override=None) -> Tensor:
        prefix_ids = list(prefix_ids)
        if not prefix_ids or prefix_ids[0] != BOS:
            raise ShapeError("definition prefix must begin with BOS")
        if len(prefix_ids) > self.config.max_def_len + 1:
            raise ShapeError(
                f"prefix of {len(prefix_ids) - 1} tokens exceeds max_def_len="
                f"{self.config.max_def_len}")
        h = self.encode(word_id, sememe_ids)
        z = self.tgt_emb.lookup(prefix_ids)
        for i, layer in enumerate(self.dec_layers):
            z = layer.forward_seq(z, h, use_adaptive=self.config.use_adaptive,
                                  trace=trace, layer_index=i)
        return self.out(z)

    def named_params(self):
        out = (self.src_emb.named_params() + self.tgt_emb.named_params()
               + self.positions.named_params())
        for layer in self.enc_layers:
            out += layer.named_params()
        for layer in self.dec_layers:
            out += layer.named_params()
        return out + self.out.named_params()


MODEL_CLASSES = {"baseline": BaselineRnn, "aam": AdaptiveRnn, "saam": AdaptiveTransformer}


def build_model(config: ModelConfig, n_src: int, n_tgt: int, n_char: int = 0,
                rng=None, src_matrix=None, freeze_embeddings=False):
    config.validate()
    if rng is None:
        rng = np.random.default_rng(config.seed)
    cls = MODEL_CLASSES[config.arch]
    return cls(config, n_src, n_tgt, n_char, rng=rng, src_matrix=src_matrix,
               freeze_embeddings=freeze_embeddings)


def probability_rows(logits: Tensor) -> np.ndarray:
    """softmax of each logits row, computed outside the graph."""
    d = logits.data
    m = d.max(axis=-1, keepdims=True)
    e = np.exp(d - m)
    return e / e.sum(axis=-1, keepdims=True)


def sequence_log_prob(logits: Tensor, target_ids) -> float:
    """Sum of stepwise log P(target_t | prefix_t): the chain rule."""
    d = np.asarray(logits.data, dtype=np.float64)
    m = d.max(axis=-1, keepdims=True)
    logp = d - (m + np.log(np.exp(d - m).sum(axis=-1, keepdims=True)))
    rows = np.arange(len(target_ids))
    return float(logp[rows, np.asarray(target_ids)].sum())
