"""Neural building blocks: embeddings, char-CNN, LSTM, bidirectional
encoder, multi-head attention, and the position-wise feed-forward sublayer.

All layers are plain parameter holders; forward methods are pure functions
of their inputs and read-only parameters, so independent graphs can be
evaluated concurrently.
"""

import logging

import numpy as np

from . import tensor as T
from .tensor import ShapeError, Tensor

log = logging.getLogger(__name__)


def xavier_uniform(rng: np.random.Generator, shape, dtype=None) -> np.ndarray:
    """Xavier/Glorot uniform init; vectors are treated as fan_out=1."""
    if len(shape) >= 2:
        fan_in, fan_out = shape[0], shape[1]
    else:
        fan_in, fan_out = shape[0], 1
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype or T.default_dtype())


def parameter(rng, shape, name, zero=False) -> Tensor:
    data = np.zeros(shape, dtype=T.default_dtype()) if zero else xavier_uniform(rng, shape)
    return Tensor(data, requires_grad=True, name=name)


class Linear:
    def __init__(self, d_in: int, d_out: int, rng, name: str):
        self.w = parameter(rng, (d_in, d_out), f"{name}.w")
        self.b = parameter(rng, (d_out,), f"{name}.b", zero=True)

    def __call__(self, x: Tensor) -> Tensor:
        if x.data.ndim == 1:
            return T.add(T.vecmat(x, self.w), self.b)
        return T.bias_add(T.matmul(x, self.w), self.b)

    def named_params(self):
        return [(self.w.name, self.w), (self.b.name, self.b)]


class EmbeddingTable:
    """Token embedding matrix [V,d]; frozen tables never receive gradients."""

    def __init__(self, size: int, dim: int, rng=None, frozen: bool = False,
                 name: str = "emb", matrix: np.ndarray | None = None):
        if matrix is not None:
            if matrix.shape != (size, dim):
                raise ShapeError(f"embedding matrix shape {matrix.shape} != ({size},{dim})")
            data = np.asarray(matrix, dtype=T.default_dtype())
        else:
            data = xavier_uniform(rng, (size, dim))
        self.size = size
        self.dim = dim
        self.frozen = frozen
        self.weight = Tensor(data, requires_grad=not frozen, name=f"{name}.weight")

    def lookup(self, ids) -> Tensor:
        ids = np.asarray(list(ids), dtype=np.int64)
        if ids.size and (ids.min() < 0 or ids.max() >= self.size):
            raise ShapeError(f"embedding id out of range (vocab size {self.size})")
        return T.take_rows(self.weight, ids)

    def named_params(self):
        return [(self.weight.name, self.weight)]


def load_pretrained_embeddings(path, tokens: list, dim: int):
    """Read a text embedding file: one `token v1 .. vd` line per token, an
    optional leading `V d` header. Tokens absent from the file come back as
    zero rows and are reported (returned and logged).
    """
    vectors = {}
    with open(path, encoding="utf-8") as fh:
        first = fh.readline()
        parts = first.split()
        header = len(parts) == 2 and all(p.lstrip("-").isdigit() for p in parts)
        if not header and parts:
            _store_vector(vectors, parts, dim, 1)
        for lineno, line in enumerate(fh, start=2):
            parts = line.split()
            if parts:
                _store_vector(vectors, parts, dim, lineno)
    matrix = np.zeros((len(tokens), dim), dtype=T.default_dtype())
    missing = []
    for i, tok in enumerate(tokens):
        vec = vectors.get(tok)
        if vec is None:
            missing.append(tok)
        else:
            matrix[i] = vec
    if missing:
        log.info("embeddings: %d/%d tokens missing from %s, left at zero",
                 len(missing), len(tokens), path)
    return matrix, missing


def _store_vector(vectors, parts, dim, lineno):
    if len(parts) != dim + 1:
        raise ValueError(f"embedding line {lineno}: expected {dim} values, got {len(parts) - 1}")
    vectors[parts[0]] = np.array([float(v) for v in parts[1:]], dtype=np.float64)


class PositionTable:
    """Learned position embeddings, rows 0..n_max."""

    def __init__(self, n_max: int, dim: int, rng, name: str = "pos"):
        self.n_max = n_max
        self.dim = dim
        self.weight = parameter(rng, (n_max + 1, dim), f"{name}.weight")

    def named_params(self):
        return [(self.weight.name, self.weight)]


def add_position_embeddings(v: Tensor, table: PositionTable, enabled: bool = True) -> Tensor:
    """Add row n of the table to input slot n. With enabled=False this is
    exactly the identity (same tensor back)."""
    if not enabled:
        return v
    n = v.shape[0]
    if n > table.n_max + 1:
        raise ShapeError(f"sequence of {n} slots exceeds position table ({table.n_max + 1})")
    rows = T.take_rows(table.weight, np.arange(n))
    return T.add(v, rows)


# ---------------------------------------------------------------------------
# Recurrent cells


class LstmCell:
    """Single LSTM cell; gate order i, f, g, o. Forget-gate bias starts at 1."""

    def __init__(self, d_in: int, d_hidden: int, rng, name: str):
        self.d_in = d_in
        self.d_hidden = d_hidden
        self.wx = parameter(rng, (d_in, 4 * d_hidden), f"{name}.wx")
        self.wh = parameter(rng, (d_hidden, 4 * d_hidden), f"{name}.wh")
        bias = np.zeros(4 * d_hidden, dtype=T.default_dtype())
        bias[d_hidden:2 * d_hidden] = 1.0
        self.b = Tensor(bias, requires_grad=True, name=f"{name}.b")

    def step(self, x: Tensor, h: Tensor, c: Tensor):
        z = T.joint_affine(x, self.wx, h, self.wh, self.b)
        c_new = T.lstm_state(z, c)
        h_new = T.lstm_out(z, c_new)
        return h_new, c_new

    def named_params(self):
        return [(self.wx.name, self.wx), (self.wh.name, self.wh), (self.b.name, self.b)]


class LstmStack:
    """Stacked LSTM; layer k feeds its hidden state to layer k+1."""

    def __init__(self, n_layers: int, d_in: int, d_hidden: int, rng, name: str):
        self.d_hidden = d_hidden
        self.cells = [
            LstmCell(d_in if k == 0 else d_hidden, d_hidden, rng, f"{name}.{k}")
            for k in range(n_layers)
        ]

    def initial_state(self, like: Tensor):
        return [(T.zeros((self.d_hidden,), like=like), T.zeros((self.d_hidden,), like=like))
                for _ in self.cells]

    def step(self, x: Tensor, states: list):
        new_states = []
        inp = x
        for cell, (h, c) in zip(self.cells, states):
            h, c = cell.step(inp, h, c)
            new_states.append((h, c))
            inp = h
        return inp, new_states

    def named_params(self):
        return [p for cell in self.cells for p in cell.named_params()]


class BiLstmEncoder:
    """Forward and backward stacks over the same inputs; per-position
    output is [fwd_state ; bwd_state]."""

    def __init__(self, d_in: int, d_dir: int, n_layers: int, rng, name: str = "bilstm"):
        self.fwd = LstmStack(n_layers, d_in, d_dir, rng, f"{name}.fwd")
        self.bwd = LstmStack(n_layers, d_in, d_dir, rng, f"{name}.bwd")

    def encode(self, v: Tensor) -> Tensor:
        if v.data.ndim != 2 or v.shape[0] < 1:
            raise ShapeError(f"bilstm_encode: need a nonempty [N,d] input, got {v.shape}")
        n = v.shape[0]
        rows = [T.reshape(T.narrow(v, 0, k, 1), (v.shape[1],)) for k in range(n)]
        fwd_states = []
        state = self.fwd.initial_state(v)
        for k in range(n):
            top, state = self.fwd.step(rows[k], state)
            fwd_states.append(top)
        bwd_states = [None] * n
        state = self.bwd.initial_state(v)
        for k in reversed(range(n)):
            top, state = self.bwd.step(rows[k], state)
            bwd_states[k] = top
        return T.stack_rows([T.concat([fwd_states[k], bwd_states[k]], axis=-1) for k in range(n)])

    def named_params(self):
        return self.fwd.named_params() + self.bwd.named_params()


def bilstm_encode(encoder: BiLstmEncoder, v: Tensor) -> Tensor:
    return encoder.encode(v)


# ---------------------------------------------------------------------------
# Attention


class MultiHeadAttention:
    """Scaled dot-product attention with n_head heads and output projection.

    Masked key positions get weight exactly 0; a query with every key
    masked is an error. `attend` takes queries [T,d] (or a single [d]) and
    an optional boolean mask [T,M] or [M] (True = visible).
    """

    def __init__(self, dim: int, n_head: int, rng, name: str):
        if dim % n_head != 0:
            raise ShapeError(f"model dim {dim} not divisible by {n_head} heads")
        self.dim = dim
        self.n_head = n_head
        self.d_head = dim // n_head
        self.wq = Linear(dim, dim, rng, f"{name}.wq")
        self.wk = Linear(dim, dim, rng, f"{name}.wk")
        self.wv = Linear(dim, dim, rng, f"{name}.wv")
        self.wo = Linear(dim, dim, rng, f"{name}.wo")

    def attend(self, queries: Tensor, keys: Tensor, values: Tensor,
               mask: np.ndarray | None = None, return_weights: bool = False):
        single = queries.data.ndim == 1
        q = T.reshape(queries, (1, self.dim)) if single else queries
        if keys.data.ndim != 2 or keys.shape[0] < 1:
            raise ShapeError("attention needs at least one key")
        if keys.shape != values.shape or keys.shape[1] != self.dim:
            raise ShapeError(
                f"attention shapes disagree: q {q.shape} k {keys.shape} v {values.shape}")
        t_len, m_len = q.shape[0], keys.shape[0]
        if mask is not None:
            mask = np.broadcast_to(np.asarray(mask, dtype=bool), (t_len, m_len))
            if not mask.any(axis=-1).all():
                raise ShapeError("attention: a query has all key positions masked")

        qp, kp, vp = self.wq(q), self.wk(keys), self.wv(values)
        scale = 1.0 / np.sqrt(self.d_head)
        head_outs = []
        weights = []
        for h in range(self.n_head):
            lo = h * self.d_head
            qh = T.narrow(qp, -1, lo, self.d_head)
            kh = T.narrow(kp, -1, lo, self.d_head)
            vh = T.narrow(vp, -1, lo, self.d_head)
            scores = T.scale(T.matmul(qh, T.transpose2d(kh)), scale)
            alpha = T.softmax_lastdim(scores, mask)
            head_outs.append(T.matmul(alpha, vh))
            if return_weights:
                weights.append(alpha.data.copy())
        out = self.wo(T.concat(head_outs, axis=-1))
        if single:
            out = T.reshape(out, (self.dim,))
        if return_weights:
            return out, np.stack(weights, axis=0)
        return out

    def named_params(self):
        return (self.wq.named_params() + self.wk.named_params()
                + self.wv.named_params() + self.wo.named_params())


def multi_head_attention(layer: MultiHeadAttention, query: Tensor, keys: Tensor,
                         values: Tensor, mask=None) -> Tensor:
    """Single-query form: query [d] against keys/values [M,d]."""
    return layer.attend(query, keys, values, mask)


class FeedForward:
    """Position-wise Linear -> ReLU -> Linear, applied row by row."""

    def __init__(self, dim: int, d_hidden: int, rng, name: str):
        self.lin1 = Linear(dim, d_hidden, rng, f"{name}.lin1")
        self.lin2 = Linear(d_hidden, dim, rng, f"{name}.lin2")

    def __call__(self, x: Tensor) -> Tensor:
        return self.lin2(T.relu(self.lin1(x)))

    def named_params(self):
        return self.lin1.named_params() + self.lin2.named_params()


class LayerNormParams:
    def __init__(self, dim: int, name: str):
        self.gain = Tensor(np.ones(dim, dtype=T.default_dtype()), requires_grad=True,
                           name=f"{name}.gain")
        self.bias = Tensor(np.zeros(dim, dtype=T.default_dtype()), requires_grad=True,
                           name=f"{name}.bias")

    def __call__(self, x: Tensor) -> Tensor:
        return T.layer_norm(x, self.gain, self.bias)

    def named_params(self):
        return [(self.gain.name, self.gain), (self.bias.name, self.bias)]


class SelfAttentionLayer:
    """Encoder layer: self-attention and feed-forward sublayers, each with
    residual connection followed by layer normalization."""

    def __init__(self, dim: int, d_hidden: int, n_head: int, rng, name: str):
        self.attn = MultiHeadAttention(dim, n_head, rng, f"{name}.attn")
        self.norm1 = LayerNormParams(dim, f"{name}.norm1")
        self.ffn = FeedForward(dim, d_hidden, rng, f"{name}.ffn")
        self.norm2 = LayerNormParams(dim, f"{name}.norm2")

    def __call__(self, x: Tensor) -> Tensor:
        attended = self.attn.attend(x, x, x)
        x = self.norm1(T.add(x, attended))
        return self.norm2(T.add(x, self.ffn(x)))

    def named_params(self):
        return (self.attn.named_params() + self.norm1.named_params()
                + self.ffn.named_params() + self.norm2.named_params())


# ---------------------------------------------------------------------------
# Character CNN


class CharCnn:
    """Convolutions of several widths over character embeddings, tanh,
    max-pooled over time, concatenated. Words shorter than a width are
    zero-padded up to it."""

    def __init__(self, n_chars: int, d_char: int, widths, filters: int, rng,
                 name: str = "charcnn"):
        self.table = EmbeddingTable(n_chars, d_char, rng, name=f"{name}.chars")
        self.d_char = d_char
        self.widths = tuple(widths)
        self.filters = filters
        self.convs = []
        for w in self.widths:
            weight = parameter(rng, (w * d_char, filters), f"{name}.w{w}.weight")
            bias = parameter(rng, (filters,), f"{name}.w{w}.bias", zero=True)
            self.convs.append((w, weight, bias))

    @property
    def out_dim(self) -> int:
        return self.filters * len(self.widths)

    def embed(self, char_ids) -> Tensor:
        char_ids = list(char_ids)
        if not char_ids:
            raise ShapeError("char_cnn_embed: need at least one character")
        emb = self.table.lookup(char_ids)
        blocks = []
        for w, weight, bias in self.convs:
            x = emb
            length = x.shape[0]
            if length < w:
                x = T.concat([x, T.zeros((w - length, self.d_char), like=x)], axis=0)
                length = w
            windows = [
                T.reshape(T.narrow(x, 0, i, w), (w * self.d_char,))
                for i in range(length - w + 1)
            ]
            conv = T.tanh(T.bias_add(T.matmul(T.stack_rows(windows), weight), bias))
            blocks.append(T.max_axis(conv, axis=0))
        return T.concat(blocks, axis=-1)

    def named_params(self):
        out = self.table.named_params()
        for w, weight, bias in self.convs:
            out += [(weight.name, weight), (bias.name, bias)]
        return out


def char_cnn_embed(cnn: CharCnn, char_ids) -> Tensor:
    return cnn.embed(char_ids)
