"""Dense tensors with reverse-mode automatic differentiation.

Values live in flat row-major numpy buffers (float32 by default, float64
for gradient checking; see `set_default_dtype`). Every operation records
its parents and a backward closure, so the computation graph is the DAG of
parent links; `backward(loss)` orders it topologically and accumulates
gradients into `.grad` buffers that match each tensor's shape.

Shape discipline: shapes are explicit and checked. The only broadcasts
anywhere are bias addition over the last axis (`bias_add`) and the two
explicit scalar ops (`smul`, `add_scalar_t`). Every forward result is
checked finite; NaN or Inf raises immediately.
"""

import math

import numpy as np


class ShapeError(ValueError):
    """Raised when an operation's shape preconditions are violated."""


_DEFAULT_DTYPE = np.float32


def set_default_dtype(dtype) -> None:
    """Set the dtype used when tensors are built from plain Python data."""
    global _DEFAULT_DTYPE
    dtype = np.dtype(dtype).type
    if dtype not in (np.float32, np.float64):
        raise ValueError("only float32 and float64 are supported")
    _DEFAULT_DTYPE = dtype


def default_dtype():
    return _DEFAULT_DTYPE


class Tensor:
    """A node in the computation graph.

    Leaf tensors (parameters, constants) have no parents. Op results carry
    a backward closure that routes the node's gradient to its parents.
    Data is immutable by convention once the node is consumed by an op;
    the optimizer mutates leaf `.data` in place between steps.
    """

    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        if isinstance(data, np.ndarray) and data.dtype.type in (np.float32, np.float64):
            arr = data
        else:
            arr = np.asarray(data, dtype=_DEFAULT_DTYPE)
        if arr.ndim and not arr.flags["C_CONTIGUOUS"]:
            arr = np.ascontiguousarray(arr)  # keep 0-d shapes intact
        _check_finite(arr, name or "tensor")
        self.data = arr
        self.grad = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents = ()
        self._backward = None

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() requires a single element, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def backward(self) -> None:
        backward(self)

    def __repr__(self):
        tag = self.name or "tensor"
        return f"Tensor({tag}, shape={self.shape}, dtype={self.data.dtype.name})"

    # Convenience operators; all strict same-shape except scalar constants.
    def __add__(self, other):
        return add(self, other) if isinstance(other, Tensor) else add_const(self, float(other))

    def __radd__(self, other):
        return add_const(self, float(other))

    def __sub__(self, other):
        return sub(self, other) if isinstance(other, Tensor) else add_const(self, -float(other))

    def __mul__(self, other):
        return mul(self, other) if isinstance(other, Tensor) else scale(self, float(other))

    def __rmul__(self, other):
        return scale(self, float(other))

    def __neg__(self):
        return neg(self)


def _check_finite(arr: np.ndarray, what: str) -> None:
    # single reduction: any NaN/Inf element makes the sum non-finite
    # (inf + -inf cancels to NaN, never back to a finite value)
    if not math.isfinite(float(arr.sum())):
        raise FloatingPointError(f"non-finite values in {what}")


def _node(data: np.ndarray, parents: tuple, backward_fn, op: str) -> Tensor:
    _check_finite(data, op)
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.name = op
    requires = False
    for p in parents:
        if p.requires_grad:
            requires = True
            break
    out.requires_grad = requires
    if requires:
        out._parents = parents
        out._backward = backward_fn
    else:
        out._parents = ()
        out._backward = None
    return out


def _accum(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        # a private copy: backward closures may hand the same buffer (or a
        # view of one) to several parents
        t.grad = np.array(g, dtype=t.data.dtype, copy=True)
    else:
        t.grad += g


def zeros(shape, like: Tensor | None = None, requires_grad: bool = False) -> Tensor:
    dtype = like.data.dtype if like is not None else _DEFAULT_DTYPE
    return Tensor(np.zeros(shape, dtype=dtype), requires_grad=requires_grad, name="zeros")


def _same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


# ---------------------------------------------------------------------------
# Elementwise arithmetic


def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "add")

    def bwd(g):
        _accum(a, g)
        _accum(b, g)

    return _node(a.data + b.data, (a, b), bwd, "add")


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "sub")

    def bwd(g):
        _accum(a, g)
        _accum(b, -g)

    return _node(a.data - b.data, (a, b), bwd, "sub")


def neg(a: Tensor) -> Tensor:
    def bwd(g):
        _accum(a, -g)

    return _node(-a.data, (a,), bwd, "neg")


def mul(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "mul")

    def bwd(g):
        _accum(a, g * b.data)
        _accum(b, g * a.data)

    return _node(a.data * b.data, (a, b), bwd, "mul")


def scale(a: Tensor, c: float) -> Tensor:
    """a * c for a Python constant c."""

    def bwd(g):
        _accum(a, g * c)

    return _node(a.data * c, (a,), bwd, "scale")


def add_const(a: Tensor, c: float) -> Tensor:
    def bwd(g):
        _accum(a, g)

    return _node(a.data + c, (a,), bwd, "add_const")


def smul(s: Tensor, x: Tensor) -> Tensor:
    """Scalar tensor times tensor (the explicit scalar broadcast)."""
    if s.shape != ():
        raise ShapeError(f"smul: scalar operand must have shape (), got {s.shape}")

    def bwd(g):
        _accum(s, np.asarray((g * x.data).sum(), dtype=x.data.dtype))
        _accum(x, g * s.data)

    return _node(s.data * x.data, (s, x), bwd, "smul")


def add_scalar_t(x: Tensor, s: Tensor) -> Tensor:
    """x + s where s is a scalar tensor (explicit broadcast)."""
    if s.shape != ():
        raise ShapeError(f"add_scalar_t: scalar operand must have shape (), got {s.shape}")

    def bwd(g):
        _accum(x, g)
        _accum(s, np.asarray(g.sum(), dtype=x.data.dtype))

    return _node(x.data + s.data, (x, s), bwd, "add_scalar_t")


# ---------------------------------------------------------------------------
# Linear algebra


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Strict 2-D matrix product [m,k] @ [k,n] -> [m,n].

    Backward: dA = dC @ B^T, dB = A^T @ dC.
    """
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(f"matmul: operands must be 2-D, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner extents disagree, {a.shape} @ {b.shape}")

    def bwd(g):
        _accum(a, g @ b.data.T)
        _accum(b, a.data.T @ g)

    return _node(a.data @ b.data, (a, b), bwd, "matmul")


def dot(a: Tensor, b: Tensor) -> Tensor:
    """1-D inner product -> scalar."""
    if a.data.ndim != 1 or b.data.ndim != 1 or a.shape != b.shape:
        raise ShapeError(f"dot: need equal-length vectors, got {a.shape} and {b.shape}")

    def bwd(g):
        _accum(a, g * b.data)
        _accum(b, g * a.data)

    return _node(np.asarray(a.data @ b.data), (a, b), bwd, "dot")


def transpose2d(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeError(f"transpose2d: need a matrix, got {a.shape}")

    def bwd(g):
        _accum(a, np.ascontiguousarray(g.T))

    return _node(np.ascontiguousarray(a.data.T), (a,), bwd, "transpose2d")


def bias_add(x: Tensor, b: Tensor) -> Tensor:
    """x + b broadcast over the last axis (the one permitted broadcast)."""
    if b.data.ndim != 1 or x.data.ndim < 1 or x.shape[-1] != b.shape[0]:
        raise ShapeError(f"bias_add: bias {b.shape} does not fit last axis of {x.shape}")

    def bwd(g):
        _accum(x, g)
        _accum(b, g.reshape(-1, b.shape[0]).sum(axis=0))

    return _node(x.data + b.data, (x, b), bwd, "bias_add")


# ---------------------------------------------------------------------------
# Shape manipulation


def reshape(x: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    if int(np.prod(shape, dtype=np.int64)) != x.data.size:
        raise ShapeError(f"reshape: cannot view {x.shape} as {shape}")

    def bwd(g):
        _accum(x, g.reshape(x.data.shape))

    return _node(x.data.reshape(shape), (x,), bwd, "reshape")


def narrow(x: Tensor, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slice along one axis; backward pads with zeros."""
    nd = x.data.ndim
    if axis < 0:
        axis += nd
    if not 0 <= axis < nd:
        raise ShapeError(f"narrow: axis {axis} out of range for {x.shape}")
    if start < 0 or length < 1 or start + length > x.shape[axis]:
        raise ShapeError(f"narrow: [{start}:{start + length}] out of range on axis {axis} of {x.shape}")
    index = tuple(slice(None) if d != axis else slice(start, start + length) for d in range(nd))

    def bwd(g):
        if x.requires_grad:
            full = np.zeros(x.data.shape, dtype=x.data.dtype)
            full[index] = g
            _accum(x, full)

    return _node(np.ascontiguousarray(x.data[index]), (x,), bwd, "narrow")


def concat(parts: list, axis: int) -> Tensor:
    """Concatenate along axis 0 or the last axis."""
    if not parts:
        raise ShapeError("concat: empty input")
    nd = parts[0].data.ndim
    if axis < 0:
        axis += nd
    for p in parts:
        if p.data.ndim != nd:
            raise ShapeError("concat: rank mismatch")
    sizes = [p.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def bwd(g):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            index = tuple(slice(None) if d != axis else slice(lo, hi) for d in range(nd))
            _accum(p, g[index])

    return _node(np.concatenate([p.data for p in parts], axis=axis), tuple(parts), bwd, "concat")


def stack_rows(parts: list) -> Tensor:
    """Stack same-shape tensors along a new leading axis."""
    if not parts:
        raise ShapeError("stack_rows: empty input")
    for p in parts:
        if p.shape != parts[0].shape:
            raise ShapeError("stack_rows: shape mismatch")

    def bwd(g):
        for i, p in enumerate(parts):
            _accum(p, g[i])

    return _node(np.stack([p.data for p in parts], axis=0), tuple(parts), bwd, "stack_rows")


# ---------------------------------------------------------------------------
# Nonlinearities


def _sigmoid_stable(d: np.ndarray) -> np.ndarray:
    out = np.empty_like(d)
    pos = d >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-d[pos]))
    ex = np.exp(d[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(x: Tensor) -> Tensor:
    out = _sigmoid_stable(x.data)

    def bwd(g):
        _accum(x, g * out * (1.0 - out))

    return _node(out, (x,), bwd, "sigmoid")


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)

    def bwd(g):
        _accum(x, g * (1.0 - out * out))

    return _node(out, (x,), bwd, "tanh")


def relu(x: Tensor) -> Tensor:
    out = np.maximum(x.data, 0.0)

    def bwd(g):
        _accum(x, g * (x.data > 0))

    return _node(out, (x,), bwd, "relu")


_ELEMENTWISE = {"sigmoid": sigmoid, "tanh": tanh, "relu": relu}


def elementwise(kind: str, x: Tensor) -> Tensor:
    """Dispatch on {sigmoid|tanh|relu}."""
    try:
        fn = _ELEMENTWISE[kind]
    except KeyError:
        raise ValueError(f"unknown elementwise kind {kind!r}") from None
    return fn(x)


# ---------------------------------------------------------------------------
# Reductions


def sum_all(x: Tensor) -> Tensor:
    def bwd(g):
        _accum(x, np.full(x.data.shape, g, dtype=x.data.dtype))

    return _node(np.asarray(x.data.sum()), (x,), bwd, "sum_all")


def mean_all(x: Tensor) -> Tensor:
    n = x.data.size

    def bwd(g):
        _accum(x, np.full(x.data.shape, g / n, dtype=x.data.dtype))

    return _node(np.asarray(x.data.mean()), (x,), bwd, "mean_all")


def max_axis(x: Tensor, axis: int) -> Tensor:
    """Max-reduce one axis; ties route the gradient to the first maximum."""
    nd = x.data.ndim
    if axis < 0:
        axis += nd
    if not 0 <= axis < nd:
        raise ShapeError(f"max_axis: axis {axis} out of range for {x.shape}")
    idx = np.argmax(x.data, axis=axis)
    out = np.max(x.data, axis=axis)

    def bwd(g):
        if x.requires_grad:
            full = np.zeros(x.data.shape, dtype=x.data.dtype)
            np.put_along_axis(full, np.expand_dims(idx, axis), np.expand_dims(g, axis), axis)
            _accum(x, full)

    return _node(out, (x,), bwd, "max_axis")


# ---------------------------------------------------------------------------
# Softmax, layer norm, loss


def softmax_lastdim(x: Tensor, mask: np.ndarray | None = None) -> Tensor:
    """Row-stable softmax over the last axis.

    `mask` is a boolean array of x's shape (or broadcastable to it); masked
    positions get weight exactly 0 and the visible weights sum to 1. A row
    with nothing visible is an error.
    """
    d = x.data
    if d.ndim < 1 or d.shape[-1] < 1:
        raise ShapeError(f"softmax_lastdim: empty last axis in {d.shape}")
    if mask is None:
        m = d.max(axis=-1, keepdims=True)
        e = np.exp(d - m)
    else:
        mask = np.broadcast_to(np.asarray(mask, dtype=bool), d.shape)
        if not mask.any(axis=-1).all():
            raise ShapeError("softmax_lastdim: a row has all positions masked")
        m = np.where(mask, d, -np.inf).max(axis=-1, keepdims=True)
        # exp argument forced to 0 on masked slots before exp, then zeroed
        e = np.exp(np.where(mask, d - m, 0.0))
        e = np.where(mask, e, 0.0)
    out = e / e.sum(axis=-1, keepdims=True)

    def bwd(g):
        inner = (g * out).sum(axis=-1, keepdims=True)
        _accum(x, out * (g - inner))

    return _node(out, (x,), bwd, "softmax_lastdim")


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Standardize over the last axis (population variance), then affine."""
    d = x.data
    dim = d.shape[-1]
    if gain.shape != (dim,) or bias.shape != (dim,):
        raise ShapeError(f"layer_norm: gain/bias must have shape ({dim},)")
    mu = d.mean(axis=-1, keepdims=True)
    var = ((d - mu) ** 2).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (d - mu) * inv
    out = xhat * gain.data + bias.data

    def bwd(g):
        _accum(gain, (g * xhat).reshape(-1, dim).sum(axis=0))
        _accum(bias, g.reshape(-1, dim).sum(axis=0))
        gh = g * gain.data
        gh_mean = gh.mean(axis=-1, keepdims=True)
        gx_mean = (gh * xhat).mean(axis=-1, keepdims=True)
        _accum(x, inv * (gh - gh_mean - xhat * gx_mean))

    return _node(out, (x, gain, bias), bwd, "layer_norm")


def cross_entropy_label_smoothed(
    logits: Tensor,
    targets,
    smoothing: float,
    mask=None,
) -> Tensor:
    """Mean smoothed negative log-likelihood over unmasked positions.

    Per position: (1-s) * NLL(target) + s * mean NLL over the non-target
    classes. `targets` are int ids [T]; `mask` is a boolean [T] (None means
    all positions count). Returns a scalar.
    """
    d = logits.data
    if d.ndim != 2:
        raise ShapeError(f"cross_entropy: logits must be [T,V], got {d.shape}")
    t_len, vocab = d.shape
    if vocab < 2:
        raise ShapeError("cross_entropy: need at least 2 classes")
    if not 0.0 <= smoothing < 1.0:
        raise ValueError(f"cross_entropy: smoothing {smoothing} outside [0,1)")
    targets = np.asarray(targets, dtype=np.int64)
    if targets.shape != (t_len,):
        raise ShapeError(f"cross_entropy: targets shape {targets.shape} != ({t_len},)")
    if targets.min(initial=0) < 0 or targets.max(initial=0) >= vocab:
        raise ShapeError("cross_entropy: target id out of range")
    if mask is None:
        mask = np.ones(t_len, dtype=bool)
    else:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != (t_len,):
            raise ShapeError(f"cross_entropy: mask shape {mask.shape} != ({t_len},)")
    count = int(mask.sum())
    if count == 0:
        raise ValueError("cross_entropy: all positions masked")

    m = d.max(axis=-1, keepdims=True)
    lse = m + np.log(np.exp(d - m).sum(axis=-1, keepdims=True))
    logp = d - lse
    rows = np.arange(t_len)
    nll_target = -logp[rows, targets]
    nll_rest = -(logp.sum(axis=-1) - logp[rows, targets]) / (vocab - 1)
    per_pos = (1.0 - smoothing) * nll_target + smoothing * nll_rest
    loss = np.asarray((per_pos * mask).sum() / count, dtype=d.dtype)

    # target distribution q: 1-s on the target, s/(V-1) elsewhere
    def bwd(g):
        if logits.requires_grad:
            p = np.exp(logp)
            q = np.full_like(p, smoothing / (vocab - 1))
            q[rows, targets] = 1.0 - smoothing
            gl = (p - q) * (mask[:, None] * (g / count))
            _accum(logits, gl.astype(d.dtype, copy=False))

    return _node(loss, (logits,), bwd, "cross_entropy")


# ---------------------------------------------------------------------------
# Fused recurrent kernels. Recurrences build long op chains, so the gate
# arithmetic is collapsed into three nodes per cell step instead of ~20.


def joint_affine(x: Tensor, wx: Tensor, h: Tensor, wh: Tensor, b: Tensor) -> Tensor:
    """x @ wx + h @ wh + b for 1-D x and h (a recurrent pre-activation)."""
    if x.data.ndim != 1 or h.data.ndim != 1:
        raise ShapeError("joint_affine: x and h must be vectors")
    if wx.shape != (x.shape[0], b.shape[0]) or wh.shape != (h.shape[0], b.shape[0]):
        raise ShapeError(
            f"joint_affine: shapes disagree, x{x.shape} wx{wx.shape} "
            f"h{h.shape} wh{wh.shape} b{b.shape}")
    out = x.data @ wx.data + h.data @ wh.data + b.data

    def bwd(g):
        _accum(x, wx.data @ g)
        _accum(wx, np.outer(x.data, g))
        _accum(h, wh.data @ g)
        _accum(wh, np.outer(h.data, g))
        _accum(b, g)

    return _node(out, (x, wx, h, wh, b), bwd, "joint_affine")


def lstm_state(z: Tensor, c_prev: Tensor) -> Tensor:
    """New cell state from packed pre-activations z = [i f g o] (4H):
    c' = sigmoid(f) * c_prev + sigmoid(i) * tanh(g)."""
    hd = c_prev.shape[0]
    if z.shape != (4 * hd,):
        raise ShapeError(f"lstm_state: z {z.shape} does not pack 4x{hd} gates")
    i = _sigmoid_stable(z.data[:hd])
    f = _sigmoid_stable(z.data[hd:2 * hd])
    g_cand = np.tanh(z.data[2 * hd:3 * hd])
    out = f * c_prev.data + i * g_cand

    def bwd(g):
        _accum(c_prev, g * f)
        dz = np.zeros_like(z.data)
        dz[:hd] = g * g_cand * i * (1.0 - i)
        dz[hd:2 * hd] = g * c_prev.data * f * (1.0 - f)
        dz[2 * hd:3 * hd] = g * i * (1.0 - g_cand * g_cand)
        _accum(z, dz)

    return _node(out, (z, c_prev), bwd, "lstm_state")


def lstm_out(z: Tensor, c_new: Tensor) -> Tensor:
    """Hidden state h = sigmoid(o) * tanh(c') with o = z[3H:]."""
    hd = c_new.shape[0]
    if z.shape != (4 * hd,):
        raise ShapeError(f"lstm_out: z {z.shape} does not pack 4x{hd} gates")
    o = _sigmoid_stable(z.data[3 * hd:])
    tc = np.tanh(c_new.data)
    out = o * tc

    def bwd(g):
        dz = np.zeros_like(z.data)
        dz[3 * hd:] = g * tc * o * (1.0 - o)
        _accum(z, dz)
        _accum(c_new, g * o * (1.0 - tc * tc))

    return _node(out, (z, c_new), bwd, "lstm_out")


# ---------------------------------------------------------------------------
# Embedding rows


def take_rows(table: Tensor, ids) -> Tensor:
    """Gather rows of a [V,d] table; backward scatter-adds into the rows."""
    ids = np.asarray(ids, dtype=np.int64)
    if table.data.ndim != 2:
        raise ShapeError(f"take_rows: table must be [V,d], got {table.shape}")
    if ids.ndim != 1:
        raise ShapeError("take_rows: ids must be a 1-D sequence")
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise ShapeError(f"take_rows: id out of range for table with {table.shape[0]} rows")

    def bwd(g):
        if table.requires_grad:
            full = np.zeros(table.data.shape, dtype=table.data.dtype)
            np.add.at(full, ids, g)
            _accum(table, full)

    return _node(table.data[ids].copy(), (table,), bwd, "take_rows")


# ---------------------------------------------------------------------------
# Backward pass


def _topo_order(root: Tensor) -> list:
    order = []
    seen = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(node) into `.grad` for every ancestor of loss.

    The loss must be scalar. Gradient buffers are allocated lazily and
    accumulated in a fixed (reverse topological) order, so results are
    deterministic for identical graphs.
    """
    if loss.shape != ():
        raise ShapeError(f"backward: loss must be scalar, got shape {loss.shape}")
    order = _topo_order(loss)
    loss.grad = np.ones((), dtype=loss.data.dtype)
    # non-finite gradients need no per-node check here: they necessarily
    # reach some leaf parameter, where consumers (e.g. clipping) detect them
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


def zero_grad(params) -> None:
    for p in params:
        p.grad = None


# Convenience wrappers used throughout the model code.


def vecmat(x: Tensor, w: Tensor) -> Tensor:
    """[k] @ [k,n] -> [n]."""
    return reshape(matmul(reshape(x, (1, x.shape[0])), w), (w.shape[1],))


def matvec(a: Tensor, x: Tensor) -> Tensor:
    """[m,n] @ [n] -> [m]."""
    return reshape(matmul(a, reshape(x, (x.shape[0], 1))), (a.shape[0],))
