"""Adam with bias correction, plus global-norm gradient clipping."""

import math

import numpy as np

from .tensor import Tensor


class AdamState:
    """First/second moment buffers for one parameter."""

    __slots__ = ("m", "v")

    def __init__(self, param: Tensor):
        self.m = np.zeros(param.data.shape, dtype=param.data.dtype)
        self.v = np.zeros(param.data.shape, dtype=param.data.dtype)


class Adam:
    def __init__(self, params, lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.state = [AdamState(p) for p in self.params]

    def step(self) -> None:
        """One update from the gradients currently in `.grad` (None = zero)."""
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        corr1 = 1.0 - b1 ** self.t
        corr2 = 1.0 - b2 ** self.t
        for p, st in zip(self.params, self.state):
            g = p.grad
            if g is None:
                g = 0.0
            st.m *= b1
            st.m += (1.0 - b1) * g
            st.v *= b2
            st.v += (1.0 - b2) * np.square(g)
            m_hat = st.m / corr1
            v_hat = st.v / corr2
            p.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None


def adam_step(params, grads, state: Adam) -> None:
    """Functional form: install `grads` then advance `state` one step."""
    if len(params) != len(grads):
        raise ValueError("adam_step: params/grads length mismatch")
    for p, g in zip(params, grads):
        p.grad = None if g is None else np.asarray(g, dtype=p.data.dtype)
    state.step()


def clip_global_norm(params, max_norm: float) -> float:
    """Scale all gradients so their global L2 norm is at most max_norm.

    Returns the pre-clip norm. Non-finite gradients raise, which is the
    training loop's divergence signal.
    """
    total = 0.0
    for p in params:
        if p.grad is not None:
            total += float(np.square(p.grad, dtype=np.float64).sum())
    norm = math.sqrt(total)
    if not math.isfinite(norm):
        raise FloatingPointError("non-finite gradient norm")
    if max_norm > 0 and norm > max_norm:
        factor = max_norm / norm
        for p in params:
            if p.grad is not None:
                p.grad *= factor
    return norm
