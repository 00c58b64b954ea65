"""Adam and gradient-clipping behavior."""

import numpy as np
import pytest

import defmod.tensor as T
from defmod.optim import Adam, adam_step, clip_global_norm
from defmod.tensor import Tensor


def test_zero_grad_leaves_params_unchanged():
    p = Tensor(np.array([1.0, -2.0, 3.0]), requires_grad=True)
    before = p.data.copy()
    opt = Adam([p], lr=0.1)
    adam_step([p], [np.zeros(3)], opt)
    assert np.array_equal(p.data, before)


def test_first_step_magnitude_is_lr(f64):
    # bias-corrected first step: lr * g / (|g| + eps) ~ lr * sign(g)
    for g in (0.5, -3.0, 1e-3):
        p = Tensor(np.array([0.0]), requires_grad=True)
        opt = Adam([p], lr=1e-3)
        adam_step([p], [np.array([g])], opt)
        delta = abs(p.data[0])
        assert 1e-3 * (1 - 1e-5) < delta <= 1e-3
        assert np.sign(p.data[0]) == -np.sign(g)


def test_two_runs_bitwise_identical():
    def run():
        rng = np.random.default_rng(0)
        p = Tensor(rng.normal(size=8).astype(np.float32), requires_grad=True)
        opt = Adam([p], lr=1e-2)
        for i in range(25):
            p.grad = (np.sin(np.arange(8) + i)).astype(np.float32)
            opt.step()
        return p.data.copy()

    assert np.array_equal(run(), run())


def test_step_counter_increases():
    p = Tensor(np.zeros(2), requires_grad=True)
    opt = Adam([p])
    for expected in (1, 2, 3):
        p.grad = np.ones(2, dtype=p.data.dtype)
        opt.step()
        assert opt.t == expected


def test_moment_shapes_match_params():
    p = Tensor(np.zeros((3, 4)), requires_grad=True)
    opt = Adam([p])
    assert opt.state[0].m.shape == (3, 4)
    assert opt.state[0].v.shape == (3, 4)


def test_adam_converges_on_quadratic(f64):
    p = Tensor(np.array([5.0]), requires_grad=True)
    opt = Adam([p], lr=0.1)
    for _ in range(300):
        loss = T.mean_all(T.mul(p, p))
        opt.zero_grad()
        loss.backward()
        opt.step()
    assert abs(p.data[0]) < 1e-2


def test_clip_global_norm():
    a = Tensor(np.zeros(3), requires_grad=True)
    b = Tensor(np.zeros(4), requires_grad=True)
    a.grad = np.full(3, 3.0, dtype=a.data.dtype)
    b.grad = np.full(4, 4.0, dtype=b.data.dtype)
    norm = clip_global_norm([a, b], max_norm=1.0)
    assert norm == pytest.approx(np.sqrt(27 + 64))
    clipped = np.sqrt((a.grad ** 2).sum() + (b.grad ** 2).sum())
    assert clipped == pytest.approx(1.0, rel=1e-6)


def test_clip_below_threshold_is_noop():
    a = Tensor(np.zeros(2), requires_grad=True)
    a.grad = np.array([0.3, 0.4], dtype=a.data.dtype)
    before = a.grad.copy()
    clip_global_norm([a], max_norm=5.0)
    assert np.array_equal(a.grad, before)


def test_clip_raises_on_nonfinite():
    a = Tensor(np.zeros(2), requires_grad=True)
    a.grad = np.array([np.inf, 0.0], dtype=a.data.dtype)
    with pytest.raises(FloatingPointError):
        clip_global_norm([a], max_norm=5.0)
