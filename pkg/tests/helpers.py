"""Shared test utilities: the central finite-difference gradient oracle,
tiny model configs, and synthetic corpora."""

import numpy as np

import defmod.tensor as T
from defmod.config import ModelConfig
from defmod.data import Entry


def fd_grad_at(loss_fn, param, flat_indices, h=1e-5):
    """Central finite differences of loss_fn at selected coordinates of
    `param.data` (the independent oracle for backward())."""
    flat = param.data.reshape(-1)
    out = np.empty(len(flat_indices), dtype=np.float64)
    for j, idx in enumerate(flat_indices):
        orig = flat[idx]
        flat[idx] = orig + h
        f_plus = loss_fn().item()
        flat[idx] = orig - h
        f_minus = loss_fn().item()
        flat[idx] = orig
        out[j] = (f_plus - f_minus) / (2.0 * h)
    return out


def max_grad_rel_error(loss_fn, params, h=1e-5, max_coords=None, rng=None):
    """Max relative error between backward() and central differences over
    (a sample of) coordinates of every parameter. Rebuilds the graph for
    each probe, so the FD side never touches the backward code path."""
    T.zero_grad(params)
    loss_fn().backward()
    analytic = {
        id(p): (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
        for p in params
    }
    worst = 0.0
    for p in params:
        n = p.data.size
        if max_coords is None or n <= max_coords:
            coords = list(range(n))
        else:
            coords = sorted(int(i) for i in rng.choice(n, size=max_coords, replace=False))
        fd = fd_grad_at(loss_fn, p, coords, h=h)
        an = analytic[id(p)].reshape(-1)[coords]
        denom = np.maximum(np.maximum(np.abs(an), np.abs(fd)), 1e-6)
        worst = max(worst, float((np.abs(an - fd) / denom).max(initial=0.0)))
    return worst


def tiny_config(arch, **overrides):
    base = dict(
        arch=arch,
        d_model=16,
        d_hidden=32,
        n_head=2,
        n_layer=2,
        rnn_layers=2,
        rnn_hidden=16,
        batch=32,
        lr=3e-3,
        smoothing=0.1,
        max_sememes=8,
        max_def_len=12,
        seed=0,
        epochs=1,
        patience=10_000,
        char_dim=8,
        char_filters=6,
        char_widths=(2, 3),
    )
    base.update(overrides)
    return ModelConfig(**base).validate()


def gradcheck_config(arch, **overrides):
    """Criterion-1 dims: d=8, 2 heads, 2 layers."""
    base = dict(d_model=8, d_hidden=16, n_head=2, n_layer=2, rnn_layers=2,
                rnn_hidden=8, max_sememes=6, max_def_len=8, smoothing=0.1,
                char_dim=4, char_filters=3, char_widths=(2, 3))
    base.update(overrides)
    return tiny_config(arch, **base)


def synthetic_corpus(n_entries=32, seed=0, def_len=(3, 6), n_def_tokens=40,
                     n_sememe_tokens=12):
    """Distinct words, 2-4 sememes each, short random definitions.
    Target vocabulary stays under 60 tokens including specials."""
    rng = np.random.default_rng(seed)
    sememe_pool = [f"s{i}" for i in range(n_sememe_tokens)]
    def_pool = [f"d{i}" for i in range(n_def_tokens)]
    entries = []
    for i in range(n_entries):
        n_sem = int(rng.integers(2, 5))
        sememes = [sememe_pool[j] for j in rng.choice(n_sememe_tokens, n_sem, replace=False)]
        length = int(rng.integers(def_len[0], def_len[1] + 1))
        definition = [def_pool[int(j)] for j in rng.integers(0, n_def_tokens, length)]
        entries.append(Entry(word=f"w{i}", sememes=sememes, definition=definition))
    return entries
