"""Greedy and beam search, including the exhaustive-enumeration oracle."""

import numpy as np
import pytest

from defmod.data import BOS, EOS, Entry, build_vocab
from defmod.decoding import beam_decode, greedy_decode, trace_generation
from defmod.models import build_model
from defmod.training import TrainedModel, train

from helpers import tiny_config


def _random_model(arch="saam", n_tgt=15, seed=0, **overrides):
    cfg = tiny_config(arch, **overrides)
    return build_model(cfg, n_src=20, n_tgt=n_tgt, rng=np.random.default_rng(seed))


class TestGreedy:
    def test_deterministic(self):
        model = _random_model()
        a = greedy_decode(model, 5, [6, 7], max_len=8)
        b = greedy_decode(model, 5, [6, 7], max_len=8)
        assert a == b

    def test_max_len_one(self):
        model = _random_model()
        tokens, _ = greedy_decode(model, 5, [6, 7], max_len=1)
        assert len(tokens) <= 1

    def test_stops_at_cap(self):
        model = _random_model()
        tokens, _ = greedy_decode(model, 5, [6, 7], max_len=4)
        assert len(tokens) <= 4

    def test_overfit_single_pair_reproduces_definition(self, f32):
        entry = Entry("w0", ["s0", "s1"], ["d2", "d0", "d1"])
        src = build_vocab([["w0"], ["s0", "s1"]])
        tgt = build_vocab([entry.definition])
        cfg = tiny_config("saam", epochs=60, lr=1e-2, batch=4, smoothing=0.0)
        model = build_model(cfg, len(src), len(tgt), rng=np.random.default_rng(0))
        trained = TrainedModel(model, cfg, src, tgt)
        train(trained, [entry])
        tokens, _ = greedy_decode(model, src.encode("w0"),
                                  src.encode_all(["s0", "s1"]), max_len=8)
        assert tgt.decode_all(tokens) == entry.definition


class TestBeam:
    def test_beam_one_equals_greedy(self):
        model = _random_model(seed=3)
        for word in (2, 5, 9):
            greedy = greedy_decode(model, word, [6, 7], max_len=6)
            beam = beam_decode(model, word, [6, 7], beam=1, max_len=6)
            assert beam == greedy

    def test_dominates_greedy(self):
        model = _random_model(seed=4)
        for word in (1, 4, 8):
            _, greedy_lp = greedy_decode(model, word, [6], max_len=5)
            _, beam_lp = beam_decode(model, word, [6], beam=4, max_len=5)
            assert beam_lp >= greedy_lp

    def test_beam_must_be_positive(self):
        model = _random_model()
        with pytest.raises(ValueError):
            beam_decode(model, 1, [6], beam=0)

    def test_matches_exhaustive_enumeration(self):
        # V=4 (the specials alone), L=3: the full candidate space is the
        # 4^3 = 64 expansions, collapsing to 40 distinct hypotheses
        mismatches = run_beam_oracle(seeds=range(6))
        assert mismatches == []


def run_beam_oracle(seeds, max_len=3):
    """Exhaustively score every sequence over a 4-token vocabulary and
    compare with beam=64. Returns the list of mismatching seeds."""
    from defmod.decoding import _next_log_probs

    bad = []
    for seed in seeds:
        model = _random_model(n_tgt=4, seed=seed, max_def_len=6)
        word, sems = 2, [5]

        def seq_logp(tokens, terminated):
            prefix = [BOS]
            total = 0.0
            for tok in tokens:
                logp = _next_log_probs(model, word, sems, None, prefix)
                total += float(logp[tok])
                prefix.append(tok)
            if terminated:
                total += float(_next_log_probs(model, word, sems, None, prefix)[EOS])
            return total

        non_eos = [t for t in range(4) if t != EOS]
        candidates = []
        for k in range(max_len):  # EOS-terminated, k emitted tokens
            for combo in _product(non_eos, k):
                candidates.append((list(combo), seq_logp(combo, True)))
        for combo in _product(non_eos, max_len):  # length-capped
            candidates.append((list(combo), seq_logp(combo, False)))
        best = min(candidates, key=lambda c: (-c[1], tuple(c[0])))

        got_tokens, got_lp = beam_decode(model, word, sems, beam=64, max_len=max_len)
        if got_tokens != best[0] or abs(got_lp - best[1]) > 1e-9:
            bad.append(seed)
    return bad


def _product(pool, repeat):
    import itertools
    return itertools.product(pool, repeat=repeat)


class TestTrace:
    def test_trace_generation_records(self):
        model = _random_model(seed=6)
        tokens, records = trace_generation(model, 4, [6, 7, 8], max_len=5)
        assert records, "expected per-step records"
        layers = {r["layer"] for r in records}
        assert layers == {0, 1}  # one record per layer per step
        steps = {r["t"] for r in records}
        assert steps == set(range(len(tokens) + 1)) or steps == set(range(5))
        for r in records:
            assert 0.0 < r["beta"] < 1.0
            assert abs(sum(r["alpha"]) - 1.0) < 1e-5
