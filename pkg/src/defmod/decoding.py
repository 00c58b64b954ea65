"""Greedy and beam-search generation, plus attention introspection."""

import heapq
from dataclasses import dataclass, field

import numpy as np

from .data import BOS, EOS


@dataclass(order=True)
class Hypothesis:
    sort_key: tuple = field(init=False, repr=False)
    tokens: list = field(compare=False)        # generated ids, no BOS/EOS
    log_prob: float = field(compare=False)     # exact sum of chosen step log-probs
    finished: bool = field(compare=False, default=False)

    def __post_init__(self):
        self.sort_key = (-self.log_prob, tuple(self.tokens))


def _next_log_probs(model, word_id, sememe_ids, char_ids, prefix) -> np.ndarray:
    logits = model.logits(word_id, sememe_ids, char_ids, prefix).data[-1]
    d = np.asarray(logits, dtype=np.float64)
    m = d.max()
    return d - (m + np.log(np.exp(d - m).sum()))


def greedy_decode(model, word_id, sememe_ids, char_ids=None, max_len: int = 50):
    """Argmax token per step (ties to the lowest id); stops at EOS or
    max_len. Returns (token ids, log_prob of the emitted hypothesis)."""
    prefix = [BOS]
    tokens = []
    log_prob = 0.0
    for _ in range(max_len):
        logp = _next_log_probs(model, word_id, sememe_ids, char_ids, prefix)
        tok = int(np.argmax(logp))
        log_prob += float(logp[tok])
        if tok == EOS:
            break
        tokens.append(tok)
        prefix.append(tok)
    return tokens, log_prob


def beam_decode(model, word_id, sememe_ids, char_ids=None, beam: int = 5,
                max_len: int = 50, length_norm: bool = False):
    """Beam search over step log-probs. Hypotheses finish at EOS or the
    length cap. With length_norm the ranking score is log_prob / length.

    The result never scores below the greedy hypothesis: greedy is run
    once and kept as a floor (plain beam pruning can drop the greedy path).
    Returns (token ids, log_prob).
    """
    if beam < 1:
        raise ValueError("beam must be >= 1")
    live = [Hypothesis(tokens=[], log_prob=0.0)]
    finished = []
    for _ in range(max_len):
        candidates = []
        for hyp in live:
            logp = _next_log_probs(model, word_id, sememe_ids, char_ids,
                                   [BOS] + hyp.tokens)
            # expanding the top `beam` tokens per hypothesis is enough:
            # at most `beam` survivors exist overall. Ties break to the
            # lowest id, matching greedy.
            top = np.lexsort((np.arange(len(logp)), -logp))[:beam]
            for tok in top:
                tok = int(tok)
                new = Hypothesis(tokens=hyp.tokens if tok == EOS else hyp.tokens + [tok],
                                 log_prob=hyp.log_prob + float(logp[tok]),
                                 finished=tok == EOS)
                candidates.append(new)
        candidates.sort(key=lambda h: (-_score(h, length_norm), tuple(h.tokens)))
        live = []
        for hyp in candidates:
            if hyp.finished:
                finished.append(hyp)
            elif len(live) < beam:
                live.append(hyp)
            if len(live) >= beam and len(finished) >= beam:
                break
        if not live:
            break
    finished.extend(live)  # length-capped hypotheses compete too
    best = min(finished, key=lambda h: (-_score(h, length_norm), tuple(h.tokens)))
    if not length_norm:
        greedy_tokens, greedy_lp = greedy_decode(model, word_id, sememe_ids,
                                                 char_ids, max_len)
        if greedy_lp > best.log_prob:
            return greedy_tokens, greedy_lp
    return best.tokens, best.log_prob


def _score(hyp: Hypothesis, length_norm: bool) -> float:
    if length_norm:
        return hyp.log_prob / max(1, len(hyp.tokens))
    return hyp.log_prob


def trace_generation(model, word_id, sememe_ids, char_ids=None, max_len: int = 50):
    """Greedy-decode, then replay the emitted sequence once with attention
    tracing on. Returns (tokens, records) where each record carries
    t, layer, beta, and the alpha vector over encoder slots."""
    tokens, _ = greedy_decode(model, word_id, sememe_ids, char_ids, max_len)
    records = []
    model.logits(word_id, sememe_ids, char_ids, [BOS] + tokens, trace=records)
    return tokens, records
