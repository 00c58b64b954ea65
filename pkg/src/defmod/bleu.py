"""Corpus-level BLEU-4 with the reference-script semantics: modified
n-gram precisions (n=1..4) clipped against the reference counts, geometric
mean, brevity penalty exp(1 - r/c) when the candidate corpus is shorter.
No smoothing: any zero precision zeroes the score, so short corpora can
legitimately score 0.
"""

import math
from collections import Counter


def _ngrams(tokens, n):
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def corpus_bleu(candidates, references) -> float:
    """BLEU in [0, 100] for parallel lists of token lists (one reference
    per candidate)."""
    if len(candidates) != len(references):
        raise ValueError(f"{len(candidates)} candidates vs {len(references)} references")
    if not candidates:
        raise ValueError("empty corpus")
    matched = [0] * 5
    total = [0] * 5
    cand_len = 0
    ref_len = 0
    for cand, ref in zip(candidates, references):
        cand = list(cand)
        ref = list(ref)
        cand_len += len(cand)
        ref_len += len(ref)
        for n in range(1, 5):
            cand_counts = _ngrams(cand, n)
            ref_counts = _ngrams(ref, n)
            total[n] += max(0, len(cand) - n + 1)
            matched[n] += sum(min(c, ref_counts[g]) for g, c in cand_counts.items())
    if cand_len == 0:
        return 0.0
    log_sum = 0.0
    for n in range(1, 5):
        if matched[n] == 0:
            return 0.0
        log_sum += math.log(matched[n] / total[n])
    brevity = 1.0 if cand_len >= ref_len else math.exp(1.0 - ref_len / cand_len)
    return 100.0 * brevity * math.exp(log_sum / 4.0)


def read_token_file(path):
    """One whitespace-tokenized sentence per line."""
    with open(path, encoding="utf-8") as fh:
        return [line.split() for line in fh.read().splitlines()]


def score_files(cand_path, ref_path) -> float:
    candidates = read_token_file(cand_path)
    references = read_token_file(ref_path)
    return corpus_bleu(candidates, references)


def format_bleu(value: float) -> str:
    return f"BLEU = {value:.2f}"
