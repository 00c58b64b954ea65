"""Dataset records, vocabulary, batching, and the corpus-construction
pipeline: sense alignment by sememe overlap, rule filtering, and the
word-disjoint 18:1:1 split.

File formats (all UTF-8, JSON lines):
  dataset   {"word": w, "sememes": [s, ...], "definition": "tok tok ..."}
  lexicon   {"word": w, "groups": [[s, ...], ...]}   one group per sense
"""

import json
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

PAD, BOS, EOS, UNK = 0, 1, 2, 3
SPECIALS = ("<pad>", "<bos>", "<eos>", "<unk>")


class DatasetError(ValueError):
    pass


@dataclass
class Entry:
    word: str
    sememes: list
    definition: list

    def __post_init__(self):
        if not self.word:
            raise DatasetError("entry with empty word")
        if not self.definition:
            raise DatasetError(f"entry {self.word!r} with empty definition")


def parse_dataset(path) -> list:
    """One JSON object per line with keys word / sememes / definition.
    The definition value is a whitespace-joined pre-tokenized string."""
    entries = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            entries.append(parse_entry_line(line, where=f"{path}:{lineno}"))
    return entries


def parse_entry_line(line: str, where: str = "line") -> Entry:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise DatasetError(f"{where}: invalid JSON ({exc.msg})") from None
    for key in ("word", "sememes", "definition"):
        if key not in obj:
            raise DatasetError(f"{where}: missing key {key!r}")
    definition = obj["definition"]
    if isinstance(definition, str):
        definition = definition.split()
    try:
        return Entry(word=obj["word"], sememes=list(obj["sememes"]), definition=list(definition))
    except DatasetError as exc:
        raise DatasetError(f"{where}: {exc}") from None


def serialize_entries(entries, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for e in entries:
            fh.write(entry_to_json(e) + "\n")


def entry_to_json(e: Entry) -> str:
    return json.dumps(
        {"word": e.word, "sememes": e.sememes, "definition": " ".join(e.definition)},
        ensure_ascii=False)


def load_lexicon(path) -> dict:
    """word -> list of sememe groups (ordered; one group per sense)."""
    lexicon = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                word, groups = obj["word"], [list(g) for g in obj["groups"]]
            except (json.JSONDecodeError, KeyError, TypeError):
                raise DatasetError(f"{path}:{lineno}: bad lexicon record") from None
            if not groups or any(not g for g in groups):
                raise DatasetError(f"{path}:{lineno}: empty sememe group for {word!r}")
            lexicon[word] = groups
    return lexicon


# ---------------------------------------------------------------------------
# Corpus construction


@dataclass
class AlignReport:
    aligned: int = 0
    no_lexicon_word: int = 0
    zero_overlap: int = 0


def align_entries(definitions: dict, lexicon: dict, token_lexicon: dict,
                  report: AlignReport | None = None) -> list:
    """Pair each definition with the word's sememe group that overlaps its
    definition-sememes the most.

    `definitions` maps word -> list of token lists. A definition's sememes
    are the union of the sememes of every definition token present in
    `token_lexicon` (all groups of a token count). Ties go to the first
    listed group; zero overlap or a word missing from `lexicon` skips the
    entry (counted in the report).
    """
    report = report if report is not None else AlignReport()
    out = []
    for word, token_lists in definitions.items():
        groups = lexicon.get(word)
        for tokens in token_lists:
            if groups is None:
                report.no_lexicon_word += 1
                continue
            def_sememes = set()
            for tok in tokens:
                for group in token_lexicon.get(tok, ()):
                    def_sememes.update(group)
            best, best_overlap = None, 0
            for group in groups:
                overlap = len(def_sememes.intersection(group))
                if overlap > best_overlap:
                    best, best_overlap = group, overlap
            if best is None:
                report.zero_overlap += 1
                continue
            out.append(Entry(word=word, sememes=list(best), definition=list(tokens)))
            report.aligned += 1
    return out


@dataclass
class FilterReport:
    kept: int = 0
    word_in_definition: int = 0
    function_word: int = 0
    excluded_pos: int = 0


def filter_entries(entries, function_words=frozenset(), excluded_pos=frozenset(),
                   pos_map: dict | None = None,
                   report: FilterReport | None = None) -> list:
    """Drop entries whose definition contains the word itself, whose word
    is a listed function word, or whose POS tag is excluded."""
    report = report if report is not None else FilterReport()
    kept = []
    for e in entries:
        if e.word in e.definition:
            report.word_in_definition += 1
        elif e.word in function_words:
            report.function_word += 1
        elif pos_map and pos_map.get(e.word) in excluded_pos:
            report.excluded_pos += 1
        else:
            kept.append(e)
            report.kept += 1
    return kept


def split_dataset(entries, ratios=(18, 1, 1), seed: int = 0):
    """Shuffle the unique words, partition them 18:1:1 (half-up rounding on
    the first two parts), and route every entry to its word's split."""
    words = []
    seen = set()
    for e in entries:
        if e.word not in seen:
            seen.add(e.word)
            words.append(e.word)
    if len(words) < 20:
        raise DatasetError(f"split needs at least 20 unique words, got {len(words)}")
    rng = np.random.default_rng(seed)
    order = [words[i] for i in rng.permutation(len(words))]
    total = sum(ratios)
    n = len(words)
    n_train = int(n * ratios[0] / total + 0.5)
    n_valid = int(n * ratios[1] / total + 0.5)
    assignment = {}
    for i, w in enumerate(order):
        assignment[w] = 0 if i < n_train else (1 if i < n_train + n_valid else 2)
    splits = ([], [], [])
    for e in entries:
        splits[assignment[e.word]].append(e)
    return splits


# ---------------------------------------------------------------------------
# Vocabulary


class Vocab:
    """Bidirectional token<->id map. Ids 0..3 are PAD/BOS/EOS/UNK and are
    never remapped; everything else is ordered by frequency then token."""

    def __init__(self, tokens: list):
        self.id_to_token = list(SPECIALS) + list(tokens)
        self.token_to_id = {t: i for i, t in enumerate(self.id_to_token)}
        if len(self.token_to_id) != len(self.id_to_token):
            raise DatasetError("duplicate tokens in vocabulary")

    def __len__(self):
        return len(self.id_to_token)

    def encode(self, token: str) -> int:
        return self.token_to_id.get(token, UNK)

    def encode_all(self, tokens) -> list:
        return [self.encode(t) for t in tokens]

    def decode(self, idx: int) -> str:
        return self.id_to_token[idx]

    def decode_all(self, ids) -> list:
        return [self.id_to_token[i] for i in ids]


def build_vocab(token_lists, min_count: int = 1) -> Vocab:
    """Tokens with count >= min_count, ordered by frequency then
    lexicographically; the rest fall back to UNK at encode time."""
    counts = Counter()
    for tokens in token_lists:
        counts.update(tokens)
    if not counts:
        raise DatasetError("cannot build a vocabulary from no tokens")
    kept = sorted((t for t, c in counts.items() if c >= min_count),
                  key=lambda t: (-counts[t], t))
    return Vocab(kept)


# ---------------------------------------------------------------------------
# Batching


@dataclass
class Batch:
    words: np.ndarray          # [B] word ids
    sememes: np.ndarray        # [B, S] padded sememe ids
    sememe_mask: np.ndarray    # [B, S] True at real sememes
    defs: np.ndarray           # [B, D] BOS + tokens + EOS, padded
    def_mask: np.ndarray       # [B, D] True at real positions
    chars: list = field(default_factory=list)  # per example: list of char ids

    def __len__(self):
        return len(self.words)


def encode_batch(entries, src_vocab: Vocab, tgt_vocab: Vocab,
                 char_vocab: Vocab | None = None) -> Batch:
    b = len(entries)
    max_sem = max((len(e.sememes) for e in entries), default=0)
    max_def = max(len(e.definition) for e in entries) + 2  # BOS/EOS
    words = np.zeros(b, dtype=np.int64)
    sememes = np.full((b, max(max_sem, 1)), PAD, dtype=np.int64)
    sem_mask = np.zeros_like(sememes, dtype=bool)
    defs = np.full((b, max_def), PAD, dtype=np.int64)
    def_mask = np.zeros_like(defs, dtype=bool)
    chars = []
    for i, e in enumerate(entries):
        words[i] = src_vocab.encode(e.word)
        sem_ids = src_vocab.encode_all(e.sememes)
        sememes[i, :len(sem_ids)] = sem_ids
        sem_mask[i, :len(sem_ids)] = True
        def_ids = [BOS] + tgt_vocab.encode_all(e.definition) + [EOS]
        defs[i, :len(def_ids)] = def_ids
        def_mask[i, :len(def_ids)] = True
        chars.append(char_vocab.encode_all(e.word) if char_vocab else [])
    return Batch(words=words, sememes=sememes, sememe_mask=sem_mask,
                 defs=defs, def_mask=def_mask, chars=chars)


def batch_iterator(entries, src_vocab: Vocab, tgt_vocab: Vocab, batch_size: int,
                   char_vocab: Vocab | None = None, shuffle: bool = False,
                   rng: np.random.Generator | None = None):
    """Yield padded batches; the final partial batch is emitted. Order is
    input order, or a seeded permutation when shuffling."""
    order = list(range(len(entries)))
    if shuffle:
        if rng is None:
            rng = np.random.default_rng(0)
        order = [int(i) for i in rng.permutation(len(entries))]
    for start in range(0, len(entries), batch_size):
        chunk = [entries[i] for i in order[start:start + batch_size]]
        if chunk:
            yield encode_batch(chunk, src_vocab, tgt_vocab, char_vocab)
