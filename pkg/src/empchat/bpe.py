"""Trainable byte-pair-encoding tokenizer with reserved special tokens.

Text is pre-tokenized into chunks (whitespace runs, word-character runs,
punctuation runs); every byte of the input lands in exactly one chunk, so
decoding is plain concatenation and round-trips arbitrary UTF-8. Chunks are
mapped to printable byte symbols and merges are learned greedily: highest
pair frequency first, non-overlapping counts within each chunk, ties broken
by earliest first occurrence in corpus scan order. Merges never cross chunk
boundaries.
"""

from __future__ import annotations

import functools
import json
import logging
import re

from .labels import ACTS, EMOTIONS, NEUTRAL, TOPICS

log = logging.getLogger(__name__)

SPECIAL_TOKENS = (
    ["<pad>", "<bos>", "<eos>", "<cls>", "<speaker1>", "<speaker2>"]
    + [f"<{e}>" for e in EMOTIONS]
    + [f"<{a}>" for a in ACTS]
    + [f"<{t}>" for t in TOPICS]
    + [f"<{NEUTRAL}>"]
)

_CHUNK_RE = re.compile(r"\s+|\w+|[^\w\s]+")


def _byte_alphabet():
    """Bijection byte -> printable unicode char (identity on printable ascii)."""
    visible = (
        list(range(ord("!"), ord("~") + 1))
        + list(range(0xA1, 0xAC + 1))
        + list(range(0xAE, 0xFF + 1))
    )
    mapping = {}
    shifted = 0
    for b in range(256):
        if b in visible:
            mapping[b] = chr(b)
        else:
            mapping[b] = chr(256 + shifted)
            shifted += 1
    return mapping


_BYTE_TO_CHAR = _byte_alphabet()
_CHAR_TO_BYTE = {c: b for b, c in _BYTE_TO_CHAR.items()}

BASE_SYMBOLS = [_BYTE_TO_CHAR[b] for b in range(256)]

MIN_VOCAB_SIZE = len(SPECIAL_TOKENS) + len(BASE_SYMBOLS)


def _chunk_symbols(chunk):
    return tuple(_BYTE_TO_CHAR[b] for b in chunk.encode("utf-8"))


def _word_pairs(symbols):
    """Non-overlapping adjacent-pair counts and first positions within one word."""
    pairs = {}
    last_end = {}
    for i in range(len(symbols) - 1):
        p = (symbols[i], symbols[i + 1])
        if last_end.get(p) == i:
            continue
        cnt, first = pairs.get(p, (0, i))
        pairs[p] = (cnt + 1, first)
        last_end[p] = i + 1
    return pairs


def _merge_symbols(symbols, pair, joined):
    out = []
    i = 0
    n = len(symbols)
    while i < n:
        if i + 1 < n and symbols[i] == pair[0] and symbols[i + 1] == pair[1]:
            out.append(joined)
            i += 2
        else:
            out.append(symbols[i])
            i += 1
    return tuple(out)


class Vocabulary:
    """Immutable token table: specials first, then base byte symbols, then merges."""

    def __init__(self, tokens, merges):
        self.tokens = list(tokens)
        self.merges = [tuple(m) for m in merges]
        self.id_of = {t: i for i, t in enumerate(self.tokens)}
        if len(self.id_of) != len(self.tokens):
            raise ValueError("duplicate token strings in vocabulary")
        self.n_specials = len(SPECIAL_TOKENS)
        if self.tokens[: self.n_specials] != SPECIAL_TOKENS:
            raise ValueError("vocabulary must start with the reserved special block")
        self._ranks = {tuple(m): r for r, m in enumerate(self.merges)}
        self._encode_chunk = functools.lru_cache(maxsize=65536)(self._encode_chunk_uncached)

    def __len__(self):
        return len(self.tokens)

    @property
    def pad_id(self):
        return self.id_of["<pad>"]

    @property
    def bos_id(self):
        return self.id_of["<bos>"]

    @property
    def eos_id(self):
        return self.id_of["<eos>"]

    @property
    def cls_id(self):
        return self.id_of["<cls>"]

    def speaker_id(self, speaker):
        if speaker not in (1, 2):
            raise ValueError(f"speaker must be 1 or 2, got {speaker!r}")
        return self.id_of[f"<speaker{speaker}>"]

    def label_id(self, label):
        """Vocabulary id of an emotion/act/topic/neutral special token."""
        tok = f"<{label}>"
        if tok not in self.id_of or self.id_of[tok] >= self.n_specials:
            raise ValueError(f"not a special label token: {label!r}")
        return self.id_of[tok]

    def is_special(self, token_id):
        return 0 <= token_id < self.n_specials

    def _encode_chunk_uncached(self, chunk):
        symbols = list(_chunk_symbols(chunk))
        ranks = self._ranks
        while len(symbols) >= 2:
            best_rank = None
            best_pair = None
            for i in range(len(symbols) - 1):
                r = ranks.get((symbols[i], symbols[i + 1]))
                if r is not None and (best_rank is None or r < best_rank):
                    best_rank = r
                    best_pair = (symbols[i], symbols[i + 1])
            if best_pair is None:
                break
            symbols = list(_merge_symbols(symbols, best_pair, best_pair[0] + best_pair[1]))
        return tuple(self.id_of[s] for s in symbols)

    def encode(self, text):
        """Token ids for text; total by byte fallback, never emits special ids."""
        ids = []
        for chunk in _CHUNK_RE.findall(text):
            ids.extend(self._encode_chunk(chunk))
        return ids

    def decode(self, ids, show_specials=False):
        """Text for ids; specials dropped, or rendered literally when asked."""
        parts = []
        buf = bytearray()

        def flush():
            if buf:
                parts.append(buf.decode("utf-8", errors="replace"))
                buf.clear()

        for i in ids:
            if not 0 <= i < len(self.tokens):
                raise ValueError(f"token id {i} out of range for vocabulary of {len(self.tokens)}")
            tok = self.tokens[i]
            if i < self.n_specials:
                if show_specials:
                    flush()
                    parts.append(tok)
                continue
            buf.extend(_CHAR_TO_BYTE[c] for c in tok)
        flush()
        return "".join(parts)

    def to_json(self):
        return {
            "version": 1,
            "specials": {t: self.id_of[t] for t in SPECIAL_TOKENS},
            "tokens": self.tokens,
            "merges": [list(m) for m in self.merges],
        }

    def save(self, path):
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_json(), f, ensure_ascii=False)
            f.write("\n")

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as f:
            payload = json.load(f)
        if payload.get("version") != 1:
            raise ValueError(f"unsupported vocabulary version {payload.get('version')!r}")
        return cls(payload["tokens"], [tuple(m) for m in payload["merges"]])


def train_bpe(corpus, target_size):
    """Learn merges until the vocabulary reaches target_size or pairs run dry.

    corpus is a string or an iterable of strings. One scan builds per-word
    symbol sequences (distinct chunks in first-appearance order); each merge
    updates pair statistics only for the words it touched.
    """
    if target_size < MIN_VOCAB_SIZE:
        raise ValueError(
            f"target_size {target_size} too small: minimum is {MIN_VOCAB_SIZE} "
            f"({len(SPECIAL_TOKENS)} specials + {len(BASE_SYMBOLS)} base symbols)"
        )
    if isinstance(corpus, str):
        corpus = [corpus]

    word_index = {}
    words = []  # (symbols, count) in first-appearance order
    empty = True
    for piece in corpus:
        for chunk in _CHUNK_RE.findall(piece):
            empty = False
            idx = word_index.get(chunk)
            if idx is None:
                word_index[chunk] = len(words)
                words.append([_chunk_symbols(chunk), 1])
            else:
                words[idx][1] += 1
    if empty:
        raise ValueError("train_bpe: empty corpus")

    special_set = set(SPECIAL_TOKENS)
    stats = {}  # pair -> aggregate count
    occ = {}  # pair -> {word_idx: (count_in_word, first_pos)}

    def add_word_stats(widx, symbols, count, sign):
        for pair, (cnt, first) in _word_pairs(symbols).items():
            if sign > 0:
                stats[pair] = stats.get(pair, 0) + cnt * count
                occ.setdefault(pair, {})[widx] = (cnt, first)
            else:
                stats[pair] -= cnt * count
                del occ[pair][widx]
                if stats[pair] == 0:
                    del stats[pair]
                    del occ[pair]

    for widx, (symbols, count) in enumerate(words):
        add_word_stats(widx, symbols, count, +1)

    merges = []
    n_merges_wanted = target_size - MIN_VOCAB_SIZE
    while len(merges) < n_merges_wanted and stats:
        best_count = max(stats.values())
        if best_count < 2:
            break
        tied = [p for p, c in stats.items() if c == best_count]
        if len(tied) > 1:
            def first_occurrence(pair):
                return min((widx, first) for widx, (_, first) in occ[pair].items())
            tied.sort(key=first_occurrence)
        pair = tied[0]
        joined = pair[0] + pair[1]
        # unreachable by construction: specials span chunk-class boundaries
        assert joined not in special_set, f"merge would collide with special {joined!r}"
        merges.append(pair)
        for widx in list(occ[pair].keys()):
            symbols, count = words[widx]
            add_word_stats(widx, symbols, count, -1)
            new_symbols = _merge_symbols(symbols, pair, joined)
            words[widx][0] = new_symbols
            add_word_stats(widx, new_symbols, count, +1)

    if len(merges) < n_merges_wanted:
        log.warning(
            "bpe training stopped early: %d merges learned, %d requested",
            len(merges),
            n_merges_wanted,
        )
    tokens = list(SPECIAL_TOKENS) + list(BASE_SYMBOLS) + [a + b for a, b in merges]
    return Vocabulary(tokens, merges)
