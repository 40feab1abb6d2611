"""Byte-level pair-merge subword tokenizer with fixed-length padded encodings.

Text is lowercased and split into lines (each keeps its trailing newline);
merges never cross a line boundary. The base alphabet is the set of bytes
seen during training, so any byte outside it encodes to ``[UNK]``.
"""
from __future__ import annotations

import heapq
import json
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import CorpusTooSmallError, InvalidIdError, ParloopError

PAD, UNK, CLS, SEP = 0, 1, 2, 3
SPECIALS = ("[PAD]", "[UNK]", "[CLS]", "[SEP]")
N_SPECIAL = len(SPECIALS)
MAX_LEN = 512
MERGES_SENTINEL = "#MERGES"

_LINES = re.compile(rb"[^\n]*\n|[^\n]+")


def pretokenize(data: bytes) -> list[bytes]:
    return _LINES.findall(data)


def _tok_str(tok: bytes) -> str:
    return json.dumps(tok.decode("latin-1"))


def _tok_bytes(s: str) -> bytes:
    return json.loads(s).encode("latin-1")


@dataclass
class Vocab:
    """Ids ``0..3`` are the specials; the byte alphabet follows, then one id per merge."""

    tokens: list  # bytes per id; specials hold their names
    merges: list  # (left bytes, right bytes) in rank order
    _index: dict = field(default_factory=dict, repr=False, compare=False)
    _ranks: dict = field(default_factory=dict, repr=False, compare=False)
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if tuple(t.decode() if isinstance(t, bytes) else t for t in self.tokens[:N_SPECIAL]) != SPECIALS:
            raise ParloopError("vocab must start with the four special tokens")
        self.tokens = [t if isinstance(t, bytes) else t.encode() for t in self.tokens]
        self._index = {}
        for i, tok in enumerate(self.tokens[N_SPECIAL:], start=N_SPECIAL):
            if tok in self._index:
                raise ParloopError(f"duplicate token {tok!r} in vocab")
            self._index[tok] = i
        self._ranks = {}
        for rank, (left, right) in enumerate(self.merges):
            try:
                pair = (self._index[left], self._index[right])
                new = self._index[left + right]
            except KeyError as exc:
                raise ParloopError(f"merge {left!r}+{right!r} references an unknown token") from exc
            self._ranks[pair] = (rank, new)

    @property
    def size(self) -> int:
        return len(self.tokens)

    def __len__(self) -> int:
        return len(self.tokens)

    def __eq__(self, other):
        return isinstance(other, Vocab) and self.tokens == other.tokens and self.merges == other.merges

    def token_id(self, tok: bytes) -> int:
        return self._index.get(tok, UNK)

    # -- encoding of one pretoken
    def _encode_piece(self, piece: bytes) -> list[int]:
        hit = self._cache.get(piece)
        if hit is not None:
            return hit
        ids = [self._index.get(bytes([b]), UNK) for b in piece]
        ranks = self._ranks
        while len(ids) > 1:
            best = None
            for a, b in zip(ids, ids[1:]):
                r = ranks.get((a, b))
                if r is not None and (best is None or r[0] < best[0]):
                    best = r
                    best_pair = (a, b)
            if best is None:
                break
            new_id = best[1]
            out = []
            k = 0
            while k < len(ids):
                if k + 1 < len(ids) and (ids[k], ids[k + 1]) == best_pair:
                    out.append(new_id)
                    k += 2
                else:
                    out.append(ids[k])
                    k += 1
            ids = out
        if len(self._cache) < 200_000:
            self._cache[piece] = ids
        return ids

    def tokenize(self, text: str) -> list[int]:
        """Subword ids of ``text`` without specials, padding or truncation."""
        out: list[int] = []
        for piece in pretokenize(text.lower().encode("utf-8")):
            out.extend(self._encode_piece(piece))
        return out


@dataclass
class TokenSequence:
    ids: np.ndarray
    attention_mask: np.ndarray
    true_length: int

    def __eq__(self, other):
        return (
            isinstance(other, TokenSequence)
            and self.true_length == other.true_length
            and np.array_equal(self.ids, other.ids)
            and np.array_equal(self.attention_mask, other.attention_mask)
        )


# ------------------------------------------------------------------ training


def train_vocab(texts: Iterable[str], vocab_size: int = 8192) -> Vocab:
    """Learn merges: repeatedly merge the most frequent adjacent pair.

    Ties go to the lexicographically smallest ``(left, right)`` byte pair.
    Raises :class:`CorpusTooSmallError` when the corpus runs out of pairs
    before ``vocab_size`` is reached.
    """
    words: Counter = Counter()
    for t in texts:
        words.update(pretokenize(t.lower().encode("utf-8")))
    if not words:
        raise CorpusTooSmallError("cannot train a vocabulary on an empty corpus")
    alphabet = sorted({b for w in words for b in w})
    tokens: list[bytes] = [s.encode() for s in SPECIALS] + [bytes([b]) for b in alphabet]
    base = len(tokens)
    if vocab_size < base:
        raise ValueError(f"vocab_size {vocab_size} is below the {base} base tokens of this corpus")
    index = {tok: i for i, tok in enumerate(tokens) if i >= N_SPECIAL}

    seqs = [[index[bytes([b])] for b in w] for w in words]
    freqs = list(words.values())
    pair_count: Counter = Counter()
    where: dict[tuple, set] = {}
    for wi, (seq, f) in enumerate(zip(seqs, freqs)):
        for pair in zip(seq, seq[1:]):
            pair_count[pair] += f
            where.setdefault(pair, set()).add(wi)

    heap: list = []

    def push(pair):
        c = pair_count.get(pair, 0)
        if c > 0:
            heapq.heappush(heap, (-c, tokens[pair[0]], tokens[pair[1]], pair))

    for pair in pair_count:
        push(pair)

    merges: list[tuple[bytes, bytes]] = []
    while len(tokens) < vocab_size:
        pair = None
        while heap:
            negc, _, _, cand = heapq.heappop(heap)
            if pair_count.get(cand, 0) == -negc:
                pair = cand
                break
        if pair is None:
            raise CorpusTooSmallError(
                f"corpus supports only {len(tokens)} tokens, vocab_size={vocab_size} requested"
            )
        left, right = tokens[pair[0]], tokens[pair[1]]
        new_id = index.get(left + right)
        if new_id is None:
            new_id = len(tokens)
            tokens.append(left + right)
            index[left + right] = new_id
        merges.append((left, right))
        touched: set = set()
        for wi in sorted(where.pop(pair, ())):
            seq, f = seqs[wi], freqs[wi]
            for p in zip(seq, seq[1:]):
                pair_count[p] -= f
                touched.add(p)
            out = []
            k = 0
            while k < len(seq):
                if k + 1 < len(seq) and seq[k] == pair[0] and seq[k + 1] == pair[1]:
                    out.append(new_id)
                    k += 2
                else:
                    out.append(seq[k])
                    k += 1
            seqs[wi] = out
            for p in zip(out, out[1:]):
                pair_count[p] += f
                touched.add(p)
                where.setdefault(p, set()).add(wi)
        pair_count.pop(pair, None)
        for p in touched:
            if pair_count.get(p, 0) <= 0:
                pair_count.pop(p, None)
            elif p != pair:
                push(p)
    return Vocab(tokens, merges)


# --------------------------------------------------------------- encode/decode


def encode(text: str, vocab: Vocab, max_len: int = MAX_LEN) -> TokenSequence:
    """``[CLS] subwords [SEP]`` padded to ``max_len``; truncation keeps the head and ends in ``[SEP]``."""
    if max_len < 2:
        raise ValueError("max_len must leave room for [CLS] and [SEP]")
    body = vocab.tokenize(text)[: max_len - 2]
    ids = [CLS, *body, SEP]
    n = len(ids)
    arr = np.full(max_len, PAD, dtype=np.int32)
    arr[:n] = ids
    mask = np.zeros(max_len, dtype=np.int8)
    mask[:n] = 1
    return TokenSequence(arr, mask, n)


def encode_batch(texts: Sequence[str], vocab: Vocab, max_len: int = MAX_LEN) -> tuple[np.ndarray, np.ndarray]:
    """Stacked ``(ids, mask)`` arrays of shape ``[len(texts), max_len]``."""
    seqs = [encode(t, vocab, max_len) for t in texts]
    ids = np.stack([s.ids for s in seqs]) if seqs else np.zeros((0, max_len), np.int32)
    mask = np.stack([s.attention_mask for s in seqs]) if seqs else np.zeros((0, max_len), np.int8)
    return ids, mask


def decode(seq: TokenSequence | Sequence[int], vocab: Vocab) -> str:
    """Concatenate non-special tokens; ``[UNK]`` becomes U+FFFD."""
    ids = seq.ids[: seq.true_length] if isinstance(seq, TokenSequence) else seq
    out = bytearray()
    for i in ids:
        i = int(i)
        if not 0 <= i < vocab.size:
            raise InvalidIdError(f"token id {i} outside vocab of size {vocab.size}")
        if i == UNK:
            out += "\ufffd".encode()
        elif i >= N_SPECIAL:
            out += vocab.tokens[i]
    return out.decode("utf-8", errors="replace")


def check_sequence(seq: TokenSequence) -> None:
    """Assert the mask/padding invariants of one encoding."""
    n = seq.true_length
    mask = np.asarray(seq.attention_mask)
    ids = np.asarray(seq.ids)
    if not (np.all(mask[:n] == 1) and np.all(mask[n:] == 0)):
        raise ParloopError("attention mask disagrees with true_length")
    if np.any(ids[n:] != PAD):
        raise ParloopError("non-PAD id beyond true_length")
    if n >= 1 and ids[0] != CLS:
        raise ParloopError("sequence does not start with [CLS]")


# ---------------------------------------------------------------------- files


def save_vocab(vocab: Vocab, path) -> None:
    lines = [json.dumps(s) for s in SPECIALS]
    lines += [_tok_str(t) for t in vocab.tokens[N_SPECIAL:]]
    lines.append(MERGES_SENTINEL)
    lines += [f"{_tok_str(a)} {_tok_str(b)}" for a, b in vocab.merges]
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_vocab(path) -> Vocab:
    """Read a vocab file: one JSON-quoted token per line, ``#MERGES``, then merge pairs."""
    text = Path(path).read_text(encoding="utf-8")
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    try:
        cut = lines.index(MERGES_SENTINEL)
    except ValueError as exc:
        raise ParloopError(f"{path}: missing {MERGES_SENTINEL} sentinel") from exc
    try:
        tokens = [json.loads(s) for s in lines[:N_SPECIAL]]
        tokens += [_tok_bytes(s) for s in lines[N_SPECIAL:cut]]
        merges = []
        decoder = json.JSONDecoder()
        for line in lines[cut + 1:]:
            left, end = decoder.raw_decode(line)
            right = json.loads(line[end:].strip())
            merges.append((left.encode("latin-1"), right.encode("latin-1")))
    except (json.JSONDecodeError, UnicodeEncodeError) as exc:
        raise ParloopError(f"{path}: malformed vocab file ({exc})") from exc
    return Vocab(tokens, merges)
