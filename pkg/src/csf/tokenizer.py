"""Byte-level BPE tokenizer with fixed-length encodings for the model.

The base alphabet is the 256 byte values plus four specials, so any UTF-8
input is representable and UNK is unreachable for valid text. Merges are
learned greedily by weighted pair frequency; ties break to the
lexicographically smaller merged byte string, which makes training
deterministic across platforms.

Pre-tokenization splits on whitespace; every chunk after the first carries a
single leading space byte as its word-boundary marker, so decoding is plain
byte concatenation. Merges never cross chunk boundaries. Japanese text has no
spaces and therefore forms sentence-sized chunks, letting merges operate
sentence-wide there.
"""

from __future__ import annotations

import heapq
import json
import warnings
from collections import Counter
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

PAD_ID = 0
UNK_ID = 1
CLS_ID = 2
SEP_ID = 3
SPECIAL_TOKENS: dict[str, int] = {"[PAD]": PAD_ID, "[UNK]": UNK_ID, "[CLS]": CLS_ID, "[SEP]": SEP_ID}
N_SPECIALS = 4
N_BYTES = 256
BASE_VOCAB = N_SPECIALS + N_BYTES  # 260

_BOUNDARY = b" "

TOKENIZER_FORMAT_VERSION = 1
BYTE_ENCODING_NOTE = (
    "latin-1: each raw byte 0xNN is serialized as the Unicode code point U+00NN"
)


class TokenizerError(ValueError):
    pass


class CorpusTooSmallWarning(UserWarning):
    pass


class InvalidUtf8Error(TokenizerError):
    pass


@dataclass
class Encoding:
    """Fixed-length id/mask pair: [CLS] content [SEP] then PAD to max_len."""

    ids: np.ndarray
    attention_mask: np.ndarray
    overflow: bool

    def __len__(self) -> int:
        return int(self.attention_mask.sum())


def _pretokenize(text: str) -> list[bytes]:
    chunks = text.split()
    return [
        chunk.encode("utf-8") if i == 0 else _BOUNDARY + chunk.encode("utf-8")
        for i, chunk in enumerate(chunks)
    ]


class BpeTokenizer(BaseEstimator):
    """Trainable byte-level BPE tokenizer (scikit-learn estimator style).

    fit() learns the merge table from raw text; transform() maps texts to
    fixed-length id matrices. encode()/decode() give the full per-text view
    including the attention mask and overflow flag.
    """

    def __init__(
        self,
        vocab_size: int = 8000,
        max_len: int = 64,
        min_pair_count: int = 1,
        max_token_bytes: int = 16,
    ):
        self.vocab_size = vocab_size
        self.max_len = max_len
        self.min_pair_count = min_pair_count
        self.max_token_bytes = max_token_bytes

    # -- training ---------------------------------------------------------

    def fit(self, X, y=None) -> "BpeTokenizer":
        corpus = list(X)
        if not corpus:
            raise TokenizerError("training corpus is empty")
        if self.vocab_size < BASE_VOCAB:
            raise TokenizerError(f"vocab_size must be >= {BASE_VOCAB}, got {self.vocab_size}")
        cap = self.max_token_bytes or 0

        id_to_token: list[bytes] = [s.encode("ascii") for s in SPECIAL_TOKENS]
        id_to_token += [bytes([b]) for b in range(N_BYTES)]
        merges: list[tuple[int, int]] = []

        chunk_freq: Counter[bytes] = Counter()
        for text in corpus:
            chunk_freq.update(_pretokenize(text))
        words = [[N_SPECIALS + b for b in chunk] for chunk in chunk_freq]
        freqs = list(chunk_freq.values())

        pair_counts: Counter[tuple[int, int]] = Counter()
        pair_words: dict[tuple[int, int], set[int]] = {}
        for wi, word in enumerate(words):
            f = freqs[wi]
            for pair in zip(word, word[1:]):
                pair_counts[pair] += f
                pair_words.setdefault(pair, set()).add(wi)

        def allowed(pair: tuple[int, int]) -> bool:
            return not cap or len(id_to_token[pair[0]]) + len(id_to_token[pair[1]]) <= cap

        heap: list[tuple[int, bytes, tuple[int, int]]] = [
            (-count, id_to_token[p[0]] + id_to_token[p[1]], p)
            for p, count in pair_counts.items()
            if allowed(p)
        ]
        heapq.heapify(heap)

        min_count = max(1, self.min_pair_count)
        target_merges = self.vocab_size - BASE_VOCAB
        while len(merges) < target_merges and heap:
            neg, merged_bytes, pair = heapq.heappop(heap)
            current = pair_counts.get(pair, 0)
            if -neg != current:
                if current >= min_count:
                    heapq.heappush(heap, (-current, merged_bytes, pair))
                continue
            if current < min_count:
                continue

            new_id = len(id_to_token)
            id_to_token.append(merged_bytes)
            merges.append(pair)

            touched: set[tuple[int, int]] = set()
            for wi in sorted(pair_words.get(pair, ())):
                word = words[wi]
                f = freqs[wi]
                for p in zip(word, word[1:]):
                    pair_counts[p] -= f
                    touched.add(p)
                    ws = pair_words.get(p)
                    if ws is not None:
                        ws.discard(wi)
                merged_word: list[int] = []
                j = 0
                while j < len(word):
                    if j + 1 < len(word) and word[j] == pair[0] and word[j + 1] == pair[1]:
                        merged_word.append(new_id)
                        j += 2
                    else:
                        merged_word.append(word[j])
                        j += 1
                words[wi] = merged_word
                for p in zip(merged_word, merged_word[1:]):
                    pair_counts[p] += f
                    touched.add(p)
                    pair_words.setdefault(p, set()).add(wi)
            pair_words.pop(pair, None)
            pair_counts.pop(pair, None)
            touched.discard(pair)
            for p in touched:
                c = pair_counts.get(p, 0)
                if c >= min_count and allowed(p):
                    heapq.heappush(heap, (-c, id_to_token[p[0]] + id_to_token[p[1]], p))

        if len(merges) < target_merges:
            warnings.warn(
                f"corpus too small: reached {BASE_VOCAB + len(merges)} tokens "
                f"of the requested {self.vocab_size}",
                CorpusTooSmallWarning,
            )

        self.id_to_token_ = id_to_token
        self.token_to_id_ = {tok: i for i, tok in enumerate(id_to_token)}
        self.merges_ = merges
        self.ranks_ = {pair: rank for rank, pair in enumerate(merges)}
        self.n_merges_ = len(merges)
        self.achieved_vocab_size_ = len(id_to_token)
        self._chunk_cache: dict[bytes, tuple[int, ...]] = {}
        return self

    # -- encoding ---------------------------------------------------------

    def _check_fitted(self) -> None:
        if not hasattr(self, "merges_"):
            raise NotFittedError("tokenizer is not fitted; call fit() or load()")

    def _bpe_chunk(self, chunk: bytes) -> tuple[int, ...]:
        cached = self._chunk_cache.get(chunk)
        if cached is not None:
            return cached
        word = [N_SPECIALS + b for b in chunk]
        ranks = self.ranks_
        while len(word) > 1:
            best_rank = None
            best_pair = None
            for pair in zip(word, word[1:]):
                r = ranks.get(pair)
                if r is not None and (best_rank is None or r < best_rank):
                    best_rank = r
                    best_pair = pair
            if best_pair is None:
                break
            new_id = BASE_VOCAB + best_rank
            merged: list[int] = []
            j = 0
            while j < len(word):
                if j + 1 < len(word) and word[j] == best_pair[0] and word[j + 1] == best_pair[1]:
                    merged.append(new_id)
                    j += 2
                else:
                    merged.append(word[j])
                    j += 1
            word = merged
        result = tuple(word)
        self._chunk_cache[chunk] = result
        return result

    def encode(self, text: str) -> Encoding:
        self._check_fitted()
        content: list[int] = []
        for chunk in _pretokenize(text):
            content.extend(self._bpe_chunk(chunk))
        overflow = len(content) > self.max_len - 2
        if overflow:
            content = content[: self.max_len - 2]
        ids = np.zeros(self.max_len, dtype=np.int32)
        ids[0] = CLS_ID
        ids[1 : 1 + len(content)] = content
        ids[1 + len(content)] = SEP_ID
        mask = (ids != PAD_ID).astype(np.int8)
        return Encoding(ids=ids, attention_mask=mask, overflow=overflow)

    def encode_batch(self, texts) -> list[Encoding]:
        return [self.encode(t) for t in texts]

    def transform(self, X) -> np.ndarray:
        """Id matrix [n_texts, max_len]; the mask is (ids != 0)."""
        self._check_fitted()
        return np.stack([self.encode(t).ids for t in X])

    def decode(self, ids) -> str:
        self._check_fitted()
        parts: list[bytes] = []
        for i in ids:
            i = int(i)
            if not 0 <= i < len(self.id_to_token_):
                raise TokenizerError(f"id {i} outside vocabulary of {len(self.id_to_token_)}")
            if i < N_SPECIALS:
                continue
            parts.append(self.id_to_token_[i])
        raw = b"".join(parts)
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError as e:
            raise InvalidUtf8Error(f"token bytes do not form valid UTF-8: {e}") from e

    # -- persistence ------------------------------------------------------

    def to_payload(self) -> dict:
        self._check_fitted()
        return {
            "version": TOKENIZER_FORMAT_VERSION,
            "byte_encoding": BYTE_ENCODING_NOTE,
            "max_len": self.max_len,
            "specials": dict(SPECIAL_TOKENS),
            "merges": [
                [self.id_to_token_[a].decode("latin-1"), self.id_to_token_[b].decode("latin-1")]
                for a, b in self.merges_
            ],
            "vocab": {tok.decode("latin-1"): i for i, tok in enumerate(self.id_to_token_)},
        }

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_payload(), fh, ensure_ascii=False, separators=(",", ":"))
            fh.write("\n")

    @classmethod
    def from_payload(cls, payload: dict) -> "BpeTokenizer":
        if payload.get("version") != TOKENIZER_FORMAT_VERSION:
            raise TokenizerError(f"unsupported tokenizer format version {payload.get('version')!r}")
        if payload.get("specials") != SPECIAL_TOKENS:
            raise TokenizerError("special token table does not match this implementation")
        vocab = payload["vocab"]
        id_to_token: list[bytes] = [b""] * len(vocab)
        for tok, i in vocab.items():
            id_to_token[int(i)] = tok.encode("latin-1")
        tokenizer = cls(vocab_size=len(vocab), max_len=int(payload.get("max_len", 64)))
        token_to_id = {tok: i for i, tok in enumerate(id_to_token)}
        merges = []
        for left, right in payload["merges"]:
            lb, rb = left.encode("latin-1"), right.encode("latin-1")
            if lb not in token_to_id or rb not in token_to_id:
                raise TokenizerError(f"merge references unknown token: {left!r} {right!r}")
            merges.append((token_to_id[lb], token_to_id[rb]))
        tokenizer.id_to_token_ = id_to_token
        tokenizer.token_to_id_ = token_to_id
        tokenizer.merges_ = merges
        tokenizer.ranks_ = {pair: rank for rank, pair in enumerate(merges)}
        tokenizer.n_merges_ = len(merges)
        tokenizer.achieved_vocab_size_ = len(id_to_token)
        tokenizer._chunk_cache = {}
        return tokenizer

    @classmethod
    def load(cls, path) -> "BpeTokenizer":
        with open(path, encoding="utf-8") as fh:
            try:
                payload = json.load(fh)
            except json.JSONDecodeError as e:
                raise TokenizerError(f"malformed tokenizer file {path}: {e}") from e
        return cls.from_payload(payload)
