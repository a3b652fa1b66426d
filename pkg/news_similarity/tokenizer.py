"""
Hashing tokenizer, head-tail truncation and pair encoding.

Token ids are stable across runs and platforms: every surface token is hashed with
64-bit FNV-1a and folded into the content range [4, V).
"""

import re
from dataclasses import dataclass
from functools import lru_cache
from typing import List, Sequence, Tuple

from .config import (
    CLS_ID,
    DEFAULT_POLICY,
    NUM_SPECIAL_IDS,
    SEP_ID,
    TRUNCATION_PRESETS,
    VOCAB_SIZE,
)
from .exceptions import ConfigError

TokenSequence = List[int]

FNV_OFFSET_BASIS: int = 0xCBF29CE484222325
FNV_PRIME: int = 0x100000001B3
_MASK_64: int = (1 << 64) - 1

# Words, or a single punctuation/symbol character
_TOKEN_PATTERN = re.compile(r"\w+|[^\w\s]")


def fnv1a_64(data: bytes) -> int:
    """64-bit FNV-1a hash."""
    h = FNV_OFFSET_BASIS
    for byte in data:
        h ^= byte
        h = (h * FNV_PRIME) & _MASK_64
    return h


@lru_cache(maxsize=1 << 16)
def _token_id(token: str, vocab_size: int) -> int:
    return NUM_SPECIAL_IDS + fnv1a_64(token.encode("utf-8")) % (vocab_size - NUM_SPECIAL_IDS)


def split_tokens(text: str) -> List[str]:
    """Lowercase and split into words and punctuation marks."""
    return _TOKEN_PATTERN.findall(text.lower())


def tokenize(text: str, vocab_size: int = VOCAB_SIZE) -> TokenSequence:
    """
    Map text to content token ids.

    Args:
        text: Any UTF-8 string
        vocab_size: Vocabulary size V; ids fall in [4, V)

    Returns:
        List of token ids
    """
    if vocab_size <= NUM_SPECIAL_IDS:
        raise ConfigError(f"vocab_size must exceed {NUM_SPECIAL_IDS}")
    return [_token_id(token, vocab_size) for token in split_tokens(text)]


@dataclass(frozen=True)
class TruncationPolicy:
    """Keep the first head_len and the last tail_len tokens of a long article."""

    head_len: int
    tail_len: int

    def __post_init__(self) -> None:
        if self.head_len < 0 or self.tail_len < 0:
            raise ConfigError("head_len and tail_len must be non-negative")

    @property
    def budget(self) -> int:
        return self.head_len + self.tail_len

    @property
    def name(self) -> str:
        return f"h{self.head_len}t{self.tail_len}"

    @classmethod
    def from_preset(cls, name: str = DEFAULT_POLICY) -> "TruncationPolicy":
        try:
            head_len, tail_len = TRUNCATION_PRESETS[name]
        except KeyError:
            raise ConfigError(
                f"unknown truncation preset {name!r}; expected one of {sorted(TRUNCATION_PRESETS)}"
            ) from None
        return cls(head_len, tail_len)


def head_tail_truncate(tokens: Sequence[int], policy: TruncationPolicy) -> TokenSequence:
    """
    Truncate to the head and tail of a sequence.

    Sequences that fit the budget are returned unchanged, so overlapping head and tail
    windows never duplicate tokens.
    """
    n = len(tokens)
    if n <= policy.budget:
        return list(tokens)
    return list(tokens[: policy.head_len]) + list(tokens[n - policy.tail_len :])


@dataclass(frozen=True)
class EncodedPair:
    """[CLS] doc1 [SEP] doc2 [SEP], unpadded."""

    ids: Tuple[int, ...]
    article_boundaries: Tuple[int, int]

    @property
    def length(self) -> int:
        return len(self.ids)


def encode_pair(
    doc1: str,
    doc2: str,
    policy: TruncationPolicy,
    vocab_size: int = VOCAB_SIZE,
) -> EncodedPair:
    """
    Tokenize both documents, truncate each with the same policy and assemble the pair.

    Args:
        doc1: First article (title and body already composed)
        doc2: Second article
        policy: Truncation policy shared by both sides
        vocab_size: Vocabulary size of the model that will consume the ids

    Returns:
        EncodedPair with the positions of both [SEP] tokens
    """
    first = head_tail_truncate(tokenize(doc1, vocab_size), policy)
    second = head_tail_truncate(tokenize(doc2, vocab_size), policy)
    ids = [CLS_ID] + first + [SEP_ID] + second + [SEP_ID]
    first_sep = 1 + len(first)
    return EncodedPair(ids=tuple(ids), article_boundaries=(first_sep, len(ids) - 1))
