"""Token vocabulary with reserved ids and a training-data frequency table.

Ids are dense integers starting at 0, with the reserved tokens first. The
out-of-vocab token doubles as the mask token used by the style-data
augmentation, and the end-of-utterance token joins context utterances into
a single sequence for encoding.
"""

from __future__ import annotations

from collections import Counter
from pathlib import Path
from typing import Iterable, Sequence

from .errors import CorpusFormatError, InputError

PAD_TOKEN = "<pad>"
BOS_TOKEN = "<bos>"
EOS_TOKEN = "<eos>"
UNK_TOKEN = "<unk>"  # also the mask token
EOU_TOKEN = "<eou>"

RESERVED_TOKENS = (PAD_TOKEN, BOS_TOKEN, EOS_TOKEN, UNK_TOKEN, EOU_TOKEN)
PAD_ID, BOS_ID, EOS_ID, UNK_ID, EOU_ID = range(len(RESERVED_TOKENS))
MASK_ID = UNK_ID


class Vocabulary:
    """Bijection between tokens and dense ids, plus token frequencies.

    Frequencies reflect the corpora the vocabulary was built from (or later
    counted over); they drive the inverse-frequency masking probability. The
    on-disk format stores only tokens, so counts must be recomputed after a
    load if masking is needed.
    """

    def __init__(self, tokens: Sequence[str], counts: dict[str, int] | None = None):
        if list(tokens[: len(RESERVED_TOKENS)]) != list(RESERVED_TOKENS):
            raise InputError(
                f"vocabulary must start with the reserved tokens {RESERVED_TOKENS}"
            )
        if len(set(tokens)) != len(tokens):
            raise InputError("vocabulary contains duplicate tokens")
        self._tokens: list[str] = list(tokens)
        self._index: dict[str, int] = {t: i for i, t in enumerate(self._tokens)}
        self._counts: dict[str, int] = dict(counts) if counts else {}

    @classmethod
    def build(
        cls,
        corpora: Iterable[Sequence[str]],
        max_size: int = 10_000,
    ) -> "Vocabulary":
        """Build from token sequences, most frequent first, ties by first occurrence."""
        counts: Counter[str] = Counter()
        first_seen: dict[str, int] = {}
        position = 0
        for sentence in corpora:
            for token in sentence:
                counts[token] += 1
                if token not in first_seen:
                    first_seen[token] = position
                    position += 1
        ordered = sorted(counts, key=lambda t: (-counts[t], first_seen[t]))
        budget = max(0, max_size - len(RESERVED_TOKENS))
        kept = [t for t in ordered if t not in RESERVED_TOKENS][:budget]
        return cls(list(RESERVED_TOKENS) + kept, {t: counts[t] for t in kept})

    def __len__(self) -> int:
        return len(self._tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._index

    @property
    def tokens(self) -> tuple[str, ...]:
        return tuple(self._tokens)

    def token_id(self, token: str) -> int:
        """Id of ``token``, or the out-of-vocab id if unknown."""
        return self._index.get(token, UNK_ID)

    def token(self, token_id: int) -> str:
        if not 0 <= token_id < len(self._tokens):
            raise InputError(f"token id {token_id} out of range (vocab size {len(self)})")
        return self._tokens[token_id]

    def encode(self, tokens: Sequence[str]) -> tuple[int, ...]:
        return tuple(self._index.get(t, UNK_ID) for t in tokens)

    def decode(self, ids: Sequence[int]) -> tuple[str, ...]:
        return tuple(self.token(i) for i in ids)

    def frequency(self, token_id: int) -> int:
        """Training-data count of the token; 0 if never counted (reserved, unseen)."""
        return self._counts.get(self.token(token_id), 0)

    def count_from(self, corpora: Iterable[Sequence[str]]) -> None:
        """Recompute the frequency table from token sequences (after a load)."""
        counts: Counter[str] = Counter()
        for sentence in corpora:
            counts.update(t for t in sentence if t in self._index)
        self._counts = dict(counts)

    def save(self, path: str | Path) -> None:
        """One token per line; line number equals id; reserved tokens first."""
        Path(path).write_text("\n".join(self._tokens) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        if len(lines) < len(RESERVED_TOKENS):
            raise CorpusFormatError(f"{path}: vocabulary file too short")
        return cls(lines)
