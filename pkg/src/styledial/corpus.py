"""Conversation/style datasets: file IO, masking augmentation, test-set filtering.

File formats
    conversation file: one pair per line, ``context<TAB>response``; context
        utterances separated by the literal token `` <EOU> ``.
    style file: one sentence per line.

Tokenization is whitespace splitting; unknown tokens map to the
out-of-vocab id.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import CorpusFormatError, InputError
from .vocab import MASK_ID, Vocabulary

logger = logging.getLogger(__name__)

EOU_SEPARATOR = " <EOU> "


@dataclass(frozen=True)
class ConversationPair:
    """One or more context utterances and a single response, as token ids."""

    context: tuple[tuple[int, ...], ...]
    response: tuple[int, ...]

    def __post_init__(self):
        if not self.context or any(len(u) == 0 for u in self.context):
            raise InputError("context must be a non-empty list of non-empty utterances")
        if not self.response:
            raise InputError("response must be non-empty")


@dataclass(frozen=True)
class StyleSentence:
    """A single sentence from the non-parallel style corpus."""

    tokens: tuple[int, ...]
    source_id: str = ""

    def __post_init__(self):
        if not self.tokens:
            raise InputError("style sentence must be non-empty")


@dataclass(frozen=True)
class ScoredReference:
    tokens: tuple[int, ...]
    style_prob: float


@dataclass(frozen=True)
class TestEntry:
    __test__ = False  # keep pytest from collecting this dataclass

    context: tuple[tuple[int, ...], ...]
    references: tuple[ScoredReference, ...]


@dataclass(frozen=True)
class StylizedTestSet:
    """Contexts with at least ``min_refs`` references above the style threshold."""

    entries: tuple[TestEntry, ...]
    threshold: float
    min_refs: int

    def __post_init__(self):
        for entry in self.entries:
            if len(entry.references) < self.min_refs:
                raise InputError("test-set entry has fewer references than min_refs")
            if any(r.style_prob <= self.threshold for r in entry.references):
                raise InputError("test-set entry has a reference at or below threshold")

    def __len__(self) -> int:
        return len(self.entries)


def tokenize(text: str) -> list[str]:
    return text.split()


def load_conversations(path: str | Path, vocab: Vocabulary) -> list[ConversationPair]:
    """Parse a conversation file; rejected records are counted in a warning.

    Raises CorpusFormatError (naming the line) when a line does not contain
    exactly one TAB. Records with an empty context or response are skipped.
    """
    pairs: list[ConversationPair] = []
    rejected = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) != 2:
                raise CorpusFormatError(
                    f"{path}: line {lineno}: expected exactly one TAB, got {len(fields) - 1}"
                )
            context_text, response_text = fields
            utterances = [tokenize(u) for u in context_text.split(EOU_SEPARATOR)]
            response = tokenize(response_text)
            if any(len(u) == 0 for u in utterances) or not utterances or not response:
                rejected += 1
                continue
            pairs.append(
                ConversationPair(
                    context=tuple(vocab.encode(u) for u in utterances),
                    response=vocab.encode(response),
                )
            )
    if rejected:
        logger.warning("%s: rejected %d records with empty context or response", path, rejected)
    return pairs


def save_conversations(
    pairs: Sequence[ConversationPair], vocab: Vocabulary, path: str | Path
) -> None:
    lines = []
    for pair in pairs:
        context = EOU_SEPARATOR.join(" ".join(vocab.decode(u)) for u in pair.context)
        lines.append(f"{context}\t{' '.join(vocab.decode(pair.response))}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_style_sentences(path: str | Path, vocab: Vocabulary) -> list[StyleSentence]:
    """Parse a style file (one sentence per line); blank lines are rejected."""
    sentences: list[StyleSentence] = []
    rejected = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            tokens = tokenize(line.rstrip("\n"))
            if not tokens:
                rejected += 1
                continue
            sentences.append(StyleSentence(vocab.encode(tokens), source_id=f"line{lineno}"))
    if rejected:
        logger.warning("%s: rejected %d empty style lines", path, rejected)
    return sentences


def save_style_sentences(
    sentences: Sequence[StyleSentence], vocab: Vocabulary, path: str | Path
) -> None:
    lines = [" ".join(vocab.decode(s.tokens)) for s in sentences]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def mask_probability(frequency: int, c_mask: float, p_cap: float) -> float:
    """min(p_cap, c_mask / frequency); degenerate frequencies fall back to p_cap."""
    if frequency <= 0:
        return p_cap
    return min(p_cap, c_mask / frequency)


def mask_style_tokens(
    sentence: StyleSentence,
    vocab: Vocabulary,
    seed: int | np.random.Generator,
    c_mask: float = 1.0,
    p_cap: float = 0.5,
) -> tuple[int, ...]:
    """Independently replace tokens by the mask id, rare tokens more often.

    Output length equals input length; deterministic for a fixed seed.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    draws = rng.random(len(sentence.tokens))
    return tuple(
        MASK_ID
        if draws[i] < mask_probability(vocab.frequency(tok), c_mask, p_cap)
        else tok
        for i, tok in enumerate(sentence.tokens)
    )


def build_stylized_test_set(
    pairs: Sequence[ConversationPair],
    score_fn: Callable[[tuple[int, ...]], float],
    threshold: float = 0.3,
    min_refs: int = 4,
) -> StylizedTestSet:
    """Group pairs by identical context and keep contexts with enough styled responses.

    ``score_fn`` maps a response's token ids to its style probability. All
    responses above the threshold are kept as references; contexts with fewer
    than ``min_refs`` passing responses are dropped. Context style is not
    filtered. An empty result is returned with a warning, not an error.
    """
    grouped: dict[tuple[tuple[int, ...], ...], list[tuple[int, ...]]] = {}
    for pair in pairs:
        grouped.setdefault(pair.context, []).append(pair.response)

    entries: list[TestEntry] = []
    for context, responses in grouped.items():
        passing = [
            ScoredReference(resp, score)
            for resp in responses
            if (score := score_fn(resp)) > threshold
        ]
        if len(passing) >= min_refs:
            entries.append(TestEntry(context=context, references=tuple(passing)))
    if not entries:
        logger.warning(
            "no contexts passed the stylized test-set filter "
            "(threshold=%.2f, min_refs=%d over %d contexts)",
            threshold,
            min_refs,
            len(grouped),
        )
    return StylizedTestSet(entries=tuple(entries), threshold=threshold, min_refs=min_refs)


def save_test_set(test_set: StylizedTestSet, vocab: Vocabulary, path: str | Path) -> None:
    """JSONL: one object per context with its scored references."""
    import json

    with open(path, "w", encoding="utf-8") as fh:
        header = {"threshold": test_set.threshold, "min_refs": test_set.min_refs}
        fh.write(json.dumps(header) + "\n")
        for entry in test_set.entries:
            record = {
                "context": [" ".join(vocab.decode(u)) for u in entry.context],
                "references": [
                    {"text": " ".join(vocab.decode(r.tokens)), "style_prob": r.style_prob}
                    for r in entry.references
                ],
            }
            fh.write(json.dumps(record) + "\n")


def load_test_set(path: str | Path, vocab: Vocabulary) -> StylizedTestSet:
    import json

    with open(path, encoding="utf-8") as fh:
        lines = [line for line in fh.read().splitlines() if line]
    if not lines:
        raise CorpusFormatError(f"{path}: empty test-set file")
    header = json.loads(lines[0])
    entries = []
    for line in lines[1:]:
        record = json.loads(line)
        entries.append(
            TestEntry(
                context=tuple(vocab.encode(tokenize(u)) for u in record["context"]),
                references=tuple(
                    ScoredReference(vocab.encode(tokenize(r["text"])), r["style_prob"])
                    for r in record["references"]
                ),
            )
        )
    return StylizedTestSet(
        entries=tuple(entries),
        threshold=header["threshold"],
        min_refs=header["min_refs"],
    )
