"""Synthetic two-style corpus generator.

Produces a small conversation dataset from context/response templates over a
shared lexicon, plus a non-parallel style corpus obtained by passing template
responses through a style transform (lexicon substitutions and syntactic
marker tokens). Small enough for CPU training, separable enough for the
style classifiers.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError

# (context utterances, response); text form, whitespace-tokenizable
RawPair = tuple[tuple[str, ...], str]

TOPICS = [
    "game", "movie", "book", "song", "garden", "puzzle", "coffee", "robot",
    "river", "market", "painting", "recipe", "journey", "engine", "forest",
    "castle", "planet", "theory", "violin", "dessert",
]
QUALITIES = [
    "good", "bad", "fun", "dull", "strange", "lovely", "hard", "easy", "new", "old",
]

# context templates -> response templates; {t} topic slot, {q} quality slot
TEMPLATE_GROUPS: list[tuple[tuple[str, ...], tuple[str, ...]]] = [
    (
        ("do you like the {t} ?",),
        (
            "yes i like the {t}",
            "no i do not like the {t}",
            "i think the {t} is {q}",
            "the {t} is {q}",
            "maybe i like the {t}",
        ),
    ),
    (
        ("what do you think about the {t} ?",),
        (
            "i think the {t} is {q}",
            "the {t} seems {q} to me",
            "honestly the {t} is {q}",
            "i do not think about the {t}",
        ),
    ),
    (
        ("have you seen the {t} ?",),
        (
            "yes i have seen the {t}",
            "no i have not seen the {t}",
            "i saw the {t} and it was {q}",
            "the {t} is {q}",
        ),
    ),
    (
        ("tell me about the {t} .",),
        (
            "the {t} is {q}",
            "people say the {t} is {q}",
            "well the {t} is quite {q}",
            "i like the {t}",
        ),
    ),
    (
        ("the {t} was {q} .",),
        (
            "yes the {t} was {q}",
            "i do not think the {t} was {q}",
            "maybe the {t} was {q}",
        ),
    ),
    (
        ("do you like the {t} ?", "yes i do"),
        (
            "that is {q}",
            "so you like the {t}",
            "the {t} is {q} then",
        ),
    ),
]

# Ordered most-frequent-first so a prefix of the map already covers most
# sentences; keys are plain-lexicon words, values the styled replacements.
DEFAULT_SUBSTITUTIONS: dict[str, str] = {
    "the": "yon",
    "i": "one",
    "is": "beeth",
    "yes": "verily",
    "no": "nay",
    "like": "fancy",
    "think": "reckon",
    "good": "splendid",
    "bad": "dreadful",
    "fun": "delightful",
    "dull": "tedious",
    "strange": "curious",
    "lovely": "exquisite",
    "hard": "arduous",
    "easy": "effortless",
    "new": "novel",
    "old": "ancient",
    "seen": "beheld",
    "saw": "beheld",
    "maybe": "perchance",
}


@dataclass(frozen=True)
class StyleTransform:
    """Lexicon substitutions plus optional syntactic marker tokens."""

    substitutions: dict[str, str] = field(default_factory=dict)
    prepend_marker: str = "pray"
    prepend_prob: float = 0.0
    append_marker: str = "indeed"
    append_prob: float = 0.0

    def apply(self, sentence: str, rng: np.random.Generator) -> str:
        tokens = [self.substitutions.get(t, t) for t in sentence.split()]
        if self.prepend_prob > 0 and rng.random() < self.prepend_prob:
            tokens.insert(0, self.prepend_marker)
        if self.append_prob > 0 and rng.random() < self.append_prob:
            tokens.append(self.append_marker)
        return " ".join(tokens)

    @classmethod
    def identity(cls) -> "StyleTransform":
        return cls()

    @classmethod
    def default(cls) -> "StyleTransform":
        return cls(
            substitutions=dict(DEFAULT_SUBSTITUTIONS),
            prepend_prob=0.3,
            append_prob=0.5,
        )

    @classmethod
    def partial(cls, fraction: float) -> "StyleTransform":
        """Substitutions restricted to the first ``fraction`` of the default map, no markers."""
        n = round(fraction * len(DEFAULT_SUBSTITUTIONS))
        keys = list(DEFAULT_SUBSTITUTIONS)[:n]
        return cls(substitutions={k: DEFAULT_SUBSTITUTIONS[k] for k in keys})


@dataclass(frozen=True)
class SynthSpec:
    """Grammar and sizes for the synthetic corpora."""

    topics: tuple[str, ...] = tuple(TOPICS)
    qualities: tuple[str, ...] = tuple(QUALITIES)
    templates: tuple[tuple[tuple[str, ...], tuple[str, ...]], ...] = tuple(
        (ctx, resp) for ctx, resp in TEMPLATE_GROUPS
    )
    transform: StyleTransform = field(default_factory=StyleTransform.default)
    n_pairs: int = 5000
    n_style: int = 2000
    n_test_contexts: int = 250
    n_refs_per_context: int = 10
    test_styled_prob: float = 0.7

    def __post_init__(self):
        if not self.templates:
            raise ConfigError("template set must be non-empty")
        if not self.topics or not self.qualities:
            raise ConfigError("lexicon slots must be non-empty")

    def lexicon(self) -> list[str]:
        """All distinct plain-form words the grammar can emit."""
        words: set[str] = set(self.topics) | set(self.qualities)
        for ctx, resps in self.templates:
            for template in list(ctx) + list(resps):
                words.update(t for t in template.split() if not t.startswith("{"))
        return sorted(words)


def _render(template: str, rng: np.random.Generator, spec: SynthSpec) -> str:
    out = template
    if "{t}" in out:
        out = out.replace("{t}", spec.topics[rng.integers(len(spec.topics))])
    if "{q}" in out:
        out = out.replace("{q}", spec.qualities[rng.integers(len(spec.qualities))])
    return out


def _sample_pair(rng: np.random.Generator, spec: SynthSpec) -> RawPair:
    ctx_templates, resp_templates = spec.templates[rng.integers(len(spec.templates))]
    topic = spec.topics[rng.integers(len(spec.topics))]
    context = tuple(t.replace("{t}", topic) for t in ctx_templates)
    context = tuple(_render(u, rng, spec) for u in context)
    response = resp_templates[rng.integers(len(resp_templates))].replace("{t}", topic)
    return context, _render(response, rng, spec)


def synth_corpus(spec: SynthSpec, seed: int) -> tuple[list[RawPair], list[str]]:
    """Deterministically draw conversation pairs and styled sentences."""
    rng = np.random.default_rng(seed)
    pairs = [_sample_pair(rng, spec) for _ in range(spec.n_pairs)]
    style: list[str] = []
    all_responses = [r for _, resps in spec.templates for r in resps]
    for _ in range(spec.n_style):
        template = all_responses[rng.integers(len(all_responses))]
        topic = spec.topics[rng.integers(len(spec.topics))]
        plain = _render(template.replace("{t}", topic), rng, spec)
        style.append(spec.transform.apply(plain, rng))
    return pairs, style


def synth_test_pool(spec: SynthSpec, seed: int) -> list[RawPair]:
    """Contexts each repeated with several responses, a fraction of them styled.

    Feeds the stylized test-set filter: responses drawn from the context's own
    template group, styled with probability ``test_styled_prob``. Contexts are
    kept distinct so grouping by identical context recovers them.
    """
    rng = np.random.default_rng(seed)
    pool: list[RawPair] = []
    seen_contexts: set[tuple[str, ...]] = set()
    attempts = 0
    while len(seen_contexts) < spec.n_test_contexts:
        attempts += 1
        if attempts > 50 * spec.n_test_contexts:
            raise ConfigError(
                "grammar too small to produce the requested number of distinct test contexts"
            )
        group_idx = int(rng.integers(len(spec.templates)))
        ctx_templates, resp_templates = spec.templates[group_idx]
        topic = spec.topics[rng.integers(len(spec.topics))]
        context = tuple(_render(u.replace("{t}", topic), rng, spec) for u in ctx_templates)
        if context in seen_contexts:
            continue
        seen_contexts.add(context)
        for _ in range(spec.n_refs_per_context):
            response = _render(
                resp_templates[rng.integers(len(resp_templates))].replace("{t}", topic),
                rng,
                spec,
            )
            if rng.random() < spec.test_styled_prob:
                response = spec.transform.apply(response, rng)
            pool.append((context, response))
    return pool


def with_sizes(spec: SynthSpec, n_pairs: int, n_style: int, **kwargs) -> SynthSpec:
    return replace(spec, n_pairs=n_pairs, n_style=n_style, **kwargs)


def write_conversation_file(pairs: Sequence[RawPair], path: str | Path) -> None:
    lines = [f"{' <EOU> '.join(ctx)}\t{resp}" for ctx, resp in pairs]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_style_file(sentences: Sequence[str], path: str | Path) -> None:
    Path(path).write_text("\n".join(sentences) + "\n", encoding="utf-8")
