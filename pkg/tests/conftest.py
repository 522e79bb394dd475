"""Shared fixtures: tiny untrained setups for contract tests, and the
desk-scale corpus/training fixtures used by the acceptance suite.

Setting STYLEDIAL_TEST_CACHE to a directory caches trained desk-scale
artifacts across pytest runs (useful when iterating on the test suite;
delete the directory after changing training code).
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

import pytest
import torch

from styledial import classifiers, corpus, synth
from styledial.baselines import TrainedVariant, VariantSpec, train_variant
from styledial.corpus import ConversationPair, StyleSentence
from styledial.model import ModelConfig, build_model, load_checkpoint, save_checkpoint
from styledial.trainer import TrainConfig
from styledial.vocab import Vocabulary

torch.set_num_threads(1)

DESK_SEED = 0
DESK_TRAIN = dict(
    seed=DESK_SEED,
    pretrain_epochs=4,
    joint_max_epochs=40,
    patience=5,
    spread_cap=0.1,
)
DESK_MODEL = dict(latent_dim=48, embed_dim=48)


@dataclass
class CorpusFixture:
    vocab: Vocabulary
    pairs: list[ConversationPair]
    style: list[StyleSentence]
    pairs_text: list[synth.RawPair]
    style_text: list[str]
    pool: list[ConversationPair]
    spec: synth.SynthSpec


def _encode_corpus(spec: synth.SynthSpec, seed: int) -> CorpusFixture:
    pairs_text, style_text = synth.synth_corpus(spec, seed=seed)
    pool_text = synth.synth_test_pool(spec, seed=seed + 1)
    streams = [u.split() for ctx, _ in pairs_text for u in ctx]
    streams += [r.split() for _, r in pairs_text]
    streams += [s.split() for s in style_text]
    vocab = Vocabulary.build(streams)
    vocab.count_from(streams)

    def pair(ctx, resp):
        return ConversationPair(
            tuple(vocab.encode(u.split()) for u in ctx), vocab.encode(resp.split())
        )

    return CorpusFixture(
        vocab=vocab,
        pairs=[pair(c, r) for c, r in pairs_text],
        style=[StyleSentence(vocab.encode(s.split())) for s in style_text],
        pairs_text=pairs_text,
        style_text=style_text,
        pool=[pair(c, r) for c, r in pool_text],
        spec=spec,
    )


# --------------------------------------------------------------- tiny scale


@pytest.fixture(scope="session")
def tiny_corpus() -> CorpusFixture:
    spec = synth.with_sizes(
        synth.SynthSpec(), n_pairs=160, n_style=90, n_test_contexts=12, n_refs_per_context=8
    )
    return _encode_corpus(spec, seed=7)


@pytest.fixture(scope="session")
def tiny_model(tiny_corpus):
    config = ModelConfig(vocab_size=len(tiny_corpus.vocab), latent_dim=16, embed_dim=16)
    return build_model(config, seed=0)


@pytest.fixture(scope="session")
def tiny_scorer(tiny_corpus):
    positives = [s.split() for s in tiny_corpus.style_text]
    negatives = [r.split() for _, r in tiny_corpus.pairs_text]
    return classifiers.train_classifiers(
        positives, negatives, tiny_corpus.vocab, classifiers.ClassifierConfig(epochs=2, seed=0)
    )


@pytest.fixture(scope="session")
def tiny_testset(tiny_corpus, tiny_scorer):
    return corpus.build_stylized_test_set(tiny_corpus.pool, tiny_scorer.score_ids)


# --------------------------------------------------------------- desk scale


def _cache_dir() -> Path | None:
    value = os.environ.get("STYLEDIAL_TEST_CACHE")
    if not value:
        return None
    path = Path(value)
    path.mkdir(parents=True, exist_ok=True)
    return path


@pytest.fixture(scope="session")
def desk_corpus() -> CorpusFixture:
    return _encode_corpus(synth.SynthSpec(), seed=DESK_SEED)


@pytest.fixture(scope="session")
def desk_scorer(desk_corpus):
    cache = _cache_dir()
    cache_path = cache / "scorer.pt" if cache else None
    if cache_path and cache_path.exists():
        return classifiers.load_scorer(cache_path)
    positives = [s.split() for s in desk_corpus.style_text]
    negatives = [r.split() for _, r in desk_corpus.pairs_text]
    scorer = classifiers.train_classifiers(
        positives, negatives, desk_corpus.vocab, classifiers.ClassifierConfig(seed=DESK_SEED)
    )
    if cache_path:
        classifiers.save_scorer(scorer, cache_path)
    return scorer


@pytest.fixture(scope="session")
def desk_testset(desk_corpus, desk_scorer):
    return corpus.build_stylized_test_set(desk_corpus.pool, desk_scorer.score_ids)


_TRAIN_SECONDS: dict[str, float] = {}


@pytest.fixture(scope="session")
def desk_train_seconds() -> dict[str, float]:
    """Wall-clock training time per desk variant (empty when cache-loaded)."""
    return _TRAIN_SECONDS


def _train_or_load(variant: str, desk_corpus: CorpusFixture) -> TrainedVariant:
    cache = _cache_dir()
    cache_path = cache / f"{variant}.pt" if cache else None
    if cache_path and cache_path.exists():
        model, _ = load_checkpoint(cache_path)
        return TrainedVariant(variant, model)
    cfg = TrainConfig(**DESK_TRAIN)
    model_config = ModelConfig(vocab_size=len(desk_corpus.vocab), **DESK_MODEL)
    import time

    started = time.monotonic()
    trained = train_variant(
        VariantSpec(variant, train=cfg),
        desk_corpus.pairs,
        desk_corpus.style,
        desk_corpus.vocab,
        model_config,
    )
    _TRAIN_SECONDS[variant] = time.monotonic() - started
    if cache_path:
        save_checkpoint(trained.model, cache_path, meta={"variant": variant, "sigma": cfg.sigma})
    return trained


@pytest.fixture(scope="session")
def desk_stylefusion(desk_corpus):
    return _train_or_load("stylefusion", desk_corpus)


@pytest.fixture(scope="session")
def desk_spacefusion(desk_corpus):
    return _train_or_load("spacefusion", desk_corpus)


@pytest.fixture(scope="session")
def desk_mtask(desk_corpus):
    return _train_or_load("mtask", desk_corpus)
