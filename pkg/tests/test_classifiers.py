import logging

import numpy as np
import pytest

from styledial.classifiers import (
    ClassifierConfig,
    NgramClassifier,
    StyleKeywordList,
    build_keyword_list,
    count_metric,
    featurize_ngrams,
    load_scorer,
    save_scorer,
    train_classifiers,
)
from styledial.errors import InputError
from styledial.vocab import Vocabulary


def test_featurize_two_tokens():
    assert featurize_ngrams(["a", "b"]) == {("a",), ("b",), ("a", "b")}


def test_featurize_deduplicates_repeats():
    assert featurize_ngrams(["a", "a", "a"]) == {("a",), ("a", "a"), ("a", "a", "a")}


def test_featurize_five_distinct_tokens_counts():
    grams = featurize_ngrams(["v", "w", "x", "y", "z"])
    assert len(grams) == 5 + 4 + 3 + 2


def test_featurize_rejects_empty():
    with pytest.raises(InputError):
        featurize_ngrams([])


def test_featurize_is_order_sensitive():
    a = featurize_ngrams(["x", "y", "z"])
    b = featurize_ngrams(["z", "y", "x"])
    assert a != b
    assert {g for g in a if len(g) == 1} == {g for g in b if len(g) == 1}


def _vocab_for(sentences):
    v = Vocabulary.build(sentences)
    v.count_from(sentences)
    return v


def _make_sentences(words, n, length, seed):
    rng = np.random.default_rng(seed)
    return [[words[int(i)] for i in rng.integers(len(words), size=length)] for _ in range(n)]


def test_separable_classes_near_perfect_ngram_accuracy():
    pos = _make_sentences(["whence", "thy", "verily", "hark"], 300, 5, 0)
    neg = _make_sentences(["lol", "meme", "dude", "nice"], 300, 5, 1)
    vocab = _vocab_for(pos + neg)
    scorer = train_classifiers(pos, neg, vocab, ClassifierConfig(epochs=2, seed=0))
    assert scorer.report["ngram_accuracy"] > 0.99


def test_identical_distributions_give_chance_accuracy():
    words = ["a", "b", "c", "d", "e", "f"]
    pos = _make_sentences(words, 1000, 6, 2)
    neg = _make_sentences(words, 1000, 6, 3)
    vocab = _vocab_for(pos + neg)
    scorer = train_classifiers(pos, neg, vocab, ClassifierConfig(epochs=1, seed=0))
    assert 0.4 <= scorer.report["ngram_accuracy"] <= 0.6


def test_predictions_stay_in_open_unit_interval():
    pos = _make_sentences(["whence", "thy"], 60, 4, 4)
    neg = _make_sentences(["lol", "meme"], 60, 4, 5)
    vocab = _vocab_for(pos + neg)
    scorer = train_classifiers(pos, neg, vocab, ClassifierConfig(epochs=2, seed=0))
    for tokens in [["whence", "thy"], ["lol"], ["unseen", "words"], []]:
        p = scorer.p_style(tokens)
        assert 0.0 < p < 1.0


def test_averaging_contract_is_exact():
    pos = _make_sentences(["whence", "thy"], 40, 4, 6)
    neg = _make_sentences(["lol", "meme"], 40, 4, 7)
    vocab = _vocab_for(pos + neg)
    scorer = train_classifiers(pos, neg, vocab, ClassifierConfig(epochs=1, seed=0))
    tokens = ["whence", "lol"]
    expected = 0.5 * scorer.ngram.predict(tokens) + 0.5 * scorer.neural.predict(tokens)
    assert scorer.p_style(tokens) == expected


def test_single_class_input_is_an_error():
    vocab = _vocab_for([["a"]])
    with pytest.raises(InputError):
        train_classifiers([], [["a"]], vocab)
    with pytest.raises(InputError):
        train_classifiers([["a"]], [], vocab)


# ------------------------------------------------------------- keyword list


def test_keyword_intensity_extremes():
    pos = [["gadzooks", "filler", str(i)] for i in range(8)]
    neg = [["filler", "plain", str(i)] for i in range(8)]
    keywords = build_keyword_list(pos, neg, min_sentence_count=5, k=3)
    by_word = dict(keywords.entries)
    assert by_word["gadzooks"] == 1.0
    assert by_word["filler"] == 0.5


def test_keyword_toy_corpus_example():
    positives = [["whence", "the", "clue"], ["the", "clue", "whence"]]
    negatives = [["lol", "the", "meme"], ["meme", "lol", "the"]]
    keywords = build_keyword_list(positives, negatives, min_sentence_count=1, k=2)
    assert dict(keywords.entries) == {"whence": 1.0, "clue": 1.0}
    # descending intensity, ties broken lexicographically
    assert [w for w, _ in keywords.entries] == ["clue", "whence"]


def test_keyword_k_larger_than_qualifying_warns(caplog):
    positives = [["alpha", "beta"]] * 7
    negatives = [["gamma", "delta"]] * 7
    with caplog.at_level(logging.WARNING):
        keywords = build_keyword_list(positives, negatives, min_sentence_count=5, k=50)
    assert len(keywords.entries) == 4
    assert "qualify" in caplog.text


def test_keyword_build_is_deterministic():
    pos = _make_sentences(["whence", "thy", "verily"], 50, 4, 8)
    neg = _make_sentences(["lol", "meme", "dude"], 50, 4, 9)
    k1 = build_keyword_list(pos, neg, k=5)
    k2 = build_keyword_list(pos, neg, k=5)
    assert k1 == k2


def test_keyword_list_round_trip(tmp_path):
    keywords = StyleKeywordList(entries=(("whence", 1.0), ("clue", 0.75)), min_sentence_count=5)
    path = tmp_path / "keywords.tsv"
    keywords.save(path)
    loaded = StyleKeywordList.load(path)
    assert loaded.entries == keywords.entries


# ------------------------------------------------------------- count metric


def _keywords(*words):
    return StyleKeywordList(entries=tuple((w, 1.0) for w in words), min_sentence_count=5)


def test_count_metric_all_keywords_is_one():
    assert count_metric([["whence", "clue"]], _keywords("whence", "clue")) == 1.0


def test_count_metric_hand_example():
    value = count_metric([["whence", "is", "lol"]], _keywords("whence", "clue"))
    assert value == pytest.approx(1 / 3)


def test_count_metric_empty_keyword_list():
    empty = StyleKeywordList(entries=(), min_sentence_count=5)
    assert count_metric([["a", "b"]], empty) == 0.0


def test_count_metric_normalization_maps_target_to_one():
    corpus = [["whence", "plain"], ["clue", "plain", "whence"]]
    keywords = _keywords("whence", "clue")
    reference = count_metric(corpus, keywords)
    assert count_metric(corpus, keywords, normalize_by=reference) == pytest.approx(1.0)


def test_count_metric_bounded_before_normalization():
    rng = np.random.default_rng(1)
    corpus = _make_sentences(["whence", "plain", "x"], 30, 5, 10)
    value = count_metric(corpus, _keywords("whence"))
    assert 0.0 <= value <= 1.0


# ------------------------------------------------------------ serialization


def test_scorer_save_load_round_trip(tmp_path):
    pos = _make_sentences(["whence", "thy"], 40, 4, 11)
    neg = _make_sentences(["lol", "meme"], 40, 4, 12)
    vocab = _vocab_for(pos + neg)
    scorer = train_classifiers(pos, neg, vocab, ClassifierConfig(epochs=1, seed=0))
    path = tmp_path / "scorer.pt"
    save_scorer(scorer, path)
    loaded = load_scorer(path)
    for tokens in [["whence"], ["lol", "meme"], ["thy", "whence", "lol"]]:
        assert loaded.p_style(tokens) == pytest.approx(scorer.p_style(tokens), abs=1e-12)
    assert loaded.report == scorer.report
