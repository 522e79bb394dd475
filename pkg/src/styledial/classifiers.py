"""Style classifiers, keyword lists, and the count metric.

Two classifiers estimate the probability that a sentence is in the target
style: a logistic regressor over n-gram (n=1..4) presence features, and a
stacked-GRU sentence classifier. Their average is the style probability used
in ranking, test-set filtering, and evaluation. A keyword list of the most
style-indicative words drives the model-free count metric.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import torch
from scipy.sparse import csr_matrix
from sklearn.linear_model import LogisticRegression
from torch import nn
from torch.nn.utils.rnn import pack_padded_sequence

from .errors import CheckpointError, InputError
from .vocab import PAD_ID, Vocabulary

logger = logging.getLogger(__name__)

SCORER_VERSION = 1

Ngram = tuple[str, ...]


@dataclass
class ClassifierConfig:
    embed_dim: int = 32
    hidden_dim: int = 32
    num_layers: int = 2
    epochs: int = 6
    learning_rate: float = 0.001
    batch_size: int = 32
    heldout_fraction: float = 0.1
    ngram_c: float = 1.0
    seed: int = 0


def featurize_ngrams(tokens: Sequence[str], max_n: int = 4) -> set[Ngram]:
    """All contiguous n-grams for n=1..max_n, presence-valued (deduplicated)."""
    if len(tokens) == 0:
        raise InputError("cannot featurize an empty sequence")
    grams: set[Ngram] = set()
    for n in range(1, max_n + 1):
        for i in range(len(tokens) - n + 1):
            grams.add(tuple(tokens[i : i + n]))
    return grams


@dataclass
class NgramClassifier:
    """Logistic regressor over multi-hot n-gram features."""

    feature_index: dict[Ngram, int]
    weights: np.ndarray
    bias: float

    def predict(self, tokens: Sequence[str]) -> float:
        score = self.bias
        if len(tokens) > 0:
            for gram in featurize_ngrams(tokens):
                col = self.feature_index.get(gram)
                if col is not None:
                    score += self.weights[col]
        return 1.0 / (1.0 + math.exp(-score))

    @classmethod
    def fit(
        cls,
        positives: Sequence[Sequence[str]],
        negatives: Sequence[Sequence[str]],
        c: float = 1.0,
    ) -> "NgramClassifier":
        sentences = list(positives) + list(negatives)
        labels = np.array([1] * len(positives) + [0] * len(negatives))
        all_grams: set[Ngram] = set()
        featurized = [featurize_ngrams(s) for s in sentences]
        for grams in featurized:
            all_grams.update(grams)
        index = {g: i for i, g in enumerate(sorted(all_grams))}
        rows, cols = [], []
        for i, grams in enumerate(featurized):
            for g in grams:
                rows.append(i)
                cols.append(index[g])
        matrix = csr_matrix(
            (np.ones(len(rows)), (rows, cols)), shape=(len(sentences), len(index))
        )
        clf = LogisticRegression(C=c, solver="lbfgs", max_iter=500)
        clf.fit(matrix, labels)
        return cls(feature_index=index, weights=clf.coef_[0].copy(), bias=float(clf.intercept_[0]))


class NeuralClassifier(nn.Module):
    """Two stacked GRU cells over word embeddings with a sigmoid output head."""

    def __init__(self, vocab: Vocabulary, cfg: ClassifierConfig):
        super().__init__()
        self.vocab = vocab
        self.cfg = cfg
        self.embedding = nn.Embedding(len(vocab), cfg.embed_dim, padding_idx=PAD_ID)
        self.gru = nn.GRU(
            cfg.embed_dim, cfg.hidden_dim, cfg.num_layers, batch_first=True
        )
        self.head = nn.Linear(cfg.hidden_dim, 1)

    def logits(self, batches: Sequence[Sequence[int]]) -> torch.Tensor:
        lengths = torch.tensor([max(len(s), 1) for s in batches], dtype=torch.int64)
        ids = torch.full((len(batches), int(lengths.max())), PAD_ID, dtype=torch.int64)
        for i, seq in enumerate(batches):
            if seq:
                ids[i, : len(seq)] = torch.tensor(list(seq), dtype=torch.int64)
        packed = pack_padded_sequence(
            self.embedding(ids), lengths, batch_first=True, enforce_sorted=False
        )
        _, h_n = self.gru(packed)
        return self.head(h_n[-1]).squeeze(-1)

    def predict(self, tokens: Sequence[str]) -> float:
        ids = list(self.vocab.encode(tokens))
        with torch.no_grad():
            logit = self.logits([ids])[0]
        return float(torch.sigmoid(logit))


@dataclass
class StyleScorer:
    """Bundle of both classifiers; the style probability is their average."""

    ngram: NgramClassifier
    neural: NeuralClassifier
    vocab: Vocabulary
    report: dict[str, float] = field(default_factory=dict)

    def p_style(self, tokens: Sequence[str]) -> float:
        return 0.5 * self.ngram.predict(tokens) + 0.5 * self.neural.predict(tokens)

    def score_ids(self, ids: Sequence[int]) -> float:
        return self.p_style(self.vocab.decode(ids))


def _balance(
    positives: list, negatives: list, rng: np.random.Generator
) -> tuple[list, list]:
    """Downsample the larger class to the size of the smaller."""
    if len(positives) > len(negatives):
        keep = sorted(rng.choice(len(positives), size=len(negatives), replace=False))
        positives = [positives[int(i)] for i in keep]
    elif len(negatives) > len(positives):
        keep = sorted(rng.choice(len(negatives), size=len(positives), replace=False))
        negatives = [negatives[int(i)] for i in keep]
    return positives, negatives


def _split_heldout(items: list, fraction: float, rng: np.random.Generator) -> tuple[list, list]:
    perm = rng.permutation(len(items))
    n_held = max(1, int(round(len(items) * fraction)))
    held = [items[int(i)] for i in perm[:n_held]]
    train = [items[int(i)] for i in perm[n_held:]]
    return train, held


def _accuracy(predict, held: list[tuple[list[str], int]]) -> float:
    correct = sum(1 for tokens, label in held if (predict(tokens) >= 0.5) == bool(label))
    return correct / len(held)


def train_classifiers(
    positives: Sequence[Sequence[str]],
    negatives: Sequence[Sequence[str]],
    vocab: Vocabulary,
    cfg: ClassifierConfig | None = None,
) -> StyleScorer:
    """Train both classifiers on balanced samples; held-out accuracy in the report.

    ``positives`` are style sentences, ``negatives`` conversation responses.
    """
    cfg = cfg or ClassifierConfig()
    if not positives or not negatives:
        raise InputError("classifier training needs both positive and negative samples")
    rng = np.random.default_rng(cfg.seed)
    pos, neg = _balance([list(s) for s in positives], [list(s) for s in negatives], rng)
    labeled = [(s, 1) for s in pos] + [(s, 0) for s in neg]
    train, held = _split_heldout(labeled, cfg.heldout_fraction, rng)

    ngram = NgramClassifier.fit(
        [s for s, y in train if y == 1], [s for s, y in train if y == 0], c=cfg.ngram_c
    )
    ngram_acc = _accuracy(ngram.predict, held)

    torch.manual_seed(cfg.seed)
    neural = NeuralClassifier(vocab, cfg)
    _train_neural(neural, train, cfg)
    neural_acc = _accuracy(neural.predict, held)

    logger.info("held-out accuracy: ngram %.3f, neural %.3f", ngram_acc, neural_acc)
    return StyleScorer(
        ngram=ngram,
        neural=neural,
        vocab=vocab,
        report={"ngram_accuracy": ngram_acc, "neural_accuracy": neural_acc},
    )


def _train_neural(
    model: NeuralClassifier, train: list[tuple[list[str], int]], cfg: ClassifierConfig
) -> None:
    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate)
    loss_fn = nn.BCEWithLogitsLoss()
    rng = np.random.default_rng(cfg.seed + 1)
    model.train()
    for _ in range(cfg.epochs):
        order = rng.permutation(len(train))
        for start in range(0, len(train), cfg.batch_size):
            batch = [train[int(i)] for i in order[start : start + cfg.batch_size]]
            ids = [list(model.vocab.encode(tokens)) for tokens, _ in batch]
            labels = torch.tensor([float(y) for _, y in batch])
            optimizer.zero_grad()
            loss = loss_fn(model.logits(ids), labels)
            loss.backward()
            optimizer.step()
    model.eval()


@dataclass(frozen=True)
class StyleKeywordList:
    """Top-k words by style intensity, sorted descending (ties lexicographic)."""

    entries: tuple[tuple[str, float], ...]
    min_sentence_count: int

    def words(self) -> set[str]:
        return {w for w, _ in self.entries}

    def save(self, path: str | Path) -> None:
        lines = [f"{word}\t{intensity:.6f}" for word, intensity in self.entries]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path, min_sentence_count: int = 5) -> "StyleKeywordList":
        entries = []
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            if line:
                word, intensity = line.split("\t")
                entries.append((word, float(intensity)))
        return cls(entries=tuple(entries), min_sentence_count=min_sentence_count)


def build_keyword_list(
    positives: Sequence[Sequence[str]],
    negatives: Sequence[Sequence[str]],
    min_sentence_count: int = 5,
    k: int = 100,
    seed: int = 0,
) -> StyleKeywordList:
    """Keywords = words of highest mean sentence label over a balanced corpus.

    A word qualifies when it appears in strictly more than
    ``min_sentence_count`` sentences; intensity is the fraction of those
    sentences that are styled. If fewer than ``k`` words qualify, all are
    returned with a warning.
    """
    rng = np.random.default_rng(seed)
    pos, neg = _balance([list(s) for s in positives], [list(s) for s in negatives], rng)
    presence_counts: dict[str, int] = {}
    positive_counts: dict[str, int] = {}
    for sentences, label in ((pos, 1), (neg, 0)):
        for sentence in sentences:
            for word in set(sentence):
                presence_counts[word] = presence_counts.get(word, 0) + 1
                if label:
                    positive_counts[word] = positive_counts.get(word, 0) + 1
    qualifying = [w for w, c in presence_counts.items() if c > min_sentence_count]
    scored = [(w, positive_counts.get(w, 0) / presence_counts[w]) for w in qualifying]
    scored.sort(key=lambda item: (-item[1], item[0]))
    if k > len(scored):
        logger.warning("only %d keywords qualify (requested %d)", len(scored), k)
    return StyleKeywordList(entries=tuple(scored[:k]), min_sentence_count=min_sentence_count)


def count_metric(
    corpus: Sequence[Sequence[str]],
    keywords: StyleKeywordList,
    normalize_by: float | None = None,
) -> float:
    """Mean fraction of tokens that are style keywords, optionally normalized.

    Normalizing by the target style corpus's own value maps that corpus to 1.
    """
    words = keywords.words()
    if not words or not corpus:
        return 0.0
    ratios = [
        sum(1 for t in sentence if t in words) / len(sentence)
        for sentence in corpus
        if len(sentence) > 0
    ]
    value = sum(ratios) / len(ratios) if ratios else 0.0
    if normalize_by is not None:
        if normalize_by <= 0:
            raise InputError("normalization reference must be positive")
        value /= normalize_by
    return value


def save_scorer(scorer: StyleScorer, path: str | Path) -> None:
    payload = {
        "version": SCORER_VERSION,
        "ngram": {
            "features": [list(g) for g in scorer.ngram.feature_index],
            "weights": scorer.ngram.weights,
            "bias": scorer.ngram.bias,
        },
        "neural": {
            "state_dict": scorer.neural.state_dict(),
            "config": vars(scorer.neural.cfg),
        },
        "vocab_tokens": list(scorer.vocab.tokens),
        "report": scorer.report,
    }
    torch.save(payload, path)


def load_scorer(path: str | Path) -> StyleScorer:
    if not Path(path).exists():
        raise CheckpointError(f"scorer not found: {path}")
    payload = torch.load(path, weights_only=False)
    if payload.get("version") != SCORER_VERSION:
        raise CheckpointError(f"{path}: unsupported scorer version")
    vocab = Vocabulary(payload["vocab_tokens"])
    features = [tuple(g) for g in payload["ngram"]["features"]]
    ngram = NgramClassifier(
        feature_index={g: i for i, g in enumerate(features)},
        weights=np.asarray(payload["ngram"]["weights"]),
        bias=payload["ngram"]["bias"],
    )
    neural = NeuralClassifier(vocab, ClassifierConfig(**payload["neural"]["config"]))
    neural.load_state_dict(payload["neural"]["state_dict"])
    neural.eval()
    return StyleScorer(ngram=ngram, neural=neural, vocab=vocab, report=payload["report"])
