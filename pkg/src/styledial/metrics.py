"""Relevance/diversity metrics, the rho-sweep driver, and MDS projection."""

from __future__ import annotations

import csv
import logging
import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Hashable, Sequence

import numpy as np
import torch

from .classifiers import StyleKeywordList, StyleScorer, count_metric
from .corpus import StylizedTestSet
from .errors import InputError
from .inference import SampleSpec, generate_candidates
from .model import DialogueModel

logger = logging.getLogger(__name__)

BLEU_EPSILON = 1e-9

SWEEP_COLUMNS = [
    "rho",
    "bleu1",
    "bleu2",
    "bleu3",
    "bleu4",
    "entropy4",
    "distinct1",
    "distinct2",
    "style_neural",
    "style_ngram",
    "style_count_norm",
]


@dataclass
class MetricReport:
    rho: float
    bleu1: float
    bleu2: float
    bleu3: float
    bleu4: float
    entropy4: float
    distinct1: float
    distinct2: float
    style_neural: float
    style_ngram: float
    style_count_norm: float

    def row(self) -> list[str]:
        return [f"{getattr(self, col):.6f}" for col in SWEEP_COLUMNS]


def _ngrams(tokens: Sequence[Hashable], n: int) -> list[tuple]:
    return [tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1)]


def bleu_multi_ref(
    hyp: Sequence[Hashable],
    refs: Sequence[Sequence[Hashable]],
    max_n: int = 4,
) -> float:
    """Sentence BLEU (percent) with per-n-gram counts clipped to the max over references.

    Brevity penalty uses the reference length closest to the hypothesis
    length (ties toward the shorter reference). Zero clipped counts are
    smoothed by a small epsilon; missing n-gram denominators count as 1.
    """
    if not refs:
        raise InputError("BLEU requires at least one reference")
    if len(hyp) == 0:
        logger.warning("empty hypothesis scored as BLEU 0")
        return 0.0
    log_precision_sum = 0.0
    for n in range(1, max_n + 1):
        hyp_counts = Counter(_ngrams(hyp, n))
        max_ref: Counter = Counter()
        for ref in refs:
            for gram, count in Counter(_ngrams(ref, n)).items():
                max_ref[gram] = max(max_ref[gram], count)
        clipped = sum(min(c, max_ref[g]) for g, c in hyp_counts.items())
        total = max(sum(hyp_counts.values()), 1)
        precision = clipped / total if clipped > 0 else BLEU_EPSILON
        log_precision_sum += math.log(precision) / max_n
    closest_ref_len = min(
        (len(r) for r in refs), key=lambda rl: (abs(rl - len(hyp)), rl)
    )
    if len(hyp) >= closest_ref_len:
        brevity = 1.0
    else:
        brevity = math.exp(1.0 - closest_ref_len / len(hyp))
    return 100.0 * brevity * math.exp(log_precision_sum)


def distinct_n(corpus: Sequence[Sequence[Hashable]], n: int) -> float:
    """Unique n-grams over total n-grams across the whole corpus."""
    all_grams: list[tuple] = []
    for sentence in corpus:
        all_grams.extend(_ngrams(sentence, n))
    if not all_grams:
        return 0.0
    return len(set(all_grams)) / len(all_grams)


def entropy_n(corpus: Sequence[Sequence[Hashable]], n: int = 4) -> float:
    """Shannon entropy (nats) of the empirical n-gram distribution."""
    counts: Counter = Counter()
    for sentence in corpus:
        counts.update(_ngrams(sentence, n))
    total = sum(counts.values())
    if total == 0:
        return 0.0
    return -sum((c / total) * math.log(c / total) for c in counts.values())


def mds_project(points: np.ndarray, dims: int = 2) -> np.ndarray:
    """Classical MDS: double-centered squared distances, top eigenpairs.

    Deterministic up to rotation/reflection; exactly embeddable
    configurations are reproduced to numerical precision.
    """
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[0]
    if n < 3:
        raise InputError("MDS requires at least 3 points")
    diff = points[:, None, :] - points[None, :, :]
    sq_dist = (diff**2).sum(axis=2)
    centering = np.eye(n) - np.ones((n, n)) / n
    gram = -0.5 * centering @ sq_dist @ centering
    eigvals, eigvecs = np.linalg.eigh(gram)
    order = np.argsort(eigvals)[::-1][:dims]
    scales = np.sqrt(np.clip(eigvals[order], 0.0, None))
    return eigvecs[:, order] * scales


def latent_groups_for_mds(
    model: DialogueModel,
    contexts: Sequence[Sequence[Sequence[int]]],
    responses: Sequence[Sequence[int]],
    style_sentences: Sequence[Sequence[int]],
    per_group: int = 500,
) -> tuple[np.ndarray, list[str]]:
    """Sampled prediction/response/style codes labeled by group for the MDS plot."""
    with torch.no_grad():
        z_ctx = model.encode_context_batch(list(contexts[:per_group])).numpy()
        z_resp = model.encode_sentence_batch(list(responses[:per_group])).numpy()
        z_style = model.encode_sentence_batch(list(style_sentences[:per_group])).numpy()
    points = np.concatenate([z_ctx, z_resp, z_style], axis=0)
    labels = (
        ["s2s_context"] * len(z_ctx)
        + ["ae_response"] * len(z_resp)
        + ["ae_style"] * len(z_style)
    )
    return points, labels


def top1_outputs(
    test_set: StylizedTestSet,
    model: DialogueModel,
    scorer: StyleScorer,
    spec: SampleSpec,
    sigma: float,
    max_contexts: int | None = None,
) -> list[tuple[int, ...]]:
    """Top-ranked hypothesis per context, with per-context derived seeds."""
    entries = test_set.entries[:max_contexts] if max_contexts else test_set.entries
    outputs = []
    for i, entry in enumerate(entries):
        ctx_spec = SampleSpec(
            rho=spec.rho,
            mode=spec.mode,
            n_candidates=spec.n_candidates,
            lam=spec.lam,
            seed=spec.seed + 100003 * i,
            max_len=spec.max_len,
        )
        ranked = generate_candidates(entry.context, model, scorer, ctx_spec, sigma)
        outputs.append(ranked[0].tokens)
    return outputs


def report_for_outputs(
    outputs: Sequence[tuple[int, ...]],
    test_set: StylizedTestSet,
    scorer: StyleScorer,
    rho: float,
    keywords: StyleKeywordList | None = None,
    count_reference: float | None = None,
) -> MetricReport:
    """All metrics over a set of top-1 outputs aligned with the test entries."""
    entries = test_set.entries[: len(outputs)]
    bleus = {n: [] for n in range(1, 5)}
    for tokens, entry in zip(outputs, entries):
        refs = [r.tokens for r in entry.references]
        for n in range(1, 5):
            bleus[n].append(bleu_multi_ref(tokens, refs, max_n=n))
    texts = [scorer.vocab.decode(t) for t in outputs]
    style_count = 0.0
    if keywords is not None:
        style_count = count_metric(texts, keywords, normalize_by=count_reference)
    return MetricReport(
        rho=rho,
        bleu1=float(np.mean(bleus[1])),
        bleu2=float(np.mean(bleus[2])),
        bleu3=float(np.mean(bleus[3])),
        bleu4=float(np.mean(bleus[4])),
        entropy4=entropy_n(outputs, 4),
        distinct1=distinct_n(outputs, 1),
        distinct2=distinct_n(outputs, 2),
        style_neural=float(np.mean([scorer.neural.predict(t) for t in texts])),
        style_ngram=float(np.mean([scorer.ngram.predict(t) for t in texts])),
        style_count_norm=style_count,
    )


def sweep_rho(
    test_set: StylizedTestSet,
    model: DialogueModel,
    scorer: StyleScorer,
    rhos: Sequence[float],
    spec: SampleSpec,
    sigma: float,
    keywords: StyleKeywordList | None = None,
    count_reference: float | None = None,
    max_contexts: int | None = None,
) -> list[MetricReport]:
    """Generate and score top-1 outputs at each radius; one report row per rho."""
    if len(test_set) == 0:
        raise InputError("rho sweep requires a non-empty test set")
    reports = []
    for rho_idx, rho in enumerate(rhos):
        rho_spec = SampleSpec(
            rho=rho,
            mode=spec.mode,
            n_candidates=spec.n_candidates,
            lam=spec.lam,
            seed=spec.seed + 7919 * rho_idx,
            max_len=spec.max_len,
        )
        outputs = top1_outputs(test_set, model, scorer, rho_spec, sigma, max_contexts)
        reports.append(
            report_for_outputs(outputs, test_set, scorer, rho, keywords, count_reference)
        )
    return reports


def write_sweep_csv(reports: Sequence[MetricReport], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(SWEEP_COLUMNS)
        for report in reports:
            writer.writerow(report.row())


def append_grid_row(label: str, report: MetricReport, path: str | Path) -> None:
    """Comparison grid CSV: one labeled row per system, shared column set."""
    path = Path(path)
    new_file = not path.exists()
    with open(path, "a", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        if new_file:
            writer.writerow(["variant"] + SWEEP_COLUMNS)
        writer.writerow([label] + report.row())


def write_variant_grid(
    rows: Sequence[tuple[str, MetricReport]], path: str | Path
) -> None:
    Path(path).unlink(missing_ok=True)
    for label, report in rows:
        append_grid_row(label, report, path)


def write_mds_csv(points: np.ndarray, labels: Sequence[str], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "y", "group"])
        for (x, y), label in zip(points, labels):
            writer.writerow([f"{x:.6f}", f"{y:.6f}", label])


def spearman_correlation(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Spearman rank correlation; 0.0 when either series is constant."""
    if len(xs) != len(ys) or len(xs) < 2:
        raise InputError("correlation needs two equal-length series of >= 2 points")

    def _ranks(values: Sequence[float]) -> np.ndarray:
        order = np.argsort(values, kind="stable")
        ranks = np.empty(len(values), dtype=np.float64)
        i = 0
        sorted_vals = np.asarray(values)[order]
        while i < len(values):
            j = i
            while j + 1 < len(values) and sorted_vals[j + 1] == sorted_vals[i]:
                j += 1
            ranks[order[i : j + 1]] = (i + j) / 2.0
            i = j + 1
        return ranks

    rx, ry = _ranks(xs), _ranks(ys)
    if np.std(rx) == 0 or np.std(ry) == 0:
        return 0.0
    return float(np.corrcoef(rx, ry)[0, 1])
