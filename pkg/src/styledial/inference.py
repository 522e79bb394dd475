"""Latent-neighborhood sampling, candidate generation, and ranking.

A response is generated by perturbing the context's prediction point by a
vector of length rho * sigma * sqrt(l) (random unit direction, or directed
toward a given sentence's code), greedily decoding each sample, and ranking
the deduplicated hypotheses by a convex combination of relevance and style
probability.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import torch

from .classifiers import StyleScorer
from .errors import InputError
from .model import DialogueModel, LatentVector

MODES = ("random", "towards")


@dataclass(frozen=True)
class SampleSpec:
    rho: float
    mode: str = "random"
    n_candidates: int = 100
    lam: float = 0.5
    seed: int = 0
    max_len: int = 30

    def __post_init__(self):
        if self.rho < 0:
            raise InputError("rho must be >= 0")
        if not 0.0 <= self.lam <= 1.0:
            raise InputError("lambda must be in [0, 1]")
        if self.n_candidates < 1:
            raise InputError("n_candidates must be >= 1")
        if self.mode not in MODES:
            raise InputError(f"unknown sampling mode {self.mode!r}")


@dataclass(frozen=True)
class Hypothesis:
    tokens: tuple[int, ...]
    relevance: float
    style_prob: float
    score: float
    count: int = 1


def radius_from_rho(rho: float, sigma: float, latent_dim: int) -> float:
    """Absolute perturbation length for a normalized radius rho."""
    return rho * sigma * math.sqrt(latent_dim)


def combined_score(relevance: float, style_prob: float, lam: float) -> float:
    return (1.0 - lam) * relevance + lam * style_prob


def sample_latent(
    z: LatentVector,
    spec: SampleSpec,
    sigma: float,
    generator: torch.Generator | None = None,
    z_target: LatentVector | None = None,
) -> LatentVector:
    """One sample at distance rho * sigma * sqrt(l) from the prediction point.

    Random mode draws a uniformly distributed direction on the unit sphere
    (Gaussian draw, normalized); towards mode points at ``z_target``.
    """
    radius = radius_from_rho(spec.rho, sigma, z.values.shape[0])
    if radius == 0.0:
        return z
    if spec.mode == "towards":
        if z_target is None:
            raise InputError("towards mode requires a target latent")
        delta = z_target.values - z.values
        norm = torch.linalg.vector_norm(delta)
        if float(norm) == 0.0:
            raise InputError("degenerate direction: target equals the prediction point")
        direction = delta / norm
    else:
        if generator is None:
            generator = torch.Generator().manual_seed(spec.seed)
        raw = torch.randn(z.values.shape, generator=generator, dtype=z.values.dtype)
        direction = raw / torch.linalg.vector_norm(raw)
    return LatentVector(values=z.values + radius * direction, role=z.role)


def _sampled_latents(
    z: torch.Tensor,
    spec: SampleSpec,
    sigma: float,
    z_target: torch.Tensor | None,
) -> torch.Tensor:
    radius = radius_from_rho(spec.rho, sigma, z.shape[0])
    n = spec.n_candidates
    if radius == 0.0:
        return z.unsqueeze(0).expand(n, -1)
    if spec.mode == "towards":
        if z_target is None:
            raise InputError("towards mode requires a target latent")
        delta = z_target - z
        norm = torch.linalg.vector_norm(delta)
        if float(norm) == 0.0:
            raise InputError("degenerate direction: target equals the prediction point")
        direction = (delta / norm).unsqueeze(0).expand(n, -1)
    else:
        generator = torch.Generator().manual_seed(spec.seed)
        raw = torch.randn((n, z.shape[0]), generator=generator, dtype=z.dtype)
        direction = raw / torch.linalg.vector_norm(raw, dim=1, keepdim=True)
    return z.unsqueeze(0) + radius * direction


def generate_candidates(
    context: Sequence[Sequence[int]],
    model: DialogueModel,
    scorer: StyleScorer,
    spec: SampleSpec,
    sigma: float,
    target_sentence: Sequence[int] | None = None,
) -> list[Hypothesis]:
    """Sample, decode, deduplicate, and score candidates for one context.

    Relevance is exp of the length-normalized log-probability of the
    hypothesis under the unperturbed prediction point, so it is commensurable
    with the classifier output in [0, 1]. Duplicates are merged with their
    multiplicity retained, first-seen order preserved.
    """
    z = model.encode_context(context).values
    z_target = None
    if target_sentence is not None:
        z_target = model.encode_sentence(target_sentence).values
    samples = _sampled_latents(z, spec, sigma, z_target)
    decoded = model.decode_greedy_batch(samples, spec.max_len)

    counts: dict[tuple[int, ...], int] = {}
    for tokens in decoded:
        counts[tokens] = counts.get(tokens, 0) + 1
    unique = list(counts)

    with torch.no_grad():
        z_rep = z.unsqueeze(0).expand(len(unique), -1)
        logprobs = model.sequence_logprob_batch(z_rep, [list(t) for t in unique])
    hypotheses = []
    for tokens, logprob in zip(unique, logprobs):
        steps = len(tokens) + 1  # includes the EOS step
        relevance = math.exp(float(logprob) / steps)
        style_prob = scorer.score_ids(tokens)
        hypotheses.append(
            Hypothesis(
                tokens=tokens,
                relevance=relevance,
                style_prob=style_prob,
                score=combined_score(relevance, style_prob, spec.lam),
                count=counts[tokens],
            )
        )
    return rank(hypotheses, spec.lam)


def rank(hypotheses: Sequence[Hypothesis], lam: float) -> list[Hypothesis]:
    """Stable descending order by (1-lambda) * relevance + lambda * style."""
    if not 0.0 <= lam <= 1.0:
        raise InputError("lambda must be in [0, 1]")
    rescored = [
        replace(h, score=combined_score(h.relevance, h.style_prob, lam)) for h in hypotheses
    ]
    return sorted(rescored, key=lambda h: -h.score)
