import math
from dataclasses import replace

import numpy as np
import pytest
import torch

from styledial.errors import InputError
from styledial.inference import (
    Hypothesis,
    SampleSpec,
    combined_score,
    generate_candidates,
    radius_from_rho,
    rank,
    sample_latent,
)
from styledial.model import LatentVector


def test_sample_spec_validation():
    with pytest.raises(InputError):
        SampleSpec(rho=-0.1)
    with pytest.raises(InputError):
        SampleSpec(rho=0.0, lam=1.5)
    with pytest.raises(InputError):
        SampleSpec(rho=0.0, n_candidates=0)
    with pytest.raises(InputError):
        SampleSpec(rho=0.0, mode="spiral")


def test_radius_examples():
    assert radius_from_rho(0.0, 0.1, 1000) == 0.0
    assert radius_from_rho(1.0, 0.1, 1000) == pytest.approx(3.16228, abs=1e-5)
    assert radius_from_rho(2.0, 0.1, 4) == pytest.approx(0.4, abs=1e-12)


def _latent(values, role="s2s"):
    return LatentVector(values=torch.tensor(values, dtype=torch.float64), role=role)


def test_sample_latent_zero_radius_is_identity():
    z = _latent([1.0, 2.0, 3.0])
    out = sample_latent(z, SampleSpec(rho=0.0), sigma=0.1)
    assert torch.equal(out.values, z.values)


@pytest.mark.parametrize("rho", [0.25, 1.0, 1.5])
@pytest.mark.parametrize("dim", [3, 16, 64])
def test_sample_latent_norm_contract_random_mode(rho, dim):
    z = _latent(list(np.random.default_rng(dim).normal(size=dim)))
    spec = SampleSpec(rho=rho, seed=5)
    out = sample_latent(z, spec, sigma=0.1)
    distance = float(torch.linalg.vector_norm(out.values - z.values))
    assert abs(distance - radius_from_rho(rho, 0.1, dim)) < 1e-9


def test_sample_latent_norm_contract_towards_mode():
    z = _latent([0.0, 0.0, 0.0, 0.0])
    target = _latent([1.0, 1.0, 0.0, 0.0], role="ae")
    spec = SampleSpec(rho=2.0, mode="towards")
    out = sample_latent(z, spec, sigma=0.1, z_target=target)
    distance = float(torch.linalg.vector_norm(out.values - z.values))
    assert abs(distance - radius_from_rho(2.0, 0.1, 4)) < 1e-9
    # direction points at the target
    direction = (out.values - z.values) / distance
    expected = target.values / torch.linalg.vector_norm(target.values)
    assert torch.allclose(direction, expected, atol=1e-12)


def test_sample_latent_towards_degenerate_direction():
    z = _latent([1.0, 2.0])
    with pytest.raises(InputError):
        sample_latent(z, SampleSpec(rho=1.0, mode="towards"), sigma=0.1, z_target=z)
    with pytest.raises(InputError):
        sample_latent(z, SampleSpec(rho=1.0, mode="towards"), sigma=0.1)


def test_sample_latent_sphere_uniformity_monte_carlo():
    """Per-coordinate mean of sampled directions vanishes within 3-sigma bounds."""
    dim = 3
    n = 100_000
    generator = torch.Generator().manual_seed(0)
    raw = torch.randn((n, dim), generator=generator, dtype=torch.float64)
    directions = raw / torch.linalg.vector_norm(raw, dim=1, keepdim=True)
    # coordinate of a uniform point on S^2 has variance 1/3
    bound = 3 * math.sqrt(1.0 / dim / n)
    means = directions.mean(dim=0)
    assert float(means.abs().max()) < bound


def test_generate_zero_radius_single_unique_candidate(tiny_corpus, tiny_model, tiny_scorer):
    context = tiny_corpus.pairs[0].context
    spec = SampleSpec(rho=0.0, n_candidates=10, seed=1)
    ranked = generate_candidates(context, tiny_model, tiny_scorer, spec, sigma=0.1)
    assert len(ranked) == 1
    assert ranked[0].count == 10


def test_generate_deterministic_for_fixed_seed(tiny_corpus, tiny_model, tiny_scorer):
    context = tiny_corpus.pairs[1].context
    spec = SampleSpec(rho=0.8, n_candidates=16, seed=3)
    a = generate_candidates(context, tiny_model, tiny_scorer, spec, sigma=0.1)
    b = generate_candidates(context, tiny_model, tiny_scorer, spec, sigma=0.1)
    assert a == b


def test_generate_score_identity_and_style_range(tiny_corpus, tiny_model, tiny_scorer):
    context = tiny_corpus.pairs[2].context
    spec = SampleSpec(rho=1.0, n_candidates=16, seed=4, lam=0.3)
    for hyp in generate_candidates(context, tiny_model, tiny_scorer, spec, sigma=0.1):
        assert hyp.score == pytest.approx(
            0.7 * hyp.relevance + 0.3 * hyp.style_prob, abs=1e-12
        )
        assert 0.0 < hyp.style_prob < 1.0
        assert 0.0 <= hyp.relevance <= 1.0


def _hyps(*pairs):
    return [
        Hypothesis(tokens=(i,), relevance=rel, style_prob=sty, score=0.0)
        for i, (rel, sty) in enumerate(pairs)
    ]


def test_rank_hand_example_scores():
    ranked = rank(_hyps((0.8, 0.2)), lam=0.5)
    assert ranked[0].score == pytest.approx(0.5, abs=1e-12)


def test_rank_lambda_zero_matches_relevance_ordering():
    hyps = _hyps((0.3, 0.9), (0.7, 0.1), (0.5, 0.5))
    ranked = rank(hyps, lam=0.0)
    by_relevance = sorted(hyps, key=lambda h: -h.relevance)
    assert [h.tokens for h in ranked] == [h.tokens for h in by_relevance]


def test_rank_lambda_one_matches_style_ordering():
    hyps = _hyps((0.3, 0.9), (0.7, 0.1), (0.5, 0.5))
    ranked = rank(hyps, lam=1.0)
    by_style = sorted(hyps, key=lambda h: -h.style_prob)
    assert [h.tokens for h in ranked] == [h.tokens for h in by_style]


def test_rank_stable_tie_example():
    hyps = _hyps((0.9, 0.1), (0.5, 0.5), (0.1, 0.95))
    ranked = rank(hyps, lam=0.5)
    # scores 0.50, 0.50, 0.525: third first, then the tied pair in input order
    assert [h.tokens for h in ranked] == [(2,), (0,), (1,)]
    assert ranked[0].score == pytest.approx(0.525, abs=1e-12)


def test_rank_validates_lambda():
    with pytest.raises(InputError):
        rank(_hyps((0.5, 0.5)), lam=-0.1)


def test_rank_order_invariant_under_increasing_affine_transform():
    rng = np.random.default_rng(8)
    hyps = _hyps(*[(float(r), float(s)) for r, s in rng.random((20, 2))])
    ranked = rank(hyps, lam=0.4)
    transformed = [replace(h, score=3.0 * h.score + 7.0) for h in ranked]
    resorted = sorted(transformed, key=lambda h: -h.score)
    assert [h.tokens for h in resorted] == [h.tokens for h in ranked]


def test_combined_score_boundaries():
    assert combined_score(0.8, 0.2, 0.0) == 0.8
    assert combined_score(0.8, 0.2, 1.0) == 0.2
