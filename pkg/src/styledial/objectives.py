"""Training distances and losses over the shared latent space.

All distance terms are Euclidean, batch-averaged, and normalized by sqrt of
the latent dimension so their magnitudes are comparable across dimensions.
Nearest-neighbor indices are treated as constants during differentiation
(argmin computed without gradient, ties broken toward the lowest index); the
selected distances then carry gradient to both endpoints.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import torch

from .corpus import ConversationPair
from .errors import InputError
from .model import DialogueModel

# exact pairwise differences; the matmul shortcut loses precision
_CDIST_MODE = "donot_use_mm_for_euclid_dist"


@dataclass(frozen=True)
class NoiseSpec:
    """Standard deviation of the Gaussian perturbation used in interpolation."""

    sigma: float = 0.1

    def __post_init__(self):
        if not self.sigma > 0:
            raise InputError("sigma must be positive")


@dataclass
class BatchLatents:
    """Latent batches for the three spaces; style codes may be absent."""

    z_s2s: torch.Tensor  # (n, l) context prediction points
    z_response: torch.Tensor  # (n, l) autoencoded responses
    z_style: torch.Tensor | None = None  # (m, l) autoencoded style sentences

    def __post_init__(self):
        if self.z_s2s.shape != self.z_response.shape:
            raise InputError("z_s2s and z_response must have identical shapes")
        if self.z_style is not None and self.z_style.shape[1] != self.z_s2s.shape[1]:
            raise InputError("z_style latent dimension mismatch")


@dataclass
class LossBreakdown:
    """All loss components of one step; total is their float sum exactly."""

    nll: float
    d_conv: float
    d_style: float
    d_spread_out: float
    fuse_conv: float
    fuse_style: float
    smooth_conv: float
    smooth_style: float
    total: float = field(init=False)

    def __post_init__(self):
        self.total = (
            self.nll + self.fuse_conv + self.smooth_conv + self.fuse_style + self.smooth_style
        )

    def to_dict(self) -> dict[str, float]:
        return {
            "nll": self.nll,
            "d_conv": self.d_conv,
            "d_style": self.d_style,
            "d_spread_out": self.d_spread_out,
            "fuse_conv": self.fuse_conv,
            "fuse_style": self.fuse_style,
            "smooth_conv": self.smooth_conv,
            "smooth_style": self.smooth_style,
            "total": self.total,
        }


def _normalizer(n: int, dim: int) -> float:
    return 1.0 / (n * math.sqrt(dim))


def pairwise_distance(z_a: torch.Tensor, z_b: torch.Tensor) -> torch.Tensor:
    """Mean row-wise Euclidean distance between paired batches, / sqrt(l)."""
    if z_a.shape != z_b.shape:
        raise InputError(f"row-count mismatch: {tuple(z_a.shape)} vs {tuple(z_b.shape)}")
    dists = torch.linalg.vector_norm(z_a - z_b, dim=1)
    return dists.sum() * _normalizer(z_a.shape[0], z_a.shape[1])


def nn_cross_distance(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """Average distance from each point of ``a`` to its nearest neighbor in ``b``.

    Normalized by |a| * sqrt(l); asymmetric in general.
    """
    if a.numel() == 0 or b.numel() == 0:
        raise InputError("nearest-neighbor distance over an empty set")
    dmat = torch.cdist(a, b, compute_mode=_CDIST_MODE)
    with torch.no_grad():
        nn_idx = dmat.argmin(dim=1)
    picked = dmat.gather(1, nn_idx.unsqueeze(1)).squeeze(1)
    return picked.sum() * _normalizer(a.shape[0], a.shape[1])


def style_distance(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """Symmetrized nearest-neighbor distance between two latent sets."""
    return 0.5 * nn_cross_distance(a, b) + 0.5 * nn_cross_distance(b, a)


def nn_same_distance(a: torch.Tensor) -> torch.Tensor:
    """Average distance to the nearest *other* point within one set."""
    if a.shape[0] < 2:
        raise InputError("within-set nearest neighbor requires at least 2 points")
    dmat = torch.cdist(a, a, compute_mode=_CDIST_MODE)
    masked = dmat + torch.diag(
        torch.full((a.shape[0],), float("inf"), dtype=a.dtype)
    )
    with torch.no_grad():
        nn_idx = masked.argmin(dim=1)
    picked = dmat.gather(1, nn_idx.unsqueeze(1)).squeeze(1)
    return picked.sum() * _normalizer(a.shape[0], a.shape[1])


def spread_out_distance(batch: BatchLatents) -> torch.Tensor:
    """Minimum within-set nearest-neighbor distance over the available spaces."""
    components = [nn_same_distance(batch.z_response)]
    if batch.z_style is not None:
        components.append(nn_same_distance(batch.z_style))
    components.append(nn_same_distance(batch.z_s2s))
    return torch.stack(components).min()


def fusion_losses(
    batch: BatchLatents, spread_cap: float | None = None
) -> tuple[torch.Tensor, torch.Tensor]:
    """Cross-space distances minus the spread-out term; may be negative.

    The style component is zero when the batch carries no style codes.
    ``spread_cap`` bounds the spread-out reward (off by default); useful at
    small scale where the unbounded term inflates the latent cloud.
    """
    spread = spread_out_distance(batch)
    if spread_cap is not None:
        spread = torch.clamp_max(spread, spread_cap)
    fuse_conv = pairwise_distance(batch.z_s2s, batch.z_response) - spread
    if batch.z_style is None:
        fuse_style = torch.zeros((), dtype=batch.z_s2s.dtype)
    else:
        fuse_style = style_distance(batch.z_s2s, batch.z_style) - spread
    return fuse_conv, fuse_style


def interpolate_latents(
    z_a: torch.Tensor,
    z_b: torch.Tensor,
    u: float,
    sigma: float = 0.0,
    generator: torch.Generator | None = None,
    eps: torch.Tensor | None = None,
) -> torch.Tensor:
    """(1-u) * z_a + u * z_b + Gaussian noise of std ``sigma``.

    Pass ``eps`` to fix the noise explicitly; otherwise it is drawn from
    ``generator`` (required when sigma > 0).
    """
    if z_a.shape != z_b.shape:
        raise InputError("interpolation endpoints must share a dimension")
    z = (1.0 - u) * z_a + u * z_b
    if eps is not None:
        return z + eps
    if sigma > 0:
        if generator is None:
            raise InputError("sigma > 0 requires a generator or explicit eps")
        return z + sigma * torch.randn(z.shape, generator=generator, dtype=z.dtype)
    return z


def _steps(tokens: Sequence[int]) -> int:
    # decode steps include the terminating EOS
    return len(tokens) + 1


def smooth_conv_loss(
    model: DialogueModel,
    context: Sequence[Sequence[int]],
    response: Sequence[int],
    u: float,
    sigma: float = 0.0,
    generator: torch.Generator | None = None,
    eps: torch.Tensor | None = None,
) -> float:
    """Reconstruction loss of the response from a point between its code and the prediction."""
    with torch.no_grad():
        z_y = model.encode_sentence_batch([response])[0]
        z_x = model.encode_context_batch([context])[0]
        z = interpolate_latents(z_y, z_x, u, sigma, generator, eps)
        lp = model.sequence_logprob_batch(z.unsqueeze(0), [list(response)])[0]
    return float(-lp / _steps(response))


def smooth_style_loss(
    model: DialogueModel,
    utterance: Sequence[int],
    style_sentence: Sequence[int],
    u: float,
    sigma: float = 0.0,
    generator: torch.Generator | None = None,
    eps: torch.Tensor | None = None,
) -> float:
    """Blend loss between a plain utterance and a styled sentence.

    The interpolated code must reconstruct the utterance with weight (1-u)
    and the style sentence with weight u, each length-normalized.
    """
    if len(utterance) == 0 or len(style_sentence) == 0:
        raise InputError("smooth-style loss requires non-empty sequences")
    with torch.no_grad():
        z_x = model.encode_sentence_batch([utterance])[0]
        z_s = model.encode_sentence_batch([style_sentence])[0]
        z = interpolate_latents(z_x, z_s, u, sigma, generator, eps)
        lps = model.sequence_logprob_batch(
            torch.stack([z, z]), [list(utterance), list(style_sentence)]
        )
    loss_x = -float(lps[0]) / _steps(utterance)
    loss_s = -float(lps[1]) / _steps(style_sentence)
    return (1.0 - u) * loss_x + u * loss_s


def total_loss_parts(
    model: DialogueModel,
    pairs: Sequence[ConversationPair],
    style_batch: Sequence[Sequence[int]] | None,
    sigma: float,
    generator: torch.Generator,
    include_style: bool = True,
    spread_cap: float | None = None,
) -> tuple[torch.Tensor, LossBreakdown]:
    """Full objective on one batch; returns the differentiable total and a breakdown.

    When ``include_style`` is false or ``style_batch`` is None, the style
    terms are forced to zero and the style batch is ignored entirely
    (pretraining mode); the spread-out term then covers only the response and
    prediction sets. The interpolation weight u is drawn once per example,
    conversation draws before style draws. ``spread_cap`` bounds the
    spread-out reward inside the fusion terms; the breakdown records the raw
    spread value.
    """
    if len(pairs) < 2:
        raise InputError("conversation batch must have at least 2 examples")
    use_style = include_style and style_batch is not None
    if use_style and len(style_batch) < 2:
        raise InputError("style batch must have at least 2 sentences")

    dtype = model.config.torch_dtype
    contexts = [p.context for p in pairs]
    responses = [list(p.response) for p in pairs]
    n = len(pairs)

    z_s2s = model.encode_context_batch(contexts)
    z_y = model.encode_sentence_batch(responses)
    z_s = model.encode_sentence_batch([list(s) for s in style_batch]) if use_style else None

    step_counts = torch.tensor([_steps(r) for r in responses], dtype=dtype)
    nll = (-model.sequence_logprob_batch(z_s2s, responses) / step_counts).mean()

    batch = BatchLatents(z_s2s=z_s2s, z_response=z_y, z_style=z_s)
    spread = spread_out_distance(batch)
    spread_in_loss = spread if spread_cap is None else torch.clamp_max(spread, spread_cap)
    d_conv = pairwise_distance(z_s2s, z_y)
    fuse_conv = d_conv - spread_in_loss
    d_style = (
        style_distance(z_s2s, z_s) if use_style else torch.zeros((), dtype=dtype)
    )
    fuse_style = d_style - spread_in_loss if use_style else torch.zeros((), dtype=dtype)

    # conversation smoothness: interpolate response code toward the prediction
    u_conv = torch.rand(n, 1, generator=generator, dtype=dtype)
    eps_conv = sigma * torch.randn(n, z_s2s.shape[1], generator=generator, dtype=dtype)
    z_conv = (1.0 - u_conv) * z_y + u_conv * z_s2s + eps_conv
    smooth_conv = (-model.sequence_logprob_batch(z_conv, responses) / step_counts).mean()

    if use_style:
        last_utts = [list(p.context[-1]) for p in pairs]
        styles = [list(style_batch[i % len(style_batch)]) for i in range(n)]
        z_x = model.encode_sentence_batch(last_utts)
        z_s_paired = model.encode_sentence_batch(styles)
        u_style = torch.rand(n, 1, generator=generator, dtype=dtype)
        eps_style = sigma * torch.randn(n, z_s2s.shape[1], generator=generator, dtype=dtype)
        z_blend = (1.0 - u_style) * z_x + u_style * z_s_paired + eps_style
        lp_x = model.sequence_logprob_batch(z_blend, last_utts)
        lp_s = model.sequence_logprob_batch(z_blend, styles)
        x_steps = torch.tensor([_steps(t) for t in last_utts], dtype=dtype)
        s_steps = torch.tensor([_steps(t) for t in styles], dtype=dtype)
        u_flat = u_style.squeeze(1)
        smooth_style = (
            -(1.0 - u_flat) * lp_x / x_steps - u_flat * lp_s / s_steps
        ).mean()
    else:
        smooth_style = torch.zeros((), dtype=dtype)

    total = nll + fuse_conv + smooth_conv + fuse_style + smooth_style
    breakdown = LossBreakdown(
        nll=float(nll.detach()),
        d_conv=float(d_conv.detach()),
        d_style=float(d_style.detach()),
        d_spread_out=float(spread.detach()),
        fuse_conv=float(fuse_conv.detach()),
        fuse_style=float(fuse_style.detach()),
        smooth_conv=float(smooth_conv.detach()),
        smooth_style=float(smooth_style.detach()),
    )
    return total, breakdown


def total_loss(
    model: DialogueModel,
    pairs: Sequence[ConversationPair],
    style_batch: Sequence[Sequence[int]] | None,
    sigma: float,
    generator: torch.Generator,
    include_style: bool = True,
    spread_cap: float | None = None,
) -> LossBreakdown:
    with torch.no_grad():
        _, breakdown = total_loss_parts(
            model, pairs, style_batch, sigma, generator, include_style, spread_cap
        )
    return breakdown
