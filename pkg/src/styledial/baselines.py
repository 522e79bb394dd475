"""Comparison systems and the regularization ablation lattice.

Trainable variants share the architecture, data, and seeds of the full model:
``s2s`` trains on conversation likelihood only; ``mtask`` alternates
conversation batches with plain style-reconstruction batches through the
shared decoder (no latent regularizers); ``spacefusion`` adds the
conversation fusion/smoothness terms; ``stylefusion`` adds the style terms.
``s2s_lm`` pairs the plain model with an unconditional style language model
mixed at decoding time. The remaining systems (retrieval, rand, human) draw
their hypotheses from a corpus rather than a decoder.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import torch
from torch import nn

from .corpus import ConversationPair, StyleSentence, TestEntry
from .errors import InputError
from .model import DialogueModel, ModelConfig, build_model
from .objectives import total_loss_parts
from .trainer import (
    TrainConfig,
    TrainLog,
    iter_batches,
    joint_train,
    pretrain,
    validation_split,
)
from .vocab import Vocabulary

logger = logging.getLogger(__name__)

TRAINABLE_VARIANTS = ("stylefusion", "spacefusion", "mtask", "s2s", "s2s_lm")
VARIANTS = TRAINABLE_VARIANTS + ("retrieval", "rand", "human")


@dataclass
class VariantSpec:
    variant: str
    train: TrainConfig = field(default_factory=TrainConfig)
    lm_weight: float = 0.5

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise InputError(f"unknown variant {self.variant!r} (choose from {VARIANTS})")
        if not 0.0 <= self.lm_weight <= 1.0:
            raise InputError("lm_weight must be in [0, 1]")


@dataclass
class TrainedVariant:
    variant: str
    model: DialogueModel
    language_model: "StyleLanguageModel | None" = None
    lm_weight: float = 0.5


def _nll(model: DialogueModel, pairs: Sequence[ConversationPair]) -> torch.Tensor:
    z = model.encode_context_batch([p.context for p in pairs])
    responses = [list(p.response) for p in pairs]
    steps = torch.tensor([len(r) + 1 for r in responses], dtype=model.config.torch_dtype)
    return (-model.sequence_logprob_batch(z, responses) / steps).mean()


def _reconstruction(model: DialogueModel, sentences: Sequence[Sequence[int]]) -> torch.Tensor:
    seqs = [list(s) for s in sentences]
    z = model.encode_sentence_batch(seqs)
    steps = torch.tensor([len(s) + 1 for s in seqs], dtype=model.config.torch_dtype)
    return (-model.sequence_logprob_batch(z, seqs) / steps).mean()


def _train_nll_only(
    model: DialogueModel,
    conv_pairs: Sequence[ConversationPair],
    cfg: TrainConfig,
    epochs: int,
    log: TrainLog,
    phase: str,
) -> None:
    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate)
    rng = np.random.default_rng(cfg.seed + 2)
    step = 0
    for epoch in range(epochs):
        for batch_idx in iter_batches(len(conv_pairs), cfg.batch_size_conv, rng):
            pairs = [conv_pairs[i] for i in batch_idx]
            optimizer.zero_grad()
            loss = _nll(model, pairs)
            loss.backward()
            optimizer.step()
            log.write({"phase": phase, "epoch": epoch, "step": step, "nll": float(loss.detach())})
            step += 1


def _train_mtask(
    model: DialogueModel,
    conv_pairs: Sequence[ConversationPair],
    style_sentences: Sequence[StyleSentence],
    cfg: TrainConfig,
    log: TrainLog,
) -> None:
    """Alternate one conversation batch (NLL) with one style batch (reconstruction)."""
    torch.set_num_threads(cfg.num_threads)
    conv_train_idx, conv_val_idx = validation_split(len(conv_pairs), cfg.val_fraction, cfg.seed)
    style_train_idx, style_val_idx = validation_split(
        len(style_sentences), cfg.val_fraction, cfg.seed + 13
    )
    train = [conv_pairs[i] for i in conv_train_idx]
    val = [conv_pairs[i] for i in conv_val_idx]
    style_train = [style_sentences[i] for i in style_train_idx]
    style_val = [style_sentences[i].tokens for i in style_val_idx]

    _train_nll_only(model, train, cfg, cfg.pretrain_epochs, log, phase="pretrain")

    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate)
    rng = np.random.default_rng(cfg.seed + 4)
    style_rng = np.random.default_rng(cfg.seed + 31)
    style_order: list[int] = []
    style_pos = 0
    best_val, best_state, stale = float("inf"), None, 0
    step = 0
    for epoch in range(cfg.joint_max_epochs):
        for batch_idx in iter_batches(len(train), cfg.batch_size_conv, rng):
            pairs = [train[i] for i in batch_idx]
            optimizer.zero_grad()
            conv_loss = _nll(model, pairs)
            conv_loss.backward()
            optimizer.step()

            style_batch = []
            while len(style_batch) < cfg.batch_size_style:
                if style_pos >= len(style_order):
                    style_order = [int(i) for i in style_rng.permutation(len(style_train))]
                    style_pos = 0
                style_batch.append(style_train[style_order[style_pos]].tokens)
                style_pos += 1
            optimizer.zero_grad()
            style_loss = _reconstruction(model, style_batch)
            style_loss.backward()
            optimizer.step()
            log.write(
                {
                    "phase": "joint",
                    "epoch": epoch,
                    "step": step,
                    "nll": float(conv_loss.detach()),
                    "style_reconstruction": float(style_loss.detach()),
                }
            )
            step += 1
        if val:
            with torch.no_grad():
                val_loss = float(_nll(model, val))
                if len(style_val) >= 2:
                    val_loss += float(_reconstruction(model, style_val))
            log.write({"phase": "joint-val", "epoch": epoch, "val_total": val_loss})
            if val_loss < best_val:
                best_val, stale = val_loss, 0
                best_state = {k: v.clone() for k, v in model.state_dict().items()}
            else:
                stale += 1
                if stale >= cfg.patience:
                    break
    if best_state is not None:
        model.load_state_dict(best_state)


class StyleLanguageModel(nn.Module):
    """Unconditional language model with the decoder's architecture."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        from .vocab import BOS_ID, EOS_ID, PAD_ID

        self.config = config
        dt = config.torch_dtype
        self.embedding = nn.Embedding(
            config.vocab_size, config.embed_dim, padding_idx=PAD_ID, dtype=dt
        )
        self.gru = nn.GRU(
            config.embed_dim,
            config.latent_dim,
            config.num_layers,
            batch_first=True,
            dtype=dt,
        )
        self.out_proj = nn.Linear(config.latent_dim, config.vocab_size, dtype=dt)
        self._bos, self._eos, self._pad = BOS_ID, EOS_ID, PAD_ID

    def sequence_logprob_batch(self, sequences: Sequence[Sequence[int]]) -> torch.Tensor:
        targets = [list(s) + [self._eos] for s in sequences]
        lengths = torch.tensor([len(t) for t in targets], dtype=torch.int64)
        max_len = int(lengths.max())
        inputs = torch.full((len(targets), max_len), self._pad, dtype=torch.int64)
        target_ids = torch.full((len(targets), max_len), self._pad, dtype=torch.int64)
        for i, t in enumerate(targets):
            inputs[i, 0] = self._bos
            inputs[i, 1 : len(t)] = torch.tensor(t[:-1], dtype=torch.int64)
            target_ids[i, : len(t)] = torch.tensor(t, dtype=torch.int64)
        out, _ = self.gru(self.embedding(inputs))
        logprobs = torch.log_softmax(self.out_proj(out), dim=-1)
        picked = logprobs.gather(-1, target_ids.unsqueeze(-1)).squeeze(-1)
        mask = torch.arange(max_len).unsqueeze(0) < lengths.unsqueeze(1)
        return (picked * mask.to(picked.dtype)).sum(dim=1)

    def step_probabilities(
        self, prev_token: int, hidden: torch.Tensor | None
    ) -> tuple[torch.Tensor, torch.Tensor]:
        with torch.no_grad():
            inp = self.embedding(torch.tensor([[prev_token]], dtype=torch.int64))
            out, new_hidden = self.gru(inp, hidden)
            probs = torch.softmax(self.out_proj(out[0, 0, :]), dim=-1)
        return probs, new_hidden


def train_language_model(
    lm: StyleLanguageModel,
    sentences: Sequence[StyleSentence],
    cfg: TrainConfig,
    epochs: int | None = None,
) -> StyleLanguageModel:
    optimizer = torch.optim.Adam(lm.parameters(), lr=cfg.learning_rate)
    rng = np.random.default_rng(cfg.seed + 8)
    for _ in range(epochs if epochs is not None else cfg.joint_max_epochs):
        for batch_idx in iter_batches(len(sentences), cfg.batch_size_style, rng):
            batch = [list(sentences[i].tokens) for i in batch_idx]
            steps = torch.tensor([len(s) + 1 for s in batch], dtype=lm.config.torch_dtype)
            optimizer.zero_grad()
            loss = (-lm.sequence_logprob_batch(batch) / steps).mean()
            loss.backward()
            optimizer.step()
    lm.eval()
    return lm


def train_variant(
    spec: VariantSpec,
    conv_pairs: Sequence[ConversationPair],
    style_sentences: Sequence[StyleSentence],
    vocab: Vocabulary,
    model_config: ModelConfig,
    log: TrainLog | None = None,
) -> TrainedVariant:
    """Train one comparison system on shared data, architecture, and seed."""
    if spec.variant not in TRAINABLE_VARIANTS:
        raise InputError(f"{spec.variant!r} is not a trainable variant")
    if spec.variant in ("stylefusion", "mtask", "s2s_lm") and not style_sentences:
        raise InputError(f"variant {spec.variant!r} requires style data")
    cfg = spec.train
    log = log or TrainLog(cfg.log_path)
    model = build_model(model_config, seed=cfg.seed)
    torch.set_num_threads(cfg.num_threads)

    if spec.variant == "stylefusion":
        pretrain(model, conv_pairs, cfg, log)
        joint_train(model, conv_pairs, style_sentences, cfg, vocab, log)
        return TrainedVariant(spec.variant, model)

    if spec.variant == "spacefusion":
        # conversation regularizers only; the style terms stay zero so the
        # style corpus contributes nothing
        pretrain(model, conv_pairs, cfg, log)
        _continue_conv_only(model, conv_pairs, cfg, log)
        return TrainedVariant(spec.variant, model)

    if spec.variant == "mtask":
        _train_mtask(model, conv_pairs, style_sentences, cfg, log)
        return TrainedVariant(spec.variant, model)

    if spec.variant == "s2s":
        train_idx, _ = validation_split(len(conv_pairs), cfg.val_fraction, cfg.seed)
        train = [conv_pairs[i] for i in train_idx]
        _train_nll_only(
            model, train, cfg, cfg.pretrain_epochs + cfg.joint_max_epochs, log, phase="s2s"
        )
        return TrainedVariant(spec.variant, model)

    # s2s_lm: plain conversation model plus an unconditional style LM
    train_idx, _ = validation_split(len(conv_pairs), cfg.val_fraction, cfg.seed)
    train = [conv_pairs[i] for i in train_idx]
    _train_nll_only(
        model, train, cfg, cfg.pretrain_epochs + cfg.joint_max_epochs, log, phase="s2s"
    )
    torch.manual_seed(cfg.seed + 17)
    lm = StyleLanguageModel(model_config)
    train_language_model(lm, style_sentences, cfg)
    return TrainedVariant(spec.variant, model, language_model=lm, lm_weight=spec.lm_weight)


def _continue_conv_only(
    model: DialogueModel,
    conv_pairs: Sequence[ConversationPair],
    cfg: TrainConfig,
    log: TrainLog,
) -> None:
    """Joint-phase schedule with the style terms zeroed (style data unused)."""
    from .trainer import evaluate_validation

    train_idx, val_idx = validation_split(len(conv_pairs), cfg.val_fraction, cfg.seed)
    train = [conv_pairs[i] for i in train_idx]
    val = [conv_pairs[i] for i in val_idx]
    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate)
    generator = torch.Generator().manual_seed(cfg.seed + 3)
    rng = np.random.default_rng(cfg.seed + 4)
    best_val, best_state, stale = float("inf"), None, 0
    step = 0
    for epoch in range(cfg.joint_max_epochs):
        for batch_idx in iter_batches(len(train), cfg.batch_size_conv, rng):
            pairs = [train[i] for i in batch_idx]
            optimizer.zero_grad()
            total, breakdown = total_loss_parts(
                model, pairs, None, cfg.sigma, generator,
                include_style=False, spread_cap=cfg.spread_cap,
            )
            total.backward()
            optimizer.step()
            log.write({"phase": "joint", "epoch": epoch, "step": step, **breakdown.to_dict()})
            step += 1
        if val:
            val_loss = evaluate_validation(model, val, None, cfg, include_style=False)
            log.write({"phase": "joint-val", "epoch": epoch, "val_total": val_loss})
            if val_loss < best_val:
                best_val, stale = val_loss, 0
                best_state = {k: v.clone() for k, v in model.state_dict().items()}
            else:
                stale += 1
                if stale >= cfg.patience:
                    break
    if best_state is not None:
        model.load_state_dict(best_state)


def s2s_lm_decode(
    context: Sequence[Sequence[int]],
    model: DialogueModel,
    lm: StyleLanguageModel,
    weight: float,
    max_len: int = 30,
) -> tuple[int, ...]:
    """Greedy decoding from the per-step mixture (1-w)*p_s2s + w*p_lm.

    Ties break toward the lowest token id.
    """
    from .vocab import BOS_ID, EOS_ID

    if model.config.vocab_size != lm.config.vocab_size:
        raise InputError("conversation model and language model vocabularies differ")
    if not 0.0 <= weight <= 1.0:
        raise InputError("mixing weight must be in [0, 1]")
    z = model.encode_context(context)
    s2s_hidden = model.initial_decoder_state(z)
    lm_hidden: torch.Tensor | None = None
    prev = BOS_ID
    tokens: list[int] = []
    for _ in range(max_len):
        p_s2s, s2s_hidden = model.step_probabilities(prev, s2s_hidden)
        p_lm, lm_hidden = lm.step_probabilities(prev, lm_hidden)
        mixed = (1.0 - weight) * p_s2s + weight * p_lm.to(p_s2s.dtype)
        prev = int(mixed.argmax())
        if prev == EOS_ID:
            break
        tokens.append(prev)
    return tuple(tokens)


def retrieval_respond(
    context: Sequence[Sequence[int]],
    style_sentences: Sequence[StyleSentence],
    model: DialogueModel,
) -> StyleSentence:
    """Style sentence with the highest length-normalized generation probability.

    Scored under the given (multi-task) model's prediction point for the
    context; ties break toward the lowest corpus index.
    """
    if not style_sentences:
        raise InputError("retrieval requires a non-empty style corpus")
    z = model.encode_context(context).values
    seqs = [list(s.tokens) for s in style_sentences]
    with torch.no_grad():
        z_rep = z.unsqueeze(0).expand(len(seqs), -1)
        logprobs = model.sequence_logprob_batch(z_rep, seqs)
        steps = torch.tensor([len(s) + 1 for s in seqs], dtype=logprobs.dtype)
        scores = logprobs / steps
    return style_sentences[int(scores.argmax())]


def system_top1_outputs(
    variant: str,
    test_set,
    *,
    model: DialogueModel | None = None,
    scorer=None,
    style_sentences: Sequence[StyleSentence] = (),
    retrieval_model: DialogueModel | None = None,
    language_model: "StyleLanguageModel | None" = None,
    lm_weight: float = 0.5,
    rho: float = 1.0,
    lam: float = 0.5,
    n_candidates: int = 100,
    sigma: float = 0.1,
    seed: int = 0,
    max_contexts: int | None = None,
) -> list[tuple[int, ...]]:
    """One hypothesis per test context for any comparison system.

    Checkpoint-backed variants sample and rank like the full model; the
    corpus-backed systems (retrieval, rand, human) draw their outputs
    directly. Every system therefore feeds the same metric schema and the
    same comparison-grid columns.
    """
    from .inference import SampleSpec, generate_candidates

    entries = test_set.entries[:max_contexts] if max_contexts else test_set.entries
    outputs: list[tuple[int, ...]] = []
    for i, entry in enumerate(entries):
        if variant in ("stylefusion", "spacefusion", "mtask", "s2s"):
            if model is None or scorer is None:
                raise InputError(f"variant {variant!r} needs a model and scorer")
            spec = SampleSpec(
                rho=rho, lam=lam, n_candidates=n_candidates, seed=seed + 100003 * i
            )
            outputs.append(
                generate_candidates(entry.context, model, scorer, spec, sigma)[0].tokens
            )
        elif variant == "s2s_lm":
            if model is None or language_model is None:
                raise InputError("s2s_lm needs the conversation model and the language model")
            outputs.append(s2s_lm_decode(entry.context, model, language_model, lm_weight))
        elif variant == "retrieval":
            if retrieval_model is None:
                raise InputError("retrieval needs the multi-task scoring model")
            outputs.append(
                retrieval_respond(entry.context, style_sentences, retrieval_model).tokens
            )
        elif variant == "rand":
            outputs.append(rand_respond(style_sentences, seed=seed + i).tokens)
        elif variant == "human":
            outputs.append(human_ref_respond(entry, seed=seed + i))
        else:
            raise InputError(f"unknown variant {variant!r}")
    return outputs


def rand_respond(style_sentences: Sequence[StyleSentence], seed: int) -> StyleSentence:
    """Uniform draw from the style corpus; deterministic per seed."""
    if not style_sentences:
        raise InputError("cannot draw from an empty style corpus")
    rng = np.random.default_rng(seed)
    return style_sentences[int(rng.integers(len(style_sentences)))]


def human_ref_respond(entry: TestEntry, seed: int) -> tuple[int, ...]:
    """Uniform draw among the reference responses of a test context."""
    rng = np.random.default_rng(seed)
    return entry.references[int(rng.integers(len(entry.references)))].tokens
