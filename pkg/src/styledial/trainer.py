"""Two-phase optimization: conversation-only pretraining, then joint training.

Pretraining runs the full objective with the style terms forced to zero;
joint training adds the style batches (cycled with a reshuffle per pass,
masking augmentation applied) and stops on validation patience. Test mode is
single-threaded so repeated runs with one seed produce identical checkpoints.
"""

from __future__ import annotations

import copy
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
import torch

from .corpus import ConversationPair, StyleSentence, mask_style_tokens
from .errors import InputError, TrainingDivergedError
from .model import DialogueModel, save_checkpoint
from .objectives import total_loss_parts
from .vocab import Vocabulary

logger = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    learning_rate: float = 0.0003
    batch_size_conv: int = 32
    batch_size_style: int = 32
    pretrain_epochs: int = 2
    joint_max_epochs: int = 12
    patience: int = 3
    sigma: float = 0.1
    seed: int = 0
    val_fraction: float = 0.05
    mask_c: float = 1.0
    mask_cap: float = 0.5
    spread_cap: float | None = None
    num_threads: int = 1
    log_path: str | Path | None = None
    checkpoint_path: str | Path | None = None

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise InputError("learning_rate must be positive")
        if self.pretrain_epochs < 0:
            raise InputError("pretrain_epochs must be >= 0")
        if self.batch_size_conv < 2 or self.batch_size_style < 2:
            raise InputError("batch sizes must be >= 2 (nearest neighbors undefined below)")
        if self.sigma <= 0:
            raise InputError("sigma must be positive")


class TrainLog:
    """Append-only JSONL log of per-step loss breakdowns."""

    def __init__(self, path: str | Path | None):
        self.path = Path(path) if path else None
        self.records: list[dict] = []
        if self.path:
            self.path.write_text("", encoding="utf-8")

    def write(self, record: dict) -> None:
        self.records.append(record)
        if self.path:
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(record) + "\n")


def validation_split(n_items: int, fraction: float, seed: int) -> tuple[list[int], list[int]]:
    """Deterministic index split; validation gets at least 2 items when feasible."""
    rng = np.random.default_rng(seed)
    perm = [int(i) for i in rng.permutation(n_items)]
    n_val = int(round(n_items * fraction))
    if n_items >= 8:
        n_val = max(2, n_val)
    n_val = min(n_val, n_items - 2)
    if n_val < 2:
        return perm, []
    return perm[n_val:], perm[:n_val]


def iter_batches(
    n_items: int, batch_size: int, rng: np.random.Generator
) -> Iterator[list[int]]:
    """Shuffled index batches; a trailing batch smaller than 2 is dropped."""
    order = rng.permutation(n_items)
    for start in range(0, n_items, batch_size):
        chunk = [int(i) for i in order[start : start + batch_size]]
        if len(chunk) >= 2:
            yield chunk


class StyleCycler:
    """Endless masked style batches, reshuffled at each pass over the corpus."""

    def __init__(
        self,
        sentences: Sequence[StyleSentence],
        vocab: Vocabulary,
        cfg: TrainConfig,
    ):
        if len(sentences) < cfg.batch_size_style:
            raise InputError(
                f"style corpus ({len(sentences)}) smaller than the style batch size"
            )
        self.sentences = sentences
        self.vocab = vocab
        self.cfg = cfg
        self.rng = np.random.default_rng(cfg.seed + 31)
        self._order: list[int] = []
        self._pos = 0

    def next_batch(self) -> list[tuple[int, ...]]:
        batch: list[tuple[int, ...]] = []
        while len(batch) < self.cfg.batch_size_style:
            if self._pos >= len(self._order):
                self._order = [int(i) for i in self.rng.permutation(len(self.sentences))]
                self._pos = 0
            sentence = self.sentences[self._order[self._pos]]
            self._pos += 1
            batch.append(
                mask_style_tokens(
                    sentence, self.vocab, self.rng, self.cfg.mask_c, self.cfg.mask_cap
                )
            )
        return batch


def _guard_finite(
    total: torch.Tensor,
    breakdown_dict: dict,
    step: int,
    pairs: Sequence[ConversationPair],
    style_batch: Sequence[Sequence[int]] | None,
) -> None:
    if torch.isfinite(total):
        return
    dump = {
        "step": step,
        "breakdown": breakdown_dict,
        "contexts": [[list(u) for u in p.context] for p in pairs],
        "responses": [list(p.response) for p in pairs],
        "style": [list(s) for s in style_batch] if style_batch else [],
    }
    raise TrainingDivergedError(f"non-finite loss at step {step}", batch_dump=dump)


def evaluate_validation(
    model: DialogueModel,
    val_pairs: Sequence[ConversationPair],
    val_style: Sequence[tuple[int, ...]] | None,
    cfg: TrainConfig,
    include_style: bool,
) -> float:
    """Deterministic validation total loss (fixed batch order and noise seed)."""
    if len(val_pairs) < 2:
        return float("nan")
    generator = torch.Generator().manual_seed(cfg.seed + 7777)
    totals: list[tuple[float, int]] = []
    was_training = model.training
    model.eval()
    bs = cfg.batch_size_conv
    n_style = len(val_style) if val_style else 0
    for start in range(0, len(val_pairs), bs):
        pairs = list(val_pairs[start : start + bs])
        if len(pairs) < 2:
            continue
        style_batch = None
        if include_style and n_style >= 2:
            picks = [(start + j) % n_style for j in range(max(cfg.batch_size_style, 2))]
            style_batch = [val_style[i] for i in picks]
        with torch.no_grad():
            _, breakdown = total_loss_parts(
                model,
                pairs,
                style_batch,
                cfg.sigma,
                generator,
                include_style=include_style and style_batch is not None,
                spread_cap=cfg.spread_cap,
            )
        totals.append((breakdown.total, len(pairs)))
    if was_training:
        model.train()
    weight = sum(n for _, n in totals)
    return sum(t * n for t, n in totals) / weight


def pretrain(
    model: DialogueModel,
    conv_pairs: Sequence[ConversationPair],
    cfg: TrainConfig,
    log: TrainLog | None = None,
) -> DialogueModel:
    """Conversation-only phase: style terms zero, response/prediction fusion active."""
    if not conv_pairs:
        raise InputError("pretraining requires a non-empty conversation dataset")
    torch.set_num_threads(cfg.num_threads)
    log = log or TrainLog(cfg.log_path)
    model.pretrained = True
    if cfg.pretrain_epochs == 0:
        return model
    train_idx, _ = validation_split(len(conv_pairs), cfg.val_fraction, cfg.seed)
    train = [conv_pairs[i] for i in train_idx]
    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate)
    generator = torch.Generator().manual_seed(cfg.seed + 1)
    rng = np.random.default_rng(cfg.seed + 2)
    step = 0
    for epoch in range(cfg.pretrain_epochs):
        for batch_idx in iter_batches(len(train), cfg.batch_size_conv, rng):
            pairs = [train[i] for i in batch_idx]
            optimizer.zero_grad()
            total, breakdown = total_loss_parts(
                model, pairs, None, cfg.sigma, generator,
                include_style=False, spread_cap=cfg.spread_cap,
            )
            _guard_finite(total, breakdown.to_dict(), step, pairs, None)
            total.backward()
            optimizer.step()
            log.write({"phase": "pretrain", "epoch": epoch, "step": step, **breakdown.to_dict()})
            step += 1
    if cfg.checkpoint_path:
        save_checkpoint(model, cfg.checkpoint_path, meta=_meta(cfg, phase="pretrain"))
    return model


def joint_train(
    model: DialogueModel,
    conv_pairs: Sequence[ConversationPair],
    style_sentences: Sequence[StyleSentence],
    cfg: TrainConfig,
    vocab: Vocabulary,
    log: TrainLog | None = None,
) -> DialogueModel:
    """Joint phase: full objective with masked style batches and early stopping."""
    if not style_sentences:
        raise InputError("joint training requires a non-empty style dataset")
    if not getattr(model, "pretrained", False):
        logger.warning("joint training on a model that was not pretrained")
    torch.set_num_threads(cfg.num_threads)
    log = log or TrainLog(cfg.log_path)

    conv_train_idx, conv_val_idx = validation_split(len(conv_pairs), cfg.val_fraction, cfg.seed)
    style_train_idx, style_val_idx = validation_split(
        len(style_sentences), cfg.val_fraction, cfg.seed + 13
    )
    train = [conv_pairs[i] for i in conv_train_idx]
    val = [conv_pairs[i] for i in conv_val_idx]
    style_train = [style_sentences[i] for i in style_train_idx]
    val_style = [style_sentences[i].tokens for i in style_val_idx]

    cycler = StyleCycler(style_train, vocab, cfg)
    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate)
    generator = torch.Generator().manual_seed(cfg.seed + 3)
    rng = np.random.default_rng(cfg.seed + 4)

    best_val = float("inf")
    best_state: dict | None = None
    stale = 0
    step = 0
    for epoch in range(cfg.joint_max_epochs):
        for batch_idx in iter_batches(len(train), cfg.batch_size_conv, rng):
            pairs = [train[i] for i in batch_idx]
            style_batch = cycler.next_batch()
            optimizer.zero_grad()
            total, breakdown = total_loss_parts(
                model, pairs, style_batch, cfg.sigma, generator,
                include_style=True, spread_cap=cfg.spread_cap,
            )
            _guard_finite(total, breakdown.to_dict(), step, pairs, style_batch)
            total.backward()
            optimizer.step()
            log.write({"phase": "joint", "epoch": epoch, "step": step, **breakdown.to_dict()})
            step += 1
        if val:
            val_loss = evaluate_validation(model, val, val_style, cfg, include_style=True)
            log.write({"phase": "joint-val", "epoch": epoch, "val_total": val_loss})
            if val_loss < best_val:
                best_val = val_loss
                best_state = copy.deepcopy(model.state_dict())
                stale = 0
            else:
                stale += 1
                if stale >= cfg.patience:
                    logger.info("early stop after epoch %d (patience %d)", epoch, cfg.patience)
                    break
    if best_state is not None:
        model.load_state_dict(best_state)
    if cfg.checkpoint_path:
        save_checkpoint(model, cfg.checkpoint_path, meta=_meta(cfg, phase="joint"))
    return model


def _meta(cfg: TrainConfig, phase: str, variant: str = "stylefusion") -> dict:
    return {"sigma": cfg.sigma, "seed": cfg.seed, "phase": phase, "variant": variant}
