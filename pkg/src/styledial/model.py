"""Shared-latent-space network: context encoder, sentence encoder, shared decoder.

Both the sequence-to-sequence branch (context -> prediction point) and the
autoencoder branch (sentence -> code) emit the final top-layer state of a
stacked gated recurrent encoder; the single shared decoder is initialized
with that vector at every layer. Sharing the decoder is a hard constraint:
there is exactly one decoder module referenced by both branches.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import torch
from torch import nn
from torch.nn.utils.rnn import pack_padded_sequence

from .errors import CheckpointError, ConfigError, InputError
from .vocab import BOS_ID, EOS_ID, PAD_ID

logger = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1

_DTYPES = {"float32": torch.float32, "float64": torch.float64}


@dataclass
class ModelConfig:
    vocab_size: int
    latent_dim: int = 32
    embed_dim: int = 32
    num_layers: int = 2
    cell: str = "gru"
    dtype: str = "float64"

    def __post_init__(self):
        if self.cell != "gru":
            raise ConfigError(f"unsupported recurrent cell {self.cell!r} (supported: gru)")
        if self.dtype not in _DTYPES:
            raise ConfigError(f"unsupported dtype {self.dtype!r}")
        if self.vocab_size <= 0 or self.latent_dim <= 0 or self.num_layers <= 0:
            raise ConfigError("vocab_size, latent_dim and num_layers must be positive")

    @property
    def torch_dtype(self) -> torch.dtype:
        return _DTYPES[self.dtype]

    @classmethod
    def full_scale(cls, vocab_size: int) -> "ModelConfig":
        # full-scale constants: 1000-dim latents and embeddings, 2 stacked cells
        return cls(vocab_size=vocab_size, latent_dim=1000, embed_dim=1000, dtype="float32")


@dataclass(frozen=True)
class LatentVector:
    """A point in the shared latent space, tagged with the encoder that produced it."""

    values: torch.Tensor  # shape (latent_dim,)
    role: str  # "s2s" (prediction) or "ae" (encoding)

    def __post_init__(self):
        if self.values.dim() != 1:
            raise InputError("latent vector must be one-dimensional")
        if not torch.isfinite(self.values).all():
            raise InputError("latent vector has non-finite entries")
        if self.role not in ("s2s", "ae"):
            raise InputError(f"unknown latent role {self.role!r}")


class DialogueModel(nn.Module):
    """Two encoders and one shared decoder over a common embedding table."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        dt = config.torch_dtype
        self.embedding = nn.Embedding(
            config.vocab_size, config.embed_dim, padding_idx=PAD_ID, dtype=dt
        )
        kwargs = dict(
            input_size=config.embed_dim,
            hidden_size=config.latent_dim,
            num_layers=config.num_layers,
            batch_first=True,
            dtype=dt,
        )
        self.s2s_encoder = nn.GRU(**kwargs)
        self.ae_encoder = nn.GRU(**kwargs)
        self.decoder = nn.GRU(**kwargs)
        self.out_proj = nn.Linear(config.latent_dim, config.vocab_size, dtype=dt)

    # ------------------------------------------------------------------ encoding

    def _check_ids(self, ids: Sequence[int]) -> None:
        for t in ids:
            if not 0 <= t < self.config.vocab_size:
                raise InputError(f"token id {t} out of range (vocab {self.config.vocab_size})")

    def join_context(self, context: Sequence[Sequence[int]]) -> list[int]:
        """Flatten utterances into one sequence separated by the end-of-utterance id."""
        from .vocab import EOU_ID

        if not context or any(len(u) == 0 for u in context):
            raise InputError("context must be a non-empty list of non-empty utterances")
        joined: list[int] = []
        for i, utterance in enumerate(context):
            if i > 0:
                joined.append(EOU_ID)
            joined.extend(utterance)
        return joined

    def _encode_batch(self, encoder: nn.GRU, sequences: list[list[int]]) -> torch.Tensor:
        """Final top-layer state for each sequence; shape (batch, latent_dim)."""
        for seq in sequences:
            self._check_ids(seq)
        lengths = torch.tensor([len(s) for s in sequences], dtype=torch.int64)
        max_len = int(lengths.max())
        ids = torch.full((len(sequences), max_len), PAD_ID, dtype=torch.int64)
        for i, seq in enumerate(sequences):
            ids[i, : len(seq)] = torch.tensor(seq, dtype=torch.int64)
        packed = pack_padded_sequence(
            self.embedding(ids), lengths, batch_first=True, enforce_sorted=False
        )
        _, h_n = encoder(packed)
        return h_n[-1]

    def encode_context_batch(self, contexts: Sequence[Sequence[Sequence[int]]]) -> torch.Tensor:
        return self._encode_batch(self.s2s_encoder, [self.join_context(c) for c in contexts])

    def encode_sentence_batch(self, sentences: Sequence[Sequence[int]]) -> torch.Tensor:
        for s in sentences:
            if len(s) == 0:
                raise InputError("cannot encode an empty sentence")
        return self._encode_batch(self.ae_encoder, [list(s) for s in sentences])

    def encode_context(self, context: Sequence[Sequence[int]]) -> LatentVector:
        """Prediction point for a context (one or more utterances)."""
        with torch.no_grad():
            z = self.encode_context_batch([context])[0]
        return LatentVector(values=z, role="s2s")

    def encode_sentence(self, tokens: Sequence[int]) -> LatentVector:
        """Autoencoder code for a single utterance."""
        with torch.no_grad():
            z = self.encode_sentence_batch([tokens])[0]
        return LatentVector(values=z, role="ae")

    # ------------------------------------------------------------------ decoding

    def _initial_hidden(self, z: torch.Tensor) -> torch.Tensor:
        """z initializes every decoder layer (layer size equals latent_dim)."""
        batch = z.shape[0]
        return z.unsqueeze(0).expand(self.config.num_layers, batch, -1).contiguous()

    def sequence_logprob_batch(
        self, z: torch.Tensor, sequences: Sequence[Sequence[int]]
    ) -> torch.Tensor:
        """log p(seq + EOS | z) per row, teacher-forced; differentiable.

        ``sequences`` are raw token ids without BOS/EOS; EOS is appended here.
        """
        if z.dim() != 2 or z.shape[0] != len(sequences):
            raise InputError("z must be (batch, latent_dim) matching the sequence count")
        targets = [list(s) + [EOS_ID] for s in sequences]
        for t in targets:
            self._check_ids(t)
        lengths = torch.tensor([len(t) for t in targets], dtype=torch.int64)
        max_len = int(lengths.max())
        batch = len(targets)
        inputs = torch.full((batch, max_len), PAD_ID, dtype=torch.int64)
        target_ids = torch.full((batch, max_len), PAD_ID, dtype=torch.int64)
        for i, t in enumerate(targets):
            inputs[i, 0] = BOS_ID
            inputs[i, 1 : len(t)] = torch.tensor(t[:-1], dtype=torch.int64)
            target_ids[i, : len(t)] = torch.tensor(t, dtype=torch.int64)
        out, _ = self.decoder(self.embedding(inputs), self._initial_hidden(z))
        logits = self.out_proj(out)
        logprobs = torch.log_softmax(logits, dim=-1)
        picked = logprobs.gather(-1, target_ids.unsqueeze(-1)).squeeze(-1)
        mask = torch.arange(max_len).unsqueeze(0) < lengths.unsqueeze(1)
        return (picked * mask.to(picked.dtype)).sum(dim=1)

    def decode_logprob(self, z: LatentVector | torch.Tensor, tokens: Sequence[int]) -> float:
        """Sum of stepwise log-probabilities of an EOS-terminated sequence."""
        if len(tokens) == 0:
            raise InputError("cannot score an empty sequence")
        if tokens[-1] != EOS_ID:
            raise InputError("sequence must be terminated with the EOS id")
        values = z.values if isinstance(z, LatentVector) else z
        with torch.no_grad():
            lp = self.sequence_logprob_batch(values.unsqueeze(0), [list(tokens[:-1])])
        return float(lp[0])

    def decode_greedy_batch(
        self, z: torch.Tensor, max_len: int = 30
    ) -> list[tuple[int, ...]]:
        """Argmax decoding from each latent until EOS or ``max_len`` tokens.

        Returns content tokens (BOS/EOS stripped). Ties break toward the
        lowest token id.
        """
        if max_len < 1:
            raise InputError("max_len must be >= 1")
        batch = z.shape[0]
        hidden = self._initial_hidden(z)
        prev = torch.full((batch, 1), BOS_ID, dtype=torch.int64)
        finished = torch.zeros(batch, dtype=torch.bool)
        outputs: list[list[int]] = [[] for _ in range(batch)]
        with torch.no_grad():
            for _ in range(max_len):
                out, hidden = self.decoder(self.embedding(prev), hidden)
                step = self.out_proj(out[:, 0, :]).argmax(dim=-1)
                for i in range(batch):
                    if not finished[i]:
                        tok = int(step[i])
                        if tok == EOS_ID:
                            finished[i] = True
                        else:
                            outputs[i].append(tok)
                prev = step.unsqueeze(1)
                if bool(finished.all()):
                    break
        return [tuple(o) for o in outputs]

    def decode_greedy(self, z: LatentVector | torch.Tensor, max_len: int = 30) -> tuple[int, ...]:
        values = z.values if isinstance(z, LatentVector) else z
        return self.decode_greedy_batch(values.unsqueeze(0), max_len)[0]

    def step_probabilities(
        self, prev_token: int, hidden: torch.Tensor
    ) -> tuple[torch.Tensor, torch.Tensor]:
        """One decoder step: next-token probability vector and new hidden state."""
        with torch.no_grad():
            inp = self.embedding(torch.tensor([[prev_token]], dtype=torch.int64))
            out, new_hidden = self.decoder(inp, hidden)
            probs = torch.softmax(self.out_proj(out[0, 0, :]), dim=-1)
        return probs, new_hidden

    def initial_decoder_state(self, z: LatentVector | torch.Tensor) -> torch.Tensor:
        values = z.values if isinstance(z, LatentVector) else z
        return self._initial_hidden(values.unsqueeze(0))


def build_model(config: ModelConfig, seed: int) -> DialogueModel:
    """Construct a model with reproducible random initialization."""
    torch.manual_seed(seed)
    return DialogueModel(config)


def save_checkpoint(
    model: DialogueModel, path: str | Path, meta: dict | None = None
) -> None:
    payload = {
        "version": CHECKPOINT_VERSION,
        "config": asdict(model.config),
        "state_dict": model.state_dict(),
        "meta": meta or {},
    }
    torch.save(payload, path)


def load_checkpoint(path: str | Path) -> tuple[DialogueModel, dict]:
    if not Path(path).exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    payload = torch.load(path, weights_only=False)
    version = payload.get("version")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version!r}")
    model = DialogueModel(ModelConfig(**payload["config"]))
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return model, payload.get("meta", {})
