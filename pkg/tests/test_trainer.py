import json
import logging

import pytest
import torch

from styledial.errors import InputError, TrainingDivergedError
from styledial.model import ModelConfig, build_model, load_checkpoint
from styledial.objectives import total_loss, total_loss_parts
from styledial.trainer import (
    StyleCycler,
    TrainConfig,
    TrainLog,
    evaluate_validation,
    iter_batches,
    joint_train,
    pretrain,
    validation_split,
)

import numpy as np


def _mini_config(tmp_path=None, **overrides):
    base = dict(
        batch_size_conv=8,
        batch_size_style=8,
        pretrain_epochs=1,
        joint_max_epochs=2,
        patience=2,
        seed=0,
    )
    base.update(overrides)
    return TrainConfig(**base)


def _mini_model(tiny_corpus, seed=0):
    return build_model(
        ModelConfig(vocab_size=len(tiny_corpus.vocab), latent_dim=16, embed_dim=16), seed=seed
    )


def test_train_config_validation():
    with pytest.raises(InputError):
        TrainConfig(learning_rate=0.0)
    with pytest.raises(InputError):
        TrainConfig(pretrain_epochs=-1)
    with pytest.raises(InputError):
        TrainConfig(batch_size_conv=1)
    with pytest.raises(InputError):
        TrainConfig(sigma=0.0)


def test_validation_split_deterministic_and_disjoint():
    train1, val1 = validation_split(100, 0.05, seed=4)
    train2, val2 = validation_split(100, 0.05, seed=4)
    assert train1 == train2 and val1 == val2
    assert set(train1).isdisjoint(val1)
    assert len(val1) >= 2
    assert sorted(train1 + val1) == list(range(100))


def test_iter_batches_drops_undersized_tail():
    rng = np.random.default_rng(0)
    batches = list(iter_batches(9, 4, rng))
    # 4 + 4 + 1: the singleton tail is dropped
    assert [len(b) for b in batches] == [4, 4]


def test_pretrain_zero_epochs_leaves_parameters_unchanged(tiny_corpus):
    model = _mini_model(tiny_corpus)
    before = {k: v.clone() for k, v in model.state_dict().items()}
    pretrain(model, tiny_corpus.pairs, _mini_config(pretrain_epochs=0))
    for key, value in model.state_dict().items():
        assert torch.equal(before[key], value)


def test_pretrain_requires_data(tiny_corpus):
    with pytest.raises(InputError):
        pretrain(_mini_model(tiny_corpus), [], _mini_config())


def test_pretrain_reduces_training_nll(tiny_corpus):
    model = _mini_model(tiny_corpus)
    generator = torch.Generator().manual_seed(0)
    before = total_loss(
        model, tiny_corpus.pairs[:32], None, 0.1, generator, include_style=False
    ).nll
    pretrain(model, tiny_corpus.pairs, _mini_config(pretrain_epochs=2))
    generator = torch.Generator().manual_seed(0)
    after = total_loss(
        model, tiny_corpus.pairs[:32], None, 0.1, generator, include_style=False
    ).nll
    assert after < before


def test_same_seed_training_is_bit_reproducible(tiny_corpus, tmp_path):
    checkpoints = []
    for run in range(2):
        model = _mini_model(tiny_corpus, seed=1)
        cfg = _mini_config(checkpoint_path=tmp_path / f"run{run}.pt")
        pretrain(model, tiny_corpus.pairs, cfg)
        joint_train(model, tiny_corpus.pairs, tiny_corpus.style, cfg, tiny_corpus.vocab)
        checkpoints.append({k: v.clone() for k, v in model.state_dict().items()})
    for key in checkpoints[0]:
        assert torch.equal(checkpoints[0][key], checkpoints[1][key])


def test_joint_train_warns_without_pretraining(tiny_corpus, caplog):
    model = _mini_model(tiny_corpus)
    with caplog.at_level(logging.WARNING):
        joint_train(
            model,
            tiny_corpus.pairs,
            tiny_corpus.style,
            _mini_config(joint_max_epochs=1),
            tiny_corpus.vocab,
        )
    assert "not pretrained" in caplog.text


def test_joint_train_requires_style_data(tiny_corpus):
    model = _mini_model(tiny_corpus)
    with pytest.raises(InputError):
        joint_train(model, tiny_corpus.pairs, [], _mini_config(), tiny_corpus.vocab)


def test_style_corpus_smaller_than_batch_is_an_error(tiny_corpus):
    cfg = _mini_config(batch_size_style=len(tiny_corpus.style) + 10)
    with pytest.raises(InputError):
        StyleCycler(tiny_corpus.style, tiny_corpus.vocab, cfg)


def test_joint_log_has_nonzero_style_terms_from_first_step(tiny_corpus, tmp_path):
    model = _mini_model(tiny_corpus)
    log_path = tmp_path / "train.jsonl"
    cfg = _mini_config(joint_max_epochs=1, log_path=log_path)
    log = TrainLog(log_path)
    pretrain(model, tiny_corpus.pairs, cfg, log)
    joint_train(model, tiny_corpus.pairs, tiny_corpus.style, cfg, tiny_corpus.vocab, log)
    records = [json.loads(line) for line in log_path.read_text().splitlines()]
    joint_steps = [r for r in records if r.get("phase") == "joint"]
    assert joint_steps[0]["step"] == 0
    assert joint_steps[0]["fuse_style"] != 0.0
    assert all(r["fuse_style"] != 0.0 for r in joint_steps)
    pretrain_steps = [r for r in records if r.get("phase") == "pretrain"]
    assert all(r["fuse_style"] == 0.0 for r in pretrain_steps)


def test_style_cycler_reshuffles_per_pass(tiny_corpus):
    cfg = _mini_config(batch_size_style=len(tiny_corpus.style) // 2)
    cycler = StyleCycler(tiny_corpus.style, tiny_corpus.vocab, cfg)
    first_pass = [tuple(cycler.next_batch()) for _ in range(2)]
    second_pass = [tuple(cycler.next_batch()) for _ in range(2)]
    assert first_pass != second_pass  # new permutation and new masking draws


def test_checkpoint_reload_reproduces_validation_loss(tiny_corpus, tmp_path):
    model = _mini_model(tiny_corpus)
    cfg = _mini_config(checkpoint_path=tmp_path / "model.pt", joint_max_epochs=1)
    pretrain(model, tiny_corpus.pairs, cfg)
    joint_train(model, tiny_corpus.pairs, tiny_corpus.style, cfg, tiny_corpus.vocab)

    _, val_idx = validation_split(len(tiny_corpus.pairs), cfg.val_fraction, cfg.seed)
    val_pairs = [tiny_corpus.pairs[i] for i in val_idx]
    val_style = [s.tokens for s in tiny_corpus.style[:8]]
    before = evaluate_validation(model, val_pairs, val_style, cfg, include_style=True)
    reloaded, _ = load_checkpoint(cfg.checkpoint_path)
    after = evaluate_validation(reloaded, val_pairs, val_style, cfg, include_style=True)
    assert before == after


def test_one_optimizer_step_decreases_frozen_batch_loss(tiny_corpus):
    """Line-search probe: some learning rate in {lr, lr/10} strictly decreases."""
    model = _mini_model(tiny_corpus, seed=2)
    pairs = tiny_corpus.pairs[:8]
    style = [s.tokens for s in tiny_corpus.style[:8]]
    seed = 5

    def frozen_loss():
        return total_loss(model, pairs, style, 0.1, torch.Generator().manual_seed(seed)).total

    initial_state = {k: v.clone() for k, v in model.state_dict().items()}
    before = frozen_loss()
    decreased = False
    for lr in (3e-4, 3e-5):
        model.load_state_dict(initial_state)
        optimizer = torch.optim.Adam(model.parameters(), lr=lr)
        optimizer.zero_grad()
        total, _ = total_loss_parts(
            model, pairs, style, 0.1, torch.Generator().manual_seed(seed)
        )
        total.backward()
        optimizer.step()
        if frozen_loss() < before:
            decreased = True
            break
    assert decreased


def test_nan_loss_aborts_with_batch_dump(tiny_corpus):
    model = _mini_model(tiny_corpus)
    with torch.no_grad():
        model.out_proj.weight[0, 0] = float("nan")
    with pytest.raises(TrainingDivergedError) as excinfo:
        pretrain(model, tiny_corpus.pairs, _mini_config())
    dump = excinfo.value.batch_dump
    assert dump["contexts"] and dump["responses"]
    assert "step" in dump
