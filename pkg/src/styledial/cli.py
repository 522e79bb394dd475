"""Command-line entry points for every pipeline stage.

Exit codes: 0 success, 1 input error, 2 internal error. A JSON config file
passed with --config overrides any flag of the same name. Flags and file
formats are documented in docs/REFERENCE.md.
"""

from __future__ import annotations

import argparse
import json
import sys
import traceback
from pathlib import Path

import torch

from . import baselines, classifiers, corpus, inference, metrics, synth
from .errors import InputError
from .model import ModelConfig, load_checkpoint, save_checkpoint
from .service import ModelBundle, create_app
from .trainer import TrainConfig
from .vocab import Vocabulary


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, default=None, help="JSON file overriding flags")
    parser.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="styledial")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-data", help="generate synthetic corpora and vocabulary")
    _add_common(p)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--n-pairs", type=int, default=5000)
    p.add_argument("--n-style", type=int, default=2000)
    p.add_argument("--n-test-contexts", type=int, default=250)
    p.add_argument(
        "--style-transform",
        default="default",
        help="'default', 'identity', or 'partial:<fraction>'",
    )

    p = sub.add_parser("train", help="train a model variant")
    _add_common(p)
    p.add_argument("--variant", default="stylefusion", choices=baselines.TRAINABLE_VARIANTS)
    p.add_argument("--conv", type=Path, required=True)
    p.add_argument("--style", type=Path, default=None)
    p.add_argument("--vocab", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--log", type=Path, default=None)
    p.add_argument("--latent-dim", type=int, default=32)
    p.add_argument("--embed-dim", type=int, default=32)
    p.add_argument("--lr", type=float, default=0.0003)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--pretrain-epochs", type=int, default=2)
    p.add_argument("--joint-epochs", type=int, default=12)
    p.add_argument("--sigma", type=float, default=0.1)
    p.add_argument("--spread-cap", type=float, default=None)
    p.add_argument("--lm-weight", type=float, default=0.5)

    p = sub.add_parser("train-classifiers", help="train the style scorer and keyword list")
    _add_common(p)
    p.add_argument("--conv", type=Path, required=True)
    p.add_argument("--style", type=Path, required=True)
    p.add_argument("--vocab", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--keywords-out", type=Path, default=None)
    p.add_argument("--epochs", type=int, default=6)
    p.add_argument("--keyword-k", type=int, default=100)

    p = sub.add_parser("build-testset", help="filter a response pool into a stylized test set")
    _add_common(p)
    p.add_argument("--pool", type=Path, required=True)
    p.add_argument("--scorer", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--threshold", type=float, default=0.3)
    p.add_argument("--min-refs", type=int, default=4)

    p = sub.add_parser("eval", help="evaluate a checkpoint at one radius")
    _add_common(p)
    p.add_argument("--ckpt", type=Path, required=True)
    p.add_argument("--scorer", type=Path, required=True)
    p.add_argument("--testset", type=Path, required=True)
    p.add_argument("--keywords", type=Path, default=None)
    p.add_argument("--style", type=Path, default=None, help="style corpus for count normalization")
    p.add_argument("--rho", type=float, default=1.0)
    p.add_argument("--lam", type=float, default=0.5)
    p.add_argument("--n-candidates", type=int, default=100)
    p.add_argument("--max-contexts", type=int, default=None)
    p.add_argument("--out", type=Path, default=None)
    p.add_argument("--label", default=None, help="system name for the comparison grid")
    p.add_argument("--grid-out", type=Path, default=None, help="append a labeled grid row")

    p = sub.add_parser("sweep-rho", help="evaluate over a list of radii")
    _add_common(p)
    p.add_argument("--ckpt", type=Path, required=True)
    p.add_argument("--scorer", type=Path, required=True)
    p.add_argument("--testset", type=Path, required=True)
    p.add_argument("--keywords", type=Path, default=None)
    p.add_argument("--style", type=Path, default=None)
    p.add_argument("--rhos", required=True, help="comma-separated radii, e.g. 0,0.5,1")
    p.add_argument("--lam", type=float, default=0.5)
    p.add_argument("--n-candidates", type=int, default=100)
    p.add_argument("--max-contexts", type=int, default=None)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("mds", help="project latent groups to 2-D")
    _add_common(p)
    p.add_argument("--ckpt", type=Path, required=True)
    p.add_argument("--conv", type=Path, required=True)
    p.add_argument("--style", type=Path, required=True)
    p.add_argument("--vocab", type=Path, required=True)
    p.add_argument("--per-group", type=int, default=500)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("generate", help="generate ranked candidates (one context or a file)")
    _add_common(p)
    p.add_argument("--ckpt", type=Path, required=True)
    p.add_argument("--scorer", type=Path, required=True)
    p.add_argument("--context", default=None, help="utterances separated by ' <EOU> '")
    p.add_argument(
        "--contexts-file", type=Path, default=None, help="one context per line -> JSONL out"
    )
    p.add_argument("--rho", type=float, default=0.0)
    p.add_argument("--lam", type=float, default=0.5)
    p.add_argument("--n-candidates", type=int, default=100)
    p.add_argument("--towards", default=None, help="direction sentence")

    p = sub.add_parser("serve", help="run the HTTP inference service")
    _add_common(p)
    p.add_argument("--ckpt", type=Path, required=True)
    p.add_argument("--scorer", type=Path, required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)

    return parser


def _apply_config_file(args: argparse.Namespace) -> None:
    if getattr(args, "config", None) is None:
        return
    overrides = json.loads(Path(args.config).read_text(encoding="utf-8"))
    if not isinstance(overrides, dict):
        raise InputError(f"{args.config}: config file must hold a JSON object")
    for key, value in overrides.items():
        dest = key.replace("-", "_")
        if not hasattr(args, dest):
            raise InputError(f"{args.config}: unknown config key {key!r}")
        current = getattr(args, dest)
        if isinstance(current, Path):
            value = Path(value)
        setattr(args, dest, value)


def _make_transform(name: str) -> synth.StyleTransform:
    if name == "default":
        return synth.StyleTransform.default()
    if name == "identity":
        return synth.StyleTransform.identity()
    if name.startswith("partial:"):
        return synth.StyleTransform.partial(float(name.split(":", 1)[1]))
    raise InputError(f"unknown style transform {name!r}")


def cmd_synth_data(args: argparse.Namespace) -> int:
    args.out.mkdir(parents=True, exist_ok=True)
    spec = synth.SynthSpec(
        transform=_make_transform(args.style_transform),
        n_pairs=args.n_pairs,
        n_style=args.n_style,
        n_test_contexts=args.n_test_contexts,
    )
    pairs, style = synth.synth_corpus(spec, seed=args.seed)
    pool = synth.synth_test_pool(spec, seed=args.seed + 1)
    synth.write_conversation_file(pairs, args.out / "conv_train.tsv")
    synth.write_style_file(style, args.out / "style_train.txt")
    synth.write_conversation_file(pool, args.out / "test_pool.tsv")
    token_streams = [u.split() for ctx, _ in pairs for u in ctx]
    token_streams += [resp.split() for _, resp in pairs]
    token_streams += [s.split() for s in style]
    vocab = Vocabulary.build(token_streams)
    vocab.save(args.out / "vocab.txt")
    print(f"wrote {len(pairs)} pairs, {len(style)} style sentences, vocab {len(vocab)}")
    return 0


def _load_vocab_with_counts(vocab_path: Path, conv_path: Path, style_path: Path | None) -> Vocabulary:
    vocab = Vocabulary.load(vocab_path)
    streams = []
    pairs = corpus.load_conversations(conv_path, vocab)
    for pair in pairs:
        for utt in pair.context:
            streams.append(list(vocab.decode(utt)))
        streams.append(list(vocab.decode(pair.response)))
    if style_path is not None:
        for s in corpus.load_style_sentences(style_path, vocab):
            streams.append(list(vocab.decode(s.tokens)))
    vocab.count_from(streams)
    return vocab


def cmd_train(args: argparse.Namespace) -> int:
    vocab = _load_vocab_with_counts(args.vocab, args.conv, args.style)
    pairs = corpus.load_conversations(args.conv, vocab)
    style = corpus.load_style_sentences(args.style, vocab) if args.style else []
    cfg = TrainConfig(
        learning_rate=args.lr,
        batch_size_conv=args.batch_size,
        batch_size_style=args.batch_size,
        pretrain_epochs=args.pretrain_epochs,
        joint_max_epochs=args.joint_epochs,
        seed=args.seed,
        sigma=args.sigma,
        spread_cap=args.spread_cap,
        log_path=args.log,
    )
    model_config = ModelConfig(
        vocab_size=len(vocab), latent_dim=args.latent_dim, embed_dim=args.embed_dim
    )
    spec = baselines.VariantSpec(variant=args.variant, train=cfg, lm_weight=args.lm_weight)
    trained = baselines.train_variant(spec, pairs, style, vocab, model_config)
    meta = {"variant": args.variant, "sigma": cfg.sigma, "seed": cfg.seed}
    if trained.language_model is not None:
        lm_path = args.out.with_suffix(".lm.pt")
        torch.save(
            {
                "version": 1,
                "config": vars(trained.language_model.config),
                "state_dict": trained.language_model.state_dict(),
            },
            lm_path,
        )
        meta["lm_path"] = str(lm_path)
        meta["lm_weight"] = trained.lm_weight
    save_checkpoint(trained.model, args.out, meta=meta)
    print(f"saved {args.variant} checkpoint to {args.out}")
    return 0


def cmd_train_classifiers(args: argparse.Namespace) -> int:
    vocab = Vocabulary.load(args.vocab)
    pairs = corpus.load_conversations(args.conv, vocab)
    style = corpus.load_style_sentences(args.style, vocab)
    negatives = [list(vocab.decode(p.response)) for p in pairs]
    positives = [list(vocab.decode(s.tokens)) for s in style]
    cfg = classifiers.ClassifierConfig(epochs=args.epochs, seed=args.seed)
    scorer = classifiers.train_classifiers(positives, negatives, vocab, cfg)
    classifiers.save_scorer(scorer, args.out)
    print(
        "scorer saved; held-out accuracy "
        f"ngram={scorer.report['ngram_accuracy']:.3f} "
        f"neural={scorer.report['neural_accuracy']:.3f}"
    )
    if args.keywords_out:
        keywords = classifiers.build_keyword_list(
            positives, negatives, k=args.keyword_k, seed=args.seed
        )
        keywords.save(args.keywords_out)
        print(f"wrote {len(keywords.entries)} keywords to {args.keywords_out}")
    return 0


def cmd_build_testset(args: argparse.Namespace) -> int:
    scorer = classifiers.load_scorer(args.scorer)
    vocab = scorer.vocab
    pool = corpus.load_conversations(args.pool, vocab)
    test_set = corpus.build_stylized_test_set(
        pool, scorer.score_ids, threshold=args.threshold, min_refs=args.min_refs
    )
    corpus.save_test_set(test_set, vocab, args.out)
    print(f"kept {len(test_set)} contexts (threshold {args.threshold}, min refs {args.min_refs})")
    return 0


def _load_bundle(ckpt: Path, scorer_path: Path) -> ModelBundle:
    model, meta = load_checkpoint(ckpt)
    scorer = classifiers.load_scorer(scorer_path)
    return ModelBundle(
        model=model,
        scorer=scorer,
        sigma=float(meta.get("sigma", 0.1)),
        model_id=ckpt.name,
        variant=meta.get("variant", "stylefusion"),
    )


def _count_reference(args: argparse.Namespace, scorer, keywords) -> float | None:
    if keywords is None or args.style is None:
        return None
    style = corpus.load_style_sentences(args.style, scorer.vocab)
    texts = [list(scorer.vocab.decode(s.tokens)) for s in style]
    return classifiers.count_metric(texts, keywords)


def cmd_eval(args: argparse.Namespace) -> int:
    bundle = _load_bundle(args.ckpt, args.scorer)
    test_set = corpus.load_test_set(args.testset, bundle.scorer.vocab)
    keywords = (
        classifiers.StyleKeywordList.load(args.keywords) if args.keywords else None
    )
    spec = inference.SampleSpec(
        rho=args.rho, lam=args.lam, n_candidates=args.n_candidates, seed=args.seed
    )
    reports = metrics.sweep_rho(
        test_set,
        bundle.model,
        bundle.scorer,
        [args.rho],
        spec,
        bundle.sigma,
        keywords,
        _count_reference(args, bundle.scorer, keywords),
        max_contexts=args.max_contexts,
    )
    if args.out:
        metrics.write_sweep_csv(reports, args.out)
    if args.grid_out:
        metrics.append_grid_row(args.label or bundle.variant, reports[0], args.grid_out)
    print(",".join(metrics.SWEEP_COLUMNS))
    print(",".join(reports[0].row()))
    return 0


def cmd_sweep_rho(args: argparse.Namespace) -> int:
    bundle = _load_bundle(args.ckpt, args.scorer)
    test_set = corpus.load_test_set(args.testset, bundle.scorer.vocab)
    keywords = (
        classifiers.StyleKeywordList.load(args.keywords) if args.keywords else None
    )
    rhos = [float(r) for r in args.rhos.split(",") if r != ""]
    if not rhos:
        raise InputError("--rhos must list at least one radius")
    spec = inference.SampleSpec(
        rho=rhos[0], lam=args.lam, n_candidates=args.n_candidates, seed=args.seed
    )
    reports = metrics.sweep_rho(
        test_set,
        bundle.model,
        bundle.scorer,
        rhos,
        spec,
        bundle.sigma,
        keywords,
        _count_reference(args, bundle.scorer, keywords),
        max_contexts=args.max_contexts,
    )
    metrics.write_sweep_csv(reports, args.out)
    print(f"wrote {len(reports)} rows to {args.out}")
    return 0


def cmd_mds(args: argparse.Namespace) -> int:
    model, _ = load_checkpoint(args.ckpt)
    vocab = Vocabulary.load(args.vocab)
    pairs = corpus.load_conversations(args.conv, vocab)
    style = corpus.load_style_sentences(args.style, vocab)
    points, labels = metrics.latent_groups_for_mds(
        model,
        [p.context for p in pairs],
        [p.response for p in pairs],
        [s.tokens for s in style],
        per_group=args.per_group,
    )
    coords = metrics.mds_project(points, dims=2)
    metrics.write_mds_csv(coords, labels, args.out)
    print(f"wrote {len(labels)} projected points to {args.out}")
    return 0


def cmd_generate(args: argparse.Namespace) -> int:
    bundle = _load_bundle(args.ckpt, args.scorer)
    vocab = bundle.scorer.vocab
    if (args.context is None) == (args.contexts_file is None):
        raise InputError("pass exactly one of --context or --contexts-file")
    if args.contexts_file is not None:
        contexts = [
            line for line in args.contexts_file.read_text(encoding="utf-8").splitlines() if line
        ]
    else:
        contexts = [args.context]

    target_ids = None
    mode = "random"
    if args.towards:
        target_ids = vocab.encode(corpus.tokenize(args.towards))
        mode = "towards"

    for i, context_text in enumerate(contexts):
        utterances = [corpus.tokenize(u) for u in context_text.split(" <EOU> ")]
        if any(len(u) == 0 for u in utterances):
            raise InputError(f"context {i + 1} must contain non-empty utterances")
        context_ids = [vocab.encode(u) for u in utterances]
        spec = inference.SampleSpec(
            rho=args.rho,
            mode=mode,
            lam=args.lam,
            n_candidates=args.n_candidates,
            seed=args.seed + 100003 * i,
        )
        ranked = inference.generate_candidates(
            context_ids,
            bundle.model,
            bundle.scorer,
            spec,
            bundle.sigma,
            target_sentence=target_ids,
        )
        record = {
            "context": context_text,
            "rho": args.rho,
            "lambda": args.lam,
            "candidates": [
                {
                    "text": " ".join(vocab.decode(h.tokens)),
                    "relevance": h.relevance,
                    "style_prob": h.style_prob,
                    "score": h.score,
                    "count": h.count,
                }
                for h in ranked
            ],
        }
        print(json.dumps(record))
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    bundle = _load_bundle(args.ckpt, args.scorer)
    app = create_app(bundle)
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


_COMMANDS = {
    "synth-data": cmd_synth_data,
    "train": cmd_train,
    "train-classifiers": cmd_train_classifiers,
    "build-testset": cmd_build_testset,
    "eval": cmd_eval,
    "sweep-rho": cmd_sweep_rho,
    "mds": cmd_mds,
    "generate": cmd_generate,
    "serve": cmd_serve,
}


def cli_dispatch(argv: list[str]) -> int:
    """Parse and run; returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors; that is an input error here
        return 0 if exc.code == 0 else 1
    try:
        _apply_config_file(args)
        return _COMMANDS[args.command](args)
    except (InputError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception:
        traceback.print_exc()
        return 2


def main() -> None:
    sys.exit(cli_dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
