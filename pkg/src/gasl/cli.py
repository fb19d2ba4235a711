"""Command-line entry point ``gasl``.

Exit codes: 0 success, 2 configuration error, 3 protocol violation,
4 ingest error, 1 anything else raised by the framework.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from gasl.errors import ConfigError, GaslError


def cmd_run(args):
    from gasl.harness import ExperimentConfig, run_experiment

    cfg = ExperimentConfig.load(args.config)
    rec = run_experiment(cfg)
    print(json.dumps(rec.to_dict(), indent=2, sort_keys=True))


def cmd_synth(args):
    from gasl.harness import SyntheticDatasetSpec, make_synthetic_dataset, write_prepared

    try:
        spec = SyntheticDatasetSpec.from_dict(json.loads(Path(args.spec).read_text()))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read spec {args.spec}: {exc}") from None
    out = write_prepared(args.out, *make_synthetic_dataset(spec))
    print(out)


def cmd_report(args):
    from gasl.harness import emit_report, load_records

    res = emit_report(load_records(args.inp), args.out)
    sys.stdout.write(Path(res["text"]).read_text())
    sys.stdout.write(Path(res["ranks"]).read_text())


def cmd_splits(args):
    from gasl.datamodel import Task
    from gasl.datasets import benchmark_layout
    from gasl.splits import build_split, validate_split

    meta, base = benchmark_layout(args.dataset)
    split = build_split(meta, base.labels, base, args.task, args.shots, args.seed)
    rep = validate_split(split, base.labels, meta, base)
    summary = {
        "dataset": meta.dataset_id,
        "task": Task(args.task).value,
        "shots": args.shots,
        **{k: int(len(getattr(split, k))) for k in ("train_seen", "train_unseen", "test_seen", "test_unseen")},
        "checks": rep.checks,
    }
    print(json.dumps(summary, indent=2))
    if args.out:
        Path(args.out).write_text(split.to_json())


def cmd_embed_visual(args):
    from gasl.datamodel import VisualProvenance, read_semantic_container, write_feature_container
    from gasl.embeddings.visual import (
        BackboneHandle,
        VisualFinetuneConfig,
        extract_features,
        finetune_ce,
        finetune_regularized,
        scan_image_folder,
    )

    paths, labels = scan_image_folder(args.images)
    backbone = BackboneHandle.resnet101(args.pretrained) if args.backbone == "resnet101" else BackboneHandle.toy()
    prov = VisualProvenance.NAIVE
    if args.variant != "naive":
        if args.seen is None:
            raise ConfigError("finetuning needs --seen (number of seen classes)")
        sel = [i for i, y in enumerate(labels) if y <= args.seen]
        tr_paths, tr_labels = [paths[i] for i in sel], labels[sel]
        if args.variant == "finetune":
            cfg = VisualFinetuneConfig(epochs=args.epochs)
            finetune_ce(backbone, tr_paths, tr_labels, args.seen, cfg, seed=args.seed)
            prov = VisualProvenance.FINETUNED
        else:
            if args.semantics is None:
                raise ConfigError("regularized finetuning needs --semantics")
            A = read_semantic_container(args.semantics).A
            if args.dataset:
                cfg = VisualFinetuneConfig.for_dataset(args.dataset, epochs=args.epochs)
            else:
                cfg = VisualFinetuneConfig(alpha_se=args.alpha, delta_se=args.delta, lambda_se=args.lam, epochs=args.epochs)
            finetune_regularized(backbone, tr_paths, tr_labels, args.seen, A, cfg, seed=args.seed)
            prov = VisualProvenance.REGULARIZED
    fs = extract_features(paths, labels, backbone, prov, dataset_id=args.dataset or "")
    print(write_feature_container(fs, args.out))


def cmd_embed_semantic(args):
    from gasl.datamodel import read_feature_container, write_semantic_container
    from gasl.embeddings.semantic import class_embeddings, read_corpus, train_text_encoder

    corpus = read_corpus(args.corpus)
    visual = read_feature_container(args.visual)
    core = "lstm_like" if args.variant == "naive" else "gru_like"
    alpha = 0.5 if args.variant != "imb-gru" else args.alpha
    enc, _ = train_text_encoder(corpus, visual, core=core, alpha=alpha, hidden=args.hidden, epochs=args.epochs, seed=args.seed)
    print(write_semantic_container(class_embeddings(enc, corpus, dataset_id=visual.dataset_id), args.out))


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gasl", description="Generative any-shot learning benchmark")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one experiment from a JSON config")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("synth", help="write a synthetic dataset as a prepared data directory")
    p.add_argument("--spec", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("report", help="tabulate stored result records")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("splits", help="build and validate a task split on a benchmark layout")
    p.add_argument("--dataset", required=True)
    p.add_argument("--task", required=True)
    p.add_argument("--shots", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_splits)

    p = sub.add_parser("embed-visual", help="extract or finetune visual features")
    p.add_argument("--variant", choices=("naive", "finetune", "regularized"), required=True)
    p.add_argument("--images", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--backbone", choices=("toy", "resnet101"), default="toy")
    p.add_argument("--pretrained", action="store_true")
    p.add_argument("--seen", type=int, help="number of seen classes (ids 1..seen)")
    p.add_argument("--semantics", help="semantic container for regularized finetuning")
    p.add_argument("--dataset", help="benchmark name; selects published regularization settings")
    p.add_argument("--alpha", type=float, default=0.01)
    p.add_argument("--delta", type=float, default=1.0)
    p.add_argument("--lam", type=float, default=0.9)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_embed_visual)

    p = sub.add_parser("embed-semantic", help="train a text encoder and emit class descriptions")
    p.add_argument("--variant", choices=("naive", "gru", "imb-gru"), required=True)
    p.add_argument("--alpha", type=float, default=0.7)
    p.add_argument("--corpus", required=True)
    p.add_argument("--visual", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--hidden", type=int, default=1024)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_embed_semantic)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except GaslError as exc:
        print(f"gasl: error: {exc}", file=sys.stderr)
        return getattr(exc, "exit_code", 1)
    return 0


if __name__ == "__main__":
    sys.exit(main())
