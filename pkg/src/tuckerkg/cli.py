"""Command-line front end: training, evaluation, verification and export.

Subcommands:
  train           train a model on a dataset directory (or the built-in
                  synthetic world) and write checkpoint + metrics
  evaluate        filtered ranking metrics for a saved checkpoint
  verify          run the self-verification suites
  export-heatmap  dump one relation's matrix as CSV with its symmetry score
  param-count     parameter counts for the supported model families
  synth-gen       write a synthetic dataset directory

The TUCKER_LOG environment variable (DEBUG/INFO/WARNING/ERROR) controls log
verbosity.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt
from .data import (
    augment_reciprocal,
    build_filter_index,
    generate_synthetic,
    load_triples,
    save_triples,
)
from .evaluate import evaluate
from .model import ModelKind, init_model, param_count, relation_matrix, symmetry_score
from .train import PRESETS, TrainConfig, fit
from .verify import SUITES, run_suites

log = logging.getLogger(__name__)

# Entity/relation counts of the standard benchmark datasets.
DATASET_STATS = {
    "fb15k": (14951, 1345),
    "fb15k-237": (14541, 237),
    "wn18": (40943, 18),
    "wn18rr": (40943, 11),
}

DEFAULT_SYNTH_ENTITIES = 200


def _add_hyper_flags(p):
    p.add_argument("--preset", choices=sorted(PRESETS),
                   help="start from a benchmark's published hyper-parameters")
    p.add_argument("--lr", type=float, help="learning rate")
    p.add_argument("--decay", type=float, help="per-epoch learning-rate multiplier")
    p.add_argument("--de", type=int, help="entity embedding dimension")
    p.add_argument("--dr", type=int, help="relation embedding dimension")
    p.add_argument("--d1", type=float, help="dropout on the subject embedding")
    p.add_argument("--d2", type=float, help="dropout on the relation matrix")
    p.add_argument("--d3", type=float, help="dropout on the transformed embedding")
    p.add_argument("--ls", type=float, help="label smoothing")
    p.add_argument("--batch-size", type=int)
    p.add_argument("--epochs", type=int)


def _resolve_config(args) -> TrainConfig:
    values = dict(PRESETS[args.preset]) if args.preset else {}
    overrides = {
        "lr": args.lr, "decay": args.decay,
        "ent_dim": args.de, "rel_dim": args.dr,
        "dropout_input": args.d1, "dropout_rel_matrix": args.d2,
        "dropout_hidden": args.d3, "label_smoothing": args.ls,
        "batch_size": args.batch_size, "epochs": args.epochs,
        "seed": args.seed,
    }
    values.update({k: v for k, v in overrides.items() if v is not None})
    return TrainConfig(**values)


def _load_dataset(data: str, seed: int, synth_entities: int):
    if data == "synth":
        return generate_synthetic(synth_entities, seed)
    return load_triples(data)


def cmd_train(args) -> int:
    cfg = _resolve_config(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    store, vocab = _load_dataset(args.data, cfg.seed, args.synth_entities)
    aug = augment_reciprocal(store, vocab)
    log.info(
        "dataset: %d entities, %d relations, %d/%d/%d augmented triples",
        vocab.n_entities, vocab.n_relations,
        len(aug.train), len(aug.valid), len(aug.test),
    )
    rng = np.random.default_rng(cfg.seed)
    model = init_model(
        vocab.n_entities, vocab.n_relations_aug, cfg.ent_dim, cfg.rel_dim, rng,
        dropout=(cfg.dropout_input, cfg.dropout_rel_matrix, cfg.dropout_hidden),
    )
    filter_index = build_filter_index(aug)

    on_epoch = None
    if args.eval_every > 0 and aug.valid:
        def on_epoch(epoch, m):
            if (epoch + 1) % args.eval_every:
                return None
            report = evaluate(
                m, aug, filter_index, split="valid",
                threads=args.threads, keep_ranks=False,
            )
            return {
                "valid_mrr": report.mrr,
                "valid_hits1": report.hits[1],
                "valid_hits3": report.hits[3],
                "valid_hits10": report.hits[10],
            }

    fit(model, aug, cfg, on_epoch=on_epoch,
        log_path=out_dir / "metrics.csv", rng=rng)

    ckpt.save_checkpoint(out_dir / "checkpoint", model, vocab)
    if aug.test:
        report = evaluate(
            model, aug, filter_index, threads=args.threads, keep_ranks=False
        )
        print(report.as_text())
        report.write_csv(out_dir / "eval.csv")
    print(f"checkpoint written to {out_dir / 'checkpoint'}")
    return 0


def cmd_evaluate(args) -> int:
    model, vocab = ckpt.load_checkpoint(args.checkpoint)
    if vocab is None:
        print("checkpoint carries no vocabulary; cannot decode a dataset",
              file=sys.stderr)
        return 1
    if args.data == "synth":
        store, synth_vocab = generate_synthetic(args.synth_entities, args.seed)
        if (synth_vocab.entity_ids != vocab.entity_ids
                or synth_vocab.relation_ids != vocab.relation_ids):
            print("synthetic world does not match the checkpoint vocabulary "
                  "(check --seed / --synth-entities)", file=sys.stderr)
            return 1
    else:
        store, _ = load_triples(args.data, vocab)
    aug = augment_reciprocal(store, vocab)
    filter_index = build_filter_index(aug)
    report = evaluate(
        model, aug, filter_index, split=args.split, threads=args.threads
    )
    print(report.as_text())
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        report.write_csv(out_dir / "eval.csv")
        if args.rank_dump:
            report.write_rank_dump(out_dir / "ranks.csv")
    return 0


def cmd_verify(args) -> int:
    names = args.suite or None
    results = run_suites(
        names=names, trials=args.trials, seed=args.seed_opt, corrupt=args.corrupt_core
    )
    failed = 0
    for res in results:
        status = "PASS" if res.passed else "FAIL"
        print(f"{status} {res.name:<10} {res.detail}")
        failed += not res.passed
    return 1 if failed else 0


def cmd_export_heatmap(args) -> int:
    model, vocab = ckpt.load_checkpoint(args.checkpoint)
    if vocab is None:
        print("checkpoint carries no vocabulary", file=sys.stderr)
        return 1
    try:
        rel_id = vocab.relation_ids[args.relation]
    except KeyError:
        print(f"unknown relation {args.relation!r}", file=sys.stderr)
        return 1
    if args.reciprocal:
        rel_id = vocab.reciprocal(rel_id)
    matrix = relation_matrix(model, rel_id)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8") as fh:
        for row in matrix:
            fh.write(",".join(f"{x:.17g}" for x in row) + "\n")
    print(f"relation {args.relation}{'^-1' if args.reciprocal else ''}: "
          f"symmetry_score {symmetry_score(matrix):.6f}")
    print(f"matrix written to {out}")
    return 0


def cmd_param_count(args) -> int:
    if args.preset:
        n_e, n_r = DATASET_STATS[args.preset]
        preset = PRESETS[args.preset]
        d_e = args.de if args.de is not None else preset["ent_dim"]
        d_r = args.dr if args.dr is not None else preset["rel_dim"]
    else:
        if args.n_entities is None or args.n_relations is None:
            print("need --preset or both --n-entities and --n-relations",
                  file=sys.stderr)
            return 1
        n_e, n_r = args.n_entities, args.n_relations
        d_e = args.de if args.de is not None else 200
        d_r = args.dr if args.dr is not None else d_e
    base_dim = args.dim if args.dim is not None else d_e
    kind = ModelKind(args.model, base_dim)
    count = param_count(n_e, 2 * n_r, d_e, d_r, kind)
    print(f"{args.model}: {count:,} parameters "
          f"(n_e={n_e}, n_r_aug={2 * n_r})")
    return 0


def cmd_synth_gen(args) -> int:
    store, vocab = generate_synthetic(args.n_entities, args.seed)
    out_dir = Path(args.out)
    save_triples(store, vocab, out_dir)
    vocab.dump(out_dir / "entities.tsv", out_dir / "relations.tsv")
    print(f"synthetic dataset with {vocab.n_entities} entities written to {out_dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tuckerkg",
        description="Tucker-decomposition link prediction on knowledge graphs",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--data", required=True,
                   help="dataset directory, or 'synth' for the built-in world")
    _add_hyper_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1,
                   help="evaluation parallelism")
    p.add_argument("--out", default="run_out", help="output directory")
    p.add_argument("--eval-every", type=int, default=0,
                   help="validate every N epochs (0: never)")
    p.add_argument("--synth-entities", type=int, default=DEFAULT_SYNTH_ENTITIES)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="evaluate a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="test", choices=["train", "valid", "test"])
    p.add_argument("--seed", type=int, default=0,
                   help="seed used to regenerate a synthetic world")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", help="directory for eval.csv (and ranks.csv)")
    p.add_argument("--rank-dump", action="store_true",
                   help="also write per-query ranks")
    p.add_argument("--synth-entities", type=int, default=DEFAULT_SYNTH_ENTITIES)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("verify", help="run self-verification suites")
    p.add_argument("--suite", action="append", choices=sorted(SUITES),
                   help="run only this suite (repeatable)")
    p.add_argument("--trials", type=int,
                   help="sampling trials per suite (suite defaults otherwise)")
    p.add_argument("--seed", type=int, dest="seed_opt",
                   help="override the per-suite default seeds")
    p.add_argument("--corrupt-core", action="store_true",
                   help="negative control: damage the structure under test")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("export-heatmap", help="dump one relation matrix as CSV")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--relation", required=True, help="relation name")
    p.add_argument("--reciprocal", action="store_true",
                   help="use the reciprocal direction of the relation")
    p.add_argument("--out", required=True, help="output CSV file")
    p.set_defaults(func=cmd_export_heatmap)

    p = sub.add_parser("param-count", help="parameter counts per model family")
    p.add_argument("--preset", choices=sorted(DATASET_STATS),
                   help="benchmark dataset sizes + published dimensions")
    p.add_argument("--model", default="tucker",
                   choices=["tucker", "distmult", "complex", "simple", "rescal"])
    p.add_argument("--n-entities", type=int)
    p.add_argument("--n-relations", type=int, help="raw relation count "
                   "(reciprocals are added automatically)")
    p.add_argument("--de", type=int)
    p.add_argument("--dr", type=int)
    p.add_argument("--dim", type=int,
                   help="native dimension for non-tucker families")
    p.set_defaults(func=cmd_param_count)

    p = sub.add_parser("synth-gen", help="write a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--n-entities", type=int, default=DEFAULT_SYNTH_ENTITIES)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth_gen)

    return parser


def main(argv=None) -> int:
    level = os.environ.get("TUCKER_LOG", "INFO").upper()
    logging.basicConfig(level=getattr(logging, level, logging.INFO),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (FileNotFoundError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
