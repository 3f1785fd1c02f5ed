"""Command-line surface.

Subcommands: generate, train, eval, zeroshot, hubness, import-prototypes.
Every run writes a manifest (resolved config, input/output digests, seed,
timestamps) into its output directory.  Exit codes: 0 ok, 2 config/input
error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import data, geometry, heads, hubness, training
from .errors import ContractError, NumericalError, ParameterError
from .manifest import RunManifest

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _ensure_dir(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path


def cmd_generate(args) -> int:
    out_dir = _ensure_dir(os.path.dirname(os.path.abspath(args.out)) or ".")
    params = {
        "num_features": args.n_features,
        "num_super": args.super,
        "num_classes": args.classes,
        "num_samples": args.samples,
        "sigma_super": args.sigma_super,
        "sigma_leaf": args.sigma_leaf,
        "sigma_x": args.sigma_x,
        "background_fraction": args.background_fraction,
        "train_fraction": args.train_fraction,
        "seed": args.seed,
    }
    unseen = [u for u in (args.unseen or "").split(",") if u]
    manifest = RunManifest(
        os.path.join(out_dir, "manifest.json"),
        command="generate",
        config={**params, "unseen": unseen, "imbalance_exponent": args.imbalance_exponent},
        seed=args.seed,
    )
    ds = data.generate(**params)
    if args.imbalance_exponent is not None:
        ds = data.imbalance_profile(ds, args.imbalance_exponent)
    if unseen:
        ds, _ = data.holdout_unseen(ds, unseen)
    ds.save(args.out)
    manifest.finalize([args.out])

    counts = ds.class_counts("train")
    print(f"wrote {args.out}: {ds.features.shape[0]} samples, {ds.num_classes} classes")
    for c, name in enumerate(ds.tree.leaf_classes):
        bucket = ds.buckets.get(name, "-")
        flag = " (unseen)" if c in ds.unseen_classes else ""
        print(f"  {name}: train={counts[c]} bucket={bucket}{flag}")
    n_bg = int(np.sum(ds.labels == heads.BACKGROUND))
    print(f"  background: {n_bg}")
    return EXIT_OK


def cmd_train(args) -> int:
    out_dir = _ensure_dir(args.out)
    config = training.ExperimentConfig.load(args.config)
    if args.head:
        config.head_mode = args.head
    ds = data.SyntheticDataset.load(args.dataset)
    inputs = [args.config, args.dataset] + ([args.resume] if args.resume else [])
    manifest = RunManifest(
        os.path.join(out_dir, "manifest.json"),
        command="train", config=config.to_dict(), seed=config.seed, input_paths=inputs,
    )
    bank, encoder, report, ckpts = training.train(
        config, ds, out_dir=out_dir, resume=args.resume
    )
    outputs = list(ckpts) + [os.path.join(out_dir, "metrics.json"),
                             os.path.join(out_dir, "metrics.csv")]
    manifest.finalize(outputs)
    print(f"final train loss {report.train_loss[-1]:.6f}")
    print(f"val accuracy {report.val_accuracy:.4f}  "
          f"supercategory accuracy {report.supercategory_accuracy:.4f}")
    return EXIT_OK


def cmd_eval(args) -> int:
    config, _, encoder, bank, _, _, _ = training.load_checkpoint(args.checkpoint)
    ds = data.SyntheticDataset.load(args.dataset)
    report = training.evaluate_split(bank, encoder, ds, args.split, tau=config.cosine_tau)
    if args.out:
        _ensure_dir(os.path.dirname(os.path.abspath(args.out)) or ".")
        report.save(args.out)
    print(json.dumps({k: v for k, v in report.to_dict().items() if k != "per_class"},
                     sort_keys=True))
    return EXIT_OK


def cmd_zeroshot(args) -> int:
    out_dir = _ensure_dir(args.out)
    config = training.ExperimentConfig.load(args.config)
    ds = data.SyntheticDataset.load(args.dataset)
    bank = heads.PrototypeBank.load(args.prototypes)
    if not config.unseen_classes and ds.unseen_classes:
        config.unseen_classes = list(ds.unseen_classes)
    manifest = RunManifest(
        os.path.join(out_dir, "manifest.json"),
        command="zeroshot", config=config.to_dict(), seed=config.seed,
        input_paths=[args.config, args.dataset, args.prototypes],
    )
    _, _, report, ckpts = training.zero_shot_eval(config, ds, bank, out_dir=out_dir)
    manifest.finalize(list(ckpts) + [os.path.join(out_dir, "metrics.json"),
                                     os.path.join(out_dir, "metrics.csv")])
    print(f"seen accuracy {report.seen_accuracy}  unseen accuracy {report.unseen_accuracy}  "
          f"HM {report.harmonic_mean}")
    return EXIT_OK


def cmd_hubness(args) -> int:
    out_dir = _ensure_dir(args.out)
    rows = []
    outputs = []
    manifest = RunManifest(
        os.path.join(out_dir, "manifest.json"),
        command="hubness", config={"k": args.k, "checkpoints": args.checkpoints},
        seed=None, input_paths=args.checkpoints,
    )
    for ckpt in args.checkpoints:
        _, _, _, bank, _, _, _ = training.load_checkpoint(ckpt)
        report = hubness.hubness_report(bank, k=args.k)
        stem = os.path.splitext(os.path.basename(ckpt))[0]
        path = os.path.join(out_dir, f"hubness_{stem}_{report.kind}.json")
        report.save(path)
        outputs += [path, path[:-5] + ".csv"]
        rows.append((ckpt, report.kind, report.k_occurrence.skewness))
    manifest.finalize(outputs)
    print(f"{'checkpoint':<40} {'distance':<12} k_skewness")
    for ckpt, kind, skew in rows:
        print(f"{ckpt:<40} {kind:<12} {skew:+.4f}")
    return EXIT_OK


def _parse_embedding_file(path):
    names, rows = [], []
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            parts = line.split()
            if not parts:
                continue
            name, vals = parts[0], parts[1:]
            if name in names:
                raise ParameterError(f"duplicate class name {name!r} (line {lineno})")
            if rows and len(vals) != len(rows[0]):
                raise ParameterError(f"ragged row at line {lineno}")
            if not vals:
                raise ParameterError(f"empty vector at line {lineno}")
            names.append(name)
            rows.append([float(v) for v in vals])
    if len(names) < 2:
        raise ParameterError("need at least 2 classes")
    return names, np.asarray(rows, dtype=np.float64)


def cmd_import_prototypes(args) -> int:
    out_dir = _ensure_dir(os.path.dirname(os.path.abspath(args.out)) or ".")
    manifest = RunManifest(
        os.path.join(out_dir, "manifest.json"),
        command="import-prototypes",
        config={"embeddings": args.embeddings, "mode": args.mode, "delta": args.delta,
                "already_hyperbolic": args.already_hyperbolic},
        seed=None, input_paths=[args.embeddings],
    )
    names, vectors = _parse_embedding_file(args.embeddings)
    if args.mode == heads.MODE_HYPERBOLIC:
        if args.already_hyperbolic:
            protos = vectors  # (n+1)-coordinates, validated by the bank
        else:
            protos = geometry.batch_exp_map_origin(vectors)
    else:
        if args.already_hyperbolic:
            raise ParameterError("--already-hyperbolic only applies to hyperbolic mode")
        protos = vectors
    bank = heads.PrototypeBank(
        mode=args.mode, prototypes=protos, class_names=names,
        delta=args.delta, frozen=True,
    )
    bank.save(args.out)
    manifest.finalize([args.out])
    print(f"wrote {args.out}: {bank.num_classes} classes, d_min={bank.d_min:.6f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="lorentzheads",
        description="Hyperbolic classification-head experiments on synthetic hierarchical data",
    )
    sub = p.add_subparsers(dest="cmd", required=True)

    g = sub.add_parser("generate", help="generate a synthetic hierarchical dataset")
    g.add_argument("--out", required=True)
    g.add_argument("--n-features", type=int, default=16)
    g.add_argument("--super", type=int, default=4)
    g.add_argument("--classes", type=int, default=16)
    g.add_argument("--samples", type=int, default=8000)
    g.add_argument("--sigma-super", type=float, default=4.0)
    g.add_argument("--sigma-leaf", type=float, default=1.0)
    g.add_argument("--sigma-x", type=float, default=0.5)
    g.add_argument("--background-fraction", type=float, default=0.2)
    g.add_argument("--train-fraction", type=float, default=0.8)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--unseen", help="comma-separated leaf names held out of the train split")
    g.add_argument("--imbalance-exponent", type=float)
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="train a classification head")
    t.add_argument("--config", required=True)
    t.add_argument("--dataset", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--head", choices=[heads.MODE_HYPERBOLIC, heads.MODE_LINEAR,
                                      heads.MODE_COSINE])
    t.add_argument("--resume", help="checkpoint to continue from")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint on a dataset split")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--dataset", required=True)
    e.add_argument("--split", choices=["train", "val"], default="val")
    e.add_argument("--out")
    e.set_defaults(func=cmd_eval)

    z = sub.add_parser("zeroshot", help="train against frozen prototypes and report seen/unseen")
    z.add_argument("--config", required=True)
    z.add_argument("--dataset", required=True)
    z.add_argument("--prototypes", required=True)
    z.add_argument("--out", required=True)
    z.set_defaults(func=cmd_zeroshot)

    h = sub.add_parser("hubness", help="pairwise-distance histogram and k-occurrence skewness")
    h.add_argument("checkpoints", nargs="+")
    h.add_argument("--k", type=int, default=hubness.DEFAULT_K)
    h.add_argument("--out", required=True)
    h.set_defaults(func=cmd_hubness)

    i = sub.add_parser("import-prototypes", help="build a frozen bank from semantic embeddings")
    i.add_argument("--embeddings", required=True,
                   help="text file, one line per class: name v1 v2 ... vn")
    i.add_argument("--mode", choices=[heads.MODE_HYPERBOLIC, heads.MODE_LINEAR,
                                      heads.MODE_COSINE], default=heads.MODE_HYPERBOLIC)
    i.add_argument("--delta", type=float, default=heads.DEFAULT_DELTA)
    i.add_argument("--already-hyperbolic", action="store_true",
                   help="embedding rows are (n+1)-coordinate hyperboloid points")
    i.add_argument("--out", required=True)
    i.set_defaults(func=cmd_import_prototypes)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ParameterError, ContractError, FileNotFoundError, json.JSONDecodeError,
            KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
