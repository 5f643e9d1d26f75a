"""Command line entry point: ``rgat-absa <subcommand>``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from . import corpus, harness
from .reshape import reshape, to_dot


def read_config(path) -> dict:
    """``key = value`` lines; values are parsed as JSON when possible, else kept as strings."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        sep = "=" if "=" in line else ":" if ":" in line else None
        if sep is None:
            raise ValueError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split(sep, 1))
        try:
            out[key] = json.loads(value)
        except json.JSONDecodeError:
            out[key] = value
    return out


def _run_config(args) -> harness.RunConfig:
    d = read_config(args.config) if args.config else {}
    for key in ("embeddings", "seed", "epochs", "batch_size", "lr", "out"):
        value = getattr(args, key, None)
        if value is not None:
            d[key] = value
    d["train"] = args.dataset
    if args.test is not None:
        d["test"] = args.test
    for key in ("mode", "tree", "dropout"):
        value = getattr(args, key, None)
        if value is not None:
            d[key] = value
    return harness.RunConfig.from_dict(d)


def cmd_preprocess(args) -> None:
    raw = (corpus.load_semeval_xml(args.dataset) if args.format == "semeval"
           else corpus.load_twitter(args.dataset))
    if args.parses is None:
        n = corpus.export_sentences(raw, args.out)
        print(f"wrote {n} sentences for parsing to {args.out}; rerun with --parses <file.conllu>")
        return
    instances = corpus.build_instances(raw, corpus.load_conllu(args.parses))
    corpus.write_instances(args.out, instances)
    counts = {lab: sum(i.label == lab for i in instances) for lab in corpus.LABELS}
    print(f"wrote {len(instances)} instances to {args.out} {counts}")


def cmd_reshape(args) -> None:
    instances = corpus.read_instances(args.dataset)
    if args.dot:
        Path(args.dot).mkdir(parents=True, exist_ok=True)
    with open(args.out, "w", encoding="utf-8") as f:
        for inst in instances:
            tree = reshape(inst.parse, inst.aspect, args.n_max, args.mark_reverse)
            f.write(json.dumps(tree.to_json(inst.id), ensure_ascii=False) + "\n")
            if args.dot:
                name = inst.id.replace("/", "_").replace("#", "_")
                (Path(args.dot) / f"{name}.dot").write_text(to_dot(tree, inst.tokens), encoding="utf-8")
    print(f"wrote {len(instances)} trees to {args.out}")


def cmd_train(args) -> None:
    cfg = _run_config(args)
    res = harness.train(cfg)
    rep = res.best_report
    if rep is not None:
        print(f"best epoch {res.best_epoch}: accuracy {100 * rep.accuracy:.2f} macro-F1 {100 * rep.macro_f1:.2f}")
    print(f"checkpoint {res.checkpoint}")


def cmd_eval(args) -> None:
    report = harness.evaluate_checkpoint(args.checkpoint, corpus.read_instances(args.dataset))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(json.dumps(report.to_json(), indent=1) + "\n")
    (out / "report.txt").write_text(report.to_text())
    with open(out / "report.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["class", "precision", "recall", "f1"])
        for i, lab in enumerate(corpus.LABELS):
            w.writerow([lab, report.precision[i], report.recall[i], report.f1[i]])
        w.writerow(["accuracy", report.accuracy, "", ""])
        w.writerow(["macro_f1", report.macro_f1, "", ""])
    print(report.to_text(), end="")


def cmd_ablate(args) -> None:
    cfg = _run_config(args)
    seeds = [int(s) for s in args.seeds.split(",")] if args.seeds else None
    result = harness.ablate(cfg, seeds, save=args.save_checkpoints)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "ablation.csv").write_text(result.to_csv())
    (out / "ablation.txt").write_text(result.to_text())
    print(result.to_text(), end="")


def cmd_analyze_distance(args) -> None:
    model = harness.load_model(args.checkpoint)
    instances = corpus.read_instances(args.dataset)
    vectors = known = None
    if args.embeddings:
        vectors, known = corpus.load_embeddings(args.embeddings, model.vocab, return_known=True)
    edges = [float(x) for x in args.buckets.split(",")] if args.buckets else None
    result = harness.multi_aspect_analysis(model, instances, vectors, edges, known)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "distance_buckets.csv").write_text(result.to_csv())
    with open(out / "distance_aspects.csv", "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=["id", "distance", "bucket", "correct"])
        w.writeheader()
        w.writerows(result.rows)
    print(result.to_csv(), end="")


def cmd_export_errors(args) -> None:
    model = harness.load_model(args.checkpoint)
    errors = harness.export_errors(model, corpus.read_instances(args.dataset), args.k, args.seed)
    harness.write_jsonl(args.out, errors)
    print(f"wrote {len(errors)} misclassified instances to {args.out}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rgat-absa", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="XML/Twitter + CoNLL-U -> instance JSONL")
    p.add_argument("--dataset", required=True)
    p.add_argument("--format", choices=("semeval", "twitter"), default="semeval")
    p.add_argument("--parses", help="CoNLL-U file; omit to export sentences for parsing")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("reshape", help="instance JSONL -> aspect-oriented trees JSONL")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--n-max", type=int, default=4)
    p.add_argument("--mark-reverse", action="store_true")
    p.add_argument("--dot", help="directory for Graphviz files")
    p.set_defaults(func=cmd_reshape)

    for name, func, help_ in (("train", cmd_train, "train one model"),
                              ("ablate", cmd_ablate, "tree x method ablation table")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--dataset", required=True, help="training instances (JSONL)")
        p.add_argument("--test", help="evaluation instances (JSONL)")
        p.add_argument("--embeddings")
        p.add_argument("--mode", choices=("rgat", "gat_only", "rgat_no_ncon", "ordinary_graph"))
        p.add_argument("--tree", choices=("reshaped", "ordinary"))
        p.add_argument("--dropout", type=float)
        p.add_argument("--seed", type=int)
        p.add_argument("--epochs", type=int)
        p.add_argument("--batch-size", dest="batch_size", type=int)
        p.add_argument("--lr", type=float)
        p.add_argument("--config")
        p.add_argument("--out")
        p.set_defaults(func=func)
        if name == "ablate":
            p.add_argument("--seeds", help="comma-separated seeds")
            p.add_argument("--save-checkpoints", action="store_true")

    p = sub.add_parser("eval", help="score a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("analyze-distance", help="accuracy by nearest-aspect distance")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--embeddings", help="word vectors; defaults to the checkpoint's table")
    p.add_argument("--buckets", help="comma-separated bucket edges (default: quintiles)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_analyze_distance)

    p = sub.add_parser("export-errors", help="sample misclassified instances")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("-k", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_errors)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    args.func(args)
    return 0


if __name__ == "__main__":
    sys.exit(main())
