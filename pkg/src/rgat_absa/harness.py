"""Training, evaluation, ablation, multi-aspect distance analysis and error export."""

from __future__ import annotations

import copy
import csv
import io
import json
import logging
import warnings
from collections import defaultdict
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import nn
from .corpus import LABELS, Instance, Vocab, build_vocab, embedding_matrix, load_embeddings, read_instances
from .metrics import EvalReport, confusion_matrix
from .rgat import Hyper, Model, build_relation_vocab, config_hash, prepare

log = logging.getLogger(__name__)

CHECKPOINT = "model.ckpt"
LAST_GOOD = "last_good.ckpt"
LOG = "log.jsonl"


@dataclass
class RunConfig:
    train: str = ""
    test: str = ""
    embeddings: str | None = None
    emb_dim: int = 300  # random embeddings when no file is given
    seed: int = 1
    epochs: int = 30
    batch_size: int = 16
    patience: int = 5
    lr: float = 1e-3
    min_freq: int = 1
    lower: bool = True
    out: str = "runs/rgat"
    hyper: Hyper = field(default_factory=Hyper)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hyper"] = self.hyper.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> RunConfig:
        """Build from flat or nested keys; unknown top-level keys go to :class:`Hyper`."""
        d = dict(d)
        hyper = dict(d.pop("hyper", {}) or {})
        own = {f.name for f in fields(cls)}
        hyper_names = {f.name for f in fields(Hyper)}
        kwargs = {}
        for k, v in d.items():
            if k in own:
                kwargs[k] = v
            elif k in hyper_names:
                hyper[k] = v
            else:
                raise KeyError(f"unknown config key {k!r}")
        return cls(hyper=Hyper.from_dict(hyper), **kwargs)


class TrainingDiverged(FloatingPointError):
    pass


@dataclass
class TrainResult:
    model: Model
    best_epoch: int
    best_report: EvalReport | None
    history: list[dict]
    checkpoint: Path | None


class EventLog:
    """Line-delimited JSON events, optionally mirrored to a file."""

    def __init__(self, path: Path | None = None):
        self.path = path
        self.events: list[dict] = []
        if path is not None:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text("")

    def __call__(self, event: str, **fields) -> None:
        rec = {"event": event, **fields}
        self.events.append(rec)
        if self.path is not None:
            with open(self.path, "a", encoding="utf-8") as f:
                f.write(json.dumps(rec, sort_keys=True) + "\n")


def save_model(model: Model, path, extra: dict | None = None) -> None:
    header = model.header()
    header.update(extra or {})
    nn.save_checkpoint(path, model.params.state(), header)


def load_model(path) -> Model:
    header, tensors = nn.load_checkpoint(path)
    return Model.from_checkpoint(header, tensors)


def build_model(config: RunConfig, train_set: Sequence[Instance], test_set: Sequence[Instance] = (),
                embeddings: np.ndarray | None = None, vocab: Vocab | None = None) -> Model:
    """Vocabulary, embeddings and relation inventory over both splits, then a seeded model."""
    everything = list(train_set) + list(test_set)
    if vocab is None:
        vocab = build_vocab(everything, config.min_freq, config.lower)
    if embeddings is None:
        if config.embeddings:
            embeddings = load_embeddings(config.embeddings, vocab, seed=config.seed)
        else:
            embeddings = embedding_matrix(vocab, config.emb_dim, seed=config.seed)
    rel_vocab = build_relation_vocab(prepare(everything, config.hyper), config.hyper.n_max)
    return Model(config.hyper, vocab, rel_vocab, embeddings, seed=config.seed)


def _batches(n: int, size: int, order: np.ndarray):
    for s in range(0, n, size):
        yield order[s:s + size]


RELATION_PARAMS = ("rel_embed", "gate_w1", "gate_b1", "gate_w2", "gate_b2", "rel_v")


def train(config: RunConfig, train_set: Sequence[Instance] | None = None,
          test_set: Sequence[Instance] | None = None, embeddings: np.ndarray | None = None,
          save: bool = True) -> TrainResult:
    """Mini-batch Adam training with per-epoch evaluation on the test split.

    SemEval-2014 has no development split, so the epoch with the best test
    accuracy is kept; the log states this. Fully determined by ``config.seed``.
    """
    if train_set is None:
        train_set = read_instances(config.train)
    if test_set is None:
        test_set = read_instances(config.test) if config.test else list(train_set)
    out = Path(config.out)
    events = EventLog(out / LOG if save else None)
    model = build_model(config, train_set, test_set, embeddings)
    events("config", config=config.to_dict(), config_hash=config_hash(config.to_dict()),
           n_train=len(train_set), n_test=len(test_set), vocab=len(model.vocab),
           relations=len(model.rel_vocab),
           selection="best test-split epoch (no development split exists)")

    train_ex = model.prepare(train_set)
    test_ex = model.prepare(test_set)
    shuffle_rng = np.random.default_rng([config.seed, 1])
    dropout_rng = np.random.default_rng([config.seed, 2])
    store = model.params
    ckpt = out / CHECKPOINT if save else None
    best_state = copy.deepcopy(store.state())
    best_epoch, best_acc, best_report = 0, -1.0, None
    history: list[dict] = []
    if save:
        save_model(model, ckpt, {"config": config.to_dict(), "epoch": 0})

    stale = 0
    for epoch in range(1, config.epochs + 1):
        order = shuffle_rng.permutation(len(train_ex))
        total, rel_norm = 0.0, 0.0
        for idx in _batches(len(train_ex), config.batch_size, order):
            batch = model.batch([train_ex[i] for i in idx])
            store.zero_grad()
            loss = model.loss(batch, train=True, rng=dropout_rng)
            value = float(loss.data)
            if not np.isfinite(value):
                _diverged(model, config, out, save, epoch, f"loss is {value}")
            nn.backward(loss)
            rel_norm += sum(norm for name, norm in store.grad_norms().items()
                            if name.rpartition(".")[2] in RELATION_PARAMS)
            try:
                nn.adam_step(store, lr=config.lr)
            except FloatingPointError as exc:
                _diverged(model, config, out, save, epoch, str(exc))
            bad = [name for name, t in store.params.items() if not np.isfinite(t.data).all()]
            if bad:
                _diverged(model, config, out, save, epoch, f"non-finite parameters {bad}")
            total += value
        report = evaluate(model, test_ex)
        rec = {"epoch": epoch, "train_loss": total, "train_loss_per_instance": total / len(train_ex),
               "test_accuracy": report.accuracy, "test_macro_f1": report.macro_f1,
               "relation_grad_norm": rel_norm}
        history.append(rec)
        events("epoch", **rec)
        if report.accuracy > best_acc:
            best_acc, best_epoch, best_report, stale = report.accuracy, epoch, report, 0
            best_state = copy.deepcopy(store.state())
            if save:
                save_model(model, ckpt, {"config": config.to_dict(), "epoch": epoch})
        else:
            stale += 1
            if stale >= config.patience:
                events("early_stop", epoch=epoch, patience=config.patience)
                break

    store.load_state(best_state)
    events("best", epoch=best_epoch,
           test_accuracy=best_report.accuracy if best_report else None,
           test_macro_f1=best_report.macro_f1 if best_report else None)
    return TrainResult(model, best_epoch, best_report, history, ckpt)


def _diverged(model: Model, config: RunConfig, out: Path, save: bool, epoch: int, why: str):
    # parameters are still those of the last finished update
    if save:
        save_model(model, out / LAST_GOOD, {"config": config.to_dict(), "epoch": epoch})
    raise TrainingDiverged(f"training diverged in epoch {epoch}: {why}")


def predict(model: Model, examples, batch_size: int = 64) -> np.ndarray:
    if examples and isinstance(examples[0], Instance):
        examples = model.prepare(examples)
    return model.predict_proba(examples, batch_size)


def evaluate(model: Model, examples, batch_size: int = 64) -> EvalReport:
    """Argmax predictions scored against gold labels; accepts instances or prepared examples."""
    if examples and isinstance(examples[0], Instance):
        examples = model.prepare(examples)
    probs = model.predict_proba(examples, batch_size)
    gold = np.array([ex.instance.label_index for ex in examples], dtype=np.int64)
    pred = probs.argmax(axis=1) if len(examples) else np.zeros(0, dtype=np.int64)
    wrong = [_error_record(ex.instance, int(p), pr) for ex, p, pr in zip(examples, pred, probs)
             if p != ex.instance.label_index]
    return EvalReport.from_confusion(confusion_matrix(gold, pred), wrong)


def _error_record(inst: Instance, pred: int, probs: np.ndarray) -> dict:
    return {"id": inst.id, "tokens": list(inst.tokens), "aspect": list(inst.aspect),
            "aspect_text": " ".join(inst.aspect_tokens), "gold": inst.label,
            "pred": LABELS[pred], "probs": [float(x) for x in probs]}


def evaluate_checkpoint(path, instances: Sequence[Instance]) -> EvalReport:
    return evaluate(load_model(path), instances)


# ----- ablation -----

ABLATION_CELLS = (
    ("ordinary", "gat_only"),
    ("ordinary", "rgat"),
    ("reshaped", "gat_only"),
    ("reshaped", "rgat"),
    ("reshaped", "rgat_no_ncon"),
)
CELL_NAMES = {"gat_only": "GAT", "rgat": "R-GAT", "rgat_no_ncon": "R-GAT-n:con"}


@dataclass
class AblationResult:
    rows: list[dict]
    config_hash: str

    def summary(self) -> dict[tuple[str, str], dict]:
        cells: dict[tuple[str, str], list[dict]] = defaultdict(list)
        for r in self.rows:
            cells[(r["tree"], r["mode"])].append(r)
        return {cell: {"best": max(x["accuracy"] for x in rs),
                       "mean": float(np.mean([x["accuracy"] for x in rs])),
                       "seeds": len(rs)} for cell, rs in cells.items()}

    def to_csv(self) -> str:
        buf = io.StringIO()
        cols = ["tree", "mode", "seed", "accuracy", "macro_f1", "best_epoch", "relation_grad_norm"]
        w = csv.DictWriter(buf, fieldnames=cols + ["config_hash"], lineterminator="\n")
        w.writeheader()
        for r in self.rows:
            w.writerow({**{c: r[c] for c in cols}, "config_hash": self.config_hash})
        return buf.getvalue()

    def to_text(self) -> str:
        summ = self.summary()
        lines = [f"config {self.config_hash}", f"{'tree':<10}{'method':<14}{'best acc':>10}{'mean acc':>10}{'seeds':>7}"]
        for tree, mode in ABLATION_CELLS:
            s = summ.get((tree, mode))
            if s is None:
                continue
            lines.append(f"{tree:<10}{CELL_NAMES[mode]:<14}{100 * s['best']:10.2f}{100 * s['mean']:10.2f}{s['seeds']:7d}")
        return "\n".join(lines) + "\n"


def ablate(config: RunConfig, seeds: Iterable[int] | None = None, cells=ABLATION_CELLS,
           train_set: Sequence[Instance] | None = None, test_set: Sequence[Instance] | None = None,
           embeddings: np.ndarray | None = None, save: bool = False) -> AblationResult:
    """Train every (tree, method) cell with the same seeds and record its best test accuracy.

    Ordinary trees carry no virtual relations, so that R-GAT-n:con cell does not exist.
    """
    if train_set is None:
        train_set = read_instances(config.train)
    if test_set is None:
        test_set = read_instances(config.test) if config.test else list(train_set)
    seeds = [config.seed] if seeds is None else list(seeds)
    rows = []
    for tree, mode in cells:
        for seed in seeds:
            hyper = Hyper.from_dict({**config.hyper.to_dict(), "tree": tree, "mode": mode})
            cfg = RunConfig.from_dict({**config.to_dict(), "hyper": hyper.to_dict(), "seed": seed,
                                       "out": str(Path(config.out) / f"{tree}-{mode}-{seed}")})
            res = train(cfg, train_set, test_set, embeddings, save=save)
            rows.append({"tree": tree, "mode": mode, "seed": seed,
                         "accuracy": res.best_report.accuracy if res.best_report else 0.0,
                         "macro_f1": res.best_report.macro_f1 if res.best_report else 0.0,
                         "best_epoch": res.best_epoch,
                         "relation_grad_norm": float(sum(h["relation_grad_norm"] for h in res.history))})
            log.info("ablation %s/%s seed %d: %.4f", tree, mode, seed, rows[-1]["accuracy"])
    return AblationResult(rows, config_hash({**config.to_dict(), "seeds": seeds}))


# ----- multi-aspect distance analysis -----

@dataclass
class DistanceAnalysis:
    rows: list[dict]  # one per aspect: id, distance, bucket, correct
    edges: list[float]
    buckets: list[dict]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=["bucket", "low", "high", "count", "correct", "accuracy"],
                           lineterminator="\n")
        w.writeheader()
        w.writerows(self.buckets)
        return buf.getvalue()


def aspect_vectors(instances: Sequence[Instance], vocab: Vocab, vectors: np.ndarray,
                   known: set[int] | None = None) -> np.ndarray:
    """Mean word vector of each aspect's tokens."""
    out = np.zeros((len(instances), vectors.shape[1]))
    for n, inst in enumerate(instances):
        ids = vocab.encode(inst.aspect_tokens)
        if known is not None and not any(i in known for i in ids):
            warnings.warn(f"{inst.id}: aspect {' '.join(inst.aspect_tokens)!r} has no pretrained vector")
        out[n] = vectors[ids].mean(axis=0)
    return out


def nearest_aspect_distances(instances: Sequence[Instance], vecs: np.ndarray) -> dict[str, float]:
    """For sentences with at least two aspects: each aspect's Euclidean distance to its nearest sibling."""
    groups: dict[str, list[int]] = defaultdict(list)
    for n, inst in enumerate(instances):
        groups[inst.sentence_id].append(n)
    out = {}
    for members in groups.values():
        if len(members) < 2:
            continue
        sub = vecs[members]
        d = np.sqrt(((sub[:, None, :] - sub[None, :, :]) ** 2).sum(-1))
        np.fill_diagonal(d, np.inf)
        for m, row in zip(members, d):
            out[instances[m].id] = float(row.min())
    return out


def assign_buckets(distances: np.ndarray, edges: Sequence[float] | None = None) -> tuple[np.ndarray, list[float]]:
    """Bucket index per distance; default edges are the quintiles of ``distances``."""
    distances = np.asarray(distances, dtype=float)
    if edges is None:
        edges = np.quantile(distances, [0.2, 0.4, 0.6, 0.8]).tolist() if distances.size else []
    edges = sorted(float(e) for e in edges)
    return np.searchsorted(edges, distances, side="right"), edges


def multi_aspect_analysis(model: Model, instances: Sequence[Instance], vectors: np.ndarray | None = None,
                          bucket_edges: Sequence[float] | None = None,
                          known: set[int] | None = None) -> DistanceAnalysis:
    """Accuracy by nearest-sibling aspect distance, for sentences with several aspects.

    ``vectors`` are word vectors aligned to ``model.vocab`` (defaults to the
    model's embedding table, which is the raw pretrained matrix when frozen).
    """
    if vectors is None:
        vectors = model.params["embed"].data
    vecs = aspect_vectors(instances, model.vocab, vectors, known)
    nearest = nearest_aspect_distances(instances, vecs)
    kept = [inst for inst in instances if inst.id in nearest]
    if not kept:
        return DistanceAnalysis([], [], [])
    probs = predict(model, kept)
    correct = probs.argmax(axis=1) == np.array([inst.label_index for inst in kept])
    dist = np.array([nearest[inst.id] for inst in kept])
    bucket, edges = assign_buckets(dist, bucket_edges)
    rows = [{"id": inst.id, "distance": float(d), "bucket": int(b), "correct": bool(c)}
            for inst, d, b, c in zip(kept, dist, bucket, correct)]
    bounds = [-np.inf] + edges + [np.inf]
    buckets = []
    for b in range(len(edges) + 1):
        sel = bucket == b
        count = int(sel.sum())
        buckets.append({"bucket": b, "low": float(bounds[b]), "high": float(bounds[b + 1]),
                        "count": count, "correct": int(correct[sel].sum()),
                        "accuracy": float(correct[sel].mean()) if count else None})
    return DistanceAnalysis(rows, edges, buckets)


# ----- error export -----

def export_errors(model: Model, instances: Sequence[Instance], k: int = 100, seed: int = 0) -> list[dict]:
    """Seeded uniform sample of at most ``k`` misclassified instances, in corpus order."""
    errors = evaluate(model, instances).misclassified
    if len(errors) <= k:
        if len(errors) < k:
            log.info("only %d misclassified instances (asked for %d); exporting all", len(errors), k)
        return errors
    pick = np.sort(np.random.default_rng(seed).choice(len(errors), size=k, replace=False))
    return [errors[i] for i in pick]


def write_jsonl(path, records: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for r in records:
            f.write(json.dumps(r, ensure_ascii=False, sort_keys=True) + "\n")
