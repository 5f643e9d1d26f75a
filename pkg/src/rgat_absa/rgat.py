"""Relational graph attention network over aspect-rooted graphs.

Node 0 of every graph is the aspect root; node ``t`` (1-based) is sentence
token ``t``. Every node carries a self-loop labelled ``self``. Batches are
dense: an (N, N) neighbour mask and relation-index matrix per instance.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, fields
from typing import Iterable, Sequence

import numpy as np

from . import nn
from .corpus import LABELS, Instance, Vocab
from .nn import Tensor
from .reshape import SELF, RelationVocab, is_virtual, reshape, to_ordinary_graph

MODES = ("rgat", "gat_only", "rgat_no_ncon")
TREES = ("reshaped", "ordinary")

# Set by the test suite: assert attention rows sum to 1 and gates lie in (0, 1).
CHECK_NORMALIZATION = False
NORM_TOL = 1e-10
PROB_TOL = 1e-12


def _tol(tol: float, dtype) -> float:
    # float64 tolerances; reduced-precision runs get a few ulps instead
    return max(tol, 64 * float(np.finfo(dtype).eps))


@dataclass
class Hyper:
    layers: int = 2
    att_heads: int = 6
    rel_heads: int = 6
    hidden: int = 300
    head_dim: int = 0  # 0: hidden // (att_heads + rel_heads)
    gate_dim: int = 64
    rel_dim: int = 300
    dropout: float = 0.7
    n_max: int = 4
    mode: str = "rgat"
    tree: str = "reshaped"
    mark_reverse: bool = False
    freeze_embeddings: bool = True
    dtype: str = "float64"

    def __post_init__(self):
        if self.mode == "ordinary_graph":
            self.mode, self.tree = "rgat", "ordinary"
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.tree not in TREES:
            raise ValueError(f"tree must be one of {TREES}, got {self.tree!r}")
        if self.layers < 1 or self.att_heads < 1 or self.rel_heads < 1:
            raise ValueError("layers and head counts must be >= 1")
        if self.hidden % 2:
            raise ValueError("hidden must be even (two LSTM directions)")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if self.head_dim <= 0:
            self.head_dim = max(1, self.hidden // (self.att_heads + self.rel_heads))

    @property
    def uses_relations(self) -> bool:
        return self.mode != "gat_only"

    @property
    def concat_dim(self) -> int:
        heads = self.att_heads + (self.rel_heads if self.uses_relations else 0)
        return heads * self.head_dim

    @classmethod
    def from_dict(cls, d: dict) -> Hyper:
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})

    def to_dict(self) -> dict:
        return asdict(self)


# ----- graphs -----

def graph_edges(inst: Instance, hyper: Hyper) -> list[tuple[int, int, str]]:
    """Undirected labelled edges ``(u, v, label)`` between graph nodes, self-loops excluded."""
    i, k = inst.aspect
    if hyper.tree == "reshaped":
        tree = reshape(inst.parse, inst.aspect, hyper.n_max, hyper.mark_reverse)
        return [(0, j, lab) for j, lab, _ in tree.children
                if not (hyper.mode == "rgat_no_ncon" and is_virtual(lab))]
    # ordinary tree with the aspect words merged into the root node
    edges, seen = [], set()
    for d, h, lab in to_ordinary_graph(inst.parse).edges:
        u = 0 if i <= d <= k else d
        v = 0 if i <= h <= k else h
        if u == v or frozenset((u, v)) in seen:
            continue
        seen.add(frozenset((u, v)))
        edges.append((u, v, lab))
    return edges


@dataclass
class Example:
    instance: Instance
    edges: list[tuple[int, int, str]]


def prepare(instances: Iterable[Instance], hyper: Hyper) -> list[Example]:
    return [Example(inst, graph_edges(inst, hyper)) for inst in instances]


def build_relation_vocab(examples: Iterable[Example], n_max: int) -> RelationVocab:
    return RelationVocab({lab for ex in examples for _, _, lab in ex.edges}, n_max)


@dataclass
class GraphBatch:
    word_ids: np.ndarray  # (B, T)
    lengths: np.ndarray  # (B,)
    aspect_ids: np.ndarray  # (B, A)
    aspect_lengths: np.ndarray  # (B,)
    adjacency: np.ndarray  # (B, N, N) bool, N = T + 1
    relations: np.ndarray  # (B, N, N) int, valid where adjacency
    labels: np.ndarray  # (B,)
    ids: list[str]

    def __len__(self) -> int:
        return len(self.ids)


def collate(examples: Sequence[Example], vocab: Vocab, rel_vocab: RelationVocab) -> GraphBatch:
    B = len(examples)
    T = max(len(ex.instance.tokens) for ex in examples)
    A = max(ex.instance.aspect[1] - ex.instance.aspect[0] + 1 for ex in examples)
    N = T + 1
    word_ids = np.zeros((B, T), dtype=np.int64)
    aspect_ids = np.zeros((B, A), dtype=np.int64)
    lengths = np.zeros(B, dtype=np.int64)
    aspect_lengths = np.zeros(B, dtype=np.int64)
    adjacency = np.zeros((B, N, N), dtype=bool)
    relations = np.full((B, N, N), rel_vocab[SELF], dtype=np.int64)
    diag = np.arange(N)
    adjacency[:, diag, diag] = True
    for b, ex in enumerate(examples):
        inst = ex.instance
        ids = vocab.encode(inst.tokens)
        word_ids[b, :len(ids)] = ids
        lengths[b] = len(ids)
        asp = vocab.encode(inst.aspect_tokens)
        aspect_ids[b, :len(asp)] = asp
        aspect_lengths[b] = len(asp)
        for u, v, lab in ex.edges:
            try:
                r = rel_vocab[lab]
            except KeyError:
                raise KeyError(f"{inst.id}: relation {lab!r} was not seen when the model was built") from None
            adjacency[b, u, v] = adjacency[b, v, u] = True
            relations[b, u, v] = relations[b, v, u] = r
    labels = np.array([ex.instance.label_index for ex in examples], dtype=np.int64)
    return GraphBatch(word_ids, lengths, aspect_ids, aspect_lengths, adjacency, relations,
                      labels, [ex.instance.id for ex in examples])


# ----- parameters -----

def param_spec(hyper: Hyper, n_words: int, emb_dim: int, n_rel: int) -> dict[str, tuple]:
    """Shapes and initializers of every trainable tensor, in draw order."""
    H = hyper.hidden // 2
    K, M, dh = hyper.att_heads, hyper.rel_heads, hyper.head_dim
    spec: dict[str, tuple] = {"rel_embed": ((n_rel, hyper.rel_dim), "xavier")}
    for enc in ("sent_lstm", "asp_lstm"):
        for d in ("fw", "bw"):
            spec[f"{enc}.{d}_W"] = ((emb_dim, 4 * H), "xavier")
            spec[f"{enc}.{d}_U"] = ((H, 4 * H), "xavier")
            spec[f"{enc}.{d}_b"] = ((4 * H,), "zeros")
    for l in range(hyper.layers):
        p = f"layer{l}."
        spec[p + "att_q"] = ((hyper.hidden, K * dh), "xavier")
        spec[p + "att_k"] = ((hyper.hidden, K * dh), "xavier")
        spec[p + "att_v"] = ((hyper.hidden, K * dh), "xavier")
        spec[p + "gate_w1"] = ((M, hyper.rel_dim, hyper.gate_dim), "xavier")
        spec[p + "gate_b1"] = ((M, hyper.gate_dim), "zeros")
        spec[p + "gate_w2"] = ((M, hyper.gate_dim, 1), "xavier")
        spec[p + "gate_b2"] = ((M,), "zeros")
        spec[p + "rel_v"] = ((hyper.hidden, M * dh), "xavier")
        spec[p + "out_w"] = ((hyper.concat_dim, hyper.hidden), "xavier")
        spec[p + "out_b"] = ((hyper.hidden,), "zeros")
    spec["cls_w"] = ((hyper.hidden, len(LABELS)), "xavier")
    spec["cls_b"] = ((len(LABELS),), "zeros")
    return spec


# ----- heads and layers -----

def _check_rows(p: np.ndarray, what: str) -> None:
    err = np.abs(p.sum(axis=-1) - 1.0).max()
    if err > _tol(NORM_TOL, p.dtype):
        raise AssertionError(f"{what} rows sum to 1 only within {err:.3g}")


def _split_heads(x: Tensor, heads: int) -> Tensor:
    B, N, D = x.shape
    return nn.transpose(nn.reshape(x, (B, N, heads, D // heads)), (0, 2, 1, 3))


def _merge_heads(x: Tensor) -> Tensor:
    B, Hh, N, dh = x.shape
    return nn.reshape(nn.transpose(x, (0, 2, 1, 3)), (B, N, Hh * dh))


def attention_weights(h: Tensor, adjacency: np.ndarray, Wq: Tensor, Wk: Tensor, heads: int) -> Tensor:
    """Scaled dot-product attention over neighbours, (B, K, N, N)."""
    q = _split_heads(h @ Wq, heads)
    k = _split_heads(h @ Wk, heads)
    dh = q.shape[-1]
    scores = nn.matmul(q, nn.transpose(k, (0, 1, 3, 2))) * (1.0 / np.sqrt(dh))
    alpha = nn.softmax(scores, mask=adjacency[:, None])
    if CHECK_NORMALIZATION:
        _check_rows(alpha.data, "attention")
    return alpha


def attentional_heads(h: Tensor, adjacency: np.ndarray, params, layer: int, heads: int,
                      trace: dict | None = None) -> Tensor:
    """All attentional heads of one layer, concatenated to (B, N, K * head_dim)."""
    p = f"layer{layer}."
    alpha = attention_weights(h, adjacency, params[p + "att_q"], params[p + "att_k"], heads)
    if trace is not None:
        trace.setdefault("alpha", []).append(alpha.data)
    v = _split_heads(h @ params[p + "att_v"], heads)
    return _merge_heads(nn.matmul(alpha, v))


def attentional_head(h: Tensor, adjacency: np.ndarray, params, layer: int, head: int, heads: int) -> Tensor:
    """Output of a single attentional head, (B, N, head_dim)."""
    out = attentional_heads(h, adjacency, params, layer, heads)
    dh = out.shape[-1] // heads
    return out[:, :, head * dh:(head + 1) * dh]


def relation_gates(rel_embed: Tensor, params, layer: int) -> Tensor:
    """Gate value of every relation type for every relational head, (R, M)."""
    p = f"layer{layer}."
    hidden = nn.relu(nn.matmul(rel_embed, params[p + "gate_w1"])
                     + nn.reshape(params[p + "gate_b1"], (-1, 1, params[p + "gate_b1"].shape[-1])))
    logits = nn.matmul(hidden, params[p + "gate_w2"])  # (M, R, 1)
    M, R = logits.shape[:2]
    logits = nn.reshape(logits, (M, R)) + nn.reshape(params[p + "gate_b2"], (M, 1))
    g = nn.sigmoid(logits)
    if CHECK_NORMALIZATION and not (np.all(g.data > 0) and np.all(g.data < 1)):
        raise AssertionError("relation gate outside (0, 1)")
    return nn.transpose(g, (1, 0))


def relational_heads(h: Tensor, adjacency: np.ndarray, relations: np.ndarray, rel_embed: Tensor,
                     params, layer: int, heads: int, trace: dict | None = None) -> Tensor:
    """All relational heads of one layer, concatenated to (B, N, M * head_dim)."""
    if relations.max() >= rel_embed.shape[0] or relations.min() < 0:
        raise IndexError("relation index outside the relation vocabulary")
    gates = relation_gates(rel_embed, params, layer)  # (R, M)
    edge_gates = nn.transpose(nn.take(gates, relations), (0, 3, 1, 2))  # (B, M, N, N)
    beta = nn.softmax(edge_gates, mask=adjacency[:, None])
    if CHECK_NORMALIZATION:
        _check_rows(beta.data, "relational")
    if trace is not None:
        trace.setdefault("beta", []).append(beta.data)
        trace.setdefault("gates", []).append(gates.data)
    v = _split_heads(h @ params[f"layer{layer}.rel_v"], heads)
    return _merge_heads(nn.matmul(beta, v))


def relational_head(h, adjacency, relations, rel_embed, params, layer: int, head: int, heads: int) -> Tensor:
    out = relational_heads(h, adjacency, relations, rel_embed, params, layer, heads)
    dh = out.shape[-1] // heads
    return out[:, :, head * dh:(head + 1) * dh]


def rgat_layer(h: Tensor, batch: GraphBatch, params, hyper: Hyper, layer: int,
               trace: dict | None = None) -> Tensor:
    """One message-passing layer: concatenated heads, affine map, ReLU."""
    x = attentional_heads(h, batch.adjacency, params, layer, hyper.att_heads, trace)
    if hyper.uses_relations:
        rel = relational_heads(h, batch.adjacency, batch.relations, params["rel_embed"],
                               params, layer, hyper.rel_heads, trace)
        x = nn.concat([x, rel], axis=-1)
    w = params[f"layer{layer}.out_w"]
    if x.shape[-1] != w.shape[0]:
        raise ValueError(f"layer {layer}: head output dim {x.shape[-1]} != combiner input {w.shape[0]} "
                         f"(mode {hyper.mode!r})")
    return nn.relu(x @ w + params[f"layer{layer}.out_b"])


def _lstm_params(params, prefix: str) -> nn.BiLstmParams:
    return nn.BiLstmParams(*(params[f"{prefix}.{n}"] for n in
                             ("fw_W", "fw_U", "fw_b", "bw_W", "bw_U", "bw_b")))


def forward(batch: GraphBatch, params, hyper: Hyper, train: bool = False,
            rng: np.random.Generator | None = None, trace: dict | None = None) -> Tensor:
    """Class probabilities (B, 3) for a batch."""
    if batch.aspect_lengths.min() < 1:
        raise ValueError("empty aspect")
    if train and hyper.dropout > 0 and rng is None:
        raise ValueError("training forward with dropout needs an rng")
    embed = params["embed"]
    words = nn.dropout(nn.take(embed, batch.word_ids), hyper.dropout, rng, train)
    states = nn.bilstm(_lstm_params(params, "sent_lstm"), words, batch.lengths)

    asp = nn.dropout(nn.take(embed, batch.aspect_ids), hyper.dropout, rng, train)
    asp_states = nn.bilstm(_lstm_params(params, "asp_lstm"), asp, batch.aspect_lengths)
    root = nn.sum(asp_states, axis=1, keepdims=True) * (1.0 / batch.aspect_lengths[:, None, None])

    h = nn.concat([root, states], axis=1)
    for layer in range(hyper.layers):
        h = rgat_layer(h, batch, params, hyper, layer, trace)
        h = nn.dropout(h, hyper.dropout, rng, train)
    logits = h[:, 0] @ params["cls_w"] + params["cls_b"]
    probs = nn.softmax(logits)
    if CHECK_NORMALIZATION and np.abs(probs.data.sum(axis=-1) - 1.0).max() > _tol(PROB_TOL, probs.data.dtype):
        raise AssertionError("class probabilities do not sum to 1")
    return probs


def loss(batch: GraphBatch, params, hyper: Hyper, train: bool = False,
         rng: np.random.Generator | None = None) -> Tensor:
    """Summed negative log-likelihood of the gold labels."""
    probs = forward(batch, params, hyper, train, rng)
    gold = probs[np.arange(len(batch)), batch.labels]
    return nn.sum(-nn.log_clamp(gold))


def nll(probs: np.ndarray, labels: np.ndarray) -> float:
    gold = probs[np.arange(len(labels)), labels]
    return float(-np.log(np.maximum(gold, 1e-12)).sum())


class Model:
    """Parameters plus the vocabularies and settings needed to encode instances."""

    def __init__(self, hyper: Hyper, vocab: Vocab, rel_vocab: RelationVocab,
                 embeddings: np.ndarray, seed: int = 0):
        self.hyper = hyper
        self.vocab = vocab
        self.rel_vocab = rel_vocab
        self.seed = seed
        if embeddings.shape[0] != len(vocab):
            raise ValueError(f"embedding rows {embeddings.shape[0]} != vocab size {len(vocab)}")
        dtype = np.dtype(hyper.dtype)
        spec = param_spec(hyper, len(vocab), embeddings.shape[1], len(rel_vocab))
        self.params = nn.init_params(spec, seed, dtype)
        self.params.add("embed", embeddings.astype(dtype), frozen=hyper.freeze_embeddings)

    def prepare(self, instances: Iterable[Instance]) -> list[Example]:
        return prepare(instances, self.hyper)

    def batch(self, examples: Sequence[Example]) -> GraphBatch:
        return collate(examples, self.vocab, self.rel_vocab)

    def forward(self, batch: GraphBatch, train: bool = False, rng=None, trace=None) -> Tensor:
        return forward(batch, self.params, self.hyper, train, rng, trace)

    def loss(self, batch: GraphBatch, train: bool = False, rng=None) -> Tensor:
        return loss(batch, self.params, self.hyper, train, rng)

    def predict_proba(self, examples: Sequence[Example], batch_size: int = 64) -> np.ndarray:
        out = [self.forward(self.batch(examples[s:s + batch_size])).data
               for s in range(0, len(examples), batch_size)]
        return np.concatenate(out) if out else np.zeros((0, len(LABELS)))

    def header(self) -> dict:
        return {"hyper": self.hyper.to_dict(), "vocab": self.vocab.to_json(),
                "relations": self.rel_vocab.to_json(), "seed": self.seed}

    @classmethod
    def from_checkpoint(cls, header: dict, tensors: dict[str, np.ndarray]) -> Model:
        hyper = Hyper.from_dict(header["hyper"])
        model = cls(hyper, Vocab.from_json(header["vocab"]),
                    RelationVocab.from_json(header["relations"]), tensors["embed"], header.get("seed", 0))
        model.params.load_state(tensors)
        return model


def config_hash(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, default=str).encode()).hexdigest()[:12]
