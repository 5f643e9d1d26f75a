"""Aspect-oriented dependency trees.

An ordinary parse is reshaped into a depth-1 star rooted at the aspect.
Tokens attached to an aspect word keep their dependency label; every other
token hangs off the root through a virtual ``n:con`` relation, ``n`` being
its tree distance to the nearest aspect word (``∞:con`` past ``n_max``).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from .deptree import DepParse, TreeView, check_tree, distances_from

TO_ROOT = "to_root"
FROM_ROOT = "from_root"
VIRTUAL = "virtual"

INF_CON = "∞:con"
SELF = "self"
REV_SUFFIX = ":rev"
DEFAULT_N_MAX = 4


def con_label(n: int, n_max: int = DEFAULT_N_MAX) -> str:
    return f"{n}:con" if n <= n_max else INF_CON


def is_virtual(label: str) -> bool:
    return label.endswith(":con")


@dataclass(frozen=True)
class AspectTree:
    """Star graph around an aspect.

    ``aspect`` is the inclusive 1-based token range ``(i, k)``. Each child is
    ``(token_index, label, direction)`` where direction is ``to_root`` when
    the token depended on an aspect word, ``from_root`` when it headed one,
    and ``virtual`` for ``n:con`` attachments. Children are sorted by token.
    """

    aspect: tuple[int, int]
    children: tuple[tuple[int, str, str], ...]
    n_tokens: int
    n_max: int = DEFAULT_N_MAX

    @property
    def labels(self) -> list[str]:
        return [lab for _, lab, _ in self.children]

    def to_json(self, id: str = "") -> dict:
        return {"id": id, "aspect": list(self.aspect),
                "children": [[j, lab, d] for j, lab, d in self.children]}

    @classmethod
    def from_json(cls, obj: dict, n_tokens: int, n_max: int = DEFAULT_N_MAX) -> AspectTree:
        return cls(tuple(obj["aspect"]),
                   tuple((int(j), lab, d) for j, lab, d in obj["children"]),
                   n_tokens, n_max)


def reshape(parse: DepParse, aspect: Sequence[int], n_max: int = DEFAULT_N_MAX,
            mark_reverse: bool = False) -> AspectTree:
    """Root ``parse`` at the aspect span ``(i, k)`` (1-based, inclusive).

    Aspect words are scanned left to right and, for each, a direct dependent
    is checked before a direct head; the first match fixes the child's label.
    With ``mark_reverse`` the labels of children that headed an aspect word
    get a ``:rev`` suffix.
    """
    check_tree(parse)
    i, k = int(aspect[0]), int(aspect[1])
    n = len(parse.tokens)
    if not 1 <= i <= k <= n:
        raise IndexError(f"aspect span {(i, k)} outside 1..{n}")
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    view = TreeView.from_parse(parse, validate=False)
    heads, rels = parse.heads, parse.rels
    span = range(i, k + 1)

    nearest = [n + 1] * (n + 1)
    for a in span:
        for j, d in enumerate(distances_from(view, a)):
            if 0 < d < nearest[j]:
                nearest[j] = d

    children = []
    for j in range(1, n + 1):
        if i <= j <= k:
            continue
        found = None
        for a in span:
            if heads[j - 1] == a:
                found = (rels[j - 1], TO_ROOT)
                break
            if heads[a - 1] == j:
                label = rels[a - 1] + (REV_SUFFIX if mark_reverse else "")
                found = (label, FROM_ROOT)
                break
        if found is None:
            found = (con_label(nearest[j], n_max), VIRTUAL)
        children.append((j, found[0], found[1]))
    return AspectTree((i, k), tuple(children), n, n_max)


@dataclass(frozen=True)
class OrdinaryGraph:
    """Undirected labelled graph with one edge per head link: ``(dependent, head, label)``."""

    n: int
    edges: tuple[tuple[int, int, str], ...]

    def degrees(self) -> list[int]:
        deg = [0] * (self.n + 1)
        for d, h, _ in self.edges:
            deg[d] += 1
            deg[h] += 1
        return deg[1:]


def to_ordinary_graph(parse: DepParse) -> OrdinaryGraph:
    check_tree(parse)
    edges = tuple((i, h, r) for i, (h, r) in enumerate(zip(parse.heads, parse.rels), start=1)
                  if h > 0)
    return OrdinaryGraph(len(parse.tokens), edges)


class RelationVocab:
    """Dense label -> index map: sorted real labels, then the virtual ones, then ``self``."""

    def __init__(self, labels: Iterable[str], n_max: int = DEFAULT_N_MAX):
        virtual = [f"{m}:con" for m in range(1, n_max + 1)] + [INF_CON]
        real = sorted(set(labels) - set(virtual) - {SELF})
        self.n_max = n_max
        self.labels: tuple[str, ...] = tuple(real + virtual + [SELF])
        self.index = {lab: idx for idx, lab in enumerate(self.labels)}

    def __len__(self) -> int:
        return len(self.labels)

    def __contains__(self, label: str) -> bool:
        return label in self.index

    def __getitem__(self, label: str) -> int:
        try:
            return self.index[label]
        except KeyError:
            raise KeyError(f"relation {label!r} not in vocabulary") from None

    def __eq__(self, other) -> bool:
        return isinstance(other, RelationVocab) and self.labels == other.labels

    def to_json(self) -> dict:
        return {"labels": list(self.labels), "n_max": self.n_max}

    @classmethod
    def from_json(cls, obj: dict) -> RelationVocab:
        vocab = cls((), obj["n_max"])
        vocab.labels = tuple(obj["labels"])
        vocab.index = {lab: idx for idx, lab in enumerate(vocab.labels)}
        return vocab


def relation_vocab(trees: Iterable[AspectTree], n_max: int = DEFAULT_N_MAX,
                   graphs: Iterable[OrdinaryGraph] = ()) -> RelationVocab:
    labels = {lab for t in trees for lab in t.labels}
    labels.update(lab for g in graphs for _, _, lab in g.edges)
    return RelationVocab(labels, n_max)


def to_dot(tree: AspectTree, tokens: Sequence[str]) -> str:
    """Graphviz rendering of a reshaped tree."""
    i, k = tree.aspect

    def q(s):
        return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'

    lines = ["digraph aspect_tree {", f"  root [label={q(' '.join(tokens[i - 1:k]))}, shape=box];"]
    for j, label, direction in tree.children:
        lines.append(f"  t{j} [label={q(tokens[j - 1])}];")
        style = ", style=dashed" if direction == VIRTUAL else ""
        lines.append(f"  root -> t{j} [label={q(label)}{style}];")
    lines.append("}")
    return "\n".join(lines) + "\n"
