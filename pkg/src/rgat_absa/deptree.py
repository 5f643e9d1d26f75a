"""Ordinary dependency trees: storage, validation and undirected distances."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass


class TreeError(ValueError):
    """Raised when a parse does not form a single rooted tree."""


@dataclass(frozen=True)
class DepParse:
    """One sentence's dependency tree.

    ``heads`` are 1-based token indices, with 0 standing for the artificial
    root. ``rels`` holds the relation label of each token to its head.
    """

    tokens: tuple[str, ...]
    heads: tuple[int, ...]
    rels: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        object.__setattr__(self, "heads", tuple(int(h) for h in self.heads))
        object.__setattr__(self, "rels", tuple(self.rels))

    def __len__(self) -> int:
        return len(self.tokens)


def validate_tree(parse: DepParse) -> str | None:
    """Return ``None`` for a well-formed tree, else a description of the first violation.

    Checked in order: equal column lengths, head range, a single head-0
    token, acyclicity, connectedness.
    """
    n = len(parse.tokens)
    if len(parse.heads) != n or len(parse.rels) != n:
        return (f"length mismatch: {n} tokens, {len(parse.heads)} heads, "
                f"{len(parse.rels)} rels")
    if n == 0:
        return "empty parse"
    for i, h in enumerate(parse.heads, start=1):
        if h < 0 or h > n:
            return f"head out of range at token {i}: {h}"
        if h == i:
            return f"self-loop at token {i}"
    roots = [i for i, h in enumerate(parse.heads, start=1) if h == 0]
    if not roots:
        return "no root"
    if len(roots) > 1:
        return f"two roots: tokens {roots}"

    # Walk up from every token; a revisit on the current walk is a cycle.
    state = [0] * (n + 1)  # 0 unseen, 1 on stack, 2 reaches root
    state[0] = 2
    for start in range(1, n + 1):
        path = []
        node = start
        while state[node] == 0:
            state[node] = 1
            path.append(node)
            node = parse.heads[node - 1]
        if state[node] == 1:
            cycle_start = path.index(node)
            return f"cycle through tokens {path[cycle_start:]}"
        for p in path:
            state[p] = 2
    # Acyclic with one root and n-1 head links implies connected; kept explicit.
    view = TreeView.from_parse(parse, validate=False)
    seen = _bfs(view, roots[0])
    if min(seen[1:]) < 0:
        missing = [i for i in range(1, n + 1) if seen[i] < 0]
        return f"disconnected tokens {missing}"
    return None


def check_tree(parse: DepParse, name: str = "") -> None:
    problem = validate_tree(parse)
    if problem is not None:
        where = f" in sentence {name!r}" if name else ""
        raise TreeError(f"invalid dependency tree{where}: {problem}")


@dataclass(frozen=True)
class TreeView:
    """Undirected adjacency of a parse, 1-based (slot 0 is unused)."""

    n: int
    adjacency: tuple[tuple[int, ...], ...]

    @classmethod
    def from_parse(cls, parse: DepParse, validate: bool = True) -> TreeView:
        if validate:
            check_tree(parse)
        n = len(parse.tokens)
        nbrs: list[list[int]] = [[] for _ in range(n + 1)]
        for i, h in enumerate(parse.heads, start=1):
            if h > 0:
                nbrs[i].append(h)
                nbrs[h].append(i)
        return cls(n, tuple(tuple(sorted(x)) for x in nbrs))

    def neighbors(self, i: int) -> tuple[int, ...]:
        return self.adjacency[i]


def _bfs(view: TreeView, source: int) -> list[int]:
    dist = [-1] * (view.n + 1)
    dist[source] = 0
    queue = deque([source])
    while queue:
        u = queue.popleft()
        for v in view.adjacency[u]:
            if dist[v] < 0:
                dist[v] = dist[u] + 1
                queue.append(v)
    return dist


def distances_from(view: TreeView, source: int) -> list[int]:
    """BFS distances from ``source`` to every token; index 0 is padding (-1)."""
    if not 1 <= source <= view.n:
        raise IndexError(f"token index {source} outside 1..{view.n}")
    return _bfs(view, source)


def tree_distance(view: TreeView, i: int, j: int) -> int:
    """Number of edges on the undirected path between tokens ``i`` and ``j``."""
    if not 1 <= j <= view.n:
        raise IndexError(f"token index {j} outside 1..{view.n}")
    return distances_from(view, i)[j]
