"""Brute-force aspect tree construction, independent of the library's BFS path."""

from conftest import floyd_warshall


def brute_force_reshape(parse, aspect, n_max=4):
    i, k = aspect
    dist = floyd_warshall(parse)
    children = []
    for j in range(1, len(parse) + 1):
        if i <= j <= k:
            continue
        entry = None
        for a in range(i, k + 1):
            if parse.heads[j - 1] == a:
                entry = (j, parse.rels[j - 1], "to_root")
            elif parse.heads[a - 1] == j:
                entry = (j, parse.rels[a - 1], "from_root")
            if entry:
                break
        if entry is None:
            n = int(min(dist[a, j] for a in range(i, k + 1)))
            entry = (j, f"{n}:con" if n <= n_max else "∞:con", "virtual")
        children.append(entry)
    return children
