import numpy as np
import pytest

from rgat_absa import rgat
from rgat_absa.deptree import DepParse

# every forward pass in the suite asserts attention/gate normalization
rgat.CHECK_NORMALIZATION = True


@pytest.fixture
def food_parse():
    """Hand parse of 'great food but the service was dreadful'."""
    return DepParse(
        ["great", "food", "but", "the", "service", "was", "dreadful"],
        [2, 0, 7, 5, 7, 7, 2],
        ["amod", "root", "cc", "det", "nsubj", "cop", "conj"],
    )


LABEL_SET = ("nsubj", "obj", "amod", "det", "advmod", "conj", "cc", "case", "nmod", "cop")


def random_parse(rng: np.random.Generator, n: int) -> DepParse:
    """Uniform random recursive tree: each node attaches to an earlier node in a random order."""
    order = rng.permutation(n) + 1
    heads = [0] * n
    for pos in range(1, n):
        heads[order[pos] - 1] = int(order[rng.integers(pos)])
    rels = [str(LABEL_SET[rng.integers(len(LABEL_SET))]) for _ in range(n)]
    rels[order[0] - 1] = "root"
    return DepParse([f"w{i}" for i in range(1, n + 1)], heads, rels)


def floyd_warshall(parse: DepParse) -> np.ndarray:
    """All-pairs hop counts, 1-based (row/col 0 unused)."""
    n = len(parse)
    d = np.full((n + 1, n + 1), np.inf)
    np.fill_diagonal(d, 0)
    for i, h in enumerate(parse.heads, start=1):
        if h:
            d[i, h] = d[h, i] = 1
    for k in range(1, n + 1):
        d = np.minimum(d, d[:, [k]] + d[[k], :])
    return d


def pytest_terminal_summary(terminalreporter):
    from acceptance_report import LINES
    if LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(LINES):
            terminalreporter.write_line(LINES[n])
