"""Toy two-clause reviews whose labels are fixed by one opinion word.

Each sentence reads ``the A was X but the B seemed Y``: A is the aspect,
X (attached directly to A) decides its polarity, and Y is a distractor of
a different polarity two edges away.
"""

from __future__ import annotations

import numpy as np

from .corpus import LABELS, Instance
from .deptree import DepParse

NOUNS = ("food", "service", "staff", "menu", "place", "wine", "decor", "price")
OPINIONS = {
    "positive": ("great", "lovely", "superb"),
    "neutral": ("okay", "average", "standard"),
    "negative": ("awful", "bland", "rude"),
}

HEADS = (2, 4, 4, 0, 9, 7, 9, 9, 4)
RELS = ("det", "nsubj", "cop", "root", "cc", "det", "nsubj", "cop", "conj")


def synthetic_instances(n: int = 50, seed: int = 0) -> list[Instance]:
    rng = np.random.default_rng(seed)
    out = []
    for s in range(n):
        label = LABELS[s % 3]
        other = LABELS[(s % 3 + 1 + rng.integers(2)) % 3]
        a, b = rng.choice(len(NOUNS), size=2, replace=False)
        x = OPINIONS[label][rng.integers(3)]
        y = OPINIONS[other][rng.integers(3)]
        tokens = ("the", NOUNS[a], "was", x, "but", "the", NOUNS[b], "seemed", y)
        parse = DepParse(tokens, HEADS, RELS)
        out.append(Instance(f"syn-{s}#0", tokens, (2, 2), label, parse))
    return out
