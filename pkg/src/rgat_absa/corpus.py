"""Dataset ingestion: SemEval-2014 XML, Twitter triples, CoNLL-U parses, GloVe vectors."""

from __future__ import annotations

import json
import re
import warnings
import xml.etree.ElementTree as ET
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .deptree import DepParse, TreeError, validate_tree

LABELS = ("positive", "neutral", "negative")
LABEL_INDEX = {lab: i for i, lab in enumerate(LABELS)}
TWITTER_LABELS = {"-1": "negative", "0": "neutral", "1": "positive"}
PLACEHOLDER = "$T$"

PAD, UNK = "<pad>", "<unk>"
OOV_SCALE = 0.25
MAX_SKIP = 3


class CorpusError(ValueError):
    pass


@dataclass(frozen=True)
class AspectTerm:
    term: str
    start: int
    end: int
    polarity: str


@dataclass(frozen=True)
class RawSentence:
    id: str
    text: str
    aspects: tuple[AspectTerm, ...]


def _norm(s: str) -> str:
    return " ".join(s.split())


def load_semeval_xml(path) -> list[RawSentence]:
    """Read a SemEval-2014 Task 4 file, dropping ``conflict`` aspects and aspect-less sentences."""
    try:
        root = ET.parse(path).getroot()
    except ET.ParseError as exc:
        line, col = exc.position
        raise CorpusError(f"{path}:{line}:{col}: malformed XML ({exc})") from exc

    out = []
    for sent in root.iter("sentence"):
        sid = sent.get("id")
        text = sent.findtext("text") or ""
        aspects = []
        for at in sent.iter("aspectTerm"):
            polarity = at.get("polarity")
            if polarity == "conflict":
                continue
            term = at.get("term", "")
            start, end = int(at.get("from")), int(at.get("to"))
            if polarity not in LABEL_INDEX:
                warnings.warn(f"sentence {sid}: unknown polarity {polarity!r}, skipped")
                continue
            if not (0 <= start < end <= len(text)) or _norm(text[start:end]) != _norm(term):
                warnings.warn(f"sentence {sid}: span [{start},{end}) does not match term {term!r}, skipped")
                continue
            aspects.append(AspectTerm(term, start, end, polarity))
        if aspects:
            out.append(RawSentence(sid, text, tuple(aspects)))
    return out


def load_twitter(path, prefix: str | None = None) -> list[RawSentence]:
    """Read the 3-line Twitter format (sentence with ``$T$``, target, label in {-1, 0, 1})."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    while lines and not lines[-1].strip():
        lines.pop()
    if len(lines) % 3:
        raise CorpusError(f"{path}: {len(lines)} lines is not a multiple of 3")
    prefix = Path(path).stem if prefix is None else prefix
    out = []
    for r in range(len(lines) // 3):
        template, target, label = (s.strip() for s in lines[3 * r:3 * r + 3])
        if label not in TWITTER_LABELS:
            raise CorpusError(f"{path}:{3 * r + 3}: label {label!r} not in {{-1, 0, 1}}")
        pos = template.find(PLACEHOLDER)
        if pos < 0:
            raise CorpusError(f"{path}:{3 * r + 1}: no {PLACEHOLDER} placeholder")
        text = template.replace(PLACEHOLDER, target)
        aspect = AspectTerm(target, pos, pos + len(target), TWITTER_LABELS[label])
        out.append(RawSentence(f"{prefix}-{r}", text, (aspect,)))
    return out


def export_sentences(raw: Iterable[RawSentence], path) -> int:
    """Write ``sent_id<TAB>text`` lines for an external parser; returns the count."""
    n = 0
    with open(path, "w", encoding="utf-8") as f:
        for s in raw:
            f.write(f"{s.id}\t{_norm(s.text)}\n")
            n += 1
    return n


_SENT_ID = re.compile(r"^#\s*sent_id\s*=\s*(.+?)\s*$")


def load_conllu(path) -> dict[str, DepParse]:
    """Parse CoNLL-U blocks keyed by their ``# sent_id``; only ID, FORM, HEAD and DEPREL are used."""
    parses: dict[str, DepParse] = {}

    def flush(sid, rows, lineno):
        if not rows:
            return
        if sid is None:
            raise CorpusError(f"{path}:{lineno}: sentence without '# sent_id'")
        try:
            parse = DepParse([r[1] for r in rows], [int(r[6]) for r in rows], [r[7] for r in rows])
        except ValueError as exc:
            raise CorpusError(f"{path}: sentence {sid!r}: bad HEAD column ({exc})") from exc
        problem = validate_tree(parse)
        if problem is not None:
            raise TreeError(f"{path}: sentence {sid!r}: {problem}")
        if sid in parses:
            raise CorpusError(f"{path}: duplicate sent_id {sid!r}")
        parses[sid] = parse

    sid, rows, start = None, [], 0
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\r\n")
            if not line.strip():
                flush(sid, rows, start)
                sid, rows = None, []
                continue
            if line.startswith("#"):
                m = _SENT_ID.match(line)
                if m:
                    sid = m.group(1)
                continue
            cols = line.split("\t")
            if len(cols) != 10:
                raise CorpusError(f"{path}:{lineno}: expected 10 columns, got {len(cols)}")
            if "-" in cols[0] or "." in cols[0]:
                continue
            if not rows:
                start = lineno
            rows.append(cols)
        flush(sid, rows, start)
    return parses


def align_tokens(text: str, tokens: Sequence[str]) -> list[tuple[int, int] | None]:
    """Character offsets of each token in ``text``, scanning left to right.

    Tokens the parser rewrote (e.g. normalized quotes) get ``None``.
    """
    offsets: list[tuple[int, int] | None] = []
    cursor = 0
    for tok in tokens:
        pos = text.find(tok, cursor)
        # a long non-space gap means the match belongs to a later token
        if pos < 0 or len("".join(text[cursor:pos].split())) > MAX_SKIP:
            offsets.append(None)
            continue
        offsets.append((pos, pos + len(tok)))
        cursor = pos + len(tok)
    return offsets


@dataclass(frozen=True)
class Instance:
    """One (sentence, aspect) pair with 1-based inclusive aspect span."""

    id: str
    tokens: tuple[str, ...]
    aspect: tuple[int, int]
    label: str
    parse: DepParse

    def __post_init__(self):
        i, k = self.aspect
        if not 1 <= i <= k <= len(self.tokens):
            raise CorpusError(f"instance {self.id}: aspect span {self.aspect} outside 1..{len(self.tokens)}")
        if len(self.parse) != len(self.tokens):
            raise CorpusError(f"instance {self.id}: parse has {len(self.parse)} tokens, sentence {len(self.tokens)}")
        if self.label not in LABEL_INDEX:
            raise CorpusError(f"instance {self.id}: unknown label {self.label!r}")

    @property
    def sentence_id(self) -> str:
        return self.id.rpartition("#")[0] or self.id

    @property
    def aspect_tokens(self) -> tuple[str, ...]:
        i, k = self.aspect
        return self.tokens[i - 1:k]

    @property
    def label_index(self) -> int:
        return LABEL_INDEX[self.label]

    def to_json(self) -> dict:
        return {"id": self.id, "tokens": list(self.tokens), "aspect": list(self.aspect),
                "label": self.label, "heads": list(self.parse.heads), "rels": list(self.parse.rels)}

    @classmethod
    def from_json(cls, obj: Mapping) -> Instance:
        parse = DepParse(obj["tokens"], obj["heads"], obj["rels"])
        return cls(obj["id"], tuple(obj["tokens"]), tuple(obj["aspect"]), obj["label"], parse)


def build_instances(raw: Iterable[RawSentence], parses: Mapping[str, DepParse]) -> list[Instance]:
    """Map character spans onto parser tokens, one Instance per aspect."""
    out = []
    for sent in raw:
        parse = parses.get(sent.id)
        if parse is None:
            warnings.warn(f"sentence {sent.id}: no parse, skipped")
            continue
        offsets = align_tokens(sent.text, parse.tokens)
        for n, asp in enumerate(sent.aspects):
            hit = [t for t, off in enumerate(offsets, start=1)
                   if off is not None and off[0] < asp.end and off[1] > asp.start]
            if not hit:
                warnings.warn(f"sentence {sent.id}: aspect {asp.term!r} not alignable, skipped")
                continue
            i, k = hit[0], hit[-1]
            if offsets[i - 1][0] < asp.start or offsets[k - 1][1] > asp.end:
                warnings.warn(f"sentence {sent.id}: aspect {asp.term!r} straddles tokens, expanded")
            out.append(Instance(f"{sent.id}#{n}", parse.tokens, (i, k), asp.polarity, parse))
    return out


def write_instances(path, instances: Iterable[Instance]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for inst in instances:
            f.write(json.dumps(inst.to_json(), ensure_ascii=False) + "\n")


def read_instances(path) -> list[Instance]:
    with open(path, encoding="utf-8") as f:
        return [Instance.from_json(json.loads(line)) for line in f if line.strip()]


class Vocab:
    """Token index with ``<pad>`` at 0 and ``<unk>`` at 1."""

    def __init__(self, tokens: Iterable[str] = (), lower: bool = True):
        self.lower = lower
        self.itos: list[str] = [PAD, UNK]
        self.stoi: dict[str, int] = {PAD: 0, UNK: 1}
        for t in tokens:
            self.add(t)

    def norm(self, token: str) -> str:
        return token.lower() if self.lower else token

    def add(self, token: str) -> int:
        token = self.norm(token)
        if token not in self.stoi:
            self.stoi[token] = len(self.itos)
            self.itos.append(token)
        return self.stoi[token]

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, token: str) -> bool:
        return self.norm(token) in self.stoi

    def lookup(self, token: str) -> int:
        return self.stoi.get(self.norm(token), 1)

    def encode(self, tokens: Iterable[str]) -> list[int]:
        return [self.lookup(t) for t in tokens]

    def to_json(self) -> dict:
        return {"lower": self.lower, "tokens": self.itos[2:]}

    @classmethod
    def from_json(cls, obj: Mapping) -> Vocab:
        return cls(obj["tokens"], lower=obj["lower"])


def build_vocab(instances: Iterable[Instance], min_freq: int = 1, lower: bool = True) -> Vocab:
    """Tokens with count >= ``min_freq``, ordered by descending count then alphabetically."""
    counts = Counter()
    for inst in instances:
        counts.update(t.lower() if lower else t for t in inst.tokens)
    kept = sorted((t for t, c in counts.items() if c >= min_freq), key=lambda t: (-counts[t], t))
    return Vocab(kept, lower=lower)


def _is_float(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def load_embeddings(path, vocab: Vocab, seed: int = 0, dtype=np.float64, return_known: bool = False):
    """Embedding matrix for ``vocab`` from a GloVe text file.

    Rows of tokens missing from the file are drawn uniformly from
    [-0.25, 0.25] with ``seed``; the padding row is zero. With
    ``return_known`` the set of vocabulary indices found in the file is
    returned as well.
    """
    dim = None
    found: dict[int, np.ndarray] = {}
    with open(path, encoding="utf-8", errors="replace") as f:
        for lineno, line in enumerate(f, start=1):
            parts = line.rstrip().split(" ")
            if len(parts) < 2:
                continue
            if dim is None:
                dim = len(parts) - 1
            if len(parts) - 1 != dim:
                # some GloVe releases contain tokens with inner spaces
                if len(parts) - 1 < dim or _is_float(parts[-dim - 1]):
                    raise CorpusError(f"{path}:{lineno}: vector has {len(parts) - 1} values, expected {dim}")
            token = vocab.norm(" ".join(parts[:-dim]))
            idx = vocab.stoi.get(token)
            if idx is None or idx in found:
                continue
            found[idx] = np.asarray(parts[-dim:], dtype=np.float64)
    if dim is None:
        raise CorpusError(f"{path}: no vectors")
    mat = embedding_matrix(vocab, dim, found, seed, dtype)
    return (mat, set(found)) if return_known else mat


def embedding_matrix(vocab: Vocab, dim: int, vectors: Mapping[int, np.ndarray] = {},
                     seed: int = 0, dtype=np.float64) -> np.ndarray:
    rng = np.random.default_rng(seed)
    mat = rng.uniform(-OOV_SCALE, OOV_SCALE, size=(len(vocab), dim))
    for idx, vec in vectors.items():
        mat[idx] = vec
    mat[0] = 0.0
    return mat.astype(dtype)
