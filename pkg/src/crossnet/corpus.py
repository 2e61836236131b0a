"""Stance data ingestion: TSV loading, tweet tokenization, pretrained
embeddings, and stratified fold plans.

Expected data format is tab-separated UTF-8 with a header row naming the
columns ID, Target, Tweet, Stance (case-insensitive, any order). Stance
values are FAVOR / AGAINST / NONE or NEITHER; NONE is normalized to NEITHER.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field

import numpy as np

from .rng import Rng, stable_hash64

log = logging.getLogger(__name__)

FAVOR = "FAVOR"
AGAINST = "AGAINST"
NEITHER = "NEITHER"
STANCES = (FAVOR, AGAINST, NEITHER)
STANCE_INDEX = {s: i for i, s in enumerate(STANCES)}

UNK_TOKEN = "<unk>"
URL_TOKEN = "<url>"
USER_TOKEN = "<user>"
HASHTAG_TOKEN = "<hashtag>"

EMBEDDING_DIM = 200


class CorpusFormatError(ValueError):
    """Malformed input data file."""


@dataclass
class Instance:
    """One labeled (sentence, target, stance) record."""

    id: str
    target: str
    text: str
    tokens: list[str]
    stance: str

    @property
    def label(self) -> int:
        return STANCE_INDEX[self.stance]


_TOKEN_RE = re.compile(
    r"(https?://\S+|www\.\S+)"      # 1: url
    r"|(@\w+)"                      # 2: user mention
    r"|#(\w+)"                      # 3: hashtag body
    r"|([a-z0-9_]+(?:'[a-z0-9_]+)*)"  # 4: word, contractions kept whole
    r"|(\S)"                        # 5: any other single character
)


def tokenize(text: str) -> list[str]:
    """Deterministic tweet tokenization.

    Lowercases; URLs become <url>, @mentions <user>; "#tag" becomes the pair
    <hashtag>, tag; punctuation splits off as single-character tokens. These
    mirror the preprocessing conventions of the GloVe Twitter vectors so
    pretrained coverage stays high.
    """
    tokens: list[str] = []
    for m in _TOKEN_RE.finditer(text.lower()):
        url, user, hashtag, word, other = m.groups()
        if url:
            tokens.append(URL_TOKEN)
        elif user:
            tokens.append(USER_TOKEN)
        elif hashtag:
            tokens.append(HASHTAG_TOKEN)
            tokens.append(hashtag)
        elif word:
            tokens.append(word)
        else:
            tokens.append(other)
    return tokens


_REQUIRED_COLUMNS = ("id", "target", "tweet", "stance")


def load_semeval(path) -> list[Instance]:
    """Load a stance TSV into Instances, tokenizing as it goes.

    Rows that tokenize to nothing are dropped with a warning count. Unknown
    stance strings and missing columns raise CorpusFormatError.
    """
    with open(path, encoding="utf-8-sig", errors="replace", newline="") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise CorpusFormatError(f"{path}: empty file")
    header = [c.strip().lower() for c in lines[0].split("\t")]
    col = {}
    for name in _REQUIRED_COLUMNS:
        if name not in header:
            raise CorpusFormatError(f"{path}: missing column {name!r} in header {header}")
        col[name] = header.index(name)

    instances: list[Instance] = []
    empty = 0
    for row_no, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        cells = line.split("\t")
        if len(cells) < len(header):
            raise CorpusFormatError(f"{path}:{row_no}: expected {len(header)} columns, got {len(cells)}")
        stance = cells[col["stance"]].strip().upper()
        if stance == "NONE":
            stance = NEITHER
        if stance not in STANCE_INDEX:
            raise CorpusFormatError(f"{path}:{row_no}: unknown stance {cells[col['stance']]!r}")
        text = cells[col["tweet"]].strip()
        tokens = tokenize(text)
        if not tokens:
            empty += 1
            continue
        instances.append(
            Instance(
                id=cells[col["id"]].strip(),
                target=cells[col["target"]].strip(),
                text=text,
                tokens=tokens,
                stance=stance,
            )
        )
    if empty:
        log.warning("%s: dropped %d rows with no tokens", path, empty)
    return instances


def filter_target(instances: list[Instance], target: str) -> list[Instance]:
    return [inst for inst in instances if inst.target == target]


def target_report(instances: list[Instance], target: str, oov_rate: float | None = None) -> dict:
    """Per-target class-distribution summary, as the loader report JSON."""
    subset = filter_target(instances, target)
    total = len(subset)
    if total == 0:
        raise CorpusFormatError(f"no instances for target {target!r}")
    counts = {s: 0 for s in STANCES}
    for inst in subset:
        counts[inst.stance] += 1
    return {
        "target": target,
        "total": total,
        "favor_pct": 100.0 * counts[FAVOR] / total,
        "against_pct": 100.0 * counts[AGAINST] / total,
        "neither_pct": 100.0 * counts[NEITHER] / total,
        "oov_rate": oov_rate,
    }


class Vocabulary:
    """Dense token -> id map; id 0 is reserved for unknown tokens."""

    def __init__(self, tokens=()):
        self._index: dict[str, int] = {UNK_TOKEN: 0}
        for tok in tokens:
            self.add(tok)

    def add(self, token: str) -> int:
        idx = self._index.get(token)
        if idx is None:
            idx = len(self._index)
            self._index[token] = idx
        return idx

    def __len__(self) -> int:
        return len(self._index)

    def __contains__(self, token: str) -> bool:
        return token in self._index

    def id_of(self, token: str) -> int:
        return self._index.get(token, 0)

    def ids(self, tokens: list[str]) -> np.ndarray:
        return np.array([self._index.get(t, 0) for t in tokens], dtype=np.intp)

    def items(self):
        return self._index.items()

    def to_list(self) -> list[str]:
        out = [""] * len(self._index)
        for tok, idx in self._index.items():
            out[idx] = tok
        return out

    @classmethod
    def from_list(cls, tokens: list[str]) -> "Vocabulary":
        if not tokens or tokens[0] != UNK_TOKEN:
            raise CorpusFormatError("vocabulary list must start with the <unk> token")
        vocab = cls()
        for tok in tokens[1:]:
            vocab.add(tok)
        return vocab


def build_vocabulary(instances: list[Instance]) -> Vocabulary:
    """Vocabulary over sentence and target tokens, in first-seen order."""
    vocab = Vocabulary()
    for inst in instances:
        for tok in inst.tokens:
            vocab.add(tok)
        for tok in tokenize(inst.target):
            vocab.add(tok)
    return vocab


@dataclass
class EmbeddingMatrix:
    """Frozen word vectors, one row per vocabulary id.

    Never receives gradient updates; the matrix is shared read-only by every
    model built over the same vocabulary.
    """

    matrix: np.ndarray
    vocab: Vocabulary
    coverage: float
    frozen: bool = True


def _oov_vector(token: str, seed: int, dim: int) -> np.ndarray:
    # Per-token seeding keeps OOV rows distinguishable yet reproducible.
    gen = np.random.Generator(np.random.PCG64(stable_hash64("oov", seed, token)))
    return gen.normal(0.0, 0.1, size=dim)


def build_embeddings(vocab: Vocabulary, vectors_path, rng: Rng, dim: int = EMBEDDING_DIM) -> EmbeddingMatrix:
    """Embedding matrix from a "word v1 ... v_dim" text file.

    Tokens found in the file get their pretrained row; the rest (including
    <unk>) get a deterministic Gaussian row seeded from the run seed and the
    token string. Returns the matrix with the fraction of the vocabulary
    covered by the file.
    """
    wanted = {tok: idx for tok, idx in vocab.items()}
    matrix = np.zeros((len(vocab), dim), dtype=np.float64)
    found = np.zeros(len(vocab), dtype=bool)
    with open(vectors_path, encoding="utf-8", errors="replace") as fh:
        for line_no, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split(" ")
            if len(parts) < 2:
                continue
            word = parts[0]
            idx = wanted.get(word)
            if idx is None or found[idx]:
                continue
            values = parts[1:]
            if len(values) != dim:
                raise CorpusFormatError(
                    f"{vectors_path}:{line_no}: expected {dim} values, got {len(values)}"
                )
            matrix[idx] = np.array(values, dtype=np.float64)
            found[idx] = True
    for tok, idx in vocab.items():
        if not found[idx]:
            matrix[idx] = _oov_vector(tok, rng.seed, dim)
    known = len(vocab) - 1  # <unk> can never be covered
    coverage = float(found.sum()) / known if known else 0.0
    log.info("embedding coverage: %.1f%% of %d tokens", 100 * coverage, known)
    return EmbeddingMatrix(matrix=matrix, vocab=vocab, coverage=coverage)


@dataclass
class FoldPlan:
    """A k-way stratified partition of instance indices."""

    k: int
    folds: list[np.ndarray]
    seed: int

    def train_indices(self, held_out: int) -> np.ndarray:
        parts = [f for i, f in enumerate(self.folds) if i != held_out]
        return np.concatenate(parts) if parts else np.array([], dtype=np.intp)


def stratified_folds(instances: list[Instance], k: int, rng: Rng) -> FoldPlan:
    """Partition indices into k folds with per-class counts differing by <= 1.

    Shuffling is driven solely by `rng`; a class with fewer than k members is
    an error naming the class.
    """
    if k < 2:
        raise ValueError(f"fold count must be >= 2, got {k}")
    by_class: dict[str, list[int]] = {s: [] for s in STANCES}
    for i, inst in enumerate(instances):
        by_class[inst.stance].append(i)
    folds: list[list[int]] = [[] for _ in range(k)]
    offset = 0
    for stance in STANCES:
        members = by_class[stance]
        if not members:
            continue
        if len(members) < k:
            raise ValueError(
                f"class {stance} has {len(members)} instances, fewer than k={k}"
            )
        members = [members[j] for j in rng.permutation(len(members))]
        # Rotate which folds receive the remainder so fold sizes stay within
        # one of each other overall, not just per class.
        for j, idx in enumerate(members):
            folds[(offset + j) % k].append(idx)
        offset = (offset + len(members)) % k
    return FoldPlan(
        k=k,
        folds=[np.array(sorted(f), dtype=np.intp) for f in folds],
        seed=rng.seed,
    )
