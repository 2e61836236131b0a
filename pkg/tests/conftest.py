import numpy as np
import pytest

from crossnet.corpus import EmbeddingMatrix, Instance, STANCES, Vocabulary, tokenize
from crossnet.rng import Rng

# Class-indicative cue words plus neutral filler; a model that learns at all
# memorizes these quickly.
CUES = {
    "FAVOR": ["love", "great", "support"],
    "AGAINST": ["hate", "awful", "stop"],
    "NEITHER": ["maybe", "unsure", "news"],
}
FILLER = ["the", "a", "is", "it", "day", "today", "people", "thing"]


def make_toy_instances(n: int, target: str = "toy topic", offset: int = 0) -> list[Instance]:
    instances = []
    for i in range(n):
        stance = STANCES[(i + offset) % 3]
        cue = CUES[stance]
        toks = [
            FILLER[(i + offset) % len(FILLER)],
            cue[i % len(cue)],
            FILLER[(i + 3) % len(FILLER)],
            cue[(i + 1) % len(cue)],
        ]
        instances.append(
            Instance(id=f"{target}-{i}", target=target, text=" ".join(toks),
                     tokens=toks, stance=stance)
        )
    return instances


def toy_vocabulary(*instance_lists) -> Vocabulary:
    vocab = Vocabulary()
    for instances in instance_lists:
        for inst in instances:
            for tok in inst.tokens:
                vocab.add(tok)
            for tok in tokenize(inst.target):
                vocab.add(tok)
    return vocab


def toy_embeddings(vocab: Vocabulary, dim: int = 12, seed: int = 99) -> EmbeddingMatrix:
    rng = Rng(seed)
    return EmbeddingMatrix(matrix=rng.normal(0.0, 0.5, (len(vocab), dim)),
                           vocab=vocab, coverage=1.0)


@pytest.fixture
def toy_dataset():
    instances = make_toy_instances(33)
    vocab = toy_vocabulary(instances)
    return instances, toy_embeddings(vocab)


def write_tsv(path, rows, header=("ID", "Target", "Tweet", "Stance")):
    lines = ["\t".join(header)]
    for row in rows:
        lines.append("\t".join(str(c) for c in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def write_glove(path, tokens, dim: int = 200, seed: int = 11):
    """Tiny pretrained-vector file covering `tokens`."""
    rng = Rng(seed)
    lines = []
    for tok in tokens:
        vec = rng.normal(0.0, 0.3, dim)
        lines.append(tok + " " + " ".join(f"{v:.5f}" for v in vec))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path
