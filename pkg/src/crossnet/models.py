"""The three stance architectures over the autodiff engine.

crossnet      target-conditioned BiLSTM encoding, self-attention over the
              per-token states, aggregated aspect vector into an MLP head.
bicond        the same conditional encoding, but the sentence BiLSTM's final
              states feed the head directly (no attention).
bilstm        two independent zero-initialized BiLSTMs over sentence and
              target; their final-state summaries are concatenated.

The LSTM recurrence runs through the fused scan kernel (numba or numpy,
see crossnet.kernels); everything around it is composed from autodiff
primitives, so one backward pass covers the whole model.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import NamedTuple

import numpy as np

from . import autodiff as ad
from . import kernels
from .corpus import STANCES, Vocabulary
from .rng import Rng


class Architecture(str, Enum):
    CROSSNET = "crossnet"
    BICOND = "bicond"
    BILSTM_CONCAT = "bilstm"

    def __str__(self) -> str:
        return self.value


ATTENTION_ACTIVATIONS = {
    "tanh": ad.tanh,
    "sigmoid": ad.sigmoid,
}


@dataclass
class ModelConfig:
    hidden: int = 60
    mlp: int = 60
    attention: int = 60
    dropout: float = 0.1
    classes: int = 3
    embedding_dim: int = 200
    attention_activation: str = "tanh"
    architecture: Architecture = Architecture.CROSSNET

    def __post_init__(self):
        self.architecture = Architecture(self.architecture)
        for name in ("hidden", "mlp", "attention", "classes", "embedding_dim"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.attention_activation not in ATTENTION_ACTIVATIONS:
            raise ValueError(f"unknown attention activation {self.attention_activation!r}")

    @property
    def representation_dim(self) -> int:
        if self.architecture is Architecture.BILSTM_CONCAT:
            return 4 * self.hidden
        return 2 * self.hidden

    def to_dict(self) -> dict:
        d = self.__dict__.copy()
        d["architecture"] = self.architecture.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


class LstmState(NamedTuple):
    h: ad.TensorNode
    c: ad.TensorNode


@dataclass
class CellParams:
    """One LSTM cell: wx (in, 4h), wh (h, 4h), b (4h,), gates [i, f, g, o]."""

    wx: ad.TensorNode
    wh: ad.TensorNode
    b: ad.TensorNode

    @property
    def hidden(self) -> int:
        return self.wh.shape[0]

    def nodes(self) -> list[ad.TensorNode]:
        return [self.wx, self.wh, self.b]


def _init_cell(name: str, in_dim: int, hidden: int, rng: Rng) -> CellParams:
    # Small bounded init keeps the recurrence stable and the gradient
    # check well conditioned; forget gate bias starts at 1.
    wx = ad.parameter(rng.uniform(-0.08, 0.08, (in_dim, 4 * hidden)), f"{name}.wx")
    wh = ad.parameter(rng.uniform(-0.08, 0.08, (hidden, 4 * hidden)), f"{name}.wh")
    b_val = np.zeros(4 * hidden)
    b_val[hidden:2 * hidden] = 1.0
    b = ad.parameter(b_val, f"{name}.b")
    return CellParams(wx, wh, b)


def _fan_in_uniform(rng: Rng, shape, fan_in: int) -> np.ndarray:
    limit = np.sqrt(3.0 / fan_in)
    return rng.uniform(-limit, limit, shape)


class ModelParams:
    """All trainable tensors for one architecture.

    `trainable()` enumerates every leaf the loss regularizes and the
    optimizer updates; `weight_matrices()` is the subset that carries the
    L2 penalty (biases excluded).
    """

    def __init__(self, config: ModelConfig, rng: Rng):
        self.config = config
        h = config.hidden
        e = config.embedding_dim
        self.target_fwd = _init_cell("target_fwd", e, h, rng)
        self.target_bwd = _init_cell("target_bwd", e, h, rng)
        self.sent_fwd = _init_cell("sent_fwd", e, h, rng)
        self.sent_bwd = _init_cell("sent_bwd", e, h, rng)

        if config.architecture is Architecture.CROSSNET:
            d = config.attention
            self.attn_w1 = ad.parameter(_fan_in_uniform(rng, (d, 2 * h), 2 * h), "attn.w1")
            self.attn_b1 = ad.parameter(np.zeros(d), "attn.b1")
            self.attn_w2 = ad.parameter(_fan_in_uniform(rng, (d,), d), "attn.w2")
            self.attn_b2 = ad.parameter(np.zeros(()), "attn.b2")
        else:
            self.attn_w1 = self.attn_b1 = self.attn_w2 = self.attn_b2 = None

        rep = config.representation_dim
        self.mlp_w = ad.parameter(_fan_in_uniform(rng, (config.mlp, rep), rep), "mlp.w")
        self.mlp_b = ad.parameter(np.zeros(config.mlp), "mlp.b")
        self.out_w = ad.parameter(_fan_in_uniform(rng, (config.classes, config.mlp), config.mlp), "out.w")
        self.out_b = ad.parameter(np.zeros(config.classes), "out.b")

    def trainable(self) -> list[ad.TensorNode]:
        nodes: list[ad.TensorNode] = []
        for cell in (self.target_fwd, self.target_bwd, self.sent_fwd, self.sent_bwd):
            nodes.extend(cell.nodes())
        if self.attn_w1 is not None:
            nodes.extend([self.attn_w1, self.attn_b1, self.attn_w2, self.attn_b2])
        nodes.extend([self.mlp_w, self.mlp_b, self.out_w, self.out_b])
        return nodes

    def named(self) -> dict[str, ad.TensorNode]:
        return {node.name: node for node in self.trainable()}

    def weight_matrices(self) -> list[ad.TensorNode]:
        weights = []
        for cell in (self.target_fwd, self.target_bwd, self.sent_fwd, self.sent_bwd):
            weights.extend([cell.wx, cell.wh])
        if self.attn_w1 is not None:
            weights.extend([self.attn_w1, self.attn_w2])
        weights.extend([self.mlp_w, self.out_w])
        return weights

    def count(self) -> int:
        return sum(node.size for node in self.trainable())

    def zero_grads(self) -> None:
        for node in self.trainable():
            node.zero_grad()

    def snapshot(self) -> dict[str, np.ndarray]:
        return {name: node.value.copy() for name, node in self.named().items()}

    def load_snapshot(self, values: dict[str, np.ndarray]) -> None:
        named = self.named()
        if set(values) != set(named):
            missing = set(named) ^ set(values)
            raise ValueError(f"snapshot does not match parameters: {sorted(missing)}")
        for name, value in values.items():
            node = named[name]
            if node.value.shape != value.shape:
                raise ValueError(f"{name}: shape {value.shape} != {node.value.shape}")
            node.value[...] = value


@dataclass
class AttentionResult:
    """Per-token weights, the aggregated aspect vector, and the raw scores."""

    weights: ad.TensorNode
    aspect: ad.TensorNode
    scores: ad.TensorNode


@dataclass
class Prediction:
    probs_node: ad.TensorNode
    label: int
    attention: AttentionResult | None = None

    @property
    def probabilities(self) -> np.ndarray:
        return self.probs_node.value

    @property
    def stance(self) -> str:
        return STANCES[self.label]


class ScanOut(NamedTuple):
    rows: ad.TensorNode
    last: LstmState


def _zero_state(hidden: int) -> LstmState:
    return LstmState(ad.constant(np.zeros(hidden)), ad.constant(np.zeros(hidden)))


def lstm_scan(seq: ad.TensorNode, cell: CellParams, init: LstmState | None = None) -> ScanOut:
    """Run the cell over the rows of `seq`; one fused graph node.

    Returns all hidden states (L, h) and the final (h, c) pair. The scan's
    forward and backward run in the selected kernel backend.
    """
    if seq.value.ndim != 2 or seq.value.shape[0] == 0:
        raise ad.ShapeError("lstm_scan", seq.shape, detail="expects a non-empty (L, dim) sequence")
    if seq.value.shape[1] != cell.wx.shape[0]:
        raise ad.ShapeError("lstm_scan", seq.shape, cell.wx.shape)
    if init is None:
        init = _zero_state(cell.hidden)
    h0, c0 = init
    zx = ad.matmul(seq, cell.wx)
    wh, b = cell.wh, cell.b

    hs_val, cs_val, gates, tanhc = kernels.lstm_seq_forward(
        zx.value, wh.value, b.value, h0.value, c0.value
    )
    rows = ad.TensorNode(hs_val)
    h_last = ad.TensorNode(hs_val[-1].copy())
    c_last = ad.TensorNode(cs_val[-1].copy())

    def bw():
        dzx, dwh, db, dh0, dc0 = kernels.lstm_seq_backward(
            wh.value, h0.value, c0.value,
            hs_val, cs_val, gates, tanhc,
            rows.grad, h_last.grad, c_last.grad,
        )
        if zx.requires_grad:
            zx.grad += dzx
        if wh.requires_grad:
            wh.grad += dwh
        if b.requires_grad:
            b.grad += db
        if h0.requires_grad:
            h0.grad += dh0
        if c0.requires_grad:
            c0.grad += dc0

    ad.record_op("lstm_scan", (zx, wh, b, h0, c0), (rows, h_last, c_last), bw)
    return ScanOut(rows, LstmState(h_last, c_last))


def lstm_step(x: ad.TensorNode, prev: LstmState, cell: CellParams) -> LstmState:
    """One cell update for a single input vector."""
    if x.value.ndim != 1:
        raise ad.ShapeError("lstm_step", x.shape, detail="expects a vector")
    seq = ad.reshape(x, (1, x.shape[0]))
    out = lstm_scan(seq, cell, prev)
    return out.last


class BiLstmOut(NamedTuple):
    rows: ad.TensorNode         # (L, 2h): [forward; backward] per position
    forward_last: LstmState     # state after the left-to-right pass
    backward_last: LstmState    # state after the right-to-left pass


def bilstm_encode(
    seq: ad.TensorNode,
    fwd_cell: CellParams,
    bwd_cell: CellParams,
    init_fwd: LstmState | None = None,
    init_bwd: LstmState | None = None,
) -> BiLstmOut:
    """Bidirectional encoding: row i is [h_fwd_i; h_bwd_i]."""
    fwd = lstm_scan(seq, fwd_cell, init_fwd)
    bwd = lstm_scan(ad.flip_rows(seq), bwd_cell, init_bwd)
    rows = ad.concat([fwd.rows, ad.flip_rows(bwd.rows)], axis=1)
    return BiLstmOut(rows, fwd.last, bwd.last)


def conditional_encode(
    target_seq: ad.TensorNode,
    sentence_seq: ad.TensorNode,
    params: ModelParams,
) -> BiLstmOut:
    """Encode the sentence with its BiLSTM initialized from the target's.

    The target runs through its own BiLSTM from zero states; the sentence's
    forward pass starts from the target's final forward state and the
    backward pass from the target's final backward state (the state at
    target position 1), aligning the two passes direction by direction.
    """
    t_enc = bilstm_encode(target_seq, params.target_fwd, params.target_bwd)
    return bilstm_encode(
        sentence_seq,
        params.sent_fwd,
        params.sent_bwd,
        init_fwd=t_enc.forward_last,
        init_bwd=t_enc.backward_last,
    )


def aspect_attention(h_rows: ad.TensorNode, params: ModelParams, config: ModelConfig) -> AttentionResult:
    """Self-attention over per-token states.

    score_i = w2 . act(W1 h_i + b1) + b2 with parameters shared across rows;
    weights are the softmax of the scores; the aspect vector is the
    weight-averaged combination of the rows.
    """
    if params.attn_w1 is None:
        raise ValueError(f"{config.architecture} has no attention parameters")
    if h_rows.value.ndim != 2 or h_rows.value.shape[0] == 0:
        raise ad.ShapeError("aspect_attention", h_rows.shape, detail="expects non-empty (L, 2h)")
    act = ATTENTION_ACTIVATIONS[config.attention_activation]
    hidden = act(ad.add(ad.matmul(h_rows, ad.transpose(params.attn_w1)), params.attn_b1))
    scores = ad.add(ad.matmul(hidden, params.attn_w2), params.attn_b2)
    weights = ad.softmax(scores)
    aspect = ad.matmul(ad.transpose(h_rows), weights)
    return AttentionResult(weights=weights, aspect=aspect, scores=scores)


def predict_head(rep: ad.TensorNode, params: ModelParams) -> ad.TensorNode:
    """One tanh hidden layer, then linear logits and softmax probabilities."""
    hidden = ad.tanh(ad.add(ad.matmul(params.mlp_w, rep), params.mlp_b))
    logits = ad.add(ad.matmul(params.out_w, hidden), params.out_b)
    return ad.softmax(logits)


def _dropout(node: ad.TensorNode, rate: float, rng: Rng) -> ad.TensorNode:
    if rate <= 0.0:
        return node
    mask = ad.constant(rng.keep_mask(1.0 - rate, node.shape))
    return ad.mul(node, mask)


def forward(
    sentence_ids: np.ndarray,
    target_ids: np.ndarray,
    embedding: ad.TensorNode,
    params: ModelParams,
    config: ModelConfig,
    mode: str = "eval",
    rng: Rng | None = None,
) -> Prediction:
    """Full forward pass for one instance under the configured architecture."""
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    if mode == "train" and rng is None:
        raise ValueError("train mode needs an rng for dropout")
    if len(sentence_ids) == 0 or len(target_ids) == 0:
        raise ValueError("sentence and target token sequences must be non-empty")
    train = mode == "train"
    sent = ad.gather_rows(embedding, sentence_ids)
    targ = ad.gather_rows(embedding, target_ids)
    attention = None

    if config.architecture is Architecture.CROSSNET:
        enc = conditional_encode(targ, sent, params)
        rows = enc.rows
        if train:
            rows = _dropout(rows, config.dropout, rng)
        attention = aspect_attention(rows, params, config)
        rep = attention.aspect
    elif config.architecture is Architecture.BICOND:
        enc = conditional_encode(targ, sent, params)
        rep = ad.concat([enc.forward_last.h, enc.backward_last.h])
    else:
        s_enc = bilstm_encode(sent, params.sent_fwd, params.sent_bwd)
        t_enc = bilstm_encode(targ, params.target_fwd, params.target_bwd)
        rep = ad.concat([
            s_enc.forward_last.h, s_enc.backward_last.h,
            t_enc.forward_last.h, t_enc.backward_last.h,
        ])
    if train:
        rep = _dropout(rep, config.dropout, rng)
    probs = predict_head(rep, params)
    label = int(np.argmax(probs.value))  # argmax takes the lowest index on ties
    return Prediction(probs_node=probs, label=label, attention=attention)


# ---------------------------------------------------------------------------
# Bundled model + checkpointing
# ---------------------------------------------------------------------------

CHECKPOINT_VERSION = 1


class StanceModel:
    """Config + parameters + frozen embedding + vocabulary, ready to predict."""

    def __init__(self, config: ModelConfig, params: ModelParams, embedding_matrix: np.ndarray, vocab: Vocabulary):
        if embedding_matrix.shape != (len(vocab), config.embedding_dim):
            raise ValueError(
                f"embedding shape {embedding_matrix.shape} does not match "
                f"vocab {len(vocab)} x dim {config.embedding_dim}"
            )
        self.config = config
        self.params = params
        self.vocab = vocab
        self.embedding = ad.constant(np.asarray(embedding_matrix, dtype=np.float64), name="embedding")

    @classmethod
    def build(cls, config: ModelConfig, embedding_matrix: np.ndarray, vocab: Vocabulary, rng: Rng) -> "StanceModel":
        return cls(config, ModelParams(config, rng), embedding_matrix, vocab)

    def predict_ids(self, sentence_ids, target_ids, mode: str = "eval", rng: Rng | None = None) -> Prediction:
        return forward(sentence_ids, target_ids, self.embedding, self.params, self.config, mode, rng)

    def predict_tokens(self, tokens: list[str], target_tokens: list[str], mode: str = "eval", rng: Rng | None = None) -> Prediction:
        return self.predict_ids(self.vocab.ids(tokens), self.vocab.ids(target_tokens), mode, rng)

    def save(self, path) -> None:
        meta = {
            "format_version": CHECKPOINT_VERSION,
            "config": self.config.to_dict(),
            "vocab": self.vocab.to_list(),
        }
        arrays = {f"param/{name}": node.value for name, node in self.params.named().items()}
        arrays["embedding"] = self.embedding.value
        arrays["meta"] = np.frombuffer(json.dumps(meta).encode("utf-8"), dtype=np.uint8)
        with open(path, "wb") as fh:
            np.savez(fh, **arrays)

    @classmethod
    def load(cls, path) -> "StanceModel":
        with np.load(path) as data:
            meta = json.loads(bytes(data["meta"]).decode("utf-8"))
            if meta.get("format_version") != CHECKPOINT_VERSION:
                raise ValueError(f"unsupported checkpoint version {meta.get('format_version')!r}")
            config = ModelConfig.from_dict(meta["config"])
            vocab = Vocabulary.from_list(meta["vocab"])
            params = ModelParams(config, Rng(0))
            params.load_snapshot({k[len("param/"):]: data[k] for k in data.files if k.startswith("param/")})
            return cls(config, params, data["embedding"], vocab)
