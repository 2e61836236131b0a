"""Loss, ADAM, and the mini-batch training loop with early stopping."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .corpus import EmbeddingMatrix, Instance, STANCES, tokenize
from .models import ModelConfig, ModelParams, StanceModel, forward
from .rng import Rng

log = logging.getLogger(__name__)

PROB_FLOOR = 1e-12


class TrainingError(RuntimeError):
    """Aborted training run (non-finite loss or gradients)."""


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    l2: float = 0.01
    batch_size: int = 32
    max_epochs: int = 50
    patience: int = 5
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    clip_norm: float = 5.0

    def __post_init__(self):
        for name in ("learning_rate", "batch_size", "max_epochs", "patience", "beta1", "beta2", "eps"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.l2 < 0:
            raise ValueError("l2 must be non-negative")
        if self.patience > self.max_epochs:
            raise ValueError("patience must not exceed max_epochs")

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**d)


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    val_f: list[float] = field(default_factory=list)
    best_epoch: int = 0
    stopped_early: bool = False

    def to_dict(self) -> dict:
        return {
            "train_loss": self.train_loss,
            "val_f": self.val_f,
            "best_epoch": self.best_epoch,
            "stopped_early": self.stopped_early,
        }


def batch_loss(
    prob_nodes: list[ad.TensorNode],
    gold_labels: list[int],
    params: ModelParams,
    l2: float,
) -> ad.TensorNode:
    """Mean cross-entropy over the batch plus the L2 weight penalty.

    Probabilities are floored at 1e-12 inside the log. The penalty is
    l2 * sum of squared norms of the weight matrices (biases excluded),
    applied once per batch.
    """
    if len(prob_nodes) != len(gold_labels):
        raise ValueError(f"{len(prob_nodes)} predictions vs {len(gold_labels)} labels")
    if not prob_nodes:
        raise ValueError("empty batch")
    ce_terms = []
    for probs, gold in zip(prob_nodes, gold_labels):
        onehot = np.zeros(probs.shape[0])
        onehot[gold] = 1.0
        picked = ad.matmul(probs, ad.constant(onehot))
        ce_terms.append(ad.scalar_mul(ad.log(picked, floor=PROB_FLOOR), -1.0))
    data_term = ad.scalar_mul(ad.add_n(ce_terms), 1.0 / len(ce_terms))
    if l2 == 0.0:
        return data_term
    sq_norms = [ad.vsum(ad.mul(w, w)) for w in params.weight_matrices()]
    return ad.add(data_term, ad.scalar_mul(ad.add_n(sq_norms), l2))


class AdamState:
    """First/second moment buffers per parameter plus the shared timestep."""

    def __init__(self, params: ModelParams):
        self.m = {name: np.zeros_like(node.value) for name, node in params.named().items()}
        self.v = {name: np.zeros_like(node.value) for name, node in params.named().items()}
        self.t = 0


def adam_step(params: ModelParams, state: AdamState, cfg: TrainConfig) -> None:
    """In-place bias-corrected ADAM update from the accumulated gradients."""
    state.t += 1
    bc1 = 1.0 - cfg.beta1 ** state.t
    bc2 = 1.0 - cfg.beta2 ** state.t
    for name, node in params.named().items():
        g = node.grad
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient in parameter {name}")
        m = state.m[name]
        v = state.v[name]
        m *= cfg.beta1
        m += (1.0 - cfg.beta1) * g
        v *= cfg.beta2
        v += (1.0 - cfg.beta2) * g * g
        node.value -= cfg.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + cfg.eps)


def clip_gradients(params: ModelParams, max_norm: float) -> float:
    """Global-norm clipping; returns the pre-clip norm. No-op if max_norm <= 0."""
    total = 0.0
    nodes = params.trainable()
    for node in nodes:
        total += float(np.sum(node.grad * node.grad))
    norm = float(np.sqrt(total))
    if max_norm > 0.0 and norm > max_norm:
        scale = max_norm / norm
        for node in nodes:
            node.grad *= scale
    return norm


def _check_label_complete(name: str, instances: list[Instance]) -> None:
    present = {inst.stance for inst in instances}
    if not instances:
        raise ValueError(f"{name} set is empty")
    missing = [s for s in STANCES if s not in present]
    if missing:
        raise ValueError(f"{name} set is missing classes: {missing}")


def _token_ids(model: StanceModel, instances: list[Instance]) -> list[tuple[np.ndarray, np.ndarray]]:
    return [
        (model.vocab.ids(inst.tokens), model.vocab.ids(tokenize(inst.target)))
        for inst in instances
    ]


def validation_f(model: StanceModel, instances: list[Instance]) -> float:
    from .evaluation import evaluate_model, f1_scores

    return f1_scores(evaluate_model(model, instances)).f


def train(
    model_config: ModelConfig,
    train_config: TrainConfig,
    train_set: list[Instance],
    val_set: list[Instance],
    embeddings: EmbeddingMatrix,
    rng: Rng,
) -> tuple[StanceModel, TrainHistory]:
    """Mini-batch training with per-epoch validation and early stopping.

    Keeps the parameter snapshot with the best validation F (earliest epoch
    on ties) and restores it before returning. Identical seeds and inputs
    reproduce the history and the returned parameters exactly.
    """
    _check_label_complete("train", train_set)
    _check_label_complete("validation", val_set)
    model = StanceModel.build(model_config, embeddings.matrix, embeddings.vocab, rng.child("init"))
    loop_rng = rng.child("loop")
    adam = AdamState(model.params)
    history = TrainHistory()
    ids = _token_ids(model, train_set)
    golds = [inst.label for inst in train_set]

    best_f = -np.inf
    best_values: dict[str, np.ndarray] = model.params.snapshot()
    for epoch in range(train_config.max_epochs):
        order = loop_rng.permutation(len(train_set))
        epoch_losses = []
        for start in range(0, len(order), train_config.batch_size):
            batch = order[start:start + train_config.batch_size]
            probs = []
            for idx in batch:
                sent_ids, targ_ids = ids[idx]
                pred = forward(sent_ids, targ_ids, model.embedding, model.params,
                               model_config, mode="train", rng=loop_rng)
                probs.append(pred.probs_node)
            loss = batch_loss(probs, [golds[i] for i in batch], model.params, train_config.l2)
            loss_val = loss.item()
            if not np.isfinite(loss_val):
                raise TrainingError(
                    f"non-finite loss {loss_val} at epoch {epoch}, batch {start // train_config.batch_size}"
                )
            model.params.zero_grads()
            ad.backward(loss)
            clip_gradients(model.params, train_config.clip_norm)
            adam_step(model.params, adam, train_config)
            epoch_losses.append(loss_val)
        history.train_loss.append(float(np.mean(epoch_losses)))
        val_f = validation_f(model, val_set)
        history.val_f.append(val_f)
        log.debug("epoch %d: loss=%.4f val_f=%.4f", epoch, history.train_loss[-1], val_f)
        if val_f > best_f:
            best_f = val_f
            history.best_epoch = epoch
            best_values = model.params.snapshot()
        elif epoch - history.best_epoch >= train_config.patience:
            history.stopped_early = True
            break
    model.params.load_snapshot(best_values)
    return model, history
