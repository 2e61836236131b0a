"""Metrics and the cross-validation protocols.

The headline score is the mean of micro- and macro-averaged F1. Macro
averages over all three classes by default (a two-class favor/against
variant is available via `macro_classes`). Cross-target transfer quality is
the ratio of the cross-target score to an in-target calibration score.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import autodiff as ad
from .corpus import EmbeddingMatrix, Instance, filter_target, stratified_folds, tokenize
from .models import ModelConfig, StanceModel
from .rng import Rng


class DegenerateTTestError(ValueError):
    """Paired differences have zero variance; the t statistic is undefined."""


class ConfusionCounts:
    """C x C integer counts indexed (gold, predicted)."""

    def __init__(self, classes: int):
        self.matrix = np.zeros((classes, classes), dtype=np.int64)

    @property
    def classes(self) -> int:
        return self.matrix.shape[0]

    @property
    def total(self) -> int:
        return int(self.matrix.sum())

    def add(self, gold: int, predicted: int) -> None:
        self.matrix[gold, predicted] += 1

    @classmethod
    def from_predictions(cls, golds, preds, classes: int) -> "ConfusionCounts":
        counts = cls(classes)
        for g, p in zip(golds, preds):
            counts.add(g, p)
        return counts


class F1Triple(NamedTuple):
    micro: float
    macro: float
    f: float


def f1_scores(counts: ConfusionCounts, macro_classes=None) -> F1Triple:
    """Micro/macro F1 and their mean, with the 0-convention on empty denominators.

    Micro pools TP/FP/FN over classes (equal to accuracy for single-label
    data); macro is the unweighted mean of per-class F1 over `macro_classes`
    (all classes when None).
    """
    m = counts.matrix
    total = m.sum()
    if total == 0:
        raise ValueError("empty confusion counts")
    classes = range(counts.classes) if macro_classes is None else macro_classes
    per_class = []
    for c in classes:
        tp = m[c, c]
        fp = m[:, c].sum() - tp
        fn = m[c, :].sum() - tp
        prec = tp / (tp + fp) if tp + fp > 0 else 0.0
        rec = tp / (tp + fn) if tp + fn > 0 else 0.0
        per_class.append(2 * prec * rec / (prec + rec) if prec + rec > 0 else 0.0)
    macro = float(np.mean(per_class))
    tp_pool = np.trace(m)
    fp_pool = total - tp_pool
    fn_pool = total - tp_pool
    prec_pool = tp_pool / (tp_pool + fp_pool) if tp_pool + fp_pool > 0 else 0.0
    rec_pool = tp_pool / (tp_pool + fn_pool) if tp_pool + fn_pool > 0 else 0.0
    micro = 2 * prec_pool * rec_pool / (prec_pool + rec_pool) if prec_pool + rec_pool > 0 else 0.0
    return F1Triple(micro=float(micro), macro=macro, f=(float(micro) + macro) / 2.0)


@dataclass
class EvalReport:
    """Per-fold and aggregate scores for one (source, dest, architecture) run."""

    source: str
    dest: str
    architecture: str
    folds: list[F1Triple]
    seed: int

    @property
    def fold_f(self) -> list[float]:
        return [s.f for s in self.folds]

    @property
    def f_mean(self) -> float:
        return float(np.mean(self.fold_f))

    @property
    def f_std(self) -> float:
        if len(self.folds) < 2:
            return 0.0
        return float(np.std(self.fold_f, ddof=1))

    @property
    def f_micro_mean(self) -> float:
        return float(np.mean([s.micro for s in self.folds]))

    @property
    def f_macro_mean(self) -> float:
        return float(np.mean([s.macro for s in self.folds]))

    def to_dict(self) -> dict:
        return {
            "source": self.source,
            "dest": self.dest,
            "arch": self.architecture,
            "folds": self.fold_f,
            "folds_micro": [s.micro for s in self.folds],
            "folds_macro": [s.macro for s in self.folds],
            "f_micro_mean": self.f_micro_mean,
            "f_macro_mean": self.f_macro_mean,
            "f_mean": self.f_mean,
            "f_std": self.f_std,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        folds = [
            F1Triple(micro=mi, macro=ma, f=(mi + ma) / 2.0)
            for mi, ma in zip(d["folds_micro"], d["folds_macro"])
        ]
        return cls(source=d["source"], dest=d["dest"], architecture=d["arch"],
                   folds=folds, seed=d["seed"])


@dataclass
class TransferResult:
    """Cross-target score relative to an in-target calibration score."""

    q: float
    cross_f: float
    calibration_f: float
    q_fold_mean: float | None = None


def _mean_f(report) -> float:
    if hasattr(report, "f_mean"):
        return report.f_mean
    return float(report)


def transfer_ratio(cross, calibration) -> TransferResult:
    """Ratio of mean cross-target F to mean in-target calibration F.

    When both arguments are reports with the same fold count, the mean of
    per-fold ratios is also reported (the two aggregations differ in the
    third digit on real runs; the ratio of means is the primary number).
    """
    cross_f = _mean_f(cross)
    cal_f = _mean_f(calibration)
    if cal_f <= 0:
        raise ValueError(f"calibration score must be positive, got {cal_f}")
    q_fold = None
    if hasattr(cross, "fold_f") and hasattr(calibration, "fold_f"):
        a, b = cross.fold_f, calibration.fold_f
        if len(a) == len(b) and all(x > 0 for x in b):
            q_fold = float(np.mean([x / y for x, y in zip(a, b)]))
    return TransferResult(q=cross_f / cal_f, cross_f=cross_f, calibration_f=cal_f,
                          q_fold_mean=q_fold)


# ---------------------------------------------------------------------------
# Paired t-test (two-sided) via the regularized incomplete beta function
# ---------------------------------------------------------------------------


def _betacf(a: float, b: float, x: float) -> float:
    # Lentz-style continued fraction for the incomplete beta function.
    max_iter = 300
    eps = 1e-15
    fpmin = 1e-300
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < fpmin:
        d = fpmin
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < fpmin:
            d = fpmin
        c = 1.0 + aa / c
        if abs(c) < fpmin:
            c = fpmin
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < fpmin:
            d = fpmin
        c = 1.0 + aa / c
        if abs(c) < fpmin:
            c = fpmin
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            return h
    raise RuntimeError("incomplete beta continued fraction did not converge")


def _betai(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b)."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
        + a * math.log(x) + b * math.log(1.0 - x)
    )
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def student_t_p_value(t: float, df: int) -> float:
    """Two-sided p for a Student-t statistic with df degrees of freedom."""
    if df < 1:
        raise ValueError("degrees of freedom must be >= 1")
    return _betai(df / 2.0, 0.5, df / (df + t * t))


def paired_t_test(scores_a, scores_b) -> tuple[float, float]:
    """(t statistic, two-sided p) for paired scores.

    Raises DegenerateTTestError when the differences have no variance.
    """
    a = np.asarray(scores_a, dtype=np.float64)
    b = np.asarray(scores_b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"paired samples must be equal-length vectors, got {a.shape} and {b.shape}")
    n = a.size
    if n < 2:
        raise ValueError("need at least two pairs")
    d = a - b
    sd = float(np.std(d, ddof=1))
    if sd == 0.0:
        raise DegenerateTTestError("paired differences have zero variance")
    t = float(np.mean(d)) / (sd / math.sqrt(n))
    return t, student_t_p_value(t, n - 1)


# ---------------------------------------------------------------------------
# Protocols
# ---------------------------------------------------------------------------


def evaluate_model(model: StanceModel, instances: list[Instance]) -> ConfusionCounts:
    """Eval-mode predictions over a dataset, reduced to confusion counts."""
    counts = ConfusionCounts(model.config.classes)
    with ad.no_grad():
        for inst in instances:
            pred = model.predict_tokens(inst.tokens, tokenize(inst.target))
            counts.add(inst.label, pred.label)
    return counts


def _split(instances: list[Instance], indices) -> list[Instance]:
    return [instances[i] for i in indices]


def run_cross_target(
    source: str,
    dest: str,
    architecture,
    model_config: ModelConfig,
    train_config,
    instances: list[Instance],
    embeddings: EmbeddingMatrix,
    rng: Rng,
    k: int = 10,
) -> EvalReport:
    """Train on the source target (one fold held out for validation per
    round), test every round on the full destination set."""
    from .training import train

    model_config = _with_architecture(model_config, architecture)
    src = filter_target(instances, source)
    dst = filter_target(instances, dest)
    if not src:
        raise ValueError(f"no instances for source target {source!r}")
    if not dst:
        raise ValueError(f"no instances for destination target {dest!r}")
    plan = stratified_folds(src, k, rng.child("folds"))
    scores = []
    for i in range(k):
        val_set = _split(src, plan.folds[i])
        train_set = _split(src, plan.train_indices(i))
        model, _ = train(model_config, train_config, train_set, val_set,
                         embeddings, rng.child(f"fold{i}"))
        scores.append(f1_scores(evaluate_model(model, dst)))
    return EvalReport(source=source, dest=dest, architecture=str(model_config.architecture),
                      folds=scores, seed=rng.seed)


def run_in_target(
    target: str,
    architecture,
    model_config: ModelConfig,
    train_config,
    instances: list[Instance],
    embeddings: EmbeddingMatrix,
    rng: Rng,
    k: int = 10,
) -> EvalReport:
    """k-fold in-target protocol: test on the held-out fold, validate on a
    fold-sized stratified slice carved from the training folds."""
    from .training import train

    model_config = _with_architecture(model_config, architecture)
    data = filter_target(instances, target)
    if not data:
        raise ValueError(f"no instances for target {target!r}")
    plan = stratified_folds(data, k, rng.child("folds"))
    scores = []
    for i in range(k):
        test_set = _split(data, plan.folds[i])
        remaining = _split(data, plan.train_indices(i))
        val_k = max(2, k - 1)
        val_plan = stratified_folds(remaining, val_k, rng.child(f"val{i}"))
        val_set = _split(remaining, val_plan.folds[0])
        train_set = _split(remaining, val_plan.train_indices(0))
        model, _ = train(model_config, train_config, train_set, val_set,
                         embeddings, rng.child(f"fold{i}"))
        scores.append(f1_scores(evaluate_model(model, test_set)))
    return EvalReport(source=target, dest=target, architecture=str(model_config.architecture),
                      folds=scores, seed=rng.seed)


def _with_architecture(config: ModelConfig, architecture) -> ModelConfig:
    from dataclasses import replace

    from .models import Architecture

    arch = Architecture(architecture)
    if config.architecture is arch:
        return config
    return replace(config, architecture=arch)
