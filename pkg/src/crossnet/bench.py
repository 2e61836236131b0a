"""Benchmark the numba kernel backend against the pure-numpy fallback.

Two levels: the raw LSTM scan kernels (forward + backward per call) and a
full training epoch on a synthetic workload, which includes the autodiff
and optimizer overhead around the kernels.
"""

from __future__ import annotations

import time

import numpy as np

from . import kernels
from .corpus import EmbeddingMatrix, Instance, STANCES, Vocabulary
from .models import ModelConfig
from .rng import Rng
from .training import TrainConfig, train


def _kernel_inputs(hidden: int, seq_len: int, rng: Rng):
    zx = rng.normal(0.0, 0.5, (seq_len, 4 * hidden))
    wh = rng.normal(0.0, 0.1, (hidden, 4 * hidden))
    b = np.zeros(4 * hidden)
    h0 = rng.normal(0.0, 0.5, hidden)
    c0 = rng.normal(0.0, 0.5, hidden)
    dhs = rng.normal(0.0, 0.5, (seq_len, hidden))
    dlast = rng.normal(0.0, 0.5, hidden)
    return zx, wh, b, h0, c0, dhs, dlast


def bench_kernels(hidden: int = 60, seq_len: int = 20, repeats: int = 2000,
                  backends=("numpy", "numba")) -> list[dict]:
    """Seconds per forward+backward scan call, per backend."""
    results = []
    rng = Rng(0)
    zx, wh, b, h0, c0, dhs, dlast = _kernel_inputs(hidden, seq_len, rng)
    for name in backends:
        try:
            backend = kernels.get_backend(name)
        except ImportError:
            results.append({"backend": name, "available": False})
            continue
        fwd, bwd = backend.lstm_seq_forward, backend.lstm_seq_backward
        hs, cs, gates, tanhc = fwd(zx, wh, b, h0, c0)  # warmup triggers JIT
        bwd(wh, h0, c0, hs, cs, gates, tanhc, dhs, dlast, dlast)
        start = time.perf_counter()
        for _ in range(repeats):
            hs, cs, gates, tanhc = fwd(zx, wh, b, h0, c0)
            bwd(wh, h0, c0, hs, cs, gates, tanhc, dhs, dlast, dlast)
        elapsed = time.perf_counter() - start
        results.append({
            "backend": name,
            "available": True,
            "per_call_us": 1e6 * elapsed / repeats,
            "total_s": elapsed,
            "repeats": repeats,
        })
    return results


def _synthetic_dataset(n: int, seq_len: int, rng: Rng) -> tuple[list[Instance], EmbeddingMatrix]:
    vocab = Vocabulary(f"w{i}" for i in range(50))
    emb = rng.normal(0.0, 0.5, (len(vocab), 16))
    instances = []
    for i in range(n):
        words = [f"w{int(rng.random() * 50)}" for _ in range(seq_len)]
        instances.append(Instance(
            id=str(i), target="bench target", text=" ".join(words),
            tokens=words, stance=STANCES[i % 3],
        ))
    return instances, EmbeddingMatrix(matrix=emb, vocab=vocab, coverage=1.0)


def bench_epoch(hidden: int = 60, n_instances: int = 64, seq_len: int = 20,
                backends=("numpy", "numba")) -> list[dict]:
    """Seconds for one full training epoch on a synthetic dataset."""
    results = []
    instances, emb = _synthetic_dataset(n_instances, seq_len, Rng(1))
    mcfg = ModelConfig(hidden=hidden, mlp=hidden, attention=hidden,
                       embedding_dim=16, architecture="crossnet")
    tcfg = TrainConfig(max_epochs=1, patience=1, batch_size=16, seed=3)
    for name in backends:
        try:
            kernels.get_backend(name)
        except ImportError:
            results.append({"backend": name, "available": False})
            continue
        prev = kernels.use_backend(name)
        try:
            train(mcfg, tcfg, instances, instances, emb, Rng(3))  # warmup (JIT)
            start = time.perf_counter()
            train(mcfg, tcfg, instances, instances, emb, Rng(3))
            elapsed = time.perf_counter() - start
        finally:
            kernels.use_backend(prev)
        results.append({
            "backend": name,
            "available": True,
            "epoch_s": elapsed,
            "instances": n_instances,
        })
    return results


def format_results(kernel_rows: list[dict], epoch_rows: list[dict]) -> str:
    lines = ["LSTM scan kernel (forward + backward per call):"]
    base = None
    for row in kernel_rows:
        if not row["available"]:
            lines.append(f"  {row['backend']:<6} unavailable")
            continue
        note = ""
        if base is None:
            base = row["per_call_us"]
        elif row["per_call_us"] > 0:
            note = f"  ({base / row['per_call_us']:.1f}x vs {kernel_rows[0]['backend']})"
        lines.append(f"  {row['backend']:<6} {row['per_call_us']:9.1f} us/call{note}")
    lines.append("training epoch (synthetic, includes autodiff overhead):")
    base = None
    for row in epoch_rows:
        if not row["available"]:
            lines.append(f"  {row['backend']:<6} unavailable")
            continue
        note = ""
        if base is None:
            base = row["epoch_s"]
        elif row["epoch_s"] > 0:
            note = f"  ({base / row['epoch_s']:.1f}x vs {epoch_rows[0]['backend']})"
        lines.append(f"  {row['backend']:<6} {row['epoch_s']:9.3f} s/epoch{note}")
    return "\n".join(lines)
