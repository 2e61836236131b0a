"""Command-line surface: training, evaluation, attention export, aspect
extraction, run-record replay, and the kernel backend benchmark.

Every train/eval invocation writes a JSON run record under the runs
directory whose config snapshot is sufficient to reproduce the run exactly
(`crossnet rerun --run runs/<id>.json`). Exit codes: 0 success, 1 runtime
failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from dataclasses import dataclass, field

from . import bench as bench_mod
from .corpus import (
    build_embeddings,
    build_vocabulary,
    filter_target,
    load_semeval,
    stratified_folds,
    target_report,
    tokenize,
)
from .evaluation import EvalReport, run_cross_target, run_in_target, transfer_ratio
from .models import Architecture, ModelConfig, StanceModel
from .rng import Rng
from .training import TrainConfig, train

log = logging.getLogger(__name__)

TARGET_ABBREV = {
    "CC": "Climate Change is a Real Concern",
    "FM": "Feminist Movement",
    "HC": "Hillary Clinton",
    "LA": "Legalization of Abortion",
    "DT": "Donald Trump",
}


class UsageError(Exception):
    """Bad flag values detected after argparse (exit code 2)."""


def _load_target_map(path: str | None) -> dict[str, str]:
    if path is None:
        return dict(TARGET_ABBREV)
    with open(path, encoding="utf-8") as fh:
        loaded = json.load(fh)
    if not isinstance(loaded, dict):
        raise UsageError(f"{path}: target map must be a JSON object")
    return {str(k): str(v) for k, v in loaded.items()}


def resolve_target(name: str, target_map: dict[str, str], known_targets) -> str:
    if name in target_map:
        return target_map[name]
    if name in known_targets:
        return name
    known = ", ".join(sorted(target_map))
    raise UsageError(
        f"unknown target {name!r}; known abbreviations: {known}; "
        f"or pass one of the target strings present in the data file"
    )


def _atomic_write_json(path: str, payload: dict) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)


def _new_run_id(command: str) -> str:
    return f"{command}-{time.strftime('%Y%m%d-%H%M%S')}-{time.time_ns() % 1_000_000:06d}"


def _model_config(cfg: dict) -> ModelConfig:
    return ModelConfig.from_dict(cfg["model"])


def _train_config(cfg: dict) -> TrainConfig:
    return TrainConfig.from_dict(cfg["train"])


def _prepare_data(cfg: dict):
    instances = load_semeval(cfg["data"])
    vocab = build_vocabulary(instances)  # whole file, so cross-target text keeps coverage
    embeddings = build_embeddings(vocab, cfg["glove"], Rng(cfg["seed"]).child("oov"))
    return instances, embeddings


def format_eval_row(arch: str, src: str, dst: str, report: EvalReport, q: float | None) -> str:
    row = f"{arch} {src}→{dst} f={100 * report.f_mean:.1f}({100 * report.f_std:.1f})"
    if q is not None:
        row += f" q={q:.2f}"
    return row


# ---------------------------------------------------------------------------
# Command bodies, driven by plain config dicts so run records can replay them
# ---------------------------------------------------------------------------


def do_train(cfg: dict, runs_dir: str) -> dict:
    instances, embeddings = _prepare_data(cfg)
    subset = filter_target(instances, cfg["target"])
    if not subset:
        raise UsageError(f"no instances for target {cfg['target']!r} in {cfg['data']}")
    rng = Rng(cfg["seed"])
    plan = stratified_folds(subset, cfg["val_split"], rng.child("split"))
    val_set = [subset[i] for i in plan.folds[0]]
    train_set = [subset[i] for i in plan.train_indices(0)]
    model, history = train(_model_config(cfg), _train_config(cfg), train_set, val_set,
                           embeddings, rng.child("train"))

    os.makedirs(runs_dir, exist_ok=True)
    run_id = _new_run_id("train")
    checkpoint = os.path.join(runs_dir, f"{run_id}.npz")
    model.save(checkpoint)
    record = {
        "run_id": run_id,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S"),
        "command": "train",
        "config": cfg,
        "history": history.to_dict(),
        "best_val_f": history.val_f[history.best_epoch],
        "data_report": target_report(instances, cfg["target"],
                                     oov_rate=1.0 - embeddings.coverage),
        "checkpoint": checkpoint,
    }
    _atomic_write_json(os.path.join(runs_dir, f"{run_id}.json"), record)
    print(f"trained {cfg['model']['architecture']} on {cfg['target']}: "
          f"best val f={100 * record['best_val_f']:.1f} (epoch {history.best_epoch}), "
          f"checkpoint {checkpoint}")
    return record


def do_eval(cfg: dict, runs_dir: str) -> dict:
    instances, embeddings = _prepare_data(cfg)
    rng = Rng(cfg["seed"])
    mcfg = _model_config(cfg)
    tcfg = _train_config(cfg)
    if cfg["mode"] == "in":
        report = run_in_target(cfg["source"], mcfg.architecture, mcfg, tcfg,
                               instances, embeddings, rng, k=cfg["folds"])
    else:
        report = run_cross_target(cfg["source"], cfg["dest"], mcfg.architecture, mcfg,
                                  tcfg, instances, embeddings, rng, k=cfg["folds"])
    q = None
    transfer = None
    if cfg.get("calibration"):
        with open(cfg["calibration"], encoding="utf-8") as fh:
            calib_record = json.load(fh)
        calib = EvalReport.from_dict(calib_record["report"])
        result = transfer_ratio(report, calib)
        q = result.q
        transfer = {
            "q": result.q,
            "q_fold_mean": result.q_fold_mean,
            "cross_f": result.cross_f,
            "calibration_f": result.calibration_f,
            "calibration_run": cfg["calibration"],
        }

    os.makedirs(runs_dir, exist_ok=True)
    run_id = _new_run_id("eval")
    record = {
        "run_id": run_id,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S"),
        "command": "eval",
        "config": cfg,
        "report": report.to_dict(),
        "transfer": transfer,
    }
    _atomic_write_json(os.path.join(runs_dir, f"{run_id}.json"), record)
    print(format_eval_row(cfg["model"]["architecture"], cfg["source_label"],
                          cfg["dest_label"], report, q))
    print(f"run record: {os.path.join(runs_dir, run_id + '.json')}")
    return record


@dataclass
class AspectLexicon:
    """Attention statistics per token for one target's corpus."""

    target: str
    attended: dict[str, int] = field(default_factory=dict)
    total: dict[str, int] = field(default_factory=dict)
    mass: dict[str, float] = field(default_factory=dict)

    def attended_set(self) -> set[str]:
        return {tok for tok, n in self.attended.items() if n > 0}

    def ranked(self, top: int) -> list[dict]:
        order = sorted(self.attended_set(), key=lambda t: (-self.mass[t], t))
        return [
            {"token": t, "attended": self.attended[t], "total": self.total[t],
             "mass": self.mass[t]}
            for t in order[:top]
        ]


def build_lexicon(model: StanceModel, instances, multiplier: float) -> AspectLexicon:
    """Tokens whose attention weight reaches multiplier/|P| in some sentence."""
    lex = AspectLexicon(target=instances[0].target if instances else "")
    for inst in instances:
        pred = model.predict_tokens(inst.tokens, tokenize(inst.target))
        weights = pred.attention.weights.value
        threshold = multiplier / len(inst.tokens)
        for tok, w in zip(inst.tokens, weights):
            lex.total[tok] = lex.total.get(tok, 0) + 1
            lex.mass[tok] = lex.mass.get(tok, 0.0) + float(w)
            if w >= threshold:
                lex.attended[tok] = lex.attended.get(tok, 0) + 1
            else:
                lex.attended.setdefault(tok, 0)
    return lex


def lexicon_intersection(a: AspectLexicon, b: AspectLexicon) -> list[str]:
    shared = a.attended_set() & b.attended_set()
    return sorted(shared, key=lambda t: (-(a.mass[t] + b.mass[t]), t))


def _load_crossnet_checkpoint(path: str) -> StanceModel:
    model = StanceModel.load(path)
    if model.config.architecture is not Architecture.CROSSNET:
        raise ValueError(
            f"{path}: checkpoint is {model.config.architecture}, which has no "
            f"attention layer; attention tools need a crossnet checkpoint"
        )
    return model


def do_attention(checkpoint: str, input_path: str, output_path: str | None) -> int:
    model = _load_crossnet_checkpoint(checkpoint)
    instances = load_semeval(input_path)
    out = sys.stdout if output_path in (None, "-") else open(output_path, "w", encoding="utf-8")
    try:
        for inst in instances:
            pred = model.predict_tokens(inst.tokens, tokenize(inst.target))
            line = {
                "id": inst.id,
                "tokens": inst.tokens,
                "weights": [float(w) for w in pred.attention.weights.value],
                "predicted": pred.stance,
                "gold": inst.stance,
            }
            out.write(json.dumps(line) + "\n")
    finally:
        if out is not sys.stdout:
            out.close()
    return len(instances)


def do_aspects(checkpoint_a: str, checkpoint_b: str, corpus_a: str, corpus_b: str,
               multiplier: float, top: int, output_path: str | None) -> dict:
    model_a = _load_crossnet_checkpoint(checkpoint_a)
    model_b = _load_crossnet_checkpoint(checkpoint_b)
    lex_a = build_lexicon(model_a, load_semeval(corpus_a), multiplier)
    lex_b = build_lexicon(model_b, load_semeval(corpus_b), multiplier)
    shared = lexicon_intersection(lex_a, lex_b)
    payload = {
        "multiplier": multiplier,
        "target_a": lex_a.target,
        "target_b": lex_b.target,
        "lexicon_a": lex_a.ranked(top),
        "lexicon_b": lex_b.ranked(top),
        "intersection": shared[:top],
    }
    text = json.dumps(payload, indent=2) + "\n"
    if output_path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(output_path, "w", encoding="utf-8") as fh:
            fh.write(text)
    return payload


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--arch", choices=[a.value for a in Architecture], default="crossnet")
    p.add_argument("--hidden", type=int, default=60, help="LSTM hidden size")
    p.add_argument("--mlp", type=int, default=60, help="MLP hidden layer size")
    p.add_argument("--attn", type=int, default=60, help="attention layer size")
    p.add_argument("--dropout", type=float, default=0.1)


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--lambda", dest="lam", type=float, default=0.01,
                   help="L2 regularization coefficient")
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--patience", type=int, default=5)
    p.add_argument("--seed", type=int, default=1)


def _add_data_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", required=True, help="stance TSV (ID, Target, Tweet, Stance)")
    p.add_argument("--glove", required=True, help="pretrained word vectors, text format")
    p.add_argument("--target-map", default=None,
                   help="JSON file overriding the abbreviation->target map")
    p.add_argument("--runs-dir", default="runs")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="crossnet",
                                     description="cross-target stance classification")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one model on one target (90/10 split)")
    _add_data_flags(p)
    p.add_argument("--target", required=True, help="target abbreviation or full name")
    p.add_argument("--val-split", type=int, default=10,
                   help="carve 1/k of the data for validation")
    _add_model_flags(p)
    _add_train_flags(p)

    p = sub.add_parser("eval", help="k-fold in-target or cross-target evaluation")
    _add_data_flags(p)
    p.add_argument("--mode", choices=["in", "cross"], required=True)
    p.add_argument("--source", required=True)
    p.add_argument("--dest", default=None)
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--calibration", default=None,
                   help="run record JSON of an in-target calibration run (prints q)")
    _add_model_flags(p)
    _add_train_flags(p)

    p = sub.add_parser("attention", help="dump per-token attention weights as JSON lines")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True, help="stance TSV to annotate")
    p.add_argument("--output", default=None, help="output path (default stdout)")

    p = sub.add_parser("aspects", help="extract highly-attended token lexicons")
    p.add_argument("--checkpoint-a", required=True)
    p.add_argument("--checkpoint-b", required=True)
    p.add_argument("--corpus-a", required=True)
    p.add_argument("--corpus-b", required=True)
    p.add_argument("--multiplier", type=float, default=2.0,
                   help="a token is highly attended when weight >= multiplier/|P|")
    p.add_argument("--top", type=int, default=50)
    p.add_argument("--output", default=None)

    p = sub.add_parser("rerun", help="re-execute a run from its run record")
    p.add_argument("--run", required=True, help="path to a run record JSON")
    p.add_argument("--runs-dir", default="runs")

    p = sub.add_parser("bench", help="compare numba and numpy kernel backends")
    p.add_argument("--hidden", type=int, default=60)
    p.add_argument("--seq-len", type=int, default=20)
    p.add_argument("--repeats", type=int, default=2000)
    p.add_argument("--instances", type=int, default=64)
    p.add_argument("--level", choices=["kernel", "epoch", "both"], default="both")

    return parser


def _config_from_args(args: argparse.Namespace) -> dict:
    return {
        "data": args.data,
        "glove": args.glove,
        "seed": args.seed,
        "model": {
            "hidden": args.hidden,
            "mlp": args.mlp,
            "attention": args.attn,
            "dropout": args.dropout,
            "classes": 3,
            "embedding_dim": 200,
            "attention_activation": "tanh",
            "architecture": args.arch,
        },
        "train": {
            "learning_rate": args.lr,
            "l2": args.lam,
            "batch_size": args.batch,
            "max_epochs": args.epochs,
            "patience": args.patience,
            "seed": args.seed,
        },
    }


def _cmd_train(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    target_map = _load_target_map(args.target_map)
    instances = load_semeval(args.data)
    known = {inst.target for inst in instances}
    cfg["target"] = resolve_target(args.target, target_map, known)
    cfg["target_label"] = args.target
    cfg["val_split"] = args.val_split
    do_train(cfg, args.runs_dir)
    return 0


def _cmd_eval(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    target_map = _load_target_map(args.target_map)
    instances = load_semeval(args.data)
    known = {inst.target for inst in instances}
    cfg["mode"] = args.mode
    cfg["source"] = resolve_target(args.source, target_map, known)
    cfg["source_label"] = args.source
    if args.mode == "cross":
        if args.dest is None:
            raise UsageError("--dest is required with --mode cross")
        cfg["dest"] = resolve_target(args.dest, target_map, known)
        cfg["dest_label"] = args.dest
    else:
        dest = args.dest if args.dest is not None else args.source
        resolved = resolve_target(dest, target_map, known)
        if resolved != cfg["source"]:
            raise UsageError("--mode in requires dest == source (or omit --dest)")
        cfg["dest"] = resolved
        cfg["dest_label"] = dest
    cfg["folds"] = args.folds
    cfg["calibration"] = args.calibration
    do_eval(cfg, args.runs_dir)
    return 0


def _cmd_rerun(args: argparse.Namespace) -> int:
    with open(args.run, encoding="utf-8") as fh:
        record = json.load(fh)
    command = record.get("command")
    if command == "train":
        do_train(record["config"], args.runs_dir)
    elif command == "eval":
        do_eval(record["config"], args.runs_dir)
    else:
        raise UsageError(f"{args.run}: unknown command {command!r} in run record")
    return 0


def _cmd_bench(args: argparse.Namespace) -> int:
    kernel_rows = []
    epoch_rows = []
    if args.level in ("kernel", "both"):
        kernel_rows = bench_mod.bench_kernels(args.hidden, args.seq_len, args.repeats)
    if args.level in ("epoch", "both"):
        epoch_rows = bench_mod.bench_epoch(args.hidden, args.instances, args.seq_len)
    print(bench_mod.format_results(kernel_rows, epoch_rows))
    return 0


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("CROSSNET_LOGLEVEL", "WARNING"))
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "train":
            return _cmd_train(args)
        if args.command == "eval":
            return _cmd_eval(args)
        if args.command == "attention":
            do_attention(args.checkpoint, args.input, args.output)
            return 0
        if args.command == "aspects":
            do_aspects(args.checkpoint_a, args.checkpoint_b, args.corpus_a,
                       args.corpus_b, args.multiplier, args.top, args.output)
            return 0
        if args.command == "rerun":
            return _cmd_rerun(args)
        if args.command == "bench":
            return _cmd_bench(args)
        raise UsageError(f"unknown command {args.command!r}")
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
