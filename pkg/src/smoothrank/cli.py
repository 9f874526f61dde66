"""Command-line entry points: train, evaluate, gradcheck, verify-bounds, sweep.

Every command takes a flat JSON config (--config), writes its outputs plus
the fully resolved config into an output directory, and is deterministic
given (config, seed): CSV and JSON outputs are byte-identical across reruns.
Wall-clock timings go to a separate .log file only. The output root defaults
to the current directory and can be moved with the SMOOTHRANK_OUT
environment variable.

Exit codes: 0 success, 2 config error, 3 data error, 4 training divergence,
5 gradient-check tolerance breach.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import bounds_lab, data_io, ltr_model
from .gradients import finite_difference_check
from .smooth_metrics import LOSS_KINDS, SMOOTH_AP, make_loss_spec
from .smoothi import GRAD_MODES

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_DIVERGENCE = 4
EXIT_GRADCHECK = 5

# the reference training recipe; --strict pins hyperparameters to it
STRICT_LEARNING_RATES = (1e-2, 1e-3)
STRICT_ALPHAS = (0.1, 1.0, 10.0, 100.0)
STRICT_DELTA = 0.1
STRICT_EPOCHS = 50
STRICT_BATCH = 128

ENV_OUTPUT_ROOT = "SMOOTHRANK_OUT"


class ConfigError(ValueError):
    pass


_DATASET_KEYS = {
    "dataset",
    "n_queries",
    "docs_per_query",
    "feature_dim",
    "train_queries",
    "validation_queries",
    "test_queries",
    "data_seed",
    "graded",
    "train_path",
    "vali_path",
    "test_path",
}
_LOSS_KEYS = {"loss_kind", "loss_k", "alpha", "delta", "grad_mode", "shift_margin"}

ALLOWED_KEYS = {
    "train": _DATASET_KEYS
    | _LOSS_KEYS
    | {
        "learning_rate",
        "epochs",
        "batch_size_queries",
        "hidden_dim",
        "select_cutoff",
        "seed",
        "output_dir",
    },
    "evaluate": _DATASET_KEYS | {"checkpoint", "split", "cutoffs", "run_tag", "seed", "output_dir"},
    "gradcheck": {
        "instances",
        "min_docs",
        "max_docs",
        "max_cutoff",
        "alpha_max",
        "delta",
        "grad_modes",
        "loss_kinds",
        "step_h",
        "tolerance",
        "seed",
        "output_dir",
    },
    "verify-bounds": {
        "instances",
        "min_docs",
        "max_docs",
        "k_values",
        "delta",
        "alphas",
        "alpha_factors",
        "seed",
        "output_dir",
    },
    "sweep": _DATASET_KEYS
    | {
        "loss_kind",
        "loss_k",
        "grad_mode",
        "shift_margin",
        "alpha_grid",
        "delta_grid",
        "learning_rate",
        "epochs",
        "batch_size_queries",
        "hidden_dim",
        "select_cutoff",
        "seed",
        "output_dir",
    },
}


def _load_config(path: str, command: str, seed_override: int | None) -> dict:
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(raw) - ALLOWED_KEYS[command]
    if unknown:
        raise ConfigError(f"unknown config keys for {command}: {sorted(unknown)}")
    if seed_override is not None:
        raw["seed"] = seed_override
    return raw


def _out_dir(config: dict, command: str) -> Path:
    root = Path(os.environ.get(ENV_OUTPUT_ROOT, "."))
    out = root / config.get("output_dir", f"runs/{command}")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _write_csv(path: Path, header: list[str], rows: list[dict]) -> None:
    def fmt(value) -> str:
        if isinstance(value, bool):
            return "true" if value else "false"
        if isinstance(value, float):
            return repr(value)
        return str(value)

    lines = [",".join(header)]
    lines += [",".join(fmt(row[col]) for col in header) for row in rows]
    path.write_text("\n".join(lines) + "\n")


def _log(path: Path, lines: list[str]) -> None:
    stamp = time.strftime("%Y-%m-%d %H:%M:%S")
    with path.open("a") as fh:
        for line in lines:
            fh.write(f"[{stamp}] {line}\n")


def _load_dataset(config: dict) -> data_io.Dataset:
    kind = config.get("dataset", "synthetic")
    if kind == "synthetic":
        train_q = int(config.get("train_queries", 100))
        val_q = int(config.get("validation_queries", 20))
        test_q = int(config.get("test_queries", 0))
        total = int(config.get("n_queries", train_q + val_q + test_q))
        ds = data_io.synthesize(
            total,
            int(config.get("docs_per_query", 20)),
            int(config.get("feature_dim", 10)),
            seed=int(config.get("data_seed", 0)),
            graded=bool(config.get("graded", False)),
        )
        return ds.split_by_counts(train_q, val_q, test_q)
    if kind == "svmlight":
        paths = {}
        for name, key in (("train", "train_path"), ("vali", "vali_path"), ("test", "test_path")):
            if key in config:
                paths[name] = config[key]
        if "train" not in paths:
            raise ConfigError("svmlight dataset requires train_path")
        paths.setdefault("vali", paths["train"])
        paths.setdefault("test", paths["train"])
        return data_io.assemble_folds([paths])[0]
    raise ConfigError(f"unknown dataset kind {kind!r} (expected 'synthetic' or 'svmlight')")


def _loss_from_config(config: dict, strict: bool):
    kind = config.get("loss_kind", "ndcg@k")
    if kind not in LOSS_KINDS:
        raise ConfigError(f"loss_kind must be one of {LOSS_KINDS}, got {kind!r}")
    alpha = float(config.get("alpha", 1.0))
    delta = float(config.get("delta", 0.1))
    grad_mode = config.get("grad_mode", "stop_gradient")
    if grad_mode not in GRAD_MODES:
        raise ConfigError(f"grad_mode must be one of {GRAD_MODES}, got {grad_mode!r}")
    if strict:
        if alpha not in STRICT_ALPHAS:
            raise ConfigError(f"--strict requires alpha in {STRICT_ALPHAS}, got {alpha}")
        if delta != STRICT_DELTA:
            raise ConfigError(f"--strict requires delta == {STRICT_DELTA}, got {delta}")
    loss_k = config.get("loss_k")
    try:
        return make_loss_spec(
            kind,
            k=None if loss_k is None else int(loss_k),
            alpha=alpha,
            delta=delta,
            grad_mode=grad_mode,
            shift_margin=float(config.get("shift_margin", 1.0)),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _train_config(config: dict, loss, strict: bool) -> ltr_model.TrainConfig:
    lr = float(config.get("learning_rate", 1e-3))
    epochs = int(config.get("epochs", 50))
    batch = int(config.get("batch_size_queries", 128))
    if strict:
        if lr not in STRICT_LEARNING_RATES:
            raise ConfigError(f"--strict requires learning_rate in {STRICT_LEARNING_RATES}, got {lr}")
        if epochs != STRICT_EPOCHS:
            raise ConfigError(f"--strict requires epochs == {STRICT_EPOCHS}, got {epochs}")
        if batch != STRICT_BATCH:
            raise ConfigError(f"--strict requires batch_size_queries == {STRICT_BATCH}, got {batch}")
    elif lr not in STRICT_LEARNING_RATES:
        print(
            f"warning: learning_rate {lr} is outside the reference grid {STRICT_LEARNING_RATES}",
            file=sys.stderr,
        )
    select = config.get("select_cutoff")
    try:
        return ltr_model.TrainConfig(
            loss=loss,
            learning_rate=lr,
            batch_size_queries=batch,
            epochs=epochs,
            seed=int(config.get("seed", 0)),
            hidden_dim=int(config.get("hidden_dim", 1024)),
            select_cutoff=None if select is None else int(select),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _resolved(config: dict, command: str, defaults: dict) -> dict:
    out = dict(defaults)
    out.update(config)
    out["command"] = command
    return out


def _history_rows(history: ltr_model.TrainHistory) -> tuple[list[str], list[dict]]:
    metric_keys = sorted(history.records[0].val_metrics) if history.records else []
    header = ["epoch", "train_loss"] + [f"val_{k}" for k in metric_keys]
    rows = []
    for rec in history.records:
        row = {"epoch": rec.epoch, "train_loss": rec.train_loss}
        row.update({f"val_{k}": rec.val_metrics[k] for k in metric_keys})
        rows.append(row)
    return header, rows


def cmd_train(config: dict, strict: bool) -> int:
    loss = _loss_from_config(config, strict)
    train_cfg = _train_config(config, loss, strict)
    dataset = _load_dataset(config)
    out = _out_dir(config, "train")
    scorer, history = ltr_model.train(dataset, train_cfg)

    resolved = _resolved(config, "train", {
        "loss_kind": loss.kind,
        "alpha": loss.params.alpha,
        "delta": loss.params.delta,
        "grad_mode": loss.params.grad_mode,
        "learning_rate": train_cfg.learning_rate,
        "epochs": train_cfg.epochs,
        "batch_size_queries": train_cfg.batch_size_queries,
        "hidden_dim": train_cfg.hidden_dim,
        "seed": train_cfg.seed,
    })
    resolved_text = json.dumps(resolved, indent=2, sort_keys=True)
    hashed = {k: v for k, v in resolved.items() if k != "output_dir"}
    ltr_model.save_checkpoint(
        scorer,
        out / "checkpoint.json",
        extra={
            "loss": loss.label(),
            "best_epoch": history.best_epoch,
            "config_sha256": hashlib.sha256(
                json.dumps(hashed, sort_keys=True).encode()
            ).hexdigest(),
        },
    )
    header, rows = _history_rows(history)
    _write_csv(out / "history.csv", header, rows)
    (out / "resolved_config.json").write_text(resolved_text + "\n")
    data_io.write_stats_json(dataset, out / "dataset_stats.json")
    _log(out / "train.log", [f"epoch {r.epoch}: {r.seconds:.3f}s" for r in history.records]
         + [f"best epoch {history.best_epoch} by validation {history.select_metric}"])
    print(f"trained {loss.label()}: best epoch {history.best_epoch}, "
          f"validation {history.select_metric}="
          f"{history.records[history.best_epoch - 1].val_metrics[history.select_metric]:.4f}")
    return EXIT_OK


def cmd_evaluate(config: dict, strict: bool) -> int:
    if "checkpoint" not in config:
        raise ConfigError("evaluate requires a checkpoint path")
    dataset = _load_dataset(config)
    try:
        scorer = ltr_model.load_checkpoint(config["checkpoint"])
    except FileNotFoundError:
        raise ConfigError(f"checkpoint not found: {config['checkpoint']}") from None
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if scorer.input_dim != dataset.feature_dim:
        raise ConfigError(
            f"checkpoint expects {scorer.input_dim} features, dataset has {dataset.feature_dim}"
        )
    split = config.get("split", "test")
    cutoffs = tuple(int(c) for c in config.get("cutoffs", (1, 5, 10)))
    result = ltr_model.evaluate(scorer, dataset, split, cutoffs=cutoffs)
    out = _out_dir(config, "evaluate")
    _write_json(out / "metrics.json", result.to_dict())
    tag = config.get("run_tag", "smoothrank")
    lines = []
    for qid in sorted(dataset.query_ids(split)):
        g = dataset.groups[qid]
        scores = scorer.forward(g.features, training=False)
        order = np.argsort(-scores, kind="stable")
        for rank, idx in enumerate(order, start=1):
            lines.append(f"{qid} Q0 {g.doc_ids[idx]} {rank} {float(scores[idx])!r} {tag}")
    (out / "run.txt").write_text("\n".join(lines) + "\n")
    data_io.write_qrels(dataset, out / "qrels.txt", split=split)
    data_io.write_stats_json(dataset, out / "dataset_stats.json")
    _write_json(out / "resolved_config.json", _resolved(config, "evaluate", {
        "split": split, "cutoffs": list(cutoffs), "run_tag": tag,
    }))
    summary = " ".join(f"{k}={v:.4f}" for k, v in sorted(result.summary.items()))
    print(f"{split}: {summary} (skipped {result.skipped_queries} zero-relevance queries)")
    return EXIT_OK


def cmd_gradcheck(config: dict, strict: bool) -> int:
    rng = np.random.default_rng(int(config.get("seed", 0)))
    instances = int(config.get("instances", 100))
    min_docs = int(config.get("min_docs", 2))
    max_docs = int(config.get("max_docs", 10))
    max_cutoff = int(config.get("max_cutoff", 5))
    alpha_max = float(config.get("alpha_max", 10.0))
    delta = float(config.get("delta", 0.1))
    h = float(config.get("step_h", 1e-4))
    tolerance = float(config.get("tolerance", 1e-4))
    kinds = config.get("loss_kinds", list(LOSS_KINDS))
    modes = config.get("grad_modes", list(GRAD_MODES))
    for kind in kinds:
        if kind not in LOSS_KINDS:
            raise ConfigError(f"unknown loss kind {kind!r}")
    for mode in modes:
        if mode not in GRAD_MODES:
            raise ConfigError(f"unknown grad mode {mode!r}")

    rows = []
    worst = 0.0
    for i in range(instances):
        n = int(rng.integers(min_docs, max_docs + 1))
        raw = rng.random(n)
        rel = (rng.random(n) < 0.4).astype(float)
        if rel.sum() == 0:
            rel[int(rng.integers(n))] = 1.0
        if rel.sum() == n and n > 1:
            # an all-relevant list has a constant loss; nothing to check
            rel[int(rng.integers(n))] = 0.0
        k = int(rng.integers(1, min(max_cutoff, n) + 1))
        # log-uniform draw, matching the log-spaced hyperparameter grid
        alpha = float(np.exp(rng.uniform(np.log(0.1), np.log(alpha_max))))
        for kind in kinds:
            for mode in modes:
                spec = make_loss_spec(kind, k=None if kind == SMOOTH_AP else k,
                                      alpha=alpha, delta=delta, grad_mode=mode)
                report = finite_difference_check(rel, raw, spec, h=h)
                worst = max(worst, report.max_rel_err)
                rows.append({
                    "instance": i, "kind": kind, "mode": mode, "n": n,
                    "k": 0 if kind == SMOOTH_AP else k, "alpha": alpha,
                    "max_abs_err": report.max_abs_err,
                    "max_rel_err": report.max_rel_err,
                    "pass": report.max_rel_err <= tolerance,
                })
    out = _out_dir(config, "gradcheck")
    header = ["instance", "kind", "mode", "n", "k", "alpha", "max_abs_err", "max_rel_err", "pass"]
    _write_csv(out / "gradcheck.csv", header, rows)
    _write_json(out / "resolved_config.json", _resolved(config, "gradcheck", {
        "instances": instances, "max_docs": max_docs, "max_cutoff": max_cutoff,
        "alpha_max": alpha_max, "delta": delta, "step_h": h, "tolerance": tolerance,
        "seed": int(config.get("seed", 0)),
    }))
    failed = [r for r in rows if not r["pass"]]
    print(f"gradcheck: {len(rows)} checks, worst max_rel_err={worst:.3e}, "
          f"{len(failed)} above tolerance {tolerance}")
    return EXIT_GRADCHECK if failed else EXIT_OK


def cmd_verify_bounds(config: dict, strict: bool) -> int:
    delta = float(config.get("delta", 0.1))
    if not 0.0 < delta < 0.5:
        raise ConfigError(f"delta must lie in (0, 0.5), got {delta}")
    alphas = config.get("alphas")
    factors = config.get("alpha_factors", [1.05, 1.5, 3.0])
    rows, summary = bounds_lab.bound_sweep(
        instances=int(config.get("instances", 100)),
        n_range=(int(config.get("min_docs", 4)), int(config.get("max_docs", 10))),
        k_values=[int(k) for k in config.get("k_values", [2, 3, 5])],
        delta=delta,
        seed=int(config.get("seed", 0)),
        alphas=None if alphas is None else [float(a) for a in alphas],
        alpha_factors=[float(f) for f in factors],
    )
    out = _out_dir(config, "verify-bounds")
    header = ["instance", "n", "k", "alpha", "delta", "beta", "gamma",
              "alpha_threshold", "epsilon_alpha", "max_err", "holds", "status"]
    _write_csv(out / "bounds.csv", header, rows)
    _write_json(out / "summary.json", summary)
    _write_json(out / "resolved_config.json", _resolved(config, "verify-bounds", {
        "delta": delta, "seed": int(config.get("seed", 0)),
    }))
    print(f"verify-bounds: {summary['checked']} checked, {summary['skipped']} skipped, "
          f"fraction holding {summary['fraction_holding']:.3f}")
    return EXIT_OK


def cmd_sweep(config: dict, strict: bool) -> int:
    alpha_grid = [float(a) for a in config.get("alpha_grid", [0.1, 1.0, 10.0, 100.0])]
    delta_grid = [float(d) for d in config.get("delta_grid", [0.05, 0.1, 0.2, 0.3, 0.45])]
    dataset = _load_dataset(config)
    rows = []
    best = None
    for alpha in alpha_grid:
        for d in delta_grid:
            cell_cfg = dict(config)
            cell_cfg["alpha"] = alpha
            cell_cfg["delta"] = d
            loss = _loss_from_config(cell_cfg, strict)
            train_cfg = _train_config(cell_cfg, loss, strict)
            _, history = ltr_model.train(dataset, train_cfg)
            value = history.records[history.best_epoch - 1].val_metrics[history.select_metric]
            rows.append({"alpha": alpha, "delta": d, "val_ndcg": value,
                         "best_epoch": history.best_epoch})
            if best is None or value > best["val_ndcg"]:
                best = rows[-1]
    out = _out_dir(config, "sweep")
    _write_csv(out / "sweep.csv", ["alpha", "delta", "val_ndcg", "best_epoch"], rows)
    _write_json(out / "best.json", best)
    _write_json(out / "resolved_config.json", _resolved(config, "sweep", {
        "alpha_grid": alpha_grid, "delta_grid": delta_grid,
        "seed": int(config.get("seed", 0)),
    }))
    print(f"sweep: best cell alpha={best['alpha']} delta={best['delta']} "
          f"val_ndcg={best['val_ndcg']:.4f}")
    return EXIT_OK


COMMANDS = {
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "gradcheck": cmd_gradcheck,
    "verify-bounds": cmd_verify_bounds,
    "sweep": cmd_sweep,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="smoothrank",
        description="Differentiable ranking: train/evaluate scorers, check gradients, verify error bounds.",
    )
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="flat JSON config file")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument(
        "--strict",
        action="store_true",
        help="pin hyperparameters to the reference recipe (lr in {1e-2,1e-3}, "
        "50 epochs, batch 128, alpha grid {0.1,1,10,100}, delta 0.1)",
    )
    args = parser.parse_args(argv)
    try:
        config = _load_config(args.config, args.command, args.seed)
        return COMMANDS[args.command](config, args.strict)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (data_io.ParseError, data_io.SchemaError, data_io.DatasetError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ltr_model.DivergenceError as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE


if __name__ == "__main__":
    sys.exit(main())
