"""Experiment runner: multi-trial training with CSV/JSON outputs.

A run is fully reproducible from its RunConfig plus seed: the dataset is
drawn (or loaded) once, then each trial trains a freshly initialized
model with seed = base seed + trial index.
"""

from __future__ import annotations

import json
import statistics
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import data as data_mod
from .model import Model, ModelConfig, evaluate, train_epoch
from .training import make_optimizer

SCHEMA_VERSION = 1


@dataclass
class RunConfig:
    dataset: str = "synthetic"  # "synthetic" | "criteo"
    criteo_path: Optional[str] = None
    limit: Optional[int] = None
    synthetic: dict = field(default_factory=dict)  # SyntheticSpec overrides
    model: dict = field(default_factory=dict)  # ModelConfig overrides
    optimizer: str = "adagrad"
    learning_rate: Optional[float] = None
    epochs: int = 1
    batch_size: int = 128
    eval_every: int = 200
    seed: int = 0
    trials: int = 5
    deterministic: bool = True
    out_dir: Optional[str] = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        return cls(**d)


def load_dataset(cfg: RunConfig) -> data_mod.DatasetSplit:
    if cfg.dataset == "synthetic":
        spec = data_mod.SyntheticSpec(**cfg.synthetic)
        return data_mod.synthetic_generate(spec, seed=cfg.seed)
    if cfg.dataset == "criteo":
        if not cfg.criteo_path:
            raise data_mod.DataError(
                "criteo dataset selected but no path given; pass --criteo-path "
                "pointing at the Kaggle train.txt (or .gz)"
            )
        if not Path(cfg.criteo_path).exists():
            raise data_mod.DataError(f"dataset file not found: {cfg.criteo_path}")
        return data_mod.load_criteo_tsv(cfg.criteo_path, limit=cfg.limit)
    raise data_mod.DataError(f"unknown dataset {cfg.dataset!r}")


def run_trial(
    ds: data_mod.DatasetSplit,
    model_cfg: ModelConfig,
    optimizer_kind: str,
    seed: int,
    epochs: int = 1,
    batch_size: int = 128,
    eval_every: int = 0,
    learning_rate: Optional[float] = None,
) -> dict:
    """Train one model; returns the trace and final metrics."""
    model = Model(model_cfg, ds.cardinalities, ds.n_dense, seed=seed)
    opt = make_optimizer(optimizer_kind, learning_rate)
    trace = []
    for epoch in range(epochs):
        rows = train_epoch(
            model,
            ds.train.dense,
            ds.train.cats,
            ds.train.labels,
            opt,
            seed=seed + 1000 * epoch,
            batch_size=batch_size,
            eval_every=eval_every,
            eval_data=(ds.validation.dense, ds.validation.cats, ds.validation.labels),
        )
        for r in rows:
            r["epoch"] = epoch
        trace.extend(rows)
    test_loss, test_acc = evaluate(model, ds.test.dense, ds.test.cats, ds.test.labels)
    val_loss, val_acc = evaluate(model, ds.validation.dense, ds.validation.cats, ds.validation.labels)
    return {
        "seed": seed,
        "trace": trace,
        "test_loss": test_loss,
        "test_accuracy": test_acc,
        "val_loss": val_loss,
        "val_accuracy": val_acc,
        "params": model.param_count(),
        "embedding_params": model.embedding_param_count(),
    }


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return "" if x is None else str(x)


def write_trace_csv(path, trials: list[dict]) -> None:
    cols = ["trial", "epoch", "step", "train_loss", "val_loss", "val_accuracy"]
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(",".join(cols) + "\n")
        for t, res in enumerate(trials):
            for row in res["trace"]:
                vals = [t, row.get("epoch", 0), row["step"], row.get("train_loss"),
                        row.get("val_loss"), row.get("val_accuracy")]
                f.write(",".join(_fmt(v) for v in vals) + "\n")


def run_training(cfg: RunConfig) -> dict:
    ds = load_dataset(cfg)
    model_cfg = ModelConfig.from_dict(cfg.model)
    trials = []
    for t in range(cfg.trials):
        trials.append(
            run_trial(
                ds,
                model_cfg,
                cfg.optimizer,
                seed=cfg.seed + t,
                epochs=cfg.epochs,
                batch_size=cfg.batch_size,
                eval_every=cfg.eval_every,
                learning_rate=cfg.learning_rate,
            )
        )
    test_losses = [t["test_loss"] for t in trials]
    summary = {
        "schema_version": SCHEMA_VERSION,
        "test_loss_mean": statistics.fmean(test_losses),
        "test_loss_std": statistics.stdev(test_losses) if len(test_losses) > 1 else 0.0,
        "test_accuracy_mean": statistics.fmean(t["test_accuracy"] for t in trials),
        "val_loss_mean": statistics.fmean(t["val_loss"] for t in trials),
        "params": trials[0]["params"],
        "embedding_params": trials[0]["embedding_params"],
        "trials": [
            {k: v for k, v in t.items() if k != "trace"} for t in trials
        ],
        "config": asdict(cfg),
        "dataset_meta": {k: v for k, v in ds.meta.items()},
    }
    if cfg.out_dir:
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_trace_csv(out / "metrics.csv", trials)
        with open(out / "summary.json", "w", encoding="utf-8") as f:
            json.dump(summary, f, indent=2, sort_keys=True)
            f.write("\n")
        with open(out / "run_config.json", "w", encoding="utf-8") as f:
            f.write(cfg.to_json() + "\n")
    return summary
