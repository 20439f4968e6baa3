"""Command-line entry points: train, verify, params, gradcheck, bench."""

from __future__ import annotations

import json
import sys
import time
from pathlib import Path

import click
import numpy as np

from . import gradcheck as gc
from . import kernels
from . import partitions as parts
from .data import SyntheticSpec
from .embedding import CompositionScheme
from .model import ModelConfig, apply_threshold, collisions_to_modulus
from .runner import RunConfig, run_training

OP_TO_SCHEME = {
    "concat": "comp_concat",
    "add": "comp_add",
    "mult": "comp_mult",
    "feature": "feature_gen",
}


@click.group()
def main():
    """Compositional embeddings over complementary partitions."""


def _load_config(config_path) -> dict:
    if not config_path:
        return {}
    with open(config_path, encoding="utf-8") as f:
        return json.load(f)


def _resolve_scheme(scheme, op):
    if op is not None:
        return OP_TO_SCHEME[op]
    return scheme


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True), help="JSON run config; flags override.")
@click.option("--dataset", type=click.Choice(["synthetic", "criteo"]), default=None)
@click.option("--criteo-path", type=click.Path(), default=None)
@click.option("--limit", type=int, default=None)
@click.option("--arch", type=click.Choice(["dcn", "dlrm"]), default=None)
@click.option("--scheme", type=click.Choice(["full", "hash", "qr_mult", "comp_concat", "comp_add", "comp_mult", "feature_gen", "path"]), default=None)
@click.option("--op", type=click.Choice(sorted(OP_TO_SCHEME)), default=None, help="Shorthand for the compositional schemes.")
@click.option("--collisions", type=int, default=None)
@click.option("--threshold", type=float, default=None)
@click.option("--optimizer", type=click.Choice(["adagrad", "amsgrad", "sgd"]), default=None)
@click.option("--seed", type=int, default=None)
@click.option("--trials", type=int, default=None)
@click.option("--epochs", type=int, default=None)
@click.option("--quick", is_flag=True, help="Small synthetic preset for smoke runs.")
@click.option("--deterministic/--no-deterministic", default=True)
@click.option("--out", "out_dir", type=click.Path(), default=None)
def train(config_path, dataset, criteo_path, limit, arch, scheme, op, collisions,
          threshold, optimizer, seed, trials, epochs, quick, deterministic, out_dir):
    """Train a model over N trials; writes metrics.csv and summary.json."""
    cfg_dict = _load_config(config_path)
    cfg = RunConfig.from_dict(cfg_dict) if cfg_dict else RunConfig()
    if dataset:
        cfg.dataset = dataset
    if criteo_path:
        cfg.criteo_path = criteo_path
        cfg.dataset = "criteo"
    if limit is not None:
        cfg.limit = limit
    if optimizer:
        cfg.optimizer = optimizer
    if seed is not None:
        cfg.seed = seed
    if trials is not None:
        cfg.trials = trials
    if epochs is not None:
        cfg.epochs = epochs
    if out_dir:
        cfg.out_dir = out_dir
    cfg.deterministic = deterministic
    if quick:
        cfg.synthetic = {"n": 7000, "cardinality": 200, "num_features": 4}
        cfg.model.setdefault("divisor", 16)
        cfg.eval_every = 10
    if arch:
        cfg.model["architecture"] = arch
    resolved = _resolve_scheme(scheme, op)
    if resolved:
        cfg.model["scheme"] = resolved
    if collisions is not None:
        cfg.model["collisions"] = collisions
    if threshold is not None:
        cfg.model["threshold"] = threshold

    summary = run_training(cfg)
    click.echo(json.dumps(
        {k: summary[k] for k in ("test_loss_mean", "test_loss_std", "test_accuracy_mean", "params")},
        indent=2, sort_keys=True,
    ))
    if cfg.out_dir:
        click.echo(f"wrote {Path(cfg.out_dir) / 'metrics.csv'} and summary.json")


@main.command()
@click.option("--kind", type=click.Choice(["naive", "qr", "generalized_qr", "crt", "hash", "explicit"]), required=True)
@click.option("--domain-size", type=int, required=True)
@click.option("--moduli", type=str, default=None, help="Comma-separated, e.g. 2,3,2")
@click.option("--classes-file", type=click.Path(exists=True), default=None,
              help="JSON list of partitions, each a list of classes (member index lists).")
@click.option("--sampled", is_flag=True, help="Allow sampled (non-proof) checks above the exhaustive cap.")
@click.option("--cap", type=int, default=parts.DEFAULT_EXHAUSTIVE_CAP)
def verify(kind, domain_size, moduli, classes_file, sampled, cap):
    """Verify complementarity; exit 0 iff complementary."""
    mods = [int(x) for x in moduli.split(",")] if moduli else []
    try:
        if kind == "naive":
            ps = parts.make_naive(domain_size)
        elif kind == "qr":
            ps = parts.make_quotient_remainder(domain_size, mods[0])
        elif kind == "generalized_qr":
            ps = parts.make_generalized_qr(domain_size, mods)
        elif kind == "crt":
            ps = parts.make_crt(domain_size, mods)
        elif kind == "hash":
            ps = parts.make_hash(domain_size, mods[0])
        else:
            with open(classes_file, encoding="utf-8") as f:
                class_lists = json.load(f)
            maps = [parts.classes_to_map(p, domain_size) for p in class_lists]
            ps = parts.make_explicit(domain_size, maps)
    except parts.PartitionError as e:
        click.echo(f"FAIL construction: {e}")
        sys.exit(2)
    if domain_size > cap and not sampled:
        click.echo(f"domain size {domain_size} exceeds exhaustive cap {cap}; rerun with --sampled")
        sys.exit(2)
    result = parts.verify_complementary(ps, cap=cap)
    tuples_injective = result.complementary and result.mode == "exhaustive"
    if result.complementary:
        note = "" if result.mode == "exhaustive" else " (sampled, not proof)"
        click.echo(f"PASS: partitions are complementary{note}")
        if tuples_injective:
            click.echo("PASS: class-tuple map is injective")
        sys.exit(0)
    a, b = result.witness
    tup_a = [ps.class_index(j, a) for j in range(1, ps.k + 1)]
    click.echo(f"FAIL: witness pair ({a}, {b}) shares class tuple {tup_a}")
    sys.exit(1)


@main.command()
@click.option("--arch", type=click.Choice(["dcn", "dlrm"]), default="dlrm")
@click.option("--scheme", type=click.Choice(["full", "hash", "qr_mult", "comp_concat", "comp_add", "comp_mult", "feature_gen", "path"]), default="qr_mult")
@click.option("--op", type=click.Choice(sorted(OP_TO_SCHEME)), default=None)
@click.option("--collisions", type=int, default=4)
@click.option("--threshold", type=float, default=1)
@click.option("--cardinalities", type=str, default=None, help="Comma-separated per-feature cardinalities.")
@click.option("--threshold-sweep", type=str, default=None, help="Comma-separated thresholds, prints totals per value.")
def params(arch, scheme, op, collisions, threshold, cardinalities, threshold_sweep):
    """Per-feature embedding parameter table and totals."""
    cards = (
        [int(x) for x in cardinalities.split(",")]
        if cardinalities
        else SyntheticSpec().cardinalities()
    )
    scheme = _resolve_scheme(scheme, op)

    def total_for(tau):
        cfg = ModelConfig(architecture=arch, scheme=scheme, collisions=collisions, threshold=tau)
        rng = np.random.default_rng(0)
        total = 0
        rows = []
        for i, spec in enumerate(apply_threshold(cfg, cards)):
            from .model import FeatureEmbedding

            fe = FeatureEmbedding(f"feat{i}", spec, cfg, rng)
            rows.append((i, spec["cardinality"], spec["scheme"], fe.param_count()))
            total += fe.param_count()
        return total, rows

    if threshold_sweep:
        taus = [float(x) for x in threshold_sweep.split(",")]
        click.echo("threshold,total_embedding_params")
        for tau in taus:
            total, _ = total_for(tau)
            click.echo(f"{tau:g},{total}")
        return
    total, rows = total_for(threshold)
    click.echo("feature,cardinality,scheme,params")
    for r in rows:
        click.echo(",".join(str(v) for v in r))
    click.echo(f"total,,,{total}")


@main.command()
@click.option("--seed", type=int, default=0)
@click.option("--tol", type=float, default=gc.DEFAULT_TOL)
@click.option("--inject-bug", is_flag=True, help="Self-test: flip analytic gradients and expect FAIL.")
def gradcheck(seed, tol, inject_bug):
    """Finite-difference checks of every backward pass."""
    results = gc.run_all(seed=seed, tol=tol, inject_bug=inject_bug)
    all_ok = True
    for name, (ok, err) in results.items():
        click.echo(f"{'PASS' if ok else 'FAIL'} {name}: max rel err {err:.3e}")
        all_ok &= ok
    if inject_bug:
        # the checker itself is broken if it still passes
        sys.exit(0 if not all_ok else 1)
    sys.exit(0 if all_ok else 1)


@main.command()
@click.option("--scheme", type=click.Choice(["full", "hash", "qr_mult"]), default="qr_mult")
@click.option("--domain-size", type=int, default=1_000_000)
@click.option("--dim", type=int, default=16)
@click.option("--collisions", type=int, default=4)
@click.option("--iterations", type=int, default=100)
@click.option("--batch-size", type=int, default=4096)
def bench(scheme, domain_size, dim, collisions, iterations, batch_size):
    """Lookup throughput per kernel backend, plus resident table bytes."""
    if iterations == 0:
        click.echo(json.dumps({}))
        return
    rng = np.random.default_rng(0)
    m = collisions_to_modulus(domain_size, collisions)
    if scheme == "full":
        ps = parts.make_naive(domain_size)
    elif scheme == "hash":
        ps = parts.make_hash(domain_size, m)
    else:
        ps = parts.make_quotient_remainder(domain_size, m)
    op = "mult" if scheme == "qr_mult" else "concat"
    comp = CompositionScheme.random(ps, dim, op, rng)
    idx = rng.integers(0, domain_size, size=batch_size)
    tidx = comp.table_indices(idx)
    weights = [t.weights for t in comp.tables]

    report = {
        "scheme": scheme,
        "domain_size": domain_size,
        "dim": dim,
        "params": comp.param_count(),
        "resident_bytes_f32": comp.param_count() * 4,
        "backends": {},
    }
    for name in kernels.available_backends():
        backend = kernels.get_backend(name)
        backend.compose_forward(op, weights, tidx)  # warm
        t0 = time.perf_counter()
        for _ in range(iterations):
            backend.compose_forward(op, weights, tidx)
        dt = time.perf_counter() - t0
        report["backends"][name] = {
            "seconds": dt,
            "lookups_per_sec": iterations * batch_size / dt,
        }
    click.echo(json.dumps(report, indent=2, sort_keys=True))


if __name__ == "__main__":
    main()
