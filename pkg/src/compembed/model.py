"""DCN-lite and DLRM-lite CTR models over any embedding scheme.

Both models output a click probability through a sigmoid and train with
manual reverse-mode gradients end to end, including sparse updates into
the embedding tables.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict
from typing import Optional, Sequence

import numpy as np

from . import partitions as parts
from . import training
from .embedding import (
    CompositionScheme,
    EmbeddingTable,
    PathScheme,
)
from .training import DenseLayerStack, TrainingError

SCHEMES = (
    "full",
    "hash",
    "qr_mult",
    "comp_concat",
    "comp_add",
    "comp_mult",
    "feature_gen",
    "path",
)


@dataclass
class ModelConfig:
    architecture: str = "dlrm"  # "dcn" | "dlrm"
    embedding_dim: int = 16
    scheme: str = "full"
    collisions: int = 4
    threshold: float = 1  # features with cardinality <= threshold keep full tables
    dense_mlp: tuple = (512, 256, 64)
    top_mlp: tuple = (512, 256)
    cross_depth: int = 6
    divisor: int = 4  # shrinks all MLP widths for desk-scale runs
    concat_noncomp_dim: int = 32  # full-table dim under thresholded concat mode
    path_hidden: int = 64

    def __post_init__(self):
        if self.architecture not in ("dcn", "dlrm"):
            raise TrainingError(f"unknown architecture {self.architecture!r}")
        if self.scheme not in SCHEMES:
            raise TrainingError(f"unknown scheme {self.scheme!r}")

    def widths(self, dims) -> tuple:
        return tuple(max(1, d // self.divisor) for d in dims)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        for key in ("dense_mlp", "top_mlp"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


def collisions_to_modulus(cardinality: int, collisions: int) -> int:
    """Table rows for c average hash collisions: m = ceil(|S| / c)."""
    return math.ceil(cardinality / collisions)


def apply_threshold(config: ModelConfig, cardinalities: Sequence[int]) -> list[dict]:
    """Resolve the per-feature scheme.

    Features at or below the cardinality threshold keep full tables;
    larger ones get the configured compositional scheme. Under concat
    mode the full tables widen to ``concat_noncomp_dim`` and the
    compositional per-table dims sum to it.
    """
    resolved = []
    for card in cardinalities:
        compositional = config.scheme != "full" and card > config.threshold
        if config.scheme == "comp_concat":
            out_dim = config.concat_noncomp_dim
        else:
            out_dim = config.embedding_dim
        resolved.append(
            {
                "cardinality": card,
                "scheme": config.scheme if compositional else "full",
                "out_dim": out_dim,
                "m": collisions_to_modulus(card, config.collisions),
            }
        )
    return resolved


class FeatureEmbedding:
    """Per-feature embedding under a resolved scheme, with sparse updates."""

    def __init__(self, name: str, spec: dict, config: ModelConfig, rng: np.random.Generator):
        self.name = name
        self.spec = spec
        card = spec["cardinality"]
        scheme = spec["scheme"]
        d = spec["out_dim"]
        m = spec["m"]
        self.n_vectors = 1
        self.path = None
        if scheme == "full":
            ps = parts.make_naive(card)
            self.scheme = CompositionScheme.random(ps, d, "concat", rng)
        elif scheme == "hash":
            ps = parts.make_hash(card, min(m, card))
            self.scheme = CompositionScheme.random(ps, d, "concat", rng)
        elif scheme in ("qr_mult", "comp_mult"):
            ps = parts.make_quotient_remainder(card, min(m, card))
            self.scheme = CompositionScheme.random(ps, d, "mult", rng)
        elif scheme == "comp_add":
            ps = parts.make_quotient_remainder(card, min(m, card))
            self.scheme = CompositionScheme.random(ps, d, "add", rng)
        elif scheme == "comp_concat":
            ps = parts.make_quotient_remainder(card, min(m, card))
            half = d // 2
            self.scheme = CompositionScheme.random(ps, [d - half, half], "concat", rng)
        elif scheme == "feature_gen":
            ps = parts.make_quotient_remainder(card, min(m, card))
            self.scheme = CompositionScheme.random(ps, d, "feature_generation", rng)
            self.n_vectors = ps.k
        elif scheme == "path":
            # Base table on the remainder partition, one transform per
            # quotient class.
            m_eff = min(m, card)
            ps = parts.make_generalized_qr(card, (m_eff, math.ceil(card / m_eff)))
            self.scheme = PathScheme.random(ps, d, rng, hidden=config.path_hidden)
            self.path = self.scheme
        else:
            raise TrainingError(f"unknown resolved scheme {scheme!r}")
        self.out_dim = d
        if self.path is None:
            self._grad_tables = [np.zeros_like(t.weights) for t in self.scheme.tables]

    def forward(self, idx: np.ndarray):
        """Returns a list of n_vectors arrays of shape (B, out_dim)."""
        if self.path is not None:
            out, cache = self.path.forward_batch(idx)
            self._cache = cache
            return [out]
        out = self.scheme.lookup_batch(idx)
        if self.scheme.op == "feature_generation":
            return list(out)
        return [out]

    def backward_update(self, idx: np.ndarray, upstreams, optimizer) -> None:
        """Accumulate gradients for one batch and apply sparse updates."""
        if self.path is not None:
            dz, base_rows, tgrads = self.path.backward_batch(self._cache, upstreams[0])
            bt = self.path.base_table.weights
            rows_u = np.unique(base_rows)
            agg = np.zeros((rows_u.size, bt.shape[1]))
            pos = np.searchsorted(rows_u, base_rows)
            np.add.at(agg, pos, dz)
            optimizer.step_rows(f"{self.name}.base", bt, rows_u, agg)
            for stage, per_class in enumerate(tgrads):
                family = self.path.transforms[stage]
                for c in sorted(per_class):
                    params = family[c].params()
                    for pname, g in per_class[c].items():
                        optimizer.step(
                            f"{self.name}.t{stage + 2}.c{c}.{pname}", params[pname], g
                        )
            return
        upstream = upstreams if self.scheme.op == "feature_generation" else upstreams[0]
        tidx = self.scheme.backward_batch(idx, upstream, self._grad_tables)
        for j, (table, g, ti) in enumerate(zip(self.scheme.tables, self._grad_tables, tidx)):
            rows_u = np.unique(ti)
            optimizer.step_rows(f"{self.name}.W{j}", table.weights, rows_u, g[rows_u])
            g[rows_u] = 0.0

    def param_count(self) -> int:
        return self.scheme.param_count()


class Model:
    """A CTR model: embeddings + interaction stack + sigmoid output."""

    def __init__(self, config: ModelConfig, cardinalities: Sequence[int], n_dense: int, seed: int = 0):
        self.config = config
        self.cardinalities = list(cardinalities)
        self.n_dense = n_dense
        rng = np.random.default_rng(seed)
        resolved = apply_threshold(config, cardinalities)
        self.features = [
            FeatureEmbedding(f"feat{i}", spec, config, rng) for i, spec in enumerate(resolved)
        ]
        self.n_emb_vectors = sum(f.n_vectors for f in self.features)
        emb_total = sum(f.out_dim * f.n_vectors for f in self.features)
        d = config.embedding_dim

        if config.architecture == "dcn":
            in_dim = n_dense + emb_total
            deep_dims = (in_dim,) + config.widths(config.dense_mlp)
            self.deep = DenseLayerStack(deep_dims, rng=rng)
            self.cross_w = [rng.normal(0.0, 1.0 / np.sqrt(in_dim), in_dim) for _ in range(config.cross_depth)]
            self.cross_b = [np.zeros(in_dim) for _ in range(config.cross_depth)]
            self.out = DenseLayerStack((deep_dims[-1] + in_dim, 1), output="sigmoid", rng=rng)
            self.bottom = self.top = None
        else:
            if any(f.out_dim != self.features[0].out_dim for f in self.features):
                raise TrainingError("dlrm requires a uniform embedding output dim")
            d_out = self.features[0].out_dim if self.features else d
            n_vec = self.n_emb_vectors
            if n_dense > 0:
                bottom_dims = (n_dense,) + config.widths(config.dense_mlp) + (d_out,)
                self.bottom = DenseLayerStack(bottom_dims, rng=rng)
                n_vec += 1
            else:
                self.bottom = None
            n_pairs = n_vec * (n_vec - 1) // 2
            top_in = n_pairs + (d_out if self.bottom is not None else 0)
            top_dims = (top_in,) + config.widths(config.top_mlp)
            self.top = DenseLayerStack(top_dims, rng=rng)
            self.out = DenseLayerStack((top_dims[-1], 1), output="sigmoid", rng=rng)
            self.deep = None

    # ------------------------------------------------------------------
    def _embed(self, cats: np.ndarray) -> list[np.ndarray]:
        vectors = []
        for i, f in enumerate(self.features):
            vectors.extend(f.forward(np.ascontiguousarray(cats[:, i])))
        return vectors

    def forward(self, dense: np.ndarray, cats: np.ndarray):
        """Predictions in (0,1) plus a cache for backward."""
        B = cats.shape[0] if cats.size else dense.shape[0]
        vectors = self._embed(cats)
        if self.config.architecture == "dcn":
            pieces = ([dense] if self.n_dense else []) + vectors
            x = np.concatenate(pieces, axis=1) if pieces else np.zeros((B, 0))
            deep_out, deep_cache = self.deep.forward(x)
            xc = x
            cross_caches = []
            for w, b in zip(self.cross_w, self.cross_b):
                xc, cc = training.cross_layer_forward(x, xc, w, b)
                cross_caches.append(cc)
            combined = np.concatenate([deep_out, xc], axis=1)
            p, out_cache = self.out.forward(combined)
            cache = ("dcn", vectors, deep_cache, cross_caches, out_cache, deep_out.shape[1])
            return p[:, 0], cache

        # dlrm
        if self.bottom is not None:
            bottom_out, bcache = self.bottom.forward(dense)
            all_vecs = vectors + [bottom_out]
        else:
            bottom_out, bcache = None, None
            all_vecs = vectors
        stacked = np.stack(all_vecs, axis=1)
        dots, icache = training.dot_interaction_forward(stacked)
        if bottom_out is not None:
            top_in = np.concatenate([bottom_out, dots], axis=1)
        else:
            top_in = dots
        top_out, tcache = self.top.forward(top_in)
        p, out_cache = self.out.forward(top_out)
        cache = ("dlrm", vectors, bcache, icache, tcache, out_cache)
        return p[:, 0], cache

    def backward_update(self, cats: np.ndarray, cache, dloss_dp: np.ndarray, optimizer) -> None:
        """Backprop one batch and apply all parameter updates."""
        up = dloss_dp[:, None]
        if cache[0] == "dcn":
            _, vectors, deep_cache, cross_caches, out_cache, deep_dim = cache
            out_grads, d_combined = self.out.backward(out_cache, up)
            self._step_stack("out", self.out, out_grads, optimizer)
            d_deep = d_combined[:, :deep_dim]
            d_cross = d_combined[:, deep_dim:]
            deep_grads, dx_deep = self.deep.backward(deep_cache, d_deep)
            self._step_stack("deep", self.deep, deep_grads, optimizer)
            dx0_total = np.zeros_like(dx_deep)
            d = d_cross
            for l in range(len(cross_caches) - 1, -1, -1):
                gx0, gxl, gw, gb = training.cross_layer_backward(cross_caches[l], d)
                optimizer.step(f"cross.w{l}", self.cross_w[l], gw)
                optimizer.step(f"cross.b{l}", self.cross_b[l], gb)
                dx0_total += gx0
                d = gxl
            dx = dx_deep + dx0_total + d
            off = self.n_dense  # gradient w.r.t. raw dense inputs is dropped
            self._update_features(cats, vectors, dx, off, optimizer, split_from_flat=True)
            return

        _, vectors, bcache, icache, tcache, out_cache = cache
        out_grads, d_top_out = self.out.backward(out_cache, up)
        self._step_stack("out", self.out, out_grads, optimizer)
        top_grads, d_top_in = self.top.backward(tcache, d_top_out)
        self._step_stack("top", self.top, top_grads, optimizer)
        if self.bottom is not None:
            d_bot_direct = d_top_in[:, : self.features[0].out_dim if self.features else self.config.embedding_dim]
            d_dots = d_top_in[:, d_bot_direct.shape[1]:]
        else:
            d_bot_direct = None
            d_dots = d_top_in
        d_vectors = training.dot_interaction_backward(icache, d_dots)
        if self.bottom is not None:
            d_bottom = d_bot_direct + d_vectors[:, -1]
            bot_grads, _ = self.bottom.backward(bcache, d_bottom)
            self._step_stack("bottom", self.bottom, bot_grads, optimizer)
        self._update_features(cats, vectors, d_vectors, 0, optimizer, split_from_flat=False)

    def _step_stack(self, prefix: str, stack: DenseLayerStack, grads: dict, optimizer) -> None:
        params = stack.params()
        for name in sorted(params):
            optimizer.step(f"{prefix}.{name}", params[name], grads[name])

    def _update_features(self, cats, vectors, d, offset, optimizer, split_from_flat: bool) -> None:
        vec_pos = 0
        for i, f in enumerate(self.features):
            ups = []
            for _ in range(f.n_vectors):
                if split_from_flat:
                    ups.append(d[:, offset : offset + f.out_dim])
                    offset += f.out_dim
                else:
                    ups.append(d[:, vec_pos])
                    vec_pos += 1
            f.backward_update(np.ascontiguousarray(cats[:, i]), ups, optimizer)

    # ------------------------------------------------------------------
    def predict(self, dense: np.ndarray, cats: np.ndarray, batch_size: int = 4096) -> np.ndarray:
        n = cats.shape[0] if cats.size else dense.shape[0]
        out = np.empty(n)
        for lo in range(0, n, batch_size):
            hi = min(lo + batch_size, n)
            p, _ = self.forward(dense[lo:hi], cats[lo:hi])
            out[lo:hi] = p
        return out

    def param_count(self) -> int:
        n = sum(f.param_count() for f in self.features)
        if self.config.architecture == "dcn":
            n += self.deep.param_count() + self.out.param_count()
            n += sum(w.size + b.size for w, b in zip(self.cross_w, self.cross_b))
        else:
            if self.bottom is not None:
                n += self.bottom.param_count()
            n += self.top.param_count() + self.out.param_count()
        return n

    def embedding_param_count(self) -> int:
        return sum(f.param_count() for f in self.features)


def build_model(config: ModelConfig, cardinalities: Sequence[int], n_dense: int = 13, seed: int = 0) -> Model:
    return Model(config, cardinalities, n_dense, seed=seed)


def train_epoch(
    model: Model,
    dense: np.ndarray,
    cats: np.ndarray,
    labels: np.ndarray,
    optimizer,
    seed: int = 0,
    batch_size: int = 128,
    eval_every: int = 0,
    eval_data=None,
    shuffle: bool = True,
) -> list[dict]:
    """One pass over the data; returns the loss trace.

    Deterministic for a fixed seed: the batch order, every forward and
    every accumulation run in a fixed sequence.
    """
    n = labels.shape[0]
    order = np.arange(n)
    if shuffle:
        np.random.default_rng(seed).shuffle(order)
    trace = []
    running = 0.0
    count = 0
    for step, lo in enumerate(range(0, n, batch_size)):
        sel = order[lo : lo + batch_size]
        p, cache = model.forward(dense[sel], cats[sel])
        loss, dp = training.bce_loss(p, labels[sel])
        if not np.isfinite(loss):
            raise TrainingError(f"non-finite loss at step {step}")
        model.backward_update(cats[sel], cache, dp, optimizer)
        running += loss * sel.size
        count += sel.size
        if eval_every and (step + 1) % eval_every == 0:
            row = {"step": step + 1, "train_loss": running / count}
            if eval_data is not None:
                vloss, vacc = evaluate(model, *eval_data)
                row["val_loss"] = vloss
                row["val_accuracy"] = vacc
            trace.append(row)
            running = 0.0
            count = 0
    if count:
        trace.append({"step": math.ceil(n / batch_size), "train_loss": running / count})
    return trace


def evaluate(model: Model, dense: np.ndarray, cats: np.ndarray, labels: np.ndarray) -> tuple[float, float]:
    """Mean BCE loss and 0.5-threshold accuracy; never mutates the model."""
    p = model.predict(dense, cats)
    loss, _ = training.bce_loss(p, labels)
    acc = float(((p >= 0.5) == (labels >= 0.5)).mean())
    return float(loss), acc
