"""Embedding tables and the lookup/compose/backward kernels.

Supports four styles of category embedding:

* full table: one row per category,
* hashed table: row ``i % m`` of a small table,
* operation-based compositional: one table per complementary partition,
  rows combined by concat / add / element-wise mult (or returned
  separately in feature-generation mode),
* path-based compositional: one base table plus per-partition families
  of transforms (linear or small MLP) composed along the category's
  class path.

All tables are float64 during training; the on-disk format is float32.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import kernels
from .partitions import PartitionSet

OPS = ("concat", "add", "mult", "feature_generation")


class EmbeddingError(ValueError):
    pass


@dataclass
class EmbeddingTable:
    weights: np.ndarray  # (rows, dim) float64

    def __post_init__(self):
        w = np.ascontiguousarray(self.weights, dtype=np.float64)
        if w.ndim != 2 or w.shape[0] < 1 or w.shape[1] < 1:
            raise EmbeddingError(f"bad table shape {w.shape}")
        if not np.isfinite(w).all():
            raise EmbeddingError("non-finite table weights")
        self.weights = w

    @property
    def rows(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.weights.shape[1]

    @classmethod
    def random(cls, rows: int, dim: int, rng: np.random.Generator) -> "EmbeddingTable":
        # Continuous uniform init on [-1/sqrt(dim), 1/sqrt(dim)]: duplicate
        # or zero rows, which would break mult-op uniqueness, have
        # probability zero.
        bound = 1.0 / np.sqrt(dim)
        return cls(rng.uniform(-bound, bound, size=(rows, dim)))


def full_lookup(table: EmbeddingTable, i: int) -> np.ndarray:
    if not 0 <= i < table.rows:
        raise EmbeddingError(f"index {i} out of range 0..{table.rows - 1}")
    return table.weights[i].copy()


def hash_lookup(table: EmbeddingTable, i: int, m: Optional[int] = None) -> np.ndarray:
    m = table.rows if m is None else m
    if m == 0:
        raise EmbeddingError("zero modulus")
    if m != table.rows:
        raise EmbeddingError(f"modulus {m} does not match table rows {table.rows}")
    return table.weights[i % m].copy()


def qr_lookup(w1: EmbeddingTable, w2: EmbeddingTable, i: int, m: int) -> np.ndarray:
    """Remainder-table row times quotient-table row, element-wise."""
    if w1.rows != m:
        raise EmbeddingError(f"remainder table has {w1.rows} rows, expected {m}")
    if not 0 <= i < w1.rows * w2.rows:
        raise EmbeddingError(f"index {i} out of range for m={m}, quotient rows {w2.rows}")
    return w1.weights[i % m] * w2.weights[i // m]


class CompositionScheme:
    """One embedding table per partition, combined by an operation."""

    def __init__(self, partition_set: PartitionSet, tables: Sequence[EmbeddingTable], op: str):
        if op not in OPS:
            raise EmbeddingError(f"unknown op {op!r}")
        if len(tables) != partition_set.k:
            raise EmbeddingError(
                f"{len(tables)} tables for {partition_set.k} partitions"
            )
        for t, size in zip(tables, partition_set.sizes):
            if t.rows != size:
                raise EmbeddingError(f"table has {t.rows} rows, partition has {size} classes")
        dims = [t.dim for t in tables]
        if op in ("add", "mult") and len(set(dims)) != 1:
            raise EmbeddingError(f"op {op!r} requires equal dims, got {dims}")
        self.partition_set = partition_set
        self.tables = list(tables)
        self.op = op
        if op == "concat":
            self.out_dim = sum(dims)
        else:
            self.out_dim = dims[0]  # feature_generation: dim of each vector

    @classmethod
    def random(
        cls, partition_set: PartitionSet, dims, op: str, rng: np.random.Generator
    ) -> "CompositionScheme":
        if isinstance(dims, int):
            dims = [dims] * partition_set.k
        tables = [
            EmbeddingTable.random(size, d, rng)
            for size, d in zip(partition_set.sizes, dims)
        ]
        return cls(partition_set, tables, op)

    @property
    def k(self) -> int:
        return self.partition_set.k

    def table_indices(self, idx: np.ndarray) -> list[np.ndarray]:
        idx = np.asarray(idx, dtype=np.int64)
        return [self.partition_set.class_indices(j, idx) for j in range(1, self.k + 1)]

    def lookup(self, i: int):
        out = self.lookup_batch(np.asarray([i], dtype=np.int64))
        if self.op == "feature_generation":
            return [z[0] for z in out]
        return out[0]

    def lookup_batch(self, idx: np.ndarray):
        """Compose embeddings for a batch of category indices.

        Returns (B, out_dim), or a list of k (B, D_j) arrays in
        feature-generation mode.
        """
        tidx = self.table_indices(idx)
        weights = [t.weights for t in self.tables]
        if self.op == "feature_generation":
            return [w[ti] for w, ti in zip(weights, tidx)]
        return kernels.compose_forward(self.op, weights, tidx)

    def backward_batch(self, idx: np.ndarray, upstream, grad_tables) -> list[np.ndarray]:
        """Accumulate table gradients for a batch, in sample order.

        upstream: (B, out_dim), or a list of k (B, D_j) arrays in
        feature-generation mode. grad_tables: arrays shaped like the
        tables. Returns the per-table row indices that were touched.
        """
        tidx = self.table_indices(idx)
        weights = [t.weights for t in self.tables]
        if self.op == "feature_generation":
            for g, ti, up in zip(grad_tables, tidx, upstream):
                kernels.scatter_add_rows(g, ti, np.ascontiguousarray(up))
        else:
            upstream = np.ascontiguousarray(upstream, dtype=np.float64)
            kernels.compose_backward(self.op, weights, tidx, upstream, grad_tables)
        return tidx

    def param_count(self) -> int:
        return sum(t.rows * t.dim for t in self.tables)


def mult_tensor_oracle(scheme: CompositionScheme, cap: int = 100_000) -> np.ndarray:
    """Materialize the full |P_1| x ... x |P_k| x D tensor of mult-composed rows.

    Entry (p_1(i), ..., p_k(i), :) equals the mult lookup for i exactly:
    the outer product below and the lookup both multiply tables left to
    right, so float non-associativity never shows.
    """
    if scheme.op != "mult":
        raise EmbeddingError("tensor oracle defined for the mult op only")
    sizes = scheme.partition_set.sizes
    total = int(np.prod(sizes))
    if total > cap:
        raise EmbeddingError(f"tensor of {total} rows exceeds cap {cap}")
    d = scheme.out_dim
    out = np.ones(sizes + (d,), dtype=np.float64)
    for j, t in enumerate(scheme.tables):
        shape = [1] * len(sizes) + [d]
        shape[j] = sizes[j]
        out = out * t.weights.reshape(shape)
    return out


def check_uniqueness(scheme: CompositionScheme) -> tuple[bool, Optional[tuple[int, int]]]:
    """Exhaustively test whether all composed embeddings are pairwise distinct.

    Uniqueness is guaranteed for concat over complementary partitions with
    distinct table rows; for add/mult it can fail, so this check is exposed
    instead of a promise. Returns (unique, witness pair or None).
    """
    n = scheme.partition_set.domain_size
    idx = np.arange(n, dtype=np.int64)
    emb = scheme.lookup_batch(idx)
    if scheme.op == "feature_generation":
        emb = np.concatenate(emb, axis=1)
    _, first, counts = np.unique(emb, axis=0, return_index=True, return_counts=True)
    dup = np.nonzero(counts > 1)[0]
    if dup.size == 0:
        return True, None
    a = int(first[dup[0]])
    same = np.nonzero((emb == emb[a]).all(axis=1))[0]
    b = int(same[same != a][0])
    return False, (a, b)


class LinearTransform:
    """z -> A z + b."""

    def __init__(self, A: np.ndarray, b: np.ndarray):
        self.A = np.asarray(A, dtype=np.float64)
        self.b = np.asarray(b, dtype=np.float64)
        if self.A.ndim != 2 or self.b.shape != (self.A.shape[0],):
            raise EmbeddingError("linear transform shape mismatch")

    @classmethod
    def random(cls, d_in, d_out, rng):
        bound = 1.0 / np.sqrt(d_in)
        return cls(rng.uniform(-bound, bound, (d_out, d_in)), rng.uniform(-bound, bound, d_out))

    @classmethod
    def identity(cls, d):
        return cls(np.eye(d), np.zeros(d))

    @property
    def in_dim(self):
        return self.A.shape[1]

    @property
    def out_dim(self):
        return self.A.shape[0]

    def forward(self, z: np.ndarray):
        # z: (B, d_in)
        return z @ self.A.T + self.b, z

    def backward(self, cache, upstream):
        z = cache
        grad_A = upstream.T @ z
        grad_b = upstream.sum(axis=0)
        dz = upstream @ self.A
        return {"A": grad_A, "b": grad_b}, dz

    def params(self):
        return {"A": self.A, "b": self.b}

    def param_count(self) -> int:
        return self.A.size + self.b.size


class MLPTransform:
    """Small MLP with ReLU hidden layers, identity output."""

    def __init__(self, weights: Sequence[np.ndarray], biases: Sequence[np.ndarray]):
        self.weights = [np.asarray(w, dtype=np.float64) for w in weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in biases]
        for l in range(len(self.weights) - 1):
            if self.weights[l].shape[0] != self.weights[l + 1].shape[1]:
                raise EmbeddingError("MLP transform dim chain broken")

    @classmethod
    def random(cls, dims: Sequence[int], rng):
        # dims = [d_0, d_1, ..., d_L]
        ws, bs = [], []
        for d_in, d_out in zip(dims[:-1], dims[1:]):
            bound = 1.0 / np.sqrt(d_in)
            ws.append(rng.uniform(-bound, bound, (d_out, d_in)))
            bs.append(rng.uniform(-bound, bound, d_out))
        return cls(ws, bs)

    @property
    def in_dim(self):
        return self.weights[0].shape[1]

    @property
    def out_dim(self):
        return self.weights[-1].shape[0]

    def forward(self, z: np.ndarray):
        acts = [z]
        h = z
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w.T + b
            if l < len(self.weights) - 1:
                h = np.maximum(h, 0.0)
            acts.append(h)
        return h, acts

    def backward(self, cache, upstream):
        acts = cache
        grads = {}
        d = upstream
        for l in range(len(self.weights) - 1, -1, -1):
            if l < len(self.weights) - 1:
                d = d * (acts[l + 1] > 0)
            grads[f"W{l}"] = d.T @ acts[l]
            grads[f"b{l}"] = d.sum(axis=0)
            d = d @ self.weights[l]
        return grads, d

    def params(self):
        out = {}
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            out[f"W{l}"] = w
            out[f"b{l}"] = b
        return out

    def param_count(self) -> int:
        return sum(w.size for w in self.weights) + sum(b.size for b in self.biases)


class PathScheme:
    """Base table for the first partition, then a transform per class of
    each later partition, composed along the category's class path."""

    def __init__(self, partition_set: PartitionSet, base_table: EmbeddingTable, transforms):
        if partition_set.k < 1:
            raise EmbeddingError("need at least one partition")
        if base_table.rows != partition_set.sizes[0]:
            raise EmbeddingError("base table rows do not match first partition")
        if len(transforms) != partition_set.k - 1:
            raise EmbeddingError("need one transform family per non-base partition")
        d = base_table.dim
        for j, family in enumerate(transforms):
            if len(family) != partition_set.sizes[j + 1]:
                raise EmbeddingError(
                    f"stage {j + 2} has {len(family)} transforms for "
                    f"{partition_set.sizes[j + 1]} classes"
                )
            for tr in family:
                if tr.in_dim != d:
                    raise EmbeddingError(f"stage {j + 2} expects input dim {d}, got {tr.in_dim}")
            d = family[0].out_dim
            if any(tr.out_dim != d for tr in family):
                raise EmbeddingError(f"stage {j + 2} transforms disagree on output dim")
        self.partition_set = partition_set
        self.base_table = base_table
        self.transforms = [list(f) for f in transforms]
        self.out_dim = d

    @classmethod
    def random(
        cls,
        partition_set: PartitionSet,
        dim: int,
        rng: np.random.Generator,
        hidden: Optional[int] = 64,
    ) -> "PathScheme":
        """MLP transforms with one hidden layer by default; hidden=None
        gives linear transforms."""
        base = EmbeddingTable.random(partition_set.sizes[0], dim, rng)
        transforms = []
        for size in partition_set.sizes[1:]:
            if hidden is None:
                family = [LinearTransform.random(dim, dim, rng) for _ in range(size)]
            else:
                family = [MLPTransform.random([dim, hidden, dim], rng) for _ in range(size)]
            transforms.append(family)
        return cls(partition_set, base, transforms)

    def table_indices(self, idx: np.ndarray) -> list[np.ndarray]:
        idx = np.asarray(idx, dtype=np.int64)
        k = self.partition_set.k
        return [self.partition_set.class_indices(j, idx) for j in range(1, k + 1)]

    def lookup(self, i: int) -> np.ndarray:
        return self.lookup_batch(np.asarray([i], dtype=np.int64))[0]

    def lookup_batch(self, idx: np.ndarray) -> np.ndarray:
        out, _ = self.forward_batch(idx)
        return out

    def forward_batch(self, idx: np.ndarray):
        """Forward pass with caches for backward.

        Samples are grouped by class at each stage so every transform runs
        once per batch.
        """
        tidx = self.table_indices(idx)
        h = self.base_table.weights[tidx[0]]
        caches = []
        for stage, family in enumerate(self.transforms):
            classes = tidx[stage + 1]
            out = np.empty((h.shape[0], family[0].out_dim))
            stage_cache = []
            for c in np.unique(classes):
                sel = np.nonzero(classes == c)[0]
                y, cache = family[c].forward(h[sel])
                out[sel] = y
                stage_cache.append((int(c), sel, cache))
            caches.append(stage_cache)
            h = out
        return h, (tidx, caches)

    def backward_batch(self, cache, upstream):
        """Chain rule through the selected transforms.

        Returns (base_grad_rows, base_row_indices, transform_grads) where
        transform_grads[stage][class] is a dict of parameter gradients (only
        touched classes present).
        """
        tidx, caches = cache
        d = upstream
        transform_grads: list[dict] = [dict() for _ in self.transforms]
        for stage in range(len(self.transforms) - 1, -1, -1):
            family = self.transforms[stage]
            dnext = np.empty((d.shape[0], family[0].in_dim))
            for c, sel, tr_cache in caches[stage]:
                grads, dz = family[c].backward(tr_cache, d[sel])
                transform_grads[stage][c] = grads
                dnext[sel] = dz
            d = dnext
        return d, tidx[0], transform_grads

    def param_count(self) -> int:
        n = self.base_table.rows * self.base_table.dim
        for family in self.transforms:
            n += sum(tr.param_count() for tr in family)
        return n


def param_count(obj) -> int:
    if isinstance(obj, EmbeddingTable):
        return obj.rows * obj.dim
    return obj.param_count()


# Binary table format: little-endian int64 rows, int64 dim, then
# row-major float32 weights.
_HEADER = struct.Struct("<qq")


def save_table(path, table: EmbeddingTable) -> None:
    with open(path, "wb") as f:
        f.write(_HEADER.pack(table.rows, table.dim))
        f.write(table.weights.astype("<f4").tobytes())


def load_table(path) -> EmbeddingTable:
    with open(path, "rb") as f:
        rows, dim = _HEADER.unpack(f.read(_HEADER.size))
        data = np.frombuffer(f.read(rows * dim * 4), dtype="<f4")
    if data.size != rows * dim:
        raise EmbeddingError(f"truncated table file {path}")
    return EmbeddingTable(data.reshape(rows, dim).astype(np.float64))


def save_manifest(path, scheme_kind: str, op: Optional[str], partition_set: PartitionSet) -> None:
    manifest = {
        "scheme": scheme_kind,
        "op": op,
        "partition": partition_set.to_config(),
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")


def load_manifest(path) -> dict:
    with open(path, encoding="utf-8") as f:
        return json.load(f)
