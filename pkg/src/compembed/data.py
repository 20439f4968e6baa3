"""Dataset ingestion: Criteo-format TSV and a seeded synthetic generator.

The Criteo Kaggle file is tab-separated: label, 13 integer fields, 26
hex-token fields, with empty strings for missing values. Day boundaries
are approximated by contiguous row sevenths (the file carries no
timestamps): the first six sevenths train, the last seventh split equally
into validation and test. Vocabularies are built from training rows only,
with index 0 reserved for missing/unknown tokens.

The synthetic generator plants a per-category scalar effect and draws
labels from the implied logistic model, so the Bayes-optimal loss is
computable from the generator's own parameters.
"""

from __future__ import annotations

import gzip
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .training import sigmoid

N_DENSE_CRITEO = 13
N_CAT_CRITEO = 26


class DataError(ValueError):
    pass


class Split(NamedTuple):
    dense: np.ndarray  # (n, n_dense) float64
    cats: np.ndarray  # (n, n_features) int64
    labels: np.ndarray  # (n,) float64 in {0, 1}

    @property
    def n(self) -> int:
        return self.labels.shape[0]


@dataclass
class DatasetSplit:
    train: Split
    validation: Split
    test: Split
    cardinalities: list[int]
    n_dense: int
    vocabularies: Optional[list[dict[str, int]]] = None
    meta: dict = field(default_factory=dict)


def transform_dense(raw: str) -> float:
    """log(1 + x) with missing and negative values mapped to 0."""
    if raw == "":
        return 0.0
    x = int(raw)
    if x < 0:
        return 0.0
    return math.log1p(x)


def map_categorical(token: str, vocab: dict[str, int]) -> int:
    """Missing or unseen-at-train-time tokens map to the reserved index 0."""
    if token == "":
        return 0
    return vocab.get(token, 0)


def load_criteo_tsv(path, limit: Optional[int] = None) -> DatasetSplit:
    """Load a Criteo Kaggle TSV (optionally gzipped) into index form."""
    opener = gzip.open if str(path).endswith(".gz") else open
    labels: list[float] = []
    dense_rows: list[list[float]] = []
    cat_rows: list[list[str]] = []
    skipped = 0
    with opener(path, "rt", encoding="utf-8") as f:
        for line in f:
            if limit is not None and len(labels) >= limit:
                break
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 1 + N_DENSE_CRITEO + N_CAT_CRITEO:
                skipped += 1
                continue
            try:
                y = float(int(parts[0]))
                dense = [transform_dense(v) for v in parts[1 : 1 + N_DENSE_CRITEO]]
            except ValueError:
                skipped += 1
                continue
            labels.append(y)
            dense_rows.append(dense)
            cat_rows.append(parts[1 + N_DENSE_CRITEO :])
    n = len(labels)
    if n == 0:
        raise DataError(f"no parseable rows in {path}")
    if skipped > 0.01 * (n + skipped):
        raise DataError(f"{skipped} malformed rows out of {n + skipped} (> 1%)")

    seventh = n // 7
    n_train = n - seventh
    n_val = seventh // 2
    # vocab over training rows only; index 0 reserved for NULL/unknown
    vocabs: list[dict[str, int]] = [{} for _ in range(N_CAT_CRITEO)]
    for row in cat_rows[:n_train]:
        for j, tok in enumerate(row):
            if tok and tok not in vocabs[j]:
                vocabs[j][tok] = len(vocabs[j]) + 1
    cats = np.empty((n, N_CAT_CRITEO), dtype=np.int64)
    for i, row in enumerate(cat_rows):
        for j, tok in enumerate(row):
            cats[i, j] = map_categorical(tok, vocabs[j])

    dense_arr = np.asarray(dense_rows, dtype=np.float64)
    labels_arr = np.asarray(labels, dtype=np.float64)
    cards = [len(v) + 1 for v in vocabs]

    def mk(lo, hi):
        return Split(dense_arr[lo:hi], cats[lo:hi], labels_arr[lo:hi])

    return DatasetSplit(
        train=mk(0, n_train),
        validation=mk(n_train, n_train + n_val),
        test=mk(n_train + n_val, n),
        cardinalities=cards,
        n_dense=N_DENSE_CRITEO,
        vocabularies=vocabs,
        meta={"rows": n, "skipped": skipped},
    )


@dataclass
class SyntheticSpec:
    n: int = 200_000
    num_features: int = 4
    cardinality: int = 10_000
    n_dense: int = 2
    signal: float = 1.0  # scale of per-category planted effects
    dense_signal: float = 0.5
    label_bias: float = 0.0

    def cardinalities(self) -> list[int]:
        return [self.cardinality] * self.num_features


def synthetic_generate(spec: SyntheticSpec, seed: int = 0) -> DatasetSplit:
    """Seeded CTR task with planted categorical structure.

    Each (feature, category) pair carries a latent scalar effect; the
    label is Bernoulli of the sigmoid of the summed effects plus a dense
    contribution. ``meta['bayes_loss']`` is the Monte-Carlo estimate of
    the best achievable BCE on this draw.
    """
    if spec.cardinality < 1:
        raise DataError("cardinality must be at least 1")
    if spec.num_features < 1:
        raise DataError("need at least one categorical feature")
    rng = np.random.default_rng(seed)
    effects = [rng.standard_normal(spec.cardinality) for _ in range(spec.num_features)]
    dense_w = rng.standard_normal(spec.n_dense) if spec.n_dense else np.zeros(0)

    cats = rng.integers(0, spec.cardinality, size=(spec.n, spec.num_features), dtype=np.int64)
    dense = rng.standard_normal((spec.n, spec.n_dense))
    logits = np.full(spec.n, spec.label_bias)
    for j in range(spec.num_features):
        logits += spec.signal * effects[j][cats[:, j]]
    if spec.n_dense:
        logits += spec.dense_signal * (dense @ dense_w)
    p = sigmoid(logits)
    labels = (rng.random(spec.n) < p).astype(np.float64)

    pc = np.clip(p, 1e-12, 1 - 1e-12)
    bayes = float(-(pc * np.log(pc) + (1 - pc) * np.log1p(-pc)).mean())

    seventh = spec.n // 7
    n_train = spec.n - seventh
    n_val = seventh // 2

    def mk(lo, hi):
        return Split(dense[lo:hi], cats[lo:hi], labels[lo:hi])

    return DatasetSplit(
        train=mk(0, n_train),
        validation=mk(n_train, n_train + n_val),
        test=mk(n_train + n_val, spec.n),
        cardinalities=spec.cardinalities(),
        n_dense=spec.n_dense,
        meta={"bayes_loss": bayes, "seed": seed, "spec": spec.__dict__.copy()},
    )
