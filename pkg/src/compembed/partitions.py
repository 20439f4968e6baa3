"""Complementary partitions of a category set.

A categorical feature with categories S is indexed through an enumeration
(a bijection onto 0..|S|-1).  A family of set partitions P_1..P_k of S is
*complementary* when every pair of distinct categories lands in different
classes under at least one partition.  Complementary partitions are what
make compositional embeddings collision-free: each category gets a unique
tuple of class indices (p_1(i), ..., p_k(i)).

All partition kinds here are realized as pure integer arithmetic on the
enumerated index; the one-hot selection matrices of the underlying algebra
are never materialized.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

DEFAULT_EXHAUSTIVE_CAP = 10_000
DEFAULT_SAMPLED_PAIRS = 1_000_000


class PartitionError(ValueError):
    """Invalid partition construction or query."""


@dataclass
class Enumeration:
    """Bijection between raw category tokens and indices 0..|S|-1.

    Indices are assigned in first-occurrence order so that a rebuilt
    enumeration over the same stream is identical.
    """

    tokens: list[str]
    index: dict[str, int] = field(repr=False)

    @classmethod
    def from_tokens(cls, stream: Iterable[str]) -> "Enumeration":
        tokens: list[str] = []
        index: dict[str, int] = {}
        for tok in stream:
            if tok not in index:
                index[tok] = len(tokens)
                tokens.append(tok)
        if not tokens:
            raise PartitionError("empty category set")
        return cls(tokens=tokens, index=index)

    @property
    def size(self) -> int:
        return len(self.tokens)

    def index_of(self, token: str) -> int:
        return self.index[token]

    def token_of(self, i: int) -> str:
        return self.tokens[i]

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            for i, tok in enumerate(self.tokens):
                f.write(f"{tok}\t{i}\n")

    @classmethod
    def load(cls, path) -> "Enumeration":
        tokens: list[Optional[str]] = []
        with open(path, encoding="utf-8") as f:
            for line in f:
                line = line.rstrip("\n")
                if not line:
                    continue
                tok, idx = line.rsplit("\t", 1)
                i = int(idx)
                if i != len(tokens):
                    raise PartitionError(f"non-contiguous index {i} in {path}")
                tokens.append(tok)
        if not tokens:
            raise PartitionError("empty category set")
        return cls(tokens=tokens, index={t: i for i, t in enumerate(tokens)})


@dataclass(frozen=True)
class PartitionSet:
    """k partitions of {0..domain_size-1}, each realized as an index map.

    ``sizes[j]`` is the number of classes of partition j (0-based here;
    user-facing ordinals are 1-based).  For arithmetic kinds the class
    maps are derived from ``moduli``; for the explicit kind each map is
    stored as an integer array.
    """

    kind: str  # naive | quotient_remainder | generalized_qr | crt | explicit
    domain_size: int
    sizes: tuple[int, ...]
    moduli: tuple[int, ...] = ()
    class_maps: Optional[tuple[np.ndarray, ...]] = None  # explicit kind only

    @property
    def k(self) -> int:
        return len(self.sizes)

    @property
    def prefix_products(self) -> tuple[int, ...]:
        """M_j = m_1 * ... * m_{j-1} for j = 2..k (generalized_qr)."""
        out = []
        acc = 1
        for m in self.moduli[:-1]:
            acc *= m
            out.append(acc)
        return tuple(out)

    def class_index(self, j: int, i: int) -> int:
        """Class of category index ``i`` under partition ordinal ``j`` (1-based)."""
        if not 1 <= j <= self.k:
            raise PartitionError(f"partition ordinal {j} out of range 1..{self.k}")
        if not 0 <= i < self.domain_size:
            raise PartitionError(f"category index {i} out of range 0..{self.domain_size - 1}")
        return int(self.class_indices(j, np.asarray([i]))[0])

    def class_indices(self, j: int, idx: np.ndarray) -> np.ndarray:
        """Vectorized ``class_index`` over an integer array."""
        if not 1 <= j <= self.k:
            raise PartitionError(f"partition ordinal {j} out of range 1..{self.k}")
        idx = np.asarray(idx, dtype=np.int64)
        if idx.size and (idx.min() < 0 or idx.max() >= self.domain_size):
            raise PartitionError("category index out of range")
        if self.kind == "naive":
            return idx.copy()
        if self.kind == "quotient_remainder":
            m = self.moduli[0]
            return idx // m if j == 1 else idx % m
        if self.kind == "generalized_qr":
            if j == 1:
                return idx % self.moduli[0]
            M_j = self.prefix_products[j - 2]
            return (idx // M_j) % self.moduli[j - 1]
        if self.kind == "crt":
            return idx % self.moduli[j - 1]
        if self.kind == "explicit":
            assert self.class_maps is not None
            return self.class_maps[j - 1][idx]
        raise PartitionError(f"unknown partition kind {self.kind!r}")

    def class_tuples(self) -> np.ndarray:
        """All class tuples as a (domain_size, k) array."""
        idx = np.arange(self.domain_size, dtype=np.int64)
        return np.stack([self.class_indices(j, idx) for j in range(1, self.k + 1)], axis=1)

    def to_config(self) -> dict:
        cfg = {"kind": self.kind, "domain_size": self.domain_size}
        if self.moduli:
            cfg["moduli"] = list(self.moduli)
        if self.kind == "explicit":
            assert self.class_maps is not None
            cfg["class_maps"] = [m.tolist() for m in self.class_maps]
        return cfg

    @classmethod
    def from_config(cls, cfg: dict) -> "PartitionSet":
        kind = cfg["kind"]
        n = cfg["domain_size"]
        if kind == "naive":
            return make_naive(n)
        if kind == "quotient_remainder":
            return make_quotient_remainder(n, cfg["moduli"][0])
        if kind == "generalized_qr":
            return make_generalized_qr(n, cfg["moduli"])
        if kind == "crt":
            moduli = cfg["moduli"]
            if len(moduli) == 1 and moduli[0] < n:
                return make_hash(n, moduli[0])
            return make_crt(n, moduli)
        if kind == "explicit":
            return make_explicit(n, cfg["class_maps"])
        raise PartitionError(f"unknown partition kind {kind!r}")


def make_naive(domain_size: int) -> PartitionSet:
    """Single partition of singletons; equivalent to a full embedding table."""
    if domain_size < 1:
        raise PartitionError("domain size must be at least 1")
    return PartitionSet(kind="naive", domain_size=domain_size, sizes=(domain_size,))


def make_quotient_remainder(domain_size: int, m: int) -> PartitionSet:
    """Quotient partition (classes i // m) and remainder partition (classes i % m).

    When m does not divide the domain size, the quotient partition has
    ceil(domain_size / m) classes.
    """
    if domain_size < 1:
        raise PartitionError("domain size must be at least 1")
    if m == 0:
        raise PartitionError("zero modulus")
    if m < 0:
        raise PartitionError("negative modulus")
    if m > domain_size:
        import warnings

        warnings.warn(f"modulus {m} exceeds domain size {domain_size}; remainder table wastes rows")
    q = math.ceil(domain_size / m)
    return PartitionSet(
        kind="quotient_remainder", domain_size=domain_size, sizes=(q, m), moduli=(m,)
    )


def make_generalized_qr(domain_size: int, moduli: Sequence[int]) -> PartitionSet:
    """Mixed-radix partitions: p_1 = i % m_1, p_j = (i // M_j) % m_j."""
    moduli = tuple(int(m) for m in moduli)
    if domain_size < 1:
        raise PartitionError("domain size must be at least 1")
    if any(m < 1 for m in moduli):
        raise PartitionError("all moduli must be at least 1")
    prod = 1
    for m in moduli:
        prod *= m
        if prod > 2**62:
            raise PartitionError("modulus product overflow")
    if prod < domain_size:
        raise PartitionError(
            f"factorization too small: product {prod} < domain size {domain_size}"
        )
    return PartitionSet(
        kind="generalized_qr", domain_size=domain_size, sizes=moduli, moduli=moduli
    )


def make_crt(domain_size: int, moduli: Sequence[int]) -> PartitionSet:
    """Residue partitions p_j = i % m_j for pairwise-coprime moduli.

    Complementary because i -> (i % m_1, ..., i % m_k) is a bijection on
    Z_{m_1 * ... * m_k} (Chinese remainder theorem).
    """
    moduli = tuple(int(m) for m in moduli)
    if domain_size < 1:
        raise PartitionError("domain size must be at least 1")
    if any(m < 1 for m in moduli):
        raise PartitionError("all moduli must be at least 1")
    for a in range(len(moduli)):
        for b in range(a + 1, len(moduli)):
            if math.gcd(moduli[a], moduli[b]) != 1:
                raise PartitionError(
                    f"moduli {moduli[a]} and {moduli[b]} are not coprime "
                    f"(gcd={math.gcd(moduli[a], moduli[b])})"
                )
    prod = math.prod(moduli)
    if prod < domain_size:
        raise PartitionError(
            f"factorization too small: product {prod} < domain size {domain_size}"
        )
    return PartitionSet(kind="crt", domain_size=domain_size, sizes=moduli, moduli=moduli)


def make_hash(domain_size: int, m: int) -> PartitionSet:
    """Single remainder partition p_1 = i % m (the hashing trick).

    Deliberately skips the product check: with m < domain_size this is
    NOT complementary, and the verifier will exhibit a witness pair.
    """
    if domain_size < 1:
        raise PartitionError("domain size must be at least 1")
    if m < 1:
        raise PartitionError("zero modulus" if m == 0 else "negative modulus")
    return PartitionSet(kind="crt", domain_size=domain_size, sizes=(m,), moduli=(m,))


def make_explicit(domain_size: int, class_maps: Sequence[Sequence[int]]) -> PartitionSet:
    """User-supplied partitions given as per-category class-index arrays."""
    if domain_size < 1:
        raise PartitionError("domain size must be at least 1")
    maps = []
    sizes = []
    for cm in class_maps:
        arr = np.asarray(cm, dtype=np.int64)
        if arr.shape != (domain_size,):
            raise PartitionError(
                f"class map length {arr.shape} does not match domain size {domain_size}"
            )
        if arr.min() < 0:
            raise PartitionError("negative class index")
        maps.append(arr)
        sizes.append(int(arr.max()) + 1)
    if not maps:
        raise PartitionError("at least one partition required")
    return PartitionSet(
        kind="explicit",
        domain_size=domain_size,
        sizes=tuple(sizes),
        class_maps=tuple(maps),
    )


def classes_to_map(classes: Sequence[Sequence[int]], domain_size: int) -> list[int]:
    """Convert a partition given as lists of member indices to a class-index array."""
    out = [-1] * domain_size
    for ci, members in enumerate(classes):
        for x in members:
            if out[x] != -1:
                raise PartitionError(f"element {x} appears in two classes")
            out[x] = ci
    if any(v == -1 for v in out):
        missing = [i for i, v in enumerate(out) if v == -1]
        raise PartitionError(f"elements {missing} not covered by any class")
    return out


@dataclass(frozen=True)
class VerifyResult:
    complementary: bool
    witness: Optional[tuple[int, int]]  # pair with identical class tuples
    mode: str  # "exhaustive" or "sampled"

    def __bool__(self) -> bool:
        return self.complementary


def verify_complementary(
    ps: PartitionSet,
    cap: int = DEFAULT_EXHAUSTIVE_CAP,
    sampled_pairs: int = DEFAULT_SAMPLED_PAIRS,
    seed: int = 0,
) -> VerifyResult:
    """Check that every pair of distinct categories is separated by some partition.

    Up to ``cap`` categories the check is exhaustive (equivalent to class-tuple
    injectivity); beyond it, ``sampled_pairs`` random pairs are tested and the
    result is flagged as sampled rather than a proof.
    """
    n = ps.domain_size
    if n <= cap:
        tuples = ps.class_tuples()
        _, first_idx, counts = np.unique(
            tuples, axis=0, return_index=True, return_counts=True
        )
        dup = np.nonzero(counts > 1)[0]
        if dup.size == 0:
            return VerifyResult(True, None, "exhaustive")
        a = int(first_idx[dup[0]])
        target = tuples[a]
        rest = np.nonzero((tuples == target).all(axis=1))[0]
        b = int(rest[rest != a][0])
        return VerifyResult(False, (a, b), "exhaustive")

    rng = np.random.default_rng(seed)
    a = rng.integers(0, n, size=sampled_pairs)
    b = rng.integers(0, n, size=sampled_pairs)
    neq = a != b
    a, b = a[neq], b[neq]
    same = np.ones(a.shape, dtype=bool)
    for j in range(1, ps.k + 1):
        same &= ps.class_indices(j, a) == ps.class_indices(j, b)
        if not same.any():
            return VerifyResult(True, None, "sampled")
    hit = np.nonzero(same)[0][0]
    return VerifyResult(False, (int(a[hit]), int(b[hit])), "sampled")
