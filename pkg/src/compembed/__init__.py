"""Memory-efficient compositional embeddings over complementary partitions."""

from .embedding import (
    CompositionScheme,
    EmbeddingTable,
    PathScheme,
    check_uniqueness,
    full_lookup,
    hash_lookup,
    mult_tensor_oracle,
    param_count,
    qr_lookup,
)
from .kernels import BACKEND as KERNEL_BACKEND
from .partitions import (
    Enumeration,
    PartitionSet,
    make_crt,
    make_explicit,
    make_generalized_qr,
    make_hash,
    make_naive,
    make_quotient_remainder,
    verify_complementary,
)

__version__ = "0.1.0"

__all__ = [
    "CompositionScheme",
    "EmbeddingTable",
    "Enumeration",
    "KERNEL_BACKEND",
    "PartitionSet",
    "PathScheme",
    "check_uniqueness",
    "full_lookup",
    "hash_lookup",
    "make_crt",
    "make_explicit",
    "make_generalized_qr",
    "make_hash",
    "make_naive",
    "make_quotient_remainder",
    "mult_tensor_oracle",
    "param_count",
    "qr_lookup",
    "verify_complementary",
]
