"""Pure-numpy reference implementation of the hot embedding kernels.

Semantics are fixed so the compiled backend can be compared bit-for-bit:
element-wise products are evaluated left to right over the tables, and all
scatter accumulation happens in sample order (np.add.at is unbuffered and
applies updates sequentially).
"""

from __future__ import annotations

import numpy as np

BACKEND = "numpy"

_OPS = ("concat", "add", "mult")


def gather_rows(table: np.ndarray, idx: np.ndarray) -> np.ndarray:
    return table[idx]


def compose_forward(op: str, tables, indices) -> np.ndarray:
    """Batched compositional lookup.

    tables: list of (rows_j, D_j) float64 arrays.
    indices: list of (B,) int64 arrays, one per table.
    Returns (B, D) with D = sum D_j for concat, else the shared D_j.
    """
    if op not in _OPS:
        raise ValueError(f"unknown op {op!r}")
    z = [t[i] for t, i in zip(tables, indices)]
    if op == "concat":
        return np.concatenate(z, axis=1)
    out = z[0].copy()
    for zj in z[1:]:
        if op == "add":
            out += zj
        else:
            out *= zj
    return out


def compose_backward(op: str, tables, indices, upstream, grad_tables) -> None:
    """Accumulate d(loss)/d(table_j) into grad_tables for a batch.

    upstream: (B, D) gradient w.r.t. the composed output.
    grad_tables: list of arrays shaped like tables, accumulated in place.
    """
    if op not in _OPS:
        raise ValueError(f"unknown op {op!r}")
    if op == "concat":
        off = 0
        for t, idx, g in zip(tables, indices, grad_tables):
            d = t.shape[1]
            np.add.at(g, idx, upstream[:, off : off + d])
            off += d
        return
    if op == "add":
        for idx, g in zip(indices, grad_tables):
            np.add.at(g, idx, upstream)
        return
    # mult: cofactor of table j is prefix_{j-1} * suffix_{j+1}
    z = [t[i] for t, i in zip(tables, indices)]
    k = len(z)
    prefix = [None] * (k + 1)
    suffix = [None] * (k + 2)
    prefix[0] = np.ones_like(upstream)
    suffix[k + 1] = np.ones_like(upstream)
    for j in range(1, k + 1):
        prefix[j] = prefix[j - 1] * z[j - 1]
    for j in range(k, 0, -1):
        suffix[j] = z[j - 1] * suffix[j + 1] if j < k else z[j - 1].copy()
    for j in range(1, k + 1):
        cof = prefix[j - 1] * (suffix[j + 1] if j < k else np.ones_like(upstream))
        g = upstream * cof
        np.add.at(grad_tables[j - 1], indices[j - 1], g)


def scatter_add_rows(grad_table: np.ndarray, rows: np.ndarray, values: np.ndarray) -> None:
    np.add.at(grad_table, rows, values)


def adagrad_update_rows(
    param: np.ndarray,
    accum: np.ndarray,
    rows: np.ndarray,
    grads: np.ndarray,
    lr: float,
    eps: float,
) -> None:
    """Lazy Adagrad step on the touched rows only."""
    accum[rows] += grads * grads
    param[rows] -= lr * grads / np.sqrt(accum[rows] + eps)
