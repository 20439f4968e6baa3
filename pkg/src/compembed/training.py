"""Minimal dense-layer kernels, interaction ops, loss, and optimizers.

Everything here is hand-differentiated; the test suite checks every
backward against central finite differences.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from . import kernels

BCE_EPS = 1e-7


class TrainingError(ValueError):
    pass


def sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


class DenseLayerStack:
    """Affine + ReLU chain; identity or sigmoid on the output layer."""

    def __init__(self, dims: Sequence[int], output: str = "identity", *, rng=None, weights=None, biases=None):
        if len(dims) < 2:
            raise TrainingError("need at least input and output dims")
        if output not in ("identity", "sigmoid"):
            raise TrainingError(f"unknown output activation {output!r}")
        self.dims = list(dims)
        self.output = output
        if weights is not None:
            self.weights = [np.asarray(w, dtype=np.float64) for w in weights]
            self.biases = [np.asarray(b, dtype=np.float64) for b in biases]
        else:
            if rng is None:
                rng = np.random.default_rng()
            self.weights, self.biases = [], []
            for d_in, d_out in zip(dims[:-1], dims[1:]):
                bound = np.sqrt(2.0 / d_in)
                self.weights.append(rng.normal(0.0, bound, (d_out, d_in)))
                self.biases.append(np.zeros(d_out))
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (self.dims[l + 1], self.dims[l]) or b.shape != (self.dims[l + 1],):
                raise TrainingError(f"layer {l} shape mismatch")

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def forward(self, x: np.ndarray):
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.dims[0]:
            raise TrainingError(f"input dim {x.shape[-1]}, expected {self.dims[0]}")
        acts = [x]
        h = x
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w.T + b
            if l < self.n_layers - 1:
                h = np.maximum(h, 0.0)
            elif self.output == "sigmoid":
                h = sigmoid(h)
            acts.append(h)
        return h, acts

    def backward(self, cache, upstream):
        acts = cache
        grads = {}
        d = np.asarray(upstream, dtype=np.float64)
        for l in range(self.n_layers - 1, -1, -1):
            if l < self.n_layers - 1:
                d = d * (acts[l + 1] > 0)
            elif self.output == "sigmoid":
                p = acts[-1]
                d = d * p * (1.0 - p)
            grads[f"W{l}"] = d.T @ acts[l]
            grads[f"b{l}"] = d.sum(axis=0)
            d = d @ self.weights[l]
        return grads, d

    def params(self) -> dict[str, np.ndarray]:
        out = {}
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            out[f"W{l}"] = w
            out[f"b{l}"] = b
        return out

    def param_count(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))


def cross_layer_forward(x0, xl, w, b):
    """x_{l+1} = x0 * (xl . w) + b + xl, batched over rows."""
    x0 = np.asarray(x0, dtype=np.float64)
    xl = np.asarray(xl, dtype=np.float64)
    if x0.shape != xl.shape or x0.shape[-1] != w.shape[0] or w.shape != b.shape:
        raise TrainingError("cross layer dim mismatch")
    s = xl @ w  # (B,)
    out = x0 * s[:, None] + b + xl
    return out, (x0, xl, w, s)


def cross_layer_backward(cache, upstream):
    x0, xl, w, s = cache
    upstream = np.asarray(upstream, dtype=np.float64)
    ux0 = (upstream * x0).sum(axis=1)  # (B,)
    grad_x0 = upstream * s[:, None]
    grad_xl = ux0[:, None] * w + upstream
    grad_w = ux0 @ xl
    grad_b = upstream.sum(axis=0)
    return grad_x0, grad_xl, grad_w, grad_b


def dot_interaction_forward(vectors: np.ndarray):
    """All pairwise dot products of n vectors per sample.

    vectors: (B, n, D). Output: (B, n(n-1)/2) in row-major upper-triangle
    order (0,1), (0,2), ..., (n-2, n-1).
    """
    v = np.asarray(vectors, dtype=np.float64)
    if v.ndim != 3:
        raise TrainingError("expected (batch, n, dim) array")
    n = v.shape[1]
    gram = np.einsum("bij,bkj->bik", v, v)
    iu, ju = np.triu_indices(n, k=1)
    return gram[:, iu, ju], (v, iu, ju)


def dot_interaction_backward(cache, upstream):
    v, iu, ju = cache
    upstream = np.asarray(upstream, dtype=np.float64)
    grad = np.zeros_like(v)
    # d(v_i . v_j)/dv_i = v_j and vice versa
    np.add.at(grad, (slice(None), iu), upstream[:, :, None] * v[:, ju])
    np.add.at(grad, (slice(None), ju), upstream[:, :, None] * v[:, iu])
    return grad


def bce_loss(p: np.ndarray, y: np.ndarray):
    """Mean binary cross-entropy and gradient w.r.t. p.

    p is clamped to [BCE_EPS, 1 - BCE_EPS] before the logs.
    """
    p = np.asarray(p, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    pc = np.clip(p, BCE_EPS, 1.0 - BCE_EPS)
    loss = -(y * np.log(pc) + (1.0 - y) * np.log1p(-pc)).mean()
    grad = (-(y / pc) + (1.0 - y) / (1.0 - pc)) / p.size
    return loss, grad


def _check_finite(name: str, grad: np.ndarray) -> None:
    if not np.isfinite(grad).all():
        raise TrainingError(f"non-finite gradient for parameter {name!r}")


class SGD:
    kind = "sgd"

    def __init__(self, lr: float = 0.01):
        self.lr = lr

    def step(self, name, param, grad):
        _check_finite(name, grad)
        param -= self.lr * grad

    def step_rows(self, name, param, rows, grads):
        _check_finite(name, grads)
        param[rows] -= self.lr * grads


class Adagrad:
    """Adagrad with lazy sparse row updates.

    Accumulators for embedding rows advance only when the row is touched
    by a batch.
    """

    kind = "adagrad"

    def __init__(self, lr: float = 0.01, eps: float = 1e-10):
        self.lr = lr
        self.eps = eps
        self.accum: dict[str, np.ndarray] = {}

    def _acc(self, name, param):
        if name not in self.accum:
            self.accum[name] = np.zeros_like(param)
        return self.accum[name]

    def step(self, name, param, grad):
        _check_finite(name, grad)
        acc = self._acc(name, param)
        acc += grad * grad
        param -= self.lr * grad / np.sqrt(acc + self.eps)

    def step_rows(self, name, param, rows, grads):
        _check_finite(name, grads)
        acc = self._acc(name, param)
        if param.ndim == 2:
            kernels.adagrad_update_rows(param, acc, rows, np.ascontiguousarray(grads), self.lr, self.eps)
        else:
            acc[rows] += grads * grads
            param[rows] -= self.lr * grads / np.sqrt(acc[rows] + self.eps)


class AMSGrad:
    """Adam with an elementwise-max second moment in the denominator.

    ``use_max=False`` turns the max into a pass-through, which is plain
    Adam; this hook exists for testing only. Sparse rows use lazy
    semantics: moments and step counters advance per row, only when
    touched.
    """

    kind = "amsgrad"

    def __init__(self, lr: float = 0.001, betas=(0.9, 0.999), eps: float = 1e-8, use_max: bool = True):
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.use_max = use_max
        self.state: dict[str, dict] = {}

    def _st(self, name, param, per_row: bool):
        if name not in self.state:
            self.state[name] = {
                "m": np.zeros_like(param),
                "v": np.zeros_like(param),
                "vmax": np.zeros_like(param),
                "t": np.zeros(param.shape[0], dtype=np.int64) if per_row else 0,
            }
        return self.state[name]

    def step(self, name, param, grad):
        _check_finite(name, grad)
        st = self._st(name, param, per_row=False)
        st["t"] += 1
        t = st["t"]
        st["m"] = self.beta1 * st["m"] + (1.0 - self.beta1) * grad
        st["v"] = self.beta2 * st["v"] + (1.0 - self.beta2) * grad * grad
        if self.use_max:
            np.maximum(st["vmax"], st["v"], out=st["vmax"])
            v = st["vmax"]
        else:
            v = st["v"]
        mhat = st["m"] / (1.0 - self.beta1**t)
        vhat = v / (1.0 - self.beta2**t)
        param -= self.lr * mhat / (np.sqrt(vhat) + self.eps)

    def step_rows(self, name, param, rows, grads):
        _check_finite(name, grads)
        st = self._st(name, param, per_row=True)
        st["t"][rows] += 1
        t = st["t"][rows][:, None]
        m = st["m"][rows] = self.beta1 * st["m"][rows] + (1.0 - self.beta1) * grads
        v = st["v"][rows] = self.beta2 * st["v"][rows] + (1.0 - self.beta2) * grads * grads
        if self.use_max:
            st["vmax"][rows] = np.maximum(st["vmax"][rows], v)
            v = st["vmax"][rows]
        mhat = m / (1.0 - self.beta1**t)
        vhat = v / (1.0 - self.beta2**t)
        param[rows] -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


def make_optimizer(kind: str, lr: Optional[float] = None):
    if kind == "sgd":
        return SGD() if lr is None else SGD(lr)
    if kind == "adagrad":
        return Adagrad() if lr is None else Adagrad(lr)
    if kind == "amsgrad":
        return AMSGrad() if lr is None else AMSGrad(lr)
    raise TrainingError(f"unknown optimizer {kind!r}")
