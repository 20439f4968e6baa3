"""Central finite-difference checks for every hand-written backward pass."""

from __future__ import annotations

import numpy as np

from . import training
from .embedding import (
    CompositionScheme,
    EmbeddingTable,
    LinearTransform,
    MLPTransform,
    PathScheme,
)
from .partitions import make_generalized_qr, make_quotient_remainder

DEFAULT_TOL = 1e-5


def central_diff(f, x: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    """Numerical gradient of scalar f w.r.t. array x."""
    g = np.zeros_like(x, dtype=np.float64)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        ix = it.multi_index
        orig = x[ix]
        x[ix] = orig + eps
        fp = f()
        x[ix] = orig - eps
        fm = f()
        x[ix] = orig
        g[ix] = (fp - fm) / (2 * eps)
    return g


def max_rel_err(analytic: np.ndarray, numeric: np.ndarray) -> float:
    denom = np.maximum(np.abs(analytic) + np.abs(numeric), 1e-8)
    return float((np.abs(analytic - numeric) / denom).max())


def _loss_weights(rng, shape):
    return rng.standard_normal(shape)


def check_compose(op: str, seed: int, inject_bug: bool = False) -> float:
    rng = np.random.default_rng(seed)
    ps = make_generalized_qr(12, (3, 2, 2))
    dims = [2, 3, 4] if op == "concat" else 3
    scheme = CompositionScheme.random(ps, dims, op, rng)
    idx = rng.integers(0, 12, size=7)

    if op == "feature_generation":
        rs = [_loss_weights(rng, (7, t.dim)) for t in scheme.tables]

        def loss():
            zs = scheme.lookup_batch(idx)
            return sum(float((z * w).sum()) for z, w in zip(zs, rs))

        upstream = rs
    else:
        r = _loss_weights(rng, (7, scheme.out_dim))

        def loss():
            return float((scheme.lookup_batch(idx) * r).sum())

        upstream = r

    grads = [np.zeros_like(t.weights) for t in scheme.tables]
    scheme.backward_batch(idx, upstream, grads)
    worst = 0.0
    for t, g in zip(scheme.tables, grads):
        if inject_bug:
            g = -g
        num = central_diff(loss, t.weights)
        worst = max(worst, max_rel_err(g, num))
    return worst


def check_path(seed: int, hidden=None, inject_bug: bool = False) -> float:
    rng = np.random.default_rng(seed)
    ps = make_generalized_qr(12, (4, 3))
    scheme = PathScheme.random(ps, 5, rng, hidden=hidden)
    idx = rng.integers(0, 12, size=6)
    r = _loss_weights(rng, (6, scheme.out_dim))

    def loss():
        return float((scheme.lookup_batch(idx) * r).sum())

    out, cache = scheme.forward_batch(idx)
    dz, base_rows, tgrads = scheme.backward_batch(cache, r)

    worst = 0.0
    base = scheme.base_table.weights
    analytic_base = np.zeros_like(base)
    np.add.at(analytic_base, base_rows, dz)
    if inject_bug:
        analytic_base = -analytic_base
    worst = max(worst, max_rel_err(analytic_base, central_diff(loss, base)))
    for stage, per_class in enumerate(tgrads):
        family = scheme.transforms[stage]
        for c, grads in per_class.items():
            params = family[c].params()
            for pname, g in grads.items():
                num = central_diff(loss, params[pname])
                worst = max(worst, max_rel_err(g, num))
    return worst


def check_mlp(seed: int, inject_bug: bool = False) -> float:
    rng = np.random.default_rng(seed)
    stack = training.DenseLayerStack((4, 8, 2), rng=rng)
    x = rng.standard_normal((5, 4))
    r = _loss_weights(rng, (5, 2))

    def loss():
        out, _ = stack.forward(x)
        return float((out * r).sum())

    out, cache = stack.forward(x)
    grads, dx = stack.backward(cache, r)
    worst = max_rel_err(dx if not inject_bug else -dx, central_diff(loss, x))
    params = stack.params()
    for name, g in grads.items():
        worst = max(worst, max_rel_err(g, central_diff(loss, params[name])))
    return worst


def check_cross(seed: int, inject_bug: bool = False) -> float:
    rng = np.random.default_rng(seed)
    x0 = rng.standard_normal((5, 6))
    xl = rng.standard_normal((5, 6))
    w = rng.standard_normal(6)
    b = rng.standard_normal(6)
    r = _loss_weights(rng, (5, 6))

    def loss():
        out, _ = training.cross_layer_forward(x0, xl, w, b)
        return float((out * r).sum())

    _, cache = training.cross_layer_forward(x0, xl, w, b)
    gx0, gxl, gw, gb = training.cross_layer_backward(cache, r)
    if inject_bug:
        gx0 = -gx0
    worst = max_rel_err(gx0, central_diff(loss, x0))
    worst = max(worst, max_rel_err(gxl, central_diff(loss, xl)))
    worst = max(worst, max_rel_err(gw, central_diff(loss, w)))
    worst = max(worst, max_rel_err(gb, central_diff(loss, b)))
    return worst


def check_dot_interaction(seed: int, inject_bug: bool = False) -> float:
    rng = np.random.default_rng(seed)
    v = rng.standard_normal((3, 4, 5))
    out0, _ = training.dot_interaction_forward(v)
    r = _loss_weights(rng, out0.shape)

    def loss():
        out, _ = training.dot_interaction_forward(v)
        return float((out * r).sum())

    _, cache = training.dot_interaction_forward(v)
    g = training.dot_interaction_backward(cache, r)
    if inject_bug:
        g = -g
    return max_rel_err(g, central_diff(loss, v))


def check_bce(seed: int, inject_bug: bool = False) -> float:
    rng = np.random.default_rng(seed)
    p = rng.uniform(0.05, 0.95, 9)
    y = (rng.random(9) < 0.5).astype(np.float64)

    def loss():
        return training.bce_loss(p, y)[0]

    _, g = training.bce_loss(p, y)
    if inject_bug:
        g = -g
    return max_rel_err(g, central_diff(loss, p))


CHECKS = {
    "compose_concat": lambda s, bug: check_compose("concat", s, bug),
    "compose_add": lambda s, bug: check_compose("add", s, bug),
    "compose_mult": lambda s, bug: check_compose("mult", s, bug),
    "compose_feature_gen": lambda s, bug: check_compose("feature_generation", s, bug),
    "path_linear": lambda s, bug: check_path(s, hidden=None, inject_bug=bug),
    "path_mlp": lambda s, bug: check_path(s, hidden=8, inject_bug=bug),
    "dense_mlp": check_mlp,
    "cross_layer": check_cross,
    "dot_interaction": check_dot_interaction,
    "bce": check_bce,
}


def run_all(seed: int = 0, tol: float = DEFAULT_TOL, inject_bug: bool = False) -> dict[str, tuple[bool, float]]:
    """Run every check once; returns name -> (passed, max relative error)."""
    out = {}
    for name, fn in CHECKS.items():
        err = fn(seed, inject_bug)
        out[name] = (err <= tol, err)
    return out
