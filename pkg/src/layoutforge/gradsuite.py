"""Finite-difference verification of every loss kernel and of the full model.

Each check draws ``points`` random evaluation points and verifies the
analytic gradient at each of them with central differences.  One
:class:`CheckReport` per kernel summarises the worst coordinate over all
points; its ``worst_index`` is ``(point, *coordinate)``.
"""

from __future__ import annotations

import numpy as np

from . import losses as L
from .gradcheck import CheckReport, gradcheck
from .rng import make_rng

KERNEL_TOL = 1e-4
MODEL_TOL = 1e-3
STEP = 1e-5
COORDS_PER_POINT = 100  # random subset per point when the input is larger

K1 = 6


def _probs(rng, shape=(K1, 4, 4)):
    z = rng.normal(0.0, 1.0, shape)
    e = np.exp(z - z.max(axis=0))
    return e / e.sum(axis=0)


def _labels(rng, shape=(4, 4)):
    return rng.integers(0, K1, shape)


def _q(rng, B=3, d=5):
    return 0.3 * rng.normal(size=(B, d))


# Each builder takes an rng and returns (x0, fun) with fun(x) -> (value, grad).


def _ce(rng):
    labels = _labels(rng)

    def fun(x):
        b = L.ce_loss(x, labels)
        return b.value, b.grads["probs"]

    return _probs(rng), fun


def _dice(rng):
    gt = (rng.random((4, 4)) < 0.5).astype(float)

    def fun(x):
        b = L.dice_loss(x, gt)
        return b.value, b.grads["pred"]

    return rng.uniform(0.05, 0.95, (4, 4)), fun


def _bce(rng):
    gt = (rng.random((4, 4)) < 0.5).astype(float)

    def fun(x):
        b = L.bce_mask_loss(x, gt)
        return b.value, b.grads["pred"]

    return rng.uniform(0.05, 0.95, (4, 4)), fun


def _surface(rng):
    labels = _labels(rng)
    w = L.LossWeights()

    def fun(x):
        b = L.surface_loss(x[0], x[1], labels, w)
        return b.value, np.stack([b.grads["probs"], b.grads["masks"]])

    return np.stack([_probs(rng), rng.uniform(0.05, 0.95, (K1, 4, 4))]), fun


def _edge(rng):
    e_gt = L.gt_edge_map(_labels(rng, (5, 5)))

    def fun(x):
        b = L.edge_loss(x, e_gt)
        return b.value, b.grads["probs"]

    return _probs(rng, (K1, 5, 5)), fun


def _smooth(rng):
    gt = L.one_hot(_labels(rng), K1)

    def fun(x):
        b = L.smoothness_loss(x, gt)
        return b.value, b.grads["probs"]

    return _probs(rng), fun


def _geo(rng):
    labels = _labels(rng, (5, 5))
    e_gt, gt = L.gt_edge_map(labels), L.one_hot(labels, K1)
    w = L.LossWeights()

    def fun(x):
        b = L.geo_loss(L.edge_loss(x, e_gt), L.smoothness_loss(x, gt), w)
        return b.value, b.grads["probs"]

    return _probs(rng, (K1, 5, 5)), fun


def _split_contrastive(x, B=3, d=5):
    return x[: B * d].reshape(B, d), x[B * d : 2 * B * d].reshape(B, d), float(x[-1])


def _contrastive(rng):
    def fun(x):
        qo, qt, tau = _split_contrastive(x)
        b = L.contrastive_loss(qo, qt, tau)
        return b.value, np.concatenate([b.grads["q_obj"].ravel(), b.grads["q_txt"].ravel(), [b.grads["tau"]]])

    return np.concatenate([_q(rng).ravel(), _q(rng).ravel(), [rng.uniform(0.07, 0.5)]]), fun


def _total(rng):
    """Surface + contrastive + geo over one joint input vector."""
    labels = _labels(rng, (5, 5))
    e_gt, gt = L.gt_edge_map(labels), L.one_hot(labels, K1)
    w = L.LossWeights()
    n = K1 * 25

    def fun(x):
        probs = x[:n].reshape(K1, 5, 5)
        masks = x[n : 2 * n].reshape(K1, 5, 5)
        qo, qt, tau = _split_contrastive(x[2 * n :])
        s = L.surface_loss(probs, masks, labels, w)
        c = L.contrastive_loss(qo, qt, tau)
        g = L.geo_loss(L.edge_loss(probs, e_gt), L.smoothness_loss(probs, gt), w)
        t = L.total_loss(s, c, g)
        grad = np.concatenate(
            [
                t.grads["probs"].ravel(),
                t.grads["masks"].ravel(),
                t.grads["q_obj"].ravel(),
                t.grads["q_txt"].ravel(),
                [t.grads["tau"]],
            ]
        )
        return t.value, grad

    x0 = np.concatenate(
        [
            _probs(rng, (K1, 5, 5)).ravel(),
            rng.uniform(0.05, 0.95, n),
            _q(rng).ravel(),
            _q(rng).ravel(),
            [rng.uniform(0.07, 0.5)],
        ]
    )
    return x0, fun


KERNELS = {
    "ce": _ce,
    "dice": _dice,
    "bce": _bce,
    "surface": _surface,
    "edge": _edge,
    "smoothness": _smooth,
    "geo": _geo,
    "contrastive": _contrastive,
    "total": _total,
}


def _merge(name: str, per_point: list[CheckReport], tol: float) -> CheckReport:
    n = sum(r.n_checked for r in per_point)
    worst_p = max(range(len(per_point)), key=lambda i: per_point[i].max_rel_err)
    w = per_point[worst_p]
    failed = [r for r in per_point if not r.passed]
    msg = w.message or (f"{len(failed)} of {len(per_point)} points failed" if failed else f"{len(per_point)} points")
    idx = None if w.worst_index is None else (worst_p, *w.worst_index)
    return CheckReport(name, n, w.max_rel_err, idx, w.analytic, w.numeric, tol, not failed, msg)


def check_kernel(name: str, points: int = 100, seed: int = 0, inject: str | None = None) -> CheckReport:
    reports = []
    for k in range(points):
        rng = make_rng(seed, "gradcheck", name, k)
        x0, fun = KERNELS[name](rng)
        if inject == name:
            fun = _scaled(fun, 2.0)
        reports.append(gradcheck(fun, x0, h=STEP, tol=KERNEL_TOL, max_coords=COORDS_PER_POINT, rng=rng, name=name))
    return _merge(name, reports, KERNEL_TOL)


def _scaled(fun, s):
    def wrapped(x):
        v, g = fun(x)
        return v, s * g

    return wrapped


def check_model(points: int = 100, seed: int = 0, coords_per_point: int = 9, inject: str | None = None) -> CheckReport:
    """End-to-end gradients of the training objective w.r.t. every parameter group.

    Each point is a fresh parameter draw and a fresh pair of 16x16 synthetic
    images.  Groups are visited round-robin so every group is checked at
    several points.
    """
    from .model.config import ModelConfig
    from .model.objective import batch_objective
    from .model.params import flatten, init_params, unflatten
    from .synth import SynthConfig, make_sample

    cfg = ModelConfig()
    names = sorted(init_params(cfg, 0))
    reports = []
    cursor = 0
    for k in range(points):
        rng = make_rng(seed, "gradcheck", "model", k)
        params = init_params(cfg, int(rng.integers(2**31)))
        params["tau"] = np.array(rng.uniform(0.07, 0.5))
        sc = SynthConfig(width=16, height=16, seed=int(rng.integers(2**31)))
        pairs = [make_sample(sc, i)[:2] for i in range(2)]
        images = np.stack([p[0] for p in pairs])
        masks = np.stack([p[1] for p in pairs])
        x0 = flatten(params, names)
        offsets = np.cumsum([0] + [params[n].size for n in names])

        coords = []
        for _ in range(coords_per_point):
            g = cursor % len(names)
            cursor += 1
            coords.append(offsets[g] + int(rng.integers(params[names[g]].size)))

        def fun(x):
            r = batch_objective(unflatten(x, params, names), images, masks, cfg)
            g = flatten(r.grads, names)
            return r.value, (2.0 * g if inject == "model" else g)

        def value(x):
            return batch_objective(unflatten(x, params, names), images, masks, cfg, need_grads=False).value

        reports.append(gradcheck(fun, x0, h=STEP, tol=MODEL_TOL, name="model", value_fn=value, coords=np.array(coords)))
    return _merge("model", reports, MODEL_TOL)


def run_suite(seed: int = 0, points: int = 100, inject: str | None = None) -> list[CheckReport]:
    """Every loss kernel followed by the full model; ``inject`` doubles one kernel's gradient."""
    if inject is not None and inject not in KERNELS and inject != "model":
        raise ValueError(f"unknown kernel {inject!r}")
    out = [check_kernel(name, points, seed, inject) for name in KERNELS]
    out.append(check_model(points, seed, inject=inject))
    return out
