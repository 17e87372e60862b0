"""Loss kernels as value-and-gradient functions.

Every kernel returns a :class:`LossBundle` whose ``grads`` dict is keyed by
the name of the prediction input it differentiates.  Pixel losses are
mean-reduced so the weights do not depend on resolution.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .core import NUM_CLASSES

CLAMP_EPS = 1e-7


@dataclass
class LossBundle:
    value: float
    grads: dict = field(default_factory=dict)

    def scaled(self, w: float) -> "LossBundle":
        return LossBundle(w * self.value, {k: w * g for k, g in self.grads.items()})

    def __add__(self, other: "LossBundle") -> "LossBundle":
        grads = {k: g.copy() for k, g in self.grads.items()}
        for k, g in other.grads.items():
            grads[k] = grads[k] + g if k in grads else g.copy()
        return LossBundle(self.value + other.value, grads)

    def all_finite(self) -> bool:
        return bool(np.isfinite(self.value)) and all(np.isfinite(g).all() for g in self.grads.values())


@dataclass
class LossWeights:
    seg: float = 2.0  # lambda1
    dice: float = 5.0  # lambda2
    bce: float = 5.0  # lambda3
    edge: float = 1.0  # lambda4
    smooth: float = 1.0  # lambda5

    def validate(self):
        for k, v in vars(self).items():
            if v < 0:
                raise ValueError(f"loss weight {k}={v} is negative")


@dataclass
class EdgeLossConfig:
    sigma: float = 1.0
    gt_dilation: int = 0
    clamp_eps: float = CLAMP_EPS
    grad_eps: float = 5e-2  # Charbonnier smoothing of |grad| near zero

    def validate(self):
        if self.sigma <= 0:
            raise ValueError("sigma must be > 0")
        if self.gt_dilation < 0:
            raise ValueError("gt_dilation must be >= 0")
        if not 0 < self.clamp_eps <= 1e-3:
            raise ValueError("clamp_eps must be in (0, 1e-3]")


@dataclass
class ContrastiveConfig:
    tau: float = 0.07

    def validate(self):
        if self.tau <= 0:
            raise ValueError("tau must be > 0")


def _same_shape(a, b, what):
    if a.shape != b.shape:
        raise ValueError(f"{what}: shape {a.shape} != {b.shape}")


def one_hot(labels: np.ndarray, n: int = NUM_CLASSES) -> np.ndarray:
    labels = np.asarray(labels)
    return (np.arange(n).reshape(n, *([1] * labels.ndim)) == labels[None]).astype(np.float64)


# ---------------------------------------------------------------------------
# surface parsing


def ce_loss(probs: np.ndarray, labels: np.ndarray, clamp_eps: float = CLAMP_EPS) -> LossBundle:
    """Mean per-pixel categorical cross-entropy of a (C, H, W) probability stack."""
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels)
    if probs.ndim != 3 or probs.shape[1:] != labels.shape:
        raise ValueError(f"ce_loss: probs {probs.shape} vs labels {labels.shape}")
    if labels.min() < 0 or labels.max() >= probs.shape[0]:
        raise ValueError("ce_loss: label outside class range")
    n = labels.size
    ii, jj = np.indices(labels.shape)
    p = probs[labels, ii, jj]
    pc = np.maximum(p, clamp_eps)
    value = -np.log(pc).sum() / n
    grad = np.zeros_like(probs)
    grad[labels, ii, jj] = np.where(p >= clamp_eps, -1.0 / (n * pc), 0.0)
    return LossBundle(float(value), {"probs": grad})


def dice_loss(pred: np.ndarray, gt: np.ndarray, eps: float = 1e-6) -> LossBundle:
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    _same_shape(pred, gt, "dice_loss")
    num = 2.0 * np.sum(pred * gt)
    den = np.sum(pred * pred) + np.sum(gt * gt) + eps
    grad = -(2.0 * gt * den - num * 2.0 * pred) / den**2
    return LossBundle(float(1.0 - num / den), {"pred": grad})


def bce_mask_loss(pred: np.ndarray, gt: np.ndarray, clamp_eps: float = CLAMP_EPS) -> LossBundle:
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    _same_shape(pred, gt, "bce_mask_loss")
    n = pred.size
    pc = np.clip(pred, clamp_eps, 1.0 - clamp_eps)
    value = -np.sum(gt * np.log(pc) + (1.0 - gt) * np.log1p(-pc)) / n
    inside = (pred >= clamp_eps) & (pred <= 1.0 - clamp_eps)
    grad = np.where(inside, -(gt / pc - (1.0 - gt) / (1.0 - pc)) / n, 0.0)
    return LossBundle(float(value), {"pred": grad})


def surface_loss(
    probs: np.ndarray,
    class_masks: np.ndarray,
    gt_mask: np.ndarray,
    weights: LossWeights,
    dice_eps: float = 1e-6,
    clamp_eps: float = CLAMP_EPS,
) -> LossBundle:
    """seg*CE(probs) + dice*mean_k Dice(mask_k) + bce*mean_k BCE(mask_k), k over surfaces.

    ``class_masks`` is the (K+1, H, W) stack of per-class mask probabilities;
    the background channel 0 takes part in CE only.
    """
    _same_shape(probs, class_masks, "surface_loss")
    ce = ce_loss(probs, gt_mask, clamp_eps)
    gt = one_hot(gt_mask, probs.shape[0])
    k = probs.shape[0] - 1
    dice_v, bce_v = 0.0, 0.0
    g_dice = np.zeros_like(class_masks, dtype=np.float64)
    g_bce = np.zeros_like(class_masks, dtype=np.float64)
    for c in range(1, probs.shape[0]):
        d = dice_loss(class_masks[c], gt[c], dice_eps)
        b = bce_mask_loss(class_masks[c], gt[c], clamp_eps)
        dice_v += d.value / k
        bce_v += b.value / k
        g_dice[c] = d.grads["pred"] / k
        g_bce[c] = b.grads["pred"] / k
    value = weights.seg * ce.value + weights.dice * dice_v + weights.bce * bce_v
    return LossBundle(
        float(value),
        {"probs": weights.seg * ce.grads["probs"], "masks": weights.dice * g_dice + weights.bce * g_bce},
    )


# ---------------------------------------------------------------------------
# geometric regularisation


def gt_edge_map(mask: np.ndarray, cfg: EdgeLossConfig | None = None) -> np.ndarray:
    """1 where any 4-neighbour carries a different label, then square-dilated."""
    cfg = cfg or EdgeLossConfig()
    mask = np.asarray(mask)
    e = np.zeros(mask.shape, dtype=bool)
    dx = mask[:, 1:] != mask[:, :-1]
    e[:, 1:] |= dx
    e[:, :-1] |= dx
    dy = mask[1:, :] != mask[:-1, :]
    e[1:, :] |= dy
    e[:-1, :] |= dy
    if cfg.gt_dilation:
        e = ndimage.maximum_filter(e, size=2 * cfg.gt_dilation + 1, mode="constant")
    return e.astype(np.float64)


def central_diff_matrix(n: int) -> np.ndarray:
    """(n, n) central-difference operator with replicate padding."""
    d = np.zeros((n, n))
    idx = np.arange(n)
    d[idx, np.minimum(idx + 1, n - 1)] += 0.5
    d[idx, np.maximum(idx - 1, 0)] -= 0.5
    return d


def edge_map(probs: np.ndarray, cfg: EdgeLossConfig):
    """Predicted edge map 1 - exp(-g/sigma) plus the intermediates for backprop."""
    _, H, W = probs.shape
    dx_m, dy_m = central_diff_matrix(W), central_diff_matrix(H)
    gx = probs @ dx_m.T
    gy = dy_m @ probs
    r = np.sqrt(gx * gx + gy * gy + cfg.grad_eps**2)
    g = (r - cfg.grad_eps).mean(axis=0)
    e = 1.0 - np.exp(-g / cfg.sigma)
    return e, (gx, gy, r, g, dx_m, dy_m)


def edge_loss(probs: np.ndarray, e_gt: np.ndarray, cfg: EdgeLossConfig | None = None) -> LossBundle:
    """BCE between the target edge map and 1 - exp(-|grad probs|/sigma)."""
    cfg = cfg or EdgeLossConfig()
    probs = np.asarray(probs, dtype=np.float64)
    e_gt = np.asarray(e_gt, dtype=np.float64)
    if probs.ndim != 3 or probs.shape[1:] != e_gt.shape:
        raise ValueError(f"edge_loss: probs {probs.shape} vs edge map {e_gt.shape}")
    C = probs.shape[0]
    e, (gx, gy, r, g, dx_m, dy_m) = edge_map(probs, cfg)
    b = bce_mask_loss(e, e_gt, cfg.clamp_eps)
    d_g = b.grads["pred"] * np.exp(-g / cfg.sigma) / cfg.sigma
    d_r = d_g[None] / C
    d_gx = d_r * gx / r
    d_gy = d_r * gy / r
    grad = d_gx @ dx_m + dy_m.T @ d_gy
    return LossBundle(b.value, {"probs": grad})


def smoothness_loss(probs: np.ndarray, gt: np.ndarray) -> LossBundle:
    """Root-mean-square distance between the probability stack and one-hot targets."""
    probs = np.asarray(probs, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    _same_shape(probs, gt, "smoothness_loss")
    diff = probs - gt
    n = diff.size
    norm = np.sqrt(np.sum(diff * diff))
    value = norm / np.sqrt(n)
    grad = diff / (np.sqrt(n) * norm) if norm > 0 else np.zeros_like(diff)
    return LossBundle(float(value), {"probs": grad})


def geo_loss(edge: LossBundle, smooth: LossBundle, weights: LossWeights) -> LossBundle:
    return edge.scaled(weights.edge) + smooth.scaled(weights.smooth)


# ---------------------------------------------------------------------------
# query/text contrastive term


def _log_softmax_rows(s: np.ndarray) -> np.ndarray:
    m = s.max(axis=1, keepdims=True)
    return s - (m + np.log(np.exp(s - m).sum(axis=1, keepdims=True)))


def contrastive_loss(q_obj: np.ndarray, q_txt: np.ndarray, cfg: ContrastiveConfig | float | None = None) -> LossBundle:
    """Symmetric InfoNCE over a batch; row i of each matrix is a positive pair."""
    tau = cfg if isinstance(cfg, float) else (cfg or ContrastiveConfig()).tau
    q_obj = np.asarray(q_obj, dtype=np.float64)
    q_txt = np.asarray(q_txt, dtype=np.float64)
    _same_shape(q_obj, q_txt, "contrastive_loss")
    B = q_obj.shape[0]
    if B == 0:
        raise ValueError("contrastive_loss needs a non-empty batch")
    if tau <= 0:
        raise ValueError("tau must be > 0")
    dots = q_obj @ q_txt.T
    s = dots / tau
    lsm_o = _log_softmax_rows(s)  # object -> text
    lsm_t = _log_softmax_rows(s.T)  # text -> object
    idx = np.arange(B)
    value = -(lsm_o[idx, idx].sum() + lsm_t[idx, idx].sum()) / B
    eye = np.eye(B)
    d_s = (np.exp(lsm_o) - eye) / B + ((np.exp(lsm_t) - eye) / B).T
    return LossBundle(
        float(value),
        {
            "q_obj": d_s @ q_txt / tau,
            "q_txt": d_s.T @ q_obj / tau,
            "tau": np.array(-np.sum(d_s * dots) / (tau * tau)),
        },
    )


def total_loss(*parts: LossBundle) -> LossBundle:
    out = LossBundle(0.0, {})
    for p in parts:
        out = out + p
    return out
