"""Batch training objective with gradients for every model parameter."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..core import Surface, surfaces_of
from ..losses import (
    EdgeLossConfig,
    LossWeights,
    contrastive_loss,
    edge_loss,
    gt_edge_map,
    one_hot,
    smoothness_loss,
    surface_loss,
)
from .config import ModelConfig
from .network import (
    decode,
    decode_backward,
    embed_rows_backward,
    embed_task,
    encode,
    encode_backward,
    fixed_assignment,
    init_queries,
    predict_masks,
    predict_masks_backward,
    softmax,
)
from .params import Params, zeros_like


def surface_text(mask: np.ndarray) -> str:
    """Space-separated names of the surfaces visible in a mask, in label order."""
    present = sorted(surfaces_of(mask))
    return " ".join(Surface(s).slug for s in present) or "background"


@dataclass
class ObjectiveConfig:
    weights: LossWeights = field(default_factory=LossWeights)
    edge: EdgeLossConfig = field(default_factory=EdgeLossConfig)
    use_geo: bool = True
    use_contrastive: bool = True


@dataclass
class BatchResult:
    value: float
    parts: dict
    grads: Params | None
    probs: np.ndarray


def query_class_loss(class_logits: np.ndarray, targets: np.ndarray):
    """Mean cross-entropy of each query's class logits against its assigned class."""
    B, N, K1 = class_logits.shape
    p = softmax(class_logits)
    tgt = np.broadcast_to(targets, (B, N))
    bi, ni = np.indices((B, N))
    value = -np.log(p[bi, ni, tgt]).mean()
    d = p.copy()
    d[bi, ni, tgt] -= 1.0
    return float(value), d / (B * N)


def batch_objective(
    params: Params,
    images: np.ndarray,
    masks: np.ndarray,
    cfg: ModelConfig,
    ocfg: ObjectiveConfig | None = None,
    need_grads: bool = True,
) -> BatchResult:
    """Mean over the batch of surface (+ geometric) losses, plus the batch contrastive term.

    Training uses the fixed query->class assignment n % (K+1); a query
    classification term teaches the class head the same mapping so that the
    argmax assignment used at inference agrees with it.
    """
    ocfg = ocfg or ObjectiveConfig()
    B, H, W, _ = images.shape
    K1 = cfg.num_classes
    fp = encode(images, params, cfg)
    task = embed_task(cfg.task_text, params)
    qs = init_queries(task, cfg.num_queries, params)
    out = decode(qs, fp, params, cfg, (H, W))
    assign = fixed_assignment(cfg.num_queries, K1)
    pred = predict_masks(out, cfg, assign)

    parts = {"surface": 0.0, "geo": 0.0, "contrastive": 0.0, "query_cls": 0.0}
    d_probs = np.zeros_like(pred.probs)
    d_maps = np.zeros_like(pred.class_maps)
    for b in range(B):
        s = surface_loss(pred.probs[b], pred.class_maps[b], masks[b], ocfg.weights, clamp_eps=ocfg.edge.clamp_eps)
        parts["surface"] += s.value / B
        d_probs[b] += s.grads["probs"] / B
        d_maps[b] += s.grads["masks"] / B
        if ocfg.use_geo:
            e = edge_loss(pred.probs[b], gt_edge_map(masks[b], ocfg.edge), ocfg.edge)
            sm = smoothness_loss(pred.probs[b], one_hot(masks[b], K1))
            parts["geo"] += (ocfg.weights.edge * e.value + ocfg.weights.smooth * sm.value) / B
            d_probs[b] += (ocfg.weights.edge * e.grads["probs"] + ocfg.weights.smooth * sm.grads["probs"]) / B

    qc_value, d_cls = query_class_loss(out.class_logits, assign)
    parts["query_cls"] = cfg.query_cls_weight * qc_value
    d_cls *= cfg.query_cls_weight

    d_queries = None
    txt_rows = []
    if ocfg.use_contrastive:
        q_obj = out.queries.mean(axis=1)
        txt = [embed_task(surface_text(m), params) for m in masks]
        txt_rows = [t.rows for t in txt]
        q_txt = np.stack([t.embedding for t in txt])
        c = contrastive_loss(q_obj, q_txt, float(params["tau"]))
        parts["contrastive"] = c.value
        d_queries = np.repeat(c.grads["q_obj"][:, None, :] / cfg.num_queries, cfg.num_queries, axis=1)

    value = float(sum(parts.values()))
    if not need_grads:
        return BatchResult(value, parts, None, pred.probs)

    grads = zeros_like(params)
    d_logits = predict_masks_backward(pred, d_maps, d_probs, cfg, cfg.num_queries)
    d_q0, d_f4, d_f8 = decode_backward(out, d_queries, d_cls, d_logits, params, cfg, grads)
    encode_backward(fp, d_f4, d_f8, params, cfg, grads)
    grads["q_offsets"] += d_q0[:-1]
    embed_rows_backward(task.rows, d_q0.sum(axis=0), grads["tok_table"])
    if ocfg.use_contrastive:
        for rows, g in zip(txt_rows, c.grads["q_txt"]):
            embed_rows_backward(rows, g, grads["tok_table"])
        grads["tau"] = grads["tau"] + c.grads["tau"]
    return BatchResult(value, parts, grads, pred.probs)

