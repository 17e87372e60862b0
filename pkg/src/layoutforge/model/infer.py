"""Mask prediction from an image and trained parameters."""

from __future__ import annotations

import numpy as np

from .checkpoint import check_params, load_checkpoint
from .config import ModelConfig
from .network import assign_labels, decode, embed_task, encode, init_queries, predict_masks
from .params import Params


def predict_probs(images: np.ndarray, params: Params, cfg: ModelConfig, assignment=None) -> np.ndarray:
    """(B, K+1, H, W) per-pixel class distribution; argmax query assignment by default."""
    images = np.asarray(images, dtype=np.float64)
    if images.ndim == 3:
        images = images[None]
    H, W = images.shape[1:3]
    fp = encode(images, params, cfg)
    qs = init_queries(embed_task(cfg.task_text, params), cfg.num_queries, params)
    out = decode(qs, fp, params, cfg, (H, W))
    return predict_masks(out, cfg, assignment).probs


def infer(image: np.ndarray, params: Params, cfg: ModelConfig) -> np.ndarray:
    """Label mask for one (H, W, 3) image. No ground truth and no post-processing."""
    check_params(params, cfg)
    return assign_labels(predict_probs(image, params, cfg))[0]


def infer_batch(images: np.ndarray, params: Params, cfg: ModelConfig, batch_size: int = 16) -> np.ndarray:
    out = [assign_labels(predict_probs(images[i : i + batch_size], params, cfg)) for i in range(0, len(images), batch_size)]
    return np.concatenate(out) if out else np.zeros((0,) + images.shape[1:3], dtype=np.uint8)


def infer_file(image: np.ndarray, checkpoint_path) -> np.ndarray:
    cfg, params, _ = load_checkpoint(checkpoint_path)
    return infer(image, params, cfg)
