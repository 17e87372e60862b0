"""Forward and hand-derived backward passes of the query segmenter.

Shapes use B batch, N queries, d embedding width, C feature channels,
P flattened grid cells, K1 = K + 1 classes.  Images are channels-last
``(B, H, W, 3)`` arrays.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .config import ModelConfig
from .params import LEVELS, Params, attn_prefix

# ---------------------------------------------------------------------------
# task text


def token_rows(text: str, vocab: int) -> list[int]:
    """Whitespace tokens hashed with their position: crc32(f"{i}:{tok}") % vocab."""
    toks = text.lower().split()
    if not toks:
        raise ValueError("empty task text")
    return [zlib.crc32(f"{i}:{t}".encode("utf-8")) % vocab for i, t in enumerate(toks)]


@dataclass(frozen=True)
class TaskToken:
    text: str
    rows: tuple[int, ...]
    embedding: np.ndarray


def embed_task(text: str, params: Params) -> TaskToken:
    table = params["tok_table"]
    rows = tuple(token_rows(text, table.shape[0]))
    return TaskToken(text, rows, table[list(rows)].mean(axis=0))


def embed_rows_backward(rows, d_emb: np.ndarray, d_table: np.ndarray) -> None:
    np.add.at(d_table, list(rows), d_emb / len(rows))


@dataclass(frozen=True)
class QuerySet:
    q: np.ndarray  # (N, d); last row is the task token

    @property
    def n(self) -> int:
        return self.q.shape[0]


def init_queries(task: TaskToken, n: int, params: Params) -> QuerySet:
    if n < 2:
        raise ValueError("need at least two queries")
    offsets = params["q_offsets"]
    if offsets.shape[0] != n - 1:
        raise ValueError(f"model has {offsets.shape[0] + 1} queries, asked for {n}")
    qp = task.embedding[None, :] + offsets
    return QuerySet(np.concatenate([qp, task.embedding[None, :]], axis=0))


# ---------------------------------------------------------------------------
# encoder


def patchify(x: np.ndarray, p: int) -> np.ndarray:
    B, H, W, C = x.shape
    return x.reshape(B, H // p, p, W // p, p, C).transpose(0, 1, 3, 2, 4, 5).reshape(B, H // p, W // p, p * p * C)


def unpatchify(x: np.ndarray, p: int, C: int) -> np.ndarray:
    B, h, w, _ = x.shape
    return x.reshape(B, h, w, p, p, C).transpose(0, 1, 3, 2, 4, 5).reshape(B, h * p, w * p, C)


@lru_cache(maxsize=32)
def positional(h: int, w: int, freqs: int) -> np.ndarray:
    """(h*w, 4*freqs) fixed sin/cos code of normalised cell centres.

    Frequencies are multiples of pi/2 so that no channel vanishes on every
    cell of a small grid (an all-zero channel gives its weights no gradient).
    """
    u = (np.arange(w) + 0.5) / w
    v = (np.arange(h) + 0.5) / h
    uu, vv = np.meshgrid(u, v)
    chans = []
    for k in range(1, freqs + 1):
        f = 0.5 * np.pi * k
        chans += [np.sin(f * uu), np.cos(f * uu), np.sin(f * vv), np.cos(f * vv)]
    return np.stack(chans, axis=-1).reshape(h * w, -1)


@dataclass
class FeaturePyramid:
    levels: dict  # stride -> (B, h, w, C) features
    cache: dict

    def tokens(self, level: int, cfg: ModelConfig) -> np.ndarray:
        f = self.levels[level]
        B, h, w, C = f.shape
        pos = np.broadcast_to(positional(h, w, cfg.pos_freqs), (B, h * w, cfg.pos_dim))
        return np.concatenate([f.reshape(B, h * w, C), pos], axis=-1)


def encode(images: np.ndarray, params: Params, cfg: ModelConfig) -> FeaturePyramid:
    if images.ndim == 3:
        images = images[None]
    B, H, W, _ = images.shape
    if H % cfg.stride or W % cfg.stride:
        raise ValueError(f"image size {H}x{W} not divisible by {cfg.stride}")
    x1 = patchify(images, cfg.patch1)
    f4 = np.tanh(x1 @ params["enc1.w"].T + params["enc1.b"])
    x2 = patchify(f4, cfg.patch2)
    f8 = np.tanh(x2 @ params["enc2.w"].T + params["enc2.b"])
    return FeaturePyramid({4: f4, 8: f8}, {"x1": x1, "x2": x2})


def encode_backward(fp: FeaturePyramid, d_f4, d_f8, params: Params, cfg: ModelConfig, grads: Params) -> None:
    f4, f8 = fp.levels[4], fp.levels[8]
    x1, x2 = fp.cache["x1"], fp.cache["x2"]
    dz2 = d_f8 * (1.0 - f8 * f8)
    grads["enc2.w"] += np.einsum("bhwi,bhwj->ij", dz2, x2)
    grads["enc2.b"] += dz2.sum(axis=(0, 1, 2))
    d_f4 = d_f4 + unpatchify(dz2 @ params["enc2.w"], cfg.patch2, cfg.channels)
    dz1 = d_f4 * (1.0 - f4 * f4)
    grads["enc1.w"] += np.einsum("bhwi,bhwj->ij", dz1, x1)
    grads["enc1.b"] += dz1.sum(axis=(0, 1, 2))


# ---------------------------------------------------------------------------
# decoder


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    e = np.exp(x - x.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


@lru_cache(maxsize=32)
def upsample_matrix(n_out: int, n_in: int) -> np.ndarray:
    """Bilinear interpolation weights, half-pixel centres, edge clamped."""
    u = np.zeros((n_out, n_in))
    src = np.clip((np.arange(n_out) + 0.5) * n_in / n_out - 0.5, 0.0, n_in - 1)
    i0 = np.floor(src).astype(int)
    i1 = np.minimum(i0 + 1, n_in - 1)
    w1 = src - i0
    np.add.at(u, (np.arange(n_out), i0), 1.0 - w1)
    np.add.at(u, (np.arange(n_out), i1), w1)
    return u


@dataclass
class DecodeOutput:
    queries: np.ndarray  # (B, N, d)
    class_logits: np.ndarray  # (B, N, K1)
    mask_logits: np.ndarray  # (B, N, H, W)
    attention: list  # (B, N, P) per attention block
    cache: dict


def _attend(q_in, tokens, params, prefix, scale):
    q = q_in @ params[f"{prefix}.q"].T
    k = tokens @ params[f"{prefix}.k"].T
    v = tokens @ params[f"{prefix}.v"].T
    a = softmax(q @ k.transpose(0, 2, 1) * scale)
    o = a @ v
    out = q_in + o @ params[f"{prefix}.o"].T
    return out, (q_in, q, k, v, a, o)


def _attend_backward(d_out, tokens, cache, params, prefix, scale, grads):
    q_in, q, k, v, a, o = cache
    grads[f"{prefix}.o"] += np.einsum("bni,bnj->ij", d_out, o)
    d_o = d_out @ params[f"{prefix}.o"]
    d_a = d_o @ v.transpose(0, 2, 1)
    d_v = a.transpose(0, 2, 1) @ d_o
    d_s = a * (d_a - (d_a * a).sum(axis=-1, keepdims=True)) * scale
    d_q = d_s @ k
    d_k = d_s.transpose(0, 2, 1) @ q
    grads[f"{prefix}.q"] += np.einsum("bni,bnj->ij", d_q, q_in)
    grads[f"{prefix}.k"] += np.einsum("bpi,bpj->ij", d_k, tokens)
    grads[f"{prefix}.v"] += np.einsum("bpi,bpj->ij", d_v, tokens)
    d_in = d_out + d_q @ params[f"{prefix}.q"]
    d_tok = d_k @ params[f"{prefix}.k"] + d_v @ params[f"{prefix}.v"]
    return d_in, d_tok


def decode(qs: QuerySet, fp: FeaturePyramid, params: Params, cfg: ModelConfig, out_hw: tuple[int, int]) -> DecodeOutput:
    f4 = fp.levels[4]
    B, h4, w4, _ = f4.shape
    tokens = {lv: fp.tokens(lv, cfg) for lv in LEVELS}
    scale = 1.0 / np.sqrt(cfg.dim)
    q = np.broadcast_to(qs.q, (B,) + qs.q.shape).copy()
    blocks, attn = [], []
    for layer in range(cfg.num_layers):
        for lv in LEVELS:
            p = attn_prefix(layer, lv)
            q, c = _attend(q, tokens[lv], params, p, scale)
            blocks.append((p, lv, c))
            attn.append(c[4])
    cls = q @ params["cls.w"].T + params["cls.b"]
    fm = tokens[4] @ params["mask.w"].T + params["mask.b"]  # (B, P4, d)
    low = (q @ fm.transpose(0, 2, 1)).reshape(B, -1, h4, w4)
    H, W = out_hw
    uh, uw = upsample_matrix(H, h4), upsample_matrix(W, w4)
    masks = np.einsum("hi,bnij,wj->bnhw", uh, low, uw, optimize=True)
    shapes = {lv: fp.levels[lv].shape for lv in LEVELS}
    cache = {"blocks": blocks, "tokens": tokens, "shapes": shapes, "fm": fm, "uh": uh, "uw": uw}
    return DecodeOutput(q, cls, masks, attn, cache)


def decode_backward(out: DecodeOutput, d_queries, d_cls, d_masks, params: Params, cfg: ModelConfig, grads: Params):
    """Returns (d_q0 (N, d), d_f4, d_f8)."""
    c = out.cache
    q, fm, tokens = out.queries, c["fm"], c["tokens"]
    B, N, _ = q.shape
    scale = 1.0 / np.sqrt(cfg.dim)
    d_q = np.zeros_like(q) if d_queries is None else d_queries.copy()
    if d_cls is not None:
        grads["cls.w"] += np.einsum("bnk,bnd->kd", d_cls, q)
        grads["cls.b"] += d_cls.sum(axis=(0, 1))
        d_q += d_cls @ params["cls.w"]
    d_tok = {lv: np.zeros_like(tokens[lv]) for lv in LEVELS}
    if d_masks is not None:
        d_low = np.einsum("hi,bnhw,wj->bnij", c["uh"], d_masks, c["uw"], optimize=True).reshape(B, N, -1)
        d_q += d_low @ fm
        d_fm = d_low.transpose(0, 2, 1) @ q
        grads["mask.w"] += np.einsum("bpi,bpj->ij", d_fm, tokens[4])
        grads["mask.b"] += d_fm.sum(axis=(0, 1))
        d_tok[4] += d_fm @ params["mask.w"]
    for p, lv, cache in reversed(c["blocks"]):
        d_q, dt = _attend_backward(d_q, tokens[lv], cache, params, p, scale, grads)
        d_tok[lv] += dt
    C = cfg.channels
    grid = {lv: d_tok[lv][..., :C].reshape(c["shapes"][lv]) for lv in LEVELS}
    return d_q.sum(axis=0), grid[4], grid[8]


# ---------------------------------------------------------------------------
# masks and labels


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


@dataclass
class MaskPrediction:
    class_maps: np.ndarray  # (B, K1, H, W) per-class mask probabilities
    probs: np.ndarray  # (B, K1, H, W) per-pixel class distribution
    assignment: np.ndarray  # (B, N) class of each query
    winner: np.ndarray  # (B, K1, H, W) query index behind each class map, -1 if none


def fixed_assignment(n: int, k1: int) -> np.ndarray:
    return np.arange(n) % k1


def predict_masks(out: DecodeOutput, cfg: ModelConfig, assignment: np.ndarray | None = None) -> MaskPrediction:
    """Class maps from the queries' masks; queries join the class of their argmax logit.

    Passing ``assignment`` (shape (N,) or (B, N)) overrides the argmax.
    """
    logits = out.mask_logits
    B, N, H, W = logits.shape
    K1 = out.class_logits.shape[-1]
    if assignment is None:
        assignment = out.class_logits.argmax(axis=-1)
    assignment = np.broadcast_to(np.asarray(assignment), (B, N))
    neg = -np.inf
    best = np.full((B, K1, H, W), neg)
    winner = np.full((B, K1, H, W), -1, dtype=np.int64)
    for n in range(N):
        for b in range(B):
            k = assignment[b, n]
            better = logits[b, n] > best[b, k]
            best[b, k] = np.where(better, logits[b, n], best[b, k])
            winner[b, k] = np.where(better, n, winner[b, k])
    claimed = winner >= 0
    maps = np.where(claimed, sigmoid(np.where(claimed, best, 0.0)), cfg.absent_level)
    probs = softmax(cfg.class_sharpness * maps, axis=1)
    return MaskPrediction(maps, probs, assignment.copy(), winner)


def predict_masks_backward(pred: MaskPrediction, d_maps, d_probs, cfg: ModelConfig, n_queries: int) -> np.ndarray:
    """Gradient w.r.t. the (B, N, H, W) mask logits."""
    p = pred.probs
    g = np.zeros_like(p) if d_maps is None else d_maps.copy()
    if d_probs is not None:
        g += cfg.class_sharpness * p * (d_probs - (d_probs * p).sum(axis=1, keepdims=True))
    m = pred.class_maps
    g = g * m * (1.0 - m)
    B, K1, H, W = g.shape
    d_logits = np.zeros((B, n_queries, H, W))
    for n in range(n_queries):
        d_logits[:, n] = np.where(pred.winner == n, g, 0.0).sum(axis=1)
    return d_logits


def assign_labels(probs: np.ndarray) -> np.ndarray:
    """Per-pixel argmax over the class axis (first max wins, so ties go to the lower id)."""
    return np.argmax(probs, axis=-3).astype(np.uint8)
