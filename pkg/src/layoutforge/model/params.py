"""Parameter dictionaries: initialisation and flat-vector views."""

from __future__ import annotations

import numpy as np

from ..rng import make_rng
from .config import ModelConfig

Params = dict  # name -> float64 ndarray

LEVELS = (8, 4)  # decoder visits the coarse grid first, then the fine one


def attn_prefix(layer: int, level: int) -> str:
    return f"dec{layer}.l{level}"


def param_shapes(cfg: ModelConfig) -> dict[str, tuple]:
    C, d, N, K1 = cfg.channels, cfg.dim, cfg.num_queries, cfg.num_classes
    feat = C + cfg.pos_dim
    shapes = {
        "tok_table": (cfg.vocab, d),
        "q_offsets": (N - 1, d),
        "enc1.w": (C, 3 * cfg.patch1**2),
        "enc1.b": (C,),
        "enc2.w": (C, C * cfg.patch2**2),
        "enc2.b": (C,),
    }
    for layer in range(cfg.num_layers):
        for lv in LEVELS:
            p = attn_prefix(layer, lv)
            shapes[f"{p}.q"] = (d, d)
            shapes[f"{p}.k"] = (d, feat)
            shapes[f"{p}.v"] = (d, feat)
            shapes[f"{p}.o"] = (d, d)
    shapes.update({
        "cls.w": (K1, d),
        "cls.b": (K1,),
        "mask.w": (d, feat),
        "mask.b": (d,),
        "tau": (),
    })
    return shapes


def init_params(cfg: ModelConfig, seed: int | None = None) -> Params:
    rng = make_rng(cfg.init_seed if seed is None else seed, "init")
    out = {}
    for name, shape in param_shapes(cfg).items():
        if name == "tau":
            out[name] = np.array(cfg.init_tau)
        elif name.endswith(".b"):
            out[name] = np.zeros(shape)
        elif name == "tok_table":
            out[name] = rng.normal(0.0, 1.0, shape)
        elif name == "q_offsets":
            out[name] = rng.normal(0.0, 0.5, shape)
        else:
            out[name] = rng.normal(0.0, 1.0 / np.sqrt(shape[1]), shape)
    return out


def zeros_like(params: Params) -> Params:
    return {k: np.zeros_like(v) for k, v in params.items()}


def flatten(params: Params, names=None) -> np.ndarray:
    names = sorted(params) if names is None else names
    return np.concatenate([np.ravel(params[k]) for k in names])


def unflatten(vec: np.ndarray, like: Params, names=None) -> Params:
    names = sorted(like) if names is None else names
    out = dict(like)
    at = 0
    for k in names:
        n = like[k].size
        out[k] = vec[at : at + n].reshape(like[k].shape)
        at += n
    return out
