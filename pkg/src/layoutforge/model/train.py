"""AdamW training loop with cosine learning-rate decay."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..core import DegenerationDAG, PolyLayout, RoomTaxonomy, build_dag, default_taxonomy, load_mask
from ..degen import AugmentConfig, Sample, augment_sample
from ..rng import make_rng
from ..synth import DatasetManifest, SynthConfig, load_image
from .checkpoint import save_checkpoint
from .config import ModelConfig, OptimizerConfig
from .network import assign_labels
from .objective import ObjectiveConfig, batch_objective
from .params import Params, init_params, zeros_like

log = logging.getLogger(__name__)

NO_DECAY = ("tau",)


class TrainingDiverged(RuntimeError):
    def __init__(self, message: str, dump: dict):
        super().__init__(message)
        self.dump = dump


@dataclass
class AdamState:
    m: Params
    v: Params
    step: int = 0


def cosine_lr(base: float, step: int, total: int) -> float:
    if total <= 0:
        return base
    return 0.5 * base * (1.0 + math.cos(math.pi * min(step, total) / total))


def adamw_update(params: Params, grads: Params, state: AdamState, ocfg: OptimizerConfig, lr: float) -> None:
    """Decoupled weight decay Adam step, in place.  Biases and tau are not decayed."""
    state.step += 1
    b1, b2 = ocfg.beta1, ocfg.beta2
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for k, g in grads.items():
        m = state.m[k] = b1 * state.m[k] + (1.0 - b1) * g
        v = state.v[k] = b2 * state.v[k] + (1.0 - b2) * g * g
        p = params[k]
        if ocfg.weight_decay and k not in NO_DECAY and not k.endswith(".b"):
            p = p - lr * ocfg.weight_decay * p
        params[k] = p - lr * (m / c1) / (np.sqrt(v / c2) + ocfg.eps)
    params["tau"] = np.array(max(float(params["tau"]), ocfg.min_tau))


def load_samples(manifest: DatasetManifest) -> list[Sample]:
    out = []
    for r in manifest.records:
        out.append(Sample(load_image(manifest.path(r.image)), load_mask(manifest.path(r.mask)), PolyLayout.load(manifest.path(r.poly))))
    return out


@dataclass
class TrainResult:
    params: Params
    history: list = field(default_factory=list)

    @property
    def final_loss(self) -> float:
        return self.history[-1]["loss"] if self.history else float("nan")


def epoch_plan(n: int, epoch: int, aug: AugmentConfig, seed: int) -> list[tuple[int, bool]]:
    """Shuffled (sample index, degenerate?) items for one epoch.

    "supplement" keeps every original and appends a degenerated copy of each
    sample with probability degen_prob; "replace" degenerates the sample
    itself with that probability.
    """
    rng = make_rng(seed, "epoch", epoch)
    flags = rng.random(n) < aug.degen_prob
    if aug.degen_mode == "replace":
        items = [(i, bool(f)) for i, f in enumerate(flags)]
    else:
        items = [(i, False) for i in range(n)] + [(i, True) for i in np.flatnonzero(flags)]
    return [items[j] for j in rng.permutation(len(items))]


def train(
    samples: list[Sample] | DatasetManifest,
    model_cfg: ModelConfig,
    objective: ObjectiveConfig,
    aug: AugmentConfig,
    opt: OptimizerConfig,
    render: SynthConfig | None = None,
    taxonomy: RoomTaxonomy | None = None,
    params: Params | None = None,
    out_dir=None,
    eval_fn=None,
) -> TrainResult:
    """Minimise the batch objective; writes ``checkpoint.bin`` and ``train_log.jsonl`` to out_dir.

    ``eval_fn(params) -> dict`` is called after each epoch and merged into the log row.
    """
    model_cfg.validate()
    opt.validate()
    aug.validate()
    objective.weights.validate()
    objective.edge.validate()
    if isinstance(samples, DatasetManifest):
        samples = load_samples(samples)
    if not samples:
        raise ValueError("no training samples")
    taxonomy = taxonomy or default_taxonomy()
    dag: DegenerationDAG = build_dag(taxonomy)
    params = init_params(model_cfg) if params is None else {k: np.array(v, dtype=np.float64) for k, v in params.items()}
    state = AdamState(zeros_like(params), zeros_like(params))
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "train_log.jsonl").write_text("")

    plans = [epoch_plan(len(samples), e, aug, opt.seed) for e in range(opt.epochs)]
    total_steps = sum(math.ceil(len(p) / opt.batch_size) for p in plans)
    history = []
    for epoch, plan in enumerate(plans):
        loss_sum, err_sum, n_pix, n_batches = 0.0, 0, 0, 0
        for start in range(0, len(plan), opt.batch_size):
            chunk = plan[start : start + opt.batch_size]
            batch = []
            for j, (i, degen) in enumerate(chunk):
                rng = make_rng(opt.seed, "augment", epoch, start + j)
                batch.append(augment_sample(samples[i], dag, aug, rng, taxonomy, render, degen_prob=1.0 if degen else 0.0))
            images = np.stack([s.image for s in batch])
            masks = np.stack([s.mask for s in batch])
            res = batch_objective(params, images, masks, model_cfg, objective)
            finite = np.isfinite(res.value) and all(np.isfinite(g).all() for g in res.grads.values())
            if not finite:
                dump = {
                    "epoch": epoch,
                    "step": state.step,
                    "parts": {k: float(v) for k, v in res.parts.items()},
                    "samples": [int(i) for i, _ in chunk],
                    "ops": [list(s.ops) for s in batch],
                    "nonfinite_grads": sorted(k for k, g in res.grads.items() if not np.isfinite(g).all()),
                    "tau": float(params["tau"]),
                }
                if out is not None:
                    (out / "divergence.json").write_text(json.dumps(dump, indent=1, sort_keys=True))
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}, step {state.step}", dump)
            adamw_update(params, res.grads, state, opt, cosine_lr(opt.lr, state.step, total_steps))
            loss_sum += res.value
            n_batches += 1
            pred = assign_labels(res.probs)
            err_sum += int((pred != masks).sum())
            n_pix += masks.size
        row = {
            "epoch": epoch,
            "loss": loss_sum / max(n_batches, 1),
            "train_pe": 100.0 * err_sum / max(n_pix, 1),
            "lr": cosine_lr(opt.lr, state.step, total_steps),
            "tau": float(params["tau"]),
        }
        if eval_fn is not None:
            row.update(eval_fn(params))
        history.append(row)
        log.info("epoch %d loss %.4f train PE %.2f%%", epoch, row["loss"], row["train_pe"])
        if out is not None:
            with open(out / "train_log.jsonl", "a") as f:
                f.write(json.dumps(row, sort_keys=True) + "\n")
    if out is not None:
        save_checkpoint(out / "checkpoint.bin", params, model_cfg, {"epochs": opt.epochs, "seed": opt.seed})
    return TrainResult(params, history)
