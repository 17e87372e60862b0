import json

import numpy as np
import pytest

from layoutforge.degen import AugmentConfig, Sample
from layoutforge.model import ModelConfig, ObjectiveConfig, OptimizerConfig, TrainingDiverged, init_params, train
from layoutforge.model.checkpoint import encode_checkpoint
from layoutforge.model.train import AdamState, adamw_update, cosine_lr, epoch_plan
from layoutforge.model.params import zeros_like
from layoutforge.synth import SynthConfig, make_sample

CFG = ModelConfig()
SC = SynthConfig(width=32, height=32, seed=4)
STILL = AugmentConfig(brightness=0.0, contrast=0.0, hflip_prob=0.0, degen_prob=0.0)


@pytest.fixture(scope="module")
def samples():
    return [Sample(*make_sample(SC, i)) for i in range(4)]


def run(samples, tmp=None, **opt):
    o = OptimizerConfig(**{"epochs": 2, "batch_size": 4, "lr": 3e-3, **opt})
    return train(samples, CFG, ObjectiveConfig(), STILL, o, render=SC, out_dir=tmp)


def test_zero_lr_leaves_params(samples):
    res = run(samples, lr=0.0, weight_decay=0.0)
    init = init_params(CFG)
    for k in init:
        assert np.array_equal(res.params[k], init[k]), k


def test_zero_epochs_is_init(samples, tmp_path):
    res = run(samples, tmp_path, epochs=0)
    assert res.history == []
    assert (tmp_path / "checkpoint.bin").read_bytes() == encode_checkpoint(init_params(CFG), CFG, {"epochs": 0, "seed": 0})


def test_loss_decreases_on_fixed_batch(samples):
    res = train(samples, CFG, ObjectiveConfig(), STILL, OptimizerConfig(epochs=5, batch_size=4))
    losses = [h["loss"] for h in res.history]
    assert all(b < a for a, b in zip(losses, losses[1:])), losses


def test_same_seed_same_bytes(samples, tmp_path):
    aug = AugmentConfig(degen_prob=0.5)
    opt = OptimizerConfig(epochs=2, lr=3e-3, seed=7)
    train(samples, CFG, ObjectiveConfig(), aug, opt, render=SC, out_dir=tmp_path / "a")
    train(samples, CFG, ObjectiveConfig(), aug, opt, render=SC, out_dir=tmp_path / "b")
    for name in ("checkpoint.bin", "train_log.jsonl"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    rows = [json.loads(l) for l in (tmp_path / "a" / "train_log.jsonl").read_text().splitlines()]
    assert [r["epoch"] for r in rows] == [0, 1]


def test_divergence_raises_and_dumps(samples, tmp_path):
    bad = init_params(CFG)
    bad["mask.b"] = np.full_like(bad["mask.b"], np.nan)
    with pytest.raises(TrainingDiverged) as e:
        train(samples, CFG, ObjectiveConfig(), STILL, OptimizerConfig(epochs=1), params=bad, out_dir=tmp_path)
    dump = json.loads((tmp_path / "divergence.json").read_text())
    assert dump["epoch"] == 0 and dump["samples"]
    assert dump["nonfinite_grads"]
    assert e.value.dump == dump


def test_no_samples_is_an_error():
    with pytest.raises(ValueError):
        train([], CFG, ObjectiveConfig(), STILL, OptimizerConfig(epochs=1))


def test_cosine_lr():
    assert cosine_lr(1.0, 0, 10) == 1.0
    assert abs(cosine_lr(1.0, 5, 10) - 0.5) < 1e-15
    assert cosine_lr(1.0, 10, 10) == 0.0


def test_adamw_skips_decay_on_tau_and_bias():
    p = {"w": np.ones(2), "x.b": np.ones(2), "tau": np.array(0.5)}
    g = zeros_like(p)
    state = AdamState(zeros_like(p), zeros_like(p))
    adamw_update(p, g, state, OptimizerConfig(weight_decay=0.5), lr=0.1)
    assert np.allclose(p["w"], 0.95) and np.array_equal(p["x.b"], np.ones(2)) and float(p["tau"]) == 0.5


def test_tau_is_clamped():
    p = {"tau": np.array(0.02)}
    state = AdamState(zeros_like(p), zeros_like(p))
    adamw_update(p, {"tau": np.array(1.0)}, state, OptimizerConfig(min_tau=0.01), lr=1.0)
    assert float(p["tau"]) == 0.01


def test_epoch_plan_modes():
    sup = epoch_plan(50, 0, AugmentConfig(degen_prob=0.5), 0)
    assert sorted(i for i, d in sup if not d) == list(range(50))
    assert 10 < sum(d for _, d in sup) < 40
    rep = epoch_plan(50, 0, AugmentConfig(degen_prob=0.5, degen_mode="replace"), 0)
    assert sorted(i for i, _ in rep) == list(range(50))
    assert epoch_plan(50, 1, AugmentConfig(), 0) != epoch_plan(50, 2, AugmentConfig(), 0)
