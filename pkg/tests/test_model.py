from dataclasses import replace

import numpy as np
import pytest

from layoutforge.gradsuite import check_model
from layoutforge.model import (
    CheckpointError,
    ModelConfig,
    decode,
    decode_checkpoint,
    embed_task,
    encode,
    encode_checkpoint,
    infer,
    init_params,
    init_queries,
    load_checkpoint,
    save_checkpoint,
)
from layoutforge.model.network import (
    DecodeOutput,
    assign_labels,
    positional,
    predict_masks,
    sigmoid,
    upsample_matrix,
)
from layoutforge.model.objective import batch_objective, surface_text
from layoutforge.synth import SynthConfig, make_sample

CFG = ModelConfig()


@pytest.fixture(scope="module")
def params():
    return init_params(CFG, 0)


def images(n=2, size=64, seed=0):
    sc = SynthConfig(width=size, height=size, seed=seed)
    pairs = [make_sample(sc, i) for i in range(n)]
    return np.stack([p[0] for p in pairs]), np.stack([p[1] for p in pairs])


# ---------------------------------------------------------------------------
# task embedding and queries


def test_embed_task_deterministic_and_sized(params):
    a = embed_task("the task is semantic", params)
    b = embed_task("the task is semantic", params)
    assert a.embedding.shape == (CFG.dim,)
    assert np.array_equal(a.embedding, b.embedding)
    assert not np.array_equal(a.embedding, embed_task("semantic is the task", params).embedding)


def test_embed_task_rejects_empty(params):
    with pytest.raises(ValueError):
        embed_task("   ", params)


def test_init_queries(params):
    task = embed_task(CFG.task_text, params)
    qs = init_queries(task, CFG.num_queries, params)
    assert qs.q.shape == (CFG.num_queries, CFG.dim)
    assert np.array_equal(qs.q[-1], task.embedding)
    zeroed = dict(params, q_offsets=np.zeros_like(params["q_offsets"]))
    assert np.array_equal(init_queries(task, CFG.num_queries, zeroed).q, np.tile(task.embedding, (CFG.num_queries, 1)))
    with pytest.raises(ValueError):
        init_queries(task, 1, params)


# ---------------------------------------------------------------------------
# encoder and decoder


def test_encode_shapes(params):
    imgs, _ = images()
    fp = encode(imgs, params, CFG)
    assert fp.levels[4].shape == (2, 16, 16, CFG.channels)
    assert fp.levels[8].shape == (2, 8, 8, CFG.channels)


def test_encode_zero_weights_give_zero_features(params):
    zero = {k: np.zeros_like(v) for k, v in params.items()}
    fp = encode(images(1)[0], zero, CFG)
    assert not fp.levels[4].any() and not fp.levels[8].any()


def test_encode_rejects_bad_size(params):
    with pytest.raises(ValueError):
        encode(np.zeros((1, 60, 64, 3)), params, CFG)


def test_positional_has_no_dead_channel():
    for h in (2, 4, 8, 16):
        pos = positional(h, h, CFG.pos_freqs)
        assert (np.abs(pos).max(axis=0) > 1e-3).all()


def test_upsample_rows_are_convex():
    for n_out, n_in in ((64, 16), (16, 8), (5, 3)):
        u = upsample_matrix(n_out, n_in)
        assert u.shape == (n_out, n_in)
        assert (u >= 0).all() and np.allclose(u.sum(axis=1), 1.0)


def test_decode_outputs(params):
    imgs, _ = images()
    fp = encode(imgs, params, CFG)
    qs = init_queries(embed_task(CFG.task_text, params), CFG.num_queries, params)
    out = decode(qs, fp, params, CFG, (64, 64))
    assert out.mask_logits.shape == (2, CFG.num_queries, 64, 64)
    assert out.class_logits.shape == (2, CFG.num_queries, CFG.num_classes)
    assert len(out.attention) == 2 * CFG.num_layers
    for a in out.attention:
        assert np.abs(a.sum(axis=-1) - 1.0).max() < 1e-9


# ---------------------------------------------------------------------------
# masks and labels


def hand_output(mask_logits, class_logits):
    B, N = mask_logits.shape[:2]
    return DecodeOutput(np.zeros((B, N, 1)), class_logits, mask_logits, [], {})


def test_predict_masks_hand_case():
    cfg = replace(CFG, num_classes=3)
    logits = np.array([[[[2.0, -1.0]], [[0.5, 3.0]], [[-2.0, 0.0]]]])  # (1, 3, 1, 2)
    cls = np.array([[[5.0, 0, 0], [4.0, 0, 0], [0, 0, 1.0]]])
    pred = predict_masks(hand_output(logits, cls), cfg)
    assert pred.assignment.tolist() == [[0, 0, 2]]
    assert np.allclose(pred.class_maps[0, 0, 0], sigmoid(np.array([2.0, 3.0])))
    assert (pred.class_maps[0, 1] == cfg.absent_level).all()
    assert np.allclose(pred.class_maps[0, 2, 0], sigmoid(np.array([-2.0, 0.0])))
    assert pred.winner[0, 0, 0].tolist() == [0, 1] and (pred.winner[0, 1] == -1).all()
    assert np.abs(pred.probs.sum(axis=1) - 1.0).max() < 1e-12
    fixed = predict_masks(hand_output(logits, cls), cfg, np.array([0, 1, 2]))
    assert np.allclose(fixed.class_maps[0, 1, 0], sigmoid(np.array([0.5, 3.0])))


def test_probs_sum_to_one(params):
    imgs, _ = images()
    fp = encode(imgs, params, CFG)
    qs = init_queries(embed_task(CFG.task_text, params), CFG.num_queries, params)
    pred = predict_masks(decode(qs, fp, params, CFG, (64, 64)), CFG)
    assert np.abs(pred.probs.sum(axis=1) - 1.0).max() < 1e-12


def test_assign_labels(rng):
    onehot = np.zeros((6, 3, 3))
    lab = rng.integers(0, 6, (3, 3))
    for i in range(3):
        for j in range(3):
            onehot[lab[i, j], i, j] = 1.0
    assert np.array_equal(assign_labels(onehot), lab)
    assert not assign_labels(np.full((6, 4, 4), 1 / 6)).any()
    p = rng.random((2, 6, 5, 5))
    got = assign_labels(p)
    for b in range(2):
        for i in range(5):
            for j in range(5):
                col = list(p[b, :, i, j])
                assert got[b, i, j] == col.index(max(col))


# ---------------------------------------------------------------------------
# objective and gradients


def test_surface_text():
    m = np.zeros((4, 4), dtype=np.uint8)
    assert surface_text(m) == "background"
    m[0] = 1
    m[3] = 2
    assert surface_text(m).split() == ["ceiling", "floor"]


def test_objective_parts_and_switches(params):
    imgs, masks = images()
    from layoutforge.model import ObjectiveConfig

    full = batch_objective(params, imgs, masks, CFG)
    assert abs(full.value - sum(full.parts.values())) < 1e-12
    assert all(v > 0 for v in full.parts.values())
    bare = batch_objective(params, imgs, masks, CFG, ObjectiveConfig(use_geo=False, use_contrastive=False))
    assert bare.parts["geo"] == 0.0 and bare.parts["contrastive"] == 0.0
    assert not bare.grads["tau"].any()
    assert set(full.grads) == set(params)


def test_model_gradcheck_few_points():
    rep = check_model(points=3, seed=5)
    assert rep.passed, rep.line()


# ---------------------------------------------------------------------------
# checkpoint and inference


def test_checkpoint_roundtrip(params, tmp_path):
    path = tmp_path / "ck.bin"
    save_checkpoint(path, params, CFG, {"epochs": 3})
    cfg, back, extra = load_checkpoint(path)
    assert cfg == CFG and extra == {"epochs": 3}
    assert set(back) == set(params)
    for k in params:
        assert np.array_equal(back[k], params[k])
    assert encode_checkpoint(back, cfg, extra) == path.read_bytes()


def test_checkpoint_errors(params):
    data = encode_checkpoint(params, CFG)
    with pytest.raises(CheckpointError):
        decode_checkpoint(b"XXXXXXXX" + data[8:])
    with pytest.raises(CheckpointError):
        decode_checkpoint(data[:-3])
    with pytest.raises(CheckpointError):
        decode_checkpoint(data + b"\0")
    bad = dict(params, **{"cls.w": np.zeros((3, 3))})
    with pytest.raises(CheckpointError):
        decode_checkpoint(encode_checkpoint(bad, CFG))
    with pytest.raises(CheckpointError):
        infer(np.zeros((64, 64, 3)), bad, CFG)
    missing = {k: v for k, v in params.items() if k != "tau"}
    with pytest.raises(CheckpointError):
        decode_checkpoint(encode_checkpoint(missing, CFG))


def test_infer_deterministic_and_in_range(params):
    img = images(1, seed=3)[0][0]
    a = infer(img, params, CFG)
    b = infer(img.copy(), params, CFG)
    assert a.shape == (64, 64) and a.dtype == np.uint8
    assert np.array_equal(a, b)
    assert a.max() <= 5
