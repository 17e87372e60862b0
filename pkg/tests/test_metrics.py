import itertools
import math

import numpy as np
import pytest

from conftest import sample_of_type
from layoutforge.metrics import (
    corner_error,
    evaluate,
    extract_corners,
    hungarian,
    junction_lattice,
    match_corners,
    pixel_accuracy,
    pixel_error,
)
from layoutforge.synth import SynthConfig, gen_dataset

# ---------------------------------------------------------------------------
# pixel metrics


def test_pixel_error_counting_oracle(rng):
    for _ in range(500):
        a, b = rng.integers(0, 6, (8, 8)), rng.integers(0, 6, (8, 8))
        wrong = sum(1 for i in range(8) for j in range(8) if a[i, j] != b[i, j])
        assert pixel_error(a, b) == 100.0 * wrong / 64
        assert pixel_error(a, b) == pixel_error(b, a)
        assert pixel_accuracy(a, b) == 100.0 - pixel_error(a, b)


def test_pixel_error_identities(rng):
    m = rng.integers(0, 6, (9, 7))
    assert pixel_error(m, m) == 0.0
    assert pixel_error(np.zeros((4, 4)), np.ones((4, 4))) == 100.0
    with pytest.raises(ValueError):
        pixel_error(np.zeros((4, 4)), np.zeros((4, 5)))


# ---------------------------------------------------------------------------
# corner extraction


def test_constant_mask_has_no_corners():
    assert extract_corners(np.full((8, 8), 2)).shape == (0, 2)


def test_four_quadrants():
    m = np.zeros((8, 8), dtype=np.uint8)
    m[:4, 4:] = 1
    m[4:, :4] = 2
    m[4:, 4:] = 3
    c = {tuple(p) for p in extract_corners(m).tolist()}
    assert c == {(3.5, 3.5), (3.5, -0.5), (3.5, 7.5), (-0.5, 3.5), (7.5, 3.5)}
    lat = junction_lattice(m)
    assert lat.shape == (9, 9) and lat.sum() == 5


@pytest.mark.parametrize("type_id", range(11))
def test_synthetic_corners_recovered(type_id):
    for index in range(3):
        _, mask, poly = sample_of_type(type_id, 64, index)
        got, want = extract_corners(mask), poly.corner_array()
        assert len(got) == len(want)
        _, pairs = match_corners(got, want, math.hypot(64, 64))
        assert len(pairs) == len(want)
        for i, j in pairs:
            assert np.linalg.norm(got[i] - want[j]) <= 2.0


# ---------------------------------------------------------------------------
# corner error


def test_offset_case():
    rng = np.random.default_rng(7)
    gt = rng.uniform(20, 230, (4, 2))
    e = corner_error(gt + [3.0, 4.0], gt, 256, 256)
    assert abs(e - 1.3811) < 1e-4
    assert abs(e - 500 / math.hypot(256, 256)) < 1e-12


def test_corner_error_edge_cases():
    assert corner_error(np.zeros((0, 2)), np.zeros((0, 2)), 10, 10) == 0.0
    assert abs(corner_error(np.zeros((0, 2)), np.ones((3, 2)), 10, 10) - 100.0) < 1e-12
    p = np.array([[1.0, 1.0]])
    assert corner_error(p, p, 10, 10) == 0.0
    with pytest.raises(ValueError):
        corner_error(p, p, 0, 10)


def brute_corner_error(pred, gt, W, H):
    diag = math.hypot(W, H)
    n = max(len(pred), len(gt))
    if n == 0:
        return 0.0
    small, big = (pred, gt) if len(pred) <= len(gt) else (gt, pred)
    best = math.inf
    for perm in itertools.permutations(range(len(big)), len(small)):
        c = sum(min(math.dist(small[i], big[j]), diag) for i, j in enumerate(perm))
        best = min(best, c)
    best += (len(big) - len(small)) * diag
    return 100.0 * best / (n * diag)


def test_corner_error_brute_force(rng):
    for _ in range(500):
        p = rng.uniform(0, 32, (rng.integers(0, 6), 2))
        g = rng.uniform(0, 32, (rng.integers(0, 6), 2))
        assert abs(corner_error(p, g, 32, 32) - brute_corner_error(p, g, 32, 32)) < 1e-12


def test_corner_error_symmetry_and_translation(rng):
    for _ in range(50):
        p = rng.uniform(0, 50, (rng.integers(1, 6), 2))
        g = rng.uniform(0, 50, (rng.integers(1, 6), 2))
        e = corner_error(p, g, 64, 64)
        assert abs(e - corner_error(g, p, 64, 64)) < 1e-12
        t = rng.uniform(-5, 5, 2)
        assert abs(e - corner_error(p + t, g + t, 64, 64)) < 1e-9


def test_hungarian_brute_force(rng):
    for n in range(1, 7):
        for _ in range(20):
            c = rng.random((n, n))
            col = hungarian(c)
            assert sorted(col.tolist()) == list(range(n))
            best = min(sum(c[i, p[i]] for i in range(n)) for p in itertools.permutations(range(n)))
            assert abs(c[np.arange(n), col].sum() - best) < 1e-12


# ---------------------------------------------------------------------------
# dataset evaluation


@pytest.fixture
def dataset(tmp_path):
    return gen_dataset(SynthConfig(width=32, height=32, seed=3), 4, tmp_path / "ds")


def test_evaluate_gt_mode(dataset):
    rep = evaluate(dataset, gt_mode=True)
    assert (rep.PA, rep.PE, rep.e_cor, rep.n_samples, rep.n_failed) == (100.0, 0.0, 0.0, 4, 0)


def test_evaluate_predictor_and_report(dataset, tmp_path):
    rep = evaluate(dataset, predict=lambda img: np.zeros(img.shape[:2], dtype=np.uint8), out_path=tmp_path / "r.json")
    assert rep.PE > 0 and abs(rep.PA + rep.PE - 100.0) < 1e-12
    assert abs(rep.e_cor - 100.0) < 1e-12  # a constant mask has no corners
    assert (tmp_path / "r.json").read_text() == rep.to_json()
    assert "PE %" in rep.table()
    threaded = evaluate(dataset, predict=lambda img: np.zeros(img.shape[:2], dtype=np.uint8), threads=2)
    assert threaded.to_json() == rep.to_json()


def test_evaluate_missing_file(dataset):
    dataset.path(dataset.records[1].mask).unlink()
    rep = evaluate(dataset, gt_mode=True)
    assert rep.n_samples == 3 and rep.n_failed == 1
    assert rep.samples[1].error and rep.samples[1].pe is None
    assert rep.PA == 100.0


def test_evaluate_needs_predictor(dataset):
    with pytest.raises(ValueError):
        evaluate(dataset)
