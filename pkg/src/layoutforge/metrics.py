"""Pixel and corner metrics for layout masks."""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .core import PolyLayout, load_mask

log = logging.getLogger(__name__)


def pixel_error(pred: np.ndarray, gt: np.ndarray) -> float:
    """Percentage of pixels whose labels differ."""
    pred, gt = np.asarray(pred), np.asarray(gt)
    if pred.shape != gt.shape:
        raise ValueError(f"mask shapes differ: {pred.shape} vs {gt.shape}")
    if pred.size == 0:
        raise ValueError("empty masks")
    return 100.0 * np.count_nonzero(pred != gt) / pred.size


def pixel_accuracy(pred: np.ndarray, gt: np.ndarray) -> float:
    return 100.0 - pixel_error(pred, gt)


# ---------------------------------------------------------------------------
# corners


def junction_lattice(mask: np.ndarray) -> np.ndarray:
    """(H+1, W+1) boolean grid over pixel-corner points marking label junctions.

    Lattice point (r, c) sits at pixel coordinates (x=c-0.5, y=r-0.5).
    Inner points are marked when their 2x2 pixel window holds >= 3 labels;
    frame points when the two border pixels on either side differ.
    """
    m = np.asarray(mask)
    H, W = m.shape
    lat = np.zeros((H + 1, W + 1), dtype=bool)
    if H >= 2 and W >= 2:
        win = np.stack([m[:-1, :-1], m[:-1, 1:], m[1:, :-1], m[1:, 1:]])
        s = np.sort(win, axis=0)
        distinct = 1 + (s[1:] != s[:-1]).sum(axis=0)
        lat[1:H, 1:W] = distinct >= 3
    lat[0, 1:W] |= m[0, 1:] != m[0, :-1]
    lat[H, 1:W] |= m[H - 1, 1:] != m[H - 1, :-1]
    lat[1:H, 0] |= m[1:, 0] != m[:-1, 0]
    lat[1:H, W] |= m[1:, W - 1] != m[:-1, W - 1]
    return lat


def extract_corners(mask: np.ndarray) -> np.ndarray:
    """(n, 2) array of (x, y) junction centroids, clustered by 8-connectivity."""
    lat = junction_lattice(mask)
    lab, n = ndimage.label(lat, structure=np.ones((3, 3), dtype=int))
    if n == 0:
        return np.zeros((0, 2))
    rows, cols = np.nonzero(lat)
    ids = lab[rows, cols]
    cnt = np.bincount(ids, minlength=n + 1)[1:]
    cy = np.bincount(ids, weights=rows, minlength=n + 1)[1:] / cnt
    cx = np.bincount(ids, weights=cols, minlength=n + 1)[1:] / cnt
    return np.stack([cx - 0.5, cy - 0.5], axis=1)


def hungarian(cost: np.ndarray) -> np.ndarray:
    """Minimum-cost perfect assignment of a square matrix.

    Shortest augmenting paths with row/column potentials, O(n^3).
    Returns ``col`` with row i assigned to column col[i].
    """
    cost = np.asarray(cost, dtype=np.float64)
    n = cost.shape[0]
    if cost.shape != (n, n):
        raise ValueError("cost matrix must be square")
    INF = math.inf
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    p = np.zeros(n + 1, dtype=int)  # p[j]: row matched to column j (1-based, 0 = free)
    way = np.zeros(n + 1, dtype=int)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(n + 1, INF)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            delta, j1 = INF, 0
            for j in range(1, n + 1):
                if not used[j]:
                    cur = cost[i0 - 1, j - 1] - u[i0] - v[j]
                    if cur < minv[j]:
                        minv[j] = cur
                        way[j] = j0
                    if minv[j] < delta:
                        delta, j1 = minv[j], j
            for j in range(n + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    col = np.zeros(n, dtype=int)
    for j in range(1, n + 1):
        col[p[j] - 1] = j - 1
    return col


def match_corners(pred: np.ndarray, gt: np.ndarray, penalty: float) -> tuple[float, list]:
    """Minimum total cost pairing; unmatched corners on either side cost ``penalty``.

    Returns (total cost, [(pred index, gt index), ...]).
    """
    pred = np.asarray(pred, dtype=np.float64).reshape(-1, 2)
    gt = np.asarray(gt, dtype=np.float64).reshape(-1, 2)
    n = max(len(pred), len(gt))
    if n == 0:
        return 0.0, []
    cost = np.full((n, n), penalty)
    if len(pred) and len(gt):
        d = np.linalg.norm(pred[:, None, :] - gt[None, :, :], axis=-1)
        cost[: len(pred), : len(gt)] = np.minimum(d, penalty)
    col = hungarian(cost)
    pairs = [(i, int(col[i])) for i in range(len(pred)) if col[i] < len(gt) and cost[i, col[i]] < penalty]
    return float(cost[np.arange(n), col].sum()), pairs


def corner_error(pred: np.ndarray, gt: np.ndarray, width: int, height: int) -> float:
    """Mean matched corner distance as a percentage of the image diagonal.

    Corners left unmatched on either side count one diagonal each; the mean
    runs over max(|pred|, |gt|) slots.  Two empty sets give 0.
    """
    if width <= 0 or height <= 0:
        raise ValueError("frame dimensions must be positive")
    diag = math.hypot(width, height)
    n = max(len(pred), len(gt))
    if n == 0:
        return 0.0
    total, _ = match_corners(pred, gt, diag)
    return 100.0 * total / (n * diag)


# ---------------------------------------------------------------------------
# dataset evaluation


@dataclass
class SampleRecord:
    id: str
    pe: float | None = None
    e_cor: float | None = None
    n_pred_corners: int | None = None
    n_gt_corners: int | None = None
    error: str | None = None


@dataclass
class EvalReport:
    PA: float
    PE: float
    e_cor: float
    n_samples: int
    n_failed: int
    samples: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "aggregate": {"PA": self.PA, "PE": self.PE, "e_cor": self.e_cor, "n_samples": self.n_samples, "n_failed": self.n_failed},
            "samples": [asdict(s) for s in self.samples],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    def write(self, path) -> None:
        Path(path).write_text(self.to_json())

    def table(self) -> str:
        rows = [("PA %", self.PA), ("PE %", self.PE), ("e_cor %", self.e_cor)]
        lines = [f"{'metric':<10s}{'value':>10s}", "-" * 20]
        lines += [f"{k:<10s}{v:>10.4f}" for k, v in rows]
        lines.append(f"{'samples':<10s}{self.n_samples:>10d}")
        if self.n_failed:
            lines.append(f"{'failed':<10s}{self.n_failed:>10d}")
        return "\n".join(lines)


def score_sample(sid: str, pred_mask, gt_mask, pred_corners, gt_corners) -> SampleRecord:
    H, W = gt_mask.shape
    return SampleRecord(
        sid,
        pixel_error(pred_mask, gt_mask),
        corner_error(pred_corners, gt_corners, W, H),
        len(pred_corners),
        len(gt_corners),
    )


def aggregate(records: list[SampleRecord]) -> EvalReport:
    ok = [r for r in records if r.error is None]
    if ok:
        pe = float(np.mean([r.pe for r in ok]))
        ecor = float(np.mean([r.e_cor for r in ok]))
    else:
        pe, ecor = float("nan"), float("nan")
    return EvalReport(100.0 - pe, pe, ecor, len(ok), len(records) - len(ok), list(records))


def evaluate(manifest, predict=None, gt_mode: bool = False, threads: int = 1, out_path=None) -> EvalReport:
    """Score every manifest sample; ``predict(image) -> mask`` supplies predictions.

    Ground-truth corners are the PolyLayout corners.  With ``gt_mode`` the
    prediction is the ground truth itself (its mask and its corners), which
    must score PA=100, PE=0, e_cor=0.  A sample whose files cannot be read
    becomes an error record and is left out of the aggregate.
    """
    from .synth import load_image

    if predict is None and not gt_mode:
        raise ValueError("need a predictor unless gt_mode is set")

    def one(rec) -> SampleRecord:
        try:
            gt = load_mask(manifest.path(rec.mask))
            poly = PolyLayout.load(manifest.path(rec.poly))
            gt_c = poly.corner_array()
            if gt_mode:
                pred, pred_c = gt, gt_c
            else:
                pred = predict(load_image(manifest.path(rec.image)))
                pred_c = extract_corners(pred)
            return score_sample(rec.id, pred, gt, pred_c, gt_c)
        except (OSError, ValueError, KeyError) as e:
            log.warning("sample %s failed: %s", rec.id, e)
            return SampleRecord(rec.id, error=f"{type(e).__name__}: {e}")

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            records = list(ex.map(one, manifest.records))
    else:
        records = [one(r) for r in manifest.records]
    report = aggregate(records)
    if out_path is not None:
        report.write(out_path)
    return report
