"""Deterministic synthetic cuboid rooms, from vector layouts to rendered images."""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .core import (
    BACKGROUND,
    PolyLayout,
    RoomTaxonomy,
    Surface,
    default_taxonomy,
    save_mask,
)
from .cuboid import Cuboid, build_poly, snap
from .rng import make_rng

log = logging.getLogger(__name__)

# RGB in [0, 1], indexed by label.  Corners of the RGB cube pulled in to
# 0.1/0.9 so shading and noise rarely clip.
PALETTE = np.array(
    [
        [0.0, 0.0, 0.0],  # background
        [0.9, 0.9, 0.9],  # ceiling: white
        [0.1, 0.1, 0.9],  # floor: blue
        [0.9, 0.1, 0.1],  # left wall: red
        [0.1, 0.9, 0.1],  # right wall: green
        [0.9, 0.9, 0.1],  # front wall: yellow
    ]
)

# direction in which each surface gets brighter (normalised image coords)
_SHADE_DIR = {
    1: (0.0, -1.0),
    2: (0.0, 1.0),
    3: (-1.0, 0.0),
    4: (1.0, 0.0),
    5: (0.0, 0.0),
}


@dataclass
class SynthConfig:
    width: int = 256
    height: int = 256
    seed: int = 0
    type_distribution: dict = field(default_factory=dict)  # empty -> uniform over taxonomy
    noise_std: float = 0.02
    shading_strength: float = 0.2
    taxonomy: str | None = None  # path; None -> packaged default

    def __post_init__(self):
        self.type_distribution = {int(k): float(v) for k, v in self.type_distribution.items()}

    def load_taxonomy(self) -> RoomTaxonomy:
        return default_taxonomy() if self.taxonomy is None else RoomTaxonomy.load(self.taxonomy)

    def distribution(self, taxonomy: RoomTaxonomy | None = None) -> dict[int, float]:
        taxonomy = taxonomy or self.load_taxonomy()
        if not self.type_distribution:
            ids = taxonomy.ids
            return {t: 1.0 / len(ids) for t in ids}
        return dict(self.type_distribution)

    def validate(self, taxonomy: RoomTaxonomy | None = None) -> None:
        taxonomy = taxonomy or self.load_taxonomy()
        if self.width < 16 or self.height < 16:
            raise ValueError(f"image size {self.width}x{self.height} below 16 px")
        if not 0.0 <= self.noise_std <= 1.0:
            raise ValueError("noise_std must be in [0, 1]")
        if self.shading_strength < 0:
            raise ValueError("shading_strength must be >= 0")
        dist = self.distribution(taxonomy)
        if any(p < 0 for p in dist.values()):
            raise ValueError("negative type probability")
        if abs(sum(dist.values()) - 1.0) > 1e-9:
            raise ValueError(f"type probabilities sum to {sum(dist.values())!r}, not 1")
        unknown = set(dist) - set(taxonomy.ids)
        if unknown:
            raise ValueError(f"type_distribution names unknown room types {sorted(unknown)}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["type_distribution"] = {str(k): v for k, v in self.type_distribution.items()}
        return d


# ---------------------------------------------------------------------------
# layouts


def _full_box(W: int, H: int, rng: np.random.Generator) -> Cuboid:
    x0 = snap(rng.uniform(0.1, 0.4) * W)
    x1 = snap(rng.uniform(0.6, 0.9) * W)
    y0 = snap(rng.uniform(0.1, 0.4) * H)
    y1 = snap(rng.uniform(0.6, 0.9) * H)
    vx = x0 + rng.uniform(0.2, 0.8) * (x1 - x0)
    vy = y0 + rng.uniform(0.2, 0.8) * (y1 - y0)
    ray = lambda x, y: (snap(x - vx), snap(y - vy))  # noqa: E731
    return Cuboid(W, H, x0, y0, x1, y1, ray(x0, y0), ray(x1, y0), ray(x0, y1), ray(x1, y1))


def hide_surfaces(cub: Cuboid, hidden, rng: np.random.Generator) -> Cuboid:
    """Remove surfaces in a fixed order (front wall first, then by id)."""
    hidden = set(int(s) for s in hidden)
    if int(Surface.FRONT_WALL) in hidden:
        w = cub.x1 - cub.x0
        cub = cub.without(Surface.FRONT_WALL, xc=cub.x0 + rng.uniform(0.25, 0.75) * w)
    for s in sorted(hidden - {int(Surface.FRONT_WALL)}):
        cub = cub.without(Surface(s))
    return cub


def layout_is_clean(poly: PolyLayout, min_sep: float | None = None) -> bool:
    """Corners kept away from frame corners and from each other."""
    W, H = poly.width, poly.height
    if min_sep is None:
        min_sep = max(2.0, 0.04 * min(W, H))
    pts = poly.corner_array()
    frame = np.array([(-0.5, -0.5), (W - 0.5, -0.5), (W - 0.5, H - 0.5), (-0.5, H - 0.5)])
    if len(pts):
        if np.min(np.linalg.norm(pts[:, None] - frame[None], axis=-1)) < min_sep:
            return False
        d = np.linalg.norm(pts[:, None] - pts[None], axis=-1)
        d[np.diag_indices(len(pts))] = np.inf
        if np.min(d) < min_sep:
            return False
    return True


def sample_layout(cfg: SynthConfig, rng: np.random.Generator, taxonomy: RoomTaxonomy | None = None) -> PolyLayout:
    taxonomy = taxonomy or cfg.load_taxonomy()
    dist = cfg.distribution(taxonomy)
    ids = sorted(dist)
    probs = np.array([dist[t] for t in ids])
    type_id = ids[int(rng.choice(len(ids), p=probs / probs.sum()))]
    rt = taxonomy[type_id]
    hidden = set(int(s) for s in Surface) - set(rt.surfaces)
    for _ in range(1000):
        cub = hide_surfaces(_full_box(cfg.width, cfg.height, rng), hidden, rng)
        poly = build_poly(cub, type_id)
        if poly.surface_set == rt.surfaces and len(poly.corner_array()) == rt.corners and layout_is_clean(poly):
            return poly
    raise RuntimeError(f"could not sample a clean layout of type {type_id}")


def sample_layout_at(cfg: SynthConfig, index: int, taxonomy: RoomTaxonomy | None = None) -> PolyLayout:
    return sample_layout(cfg, make_rng(cfg.seed, "layout", index), taxonomy)


# ---------------------------------------------------------------------------
# rasterisation


def polygon_cover(pts: np.ndarray, width: int, height: int) -> np.ndarray:
    """Pixels whose centre lies inside or on the boundary of a simple polygon.

    Crossing-number test; each edge is evaluated with its endpoints in a
    canonical order so two polygons sharing an edge agree on it exactly.
    """
    px = np.arange(width, dtype=np.float64)[None, :]
    py = np.arange(height, dtype=np.float64)[:, None]
    odd = np.zeros((height, width), dtype=bool)
    on = np.zeros((height, width), dtype=bool)
    n = len(pts)
    for k in range(n):
        a, b = tuple(pts[k]), tuple(pts[(k + 1) % n])
        if (a[1], a[0]) > (b[1], b[0]):
            a, b = b, a
        on |= (px == a[0]) & (py == a[1])
        if a[1] == b[1]:
            on |= (py == a[1]) & (px >= min(a[0], b[0])) & (px <= max(a[0], b[0]))
            continue
        ycond = (a[1] > py) != (b[1] > py)  # (H, 1)
        xint = a[0] + (py - a[1]) * (b[0] - a[0]) / (b[1] - a[1])
        odd ^= ycond & (px < xint)
        on |= ycond & (px == xint)
    return odd | on


def rasterize(poly: PolyLayout) -> np.ndarray:
    W, H = poly.width, poly.height
    mask = np.full((H, W), BACKGROUND, dtype=np.uint8)
    covered = np.zeros((H, W), dtype=bool)
    # highest id first so lower ids overwrite shared-edge pixels
    for sp in sorted(poly.surfaces, key=lambda s: -int(s.surface)):
        sel = polygon_cover(poly.vertices(sp), W, H)
        mask[sel] = int(sp.surface)
        covered |= sel
    if not covered.all():
        raise ValueError(f"polygons leave {int((~covered).sum())} pixels uncovered")
    return mask


# ---------------------------------------------------------------------------
# images


def render_mask(mask: np.ndarray, cfg: SynthConfig, rng: np.random.Generator) -> np.ndarray:
    H, W = mask.shape
    img = PALETTE[mask]
    if cfg.shading_strength:
        u = (np.arange(W) + 0.5) / W - 0.5
        v = (np.arange(H) + 0.5) / H - 0.5
        shade = np.ones((H, W))
        for lab, (gx, gy) in _SHADE_DIR.items():
            sel = mask == lab
            ramp = gx * u[None, :] + gy * v[:, None]
            shade[sel] = 1.0 + cfg.shading_strength * ramp[sel]
        img = img * shade[..., None]
    if cfg.noise_std:
        img = img + rng.normal(0.0, cfg.noise_std, size=img.shape)
    return np.clip(img, 0.0, 1.0)


def render_image(poly: PolyLayout, cfg: SynthConfig, rng: np.random.Generator) -> np.ndarray:
    """(H, W, 3) float image in [0, 1]."""
    return render_mask(rasterize(poly), cfg, rng)


def to_uint8(img: np.ndarray) -> np.ndarray:
    return np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)


def save_image(img: np.ndarray, path) -> None:
    arr = img if img.dtype == np.uint8 else to_uint8(img)
    Image.fromarray(np.ascontiguousarray(arr)).save(path, format="PNG")


def load_image(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0


# ---------------------------------------------------------------------------
# datasets


@dataclass(frozen=True)
class ManifestRecord:
    id: str
    image: str
    mask: str
    poly: str
    room_type: int


@dataclass(frozen=True)
class DatasetManifest:
    root: Path
    records: tuple[ManifestRecord, ...]

    def __len__(self):
        return len(self.records)

    def path(self, rel: str) -> Path:
        return self.root / rel

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        path = Path(path)
        recs = []
        for line in path.read_text().splitlines():
            if line.strip():
                recs.append(ManifestRecord(**json.loads(line)))
        return cls(path.parent, tuple(recs))

    def write(self, path) -> None:
        lines = [json.dumps(asdict(r), sort_keys=True) for r in self.records]
        Path(path).write_text("".join(line + "\n" for line in lines))


MANIFEST_NAME = "manifest.jsonl"


def make_sample(cfg: SynthConfig, index: int, taxonomy: RoomTaxonomy | None = None):
    """(image float, mask, poly) for sample ``index``; pure in (cfg, index)."""
    poly = sample_layout_at(cfg, index, taxonomy)
    mask = rasterize(poly)
    img = render_mask(mask, cfg, make_rng(cfg.seed, "render", index))
    return img, mask, poly


def gen_dataset(cfg: SynthConfig, n: int, out_dir) -> DatasetManifest:
    taxonomy = cfg.load_taxonomy()
    cfg.validate(taxonomy)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    recs = []
    if n:
        for sub in ("images", "masks", "polys"):
            (out / sub).mkdir(exist_ok=True)
    for i in range(n):
        sid = f"{i:06d}"
        img, mask, poly = make_sample(cfg, i, taxonomy)
        rec = ManifestRecord(sid, f"images/{sid}.png", f"masks/{sid}.png", f"polys/{sid}.json", poly.room_type)
        save_image(img, out / rec.image)
        save_mask(mask, out / rec.mask)
        poly.save(out / rec.poly)
        recs.append(rec)
    manifest = DatasetManifest(out, tuple(recs))
    manifest.write(out / MANIFEST_NAME)
    log.info("wrote %d samples to %s", n, out)
    return manifest


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
