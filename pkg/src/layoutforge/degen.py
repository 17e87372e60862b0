"""Layout degeneration plus flip and photometric augmentation."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .core import (
    BACKGROUND,
    Corner,
    DegenerationDAG,
    PolyLayout,
    RoomTaxonomy,
    Surface,
    SurfacePolygon,
    default_taxonomy,
)
from .cuboid import build_poly
from .synth import SynthConfig, layout_is_clean, rasterize, render_mask

_SWAP_LR = {int(Surface.LEFT_WALL): int(Surface.RIGHT_WALL), int(Surface.RIGHT_WALL): int(Surface.LEFT_WALL)}


@dataclass(frozen=True)
class RetainMask:
    retain: frozenset

    def __post_init__(self):
        object.__setattr__(self, "retain", frozenset(int(s) for s in self.retain))
        if not self.retain:
            raise ValueError("retain set is empty")
        if not self.retain <= {int(s) for s in Surface}:
            raise ValueError(f"retain set {sorted(self.retain)} has non-surface labels")


@dataclass
class AugmentConfig:
    brightness: float = 0.2
    contrast: float = 0.1
    hflip_prob: float = 0.5
    degen_prob: float = 0.5
    degen_mode: str = "supplement"  # or "replace"
    seed: int = 0

    def validate(self) -> None:
        for name in ("hflip_prob", "degen_prob"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")
        if self.brightness < 0 or self.contrast < 0:
            raise ValueError("brightness and contrast must be >= 0")
        if self.degen_mode not in ("supplement", "replace"):
            raise ValueError(f"unknown degen_mode {self.degen_mode!r}")


@dataclass(frozen=True)
class Sample:
    image: np.ndarray  # (H, W, 3) float in [0, 1]
    mask: np.ndarray  # (H, W) uint8
    poly: PolyLayout
    ops: tuple = ()


# ---------------------------------------------------------------------------
# degeneration


def degenerate(
    poly: PolyLayout,
    edge: tuple[int, int],
    rng: np.random.Generator,
    taxonomy: RoomTaxonomy | None = None,
    dag: DegenerationDAG | None = None,
) -> PolyLayout:
    """Remove one surface by sliding its bounding edges out of the frame.

    ``edge`` is ``(parent, child)``; ``(t, t)`` is the identity edge.
    """
    parent, child = int(edge[0]), int(edge[1])
    if parent != poly.room_type:
        raise ValueError(f"edge {edge} starts at type {parent}, layout is type {poly.room_type}")
    if parent == child:
        return poly
    if dag is not None and (parent, child) not in dag.edges:
        raise ValueError(f"edge {edge} is not in the degeneration DAG")
    taxonomy = taxonomy or default_taxonomy()
    removed = taxonomy[parent].surfaces - taxonomy[child].surfaces
    if len(removed) != 1 or not taxonomy[child].surfaces < taxonomy[parent].surfaces:
        raise ValueError(f"edge {edge} does not remove exactly one surface")
    if poly.cuboid is None:
        raise ValueError("layout carries no cuboid geometry; use degenerate_mask")
    s = Surface(next(iter(removed)))
    want = taxonomy[child].surfaces
    cub = poly.cuboid
    out = None
    for _ in range(50):
        xc = None
        if s == Surface.FRONT_WALL:
            xc = cub.x0 + rng.uniform(0.25, 0.75) * (cub.x1 - cub.x0)
        out = build_poly(cub.without(s, xc=xc), child)
        if s != Surface.FRONT_WALL or layout_is_clean(out):
            break
    if out.surface_set != want:
        raise ValueError(f"removing {s.slug} left surfaces {sorted(out.surface_set)}, expected {sorted(want)}")
    return out


def _neighbour_min(lab: np.ndarray, assigned: np.ndarray) -> np.ndarray:
    big = np.iinfo(np.int16).max
    src = np.where(assigned, lab.astype(np.int16), big)
    best = np.full(lab.shape, big, dtype=np.int16)
    best[1:, :] = np.minimum(best[1:, :], src[:-1, :])
    best[:-1, :] = np.minimum(best[:-1, :], src[1:, :])
    best[:, 1:] = np.minimum(best[:, 1:], src[:, :-1])
    best[:, :-1] = np.minimum(best[:, :-1], src[:, 1:])
    return best


def degenerate_mask(mask: np.ndarray, retain: RetainMask) -> np.ndarray:
    """Literal masking: removed surfaces take the geodesically nearest kept label.

    Distance is 4-connected BFS through removed pixels; equal distances go to
    the lower label.  Removed pixels no kept label can reach become background.
    """
    if not isinstance(retain, RetainMask):
        retain = RetainMask(frozenset(retain))
    mask = np.asarray(mask)
    out = mask.astype(np.uint8).copy()
    removed = (mask != BACKGROUND) & ~np.isin(mask, list(retain.retain))
    if not removed.any():
        return out
    assigned = (mask != BACKGROUND) & ~removed
    pending = removed.copy()
    out[removed] = BACKGROUND
    while pending.any():
        best = _neighbour_min(out, assigned)
        hit = pending & (best < np.iinfo(np.int16).max)
        if not hit.any():
            break
        out[hit] = best[hit]
        assigned |= hit
        pending &= ~hit
    return out


# ---------------------------------------------------------------------------
# flips and colour jitter


def flip_mask(mask: np.ndarray) -> np.ndarray:
    out = mask[:, ::-1].copy()
    left, right = out == Surface.LEFT_WALL, out == Surface.RIGHT_WALL
    out[left] = Surface.RIGHT_WALL
    out[right] = Surface.LEFT_WALL
    return out


def flip_poly(poly: PolyLayout, taxonomy: RoomTaxonomy | None = None) -> PolyLayout:
    taxonomy = taxonomy or default_taxonomy()
    swapped = frozenset(_SWAP_LR.get(s, s) for s in poly.surface_set)
    rt = taxonomy.match(swapped)
    if rt is None:
        raise ValueError(f"flipped surface set {sorted(swapped)} is not a known room type")
    m = poly.width - 1
    corners = tuple(Corner(m - c.x, c.y, c.kind) for c in poly.corners)
    mirror_ref = {"TL": "TR", "TR": "TL", "BL": "BR", "BR": "BL"}
    surfaces = tuple(
        SurfacePolygon(
            Surface(_SWAP_LR.get(int(sp.surface), int(sp.surface))),
            tuple(mirror_ref.get(r, r) if isinstance(r, str) else r for r in reversed(sp.refs)),
        )
        for sp in poly.surfaces
    )
    cub = None if poly.cuboid is None else poly.cuboid.mirrored()
    return PolyLayout(poly.width, poly.height, corners, surfaces, rt.type_id, cub)


def hflip(image: np.ndarray, poly: PolyLayout, taxonomy: RoomTaxonomy | None = None):
    if image.shape[:2] != (poly.height, poly.width):
        raise ValueError(f"image {image.shape[:2]} and layout {(poly.height, poly.width)} disagree")
    return image[:, ::-1].copy(), flip_poly(poly, taxonomy)


def apply_jitter(image: np.ndarray, brightness_shift: float, contrast_scale: float) -> np.ndarray:
    if brightness_shift == 0.0 and contrast_scale == 1.0:
        return image.copy()
    return np.clip((image - 0.5) * contrast_scale + 0.5 + brightness_shift, 0.0, 1.0)


def photometric_jitter(image: np.ndarray, cfg: AugmentConfig, rng: np.random.Generator) -> np.ndarray:
    c = rng.uniform(1.0 - cfg.contrast, 1.0 + cfg.contrast)
    b = rng.uniform(-cfg.brightness, cfg.brightness)
    return apply_jitter(image, b, c)


# ---------------------------------------------------------------------------
# full pipeline


def augment_sample(
    sample: Sample,
    dag: DegenerationDAG,
    cfg: AugmentConfig,
    rng: np.random.Generator,
    taxonomy: RoomTaxonomy | None = None,
    render: SynthConfig | None = None,
    degen_prob: float | None = None,
) -> Sample:
    """Degenerate (prob degen_prob), flip (prob hflip_prob), then colour-jitter.

    After a geometric change the mask is re-rasterised and the image
    re-rendered from the new layout with ``render`` (noise-free palette
    rendering when ``render`` is None).
    """
    taxonomy = taxonomy or default_taxonomy()
    p_degen = cfg.degen_prob if degen_prob is None else degen_prob
    poly, image, ops = sample.poly, sample.image, []
    if rng.random() < p_degen:
        edges = dag.out_edges(poly.room_type)
        if edges:
            edge = edges[int(rng.integers(len(edges)))]
            poly = degenerate(poly, edge, rng, taxonomy, dag)
            ops.append(f"degen:{edge[0]}->{edge[1]}")
    if rng.random() < cfg.hflip_prob:
        image, poly = hflip(image, poly, taxonomy)
        ops.append("hflip")
    if ops:
        mask = rasterize(poly)
        rcfg = render or SynthConfig(width=poly.width, height=poly.height, noise_std=0.0, shading_strength=0.0)
        image = render_mask(mask, rcfg, rng)
    else:
        mask = sample.mask
    image = photometric_jitter(image, cfg, rng)
    return replace(sample, image=image, mask=mask, poly=poly, ops=tuple(ops))
