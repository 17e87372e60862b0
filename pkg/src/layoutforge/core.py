"""Domain types for Manhattan room layouts.

Label encoding (fixed, see README): 0 background, 1 ceiling, 2 floor,
3 left-wall, 4 right-wall, 5 front-wall.  A layout mask is a plain
``(H, W)`` uint8 array of those labels.

Coordinates are in pixels with the origin at the top-left pixel centre, x to
the right and y downward, so pixel ``(i, j)`` has its centre at ``(j, i)``
and the frame spans ``[-0.5, W - 0.5] x [-0.5, H - 0.5]``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import IntEnum
from graphlib import CycleError, TopologicalSorter
from importlib import resources
from pathlib import Path
from typing import TYPE_CHECKING, Iterable

import numpy as np
from PIL import Image
from scipy import ndimage

if TYPE_CHECKING:
    from .cuboid import Cuboid

BACKGROUND = 0
NUM_SURFACES = 5
NUM_CLASSES = NUM_SURFACES + 1


class Surface(IntEnum):
    CEILING = 1
    FLOOR = 2
    LEFT_WALL = 3
    RIGHT_WALL = 4
    FRONT_WALL = 5

    @property
    def slug(self) -> str:
        return self.name.lower().replace("_", "-")

    @classmethod
    def from_slug(cls, slug: str) -> "Surface":
        return cls[slug.upper().replace("-", "_")]


SURFACE_IDS = tuple(int(s) for s in Surface)
FRAME_POINTS = ("TL", "TR", "BR", "BL")

# 4-connectivity structuring element
_CROSS = ndimage.generate_binary_structure(2, 1)


def frame_point(ref: str, width: int, height: int) -> tuple[float, float]:
    lo_x, lo_y, hi_x, hi_y = -0.5, -0.5, width - 0.5, height - 0.5
    return {
        "TL": (lo_x, lo_y),
        "TR": (hi_x, lo_y),
        "BR": (hi_x, hi_y),
        "BL": (lo_x, hi_y),
    }[ref]


# ---------------------------------------------------------------------------
# vector layouts


@dataclass(frozen=True)
class Corner:
    x: float
    y: float
    kind: str  # "interior" | "boundary"


@dataclass(frozen=True)
class SurfacePolygon:
    surface: Surface
    refs: tuple  # ints index PolyLayout.corners; strings name frame corners


@dataclass(frozen=True)
class PolyLayout:
    width: int
    height: int
    corners: tuple[Corner, ...]
    surfaces: tuple[SurfacePolygon, ...]
    room_type: int
    cuboid: "Cuboid | None" = field(default=None, compare=True)

    def vertices(self, poly: SurfacePolygon) -> np.ndarray:
        pts = []
        for r in poly.refs:
            if isinstance(r, str):
                pts.append(frame_point(r, self.width, self.height))
            else:
                c = self.corners[r]
                pts.append((c.x, c.y))
        return np.asarray(pts, dtype=np.float64)

    @property
    def surface_set(self) -> frozenset[int]:
        return frozenset(int(p.surface) for p in self.surfaces)

    def corner_array(self, kinds: Iterable[str] = ("interior", "boundary")) -> np.ndarray:
        kinds = set(kinds)
        pts = [(c.x, c.y) for c in self.corners if c.kind in kinds]
        return np.asarray(pts, dtype=np.float64).reshape(-1, 2)

    def to_dict(self) -> dict:
        d = {
            "width": self.width,
            "height": self.height,
            "room_type": self.room_type,
            "corners": [{"x": c.x, "y": c.y, "kind": c.kind} for c in self.corners],
            "surfaces": [
                {"surface": p.surface.slug, "id": int(p.surface), "polygon": list(p.refs)}
                for p in self.surfaces
            ],
        }
        if self.cuboid is not None:
            d["cuboid"] = self.cuboid.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PolyLayout":
        from .cuboid import Cuboid

        corners = tuple(Corner(float(c["x"]), float(c["y"]), c["kind"]) for c in d["corners"])
        for c in corners:
            if c.kind not in ("interior", "boundary"):
                raise ValueError(f"unknown corner kind {c.kind!r}")
        surfaces = []
        for s in d["surfaces"]:
            refs = []
            for r in s["polygon"]:
                if isinstance(r, str):
                    if r not in FRAME_POINTS:
                        raise ValueError(f"unknown frame point {r!r}")
                    refs.append(r)
                else:
                    if not 0 <= int(r) < len(corners):
                        raise ValueError(f"corner reference {r} out of range")
                    refs.append(int(r))
            surfaces.append(SurfacePolygon(Surface(int(s["id"])), tuple(refs)))
        cub = Cuboid.from_dict(d["cuboid"]) if d.get("cuboid") else None
        return cls(int(d["width"]), int(d["height"]), corners, tuple(surfaces), int(d["room_type"]), cub)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "PolyLayout":
        return cls.from_dict(json.loads(Path(path).read_text()))


# ---------------------------------------------------------------------------
# taxonomy and degeneration graph


@dataclass(frozen=True)
class RoomType:
    type_id: int
    surfaces: frozenset[int]
    corners: int
    name: str = ""


@dataclass(frozen=True)
class RoomTaxonomy:
    types: tuple[RoomType, ...]
    name: str = ""

    def __post_init__(self):
        for t in self.types:
            if not t.surfaces:
                raise ValueError(f"room type {t.type_id} has no surfaces")
            if not t.surfaces <= set(SURFACE_IDS):
                raise ValueError(f"room type {t.type_id} has unknown surfaces {sorted(t.surfaces)}")

    def __getitem__(self, type_id: int) -> RoomType:
        for t in self.types:
            if t.type_id == type_id:
                return t
        raise KeyError(type_id)

    @property
    def ids(self) -> list[int]:
        return [t.type_id for t in self.types]

    def match(self, surfaces: Iterable[int]) -> RoomType | None:
        s = frozenset(int(v) for v in surfaces)
        for t in self.types:
            if t.surfaces == s:
                return t
        return None

    @classmethod
    def from_dict(cls, d: dict) -> "RoomTaxonomy":
        types = tuple(
            RoomType(int(t["type_id"]), frozenset(int(v) for v in t["surfaces"]), int(t["corners"]), t.get("name", ""))
            for t in d["types"]
        )
        return cls(types, d.get("name", ""))

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "types": [
                {"type_id": t.type_id, "name": t.name, "surfaces": sorted(t.surfaces), "corners": t.corners}
                for t in self.types
            ],
        }

    @classmethod
    def load(cls, path=None) -> "RoomTaxonomy":
        if path is None:
            text = resources.files("layoutforge").joinpath("data/taxonomy_default.json").read_text()
        else:
            text = Path(path).read_text()
        return cls.from_dict(json.loads(text))


def default_taxonomy() -> RoomTaxonomy:
    return RoomTaxonomy.load()


@dataclass(frozen=True)
class DegenerationDAG:
    nodes: tuple[int, ...]
    edges: tuple[tuple[int, int], ...]
    removed: tuple[int, ...]  # removed[k] is the surface dropped along edges[k]

    def children(self, type_id: int) -> list[int]:
        return [c for p, c in self.edges if p == type_id]

    def out_edges(self, type_id: int) -> list[tuple[int, int]]:
        return [e for e in self.edges if e[0] == type_id]

    def removed_surface(self, edge: tuple[int, int]) -> int:
        return self.removed[self.edges.index(tuple(edge))]

    def topological_order(self) -> list[int]:
        ts = TopologicalSorter({n: [] for n in self.nodes})
        for p, c in self.edges:
            ts.add(c, p)
        return list(ts.static_order())

    def is_acyclic(self) -> bool:
        try:
            self.topological_order()
        except CycleError:
            return False
        return True


def build_dag(taxonomy: RoomTaxonomy) -> DegenerationDAG:
    ids = taxonomy.ids
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate room type ids in taxonomy")
    edges, removed = [], []
    for p in taxonomy.types:
        for c in taxonomy.types:
            diff = p.surfaces - c.surfaces
            if c.surfaces < p.surfaces and len(diff) == 1:
                edges.append((p.type_id, c.type_id))
                removed.append(next(iter(diff)))
    return DegenerationDAG(tuple(ids), tuple(edges), tuple(removed))


# ---------------------------------------------------------------------------
# masks


def surfaces_of(mask: np.ndarray) -> frozenset[int]:
    present = np.unique(mask)
    return frozenset(int(v) for v in present if v != BACKGROUND)


def count_components(binary: np.ndarray) -> int:
    _, n = ndimage.label(binary, structure=_CROSS)
    return int(n)


@dataclass(frozen=True)
class ValidationReport:
    out_of_range: tuple[int, ...]
    disconnected: dict  # label -> component count (> 1)
    surfaces: frozenset[int]
    matched_type: int | None

    @property
    def valid(self) -> bool:
        return not self.out_of_range and not self.disconnected and self.matched_type is not None

    def summary(self) -> str:
        if self.valid:
            return f"valid (type {self.matched_type})"
        msgs = []
        if self.out_of_range:
            msgs.append(f"out-of-range labels {list(self.out_of_range)}")
        for lab, n in sorted(self.disconnected.items()):
            msgs.append(f"label {lab} has {n} components")
        if self.matched_type is None:
            msgs.append(f"surface set {sorted(self.surfaces)} matches no room type")
        return "; ".join(msgs)


def validate_layout(mask: np.ndarray, taxonomy: RoomTaxonomy) -> ValidationReport:
    mask = np.asarray(mask)
    if mask.ndim != 2 or mask.size == 0:
        raise ValueError("mask must be a non-empty 2-D array")
    values = np.unique(mask)
    bad = tuple(int(v) for v in values if v < 0 or v > NUM_SURFACES)
    disconnected = {}
    for lab in SURFACE_IDS:
        sel = mask == lab
        if sel.any():
            n = count_components(sel)
            if n > 1:
                disconnected[lab] = n
    present = frozenset(int(v) for v in values if 1 <= v <= NUM_SURFACES)
    t = taxonomy.match(present)
    return ValidationReport(bad, disconnected, present, None if t is None else t.type_id)


def save_mask(mask: np.ndarray, path) -> None:
    Image.fromarray(np.ascontiguousarray(mask, dtype=np.uint8)).save(path, format="PNG")


def load_mask(path) -> np.ndarray:
    with Image.open(path) as im:
        if im.mode not in ("L", "P"):
            raise ValueError(f"{path}: expected single-channel mask, got mode {im.mode}")
        return np.array(im, dtype=np.uint8)
