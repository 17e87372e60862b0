"""One-point-perspective cuboid parameterisation of a room view.

A view is the back-wall rectangle ``[x0, x1] x [y0, y1]`` plus four outward
rays leaving its corners (TL up-left, TR up-right, BL down-left, BR
down-right).  The rectangle and the rays split the plane into the five
surfaces; each surface is a convex intersection of half-planes, clipped to
the frame.  A surface is hidden by pushing its bounding edge past the frame
(ceiling, floor, side walls) or by collapsing the rectangle to zero width
(front wall).

All parameters and output vertices live on a 1/1024 px grid so mirroring
``x -> W - 1 - x`` is exact in floating point.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .core import Corner, PolyLayout, Surface, SurfacePolygon, frame_point

GRID = 1024.0
_MERGE_TOL = 1e-3
_AREA_EPS = 1e-6


def snap(v: float) -> float:
    return float(np.round(v * GRID) / GRID)


@dataclass(frozen=True)
class Cuboid:
    width: int
    height: int
    x0: float
    y0: float
    x1: float
    y1: float
    d_tl: tuple[float, float]
    d_tr: tuple[float, float]
    d_bl: tuple[float, float]
    d_br: tuple[float, float]

    def __post_init__(self):
        if self.x1 < self.x0 or self.y1 <= self.y0:
            raise ValueError("degenerate back-wall rectangle")
        for name, (sx, sy) in (("d_tl", (-1, -1)), ("d_tr", (1, -1)), ("d_bl", (-1, 1)), ("d_br", (1, 1))):
            dx, dy = getattr(self, name)
            if not (dx * sx > 0 and dy * sy > 0):
                raise ValueError(f"ray {name}={getattr(self, name)} leaves its quadrant")

    @property
    def collapsed(self) -> bool:
        return self.x0 == self.x1

    def to_dict(self) -> dict:
        return {
            "rect": [self.x0, self.y0, self.x1, self.y1],
            "rays": {"tl": list(self.d_tl), "tr": list(self.d_tr), "bl": list(self.d_bl), "br": list(self.d_br)},
            "width": self.width,
            "height": self.height,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Cuboid":
        x0, y0, x1, y1 = (float(v) for v in d["rect"])
        r = d["rays"]
        return cls(
            int(d["width"]), int(d["height"]), x0, y0, x1, y1,
            tuple(r["tl"]), tuple(r["tr"]), tuple(r["bl"]), tuple(r["br"]),
        )

    # -- surface regions -------------------------------------------------

    def _line(self, p, d, ref):
        # half-plane a*x + b*y + c >= 0 bounded by the line through p along d,
        # oriented so that ref is inside
        a, b = -d[1], d[0]
        c = -(a * p[0] + b * p[1])
        if a * ref[0] + b * ref[1] + c < 0:
            a, b, c = -a, -b, -c
        return a, b, c

    def halfplanes(self, surface: Surface) -> list[tuple[float, float, float]]:
        x0, y0, x1, y1 = self.x0, self.y0, self.x1, self.y1
        xm, ym = 0.5 * (x0 + x1), 0.5 * (y0 + y1)
        tl, tr, bl, br = (x0, y0), (x1, y0), (x0, y1), (x1, y1)
        if surface == Surface.CEILING:
            ref = (xm, y0 - 1.0)
            return [(0.0, -1.0, y0), self._line(tl, self.d_tl, ref), self._line(tr, self.d_tr, ref)]
        if surface == Surface.FLOOR:
            ref = (xm, y1 + 1.0)
            return [(0.0, 1.0, -y1), self._line(bl, self.d_bl, ref), self._line(br, self.d_br, ref)]
        if surface == Surface.LEFT_WALL:
            ref = (x0 - 1.0, ym)
            return [(-1.0, 0.0, x0), self._line(tl, self.d_tl, ref), self._line(bl, self.d_bl, ref)]
        if surface == Surface.RIGHT_WALL:
            ref = (x1 + 1.0, ym)
            return [(1.0, 0.0, -x1), self._line(tr, self.d_tr, ref), self._line(br, self.d_br, ref)]
        return [(1.0, 0.0, -x0), (-1.0, 0.0, x1), (0.0, 1.0, -y0), (0.0, -1.0, y1)]

    # -- surface removal -------------------------------------------------

    def without(self, surface: Surface, xc: float | None = None) -> "Cuboid":
        """Push ``surface`` out of view; the neighbours grow to fill its place."""
        W, H = self.width, self.height
        if surface == Surface.CEILING:
            return replace(self, y0=min(self.y0, -1.0))
        if surface == Surface.FLOOR:
            return replace(self, y1=max(self.y1, float(H)))
        if surface == Surface.LEFT_WALL:
            if self.collapsed:
                v = min(self.x0, -1.0)
                return replace(self, x0=v, x1=v)
            return replace(self, x0=min(self.x0, -1.0))
        if surface == Surface.RIGHT_WALL:
            if self.collapsed:
                v = max(self.x1, float(W))
                return replace(self, x0=v, x1=v)
            return replace(self, x1=max(self.x1, float(W)))
        # front wall: collapse the rectangle onto a vertical line
        left_gone, right_gone = self.x0 < -0.5, self.x1 > W - 0.5
        if left_gone and right_gone:
            raise ValueError("front wall cannot be removed when both side walls are hidden")
        if left_gone:
            v = self.x0
        elif right_gone:
            v = self.x1
        else:
            v = snap(0.5 * (self.x0 + self.x1) if xc is None else xc)
            if not self.x0 <= v <= self.x1:
                raise ValueError(f"collapse point {v} outside [{self.x0}, {self.x1}]")
        return replace(self, x0=v, x1=v)

    def mirrored(self) -> "Cuboid":
        m = self.width - 1
        flip = lambda d: (-d[0], d[1])  # noqa: E731
        return Cuboid(
            self.width, self.height, m - self.x1, self.y0, m - self.x0, self.y1,
            flip(self.d_tr), flip(self.d_tl), flip(self.d_br), flip(self.d_bl),
        )


def _clip(poly: list, a: float, b: float, c: float) -> list:
    out = []
    n = len(poly)
    for k in range(n):
        p, q = poly[k], poly[(k + 1) % n]
        fp = a * p[0] + b * p[1] + c
        fq = a * q[0] + b * q[1] + c
        if fp >= 0:
            out.append(p)
        if (fp >= 0) != (fq >= 0):
            t = fp / (fp - fq)
            out.append((p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])))
    return out


def polygon_area(pts) -> float:
    pts = np.asarray(pts, dtype=np.float64)
    if len(pts) < 3:
        return 0.0
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def surface_polygons(cub: Cuboid) -> dict[Surface, list]:
    """Frame-clipped polygon (list of (x, y)) of every surface with positive area."""
    W, H = cub.width, cub.height
    frame = [frame_point(r, W, H) for r in ("TL", "TR", "BR", "BL")]
    out = {}
    for s in Surface:
        poly = list(frame)
        for hp in cub.halfplanes(s):
            poly = _clip(poly, *hp)
            if not poly:
                break
        if poly and abs(polygon_area(poly)) > _AREA_EPS:
            out[s] = poly
    return out


def build_poly(cub: Cuboid, room_type: int) -> PolyLayout:
    """Vector layout of a cuboid: shared, snapped corners and per-surface polygons."""
    W, H = cub.width, cub.height
    frame_refs = {frame_point(r, W, H): r for r in ("TL", "TR", "BR", "BL")}
    lo_x, lo_y, hi_x, hi_y = -0.5, -0.5, W - 0.5, H - 0.5
    pts: list[tuple[float, float]] = []

    def ref_of(p):
        p = (snap(p[0]), snap(p[1]))
        for fp, name in frame_refs.items():
            if abs(fp[0] - p[0]) < _MERGE_TOL and abs(fp[1] - p[1]) < _MERGE_TOL:
                return name
        for k, q in enumerate(pts):
            if abs(q[0] - p[0]) < _MERGE_TOL and abs(q[1] - p[1]) < _MERGE_TOL:
                return k
        pts.append(p)
        return len(pts) - 1

    surfaces = []
    for s, poly in surface_polygons(cub).items():
        refs = []
        for p in poly:
            r = ref_of(p)
            if not refs or refs[-1] != r:
                refs.append(r)
        if len(refs) > 1 and refs[0] == refs[-1]:
            refs.pop()
        surfaces.append(SurfacePolygon(s, tuple(refs)))

    def kind(p):
        on_edge = p[0] in (lo_x, hi_x) or p[1] in (lo_y, hi_y)
        return "boundary" if on_edge else "interior"

    corners = tuple(Corner(x, y, kind((x, y))) for x, y in pts)
    return PolyLayout(W, H, corners, tuple(surfaces), room_type, cub)
