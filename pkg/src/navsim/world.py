"""Static 2D world geometry: rooms, obstacles, lidar ray casting, collision queries.

A :class:`WorldLayout` is a closed rectangular room (walls implied by the
bounds) containing circles, axis-aligned rectangles, and convex polygons.
Layouts are immutable after construction; every query here is read-only.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property
from importlib import resources
from pathlib import Path

import numpy as np

LAYOUT_FORMAT = 1

Point = tuple[float, float]


class LayoutError(ValueError):
    """Invalid layout geometry or layout file contents."""


@dataclass(frozen=True)
class Circle:
    center: Point
    radius: float

    def __post_init__(self):
        if self.radius <= 0:
            raise LayoutError(f"circle radius must be > 0, got {self.radius}")

    def contains(self, x, y):
        return (x - self.center[0]) ** 2 + (y - self.center[1]) ** 2 <= self.radius**2

    def distance(self, x: float, y: float) -> float:
        """Distance from a point to the shape boundary; 0 if the point is inside."""
        return max(0.0, math.hypot(x - self.center[0], y - self.center[1]) - self.radius)

    def extent(self):
        cx, cy = self.center
        r = self.radius
        return cx - r, cy - r, cx + r, cy + r


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle given by center and full side lengths (m)."""

    center: Point
    size: tuple[float, float]

    def __post_init__(self):
        if self.size[0] <= 0 or self.size[1] <= 0:
            raise LayoutError(f"rect sides must be > 0, got {self.size}")

    def contains(self, x, y):
        cx, cy = self.center
        return abs(x - cx) <= self.size[0] / 2 and abs(y - cy) <= self.size[1] / 2

    def distance(self, x: float, y: float) -> float:
        dx = max(abs(x - self.center[0]) - self.size[0] / 2, 0.0)
        dy = max(abs(y - self.center[1]) - self.size[1] / 2, 0.0)
        return math.hypot(dx, dy)

    def vertices(self) -> list[Point]:
        cx, cy = self.center
        hw, hh = self.size[0] / 2, self.size[1] / 2
        return [(cx - hw, cy - hh), (cx + hw, cy - hh), (cx + hw, cy + hh), (cx - hw, cy + hh)]

    def extent(self):
        v = self.vertices()
        return v[0][0], v[0][1], v[2][0], v[2][1]


@dataclass(frozen=True)
class Polygon:
    """Convex polygon; vertices are normalized to counter-clockwise order."""

    vertices: tuple[Point, ...]

    def __post_init__(self):
        verts = [tuple(map(float, v)) for v in self.vertices]
        if len(verts) < 3:
            raise LayoutError("polygon needs at least 3 vertices")
        if _signed_area(verts) < 0:
            verts.reverse()
        n = len(verts)
        for i in range(n):
            ax, ay = verts[i]
            bx, by = verts[(i + 1) % n]
            cx, cy = verts[(i + 2) % n]
            cross = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
            if cross <= 0:
                raise LayoutError("polygon must be strictly convex")
        object.__setattr__(self, "vertices", tuple(verts))

    def contains(self, x, y):
        n = len(self.vertices)
        for i in range(n):
            ax, ay = self.vertices[i]
            bx, by = self.vertices[(i + 1) % n]
            if (bx - ax) * (y - ay) - (by - ay) * (x - ax) < 0:
                return False
        return True

    def distance(self, x: float, y: float) -> float:
        if self.contains(x, y):
            return 0.0
        n = len(self.vertices)
        return min(
            _point_segment_distance(x, y, self.vertices[i], self.vertices[(i + 1) % n])
            for i in range(n)
        )

    def extent(self):
        xs = [v[0] for v in self.vertices]
        ys = [v[1] for v in self.vertices]
        return min(xs), min(ys), max(xs), max(ys)


Shape = Circle | Rect | Polygon


def _signed_area(verts) -> float:
    area = 0.0
    n = len(verts)
    for i in range(n):
        x0, y0 = verts[i]
        x1, y1 = verts[(i + 1) % n]
        area += x0 * y1 - x1 * y0
    return area / 2


def _point_segment_distance(px, py, a, b) -> float:
    ax, ay = a
    bx, by = b
    ex, ey = bx - ax, by - ay
    q = ex * ex + ey * ey
    t = 0.0 if q == 0 else min(1.0, max(0.0, ((px - ax) * ex + (py - ay) * ey) / q))
    return math.hypot(px - (ax + t * ex), py - (ay + t * ey))


@dataclass(frozen=True)
class WorldLayout:
    """Closed rectangular room centered at the origin with static obstacles."""

    name: str
    width: float
    height: float
    obstacles: tuple[Shape, ...] = ()
    goal_points: tuple[Point, ...] = ()

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise LayoutError(f"room sides must be > 0, got {self.width}x{self.height}")
        hw, hh = self.width / 2, self.height / 2
        for ob in self.obstacles:
            x0, y0, x1, y1 = ob.extent()
            if x0 < -hw or y0 < -hh or x1 > hw or y1 > hh:
                raise LayoutError(f"obstacle {ob} extends outside the {self.width}x{self.height} room")
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        object.__setattr__(self, "goal_points", tuple(tuple(map(float, p)) for p in self.goal_points))

    @property
    def half_extent(self) -> tuple[float, float]:
        return self.width / 2, self.height / 2

    def in_bounds(self, x: float, y: float) -> bool:
        hw, hh = self.half_extent
        return -hw <= x <= hw and -hh <= y <= hh

    @cached_property
    def _segments(self) -> tuple[np.ndarray, np.ndarray]:
        """All wall and straight-edge obstacle segments as (start, end) arrays."""
        hw, hh = self.half_extent
        pts = [
            ((-hw, -hh), (hw, -hh)),
            ((hw, -hh), (hw, hh)),
            ((hw, hh), (-hw, hh)),
            ((-hw, hh), (-hw, -hh)),
        ]
        for ob in self.obstacles:
            if isinstance(ob, Circle):
                continue
            verts = ob.vertices() if isinstance(ob, Rect) else list(ob.vertices)
            n = len(verts)
            pts.extend((verts[i], verts[(i + 1) % n]) for i in range(n))
        a = np.array([p[0] for p in pts], dtype=float)
        b = np.array([p[1] for p in pts], dtype=float)
        return a, b

    @cached_property
    def _circles(self) -> tuple[np.ndarray, np.ndarray]:
        cs = [ob for ob in self.obstacles if isinstance(ob, Circle)]
        centers = np.array([c.center for c in cs], dtype=float).reshape(-1, 2)
        radii = np.array([c.radius for c in cs], dtype=float)
        return centers, radii


def cast_rays(
    layout: WorldLayout,
    origin: Point,
    angles: np.ndarray,
    d_min: float,
    d_max: float,
) -> np.ndarray:
    """Distances to the nearest wall/obstacle along each ray, clamped to [d_min, d_max].

    Rays that hit nothing within range report d_max.  The ray origin must lie
    inside the room: a sensor embedded in a wall has no defined reading.
    """
    if d_min < 0 or d_max <= d_min:
        raise ValueError(f"require 0 <= d_min < d_max, got [{d_min}, {d_max}]")
    ox, oy = float(origin[0]), float(origin[1])
    if not layout.in_bounds(ox, oy):
        raise LayoutError(f"ray origin {origin} is outside room '{layout.name}'")

    angles = np.asarray(angles, dtype=float)
    ux, uy = np.cos(angles), np.sin(angles)
    best = np.full(angles.shape, np.inf)

    seg_a, seg_b = layout._segments
    ex = seg_b[:, 0] - seg_a[:, 0]
    ey = seg_b[:, 1] - seg_a[:, 1]
    ax = seg_a[:, 0] - ox
    ay = seg_a[:, 1] - oy
    # Solve origin + t*u = a + s*e per (ray, segment) pair via 2x2 cross products.
    denom = ux[:, None] * ey[None, :] - uy[:, None] * ex[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (ax[None, :] * ey[None, :] - ay[None, :] * ex[None, :]) / denom
        s = (ax[None, :] * uy[:, None] - ay[None, :] * ux[:, None]) / denom
    hit = (np.abs(denom) > 1e-15) & (t >= 0) & (s >= 0.0) & (s <= 1.0)
    t = np.where(hit, t, np.inf)
    best = np.minimum(best, t.min(axis=1))

    centers, radii = layout._circles
    if len(radii):
        dx = centers[:, 0] - ox
        dy = centers[:, 1] - oy
        b = ux[:, None] * dx[None, :] + uy[:, None] * dy[None, :]
        c = (dx * dx + dy * dy)[None, :] - (radii * radii)[None, :]
        disc = b * b - c
        root = np.sqrt(np.maximum(disc, 0.0))
        t1 = b - root
        t2 = b + root
        t = np.where(t1 >= 0, t1, np.where(t2 >= 0, t2, np.inf))
        t = np.where(disc >= 0, t, np.inf)
        best = np.minimum(best, t.min(axis=1))

    return np.clip(best, d_min, d_max)


def cast_ray(layout: WorldLayout, origin: Point, angle: float, d_min: float, d_max: float) -> float:
    """Single-ray form of :func:`cast_rays`."""
    return float(cast_rays(layout, origin, np.array([angle]), d_min, d_max)[0])


def circle_collides(layout: WorldLayout, center: Point, radius: float) -> bool:
    """True iff a disc of the given radius overlaps any obstacle or pokes out of the room."""
    if radius <= 0:
        raise ValueError(f"robot radius must be > 0, got {radius}")
    x, y = float(center[0]), float(center[1])
    hw, hh = layout.half_extent
    if x - radius < -hw or x + radius > hw or y - radius < -hh or y + radius > hh:
        return True
    return any(ob.distance(x, y) <= radius for ob in layout.obstacles)


def sample_free_pose(
    layout: WorldLayout,
    radius: float,
    rng: int | np.random.Generator,
    max_attempts: int = 10_000,
) -> Point:
    """Rejection-sample a collision-free disc center; deterministic for a fixed seed."""
    gen = np.random.default_rng(rng) if isinstance(rng, int) else rng
    hw, hh = layout.half_extent
    if radius >= hw or radius >= hh:
        raise LayoutError(f"radius {radius} cannot fit in room '{layout.name}'")
    for _ in range(max_attempts):
        x = gen.uniform(-hw + radius, hw - radius)
        y = gen.uniform(-hh + radius, hh - radius)
        if not circle_collides(layout, (x, y), radius):
            return (float(x), float(y))
    raise LayoutError(
        f"no free pose found in '{layout.name}' for radius {radius} after {max_attempts} attempts"
    )


# ---------------------------------------------------------------------------
# Layout files


def layout_from_dict(data: dict) -> WorldLayout:
    fmt = data.get("format")
    if fmt != LAYOUT_FORMAT:
        raise LayoutError(f"unsupported layout format {fmt!r}, expected {LAYOUT_FORMAT}")
    try:
        bounds = data["bounds"]
        obstacles = []
        for ob in data.get("obstacles", []):
            kind = ob.get("type")
            if kind == "circle":
                obstacles.append(Circle(tuple(ob["center"]), float(ob["radius"])))
            elif kind == "rect":
                obstacles.append(Rect(tuple(ob["center"]), tuple(ob["size"])))
            elif kind == "polygon":
                obstacles.append(Polygon(tuple(tuple(v) for v in ob["vertices"])))
            else:
                raise LayoutError(f"unknown obstacle type {kind!r}")
        return WorldLayout(
            name=str(data.get("name", "unnamed")),
            width=float(bounds["w"]),
            height=float(bounds["h"]),
            obstacles=tuple(obstacles),
            goal_points=tuple(tuple(p) for p in data.get("goal_points", [])),
        )
    except KeyError as exc:
        raise LayoutError(f"layout file missing field {exc}") from exc


def layout_to_dict(layout: WorldLayout) -> dict:
    obstacles = []
    for ob in layout.obstacles:
        if isinstance(ob, Circle):
            obstacles.append({"type": "circle", "center": list(ob.center), "radius": ob.radius})
        elif isinstance(ob, Rect):
            obstacles.append({"type": "rect", "center": list(ob.center), "size": list(ob.size)})
        else:
            obstacles.append({"type": "polygon", "vertices": [list(v) for v in ob.vertices]})
    return {
        "format": LAYOUT_FORMAT,
        "name": layout.name,
        "bounds": {"w": layout.width, "h": layout.height},
        "obstacles": obstacles,
        "goal_points": [list(p) for p in layout.goal_points],
    }


def load_layout(path: str | Path) -> WorldLayout:
    with open(path) as fh:
        return layout_from_dict(json.load(fh))


def save_layout(layout: WorldLayout, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(layout_to_dict(layout), fh, indent=2)


def builtin_layout_names() -> list[str]:
    root = resources.files("navsim").joinpath("layouts")
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def resolve_layout(name_or_path: str | Path) -> WorldLayout:
    """Load a packaged layout by name, or any layout JSON by path."""
    p = Path(name_or_path)
    if p.suffix == ".json" and p.exists():
        return load_layout(p)
    res = resources.files("navsim").joinpath(f"layouts/{name_or_path}.json")
    if not res.is_file():
        raise LayoutError(
            f"unknown layout {name_or_path!r}; packaged layouts: {', '.join(builtin_layout_names())}"
        )
    return layout_from_dict(json.loads(res.read_text()))
