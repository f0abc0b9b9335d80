"""Randomized indoor scenes and their binary top-view rasterization.

Rooms are a fixed 10 m x 10 m x 3 m shell centered at the origin. Obstacles
(axis-aligned internal walls plus circular cylinders) are extruded over the
full height, so the top-down footprint fully determines blockage. The outer
shell is shared by every scene and is not marked in the grid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ROOM_SIDE = 10.0
ROOM_HEIGHT = 3.0
BS_DEFAULT = (-4.75, 4.75, 2.5)


class SceneGenerationError(RuntimeError):
    """Rejection sampling exhausted its retry budget (over-constrained profile)."""


@dataclass(frozen=True)
class Wall:
    """Axis-aligned internal wall segment, full room height.

    p0/p1 are the (x, y) endpoints of the centerline; the footprint is the
    centerline dilated by thickness/2 in the perpendicular direction.
    """

    p0: tuple
    p1: tuple
    thickness: float = 0.2

    def rect(self):
        """Footprint as (xmin, xmax, ymin, ymax)."""
        (x0, y0), (x1, y1) = self.p0, self.p1
        h = 0.5 * self.thickness
        if y0 == y1:  # horizontal run
            return (min(x0, x1), max(x0, x1), y0 - h, y0 + h)
        if x0 == x1:  # vertical run
            return (x0 - h, x0 + h, min(y0, y1), max(y0, y1))
        raise ValueError("wall segments must be axis-aligned")


@dataclass(frozen=True)
class Cylinder:
    center: tuple
    radius: float


@dataclass
class Scene:
    bs_pos: np.ndarray
    walls: list
    cylinders: list
    seed: int
    side: float = ROOM_SIDE
    height: float = ROOM_HEIGHT

    @property
    def half(self) -> float:
        return 0.5 * self.side

    def to_dict(self) -> dict:
        return {
            "seed": int(self.seed),
            "bs_pos": [float(v) for v in self.bs_pos],
            "side": self.side,
            "height": self.height,
            "walls": [{"p0": list(w.p0), "p1": list(w.p1), "thickness": w.thickness}
                      for w in self.walls],
            "cylinders": [{"center": list(c.center), "radius": c.radius}
                          for c in self.cylinders],
        }

    @staticmethod
    def from_dict(d: dict) -> "Scene":
        return Scene(
            bs_pos=np.asarray(d["bs_pos"], dtype=np.float64),
            walls=[Wall(tuple(w["p0"]), tuple(w["p1"]), w["thickness"]) for w in d["walls"]],
            cylinders=[Cylinder(tuple(c["center"]), c["radius"]) for c in d["cylinders"]],
            seed=int(d["seed"]),
            side=d.get("side", ROOM_SIDE),
            height=d.get("height", ROOM_HEIGHT),
        )


@dataclass(frozen=True)
class SceneGraph:
    """W x W binary top-view grid; cell (i, j) covers
    x in [-5 + j*cs, -5 + (j+1)*cs], y in [-5 + i*cs, -5 + (i+1)*cs]."""

    grid: np.ndarray  # (W, W) uint8, 1 = obstacle
    cell_size: float

    @property
    def w(self) -> int:
        return self.grid.shape[0]


@dataclass(frozen=True)
class SceneProfile:
    """Generation parameter ranges (counts inclusive, sizes uniform)."""

    n_walls: tuple = (0, 3)
    n_cylinders: tuple = (0, 2)
    wall_length: tuple = (2.0, 6.0)
    wall_thickness: float = 0.2
    cyl_radius: tuple = (0.3, 1.0)
    clearance: float = 0.2  # min gap between obstacles and the outer shell
    grid_w: int = 100
    max_tries: int = 500
    bs_pos: tuple = BS_DEFAULT


def point_in_wall(wall: Wall, x, y):
    xmin, xmax, ymin, ymax = wall.rect()
    return (x >= xmin) & (x <= xmax) & (y >= ymin) & (y <= ymax)


def point_in_cylinder(cyl: Cylinder, x, y):
    dx = x - cyl.center[0]
    dy = y - cyl.center[1]
    return dx * dx + dy * dy <= cyl.radius * cyl.radius


def point_in_obstacle(scene: Scene, x, y):
    hit = np.zeros(np.broadcast(x, y).shape, dtype=bool)
    for w in scene.walls:
        hit |= point_in_wall(w, x, y)
    for c in scene.cylinders:
        hit |= point_in_cylinder(c, x, y)
    return hit


def _rects_overlap(a, b) -> bool:
    return a[0] < b[1] and b[0] < a[1] and a[2] < b[3] and b[2] < a[3]


def _rect_circle_overlap(rect, center, radius) -> bool:
    cx = min(max(center[0], rect[0]), rect[1])
    cy = min(max(center[1], rect[2]), rect[3])
    dx, dy = center[0] - cx, center[1] - cy
    return dx * dx + dy * dy < radius * radius


def _obstacle_overlaps(rects, circles, rect=None, circle=None) -> bool:
    if rect is not None:
        if any(_rects_overlap(rect, r) for r in rects):
            return True
        return any(_rect_circle_overlap(rect, c, r) for c, r in circles)
    cx, cy = circle[0]
    rad = circle[1]
    if any(_rect_circle_overlap(r, (cx, cy), rad) for r in rects):
        return True
    for c, r in circles:
        dx, dy = cx - c[0], cy - c[1]
        if dx * dx + dy * dy < (rad + r) ** 2:
            return True
    return False


def generate_scene(seed: int, profile: SceneProfile = SceneProfile()) -> Scene:
    """Deterministically generate one scene from ``seed``.

    Obstacle counts are uniform over the profile ranges; positions/sizes are
    rejection-sampled so every obstacle lies strictly inside the room (with
    the profile clearance), obstacles do not overlap, and none covers the BS.
    """
    rng = np.random.default_rng(np.uint64(seed))
    half = 0.5 * ROOM_SIDE
    bs = np.asarray(profile.bs_pos, dtype=np.float64)
    clr = profile.clearance

    n_w = int(rng.integers(profile.n_walls[0], profile.n_walls[1] + 1))
    n_c = int(rng.integers(profile.n_cylinders[0], profile.n_cylinders[1] + 1))

    walls, cylinders = [], []
    rects, circles = [], []

    for _ in range(n_w):
        for attempt in range(profile.max_tries):
            horizontal = bool(rng.integers(0, 2))
            length = float(rng.uniform(*profile.wall_length))
            t = profile.wall_thickness
            lo = -half + clr
            hi_start = half - clr - length
            if hi_start <= lo:
                continue
            start = float(rng.uniform(lo, hi_start))
            offset = float(rng.uniform(-half + clr + t / 2, half - clr - t / 2))
            if horizontal:
                wall = Wall((start, offset), (start + length, offset), t)
            else:
                wall = Wall((offset, start), (offset, start + length), t)
            rect = wall.rect()
            if point_in_wall(wall, bs[0], bs[1]):
                continue
            if _obstacle_overlaps(rects, circles, rect=rect):
                continue
            walls.append(wall)
            rects.append(rect)
            break
        else:
            raise SceneGenerationError(f"could not place wall after {profile.max_tries} tries")

    for _ in range(n_c):
        for attempt in range(profile.max_tries):
            radius = float(rng.uniform(*profile.cyl_radius))
            cx = float(rng.uniform(-half + clr + radius, half - clr - radius))
            cy = float(rng.uniform(-half + clr + radius, half - clr - radius))
            cyl = Cylinder((cx, cy), radius)
            if point_in_cylinder(cyl, bs[0], bs[1]):
                continue
            if _obstacle_overlaps(rects, circles, circle=((cx, cy), radius)):
                continue
            cylinders.append(cyl)
            circles.append(((cx, cy), radius))
            break
        else:
            raise SceneGenerationError(f"could not place cylinder after {profile.max_tries} tries")

    return Scene(bs_pos=bs, walls=walls, cylinders=cylinders, seed=int(seed))


def rasterize(scene: Scene, w: int) -> SceneGraph:
    """Cell-center point-in-obstacle rasterization (exact, total)."""
    if w < 8:
        raise ValueError("grid resolution must be >= 8")
    cs = scene.side / w
    centers = -scene.half + (np.arange(w) + 0.5) * cs
    xg, yg = np.meshgrid(centers, centers)  # row i -> y, col j -> x
    grid = point_in_obstacle(scene, xg, yg).astype(np.uint8)
    return SceneGraph(grid=grid, cell_size=cs)


def sample_user_positions(scene: Scene, k: int, seed: int,
                          max_tries: int = 1000) -> np.ndarray:
    """K user positions at z = 1 m, uniform over free space; seeded."""
    if k < 1:
        raise ValueError("k must be >= 1")
    rng = np.random.default_rng(np.uint64(seed))
    half = scene.half
    out = np.empty((k, 3), dtype=np.float64)
    for i in range(k):
        for _ in range(max_tries):
            x = float(rng.uniform(-half, half))
            y = float(rng.uniform(-half, half))
            if not bool(point_in_obstacle(scene, x, y)):
                out[i] = (x, y, 1.0)
                break
        else:
            raise SceneGenerationError(f"no free space found after {max_tries} tries")
    return out
