"""Image-source path tracing: LOS plus first-order specular reflections.

Reflecting faces are the four outer walls, floor, ceiling, and the four
vertical side faces of each internal wall. Cylinders only block, they never
reflect. Blockage for walls/cylinders is a 2-D footprint test (obstacles are
full height); floor/ceiling reflections use true 3-D mirror points but their
horizontal projection coincides with the direct segment, so a full-height
blocker kills them together with the LOS, as it should.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scene import Scene

C_LIGHT = 299_792_458.0

_EPS_T = 1e-12       # parametric tolerance for plane crossings
_EPS_CHORD = 1e-9    # minimum parametric penetration that counts as blockage
_EPS_FACE = 1e-9     # on-face tolerance for reflection points


@dataclass(frozen=True)
class Path:
    length: float
    delay: float
    aod_elevation: float   # theta, from +z, in [0, pi]
    aod_azimuth: float     # phi, from +x, in (-pi, pi]
    n_bounces: int
    reflector_id: str | None = None


@dataclass
class PathList:
    paths: list
    tx: np.ndarray
    rx: np.ndarray

    def __len__(self):
        return len(self.paths)

    def __iter__(self):
        return iter(self.paths)


@dataclass(frozen=True)
class _Face:
    """Planar reflector r[axis] = coord, bounded on the two other axes."""

    face_id: str
    axis: int
    coord: float
    bounds_u: tuple  # extent along the lower free axis
    bounds_v: tuple  # extent along the higher free axis


def direction_angles(d: np.ndarray) -> tuple:
    """(theta, phi) of a departure direction; inverse of angles_to_direction."""
    d = np.asarray(d, dtype=np.float64)
    n = np.linalg.norm(d)
    if n < 1e-15:
        raise ValueError("zero-length direction")
    d = d / n
    theta = float(np.arccos(np.clip(d[2], -1.0, 1.0)))
    phi = float(np.arctan2(d[1], d[0]))
    if phi <= -np.pi:
        phi = np.pi
    return theta, phi


def angles_to_direction(theta: float, phi: float) -> np.ndarray:
    st = np.sin(theta)
    return np.array([st * np.cos(phi), st * np.sin(phi), np.cos(theta)])


def _segment_blocked_by_rect(p, q, rect) -> bool:
    """Open 2-D segment vs. closed axis-aligned rectangle interior."""
    t0, t1 = 0.0, 1.0
    for a, (lo, hi) in enumerate(((rect[0], rect[1]), (rect[2], rect[3]))):
        # shrink marginally toward the open interior
        lo, hi = lo + 1e-12, hi - 1e-12
        d = q[a] - p[a]
        if abs(d) < 1e-15:
            if p[a] < lo or p[a] > hi:
                return False
            continue
        ta, tb = (lo - p[a]) / d, (hi - p[a]) / d
        if ta > tb:
            ta, tb = tb, ta
        t0, t1 = max(t0, ta), min(t1, tb)
        if t0 >= t1:
            return False
    return (t1 - t0) > _EPS_CHORD


def _segment_blocked_by_circle(p, q, center, radius) -> bool:
    dx, dy = q[0] - p[0], q[1] - p[1]
    fx, fy = p[0] - center[0], p[1] - center[1]
    seg2 = dx * dx + dy * dy
    if seg2 < 1e-30:
        return fx * fx + fy * fy < radius * radius
    t = np.clip(-(fx * dx + fy * dy) / seg2, 0.0, 1.0)
    cx, cy = fx + t * dx, fy + t * dy
    return cx * cx + cy * cy < (radius - 1e-12) ** 2


def segment_blocked(scene: Scene, p: np.ndarray, q: np.ndarray) -> bool:
    """True iff the open segment (p, q) crosses any obstacle footprint."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if np.allclose(p, q):
        raise ValueError("degenerate segment")
    for w in scene.walls:
        if _segment_blocked_by_rect(p, q, w.rect()):
            return True
    for c in scene.cylinders:
        if _segment_blocked_by_circle(p, q, c.center, c.radius):
            return True
    return False


def reflecting_faces(scene: Scene) -> list:
    half, h = scene.half, scene.height
    faces = [
        _Face("outer:x-", 0, -half, (-half, half), (0.0, h)),
        _Face("outer:x+", 0, half, (-half, half), (0.0, h)),
        _Face("outer:y-", 1, -half, (-half, half), (0.0, h)),
        _Face("outer:y+", 1, half, (-half, half), (0.0, h)),
        _Face("floor", 2, 0.0, (-half, half), (-half, half)),
        _Face("ceiling", 2, h, (-half, half), (-half, half)),
    ]
    for i, w in enumerate(scene.walls):
        xmin, xmax, ymin, ymax = w.rect()
        faces.append(_Face(f"iwall{i}:x-", 0, xmin, (ymin, ymax), (0.0, h)))
        faces.append(_Face(f"iwall{i}:x+", 0, xmax, (ymin, ymax), (0.0, h)))
        faces.append(_Face(f"iwall{i}:y-", 1, ymin, (xmin, xmax), (0.0, h)))
        faces.append(_Face(f"iwall{i}:y+", 1, ymax, (xmin, xmax), (0.0, h)))
    return faces


def _mirror(p: np.ndarray, axis: int, coord: float) -> np.ndarray:
    out = p.copy()
    out[axis] = 2.0 * coord - p[axis]
    return out


def _reflection_point(img, rx, face):
    denom = rx[face.axis] - img[face.axis]
    if abs(denom) < 1e-15:
        return None
    t = (face.coord - img[face.axis]) / denom
    if t <= _EPS_T or t >= 1.0 - _EPS_T:
        return None
    refl = img + t * (rx - img)
    free = [a for a in range(3) if a != face.axis]
    if not (face.bounds_u[0] - _EPS_FACE <= refl[free[0]] <= face.bounds_u[1] + _EPS_FACE):
        return None
    if not (face.bounds_v[0] - _EPS_FACE <= refl[free[1]] <= face.bounds_v[1] + _EPS_FACE):
        return None
    return refl


def _make_path(length: float, direction: np.ndarray, n_bounces: int,
               reflector_id=None) -> Path:
    theta, phi = direction_angles(direction)
    return Path(length=length, delay=length / C_LIGHT,
                aod_elevation=theta, aod_azimuth=phi,
                n_bounces=n_bounces, reflector_id=reflector_id)


def trace_paths(scene: Scene, tx: np.ndarray, rx: np.ndarray,
                max_order: int = 1) -> PathList:
    """All LOS / first-order specular paths from tx to rx.

    Geometric fields are exact to floating point; an empty list is a valid
    result (fully shadowed receiver).
    """
    tx = np.asarray(tx, dtype=np.float64)
    rx = np.asarray(rx, dtype=np.float64)
    paths = []

    if not segment_blocked(scene, tx, rx):
        paths.append(_make_path(float(np.linalg.norm(rx - tx)), rx - tx, 0))

    if max_order >= 1:
        for face in reflecting_faces(scene):
            img = _mirror(tx, face.axis, face.coord)
            refl = _reflection_point(img, rx, face)
            if refl is None:
                continue
            if segment_blocked(scene, tx, refl) or segment_blocked(scene, refl, rx):
                continue
            length = float(np.linalg.norm(rx - img))
            paths.append(_make_path(length, refl - tx, 1, face.face_id))

    return PathList(paths=paths, tx=tx, rx=rx)
