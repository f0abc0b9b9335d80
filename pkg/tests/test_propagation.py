"""Ray tracing against mirror-image and dense-sampling/shapely oracles."""

import numpy as np
import pytest
from shapely.geometry import LineString, Point, box

from phyfm.scene import Scene, SceneProfile, Wall, Cylinder, generate_scene, sample_user_positions
from phyfm.propagation import (angles_to_direction, direction_angles,
                               segment_blocked, trace_paths)

EMPTY = Scene(bs_pos=np.array([-4.75, 4.75, 2.5]), walls=[], cylinders=[], seed=0)


# ---------------------------------------------------------------------------
# independent oracles
# ---------------------------------------------------------------------------

def oracle_blocked_shapely(scene, p, q):
    """2-D interior-crossing test built on shapely instead of slab clipping."""
    line = LineString([tuple(p[:2]), tuple(q[:2])])
    for w in scene.walls:
        xmin, xmax, ymin, ymax = w.rect()
        inter = line.intersection(box(xmin, ymin, xmax, ymax))
        if inter.length > 1e-9:
            return True
    for c in scene.cylinders:
        if Point(c.center).distance(line) < c.radius - 1e-12:
            return True
    return False


def oracle_blocked_sampling(scene, p, q, n=1000):
    """Dense point sampling along the open segment."""
    t = np.linspace(0.0, 1.0, n + 2)[1:-1]
    xs = p[0] + t * (q[0] - p[0])
    ys = p[1] + t * (q[1] - p[1])
    from phyfm.scene import point_in_obstacle
    inside = point_in_obstacle(scene, xs, ys)
    # strictly-inside only: drop points that merely touch a boundary
    return bool(np.any(inside))


def oracle_faces(scene):
    """Reflecting planes: id, axis, coord, extents on the two free axes."""
    h = 3.0
    faces = [("outer:x-", 0, -5.0, (-5, 5), (0, h)), ("outer:x+", 0, 5.0, (-5, 5), (0, h)),
             ("outer:y-", 1, -5.0, (-5, 5), (0, h)), ("outer:y+", 1, 5.0, (-5, 5), (0, h)),
             ("floor", 2, 0.0, (-5, 5), (-5, 5)), ("ceiling", 2, h, (-5, 5), (-5, 5))]
    for i, w in enumerate(scene.walls):
        xmin, xmax, ymin, ymax = w.rect()
        faces += [(f"iwall{i}:x-", 0, xmin, (ymin, ymax), (0, h)),
                  (f"iwall{i}:x+", 0, xmax, (ymin, ymax), (0, h)),
                  (f"iwall{i}:y-", 1, ymin, (xmin, xmax), (0, h)),
                  (f"iwall{i}:y+", 1, ymax, (xmin, xmax), (0, h))]
    return faces


def oracle_paths(scene, tx, rx):
    """Mirror-image oracle: dict face_id -> length, plus 'los' if clear."""
    out = {}
    if not oracle_blocked_shapely(scene, tx, rx):
        out["los"] = float(np.linalg.norm(rx - tx))
    for fid, axis, coord, bu, bv in oracle_faces(scene):
        img = tx.copy()
        img[axis] = 2 * coord - img[axis]
        d = rx[axis] - img[axis]
        if abs(d) < 1e-15:
            continue
        t = (coord - img[axis]) / d
        if not (1e-9 < t < 1 - 1e-9):
            continue
        refl = img + t * (rx - img)
        free = [a for a in range(3) if a != axis]
        if not (bu[0] - 1e-9 <= refl[free[0]] <= bu[1] + 1e-9):
            continue
        if not (bv[0] - 1e-9 <= refl[free[1]] <= bv[1] + 1e-9):
            continue
        if oracle_blocked_shapely(scene, tx, refl) or oracle_blocked_shapely(scene, refl, rx):
            continue
        out[fid] = float(np.linalg.norm(rx - img))
    return out


# ---------------------------------------------------------------------------
# blockage predicate
# ---------------------------------------------------------------------------

def test_empty_room_never_blocked():
    rng = np.random.default_rng(1)
    for _ in range(50):
        p = rng.uniform(-4.9, 4.9, 3)
        q = rng.uniform(-4.9, 4.9, 3)
        assert not segment_blocked(EMPTY, p, q)


def test_perpendicular_wall_crossing_blocked():
    s = Scene(bs_pos=np.array([-4.75, 4.75, 2.5]),
              walls=[Wall((-2, 0), (2, 0), 0.2)], cylinders=[], seed=0)
    assert segment_blocked(s, np.array([0, -1, 1.0]), np.array([0, 1, 1.0]))
    assert not segment_blocked(s, np.array([3, -1, 1.0]), np.array([3, 1, 1.0]))


def test_blockage_agrees_with_sampling_oracle():
    rng = np.random.default_rng(7)
    trials = 0
    for seed in range(40):
        scene = generate_scene(seed, SceneProfile())
        for _ in range(250):
            p = rng.uniform(-4.99, 4.99, 3)
            q = rng.uniform(-4.99, 4.99, 3)
            if np.allclose(p[:2], q[:2]):
                continue
            got = segment_blocked(scene, p, q)
            sampled = oracle_blocked_sampling(scene, p, q)
            if got != sampled:
                # sub-resolution chords: the exact predicate is authoritative,
                # confirm with a much denser probe before accepting
                dense = oracle_blocked_sampling(scene, p, q, n=200_000)
                shp = oracle_blocked_shapely(scene, p, q)
                assert got == shp or got == dense, (seed, p, q)
            trials += 1
    assert trials >= 10_000


# ---------------------------------------------------------------------------
# path tracing
# ---------------------------------------------------------------------------

def test_empty_room_los_length():
    pl = trace_paths(EMPTY, np.array([0.0, 0.0, 2.5]), np.array([3.0, 4.0, 1.0]))
    los = [p for p in pl if p.n_bounces == 0]
    assert len(los) == 1
    assert los[0].length == pytest.approx(np.sqrt(9 + 16 + 2.25), abs=1e-12)


def test_empty_room_has_seven_paths_matching_mirror_oracle():
    tx = np.array([-4.75, 4.75, 2.5])
    rx = np.array([2.0, -1.0, 1.0])
    pl = trace_paths(EMPTY, tx, rx)
    assert len(pl) == 7
    oracle = oracle_paths(EMPTY, tx, rx)
    got = {p.reflector_id or "los": p.length for p in pl}
    assert set(got) == set(oracle)
    for fid, length in oracle.items():
        assert got[fid] == pytest.approx(length, abs=1e-9)


def test_blocking_wall_removes_los():
    s = Scene(bs_pos=np.array([-4.75, 4.75, 2.5]),
              walls=[Wall((-3, 0), (3, 0), 0.2)], cylinders=[], seed=0)
    pl = trace_paths(s, np.array([0.0, 2.0, 2.5]), np.array([0.0, -2.0, 1.0]))
    assert all(p.n_bounces != 0 for p in pl)


def test_traced_paths_match_oracle_on_random_scenes():
    for seed in range(30):
        scene = generate_scene(seed, SceneProfile())
        tx = scene.bs_pos
        rx = sample_user_positions(scene, 1, seed=seed + 1000)[0]
        pl = trace_paths(scene, tx, rx)
        got = {p.reflector_id or "los": p.length for p in pl}
        oracle = oracle_paths(scene, tx.copy(), rx.copy())
        assert set(got) == set(oracle), seed
        for fid in oracle:
            assert got[fid] == pytest.approx(oracle[fid], abs=1e-6)
        # LOS, when present, is the shortest
        if "los" in got:
            assert all(got["los"] <= v + 1e-12 for v in got.values())


def test_reciprocity():
    for seed in range(25):
        scene = generate_scene(seed, SceneProfile())
        a = scene.bs_pos
        b = sample_user_positions(scene, 1, seed=seed + 2000)[0]
        fwd = sorted(p.length for p in trace_paths(scene, a, b))
        bwd = sorted(p.length for p in trace_paths(scene, b, a))
        assert len(fwd) == len(bwd)
        assert np.allclose(fwd, bwd, atol=1e-9)


def test_mirror_law_on_reflected_paths():
    scene = generate_scene(3, SceneProfile())
    tx = scene.bs_pos
    rx = sample_user_positions(scene, 1, seed=5)[0]
    oracle = oracle_paths(scene, tx.copy(), rx.copy())
    for p in trace_paths(scene, tx, rx):
        if p.n_bounces == 1:
            assert p.length == pytest.approx(oracle[p.reflector_id], abs=1e-9)


# ---------------------------------------------------------------------------
# departure angles
# ---------------------------------------------------------------------------

def test_angle_conventions():
    theta, phi = direction_angles(np.array([0.0, 0.0, 1.0]))
    assert theta == pytest.approx(0.0)
    theta, phi = direction_angles(np.array([1.0, 0.0, 0.0]))
    assert theta == pytest.approx(np.pi / 2)
    assert phi == pytest.approx(0.0)


def test_angle_roundtrip_on_random_directions():
    rng = np.random.default_rng(3)
    for _ in range(1000):
        d = rng.standard_normal(3)
        d /= np.linalg.norm(d)
        theta, phi = direction_angles(d)
        assert 0 <= theta <= np.pi
        assert -np.pi < phi <= np.pi
        back = angles_to_direction(theta, phi)
        assert np.allclose(back, d, atol=1e-12)


def test_zero_direction_rejected():
    with pytest.raises(ValueError):
        direction_angles(np.zeros(3))
