"""Generate a random indoor scene, rasterize it, and trace multipath rays.

Run from the repo root:  python3 demos/01_rooms_and_rays.py
"""

import numpy as np

from phyfm.scene import SceneProfile, generate_scene, rasterize, sample_user_positions
from phyfm.propagation import trace_paths

profile = SceneProfile(grid_w=32)
scene = generate_scene(seed=42, profile=profile)
print(f"scene seed=42: {len(scene.walls)} walls, {len(scene.cylinders)} cylinders")
print(f"BS at {scene.bs_pos}")

# top-down view: '#' marks obstacle cells, 'B' the base station column
graph = rasterize(scene, 32)
bs_j = int((scene.bs_pos[0] + 5) / graph.cell_size)
bs_i = int((scene.bs_pos[1] + 5) / graph.cell_size)
for i in reversed(range(32)):  # print north side up
    row = "".join("#" if graph.grid[i, j] else "." for j in range(32))
    if i == bs_i:
        row = row[:bs_j] + "B" + row[bs_j + 1:]
    print(row)

# trace LOS + first-order reflections to a few users
users = sample_user_positions(scene, 3, seed=7)
for k, rx in enumerate(users):
    paths = trace_paths(scene, scene.bs_pos, rx)
    print(f"\nuser {k} at ({rx[0]:+.2f}, {rx[1]:+.2f}, {rx[2]:.1f}): "
          f"{len(paths)} paths")
    for p in sorted(paths.paths, key=lambda p: p.length):
        kind = p.reflector_id or "los"
        print(f"  {kind:12s} length {p.length:7.3f} m   delay {p.delay*1e9:7.2f} ns"
              f"   elev {np.degrees(p.aod_elevation):6.1f} deg"
              f"   azim {np.degrees(p.aod_azimuth):7.1f} deg")
