"""Implicit set geometry on a grid.

Builds the planar navigation scene, samples exact signed distances onto a
grid, and shows the min/max field algebra that unions, intersects, and
complements the corresponding sets.
"""

import numpy as np

from reachverify import (
    Ball,
    ShapeSet,
    field_complement,
    field_union,
    interpolate,
    level_set_from_shapes,
    signed_distance,
    strict_sublevel_mask,
    zero_sublevel_mask,
)
from reachverify.scene import land_scene

scene = land_scene()
print("Planar scene on a", scene.grid.counts, "grid over", scene.grid.lo, "-", scene.grid.hi)

# Signed distances are exact per primitive; unions take the pointwise minimum.
start = scene.initial_set
print("distance from start-set center:", signed_distance(start, [0.0, 0.0]))
print("distance on the start boundary:", signed_distance(start, [0.7, 0.0]))
print("distance at obstacle 2 center:", signed_distance(scene.obstacles, [4.0, 1.5]))

# Fields hold one value per node; the zero sublevel set is the set itself.
obstacle_field = level_set_from_shapes(scene.grid, scene.obstacles)
initial_field = level_set_from_shapes(scene.grid, scene.initial_set)
print("nodes inside the obstacles:", int(zero_sublevel_mask(obstacle_field).sum()))
print("nodes inside the start set:", int(zero_sublevel_mask(initial_field).sum()))

# Union = min, complement = negation (paired with the strict mask).
either = field_union(obstacle_field, initial_field)
outside_both = strict_sublevel_mask(field_complement(either))
assert np.array_equal(
    outside_both,
    ~(zero_sublevel_mask(obstacle_field) | zero_sublevel_mask(initial_field)),
)
print("complement mask is the exact logical negation: OK")

# Multilinear interpolation answers off-grid membership queries.
probe = [3.3, 1.1]
print(f"interpolated obstacle distance at {probe}:",
      round(interpolate(obstacle_field, probe), 4))

# A custom union, for good measure.
two_balls = ShapeSet((Ball([0.0, 0.0], 1.0), Ball([4.0, 0.0], 1.0)))
print("midpoint between two unit balls is 1.0 away:",
      signed_distance(two_balls, [2.0, 0.0]))
