"""
Step size and information loss
==============================

Smaller per-step variances keep paths closer to where they started. This
compares the mean total path length of the reference chain and of a drifted
chain under two linear-symmetric schedules, using the same random numbers.
"""
import numpy as np

from bridgelab import bridge
from bridgelab.datasets2d import Dist2D
from bridgelab.objectives import reference_predictor
from bridgelab.schedules import make_schedule

data = Dist2D("checkerboard", scale=2.0, standardize=True)
for lo, hi in ((1e-4, 1e-3), (1e-3, 1e-2), (1e-2, 1e-1)):
    sched = make_schedule(16, lo, hi)
    paths = bridge.cache_trajectories(reference_predictor(16), sched, "forward", data, 5000,
                                      np.random.default_rng(0))
    end_std = paths.states[:, -1].std(axis=0).mean()
    print(f"linear({lo:g}, {hi:g}): total variance {2 * sched.T:.3f}, "
          f"mean path length {bridge.path_displacement(paths.states):.3f}, "
          f"terminal std {end_std:.3f}")
