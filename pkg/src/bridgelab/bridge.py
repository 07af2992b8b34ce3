"""Transition kernels, posterior means and trajectory generation."""
from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import datasets2d
from .objectives import ParamMode
from .schedules import posterior_variances
from .smallnet import NumericalError

BLOCK_SIZE = 256


@dataclass(eq=False)
class TrajectoryBatch:
    """Paths ``states[i, k]`` = x_k of path i, shape ``(batch, N+1, d)``.

    ``dsb_targets`` is only filled for original-DSB caching; entry
    ``[i, k]`` is the original regression target of the pair
    (x_k, x_{k+1}), built with one generator evaluation on top of the one
    already spent on sampling.
    """

    states: np.ndarray
    direction: str
    fingerprint: str
    block_seeds: tuple = ()
    sched: object = None
    dsb_targets: np.ndarray | None = None

    @property
    def N(self):
        return self.states.shape[1] - 1

    def __len__(self):
        return self.states.shape[0]


def _noise(x, noise, rng):
    if noise is not None:
        return np.asarray(noise, dtype=np.float64)
    if rng is None:
        raise ValueError("either noise or rng must be given")
    return rng.standard_normal(x.shape)


def posterior_mean_backward(sched, k, x_k1, x0):
    """Mean of x_k given (x_{k+1}, x_0) under the Brownian reference."""
    if k == 0:
        return np.array(x0, dtype=np.float64)
    g = sched.gamma[k]
    return x_k1 + (g / sched.gamma_bar[k + 1]) * (x0 - x_k1)


def posterior_mean_forward(sched, k, x_k, xN):
    """Mean of x_{k+1} given (x_k, x_N) under the Brownian reference."""
    if k == sched.N - 1:
        return np.array(xN, dtype=np.float64)
    g = sched.gamma[k]
    return x_k + (g / (sched.gamma_bar[-1] - sched.gamma_bar[k])) * (xN - x_k)


VARIANCES = ("posterior", "kernel")


def _check_variance(variance):
    if variance not in VARIANCES:
        raise ValueError(f"variance must be one of {VARIANCES}, got {variance!r}")


def forward_mean_var(pred, sched, k, x, variance="posterior"):
    """Mean and variance of the forward kernel x_k -> x_{k+1}.

    Terminal and flow predictors use the bridge posterior variance by
    default; ``variance="kernel"`` gives them the plain step variance
    ``2 gamma`` that next-state predictors always use.
    """
    _check_variance(variance)
    mode = pred.mode
    g = sched.gamma[k]
    if mode.next_state:
        return pred(k, x), 2.0 * g
    var = posterior_variances(sched, k)[1] if variance == "posterior" else 2.0 * g
    if mode is ParamMode.TR_DSB:
        return posterior_mean_forward(sched, k, x, pred(k, x)), var
    if mode is ParamMode.FR_DSB:
        return x + g * pred(k, x), var
    raise ValueError(f"{mode.value!r} predictor cannot drive a bridge kernel")


def backward_mean_var(pred, sched, k1, x, variance="posterior"):
    """Mean and variance of the backward kernel x_{k1} -> x_{k1-1}."""
    _check_variance(variance)
    mode = pred.mode
    k = k1 - 1
    g = sched.gamma[k]
    if mode.next_state:
        return pred(k1, x), 2.0 * g
    var = posterior_variances(sched, k)[0] if variance == "posterior" else 2.0 * g
    if mode is ParamMode.TR_DSB:
        return posterior_mean_backward(sched, k, x, pred(k1, x)), var
    if mode is ParamMode.FR_DSB:
        return x + g * pred(k1, x), var
    raise ValueError(f"{mode.value!r} predictor cannot drive a bridge kernel")


def forward_step(pred, sched, k, x, noise=None, rng=None, variance="posterior"):
    """Sample x_{k+1} given x_k, 0 <= k <= N-1."""
    if pred.direction != "forward":
        raise ValueError("forward_step needs a forward predictor")
    if not 0 <= k <= sched.N - 1:
        raise ValueError(f"forward step index {k} outside 0..{sched.N - 1}")
    mean, var = forward_mean_var(pred, sched, k, x, variance)
    if var == 0.0:
        return mean
    return mean + np.sqrt(var) * _noise(x, noise, rng)


def backward_step(pred, sched, k1, x, noise=None, rng=None, variance="posterior"):
    """Sample x_{k1-1} given x_{k1}, 1 <= k1 <= N."""
    if pred.direction != "backward":
        raise ValueError("backward_step needs a backward predictor")
    if not 1 <= k1 <= sched.N:
        raise ValueError(f"backward step index {k1} outside 1..{sched.N}")
    mean, var = backward_mean_var(pred, sched, k1, x, variance)
    if var == 0.0:
        return mean
    return mean + np.sqrt(var) * _noise(x, noise, rng)


def _run_block(pred, sched, direction, x_start, noise, dsb_targets, variance):
    n, d = x_start.shape
    N = sched.N
    states = np.empty((n, N + 1, d))
    extra = np.empty((n, N, d)) if dsb_targets else None
    if direction == "forward":
        states[:, 0] = x_start
        for k in range(N):
            x = states[:, k]
            mean, var = forward_mean_var(pred, sched, k, x, variance)
            nxt = mean + np.sqrt(var) * noise[:, k] if var else mean
            if not np.all(np.isfinite(nxt)):
                raise NumericalError(f"non-finite state produced at forward step k={k}")
            states[:, k + 1] = nxt
            if dsb_targets:
                # x_{k+1} + F(k, x_k) - F(k, x_{k+1}); F(k, x_k) is the mean above
                extra[:, k] = nxt + mean - pred(k, nxt)
    else:
        states[:, N] = x_start
        for k1 in range(N, 0, -1):
            x = states[:, k1]
            mean, var = backward_mean_var(pred, sched, k1, x, variance)
            nxt = mean + np.sqrt(var) * noise[:, k1 - 1] if var else mean
            if not np.all(np.isfinite(nxt)):
                raise NumericalError(f"non-finite state produced at backward step k={k1 - 1}")
            states[:, k1 - 1] = nxt
            if dsb_targets:
                # x_k + B(k+1, x_{k+1}) - B(k+1, x_k)
                extra[:, k1 - 1] = nxt + mean - pred(k1, nxt)
    return states, extra


def cache_trajectories(pred, sched, direction, start, n, rng, dsb_targets=False, workers=1,
                       block_size=BLOCK_SIZE, variance="posterior"):
    """Simulate ``n`` full paths with a frozen predictor.

    Forward paths start from ``start`` at index 0, backward paths at index N.
    ``start`` is a :class:`Dist2D` (sampled per block) or an ``(n, d)`` array.
    Paths are produced in fixed-size blocks, each with its own seed drawn
    from ``rng``; the result does not depend on ``workers``.
    """
    if direction not in ("forward", "backward"):
        raise ValueError(f"unknown direction {direction!r}")
    if pred.direction != direction:
        raise ValueError(f"a {pred.direction} predictor cannot generate {direction} paths")
    if dsb_targets and not pred.mode.next_state:
        raise ValueError("original-DSB targets need a next-state generator")
    n_blocks = -(-n // block_size) if n else 0
    seeds = tuple(int(s) for s in rng.integers(0, 2**63 - 1, size=n_blocks))
    arr_start = None if isinstance(start, datasets2d.Dist2D) else np.asarray(start, dtype=np.float64)
    if arr_start is not None and arr_start.shape[0] != n:
        raise ValueError("start array must contain exactly n points")
    d = 2 if arr_start is None else arr_start.shape[1]

    def block(b):
        lo, hi = b * block_size, min(n, (b + 1) * block_size)
        brng = np.random.default_rng(seeds[b])
        x0 = datasets2d.sample(start, hi - lo, brng) if arr_start is None else arr_start[lo:hi]
        noise = brng.standard_normal((hi - lo, sched.N, d))
        return _run_block(pred, sched, direction, x0, noise, dsb_targets, variance)

    if workers > 1 and n_blocks > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(block, range(n_blocks)))
    else:
        parts = [block(b) for b in range(n_blocks)]
    if parts:
        states = np.concatenate([p[0] for p in parts])
        extra = np.concatenate([p[1] for p in parts]) if dsb_targets else None
    else:
        states = np.zeros((0, sched.N + 1, d))
        extra = np.zeros((0, sched.N, d)) if dsb_targets else None
    fp = pred.net.fingerprint() if pred.net is not None else "reference"
    return TrajectoryBatch(states, direction, fp, seeds, sched, extra)


def sample_generation(pred, sched, n, start, rng, direction="backward", workers=1,
                      variance="posterior"):
    """Run the full chain and return the endpoints (x_0 backward, x_N forward)."""
    traj = cache_trajectories(pred, sched, direction, start, n, rng, workers=workers,
                              variance=variance)
    return traj.states[:, 0] if direction == "backward" else traj.states[:, -1]


def path_displacement(states):
    """Mean over paths of sum_k |x_{k+1} - x_k|."""
    steps = np.linalg.norm(np.diff(states, axis=1), axis=2)
    return float(steps.sum(axis=1).mean())


def write_trajectories_csv(path, states):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["path_id", "k", "x", "y"])
        for i, path_states in enumerate(states):
            for k, (x, y) in enumerate(path_states):
                w.writerow([i, k, repr(float(x)), repr(float(y))])
