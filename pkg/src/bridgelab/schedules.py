"""Step-size schedules ``gamma_1..gamma_N`` and their cumulative times."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SHAPES = ("linear-symmetric", "constant")


@dataclass(frozen=True)
class ScheduleSpec:
    N: int = 16
    g_min: float = 1e-3
    g_max: float = 1e-2
    shape: str = "linear-symmetric"
    normalize: bool = False


@dataclass(frozen=True, eq=False)
class GammaSchedule:
    """``gamma[k-1]`` holds the step size of the k-th transition, k = 1..N.

    ``gamma_bar[k]`` is the cumulative time after k steps, ``gamma_bar[0] = 0``.
    """

    gamma: np.ndarray
    gamma_bar: np.ndarray
    normalized: bool
    spec: ScheduleSpec | None = None

    @property
    def N(self):
        return len(self.gamma)

    @property
    def T(self):
        return float(self.gamma_bar[-1])

    def step(self, k):
        """Step size of the transition between states ``k-1`` and ``k`` (1-based)."""
        return self.gamma[np.asarray(k) - 1]


def _from_gamma(gamma, normalize, spec=None):
    gamma = np.asarray(gamma, dtype=np.float64)
    if normalize:
        gamma = gamma / gamma.sum()
    gamma_bar = np.concatenate([[0.0], np.cumsum(gamma)])
    return GammaSchedule(gamma=gamma, gamma_bar=gamma_bar, normalized=normalize, spec=spec)


def make_schedule(N, g_min=1e-3, g_max=1e-2, shape="linear-symmetric", normalize=False):
    """Build a schedule.

    ``linear-symmetric`` rises linearly from ``g_min`` at both ends to
    ``g_max`` in the middle; for even ``N`` the two central steps both take
    ``g_max``. ``constant`` uses ``g_min`` everywhere.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    if g_min <= 0 or g_max <= 0:
        raise ValueError("step sizes must be positive")
    if g_max < g_min:
        raise ValueError("g_max must be >= g_min")
    if shape == "constant":
        gamma = np.full(N, float(g_min))
    elif shape == "linear-symmetric":
        half = (N + 1) // 2  # number of distinct rising steps
        if half == 1:
            rise = np.array([g_max], dtype=np.float64)
        else:
            rise = np.linspace(g_min, g_max, half)
        gamma = np.concatenate([rise, rise[: N - half][::-1]])
        if N == 1:
            gamma = np.array([g_min], dtype=np.float64)
    else:
        raise ValueError(f"unknown schedule shape {shape!r}; expected one of {SHAPES}")
    spec = ScheduleSpec(N=N, g_min=g_min, g_max=g_max, shape=shape, normalize=normalize)
    return _from_gamma(gamma, normalize, spec)


def schedule_from_spec(spec):
    if isinstance(spec, dict):
        spec = ScheduleSpec(**spec)
    return make_schedule(spec.N, spec.g_min, spec.g_max, spec.shape, spec.normalize)


def posterior_variances(sched, k):
    """Return ``(sigma_{k+1}, sigma_tilde_{k+1})`` for ``0 <= k <= N-1``.

    ``sigma`` is the variance of x_k given (x_{k+1}, x_0) and ``sigma_tilde``
    the variance of x_{k+1} given (x_k, x_N) under the zero-drift reference
    chain. The horizon is ``T = gamma_bar[N]`` (1 for a normalized schedule).
    """
    if not 0 <= k <= sched.N - 1:
        raise ValueError(f"k must lie in 0..{sched.N - 1}")
    T = sched.gamma_bar[-1]
    g = sched.gamma[k]
    gb_k, gb_k1 = sched.gamma_bar[k], sched.gamma_bar[k + 1]
    sigma = 0.0 if k == 0 else 2.0 * g * gb_k / gb_k1
    sigma_t = 0.0 if k == sched.N - 1 else 2.0 * g * (T - gb_k1) / (T - gb_k)
    return sigma, sigma_t
