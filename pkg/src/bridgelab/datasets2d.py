"""Toy 2D distributions: checkerboard, pinwheel, moons, Gaussians and mixtures."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import logsumexp

KINDS = ("checkerboard", "pinwheel", "gaussian", "gaussian-mixture", "moons")

_STATS_SEED = 20240301
_STATS_N = 200_000


@dataclass(frozen=True)
class Dist2D:
    """A named 2D density.

    ``mean``/``std`` parameterize ``gaussian`` (diagonal covariance).
    ``components`` is a tuple of ``(weight, (mx, my), sigma)`` for
    ``gaussian-mixture``. ``scale`` sets the spatial extent of the
    checkerboard, pinwheel and moons constructions.
    """

    kind: str = "checkerboard"
    scale: float = 4.0
    mean: tuple = (0.0, 0.0)
    std: tuple = (1.0, 1.0)
    components: tuple = ()
    blades: int = 5
    radial_std: float = 0.3
    tangential_std: float = 0.1
    rate: float = 0.25
    noise: float = 0.1
    standardize: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown distribution kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "gaussian" and min(self.std) <= 0:
            raise ValueError("gaussian std must be positive")
        if self.kind == "gaussian-mixture":
            if not self.components:
                raise ValueError("gaussian-mixture needs at least one component")
            w = np.array([c[0] for c in self.components], dtype=float)
            if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
                raise ValueError("mixture weights must be non-negative and sum to 1")
            if any(c[2] <= 0 for c in self.components):
                raise ValueError("mixture sigmas must be positive")

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "components" in d:
            d["components"] = tuple((float(w), tuple(mu), float(s)) for w, mu, s in d["components"])
        for key in ("mean", "std"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)

    def to_dict(self):
        out = {"kind": self.kind, "scale": self.scale, "standardize": self.standardize}
        if self.kind == "gaussian":
            out.update(mean=list(self.mean), std=list(self.std))
        elif self.kind == "gaussian-mixture":
            out["components"] = [[w, list(mu), s] for w, mu, s in self.components]
        elif self.kind == "pinwheel":
            out.update(blades=self.blades, radial_std=self.radial_std,
                       tangential_std=self.tangential_std, rate=self.rate)
        elif self.kind == "moons":
            out["noise"] = self.noise
        return out

    @property
    def is_gaussian(self):
        return self.kind == "gaussian" and not self.standardize


def _checkerboard(n, scale, rng):
    cells = int(round(scale))
    if cells < 1 or abs(cells - scale) > 1e-12:
        raise ValueError("checkerboard scale must be a positive integer")
    # pick a column, then a row of matching parity so floor(x) + floor(y) is even
    ix = rng.integers(-cells, cells, size=n)
    iy = -cells + 2 * rng.integers(0, cells, size=n) + (ix + cells) % 2
    return np.stack([ix + rng.random(n), iy + rng.random(n)], axis=1)


def _pinwheel(n, dist, rng):
    rads = np.linspace(0.0, 2.0 * np.pi, dist.blades, endpoint=False)
    feats = rng.standard_normal((n, 2)) * np.array([dist.radial_std, dist.tangential_std])
    feats[:, 0] += 1.0
    labels = rng.integers(0, dist.blades, size=n)
    angles = rads[labels] + dist.rate * np.exp(feats[:, 0])
    c, s = np.cos(angles), np.sin(angles)
    x = feats[:, 0] * c + feats[:, 1] * s
    y = -feats[:, 0] * s + feats[:, 1] * c
    return dist.scale / 2.0 * np.stack([x, y], axis=1)


def _moons(n, dist, rng):
    upper = rng.random(n) < 0.5
    t = np.pi * rng.random(n)
    x = np.where(upper, np.cos(t), 1.0 - np.cos(t))
    y = np.where(upper, np.sin(t), 0.5 - np.sin(t))
    pts = np.stack([x - 0.5, y - 0.25], axis=1) + dist.noise * rng.standard_normal((n, 2))
    return dist.scale / 2.0 * pts


def _raw_sample(dist, n, rng):
    if dist.kind == "checkerboard":
        return _checkerboard(n, dist.scale, rng)
    if dist.kind == "pinwheel":
        return _pinwheel(n, dist, rng)
    if dist.kind == "moons":
        return _moons(n, dist, rng)
    if dist.kind == "gaussian":
        return np.asarray(dist.mean) + np.asarray(dist.std) * rng.standard_normal((n, 2))
    w = np.array([c[0] for c in dist.components])
    mus = np.array([c[1] for c in dist.components], dtype=float)
    sig = np.array([c[2] for c in dist.components], dtype=float)
    idx = rng.choice(len(w), size=n, p=w)
    return mus[idx] + sig[idx, None] * rng.standard_normal((n, 2))


@lru_cache(maxsize=64)
def standardization(dist):
    """``(mean, std)`` per coordinate, estimated once from a fixed-seed batch."""
    raw = _raw_sample(dist, _STATS_N, np.random.default_rng(_STATS_SEED))
    return raw.mean(axis=0), raw.std(axis=0)


def sample(dist, n, rng):
    """Draw ``n`` i.i.d. samples as an ``(n, 2)`` float64 array."""
    if isinstance(dist, dict):
        dist = Dist2D.from_dict(dist)
    if n < 0:
        raise ValueError("n must be >= 0")
    if n == 0:
        return np.zeros((0, 2))
    x = _raw_sample(dist, n, rng)
    if dist.standardize:
        mu, sd = standardization(dist)
        x = (x - mu) / sd
    return x


def to_raw(dist, x):
    """Undo standardization (identity when ``dist.standardize`` is off)."""
    if not dist.standardize:
        return x
    mu, sd = standardization(dist)
    return x * sd + mu


def in_support(dist, x):
    """Constructive support predicate for raw (unstandardized) samples."""
    x = np.asarray(x)
    finite = np.all(np.isfinite(x), axis=1)
    if dist.kind == "checkerboard":
        inside = np.all(np.abs(x) <= dist.scale, axis=1)
        parity = (np.floor(x[:, 0]) + np.floor(x[:, 1])) % 2 == 0
        return finite & inside & parity
    if dist.kind == "pinwheel":
        # |point| = scale/2 * |features|, features within 8 sd of (1, 0)
        r = np.linalg.norm(x, axis=1) * 2.0 / dist.scale
        return finite & (r <= 1.0 + 8.0 * max(dist.radial_std, dist.tangential_std))
    return finite


def log_density_reference(dist, x):
    """Exact log density for ``gaussian`` and ``gaussian-mixture`` kinds."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if dist.standardize or dist.kind not in ("gaussian", "gaussian-mixture"):
        raise NotImplementedError(
            f"no analytic density for {dist.kind!r}; use histogram KL instead")
    if dist.kind == "gaussian":
        mu, sd = np.asarray(dist.mean), np.asarray(dist.std)
        z = (x - mu) / sd
        return -0.5 * np.sum(z * z, axis=1) - np.sum(np.log(sd)) - np.log(2 * np.pi)
    terms = []
    for w, mu, s in dist.components:
        if w == 0:
            continue
        d2 = np.sum((x - np.asarray(mu)) ** 2, axis=1)
        terms.append(np.log(w) - 0.5 * d2 / s**2 - 2 * np.log(s) - np.log(2 * np.pi))
    return logsumexp(np.stack(terms), axis=0)


def write_samples_csv(path, x):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y"])
        for row in np.asarray(x).reshape(-1, 2):
            w.writerow([repr(float(row[0])), repr(float(row[1]))])


def read_samples_csv(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[-2:]] != ["x", "y"]:
            raise ValueError(f"{path}: expected a header ending in 'x,y', got {header}")
        rows = [[float(r[-2]), float(r[-1])] for r in reader if r]
    return np.array(rows, dtype=np.float64).reshape(-1, 2)
