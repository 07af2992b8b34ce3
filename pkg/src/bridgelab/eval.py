"""Sample-based metrics: histogram KL, a kNN-entropy KL cross-check, sliced W2."""
from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import digamma, gammaln

from . import datasets2d

METRIC_COLUMNS = ("epoch", "direction", "iter", "loss", "kl_data", "kl_prior", "wall_ms")


@dataclass
class Histogram2D:
    bounds: tuple
    bins: int
    counts: np.ndarray
    smoothing: float = 1.0

    @classmethod
    def from_samples(cls, x, bins, bounds, smoothing=1.0):
        x = np.asarray(x, dtype=np.float64).reshape(-1, 2)
        (x0, x1), (y0, y1) = bounds
        # clip into the grid so every sample is counted (edge bins absorb the tails)
        eps = 1e-12
        xs = np.clip(x[:, 0], x0, x1 - eps * (x1 - x0))
        ys = np.clip(x[:, 1], y0, y1 - eps * (y1 - y0))
        counts, _, _ = np.histogram2d(xs, ys, bins=bins, range=[[x0, x1], [y0, y1]])
        return cls(bounds, bins, counts, smoothing)

    @property
    def probs(self):
        c = self.counts + self.smoothing
        return c / c.sum()


def default_bounds(reference, factor=1.5, q=0.999):
    """Square grid ``[-factor * scale, factor * scale]^2``, ``scale`` a high quantile of |x|."""
    scale = float(np.quantile(np.abs(np.asarray(reference)), q))
    scale = max(scale, 1e-6)
    return ((-factor * scale, factor * scale), (-factor * scale, factor * scale))


def histogram_kl(samples_p, samples_q, bins=64, bounds=None, smoothing=1.0):
    """KL(P || Q) between additively smoothed 2D histograms of two sample sets.

    ``bounds`` defaults to :func:`default_bounds` of ``samples_q``.
    """
    samples_p = np.asarray(samples_p, dtype=np.float64).reshape(-1, 2)
    samples_q = np.asarray(samples_q, dtype=np.float64).reshape(-1, 2)
    if len(samples_p) == 0 or len(samples_q) == 0:
        raise ValueError("histogram_kl needs two non-empty sample sets")
    if smoothing <= 0:
        raise ValueError("smoothing must be positive")
    if bounds is None:
        bounds = default_bounds(samples_q)
    p = Histogram2D.from_samples(samples_p, bins, bounds, smoothing).probs
    q = Histogram2D.from_samples(samples_q, bins, bounds, smoothing).probs
    return max(float(np.sum(p * (np.log(p) - np.log(q)))), 0.0)


def knn_entropy(x, k=3):
    """Kozachenko-Leonenko differential entropy estimate (nats)."""
    x = np.asarray(x, dtype=np.float64)
    n, d = x.shape
    dist, _ = cKDTree(x).query(x, k=k + 1)
    log_unit_ball = (d / 2) * np.log(np.pi) - gammaln(d / 2 + 1)
    return float(digamma(n) - digamma(k) + log_unit_ball + d * np.mean(np.log(dist[:, -1])))


def exact_kl_vs_analytic(samples, dist, entropy=None):
    """Monte-Carlo KL(samples' law || dist) for an analytic ``dist``.

    The cross-entropy ``-E[log dist(x)]`` is averaged over ``samples``; the
    entropy of the samples' law is taken from ``entropy`` (a number, or a
    :class:`Dist2D` whose analytic log density is averaged over the samples),
    or estimated with the kNN estimator when omitted.
    """
    samples = np.asarray(samples, dtype=np.float64)
    log_q = datasets2d.log_density_reference(dist, samples)
    cross = -float(np.mean(log_q))
    if entropy is None:
        h = knn_entropy(samples)
    elif isinstance(entropy, datasets2d.Dist2D):
        h = -float(np.mean(datasets2d.log_density_reference(entropy, samples)))
    else:
        h = float(entropy)
    return cross - h


def _quantiles(v, m):
    v = np.sort(v)
    if len(v) == m:
        return v
    qs = (np.arange(m) + 0.5) / m
    return np.quantile(v, qs)


def wasserstein2_1d_sliced(samples_p, samples_q, n_projections=256, rng=None):
    """Squared sliced 2-Wasserstein distance, averaged over random directions.

    Returns ``E_theta[W2^2(theta . P, theta . Q)]``; unequal sample sizes are
    matched through empirical quantiles.
    """
    samples_p = np.asarray(samples_p, dtype=np.float64)
    samples_q = np.asarray(samples_q, dtype=np.float64)
    rng = np.random.default_rng(0) if rng is None else rng
    d = samples_p.shape[1]
    theta = rng.standard_normal((n_projections, d))
    theta /= np.linalg.norm(theta, axis=1, keepdims=True)
    m = max(len(samples_p), len(samples_q))
    total = 0.0
    for t in theta:
        a = _quantiles(samples_p @ t, m)
        b = _quantiles(samples_q @ t, m)
        total += np.mean((a - b) ** 2)
    return float(total / n_projections)


@dataclass
class MetricRecord:
    epoch: int
    direction: str
    iter: int
    loss: float = float("nan")
    kl_data: float = float("nan")
    kl_prior: float = float("nan")
    wall_ms: float = 0.0
    extra: dict = field(default_factory=dict)

    def row(self):
        return [self.epoch, self.direction, self.iter, repr(float(self.loss)),
                repr(float(self.kl_data)), repr(float(self.kl_prior)), f"{self.wall_ms:.1f}"]


class MetricLog:
    """Append-only metric series, mirrored to a CSV file when ``path`` is set."""

    def __init__(self, path=None, append=False):
        self.records = []
        self.path = path
        if path is not None and not (append and os.path.exists(path)):
            with open(path, "w", newline="") as fh:
                csv.writer(fh).writerow(METRIC_COLUMNS)

    def append(self, rec):
        if self.records:
            last = self.records[-1]
            if (rec.epoch, rec.iter) < (last.epoch, last.iter):
                raise ValueError("metric records must be appended in (epoch, iter) order")
        self.records.append(rec)
        if self.path is not None:
            with open(self.path, "a", newline="") as fh:
                csv.writer(fh).writerow(rec.row())


def read_metrics_csv(path):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(METRIC_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: not a metrics file, missing columns {sorted(missing)}")
        return [MetricRecord(int(r["epoch"]), r["direction"], int(r["iter"]), float(r["loss"]),
                             float(r["kl_data"]), float(r["kl_prior"]), float(r["wall_ms"]))
                for r in reader]
