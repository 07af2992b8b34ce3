"""Training targets, losses and the parameterization registry.

Every network used by the bridge is wrapped in a :class:`Predictor`, which
applies a per-timestep affine head to the raw network output::

    pred(k, x) = a[k] * x + c[k] * net(index[k], x)

Fresh next-state and terminal predictors use ``a = c = 1`` (so an untrained
net with a zero last layer predicts "stay put"); flow predictors use
``a = 0, c = 1``. Pretrained DDPM / flow-matching nets are re-expressed in any
bridge parameterization purely by choosing ``a``, ``c`` and ``index``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

DDPM_ALPHA_BAR_END = 1e-4


class ParamMode(str, Enum):
    DSB = "dsb"
    S_DSB = "s-dsb"
    TR_DSB = "tr-dsb"
    FR_DSB = "fr-dsb"
    DDPM = "ddpm"
    FM = "fm"

    @property
    def is_bridge(self):
        return self in (ParamMode.DSB, ParamMode.S_DSB, ParamMode.TR_DSB, ParamMode.FR_DSB)

    @property
    def next_state(self):
        return self in (ParamMode.DSB, ParamMode.S_DSB)


# Unified view of generative methods as (noised sample x_k, regression target y_k).
# Only the rows with a constructor here can be trained.
REGISTRY = {
    "sgm-ve": {"x_k": "x_0 + beta_k x_N", "y_k": "grad log p_k", "rounds": 1, "implemented": False},
    "ddpm": {"x_k": "sqrt(ab_k) x_0 + sqrt(1 - ab_k) x_N", "y_k": "x_N", "rounds": 1, "implemented": True},
    "fm": {"x_k": "(1 - k/N) x_0 + (k/N) x_N", "y_k": "x_N - x_0", "rounds": 1, "implemented": True},
    "i2sb": {"x_k": "bridge posterior of (x_0, x_N) + noise", "y_k": "(x_k - x_0) / sigma_k",
             "rounds": 1, "implemented": False},
    "bridge-tts": {"x_k": "scaled bridge of (x_0, x_N) + noise", "y_k": "x_0", "rounds": 1,
                   "implemented": False},
    "dsb": {"x_k": "opposite-chain state", "y_k": "x_k + F(x_{k-1}) - F(x_k) / mirrored",
            "rounds": ">1", "implemented": True},
    "s-dsb": {"x_k": "opposite-chain state", "y_k": "neighbouring state", "rounds": ">1",
              "implemented": True},
    "tr-dsb": {"x_k": "opposite-chain state", "y_k": "x_0 / x_N", "rounds": ">1", "implemented": True},
    "fr-dsb": {"x_k": "opposite-chain state", "y_k": "(x_0 - x_k)/gb_k / (x_N - x_k)/(1 - gb_k)",
               "rounds": ">1", "implemented": True},
}


def registry_row(method):
    row = REGISTRY[method]
    if not row["implemented"]:
        raise NotImplementedError(f"{method!r} is documented in the registry but out of scope")
    return row


def ddpm_alpha_bar(sched, end=DDPM_ALPHA_BAR_END):
    """``alpha_bar_k = exp(-2 c gamma_bar_k)`` with ``c`` chosen so ``alpha_bar_N = end``."""
    c = -np.log(end) / (2.0 * sched.gamma_bar[-1])
    return np.exp(-2.0 * c * sched.gamma_bar)


def fm_times(sched, aligned=True):
    """Interpolation coordinate per index: ``gamma_bar_k / gamma_bar_N`` or ``k / N``."""
    if aligned:
        return sched.gamma_bar / sched.gamma_bar[-1]
    return np.arange(sched.N + 1) / sched.N


@dataclass(eq=False)
class Predictor:
    """A network plus its affine output head. ``net=None`` means raw output 0."""

    net: object
    mode: ParamMode
    direction: str
    a: np.ndarray
    c: np.ndarray
    index: np.ndarray
    source: str = "fresh"
    nfe: int = field(default=0)

    def __post_init__(self):
        self.mode = ParamMode(self.mode)
        if self.direction not in ("forward", "backward"):
            raise ValueError(f"direction must be 'forward' or 'backward', got {self.direction!r}")

    def __call__(self, k, x):
        x = np.asarray(x, dtype=np.float64)
        k = np.broadcast_to(np.asarray(k, dtype=np.int64), (x.shape[0],))
        self.nfe += x.shape[0]
        out = self.a[k, None] * x
        if self.net is not None:
            out = out + self.c[k, None] * self.net.forward(self.index[k], x)
        return out

    def raw_grad(self, k, upstream):
        """Chain rule through the head: d loss / d raw net output."""
        k = np.broadcast_to(np.asarray(k, dtype=np.int64), (upstream.shape[0],))
        return self.c[k, None] * upstream

    def forward_train(self, k, x):
        """Prediction plus the net's activation cache, for a following :meth:`backward`."""
        x = np.asarray(x, dtype=np.float64)
        k = np.broadcast_to(np.asarray(k, dtype=np.int64), (x.shape[0],))
        raw, cache = self.net.forward(self.index[k], x, return_cache=True)
        return self.a[k, None] * x + self.c[k, None] * raw, cache

    def backward(self, k, x, upstream, cache=None):
        k = np.broadcast_to(np.asarray(k, dtype=np.int64), (np.shape(x)[0],))
        return self.net.backward(self.index[k], x, self.raw_grad(k, upstream), cache=cache)

    def with_net(self, net):
        return Predictor(net, self.mode, self.direction, self.a.copy(), self.c.copy(),
                         self.index.copy(), self.source)

    def head_dict(self):
        return {"mode": self.mode.value, "direction": self.direction, "a": self.a.tolist(),
                "c": self.c.tolist(), "index": self.index.tolist(), "source": self.source}

    @classmethod
    def from_head_dict(cls, net, d):
        return cls(net, ParamMode(d["mode"]), d["direction"], np.array(d["a"], dtype=np.float64),
                   np.array(d["c"], dtype=np.float64), np.array(d["index"], dtype=np.int64),
                   d.get("source", "fresh"))


def fresh_predictor(net, mode, direction, n_steps):
    mode = ParamMode(mode)
    if not mode.is_bridge:
        raise ValueError(f"{mode.value!r} is not a bridge parameterization")
    a = np.zeros(n_steps + 1) if mode is ParamMode.FR_DSB else np.ones(n_steps + 1)
    return Predictor(net, mode, direction, a, np.ones(n_steps + 1), np.arange(n_steps + 1))


def reference_predictor(n_steps):
    """Forward next-state predictor of the zero-drift reference process, F(k, x) = x."""
    p = Predictor(None, ParamMode.S_DSB, "forward", np.ones(n_steps + 1), np.zeros(n_steps + 1),
                  np.arange(n_steps + 1), source="reference")
    return p


# -- bridge targets -----------------------------------------------------------


def target_dsb_original(frozen, k, x_k, x_k1, direction="backward", frozen_at_k=None):
    """Original DSB regression target.

    backward (frozen forward F):  x_{k+1} + F(k, x_k) - F(k, x_{k+1})
    forward (frozen backward B):  x_k + B(k+1, x_{k+1}) - B(k+1, x_k)

    ``frozen_at_k`` may carry the already computed F(k, x_k) (resp.
    B(k+1, x_{k+1})) from the sampling pass, saving one evaluation.
    """
    k = np.asarray(k)
    if direction == "backward":
        first = frozen(k, x_k) if frozen_at_k is None else frozen_at_k
        return x_k1 + first - frozen(k, x_k1)
    first = frozen(k + 1, x_k1) if frozen_at_k is None else frozen_at_k
    return x_k + first - frozen(k + 1, x_k)


def target_s_dsb(x_k, x_k1, direction="backward"):
    """Simplified target: the neighbouring state of the opposite chain."""
    return np.array(x_k if direction == "backward" else x_k1, dtype=np.float64)


def target_tr(endpoint):
    """Terminal target: x_0 for the backward net, x_N for the forward net."""
    return np.array(endpoint, dtype=np.float64)


def target_fr(sched, k, x, endpoint, direction="backward"):
    """Flow target.

    backward, input x_{k+1} at index k+1: (x_0 - x_{k+1}) / gamma_bar_{k+1}
    forward, input x_k at index k:         (x_N - x_k) / (1 - gamma_bar_k)

    ``k`` is the index of the network input in both cases.
    """
    k = np.asarray(k)
    if direction == "backward":
        if np.any(k < 1):
            raise ValueError("backward flow target needs k >= 1")
        return (endpoint - x) / sched.gamma_bar[k][..., None]
    if np.any(k > sched.N - 1):
        raise ValueError("forward flow target needs k <= N-1")
    return (endpoint - x) / (sched.gamma_bar[-1] - sched.gamma_bar[k])[..., None]


def loss_mse(pred, target):
    """Mean over the batch of the squared Euclidean error; returns (loss, dloss/dpred)."""
    diff = np.asarray(pred, dtype=np.float64) - np.asarray(target, dtype=np.float64)
    n = diff.shape[0]
    if n == 0:
        return 0.0, diff
    return float(np.sum(diff * diff) / n), 2.0 * diff / n


# -- pretraining rows ---------------------------------------------------------


@dataclass
class TrainPair:
    x: np.ndarray
    k: np.ndarray
    y: np.ndarray
    direction: str = "backward"


def make_pretrain_pair(mode, x0, xN, k, sched=None, coeffs=None, prior_is_gaussian=True):
    """Noised sample and target for a single-round generative model.

    ``ddpm``: x_k = sqrt(ab_k) x_0 + sqrt(1 - ab_k) x_N, target x_N.
    ``fm``:   x_k = (1 - t_k) x_0 + t_k x_N, target x_N - x_0.

    ``coeffs`` overrides the per-index table (``alpha_bar`` for ddpm, the
    interpolation times for fm); otherwise it is derived from ``sched``.
    """
    mode = ParamMode(mode)
    k = np.asarray(k, dtype=np.int64)
    x0 = np.asarray(x0, dtype=np.float64)
    xN = np.asarray(xN, dtype=np.float64)
    if mode is ParamMode.DDPM:
        if not prior_is_gaussian:
            raise ValueError("the ddpm row needs a standard Gaussian prior")
        ab = ddpm_alpha_bar(sched) if coeffs is None else np.asarray(coeffs)
        s = ab[k][..., None]
        return TrainPair(np.sqrt(s) * x0 + np.sqrt(1.0 - s) * xN, k, xN.copy())
    if mode is ParamMode.FM:
        if coeffs is None:
            t = np.arange(sched.N + 1) / sched.N if sched is not None else None
        else:
            t = np.asarray(coeffs)
        tk = t[k][..., None]
        return TrainPair((1.0 - tk) * x0 + tk * xN, k, xN - x0)
    raise ValueError(f"{mode.value!r} is not a pretraining row")


# -- pretrained -> bridge adapters --------------------------------------------


def _ddpm_head(ab, to_mode, direction, sched):
    n = len(ab) - 1
    sa, sb = np.sqrt(ab), np.sqrt(1.0 - ab)
    # x0_hat = p * x + q * eps_hat
    p, q = 1.0 / sa, -sb / sa
    a = np.zeros(n + 1)
    c = np.zeros(n + 1)
    gb = sched.gamma_bar
    for k in range(n + 1):
        if direction == "backward":
            if k == 0:
                continue
            if to_mode.next_state:
                # sqrt(ab_{k-1}) x0_hat + sqrt(1 - ab_{k-1}) eps_hat
                a[k] = sa[k - 1] * p[k]
                c[k] = sa[k - 1] * q[k] + sb[k - 1]
            elif to_mode is ParamMode.TR_DSB:
                a[k], c[k] = p[k], q[k]
            else:
                a[k], c[k] = (p[k] - 1.0) / gb[k], q[k] / gb[k]
        else:
            if k == n:
                continue
            if to_mode.next_state:
                a[k] = sa[k + 1] * p[k]
                c[k] = sa[k + 1] * q[k] + sb[k + 1]
            elif to_mode is ParamMode.TR_DSB:
                a[k], c[k] = 0.0, 1.0
            else:
                a[k], c[k] = -1.0 / (gb[-1] - gb[k]), 1.0 / (gb[-1] - gb[k])
    return a, c, np.arange(n + 1)


def _fm_head(times, to_mode, direction, sched, reversed_roles):
    n = len(times) - 1
    t = np.asarray(times, dtype=np.float64)
    index = np.arange(n + 1)
    # sign converts the model's velocity into d x / d t in bridge time
    sign = 1.0
    if reversed_roles:
        if not np.allclose(t[::-1], 1.0 - t, atol=1e-12):
            raise ValueError("a role-swapped flow model needs a time table symmetric about 1/2")
        index = index[::-1].copy()
        sign = -1.0
    a = np.zeros(n + 1)
    c = np.zeros(n + 1)
    gb = sched.gamma_bar
    for k in range(n + 1):
        tk = t[k]
        if direction == "backward":
            if k == 0:
                continue
            if to_mode.next_state:
                a[k], c[k] = 1.0, -sign * (tk - t[k - 1])
            elif to_mode is ParamMode.TR_DSB:
                a[k], c[k] = 1.0, -sign * tk
            else:
                a[k], c[k] = 0.0, -sign * tk / gb[k]
        else:
            if k == n:
                continue
            if to_mode.next_state:
                a[k], c[k] = 1.0, sign * (t[k + 1] - tk)
            elif to_mode is ParamMode.TR_DSB:
                a[k], c[k] = 1.0, sign * (1.0 - tk)
            else:
                a[k], c[k] = 0.0, sign * (1.0 - tk) / (gb[-1] - gb[k])
    return a, c, index


def convert_pretrained_to_bridge(net, from_mode, to_mode, direction, sched, coeffs=None,
                                 reversed_roles=False):
    """Wrap a frozen pretrained ``ddpm``/``fm`` net as a bridge predictor.

    ``coeffs`` is the table the net was trained with (``alpha_bar`` for ddpm,
    interpolation times for fm); by default it is rebuilt from ``sched``.
    ``reversed_roles`` marks a flow model trained with data and prior swapped.
    """
    from_mode, to_mode = ParamMode(from_mode), ParamMode(to_mode)
    if from_mode not in (ParamMode.DDPM, ParamMode.FM) or not to_mode.is_bridge:
        raise ValueError(f"cannot convert {from_mode.value!r} into {to_mode.value!r}")
    if from_mode is ParamMode.DDPM:
        if reversed_roles:
            raise ValueError("a ddpm model cannot be role-swapped (its prior must be Gaussian)")
        ab = ddpm_alpha_bar(sched) if coeffs is None else np.asarray(coeffs, dtype=np.float64)
        a, c, index = _ddpm_head(ab, to_mode, direction, sched)
    else:
        times = fm_times(sched) if coeffs is None else np.asarray(coeffs, dtype=np.float64)
        a, c, index = _fm_head(times, to_mode, direction, sched, reversed_roles)
    return Predictor(net, to_mode, direction, a, c, index, source=f"{from_mode.value}->{to_mode.value}")
