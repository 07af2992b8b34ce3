"""Small time-conditioned MLP with hand-written backprop and Adam.

The network maps ``(k, x) -> R^d`` where ``k`` is a discrete timestep in
``0..n_steps``. The timestep is looked up in a learned embedding table and
concatenated to ``x`` before the dense stack.
"""
from __future__ import annotations

import hashlib
import io
import json

import numpy as np
from scipy.special import expit

CHECKPOINT_VERSION = 1

GradBuffer = dict  # parameter name -> gradient array, same shapes as DriftNet.params


class NumericalError(RuntimeError):
    """Raised when NaN/Inf shows up in a gradient, loss or trajectory."""


def _silu(z):
    s = expit(z)
    return z * s, s


def _silu_grad(z, s):
    return s * (1.0 + z * (1.0 - s))


class DriftNet:
    """Dense network ``[x, emb[k]] -> hidden... -> d`` with SiLU activations.

    Parameters are kept in ``self.params`` (an ordered dict of float64
    arrays) so that gradients, Adam moments and checkpoints can all be keyed
    by the same names.
    """

    def __init__(self, dim=2, n_steps=16, hidden=(128, 128), emb_dim=32,
                 seed=0, zero_last=True, emb_std=1.0, input_scale=1.0):
        self.dim = int(dim)
        self.n_steps = int(n_steps)
        self.hidden = tuple(int(h) for h in hidden)
        self.emb_dim = int(emb_dim)
        self.seed = int(seed)
        self.zero_last = bool(zero_last)
        # fixed gain on x before the first layer; >1 lets the net resolve finer spatial detail
        self.input_scale = float(input_scale)

        rng = np.random.default_rng(seed)
        widths = [self.dim + self.emb_dim, *self.hidden, self.dim]
        self.params: dict[str, np.ndarray] = {}
        if self.emb_dim:
            self.params["emb"] = emb_std * rng.standard_normal((self.n_steps + 1, self.emb_dim))
        n_layers = len(widths) - 1
        for i in range(n_layers):
            fan_in, fan_out = widths[i], widths[i + 1]
            if i == n_layers - 1 and zero_last:
                W = np.zeros((fan_in, fan_out))
            else:
                W = rng.standard_normal((fan_in, fan_out)) * np.sqrt(1.0 / fan_in)
            self.params[f"W{i}"] = W
            self.params[f"b{i}"] = np.zeros(fan_out)
        self.m = {k: np.zeros_like(v) for k, v in self.params.items()}
        self.v = {k: np.zeros_like(v) for k, v in self.params.items()}
        self.step = 0

    @property
    def n_layers(self):
        return len(self.hidden) + 1

    def architecture(self):
        return {"dim": self.dim, "n_steps": self.n_steps, "hidden": list(self.hidden),
                "emb_dim": self.emb_dim, "activation": "silu", "seed": self.seed,
                "zero_last": self.zero_last, "input_scale": self.input_scale}

    def _inputs(self, k, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.dim:
            raise ValueError(f"expected input of shape (batch, {self.dim}), got {x.shape}")
        k = np.broadcast_to(np.asarray(k, dtype=np.int64), (x.shape[0],))
        if self.input_scale != 1.0:
            x = self.input_scale * x
        if k.size and (k.min() < 0 or k.max() > self.n_steps):
            raise ValueError(f"timestep out of range 0..{self.n_steps}")
        if self.emb_dim:
            return k, np.concatenate([x, self.params["emb"][k]], axis=1)
        return k, x

    def forward(self, k, x, return_cache=False):
        k, h = self._inputs(k, x)
        cache = [(h, None, None)]
        for i in range(self.n_layers):
            z = h @ self.params[f"W{i}"] + self.params[f"b{i}"]
            if i < self.n_layers - 1:
                h, s = _silu(z)
                cache.append((h, z, s))
            else:
                h = z
        if return_cache:
            return h, (k, cache)
        return h

    __call__ = forward

    def backward(self, k, x, upstream, cache=None) -> GradBuffer:
        """Gradient of ``sum(forward(k, x) * upstream)`` w.r.t. every parameter.

        ``cache`` is the second value of ``forward(k, x, return_cache=True)``;
        when omitted the forward pass is recomputed.
        """
        if cache is None:
            _, cache = self.forward(k, x, return_cache=True)
        k, cache = cache
        upstream = np.asarray(upstream, dtype=np.float64)
        n_out = (cache[0][0].shape[0], self.dim)
        if upstream.shape != n_out:
            raise ValueError(f"upstream gradient shape {upstream.shape} != output shape {n_out}")
        grads = {}
        g = upstream
        for i in reversed(range(self.n_layers)):
            h_in = cache[i][0]
            grads[f"W{i}"] = h_in.T @ g
            grads[f"b{i}"] = g.sum(axis=0)
            g = g @ self.params[f"W{i}"].T
            if i > 0:
                _, z, s = cache[i]
                g = g * _silu_grad(z, s)
        if self.emb_dim:
            g_emb = np.zeros_like(self.params["emb"])
            np.add.at(g_emb, k, g[:, self.dim:])
            grads["emb"] = g_emb
        return {name: grads[name] for name in self.params}

    def clone(self):
        other = DriftNet.__new__(DriftNet)
        other.__dict__.update({k: v for k, v in self.__dict__.items()
                               if k not in ("params", "m", "v")})
        other.params = {k: v.copy() for k, v in self.params.items()}
        other.m = {k: v.copy() for k, v in self.m.items()}
        other.v = {k: v.copy() for k, v in self.v.items()}
        return other

    def fingerprint(self):
        h = hashlib.sha1()
        for name, arr in self.params.items():
            h.update(name.encode())
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()[:16]

    # -- serialization -------------------------------------------------------

    def to_arrays(self, prefix=""):
        arrays = {}
        for name, arr in self.params.items():
            arrays[f"{prefix}param/{name}"] = arr
            arrays[f"{prefix}adam_m/{name}"] = self.m[name]
            arrays[f"{prefix}adam_v/{name}"] = self.v[name]
        arrays[f"{prefix}step"] = np.array(self.step, dtype=np.int64)
        return arrays

    @classmethod
    def from_arrays(cls, arch, arrays, prefix=""):
        net = cls(dim=arch["dim"], n_steps=arch["n_steps"], hidden=arch["hidden"],
                  emb_dim=arch["emb_dim"], seed=arch["seed"], zero_last=arch["zero_last"],
                  input_scale=arch.get("input_scale", 1.0))
        for name in net.params:
            net.params[name] = np.array(arrays[f"{prefix}param/{name}"])
            net.m[name] = np.array(arrays[f"{prefix}adam_m/{name}"])
            net.v[name] = np.array(arrays[f"{prefix}adam_v/{name}"])
        net.step = int(arrays[f"{prefix}step"])
        return net


def net_forward(net, k, x):
    return net.forward(k, x)


def net_backward(net, k, x, upstream_grad):
    return net.backward(k, x, upstream_grad)


def clone_params(net):
    return net.clone()


def copy_params_into(src, dst):
    """Overwrite ``dst``'s parameters and optimizer state with copies of ``src``'s."""
    if src.architecture() | {"seed": 0} != dst.architecture() | {"seed": 0}:
        raise ValueError("incompatible architectures: "
                         f"{src.architecture()} vs {dst.architecture()}")
    for name in src.params:
        dst.params[name] = src.params[name].copy()
        dst.m[name] = src.m[name].copy()
        dst.v[name] = src.v[name].copy()
    dst.step = src.step
    return dst


def adam_step(net, grads, lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-8):
    """In-place Adam update. A non-finite gradient leaves ``net`` untouched."""
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"non-finite gradient for parameter {name!r}; step rejected")
    net.step += 1
    t = net.step
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    for name, g in grads.items():
        m = net.m[name]
        v = net.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        net.params[name] -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
    return net


def save_arrays(path, arrays, meta):
    """Write ``arrays`` plus a JSON ``meta`` blob to an uncompressed npz container."""
    meta = dict(meta, version=CHECKPOINT_VERSION)
    buf = io.BytesIO()
    np.savez(buf, __meta__=np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8),
             **arrays)
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def load_arrays(path):
    with np.load(path, allow_pickle=False) as data:
        arrays = {k: data[k] for k in data.files}
    meta = json.loads(arrays.pop("__meta__").tobytes().decode())
    if meta.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {meta.get('version')!r}")
    return arrays, meta


def save_net(path, net, meta=None):
    save_arrays(path, net.to_arrays(), {"architecture": net.architecture(), **(meta or {})})


def load_net(path):
    arrays, meta = load_arrays(path)
    return DriftNet.from_arrays(meta["architecture"], arrays), meta
