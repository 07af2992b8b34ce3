"""Bridge training: the alternating outer loop, the per-epoch inner loop,
initialization strategies and single-round pretraining.

Epochs come in pairs. Pair ``n`` (1-based) first trains the backward net on
paths simulated by the frozen forward chain, then the forward net on paths
simulated by the frozen backward chain. Until a forward net has been trained
or loaded, the forward chain is the zero-drift reference process.
"""
from __future__ import annotations

import dataclasses
import glob
import json
import logging
import os
import re
import time
from dataclasses import dataclass, field

import numpy as np

from . import bridge, datasets2d, eval as metrics
from .datasets2d import Dist2D
from .objectives import (ParamMode, Predictor, convert_pretrained_to_bridge, ddpm_alpha_bar,
                         fm_times, fresh_predictor, loss_mse, make_pretrain_pair,
                         reference_predictor, target_fr, target_s_dsb, target_tr)
from .schedules import ScheduleSpec, schedule_from_spec
from .smallnet import DriftNet, NumericalError, adam_step, load_arrays, load_net, save_arrays, save_net

log = logging.getLogger(__name__)

INIT_STRATEGIES = ("scratch", "init-B", "init-both-same", "init-both-separate")
LR_SCHEDULES = ("constant", "cosine")
_EVAL_STREAM = 1_000_003
_REF_STREAM = 1_000_033
_CKPT_RE = re.compile(r"epoch_(\d+)_(backward|forward)\.ckpt$")


class ConfigError(ValueError):
    """Invalid or incomplete training configuration."""


def _default_data():
    return Dist2D("checkerboard", scale=2.0, standardize=True)


def _default_prior():
    return Dist2D("pinwheel", scale=4.0, standardize=True)


@dataclass
class PretrainConfig:
    mode: str = "ddpm"
    M: int = 5000
    batch: int = 512
    lr: float = 3e-3
    reverse: bool = False  # flow model with data and prior roles swapped
    out: str = "pretrained.ckpt"


@dataclass
class TrainConfig:
    name: str = "run"
    mode: str = "s-dsb"
    init: str = "scratch"
    checkpoints: dict = field(default_factory=dict)  # "backward" / "forward" -> pretrained ckpt
    L: int = 6
    M: int = 5000
    batch: int = 512
    lr: float = 3e-3
    lr_schedule: str = "cosine"  # per-epoch decay to zero, or "constant"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    schedule: ScheduleSpec = field(default_factory=ScheduleSpec)
    data: Dist2D = field(default_factory=_default_data)
    prior: Dist2D = field(default_factory=_default_prior)
    hidden: tuple = (128, 128)
    emb_dim: int = 32
    input_scale: float = 5.0
    seed: int = 0
    cache_factor: int = 10
    cache_refresh: int = 50
    exact_cache: bool = False
    log_every: int = 100
    eval_every: int = 0  # extra KL evaluations inside an epoch, 0 = end of epoch only
    eval_samples: int = 20000
    eval_bins: int = 64
    plateau_window: int = 0  # opt-in early stop: 0 disables
    plateau_patience: int = 5
    workers: int = 1
    pretrain: PretrainConfig = field(default_factory=PretrainConfig)

    def __post_init__(self):
        if isinstance(self.schedule, dict):
            self.schedule = ScheduleSpec(**self.schedule)
        if isinstance(self.data, dict):
            self.data = Dist2D.from_dict(self.data)
        if isinstance(self.prior, dict):
            self.prior = Dist2D.from_dict(self.prior)
        if isinstance(self.pretrain, dict):
            self.pretrain = PretrainConfig(**self.pretrain)
        self.hidden = tuple(int(h) for h in self.hidden)
        self.checkpoints = dict(self.checkpoints)

    def validate(self):
        if self.L < 1:
            raise ConfigError("L must be >= 1")
        if self.M < 0:
            raise ConfigError("M must be >= 0")
        if self.batch < 1:
            raise ConfigError("batch must be >= 1")
        if self.lr <= 0 or self.pretrain.lr <= 0:
            raise ConfigError("lr must be positive")
        if self.lr_schedule not in LR_SCHEDULES:
            raise ConfigError(f"unknown lr_schedule {self.lr_schedule!r}; expected one of {LR_SCHEDULES}")
        if self.input_scale <= 0:
            raise ConfigError("input_scale must be positive")
        try:
            mode = ParamMode(self.mode)
        except ValueError:
            raise ConfigError(f"unknown mode {self.mode!r}") from None
        if not mode.is_bridge:
            raise ConfigError(f"{self.mode!r} is a pretraining row, not a bridge mode")
        if self.init not in INIT_STRATEGIES:
            raise ConfigError(f"unknown init strategy {self.init!r}; expected one of {INIT_STRATEGIES}")
        needed = {"init-B": ("backward",), "init-both-same": ("backward",),
                  "init-both-separate": ("backward", "forward")}.get(self.init, ())
        missing = [k for k in needed if not self.checkpoints.get(k)]
        if missing:
            raise ConfigError(f"init strategy {self.init!r} needs checkpoint paths for {missing}")
        if self.pretrain.mode not in ("ddpm", "fm"):
            raise ConfigError("pretrain.mode must be 'ddpm' or 'fm'")
        return self

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["schedule"] = dataclasses.asdict(self.schedule)
        d["data"] = self.data.to_dict()
        d["prior"] = self.prior.to_dict()
        d["hidden"] = list(self.hidden)
        return d

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        try:
            return cls(**d)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


PRESETS = {
    "desk": {},
    "paper-2d": {"M": 32000, "L": 10,
                 "schedule": {"N": 16, "g_min": 1e-3, "g_max": 1e-2, "shape": "linear-symmetric",
                              "normalize": False}},
}


def load_config(path=None, preset=None, overrides=None):
    d = dict(PRESETS[preset]) if preset else {}
    if path is not None:
        with open(path) as fh:
            try:
                d.update(json.load(fh))
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    d.update(overrides or {})
    return TrainConfig.from_dict(d).validate()


# -- state --------------------------------------------------------------------


@dataclass(eq=False)
class EpochState:
    """Both predictors plus run bookkeeping.

    ``epoch`` counts completed half-epochs (odd = backward, even = forward);
    ``iteration`` counts gradient steps over the whole run.
    """

    backward: Predictor
    forward: Predictor
    sched: object
    forward_ready: bool = False
    epoch: int = 0
    iteration: int = 0
    cache_fingerprint: str = ""
    stopped_early: bool = False

    def generator(self, direction):
        """Frozen predictor that simulates paths in ``direction``."""
        if direction == "backward":
            return self.backward
        return self.forward if self.forward_ready else reference_predictor(self.sched.N)

    def trainable(self, direction):
        return self.backward if direction == "backward" else self.forward


def epoch_direction(e):
    return "backward" if e % 2 == 1 else "forward"


def epoch_pair(e):
    """IPF pair index (1-based) of half-epoch ``e``."""
    return (e + 1) // 2


def _epoch_rng(seed, e):
    return np.random.default_rng(np.random.SeedSequence([seed, e]))


def _new_net(config, seed):
    return DriftNet(dim=2, n_steps=config.schedule.N, hidden=config.hidden, emb_dim=config.emb_dim,
                    seed=seed, input_scale=config.input_scale)


def learning_rate(base, it, M, schedule="constant"):
    """Step size for step ``it`` (0-based) of an ``M``-step stretch."""
    if schedule == "cosine" and M > 0:
        return base * 0.5 * (1.0 + np.cos(np.pi * it / M))
    return base


# -- initialization -----------------------------------------------------------


def _load_pretrained(path, sched):
    if not os.path.exists(path):
        raise FileNotFoundError(f"pretrained checkpoint not found: {path}")
    net, meta = load_net(path)
    mode = meta.get("pretrain_mode")
    if mode not in ("ddpm", "fm"):
        raise ValueError(f"{path}: not a pretrained ddpm/fm checkpoint")
    if net.n_steps != sched.N:
        raise ValueError(f"{path}: trained for N={net.n_steps}, schedule has N={sched.N}")
    return net, meta


def resolve_init(strategy, checkpoints, to_mode, sched, config=None):
    """Build ``(backward, forward, forward_ready)`` predictors for a strategy.

    ``forward_ready`` is False when the forward chain should still be the
    reference process (nothing trained or loaded for it yet).
    """
    config = config or TrainConfig(schedule=sched.spec or ScheduleSpec(N=sched.N))
    to_mode = ParamMode(to_mode)
    checkpoints = checkpoints or {}
    if strategy == "scratch":
        bwd = fresh_predictor(_new_net(config, config.seed + 1), to_mode, "backward", sched.N)
        fwd = fresh_predictor(_new_net(config, config.seed + 2), to_mode, "forward", sched.N)
        return bwd, fwd, False
    if strategy not in INIT_STRATEGIES:
        raise ValueError(f"unknown init strategy {strategy!r}")
    if not checkpoints.get("backward"):
        raise ValueError(f"init strategy {strategy!r} needs a 'backward' checkpoint")
    net, meta = _load_pretrained(checkpoints["backward"], sched)
    bwd = convert_pretrained_to_bridge(net, meta["pretrain_mode"], to_mode, "backward", sched,
                                       coeffs=meta["coeffs"], reversed_roles=meta["reversed"])
    if strategy == "init-B":
        fwd = fresh_predictor(_new_net(config, config.seed + 2), to_mode, "forward", sched.N)
        return bwd, fwd, False
    if strategy == "init-both-same":
        fwd = convert_pretrained_to_bridge(net.clone(), meta["pretrain_mode"], to_mode, "forward",
                                           sched, coeffs=meta["coeffs"])
        return bwd, fwd, True
    if not checkpoints.get("forward"):
        raise ValueError("init-both-separate needs a 'forward' checkpoint")
    fnet, fmeta = _load_pretrained(checkpoints["forward"], sched)
    fwd = convert_pretrained_to_bridge(fnet, fmeta["pretrain_mode"], to_mode, "forward", sched,
                                       coeffs=fmeta["coeffs"], reversed_roles=fmeta["reversed"])
    return bwd, fwd, True


# -- pretraining --------------------------------------------------------------


class PretrainDiverged(NumericalError):
    def __init__(self, msg, last_good):
        super().__init__(msg)
        self.last_good = last_good


def pretrain(config, out=None, mode=None, M=None, rng=None):
    """Train a single-round ddpm / flow-matching net; returns ``(net, meta)``.

    ddpm learns the noise of ``x_k = sqrt(ab_k) x_0 + sqrt(1 - ab_k) eps``
    against a standard Gaussian; flow matching regresses ``x_N - x_0`` on the
    straight interpolant between data and prior (swapped when
    ``config.pretrain.reverse``). On a NaN loss the last finite parameters
    are saved to ``out`` and :class:`PretrainDiverged` is raised.
    """
    pc = config.pretrain
    mode = ParamMode(mode or pc.mode)
    M = pc.M if M is None else M
    sched = schedule_from_spec(config.schedule)
    rng = rng if rng is not None else np.random.default_rng(np.random.SeedSequence([config.seed, 7]))
    net = _new_net(config, config.seed + 3)
    start, end = config.data, config.prior
    if mode is ParamMode.DDPM:
        if pc.reverse:
            raise ConfigError("a ddpm model cannot be trained with swapped roles")
        coeffs = ddpm_alpha_bar(sched)
        end = Dist2D("gaussian")
        k_lo = 1
    elif mode is ParamMode.FM:
        coeffs = fm_times(sched)
        if pc.reverse:
            start, end = end, start
        k_lo = 0
    else:
        raise ConfigError(f"cannot pretrain {mode.value!r}")
    meta = {"pretrain_mode": mode.value, "coeffs": coeffs.tolist(), "reversed": bool(pc.reverse),
            "schedule": dataclasses.asdict(config.schedule), "data": config.data.to_dict(),
            "prior": config.prior.to_dict(), "steps": 0, "final_loss": None}
    last_good = net.clone()
    loss = float("nan")
    recent = []
    for it in range(M):
        x0 = datasets2d.sample(start, pc.batch, rng)
        xN = datasets2d.sample(end, pc.batch, rng)
        k = rng.integers(k_lo, sched.N + 1, size=pc.batch)
        pair = make_pretrain_pair(mode, x0, xN, k, coeffs=coeffs)
        out_k, cache = net.forward(pair.k, pair.x, return_cache=True)
        loss, g = loss_mse(out_k, pair.y)
        try:
            if not np.isfinite(loss):
                raise NumericalError(f"non-finite pretraining loss at step {it}")
            adam_step(net, net.backward(pair.k, pair.x, g, cache=cache),
                      lr=learning_rate(pc.lr, it, M, config.lr_schedule),
                      beta1=config.beta1, beta2=config.beta2, eps=config.eps)
        except NumericalError as exc:
            meta.update(steps=it, final_loss=None, diverged=True)
            if out:
                save_net(out, last_good, meta)
            raise PretrainDiverged(str(exc), last_good) from exc
        recent.append(loss)
        if (it + 1) % 100 == 0:
            last_good = net.clone()
    meta.update(steps=M, final_loss=float(np.mean(recent[-100:])) if recent else None)
    if out:
        save_net(out, net, meta)
    return net, meta


# -- one epoch ----------------------------------------------------------------


def _make_pool(state, config, direction, rng):
    """Paths for training ``direction``, simulated by the opposite chain."""
    sim_dir = "forward" if direction == "backward" else "backward"
    gen = state.generator(sim_dir)
    start = config.data if sim_dir == "forward" else config.prior
    n = config.batch if config.exact_cache else config.cache_factor * config.batch
    dsb = ParamMode(config.mode) is ParamMode.DSB
    return bridge.cache_trajectories(gen, state.sched, sim_dir, start, n, rng, dsb_targets=dsb,
                                     workers=config.workers)


def training_batch(pool, mode, direction, sched, paths, k):
    """Network input ``(index, x)`` and regression target for a minibatch.

    ``k`` indexes the pair (x_k, x_{k+1}) of each selected path; the backward
    net sees ``(k + 1, x_{k+1})``, the forward net ``(k, x_k)``.
    """
    mode = ParamMode(mode)
    s = pool.states
    x_k, x_k1 = s[paths, k], s[paths, k + 1]
    if direction == "backward":
        idx, x_in, endpoint = k + 1, x_k1, s[paths, 0]
    else:
        idx, x_in, endpoint = k, x_k, s[paths, -1]
    if mode is ParamMode.DSB:
        y = pool.dsb_targets[paths, k]
    elif mode is ParamMode.S_DSB:
        y = target_s_dsb(x_k, x_k1, direction)
    elif mode is ParamMode.TR_DSB:
        y = target_tr(endpoint)
    else:
        y = target_fr(sched, idx, x_in, endpoint, direction)
    return idx, x_in, y


class EvalContext:
    """Fixed reference samples and bounds so per-epoch KLs are comparable."""

    def __init__(self, config):
        self.config = config
        rng = np.random.default_rng(np.random.SeedSequence([config.seed, _REF_STREAM]))
        n = config.eval_samples
        self.data_ref = datasets2d.sample(config.data, n, rng)
        self.prior_ref = datasets2d.sample(config.prior, n, rng)
        self.data_bounds = metrics.default_bounds(self.data_ref)
        self.prior_bounds = metrics.default_bounds(self.prior_ref)

    def __call__(self, state):
        c = self.config
        rng = np.random.default_rng(np.random.SeedSequence([c.seed, _EVAL_STREAM]))
        gen = bridge.sample_generation(state.backward, state.sched, c.eval_samples, c.prior, rng,
                                       "backward", workers=c.workers)
        fwd = bridge.sample_generation(state.generator("forward"), state.sched, c.eval_samples,
                                       c.data, rng, "forward", workers=c.workers)
        kl_data = metrics.histogram_kl(gen, self.data_ref, c.eval_bins, self.data_bounds)
        kl_prior = metrics.histogram_kl(fwd, self.prior_ref, c.eval_bins, self.prior_bounds)
        return kl_data, kl_prior


def run_epoch(state, config, e=None, rng=None, log_=None, evaluator=None, t0=None):
    """Train the net of half-epoch ``e`` (default: the next one) for ``config.M`` steps.

    Returns the list of :class:`MetricRecord` emitted; the last one carries
    the end-of-epoch KL values when ``evaluator`` is given.
    """
    e = state.epoch + 1 if e is None else e
    direction = epoch_direction(e)
    rng = rng if rng is not None else _epoch_rng(config.seed, e)
    t0 = time.perf_counter() if t0 is None else t0
    records = []
    pair = epoch_pair(e)

    def emit(loss, with_kl):
        kl = evaluator(state) if (with_kl and evaluator) else (float("nan"), float("nan"))
        rec = metrics.MetricRecord(pair, direction, state.iteration, loss, kl[0], kl[1],
                                   1000.0 * (time.perf_counter() - t0))
        records.append(rec)
        if log_ is not None:
            log_.append(rec)
        return rec

    learner = state.trainable(direction)
    frozen = state.backward if direction == "forward" else state.generator("forward")
    frozen_fp = frozen.net.fingerprint() if frozen.net is not None else "reference"
    N = state.sched.N
    refresh = 1 if config.exact_cache else max(1, config.cache_refresh)
    pool = None
    window = []
    best, stale = np.inf, 0
    for it in range(config.M):
        if it % refresh == 0:
            pool = _make_pool(state, config, direction, rng)
            if pool.fingerprint != frozen_fp:
                raise RuntimeError("trajectory cache was not produced by the frozen opposite net")
            state.cache_fingerprint = pool.fingerprint
        paths = rng.integers(0, len(pool), size=config.batch)
        k = rng.integers(0, N, size=config.batch)
        idx, x_in, y = training_batch(pool, config.mode, direction, state.sched, paths, k)
        pred, cache = learner.forward_train(idx, x_in)
        loss, g = loss_mse(pred, y)
        if not np.isfinite(loss):
            raise NumericalError(f"non-finite loss at {direction} epoch {pair}, step {it}")
        adam_step(learner.net, learner.backward(idx, x_in, g, cache=cache),
                  lr=learning_rate(config.lr, it, config.M, config.lr_schedule),
                  beta1=config.beta1, beta2=config.beta2, eps=config.eps)
        state.iteration += 1
        window.append(loss)
        done = it + 1 == config.M
        if config.log_every and (it + 1) % config.log_every == 0 and not done:
            emit(float(np.mean(window)), config.eval_every and (it + 1) % config.eval_every == 0)
        if config.plateau_window and (it + 1) % config.plateau_window == 0:
            avg = float(np.mean(window[-config.plateau_window:]))
            if avg < best * (1.0 - 1e-2):
                best, stale = avg, 0
            else:
                stale += 1
            if stale >= config.plateau_patience:
                log.info("loss plateau after %d steps, ending epoch early", it + 1)
                state.stopped_early = True
                break
        if config.log_every and (it + 1) % config.log_every == 0 and not done:
            window = window[-config.plateau_window:] if config.plateau_window else []
    if frozen.net is not None and frozen.net.fingerprint() != frozen_fp:
        raise RuntimeError("frozen net changed during the epoch")
    if direction == "forward":
        state.forward_ready = True
    state.epoch = e
    emit(float(np.mean(window)) if window else float("nan"), True)
    return records


# -- checkpoints --------------------------------------------------------------


def checkpoint_path(run_dir, e):
    return os.path.join(run_dir, f"epoch_{epoch_pair(e)}_{epoch_direction(e)}.ckpt")


def save_checkpoint(path, state, config, records=()):
    arrays = {}
    arrays.update(state.backward.net.to_arrays("backward/"))
    arrays.update(state.forward.net.to_arrays("forward/"))
    meta = {
        "kind": "bridge",
        "config": config.to_dict(),
        "architecture": state.backward.net.architecture(),
        "forward_architecture": state.forward.net.architecture(),
        "heads": {"backward": state.backward.head_dict(), "forward": state.forward.head_dict()},
        "forward_ready": state.forward_ready,
        "epoch": state.epoch,
        "iteration": state.iteration,
        "fingerprints": {"backward": state.backward.net.fingerprint(),
                         "forward": state.forward.net.fingerprint()},
        "metrics": [r.row() for r in records],
    }
    tmp = path + ".tmp"
    save_arrays(tmp, arrays, meta)
    os.replace(tmp, path)


def load_checkpoint(path):
    """Return ``(state, config, metric rows)`` from a bridge checkpoint."""
    arrays, meta = load_arrays(path)
    if meta.get("kind") != "bridge":
        raise ValueError(f"{path}: not a bridge checkpoint")
    config = TrainConfig.from_dict(meta["config"])
    sched = schedule_from_spec(config.schedule)
    bnet = DriftNet.from_arrays(meta["architecture"], arrays, "backward/")
    fnet = DriftNet.from_arrays(meta["forward_architecture"], arrays, "forward/")
    state = EpochState(Predictor.from_head_dict(bnet, meta["heads"]["backward"]),
                       Predictor.from_head_dict(fnet, meta["heads"]["forward"]),
                       sched, meta["forward_ready"], meta["epoch"], meta["iteration"])
    return state, config, meta["metrics"]


def latest_checkpoint(run_dir):
    best = None
    for p in glob.glob(os.path.join(run_dir, "epoch_*_*.ckpt")):
        m = _CKPT_RE.search(p)
        if m:
            e = 2 * int(m.group(1)) - (1 if m.group(2) == "backward" else 0)
            if best is None or e > best[0]:
                best = (e, p)
    return best[1] if best else None


def _record_from_row(row):
    return metrics.MetricRecord(int(row[0]), row[1], int(row[2]), float(row[3]), float(row[4]),
                                float(row[5]), float(row[6]))


# -- outer loop ---------------------------------------------------------------


@dataclass
class RunResult:
    state: EpochState
    records: list
    checkpoints: list
    metrics_path: str | None

    def epoch_kl(self, key="kl_data", direction="backward"):
        """End-of-half-epoch KL values, one per pair, for the given direction."""
        out = {}
        for r in self.records:
            if r.direction == direction and np.isfinite(getattr(r, key)):
                out[r.epoch] = getattr(r, key)
        return [out[n] for n in sorted(out)]


def run_ipf(config, run_dir=None, resume=False, on_epoch=None):
    """Alternate backward/forward epochs ``config.L`` times.

    With ``run_dir`` set, ``epoch_{n}_{direction}.ckpt`` is written after
    every half-epoch and ``metrics.csv`` mirrors the metric records; with
    ``resume`` the run continues after the newest checkpoint found there.
    ``on_epoch(record)`` is called with each end-of-epoch record.
    """
    config.validate()
    sched = schedule_from_spec(config.schedule)
    records, ckpts = [], []
    state = None
    if resume and run_dir:
        path = latest_checkpoint(run_dir)
        if path is not None:
            state, saved, rows = load_checkpoint(path)
            if saved.to_dict() != config.to_dict():
                raise ConfigError(f"{path} was written with a different config")
            records = [_record_from_row(r) for r in rows]
            ckpts = [checkpoint_path(run_dir, e) for e in range(1, state.epoch + 1)
                     if os.path.exists(checkpoint_path(run_dir, e))]
            log.info("resuming after half-epoch %d from %s", state.epoch, path)
    metrics_path = None
    log_ = metrics.MetricLog()
    if run_dir:
        os.makedirs(run_dir, exist_ok=True)
        metrics_path = os.path.join(run_dir, "metrics.csv")
        log_ = metrics.MetricLog(metrics_path)
    for r in records:
        log_.append(r)
    evaluator = EvalContext(config)
    t0 = time.perf_counter()

    def finish(e):
        if on_epoch is not None:
            on_epoch(records[-1])
        if run_dir:
            path = checkpoint_path(run_dir, e)
            save_checkpoint(path, state, config, records)
            ckpts.append(path)

    if state is None:
        bwd, fwd, ready = resolve_init(config.init, config.checkpoints, config.mode, sched, config)
        state = EpochState(bwd, fwd, sched, forward_ready=ready)
        if config.init != "scratch":
            # the loaded backward net stands in for the first backward epoch
            state.epoch = 1
            kl = evaluator(state)
            rec = metrics.MetricRecord(1, "backward", 0, float("nan"), kl[0], kl[1],
                                       1000.0 * (time.perf_counter() - t0))
            records.append(rec)
            log_.append(rec)
            finish(1)
    for e in range(state.epoch + 1, 2 * config.L + 1):
        recs = run_epoch(state, config, e, _epoch_rng(config.seed, e), log_, evaluator, t0)
        records.extend(recs)
        rec = recs[-1]
        log.info("epoch %d %s: loss=%.4g kl_data=%.4f kl_prior=%.4f", rec.epoch, rec.direction,
                 rec.loss, rec.kl_data, rec.kl_prior)
        finish(e)
    return RunResult(state, records, ckpts, metrics_path)


def predictor_from_checkpoint(path, direction):
    """Load one direction's predictor from a bridge or pretrained checkpoint."""
    arrays, meta = load_arrays(path)
    if meta.get("kind") == "bridge":
        state, _, _ = load_checkpoint(path)
        if direction == "forward" and not state.forward_ready:
            return reference_predictor(state.sched.N), state.sched, meta
        return state.trainable(direction), state.sched, meta
    if meta.get("pretrain_mode") in ("ddpm", "fm"):
        sched = schedule_from_spec(ScheduleSpec(**meta["schedule"]))
        net = DriftNet.from_arrays(meta["architecture"], arrays)
        mode = "s-dsb"
        pred = convert_pretrained_to_bridge(net, meta["pretrain_mode"], mode, direction, sched,
                                            coeffs=meta["coeffs"], reversed_roles=meta["reversed"])
        return pred, sched, meta
    raise ValueError(f"{path}: unrecognized checkpoint")
