"""``bridgelab`` command line: pretrain, train, sample, eval, plot.

Exit codes: 0 on success, 2 for configuration or input errors, 3 when
training hits non-finite numbers.
"""
from __future__ import annotations

import argparse
import csv
import datetime as dt
import json
import logging
import os
import subprocess
import sys

import numpy as np

from . import __version__, bridge, datasets2d, eval as metrics
from .datasets2d import Dist2D
from .smallnet import NumericalError
from .trainer import ConfigError, PRESETS, load_config, predictor_from_checkpoint, pretrain, run_ipf

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3

log = logging.getLogger("bridgelab")


class UsageError(Exception):
    pass


def _now():
    return dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds")


def _git_stamp():
    try:
        out = subprocess.run(["git", "rev-parse", "--short", "HEAD"], capture_output=True, text=True,
                             timeout=5, cwd=os.path.dirname(__file__))
        return out.stdout.strip() or "unknown"
    except (OSError, subprocess.SubprocessError):
        return "unknown"


def _write_json_atomic(path, obj):
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)


class RunManifest:
    """``manifest.json`` in the run directory: written at start, finalized at the end."""

    def __init__(self, run_dir, command, config):
        self.path = os.path.join(run_dir, "manifest.json")
        self.data = {"command": command, "config": config.to_dict(), "version": __version__,
                     "git": _git_stamp(), "seeds": {"seed": config.seed}, "checkpoints": [],
                     "metrics": None, "started": _now(), "finished": None, "status": "running"}
        _write_json_atomic(self.path, self.data)

    def finish(self, status, checkpoints=(), metrics_path=None, **extra):
        missing = [p for p in [*checkpoints, metrics_path] if p and not os.path.exists(p)]
        if status == "ok" and missing:
            raise RuntimeError(f"run artifacts missing: {missing}")
        self.data.update(status=status, checkpoints=list(checkpoints), metrics=metrics_path,
                         finished=_now(), **extra)
        _write_json_atomic(self.path, self.data)


def _resolve(args):
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "workers", None) is not None:
        overrides["workers"] = args.workers
    if args.config is not None and not os.path.exists(args.config):
        raise UsageError(f"config file not found: {args.config}")
    return load_config(args.config, args.preset, overrides)


def _run_dir(args, config):
    if args.out:
        return args.out
    root = os.environ.get("BRIDGELAB_RUN_DIR", "runs")
    return os.path.join(root, config.name)


# -- commands -----------------------------------------------------------------


def cmd_pretrain(args):
    config = _resolve(args)
    if args.dry_run:
        print(json.dumps(config.to_dict(), indent=2, sort_keys=True))
        return EXIT_OK
    run_dir = _run_dir(args, config)
    os.makedirs(run_dir, exist_ok=True)
    _write_json_atomic(os.path.join(run_dir, "config.json"), config.to_dict())
    manifest = RunManifest(run_dir, "pretrain", config)
    out = os.path.join(run_dir, os.path.basename(config.pretrain.out))
    try:
        _, meta = pretrain(config, out=out)
    except NumericalError:
        manifest.finish("diverged", [out] if os.path.exists(out) else [])
        raise
    manifest.finish("ok", [out], final_loss=meta["final_loss"])
    print(json.dumps({"checkpoint": out, "final_loss": meta["final_loss"]}))
    return EXIT_OK


def cmd_train(args):
    config = _resolve(args)
    if args.dry_run:
        print(json.dumps(config.to_dict(), indent=2, sort_keys=True))
        return EXIT_OK
    for p in config.checkpoints.values():
        if p and not os.path.exists(p):
            raise UsageError(f"checkpoint not found: {p}")
    run_dir = _run_dir(args, config)
    os.makedirs(run_dir, exist_ok=True)
    _write_json_atomic(os.path.join(run_dir, "config.json"), config.to_dict())
    manifest = RunManifest(run_dir, "train", config)

    def report(rec):
        print(json.dumps({"epoch": rec.epoch, "direction": rec.direction, "iter": rec.iter,
                          "loss": rec.loss, "kl_data": rec.kl_data, "kl_prior": rec.kl_prior}),
              flush=True)

    try:
        result = run_ipf(config, run_dir, resume=args.resume, on_epoch=report)
    except NumericalError:
        manifest.finish("diverged")
        raise
    manifest.finish("ok", result.checkpoints, result.metrics_path)
    return EXIT_OK


def _endpoint_dist(meta, direction):
    """Distribution whose coordinates the endpoints of ``direction`` live in."""
    cfg = meta.get("config", meta)
    key = "data" if direction == "backward" else "prior"
    if meta.get("pretrain_mode") == "ddpm" and direction == "forward":
        return Dist2D("gaussian")
    return Dist2D.from_dict(cfg[key])


def _start_dist(meta, direction):
    other = "forward" if direction == "backward" else "backward"
    return _endpoint_dist(meta, other)


def cmd_sample(args):
    if not os.path.exists(args.checkpoint):
        raise UsageError(f"checkpoint not found: {args.checkpoint}")
    if args.n < 0:
        raise UsageError("--n must be >= 0")
    try:
        pred, sched, meta = predictor_from_checkpoint(args.checkpoint, args.direction)
    except (ValueError, KeyError) as exc:
        raise UsageError(f"incompatible checkpoint: {exc}") from exc
    start = _start_dist(meta, args.direction)
    target = _endpoint_dist(meta, args.direction)
    rng = np.random.default_rng(args.seed)
    traj = bridge.cache_trajectories(pred, sched, args.direction, start, args.n, rng,
                                     workers=args.workers)
    out_dir = os.path.dirname(os.path.abspath(args.out))
    os.makedirs(out_dir, exist_ok=True)
    if args.trajectories:
        bridge.write_trajectories_csv(args.out, traj.states)
        return EXIT_OK
    end = traj.states[:, 0] if args.direction == "backward" else traj.states[:, -1]
    datasets2d.write_samples_csv(args.out, datasets2d.to_raw(target, end))
    if args.n:
        ref = datasets2d.sample(target, max(args.n, 1000), np.random.default_rng(args.seed + 1))
        kl = metrics.histogram_kl(end, ref)
        print(json.dumps({"kl_vs_target": kl, "target": target.kind}), file=sys.stderr)
    return EXIT_OK


def _read_samples(path):
    try:
        return datasets2d.read_samples_csv(path)
    except (ValueError, IndexError) as exc:
        raise UsageError(f"malformed samples CSV {path}: {exc}") from exc


def _load_reference(ref, n, seed):
    """A samples CSV path, or ``name`` / ``name:{json options}`` of a dataset."""
    if os.path.exists(ref):
        return _read_samples(ref)
    name, _, opts = ref.partition(":")
    if name not in datasets2d.KINDS:
        raise UsageError(f"reference not found: {ref!r} is neither a file nor a dataset name")
    try:
        dist = Dist2D.from_dict({"kind": name, **(json.loads(opts) if opts else {})})
    except (ValueError, TypeError) as exc:
        raise UsageError(f"bad reference options {opts!r}: {exc}") from exc
    return datasets2d.sample(dist, n, np.random.default_rng(seed))


def cmd_eval(args):
    if not os.path.exists(args.samples):
        raise UsageError(f"samples file not found: {args.samples}")
    x = _read_samples(args.samples)
    if len(x) == 0:
        raise UsageError(f"{args.samples} contains no samples")
    ref = _load_reference(args.reference, args.n_ref or len(x), args.seed)
    report = {
        "samples": args.samples, "reference": args.reference, "n": int(len(x)),
        "n_ref": int(len(ref)), "bins": args.bins,
        "kl": metrics.histogram_kl(x, ref, bins=args.bins),
        "sliced_w2": metrics.wasserstein2_1d_sliced(x, ref, rng=np.random.default_rng(args.seed)),
    }
    line = json.dumps(report, sort_keys=True)
    print(line)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(line + "\n")
    return EXIT_OK


def _schema(path):
    with open(path, newline="") as fh:
        header = next(csv.reader(fh), None) or []
    header = [h.strip() for h in header]
    if set(metrics.METRIC_COLUMNS) <= set(header):
        return "metrics"
    if header[-2:] == ["x", "y"]:
        return "samples"
    raise UsageError(f"{path}: unknown input schema (header {header})")


def _run_name(path):
    parent = os.path.basename(os.path.dirname(os.path.abspath(path)))
    return parent or os.path.splitext(os.path.basename(path))[0]


def cmd_plot(args):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    for p in args.inputs:
        if not os.path.exists(p):
            raise UsageError(f"input not found: {p}")
    schemas = {_schema(p) for p in args.inputs}
    if len(schemas) > 1:
        raise UsageError("cannot mix metrics and samples files in one plot")
    schema = schemas.pop()
    fig, ax = plt.subplots(figsize=(5, 4), dpi=100)
    if schema == "samples":
        for p in args.inputs:
            x = _read_samples(p)
            ax.scatter(x[:, 0], x[:, 1], s=1, alpha=0.4, label=_run_name(p), rasterized=True)
        ax.set_aspect("equal")
    else:
        for p in args.inputs:
            recs = [r for r in metrics.read_metrics_csv(p) if np.isfinite(r.kl_data)
                    and r.direction == "backward"]
            ax.plot([r.iter for r in recs], [r.kl_data for r in recs], marker="o", label=_run_name(p))
        ax.set_xlabel("iteration")
        ax.set_ylabel("KL(generated || data)")
    if len(args.inputs) > 1:
        ax.legend()
    fig.tight_layout()
    fig.savefig(args.out, format="png", metadata={"Software": None})
    plt.close(fig)
    return EXIT_OK


# -- parser -------------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="bridgelab", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def run_flags(sp):
        sp.add_argument("--config", help="JSON config file")
        sp.add_argument("--preset", choices=sorted(PRESETS))
        sp.add_argument("--seed", type=int)
        sp.add_argument("--workers", type=int)
        sp.add_argument("--dry-run", action="store_true", help="print the resolved config and exit")
        sp.add_argument("--out", help="run directory (default $BRIDGELAB_RUN_DIR/<name>)")

    sp = sub.add_parser("pretrain", help="train a single-round ddpm / flow-matching model")
    run_flags(sp)
    sp.set_defaults(func=cmd_pretrain)

    sp = sub.add_parser("train", help="alternating bridge training")
    run_flags(sp)
    sp.add_argument("--resume", action="store_true", help="continue after the newest checkpoint")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("sample", help="run a trained chain and write samples as CSV")
    sp.add_argument("checkpoint")
    sp.add_argument("--direction", choices=("backward", "forward"), default="backward")
    sp.add_argument("--n", type=int, default=10000)
    sp.add_argument("--out", required=True)
    sp.add_argument("--trajectories", action="store_true", help="write every state of every path")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--workers", type=int, default=1)
    sp.set_defaults(func=cmd_sample)

    sp = sub.add_parser("eval", help="histogram KL and sliced W2 against a reference")
    sp.add_argument("samples")
    sp.add_argument("reference", help="samples CSV, or a dataset name such as 'checkerboard'")
    sp.add_argument("--bins", type=int, default=64)
    sp.add_argument("--n-ref", type=int, default=None,
                    help="reference draws for a dataset name; defaults to the sample count, "
                         "since unequal sizes bias the smoothed histogram KL")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", help="also write the JSON report here")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("plot", help="scatter samples or KL curves to PNG")
    sp.add_argument("inputs", nargs="+")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_plot)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
