"""Command-line front end: ``python -m manifold_fp <subcommand>``.

Exit status is 0 on success, 2 for configuration or input errors and 3 for
numerical failures. ``MANIFOLD_FP_THREADS`` caps the BLAS thread pool.
"""

import argparse
import contextlib
import os
import sys

from threadpoolctl import threadpool_limits

from .config import ConfigError, ExperimentConfig, preset
from .pipeline import StageError, convergence_study, run_experiment

__all__ = ["main", "build_parser"]

THREADS_ENV = "MANIFOLD_FP_THREADS"

# flag -> dotted config field
_FLAGS = {
    "kind": ("manifold.kind", str),
    "input": ("manifold.input", str),
    "n": ("manifold.n", int),
    "p": ("manifold.p", int),
    "scale": ("manifold.scale", float),
    "seed": ("manifold.seed", int),
    "sampler": ("manifold.sampler", str),
    "rotation_seed": ("manifold.rotation_seed", int),
    "method": ("embedding.method", str),
    "eps": ("embedding.eps", float),
    "alpha": ("embedding.alpha", float),
    "ell": ("embedding.ell", int),
    "r": ("tessellation.r", float),
    "s": ("tessellation.s", float),
    "d": ("tessellation.d", int),
    "threshold": ("tessellation.threshold", str),
    "a1": ("tessellation.a1", float),
    "dt": ("solver.dt", float),
    "steps": ("solver.steps", int),
    "scheme": ("solver.scheme", str),
    "snapshot_every": ("solver.snapshot_every", int),
    "out": ("out", str),
}

_SUBCOMMANDS = {
    "sample": "draw the point cloud",
    "embed": "compute reaction coordinates",
    "tessellate": "approximate Voronoi volumes and faces",
    "solve": "assemble the generator and integrate",
    "gap": "compute the decay factor mu2",
    "converge": "refinement study over several n",
    "all": "run every stage",
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI config file")
    common.add_argument("--preset", help="named preset, e.g. sphere-desk")
    for flag, (_, kind) in _FLAGS.items():
        common.add_argument("--" + flag.replace("_", "-"), dest=flag, type=kind, default=None)

    parser = argparse.ArgumentParser(prog="manifold_fp",
                                     description="Fokker-Planck on point clouds")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in _SUBCOMMANDS.items():
        p = sub.add_parser(name, parents=[common], help=help_text)
        if name == "converge":
            p.add_argument("--levels", type=int, nargs="+", required=True)
            p.add_argument("--T", dest="T", type=float, default=None,
                           help="final time (default dt * steps)")
    return parser


def load_config(args):
    if args.config and args.preset:
        raise ConfigError("give at most one of --config and --preset")
    if args.config:
        cfg = ExperimentConfig.load(args.config)
    elif args.preset:
        cfg = preset(args.preset)
    else:
        cfg = ExperimentConfig()
    overrides = {field: getattr(args, flag) for flag, (field, _) in _FLAGS.items()
                 if getattr(args, flag) is not None}
    return cfg.replace(**overrides).validate()


def _thread_limit():
    value = os.environ.get(THREADS_ENV)
    if not value:
        return contextlib.nullcontext()
    try:
        n = int(value)
        if n < 1:
            raise ValueError
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {value!r}") from None
    return threadpool_limits(limits=n)


def _summary(res):
    d = res.manifest["derived"]
    parts = [f"out={res.out}"]
    for key in ("eps", "total_volume", "n_faces", "mu2", "measured_log_slope"):
        if d.get(key) is not None:
            val = d[key]
            parts.append(f"{key}={val:.6g}" if isinstance(val, float) else f"{key}={val}")
    return " ".join(parts)


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args)
        with _thread_limit():
            if args.command == "converge":
                table = convergence_study(cfg, args.levels, T=args.T)
                for n, r, k, e in table.rows():
                    print(f"n={n} r={r:.4g} steps={k} weighted_l2={e:.6e}")
            else:
                res = run_experiment(cfg, until=args.command)
                print(_summary(res))
    except (ConfigError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except StageError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
