"""Command-line front end: ``singmfg run | list | validate-config``.

Exit status is 0 when every check of the experiment passes, 1 when a check
fails and 2 for configuration or usage errors.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
import warnings

from .config import ExperimentConfig, config_from_dict, load_config
from .errors import ConfigError, SingMFGError
from .experiments import list_experiments, run_experiment

log = logging.getLogger("singmfg")


def _set_threads(n):
    import numba

    # numba probes the system TBB when it first starts its pool; the fallback layer is fine
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message="The TBB threading layer")
        numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))


def _resolve_config(args) -> ExperimentConfig:
    if args.config:
        cfg = load_config(args.config)
        if args.experiment and args.experiment != cfg.experiment:
            raise ConfigError(f"config runs {cfg.experiment!r}, not {args.experiment!r}")
    elif args.experiment:
        cfg = config_from_dict({"schema_version": 1, "experiment": args.experiment, "seed": 0})
    else:
        raise ConfigError("give an experiment name or --config")
    if args.seed_override is not None:
        cfg = cfg.model_copy(update={"seed": int(args.seed_override)})
    return cfg


def cmd_run(args) -> int:
    cfg = _resolve_config(args)
    out = args.out or cfg.output_dir or os.path.join("runs", f"{cfg.experiment}-seed{cfg.seed}")
    _set_threads(args.threads)
    log.info("running %s (seed %d) into %s", cfg.experiment, cfg.seed, out)
    res = run_experiment(cfg.experiment, cfg.params, cfg.seed, out, args.threads)
    for c in res.checks:
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.name}: {c.value!r} {c.op} {c.bound!r}")
    print(f"{cfg.experiment}: {'passed' if res.passed else 'FAILED'} ({res.elapsed:.1f} s) -> {out}")
    return 0 if res.passed else 1


def cmd_list(args) -> int:
    for name, desc in list_experiments():
        print(f"{name:26s} {desc}")
    return 0


def cmd_validate(args) -> int:
    cfg = load_config(args.config)
    print(f"ok: {cfg.experiment} (schema {cfg.schema_version}, seed {cfg.seed})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="singmfg", description="Singular-control mean-field game experiments")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one named experiment")
    run.add_argument("experiment", nargs="?", help="experiment name (defaults apply when no config is given)")
    run.add_argument("--config", help="YAML experiment config")
    run.add_argument("--out", help="run directory (default: config output_dir or runs/<name>-seed<seed>)")
    run.add_argument("--threads", type=int, default=os.cpu_count() or 1, help="worker threads")
    run.add_argument("--seed-override", type=int, help="replace the config seed")
    run.set_defaults(fn=cmd_run)

    ls = sub.add_parser("list", help="list the experiment catalogue")
    ls.set_defaults(fn=cmd_list)

    val = sub.add_parser("validate-config", help="validate a config without running it")
    val.add_argument("--config", required=True)
    val.set_defaults(fn=cmd_validate)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.fn(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except SingMFGError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"cannot write output: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
