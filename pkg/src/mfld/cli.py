"""``mfld`` command line: run configs and presets, print bounds, verify oracles."""

from __future__ import annotations

import argparse
import sys
import warnings
from pathlib import Path

from .harness.config import PRESETS, ConfigError, load_config, load_preset
from .harness.runner import bounds_report, build_run, format_bounds, run_experiment


def _parse_overrides(items) -> dict[str, str]:
    out = {}
    for item in items:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _threads_arg(text: str):
    if text == "auto":
        return "auto"
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("threads must be >= 1 or 'auto'")
    return v


def _finish_cfg(cfg, args):
    over = {}
    if getattr(args, "seed", None) is not None:
        over["seed"] = str(args.seed)
    return cfg.with_overrides(over) if over else cfg


def cmd_run(args) -> int:
    cfg = _finish_cfg(load_config(args.config), args)
    return run_experiment(cfg, out_dir=args.out, threads=args.threads, quiet=args.quiet)


def cmd_preset(args) -> int:
    cfg = _finish_cfg(load_preset(args.name, _parse_overrides(args.overrides)), args)
    if args.print_config:
        sys.stdout.write(cfg.to_text())
        return 0
    return run_experiment(cfg, out_dir=args.out, threads=args.threads, quiet=args.quiet)


def cmd_bounds(args) -> int:
    cfg = load_preset(args.config[len("preset:"):]) if args.config.startswith("preset:") else load_config(args.config)
    model, reg, _, _, e0 = build_run(cfg)
    sys.stdout.write(format_bounds(bounds_report(cfg, model, reg, e0)))
    return 0


def cmd_verify(args) -> int:
    from . import verify

    return verify.main()


def cmd_plot_data(args) -> int:
    from .harness.runner import emit_plot_data, read_trace

    trace = read_trace(args.trace)
    sys.stdout.write(emit_plot_data(trace, args.columns))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mfld", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def run_opts(sp):
        sp.add_argument("--seed", type=int, help="override the dynamics seed")
        sp.add_argument("--out", type=Path, help="output directory (overrides out_dir)")
        sp.add_argument("--threads", type=_threads_arg, help="worker threads or 'auto'")
        sp.add_argument("-q", "--quiet", action="store_true", help="no progress lines on stderr")

    sp = sub.add_parser("run", help="run an experiment from a config file")
    sp.add_argument("--config", required=True, type=Path)
    run_opts(sp)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("preset", help="run a shipped preset, optionally with key=value overrides")
    sp.add_argument("name", choices=PRESETS)
    sp.add_argument("overrides", nargs="*", metavar="key=value")
    sp.add_argument("--print-config", action="store_true", help="print the resolved config and exit")
    run_opts(sp)
    sp.set_defaults(func=cmd_preset)

    sp = sub.add_parser("bounds", help="print LSI bounds and theory constants for a config")
    sp.add_argument("--config", required=True, help="config file, or preset:NAME")
    sp.set_defaults(func=cmd_bounds)

    sp = sub.add_parser("verify", help="run the analytic-vs-oracle check suite")
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("plot-data", help="turn trace.csv into gnuplot data blocks")
    sp.add_argument("trace", type=Path)
    sp.add_argument("columns", nargs="+")
    sp.set_defaults(func=cmd_plot_data)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    with warnings.catch_warnings():
        warnings.simplefilter("default")
        warnings.showwarning = lambda msg, cat, *a, **k: print(f"mfld: warning: {msg}", file=sys.stderr)
        try:
            return args.func(args)
        except (ConfigError, KeyError, ValueError, IndexError) as exc:
            msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
            print(f"mfld: error: {msg}", file=sys.stderr)
            return 2
        except OSError as exc:
            print(f"mfld: I/O error: {exc}", file=sys.stderr)
            return 1


if __name__ == "__main__":
    sys.exit(main())
