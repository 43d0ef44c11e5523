"""Command-line entry point: ``aqmrd run | sweep | compare``.

Exit codes: 0 success, 2 configuration error, 3 invariant violation.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .experiments import (
    CSV_COLUMNS,
    SWEEP_COLUMNS,
    SWEEP_DEFAULT_SOURCES,
    SWEEP_LEVELS,
    CompareError,
    ConfigError,
    atomic_write,
    canonical_key,
    compare_report,
    make_config,
    metadata_lines,
    parse_config_text,
    read_csv,
    render_csv,
    run_scenario,
    sweep,
)
from .sim import InvariantError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INVARIANT = 3

log = logging.getLogger("aqmrd")

# flag -> config key
_FLAGS = {
    "scheme": "disciplines",
    "sources": "n_sources",
    "seeds": "seeds",
    "duration": "duration",
    "max_th": "max_th",
    "min_th": "min_th",
    "buffer": "buffer",
    "wq": "w_q",
    "maxp": "max_p",
    "x_factor": "x_factor",
    "sample_interval": "sample_interval",
    "above_mid_mode": "above_mid_mode",
    "ewma_clock": "ewma_clock",
    "bandwidth": "bandwidth",
    "bottleneck_delay": "bottleneck_delay",
    "out": "out",
    "trace": "trace",
    "jobs": "jobs",
}


class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _add_experiment_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("experiment")
    g.add_argument("--config", help="key=value file; command-line flags override it")
    g.add_argument("--scheme", help="comma-separated disciplines, e.g. red,aqmrd")
    g.add_argument("--sources", help="source counts, e.g. 25,50,75,100")
    g.add_argument("--seeds", help="seed list or range, e.g. 1-5")
    g.add_argument("--duration", help="simulated seconds per run")
    g.add_argument("--max-th", dest="max_th", help="max_th level(s), packets")
    g.add_argument("--min-th", dest="min_th", help="min_th, packets (default max_th/3)")
    g.add_argument("--buffer", help="buffer size(s), packets")
    g.add_argument("--wq", help="EWMA weight w_q")
    g.add_argument("--maxp", help="maximum base drop probability")
    g.add_argument("--x-factor", dest="x_factor", help="mid_th initialisation factor in [1, 3]")
    g.add_argument("--sample-interval", dest="sample_interval", help="EWMA sample clock, seconds")
    g.add_argument("--above-mid-mode", dest="above_mid_mode", choices=["unit_prob", "p2_fallback"])
    g.add_argument("--ewma-clock", dest="ewma_clock", choices=["sample", "arrival"])
    g.add_argument("--bandwidth", help="bottleneck bandwidth, bit/s")
    g.add_argument("--bottleneck-delay", dest="bottleneck_delay", help="bottleneck one-way delay, s")
    g.add_argument("--out", help="output CSV path (stdout if omitted)")
    g.add_argument("--trace", help="directory for per-run (t, q, avg, davg, mid_th) traces")
    g.add_argument("--jobs", help="worker processes (0 = all cores)")


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(prog="aqmrd", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_ArgumentParser)

    p_run = sub.add_parser("run", help="run every (scheme, N, seed, max_th, buffer) combination")
    _add_experiment_flags(p_run)

    p_sweep = sub.add_parser("sweep", help="sweep one parameter, aggregating over seeds")
    p_sweep.add_argument("param", choices=sorted(SWEEP_LEVELS))
    _add_experiment_flags(p_sweep)

    p_cmp = sub.add_parser("compare", help="comparison tables from a run CSV")
    p_cmp.add_argument("csv", help="CSV written by 'aqmrd run'")
    p_cmp.add_argument("--out", help="write the report here instead of stdout")
    return parser


def _layers(args: argparse.Namespace) -> tuple[dict, dict]:
    file_layer: dict = {}
    if args.config:
        try:
            text = Path(args.config).read_text()
        except OSError as exc:
            raise ConfigError("config", str(exc)) from None
        file_layer = parse_config_text(text)
    cli_layer = {
        key: getattr(args, flag)
        for flag, key in _FLAGS.items()
        if getattr(args, flag, None) is not None
    }
    return file_layer, cli_layer


def _emit(text: str, out: str | None) -> None:
    if out:
        atomic_write(out, text)
    else:
        sys.stdout.write(text)


def cmd_run(args: argparse.Namespace) -> int:
    file_layer, cli_layer = _layers(args)
    cfg = make_config(file_layer, cli_layer)
    rows = run_scenario(cfg)
    _emit(render_csv(rows, CSV_COLUMNS, metadata_lines(cfg)), cfg.out)
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    file_layer, cli_layer = _layers(args)
    swept = {"sources": "n_sources", "max_th": "max_th", "buffer": "buffer"}[args.param]
    explicit = {canonical_key(k) for k in (*file_layer, *cli_layer)}
    base = {} if args.param == "sources" else {"n_sources": [SWEEP_DEFAULT_SOURCES]}
    cfg = make_config(base, file_layer, cli_layer)
    levels = getattr(cfg, swept) if swept in explicit else None
    rows = sweep(cfg, args.param, levels)
    meta = metadata_lines(cfg, {"sweep": args.param})
    _emit(render_csv(rows, SWEEP_COLUMNS, meta), cfg.out)
    return EXIT_OK


def cmd_compare(args: argparse.Namespace) -> int:
    try:
        text = Path(args.csv).read_text()
    except OSError as exc:
        raise ConfigError("csv", str(exc)) from None
    report = compare_report(read_csv(text))
    _emit(report, args.out)
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    handler = {"run": cmd_run, "sweep": cmd_sweep, "compare": cmd_compare}[args.command]
    try:
        return handler(args)
    except (ConfigError, CompareError) as exc:
        print(f"aqmrd: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InvariantError as exc:
        print(f"aqmrd: invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
