"""Command-line entry point: ``hetpref <subcommand> --config cfg.json --output dir``.

Exit codes: 0 success, 1 invalid input, 2 oracle-suite failure.
"""

from __future__ import annotations

import argparse
import math
import sys
from dataclasses import replace
from pathlib import Path

from . import harness
from .datagen import PanelSpec, generate, save_dataset

EXIT_OK, EXIT_INVALID, EXIT_ORACLE = 0, 1, 2

SUBCOMMANDS = {
    "compare": "estimator_comparison",
    "rate": "rate_sweep",
    "scale": "scale_sweep",
    "em": "em_comparison",
    "oracles": "oracle_suite",
}


def _load(args, experiment=None) -> harness.ExperimentConfig:
    if args.config and args.preset:
        raise harness.ConfigError("give --config or --preset, not both")
    if args.config:
        cfg = harness.load_config(args.config)
    elif args.preset:
        cfg = harness.preset(args.preset)
    else:
        raise harness.ConfigError("a --config file or --preset name is required")
    if experiment is not None and cfg.experiment != experiment:
        cfg = replace(cfg, experiment=experiment)
    return cfg


def _output(args, cfg, default) -> Path:
    return Path(args.output or cfg.output_dir or default)


def cmd_sweep(args) -> int:
    experiment = SUBCOMMANDS[args.command]
    cfg = _load(args, experiment)
    out = _output(args, cfg, Path("results") / experiment)
    if experiment == "oracle_suite":
        report = harness.run_oracle_suite(cfg, output_dir=out)
        for check in report["checks"]:
            print(f"{'PASS' if check['passed'] else 'FAIL'}  {check['name']}")
        print(f"report: {out / 'oracle_report.json'}")
        return EXIT_OK if report["passed"] else EXIT_ORACLE
    result = harness.run_experiment(cfg, workers=args.workers, output_dir=out)
    if experiment == "rate_sweep":
        print(f"slope {result.slope:.4f}  95% CI [{result.ci_low:.4f}, {result.ci_high:.4f}]")
        rows = result.rows
    else:
        rows = result
    if experiment == "scale_sweep":
        for s in harness.summarize_scales(rows):
            print(f"scale {s.scale:g}: rlhf {s.rlhf_angle:.2f} deg, sign {s.sign_angle:.2f} deg, "
                  f"delta {100 * s.relative_improvement:.1f}%")
    else:
        for est in sorted({r.estimator for r in rows}):
            means = harness.mean_by(rows, "n", est)
            print(est + ": " + ", ".join(f"n={n} {a:.2f} deg" for n, a in means.items()))
    failed = sum(math.isnan(r.angle_degrees) for r in rows)
    if failed:
        print(f"warning: {failed} fits failed (NaN rows)", file=sys.stderr)
    print(f"results: {out / 'results.csv'}")
    return EXIT_OK


def cmd_plot(args) -> int:
    from .plots import emit_plots

    if args.results:
        results = Path(args.results)
    else:
        cfg = _load(args)
        if cfg.output_dir is None:
            raise harness.ConfigError("config has no output_dir; pass --results")
        results = Path(cfg.output_dir) / "results.csv"
    out = Path(args.output) if args.output else results.parent
    for path in emit_plots(results, out):
        print(path)
    return EXIT_OK


def cmd_gen_data(args) -> int:
    cfg = _load(args)
    n = args.n or max(cfg.sample_sizes)
    panel = None
    if cfg.pairs_per_user:
        if n % cfg.pairs_per_user:
            raise harness.ConfigError("n must be a multiple of pairs_per_user")
        panel = PanelSpec(n // cfg.pairs_per_user, cfg.pairs_per_user)
    out = _output(args, cfg, Path("results") / "data")
    out.mkdir(parents=True, exist_ok=True)
    ds = generate(cfg.population, cfg.diffs, n, panel=panel, seed=cfg.base_seed)
    path = out / "dataset.jsonl"
    save_dataset(ds, path)
    print(path)
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    # Usage errors are validation errors (exit 1); 2 is reserved for oracle failures.
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hetpref", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("--config", help="JSON experiment config")
        p.add_argument("--preset", choices=harness.PRESETS, help="named built-in config")
        p.add_argument("--output", help="output directory (default: config output_dir)")
        p.add_argument("--workers", type=int, default=None,
                       help=f"parallel workers (default: ${harness.WORKERS_ENV} or 1)")

    helps = {
        "compare": "RLHF vs Sign across sample sizes",
        "rate": "Sign error rate across sample sizes, with fitted slope",
        "scale": "RLHF vs Sign across heterogeneity scales",
        "em": "RLHF, Sign and EM on panel data",
        "oracles": "closed-form and population-level checks",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        common(p)
        p.set_defaults(func=cmd_sweep)
    p = sub.add_parser("plot", help="SVG charts from a results CSV")
    common(p)
    p.add_argument("--results", help="results.csv to plot")
    p.set_defaults(func=cmd_plot)
    p = sub.add_parser("gen-data", help="write one generated dataset as JSON lines")
    common(p)
    p.add_argument("--n", type=int, default=None, help="number of records (default: largest sample size)")
    p.set_defaults(func=cmd_gen_data)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.workers is not None and args.workers < 1:
        print("error: --workers must be >= 1", file=sys.stderr)
        return EXIT_INVALID
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        # ConfigError, ResultsFormatError and DatasetFormatError are ValueErrors.
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
