"""Command-line interface.

One entry point with subcommands (also installed as individual console
scripts): hf-evolve, vlasov-evolve, wigner, semiclassical-rate,
meanfield-compare, ineq-suite, regularity-report, run.
"""

from __future__ import annotations

import argparse
import sys

from .config import ConfigError, ExperimentConfig

_CONFIG_EXPERIMENTS = {
    "hf-evolve": "hf_evolve",
    "vlasov-evolve": "vlasov_evolve",
    "semiclassical-rate": "semiclassical_rate",
    "meanfield-compare": "meanfield_compare",
    "regularity-report": "regularity_report",
}


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sclab", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    for name in _CONFIG_EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {name} experiment from a config file")
        p.add_argument("--config", required=True)
        p.add_argument("--out", required=True)

    p = sub.add_parser("run", help="dispatch on the config's experiment key")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("wigner", help="Wigner-transform an operator dump")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("ineq-suite", help="randomized operator-inequality suite")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trials", type=int, default=0,
                   help="total trial budget (0 = per-check defaults)")
    p.add_argument("--out", default="report.csv")
    return ap


def _run_config_command(command: str, config_path: str, outdir: str) -> int:
    from .experiments import run

    try:
        cfg = ExperimentConfig.load(config_path)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}")
        return 2
    if command != "run":
        expected = _CONFIG_EXPERIMENTS[command]
        if cfg["experiment"] != expected:
            print(f"config error: experiment key is {cfg['experiment']!r}, "
                  f"but the {command} command requires {expected!r}")
            return 2
    return run(config_path, outdir)


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command in _CONFIG_EXPERIMENTS or args.command == "run":
        return _run_config_command(args.command, args.config, args.out)
    if args.command == "wigner":
        from .operators import DensityOperator, read_operator
        from .vlasov import write_field
        from .wigner import wigner_transform

        op = read_operator(args.infile)
        field = wigner_transform(DensityOperator(op.grid, op.kernel))
        write_field(args.out, field)
        return 0
    if args.command == "ineq-suite":
        from .inequalities import DEFAULT_TRIALS, run_suite, suite_csv

        trials = None
        if args.trials:
            total = sum(DEFAULT_TRIALS.values())
            trials = {k: max(1, int(round(v * args.trials / total)))
                      for k, v in DEFAULT_TRIALS.items()}
        reports = run_suite(seed=args.seed, trials=trials)
        csv = suite_csv(reports)
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(csv)
        bad = [r for r in reports if not r.passed]
        for r in reports:
            status = "ok" if r.passed else "VIOLATED"
            print(f"{r.name:24s} trials={r.trials:<6d} violations={r.violations:<4d} "
                  f"worst_margin={r.worst_margin:+.3e}  {status}")
        return 1 if bad else 0
    raise AssertionError("unhandled command")


def _preset(command: str):
    def entry() -> int:
        return main([command] + sys.argv[1:])
    return entry


main_hf_evolve = _preset("hf-evolve")
main_vlasov_evolve = _preset("vlasov-evolve")
main_wigner = _preset("wigner")
main_semiclassical_rate = _preset("semiclassical-rate")
main_meanfield_compare = _preset("meanfield-compare")
main_ineq_suite = _preset("ineq-suite")
main_regularity_report = _preset("regularity-report")


if __name__ == "__main__":
    sys.exit(main())
