"""Command-line interface.

Subcommands:

- ``simulate``    draw a two-environment dataset from a scenario TOML
- ``estimate``    run an estimator (or the auto pipeline) on a dataset CSV
- ``detect``      classify the changed mechanism for a dataset CSV
- ``experiment``  run a Monte Carlo sweep from a config TOML
- ``oracle``      evaluate an estimator on exact population moments

Successful runs print JSON to stdout and exit 0.  Failures print a
machine-readable ``{"error": ..., "message": ...}`` object to stderr and
exit nonzero without partial output.
"""

from __future__ import annotations

import argparse
import json
import sys

from .detector import detect_source, estimate_auto
from .empirical import EnvPairDataset
from .estimators import EstimationError, EstimatorConfig, METHODS
from .harness import ExperimentConfig, run_experiment, simulate
from .model import scenario_from_toml_path

CHANGE_TO_METHOD = {
    "eps_t": "alg1",
    "eps_u": "alg2",
    "gamma": "alg3",
    "alpha": "alg4",
}


class CliError(Exception):
    def __init__(self, message: str, code: int = 2):
        super().__init__(message)
        self.code = code


def _config_from_args(args) -> EstimatorConfig:
    return EstimatorConfig(
        z=getattr(args, "z", 4.0),
        max_order=getattr(args, "max_order", 8),
        ks_alpha=getattr(args, "ks_alpha", 0.01),
    )


def _load_scenario(path):
    try:
        return scenario_from_toml_path(path)
    except FileNotFoundError:
        raise CliError(f"scenario file not found: {path}") from None
    except ValueError as exc:
        raise CliError(f"bad scenario file {path}: {exc}") from None


def _load_dataset(path) -> EnvPairDataset:
    try:
        return EnvPairDataset.from_csv(path)
    except FileNotFoundError:
        raise CliError(f"input file not found: {path}") from None
    except ValueError as exc:
        raise CliError(f"bad dataset file {path}: {exc}") from None


def _cmd_simulate(args) -> dict:
    scenario = _load_scenario(args.scenario)
    if args.seed < 0:
        raise CliError("seed must be a non-negative integer")
    data = simulate(scenario, args.n, args.seed)
    data.to_csv(args.out)
    return {
        "written": args.out,
        "n_per_env": args.n,
        "seed": args.seed,
        "beta_true": scenario.beta,
    }


def _cmd_estimate(args) -> dict:
    data = _load_dataset(args.input)
    cfg = _config_from_args(args)
    if args.change == "auto":
        report = estimate_auto(data, cfg)
    else:
        report = METHODS[CHANGE_TO_METHOD[args.change]](data, cfg)
    return report.to_dict()


def _cmd_detect(args) -> dict:
    data = _load_dataset(args.input)
    return detect_source(data, _config_from_args(args)).to_dict()


def _cmd_experiment(args) -> dict:
    try:
        cfg = ExperimentConfig.from_toml_path(args.config)
    except FileNotFoundError:
        raise CliError(f"config file not found: {args.config}") from None
    except ValueError as exc:
        raise CliError(f"bad experiment config {args.config}: {exc}") from None
    if args.out is not None:
        cfg = ExperimentConfig(
            template=cfg.template,
            sample_sizes=cfg.sample_sizes,
            replicates=cfg.replicates,
            methods=cfg.methods,
            seed=cfg.seed,
            z_threshold=cfg.z_threshold,
            max_order=cfg.max_order,
            output_path=args.out,
            freeze_params=cfg.freeze_params,
        )
    if not cfg.output_path:
        raise CliError("no output path: pass --out or set output_path in the config")
    rows = run_experiment(cfg)
    n_errors = sum(1 for r in rows if r["error"])
    return {"written": cfg.output_path, "rows": len(rows), "rows_with_error": n_errors}


def _cmd_oracle(args) -> dict:
    scenario = _load_scenario(args.scenario)
    change = args.change or scenario.change.value
    if change not in CHANGE_TO_METHOD:
        raise CliError(
            f"no estimator matches change {change!r}; pass --change among "
            f"{sorted(CHANGE_TO_METHOD)}"
        )
    cfg = _config_from_args(args)
    report = METHODS[CHANGE_TO_METHOD[change]](scenario, cfg)
    beta_hat = float(report.beta_hat)
    return {
        "beta_true": scenario.beta,
        "beta_hat": beta_hat,
        "abs_error": abs(beta_hat - scenario.beta),
        "report": report.to_dict(),
    }


def _add_threshold_flags(parser) -> None:
    parser.add_argument("--z", type=float, default=4.0,
                        help="z threshold for moment-difference decisions")
    parser.add_argument("--max-order", dest="max_order", type=int, default=8,
                        help="cap for moment/cumulant order searches")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="moment-ident",
        description="Treatment-effect identification from two-environment data",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="draw a dataset from a scenario TOML")
    p.add_argument("--scenario", required=True, help="scenario TOML file")
    p.add_argument("--n", type=int, required=True, help="samples per environment")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output dataset CSV")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("estimate", help="estimate the effect from a dataset CSV")
    p.add_argument("--input", required=True, help="dataset CSV (header env,t,y)")
    p.add_argument("--change", default="auto",
                   choices=["auto", "eps_t", "eps_u", "gamma", "alpha"])
    _add_threshold_flags(p)
    p.set_defaults(func=_cmd_estimate)

    p = sub.add_parser("detect", help="classify which mechanism changed")
    p.add_argument("--input", required=True)
    p.add_argument("--ks-alpha", dest="ks_alpha", type=float, default=0.01)
    _add_threshold_flags(p)
    p.set_defaults(func=_cmd_detect)

    p = sub.add_parser("experiment", help="run a Monte Carlo sweep")
    p.add_argument("--config", required=True, help="experiment TOML file")
    p.add_argument("--out", default=None, help="results CSV (overrides config)")
    p.set_defaults(func=_cmd_experiment)

    p = sub.add_parser("oracle", help="evaluate an estimator on exact population moments")
    p.add_argument("--scenario", required=True)
    p.add_argument("--change", default=None,
                   choices=["eps_t", "eps_u", "gamma", "alpha"])
    _add_threshold_flags(p)
    p.set_defaults(func=_cmd_oracle)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        payload = args.func(args)
    except CliError as exc:
        json.dump({"error": "usage", "message": str(exc)}, sys.stderr)
        sys.stderr.write("\n")
        return exc.code
    except (EstimationError, ValueError) as exc:
        json.dump({"error": type(exc).__name__, "message": str(exc)}, sys.stderr)
        sys.stderr.write("\n")
        return 1
    json.dump(payload, sys.stdout, indent=2, sort_keys=False)
    sys.stdout.write("\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
