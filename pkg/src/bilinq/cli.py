"""Command line entry point.

Exit codes: 0 ok, 2 config error, 3 not persistently exciting,
4 solver non-convergence, 5 numerical error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import yaml

from .config import ExperimentConfig, config_from_dict, load_config
from .core import PlantOracle, ltv_matrix
from .errors import BilinqError, ConfigError
from .excitation import is_sufficiently_rich, normalized_min_eigenvalue
from .policy import model_based_provider, model_free_provider, oracle_riccati, solve_frozen
from .registry import example_names
from .runtime import explore, joined_costs, run_model_based, run_online

OUT_ENV = "BILINQ_OUT"
FILE_NAMES = {"model_free": "modelfree.csv", "model_based": "modelbased.csv"}

log = logging.getLogger("bilinq")


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", help="YAML experiment config")
    p.add_argument("--example", choices=example_names(), help="built-in example (used when no --config)")
    p.add_argument("--seed", type=int, default=None, help="exploration signal seed")
    p.add_argument("--out", default=None, help=f"output directory (default ${OUT_ENV} or ./out)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="bilinq", description="Model-free Q-learning for bilinear systems.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", parents=[common], help="execute a config and write the run log")
    run.add_argument("--mode", choices=["model_free", "model_based", "both"], default=None)
    run.add_argument("--horizon", type=int, default=None)
    run.add_argument("--dump-data", action="store_true", help="also write the frozen data matrices")

    cmp_ = sub.add_parser("compare", parents=[common], help="run both modes and join their cost curves")
    cmp_.add_argument("--horizon", type=int, default=None)

    sub.add_parser("check-pe", parents=[common], help="exploration dry run with excitation diagnostics")

    orc = sub.add_parser("oracle", parents=[common], help="frozen-state gains from all three solvers")
    orc.add_argument("--state", required=True, help="comma-separated state, e.g. 1,1,1")

    ex = sub.add_parser("examples", help="list built-in examples or print one as YAML")
    ex.add_argument("name", nargs="?", choices=example_names())
    return parser


def _load(args, **overrides) -> ExperimentConfig:
    if args.config:
        config = load_config(args.config, seed=args.seed)
    elif args.example:
        config = config_from_dict({"plant": {"example": args.example}}, seed=args.seed)
    else:
        raise ConfigError("pass --config FILE or --example NAME")
    changes = {k: v for k, v in overrides.items() if v is not None}
    if changes:
        try:
            config = replace(config, **changes)
        except BilinqError as exc:
            raise ConfigError(str(exc)) from exc
    return config


def _out_dir(args, config: ExperimentConfig) -> Path:
    return Path(args.out or config.out_dir or os.environ.get(OUT_ENV) or "out")


def _run_modes(config: ExperimentConfig, modes) -> dict:
    system = config.plant.build()
    logs = {}
    for mode in modes:
        if mode == "model_free":
            logs[mode] = run_online(PlantOracle(system), config)
        else:
            logs[mode] = run_model_based(system, config)
    return logs


def _write(logs: dict, out: Path, config: ExperimentConfig) -> None:
    out.mkdir(parents=True, exist_ok=True)
    for mode, run_log in logs.items():
        run_log.write_csv(out / FILE_NAMES[mode])
    summary = {mode: run_log.summary for mode, run_log in logs.items()}
    summary["config"] = config.to_dict()
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")


def cmd_run(args) -> int:
    config = _load(args, mode=args.mode, horizon=args.horizon)
    modes = ["model_free", "model_based"] if config.mode == "both" else [config.mode]
    logs = _run_modes(config, modes)
    out = _out_dir(args, config)
    _write(logs, out, config)
    if args.dump_data and "model_free" in logs:
        logs["model_free"].data.dump_csv(out / "data_matrices.csv")
    for mode, run_log in logs.items():
        s = run_log.summary
        print(f"{mode}: steps={s['steps']} cost={s['total_discounted_cost']:.6g} "
              f"final_norm={s['final_state_norm']:.3e} all_converged={s['all_converged']}")
    print(f"wrote {out}")
    return 0


def cmd_compare(args) -> int:
    config = _load(args, horizon=args.horizon)
    logs = _run_modes(config, ["model_free", "model_based"])
    out = _out_dir(args, config)
    _write(logs, out, config)
    with open(out / "costs.csv", "w", newline="") as fh:
        csv.writer(fh, lineterminator="\n").writerows(joined_costs(logs))
    mf, mb = logs["model_free"].total_cost, logs["model_based"].total_cost
    print(f"model_free cost={mf:.6g} model_based cost={mb:.6g}")
    print(f"wrote {out}")
    return 0


def _richness_order(inputs: np.ndarray, tol: float) -> int:
    order = 0
    for p in range(1, len(inputs) + 1):
        if len(inputs) - p + 1 < inputs.shape[1] * p:
            break
        if not is_sufficiently_rich(list(inputs), p, tol=tol):
            break
        order = p
    return order


def cmd_check_pe(args) -> int:
    config = _load(args)
    records, dm, _, _ = explore(PlantOracle(config.plant.build()), config)
    X = 0.5 * (dm.X + dm.X.T)
    ev = np.linalg.eigvalsh(X)
    lam = normalized_min_eigenvalue(X)
    inputs = np.array([r.u for r in records])
    report = {
        "N": config.N,
        "min_eigenvalue_X": float(ev[0]),
        "normalized_min_eigenvalue_X": lam,
        "condition_X": float(ev[-1] / ev[0]) if ev[0] > 0 else float("inf"),
        "pe_tolerance": config.pe_tolerance,
        "persistently_exciting": bool(lam > config.pe_tolerance),
        "richness_order": _richness_order(inputs, config.pe_tolerance),
        "retries": [r.retries for r in records],
    }
    print(json.dumps(report, indent=2))
    return 0 if report["persistently_exciting"] else 3


def cmd_oracle(args) -> int:
    config = _load(args)
    try:
        x = np.array([float(v) for v in args.state.split(",")])
    except ValueError:
        raise ConfigError(f"bad --state {args.state!r}") from None
    if x.shape != (config.n,):
        raise ConfigError(f"--state needs {config.n} components")
    system = config.plant.build()
    _, dm, _, _ = explore(PlantOracle(system), config)
    dm.freeze()
    G = ltv_matrix(system, x)
    free = solve_frozen(model_free_provider(dm, x), config.cost, config.iteration)
    based = solve_frozen(model_based_provider(G), config.cost, config.iteration)
    K_ric, _ = oracle_riccati(G[:, : config.n], G[:, config.n :], config.cost)
    result = {
        "state": x.tolist(),
        "model_free": {"K": free.K.tolist(), "converged": free.converged, "iterations": free.iterations},
        "model_based": {"K": based.K.tolist(), "converged": based.converged, "iterations": based.iterations},
        "riccati": {"K": K_ric.tolist()},
        "max_relative_difference": float(max(
            np.linalg.norm(free.K - K_ric), np.linalg.norm(based.K - K_ric)
        ) / max(np.linalg.norm(K_ric), 1e-300)),
        "condition_X": dm.condition_X,
    }
    print(json.dumps(result, indent=2))
    return 0 if free.converged and based.converged else 4


def cmd_examples(args) -> int:
    if args.name is None:
        for name in example_names():
            print(name)
        return 0
    config = config_from_dict({"plant": {"example": args.name}})
    sys.stdout.write(yaml.safe_dump(config.to_dict(), sort_keys=False, default_flow_style=None))
    return 0


COMMANDS = {
    "run": cmd_run,
    "compare": cmd_compare,
    "check-pe": cmd_check_pe,
    "oracle": cmd_oracle,
    "examples": cmd_examples,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except BilinqError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
