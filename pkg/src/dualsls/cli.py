"""Command-line front end: identification, synthesis, dual planning, and the
Monte Carlo experiment.

Exit codes: 0 success, 2 validation error, 3 underdetermined data,
4 solver infeasibility or aggregate failure.
"""
from __future__ import annotations

import argparse
import datetime
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import (experiment_config_entries, experiment_config_from_dict,
                     format_config, load_config, model_entries,
                     model_from_dict, parse_config_text)
from .errors import (AggregateError, ConfigError, ContractViolationError,
                     SynthesisInfeasibleError, UnderdeterminedDataError)
from .experiments import (STRATEGIES, monte_carlo, write_aggregate_csv,
                          write_plot_data_csv, write_results_csv)
from .identify import build_model, load_dataset_csv
from .lin_sys import CostWeights
from .synthesis import dual_synthesis, nominal_synthesis, robust_synthesis

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_UNDERDETERMINED = 3
EXIT_INFEASIBLE = 4

OUT_DIR_ENV = "DUALSLS_OUT"


def _err(message: str) -> None:
    print(f"error: {message}", file=sys.stderr)


def cmd_identify(config_path, data_path, out_path) -> int:
    try:
        raw = load_config(config_path)
        for key in ("delta", "sigma_w"):
            if key not in raw:
                raise ConfigError(key, "missing required key")
        delta = raw["delta"]
        sigma_w = raw["sigma_w"]
        data = load_dataset_csv(data_path)
        model = build_model(data, sigma_w, delta)
    except ConfigError as exc:
        _err(str(exc))
        return EXIT_VALIDATION
    except UnderdeterminedDataError as exc:
        _err(str(exc))
        return EXIT_UNDERDETERMINED
    except (ContractViolationError, OSError) as exc:
        _err(str(exc))
        return EXIT_VALIDATION
    Path(out_path).write_text(format_config(model_entries(model)))
    print(f"model written to {out_path}")
    return EXIT_OK


def _load_synth_inputs(raw: dict):
    if "model_file" in raw:
        model = model_from_dict(load_config(raw.pop("model_file")))
    else:
        model = model_from_dict({k: raw.pop(k) for k in
                                 ("A_hat", "B_hat", "D", "delta", "sigma_w",
                                  "c_delta") if k in raw})
    try:
        weights = CostWeights(np.array(raw.pop("Q"), dtype=float),
                              np.array(raw.pop("R"), dtype=float))
    except KeyError as exc:
        raise ConfigError(exc.args[0], "missing required key") from exc
    except ValueError as exc:
        raise ConfigError("Q/R", str(exc)) from exc
    if "F" not in raw:
        raise ConfigError("F", "missing required key")
    F = int(raw.pop("F"))
    return model, weights, F, raw


def _fir_entries(prefix, phi):
    return [(f"{prefix}Phi_x", phi.Phi_x.tolist()),
            (f"{prefix}Phi_u", phi.Phi_u.tolist())]


def cmd_synth(config_path, mode, out_path) -> int:
    if mode not in ("nominal", "robust", "dual"):
        _err(f"unknown synthesis mode '{mode}'")
        return EXIT_VALIDATION
    try:
        raw = load_config(config_path)
        model, weights, F, rest = _load_synth_inputs(raw)
        entries = [("mode", mode), ("F", F)]
        if mode == "nominal":
            res = nominal_synthesis(model, weights, F)
            entries += [("cost", res.cost),
                        ("solver_status", res.solver.status),
                        ("eq_residual", res.solver.eq_residual)]
            entries += _fir_entries("", res.phi)
        elif mode == "robust":
            res = robust_synthesis(model, weights, F)
            entries += [("cost", res.cost), ("lambda", res.lam),
                        ("solver_status", res.solver.status),
                        ("eq_residual", res.solver.eq_residual),
                        ("min_psd_eig", res.solver.min_psd_eig),
                        ("certificate_residual",
                         res.certificate.structure_residual())]
            entries += _fir_entries("", res.phi)
        else:
            for key in ("T", "T_e"):
                if key not in rest:
                    raise ConfigError(key, "missing required key")
            grid = rest.get("lambda2_grid")
            if grid is not None and not grid:
                raise ConfigError("lambda2_grid", "must be non-empty")
            plan = dual_synthesis(model, weights, F, int(rest["T"]),
                                  int(rest["T_e"]), lambda2_grid=grid)
            entries += [("T", int(rest["T"])), ("T_e", int(rest["T_e"])),
                        ("objective", plan.objective),
                        ("lambda2", plan.lambda2), ("lambda1", plan.lam1),
                        ("grid_table",
                         [[p.lambda2, p.objective, p.status]
                          for p in plan.grid_table])]
            entries += _fir_entries("phase1_", plan.phi1)
            entries += _fir_entries("phase2_", plan.phi2_planned)
    except ConfigError as exc:
        _err(str(exc))
        return EXIT_VALIDATION
    except (ContractViolationError, OSError, KeyError) as exc:
        _err(str(exc))
        return EXIT_VALIDATION
    except SynthesisInfeasibleError as exc:
        _err(str(exc))
        return EXIT_INFEASIBLE
    Path(out_path).write_text(format_config(entries))
    print(f"synthesis result written to {out_path}")
    return EXIT_OK


def cmd_experiment(config_path, out_dir, jobs: int = 1, seed=None,
                   mc_runs=None, lambda2_grid=None) -> int:
    try:
        raw = load_config(config_path)
        if seed is not None:
            raw["master_seed"] = int(seed)
        if mc_runs is not None:
            raw["mc_runs"] = int(mc_runs)
        if lambda2_grid is not None:
            raw["lambda2_grid"] = list(lambda2_grid)
        cfg = experiment_config_from_dict(raw)
    except ConfigError as exc:
        _err(str(exc))
        return EXIT_VALIDATION
    except (ContractViolationError, OSError) as exc:
        _err(str(exc))
        return EXIT_VALIDATION

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        result = monte_carlo(cfg, jobs=jobs,
                             progress=lambda msg: print(msg, end="\r",
                                                        file=sys.stderr))
    except AggregateError as exc:
        _err(str(exc))
        return EXIT_INFEASIBLE
    paths = {name: out / name for name in
             ("results.csv", "aggregate.csv", "plot_data.csv")}
    write_results_csv(result, paths["results.csv"])
    write_aggregate_csv(result, paths["aggregate.csv"])
    write_plot_data_csv(result, paths["plot_data.csv"])

    stats = []
    for strategy in STRATEGIES:
        eps = result.episodes_for(strategy)
        ok = sum(e.status == "ok" for e in eps)
        stats += [(f"manifest_episodes_ok_{strategy}", ok),
                  (f"manifest_episodes_failed_{strategy}", len(eps) - ok)]
    manifest_entries = (
        experiment_config_entries(cfg)
        + [("manifest_tool_version", __version__),
           ("manifest_created_utc",
            datetime.datetime.now(datetime.timezone.utc).isoformat()),
           ("manifest_outputs", [p.name for p in paths.values()]),
           ("manifest_greedy_sigma", result.greedy_sigma),
           ("manifest_greedy_target", result.greedy_target),
           ("manifest_pilot_runs", result.pilot_runs)]
        + stats)
    (out / "manifest.txt").write_text(format_config(manifest_entries))
    for strategy in STRATEGIES:
        agg = result.aggregates[(strategy, "total")]
        print(f"{strategy}: mean normalized total "
              f"{agg['mean']:.4f} (n={agg['n']}, failures={agg['failures']})")
    print(f"outputs in {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dualsls",
        description="Dual-control LQR synthesis and experiments")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_id = sub.add_parser("identify", help="least-squares model from a dataset CSV")
    p_id.add_argument("--config", required=True)
    p_id.add_argument("--data", required=True)
    p_id.add_argument("--out", required=True)

    for name, mode in (("synth", None), ("dual-plan", "dual")):
        p = sub.add_parser(name, help="controller synthesis"
                           if mode is None else "two-phase dual-control plan")
        p.add_argument("--config", required=True)
        if mode is None:
            p.add_argument("--mode", required=True,
                           choices=["nominal", "robust", "dual"])
        p.add_argument("--out", required=True)

    p_exp = sub.add_parser("experiment", help="paired Monte Carlo comparison")
    p_exp.add_argument("--config", required=True)
    p_exp.add_argument("--out", default=None,
                       help=f"output directory (default: ${OUT_DIR_ENV} or ./out)")
    p_exp.add_argument("--jobs", type=int, default=1)
    p_exp.add_argument("--seed", type=int, default=None)
    p_exp.add_argument("--mc-runs", type=int, default=None)
    p_exp.add_argument("--lambda2-grid", type=str, default=None,
                       help="comma-separated multiplier grid, e.g. 0.3,0.7,1.0")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "identify":
        return cmd_identify(args.config, args.data, args.out)
    if args.command == "synth":
        return cmd_synth(args.config, args.mode, args.out)
    if args.command == "dual-plan":
        return cmd_synth(args.config, "dual", args.out)
    if args.command == "experiment":
        out_dir = args.out or os.environ.get(OUT_DIR_ENV) or "out"
        grid = None
        if args.lambda2_grid is not None:
            try:
                grid = [float(v) for v in args.lambda2_grid.split(",") if v]
            except ValueError:
                _err(f"invalid --lambda2-grid '{args.lambda2_grid}'")
                return EXIT_VALIDATION
        return cmd_experiment(args.config, out_dir, jobs=args.jobs,
                              seed=args.seed, mc_runs=args.mc_runs,
                              lambda2_grid=grid)
    raise AssertionError("unreachable")


def main_entry() -> None:  # console-script wrapper
    sys.exit(main())


if __name__ == "__main__":
    sys.exit(main())
