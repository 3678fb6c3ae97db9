"""Flat key = value configuration files with Python-literal values.

One assignment per line; values are Python literals (numbers, strings,
booleans, nested bracket lists for matrices, row-major). Lines starting
with '#' and blank lines are ignored. Keys prefixed 'manifest_' are
metadata emitted by the experiment runner and are ignored on load, which
lets a run manifest double as a config file.
"""
from __future__ import annotations

import ast

import numpy as np

from .errors import ConfigError
from .experiments import ExperimentConfig
from .identify import Model, chi_square_quantile
from .lin_sys import CostWeights, LTISystem


def parse_config_text(text: str) -> dict:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", f"expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        try:
            out[key] = ast.literal_eval(value.strip())
        except (ValueError, SyntaxError) as exc:
            raise ConfigError(key, f"unparseable value {value.strip()!r}") from exc
    return out


def load_config(path) -> dict:
    with open(path) as fh:
        return parse_config_text(fh.read())


def _sanitize(value):
    """Coerce to literal-eval-safe Python values; non-finite floats -> None."""
    if isinstance(value, np.ndarray):
        value = value.tolist()
    if isinstance(value, (np.floating, np.integer)):
        value = value.item()
    if isinstance(value, float) and not np.isfinite(value):
        return None
    if isinstance(value, (list, tuple)):
        return [_sanitize(v) for v in value]
    return value


def format_config(entries) -> str:
    lines = [f"{key} = {_sanitize(value)!r}" for key, value in entries]
    return "\n".join(lines) + "\n"


def _require(raw: dict, key: str):
    if key not in raw:
        raise ConfigError(key, "missing required key")
    return raw[key]


def _matrix(raw: dict, key: str) -> np.ndarray:
    value = _require(raw, key)
    try:
        M = np.array(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(key, "not a numeric matrix literal") from exc
    if M.ndim != 2:
        raise ConfigError(key, f"expected a nested-list matrix, got shape {M.shape}")
    return M


def _scalar(raw: dict, key: str, default=None):
    if key not in raw:
        if default is None:
            raise ConfigError(key, "missing required key")
        return default
    value = raw[key]
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise ConfigError(key, f"expected a number, got {value!r}")
    return value


EXPERIMENT_KEYS = {
    "A_true", "B_true", "sigma_w", "Q", "R", "delta", "T", "T_e", "F",
    "n_init_rollouts", "init_rollout_len", "lambda2_grid", "mc_runs",
    "master_seed",
}


def experiment_config_from_dict(raw: dict) -> ExperimentConfig:
    unknown = {k for k in raw
               if k not in EXPERIMENT_KEYS and not k.startswith("manifest_")}
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown key")
    try:
        system = LTISystem(_matrix(raw, "A_true"), _matrix(raw, "B_true"),
                           _scalar(raw, "sigma_w"))
    except ValueError as exc:
        raise ConfigError("A_true/B_true/sigma_w", str(exc)) from exc
    try:
        weights = CostWeights(_matrix(raw, "Q"), _matrix(raw, "R"))
    except ValueError as exc:
        raise ConfigError("Q/R", str(exc)) from exc
    grid = raw.get("lambda2_grid", list(ExperimentConfig.lambda2_grid))
    if not isinstance(grid, (list, tuple)) or not grid:
        raise ConfigError("lambda2_grid", "must be a non-empty list")
    kwargs = dict(
        true_system=system, weights=weights,
        delta=_scalar(raw, "delta", 0.1),
        T=int(_scalar(raw, "T", 100)),
        T_e=int(_scalar(raw, "T_e", 20)),
        F=int(_scalar(raw, "F", 12)),
        n_init_rollouts=int(_scalar(raw, "n_init_rollouts", 10)),
        init_rollout_len=int(_scalar(raw, "init_rollout_len", 6)),
        lambda2_grid=tuple(float(g) for g in grid),
        mc_runs=int(_scalar(raw, "mc_runs", 200)),
        master_seed=int(_scalar(raw, "master_seed", 0)),
    )
    try:
        return ExperimentConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(_blame_field(str(exc)), str(exc)) from exc


def _blame_field(message: str) -> str:
    for field in ("T_e", "mc_runs", "delta", "F"):
        if field in message:
            return field
    return "config"


def experiment_config_entries(cfg: ExperimentConfig) -> list:
    return [
        ("A_true", cfg.true_system.A), ("B_true", cfg.true_system.B),
        ("sigma_w", cfg.true_system.sigma_w),
        ("Q", cfg.weights.Q), ("R", cfg.weights.R),
        ("delta", cfg.delta), ("T", cfg.T), ("T_e", cfg.T_e), ("F", cfg.F),
        ("n_init_rollouts", cfg.n_init_rollouts),
        ("init_rollout_len", cfg.init_rollout_len),
        ("lambda2_grid", list(cfg.lambda2_grid)),
        ("mc_runs", cfg.mc_runs), ("master_seed", cfg.master_seed),
    ]


MODEL_KEYS = {"A_hat", "B_hat", "D", "delta", "sigma_w", "c_delta"}


def model_from_dict(raw: dict) -> Model:
    unknown = {k for k in raw if k not in MODEL_KEYS and not k.startswith("manifest_")}
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown key")
    delta = _scalar(raw, "delta")
    sigma_w = _scalar(raw, "sigma_w")
    A_hat = _matrix(raw, "A_hat")
    B_hat = _matrix(raw, "B_hat")
    n_x, n_u = A_hat.shape[0], B_hat.shape[1]
    c_delta = _scalar(raw, "c_delta",
                      chi_square_quantile(n_x * n_x + n_x * n_u, 1.0 - delta))
    try:
        return Model(A_hat, B_hat, _matrix(raw, "D"), delta, sigma_w, c_delta)
    except ValueError as exc:
        raise ConfigError("model", str(exc)) from exc


def model_entries(model: Model) -> list:
    return [
        ("A_hat", model.A_hat), ("B_hat", model.B_hat), ("D", model.D),
        ("delta", model.delta), ("sigma_w", model.sigma_w),
        ("c_delta", model.c_delta),
    ]
