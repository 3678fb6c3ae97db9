"""Monte Carlo harness: initial-data generation, the nominal/dual/greedy
strategies with paired noise streams, greedy excitation tuning, and cost
aggregation."""
from __future__ import annotations

import csv
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (AggregateError, ContractViolationError, InstabilityError,
                     SynthesisInfeasibleError)
from .identify import Dataset, Model, build_model, merge
from .lin_sys import (CostWeights, LTISystem, Trajectory, evaluate_cost,
                      realize_controller, sls_stationary_statistics,
                      stationary_cost_with_excitation)
from .synthesis import SynthesisResult, dual_synthesis, robust_synthesis

log = logging.getLogger(__name__)

STRATEGIES = ("nominal", "dual", "greedy")
PHASES = ("explore", "exploit", "total")

# lambda2 grid used by the harness; the best point is insensitive to grid
# density because feasibility and looseness are monotone in lambda2
EXPERIMENT_LAMBDA2_GRID = (0.1, 0.3, 0.5, 0.7, 0.85, 1.0)
PILOT_RUNS = 50


@dataclass(frozen=True)
class ExperimentConfig:
    true_system: LTISystem
    weights: CostWeights
    delta: float = 0.1
    T: int = 100
    T_e: int = 20
    F: int = 12
    n_init_rollouts: int = 10
    init_rollout_len: int = 6
    lambda2_grid: tuple = EXPERIMENT_LAMBDA2_GRID
    mc_runs: int = 200
    master_seed: int = 0

    def __post_init__(self):
        if not 1 <= self.T_e < self.T:
            raise ContractViolationError(f"need 1 <= T_e < T, got {self.T_e}, {self.T}")
        if self.F < 1:
            raise ContractViolationError("F must be >= 1")
        if self.mc_runs < 1:
            raise ContractViolationError("mc_runs must be >= 1")
        if not 0.0 < self.delta < 1.0:
            raise ContractViolationError("delta must lie in (0, 1)")
        if self.init_rollout_len < 2:
            raise ContractViolationError("init_rollout_len must be >= 2")
        object.__setattr__(self, "lambda2_grid", tuple(self.lambda2_grid))


@dataclass
class EpisodeResult:
    strategy: str
    seed: int
    explore_cost: float = np.nan
    exploit_cost: float = np.nan
    total_cost: float = np.nan
    phase2_resynth_status: str = ""
    status: str = "ok"          # "ok" or "failed"
    failed_stage: str = ""
    lambda2: float | None = None
    greedy_sigma: float | None = None


def episode_streams(seed: int):
    """Independent per-episode substreams: initial data, phase-1 noise,
    phase-2 noise, greedy excitation. Phase-2 noise does not depend on T_e."""
    children = np.random.SeedSequence(int(seed)).spawn(4)
    return tuple(np.random.default_rng(c) for c in children)


def run_seeds(master_seed: int, mc_runs: int) -> list[int]:
    """Deterministic per-run episode seeds derived from the master seed."""
    state = np.random.SeedSequence(int(master_seed)).generate_state(mc_runs, dtype=np.uint64)
    return [int(s) for s in state]


def generate_initial_data(sys: LTISystem, n_rollouts: int, rollout_len: int,
                          seed) -> Dataset:
    """Open-loop rollouts with u_t ~ N(0, I); per rollout the input block is
    drawn before the noise block so the layout is reproducible."""
    if rollout_len < 2:
        raise ContractViolationError("rollout_len must be >= 2")
    rng = np.random.default_rng(seed)
    rollouts = []
    for _ in range(n_rollouts):
        U = rng.standard_normal((rollout_len, sys.n_u))
        W = sys.sigma_w * rng.standard_normal((rollout_len, sys.n_x))
        X = np.empty((rollout_len, sys.n_x))
        X[0] = W[0]
        for t in range(1, rollout_len):
            X[t] = sys.A @ X[t - 1] + sys.B @ U[t - 1] + W[t]
        rollouts.append(Trajectory(X, U))
    return Dataset(rollouts)


@dataclass
class _Shared:
    """Per-run artifacts reused across the paired strategies."""
    data0: Dataset
    model1: Model
    robust1: SynthesisResult


def _prepare_shared(cfg: ExperimentConfig, seed: int) -> _Shared:
    init_rng, _, _, _ = episode_streams(seed)
    data0 = generate_initial_data(cfg.true_system, cfg.n_init_rollouts,
                                  cfg.init_rollout_len, init_rng)
    model1 = build_model(data0, cfg.true_system.sigma_w, cfg.delta)
    robust1 = robust_synthesis(model1, cfg.weights, cfg.F)
    return _Shared(data0, model1, robust1)


def _simulate_episode(cfg: ExperimentConfig, shared: _Shared, controller1,
                      seed: int, excitation=None):
    """Phase 1 under controller1 (+excitation), model rebuild, robust
    re-synthesis, phase 2. Returns (explore, exploit, phase2_status)."""
    sys = cfg.true_system
    _, w1_rng, w2_rng, _ = episode_streams(seed)
    W1 = sys.sigma_w * w1_rng.standard_normal((cfg.T_e, sys.n_x))
    W2 = sys.sigma_w * w2_rng.standard_normal((cfg.T - cfg.T_e, sys.n_x))
    controller1.reset()
    X1 = np.empty((cfg.T_e, sys.n_x))
    U1 = np.empty((cfg.T_e, sys.n_u))
    x = W1[0].copy()
    for t in range(cfg.T_e):
        if t > 0:
            x = sys.A @ x + sys.B @ u + W1[t]
        u = np.asarray(controller1.control(x), dtype=float)
        if excitation is not None:
            u = u + excitation[t]
        X1[t] = x
        U1[t] = u
    explore_traj = Trajectory(X1, U1)
    explore = evaluate_cost(explore_traj, cfg.weights)
    data = merge(shared.data0, Dataset([explore_traj]))
    model2 = build_model(data, sys.sigma_w, cfg.delta)
    synth2 = robust_synthesis(model2, cfg.weights, cfg.F)
    controller2 = realize_controller(synth2.phi)
    exploit = 0.0
    for t in range(cfg.T - cfg.T_e):
        x = sys.A @ x + sys.B @ u + W2[t]
        u = controller2.control(x)
        exploit += float(x @ cfg.weights.Q @ x + u @ cfg.weights.R @ u)
    status = synth2.solver.status if synth2.solver is not None else "optimal"
    return float(explore), float(exploit), status


def run_episode(strategy: str, cfg: ExperimentConfig, seed: int,
                greedy_sigma: float | None = None,
                shared: _Shared | None = None) -> EpisodeResult:
    """One episode: phase-1 policy per strategy on the true system, model
    rebuild at T_e, robust re-synthesis, phase-2 rollout. Deterministic in
    (strategy, cfg, seed)."""
    if strategy not in STRATEGIES:
        raise ContractViolationError(f"unknown strategy '{strategy}'")
    result = EpisodeResult(strategy=strategy, seed=int(seed))
    try:
        if shared is None:
            shared = _prepare_shared(cfg, seed)
    except SynthesisInfeasibleError:
        return replace(result, status="failed", failed_stage="phase1_synthesis")
    except Exception as exc:  # rank-deficient initial data, ...
        return replace(result, status="failed", failed_stage="model_build:" + type(exc).__name__)

    excitation = None
    try:
        if strategy == "nominal":
            controller1 = realize_controller(shared.robust1.phi)
        elif strategy == "dual":
            plan = dual_synthesis(shared.model1, cfg.weights, cfg.F, cfg.T,
                                  cfg.T_e, lambda2_grid=cfg.lambda2_grid,
                                  nominal_result=shared.robust1)
            controller1 = realize_controller(plan.phi1)
            result.lambda2 = plan.lambda2
        else:  # greedy
            if greedy_sigma is None:
                raise ContractViolationError(
                    "greedy episodes require greedy_sigma (tuned once per "
                    "configuration by monte_carlo)")
            controller1 = realize_controller(shared.robust1.phi)
            _, _, _, exc_rng = episode_streams(seed)
            excitation = greedy_sigma * exc_rng.standard_normal(
                (cfg.T_e, cfg.true_system.n_u))
            result.greedy_sigma = float(greedy_sigma)
    except SynthesisInfeasibleError:
        return replace(result, status="failed", failed_stage="phase1_synthesis")

    try:
        explore, exploit, status2 = _simulate_episode(cfg, shared, controller1,
                                                      seed, excitation)
    except SynthesisInfeasibleError:
        return replace(result, status="failed", failed_stage="phase2_synthesis")
    except Exception as exc:
        return replace(result, status="failed", failed_stage="phase2:" + type(exc).__name__)
    result.explore_cost = explore
    result.exploit_cost = exploit
    result.total_cost = explore + exploit
    result.phase2_resynth_status = status2
    return result


def tune_greedy_sigma(cfg: ExperimentConfig, K_nominal, target_explore_cost: float,
                      rel_tol: float = 1e-4) -> float:
    """Bisection on the excitation level so the stationary-model exploration
    cost over T_e steps matches the target. Returns 0 (with a warning) when
    the unexcited closed loop already exceeds the target."""
    sys = cfg.true_system

    def explore_cost(sigma):
        return cfg.T_e * stationary_cost_with_excitation(sys, K_nominal, sigma,
                                                         cfg.weights)

    base = explore_cost(0.0)
    if base >= target_explore_cost:
        log.warning(
            "greedy tuning: target exploration cost %.6g is below the "
            "unexcited closed-loop cost %.6g (the dual policy explored less "
            "than the nominal closed loop); returning sigma = 0",
            target_explore_cost, base)
        return 0.0
    hi = 1.0
    for _ in range(200):
        if explore_cost(hi) >= target_explore_cost:
            break
        hi *= 2.0
    lo = 0.0
    while (hi - lo) > rel_tol * max(hi, 1e-12):
        mid = 0.5 * (lo + hi)
        if explore_cost(mid) < target_explore_cost:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def effective_static_gain(system: LTISystem, phi, weights: CostWeights):
    """Least-squares static-feedback fit of the realized controller's
    stationary behavior on `system`: K = Cov(u, x) Cov(x)^-1."""
    _, Sx, _, Sux = sls_stationary_statistics(system, phi, weights)
    return Sux @ np.linalg.inv(Sx)


@dataclass
class MonteCarloResult:
    config: ExperimentConfig
    episodes: list = field(default_factory=list)   # EpisodeResult, all strategies
    aggregates: dict = field(default_factory=dict)  # (strategy, phase) -> stats
    greedy_sigma: float = np.nan
    greedy_target: float = np.nan
    pilot_runs: int = 0

    def episodes_for(self, strategy: str):
        return [e for e in self.episodes if e.strategy == strategy]

    def normalized(self, strategy: str, phase: str) -> np.ndarray:
        """Per-run costs divided by the same-run nominal value."""
        nominal = {e.seed: e for e in self.episodes_for("nominal")}
        out = []
        for e in self.episodes_for(strategy):
            base = nominal.get(e.seed)
            if base is None or base.status != "ok" or e.status != "ok":
                continue
            num = getattr(e, f"{phase}_cost" if phase != "total" else "total_cost")
            den = getattr(base, f"{phase}_cost" if phase != "total" else "total_cost")
            out.append(num / den)
        return np.array(out)


def _phase_a_worker(args):
    cfg, seed = args
    try:
        shared = _prepare_shared(cfg, seed)
    except Exception:
        shared = None
    nominal = run_episode("nominal", cfg, seed, shared=shared)
    dual = run_episode("dual", cfg, seed, shared=shared)
    return seed, nominal, dual


def _phase_b_worker(args):
    cfg, seed, sigma = args
    try:
        shared = _prepare_shared(cfg, seed)
    except Exception:
        shared = None
    return seed, run_episode("greedy", cfg, seed, greedy_sigma=sigma, shared=shared)


def monte_carlo(cfg: ExperimentConfig, jobs: int = 1,
                progress=None) -> MonteCarloResult:
    """Paired Monte Carlo comparison of the three strategies.

    All strategies within a run share the initial dataset and the process
    noise streams. The greedy excitation level is tuned once per
    configuration against the mean dual exploration cost over the first
    `PILOT_RUNS` runs. Deterministic in (cfg, master_seed) regardless of
    the level of parallelism.
    """
    seeds = run_seeds(cfg.master_seed, cfg.mc_runs)
    tasks = [(cfg, s) for s in seeds]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            phase_a = list(pool.map(_phase_a_worker, tasks, chunksize=1))
    else:
        phase_a = []
        for i, t in enumerate(tasks):
            phase_a.append(_phase_a_worker(t))
            if progress:
                progress(f"phase A {i + 1}/{len(tasks)}")
    phase_a.sort(key=lambda r: seeds.index(r[0]))
    episodes = []
    for _, nominal, dual in phase_a:
        episodes.extend([nominal, dual])

    # greedy tuning: target from the pilot duals, static gain from the first
    # run with a usable nominal controller
    pilot = [d for _, _, d in phase_a[:PILOT_RUNS] if d.status == "ok"]
    target = float(np.mean([d.explore_cost for d in pilot])) if pilot else np.nan
    sigma = np.nan
    if pilot:
        for seed, nominal, _ in phase_a:
            if nominal.status != "ok":
                continue
            try:
                shared = _prepare_shared(cfg, seed)
                K = effective_static_gain(cfg.true_system, shared.robust1.phi,
                                          cfg.weights)
                sigma = tune_greedy_sigma(cfg, K, target)
                break
            except (InstabilityError, SynthesisInfeasibleError):
                continue

    if np.isfinite(sigma):
        tasks_b = [(cfg, s, float(sigma)) for s in seeds]
        if jobs > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                phase_b = list(pool.map(_phase_b_worker, tasks_b, chunksize=1))
        else:
            phase_b = []
            for i, t in enumerate(tasks_b):
                phase_b.append(_phase_b_worker(t))
                if progress:
                    progress(f"phase B {i + 1}/{len(tasks_b)}")
        phase_b.sort(key=lambda r: seeds.index(r[0]))
        episodes.extend(e for _, e in phase_b)
    else:
        episodes.extend(EpisodeResult("greedy", s, status="failed",
                                      failed_stage="greedy_tuning")
                        for s in seeds)

    result = MonteCarloResult(config=cfg, episodes=episodes,
                              greedy_sigma=float(sigma), greedy_target=target,
                              pilot_runs=len(pilot))
    ok_total = 0
    for strategy in STRATEGIES:
        eps = result.episodes_for(strategy)
        failures = sum(e.status != "ok" for e in eps)
        ok_total += len(eps) - failures
        for phase in PHASES:
            vals = result.normalized(strategy, phase)
            stats = {
                "mean": float(np.mean(vals)) if vals.size else np.nan,
                "median": float(np.median(vals)) if vals.size else np.nan,
                "q25": float(np.percentile(vals, 25)) if vals.size else np.nan,
                "q75": float(np.percentile(vals, 75)) if vals.size else np.nan,
                "n": int(vals.size),
                "failures": failures,
            }
            result.aggregates[(strategy, phase)] = stats
    if ok_total == 0:
        raise AggregateError("all Monte Carlo episodes failed")
    return result


# ---------------------------------------------------------------------------
# CSV emission (schemas are part of the module contract)


def _fmt(x) -> str:
    if x is None or (isinstance(x, float) and not np.isfinite(x)):
        return ""
    return repr(float(x))


def write_results_csv(result: MonteCarloResult, path):
    nominal = {e.seed: e for e in result.episodes_for("nominal")}
    seeds = run_seeds(result.config.master_seed, result.config.mc_runs)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["run_id", "strategy", "explore_cost", "exploit_cost",
                         "total_cost", "norm_explore", "norm_exploit",
                         "norm_total", "status", "seed"])
        by_key = {(e.seed, e.strategy): e for e in result.episodes}
        for run_id, seed in enumerate(seeds):
            for strategy in STRATEGIES:
                e = by_key.get((seed, strategy))
                if e is None:
                    continue
                base = nominal.get(seed)
                norms = ["", "", ""]
                if (e.status == "ok" and base is not None
                        and base.status == "ok"):
                    norms = [_fmt(e.explore_cost / base.explore_cost),
                             _fmt(e.exploit_cost / base.exploit_cost),
                             _fmt(e.total_cost / base.total_cost)]
                status = e.status if e.status == "ok" else f"failed:{e.failed_stage}"
                writer.writerow([run_id, strategy, _fmt(e.explore_cost),
                                 _fmt(e.exploit_cost), _fmt(e.total_cost),
                                 *norms, status, e.seed])


def write_aggregate_csv(result: MonteCarloResult, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["strategy", "phase", "mean", "median", "q25", "q75",
                         "n", "failures"])
        for strategy in STRATEGIES:
            for phase in PHASES:
                s = result.aggregates[(strategy, phase)]
                writer.writerow([strategy, phase, _fmt(s["mean"]),
                                 _fmt(s["median"]), _fmt(s["q25"]),
                                 _fmt(s["q75"]), s["n"], s["failures"]])


def write_plot_data_csv(result: MonteCarloResult, path):
    """Long-format normalized cost distributions per strategy and phase."""
    nominal = {e.seed: e for e in result.episodes_for("nominal")}
    seeds = run_seeds(result.config.master_seed, result.config.mc_runs)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["phase", "strategy", "run_id", "normalized_cost"])
        for phase in PHASES:
            attr = f"{phase}_cost" if phase != "total" else "total_cost"
            for strategy in STRATEGIES:
                by_seed = {e.seed: e for e in result.episodes_for(strategy)}
                for run_id, seed in enumerate(seeds):
                    e = by_seed.get(seed)
                    base = nominal.get(seed)
                    if (e is None or base is None or e.status != "ok"
                            or base.status != "ok"):
                        continue
                    writer.writerow([phase, strategy, run_id,
                                     _fmt(getattr(e, attr) / getattr(base, attr))])
