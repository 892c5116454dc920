"""Experiment runners behind the command-line subcommands.

Each ``run_*`` function computes its data from an :class:`ExperimentConfig`
and writes a CSV table plus a JSON sidecar into ``config.output_dir``.
"""
from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .chain import ChainSpec, build_sector_hamiltonian
from .config import ExperimentConfig
from .errors import ChainQfiError, ConfigurationError
from .estimation import ProtocolConfig, run_protocol
from .optimize import (
    OptimizerConfig,
    maximize_qfi,
    optimize_initial_state_uncontrolled,
    probe_initial_state,
    uncontrolled_rate_envelope,
)
from .oracles import (
    simulate_three_step_qfi,
    three_step_qfi_closed_form,
    uncontrolled_asymptotic_qfi,
)
from .propagator import ControlPulse
from .qfi import qfi_of_pulse
from .report import ensure_dir, write_csv, write_json

log = logging.getLogger(__name__)

SWEEP_COLUMNS = ["T", "F_controlled", "F_uncontrolled", "rate_controlled", "rate_uncontrolled",
                 "best_restart", "converged_restarts", "theta", "phi", "flag"]
POPULATION_PREFIX = ["t", "c"]
ESTIMATE_COLUMNS = ["run", "arm", "seed", "total_S", "rounds", "estimate", "converged", "stop_reason"]
BOUND_COLUMNS = ["sample", "N", "T", "m", "F", "bound", "ratio", "ok"]
ORACLE_COLUMNS = ["quantity", "T", "lambda", "simulated", "closed_form", "rel_error"]


def optimizer_config(cfg: ExperimentConfig, m: int | None = None, restarts: int | None = None) -> OptimizerConfig:
    return OptimizerConfig(
        m=m or cfg.slots,
        restarts=restarts or cfg.restarts,
        max_iterations=cfg.max_iterations,
        gradient_tolerance=cfg.gradient_tolerance,
        init_amplitude_range=(cfg.init_low * cfg.coupling, cfg.init_high * cfg.coupling),
        amplitude_bound=cfg.amplitude_bound,
        rng_seed=cfg.seed,
    )


def basis_state(spec: ChainSpec, j: int) -> np.ndarray:
    psi = np.zeros(spec.dim, dtype=complex)
    psi[j] = 1.0
    return psi


def _pool_map(fn, items, workers: int):
    if workers <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def estimate_runtime(cfg: ExperimentConfig) -> float:
    """Rough wall-clock seconds for a sweep, from one timed gradient evaluation."""
    spec = ChainSpec(cfg.chain_length, cfg.coupling)
    pulse = ControlPulse(cfg.times[0], np.zeros(cfg.slots))
    t0 = time.perf_counter()
    qfi_of_pulse(spec, pulse, cfg.lambda_true, basis_state(spec, 1), with_gradient=True)
    per_eval = time.perf_counter() - t0
    return per_eval * 2 * cfg.max_iterations * cfg.restarts * len(cfg.times) / cfg.workers


# -- qfi-sweep -------------------------------------------------------------

def _sweep_point(args):
    cfg, T = args
    spec = ChainSpec(cfg.chain_length, cfg.coupling)
    row = {"T": T, "flag": ""}
    try:
        res = maximize_qfi(spec, T, cfg.lambda_true, basis_state(spec, 1), optimizer_config(cfg))
        row.update(F_controlled=res.best_F, best_restart=res.best_index,
                   converged_restarts=sum(res.converged_flags), amplitudes=res.best_pulse.amplitudes,
                   per_restart_F=res.per_restart_F)
    except ChainQfiError as exc:
        row.update(F_controlled=float("nan"), best_restart=-1, converged_restarts=0, amplitudes=None,
                   per_restart_F=[], flag=f"optimizer-failed: {exc}")
    theta, phi, F0 = optimize_initial_state_uncontrolled(spec, T, cfg.lambda_true)
    row.update(F_uncontrolled=F0, theta=theta, phi=phi)
    return row


def run_qfi_sweep(cfg: ExperimentConfig) -> list[dict]:
    """Optimised (psi0 = |1>) and uncontrolled QFI over the T grid."""
    out = ensure_dir(cfg.output_dir)
    rows = _pool_map(_sweep_point, [(cfg, T) for T in cfg.times], cfg.workers)
    table = [[r["T"], r["F_controlled"], r["F_uncontrolled"], r["F_controlled"] / r["T"] ** 2,
              r["F_uncontrolled"] / r["T"] ** 2, r["best_restart"], r["converged_restarts"],
              r["theta"], r["phi"], r["flag"]] for r in rows]
    conf = cfg.to_dict()
    write_csv(out / "qfi_sweep.csv", SWEEP_COLUMNS, table, conf)
    write_json(out / "qfi_sweep.json", {
        "points": [{"T": r["T"], "amplitudes": r["amplitudes"], "per_restart_F": r["per_restart_F"],
                    "theta": r["theta"], "phi": r["phi"], "flag": r["flag"]} for r in rows],
    }, conf)
    return rows


# -- populations -----------------------------------------------------------

@dataclass(frozen=True)
class PopulationTrace:
    times: np.ndarray
    populations: np.ndarray
    amplitudes: np.ndarray

    @property
    def norms(self) -> np.ndarray:
        return self.populations.sum(axis=1)


def run_population_trace(spec: ChainSpec, pulse: ControlPulse, psi0, lam: float,
                         samples_per_slot: int = 10) -> PopulationTrace:
    """Site populations sampled ``samples_per_slot`` times inside every slot."""
    psi = np.asarray(psi0, dtype=complex)
    times, pops, amps = [0.0], [np.abs(psi) ** 2], [pulse.amplitudes[0]]
    t = 0.0
    for c, dt in zip(pulse.amplitudes, pulse.slot_durations):
        E, V = np.linalg.eigh(build_sector_hamiltonian(spec, c, lam).matrix)
        h = dt / samples_per_slot
        step = (V * np.exp(-1j * E * h)) @ V.conj().T
        for _ in range(samples_per_slot):
            psi = step @ psi
            t += h
            times.append(t)
            pops.append(np.abs(psi) ** 2)
            amps.append(c)
    return PopulationTrace(np.array(times), np.array(pops), np.array(amps))


def load_pulse(path, T: float | None = None) -> ControlPulse:
    """Pulse from a JSON file: ``{"T": .., "amplitudes": [..]}`` or a sweep sidecar."""
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, ValueError) as exc:
        raise ConfigurationError(f"cannot read pulse file {path}: {exc}") from exc
    if "points" in doc:
        points = [p for p in doc["points"] if p.get("amplitudes")]
        if not points:
            raise ConfigurationError(f"{path} holds no optimised pulses")
        if T is not None:
            points.sort(key=lambda p: abs(p["T"] - T))
        doc = points[0]
    try:
        return ControlPulse(float(doc["T"]), np.asarray(doc["amplitudes"], dtype=float))
    except KeyError as exc:
        raise ConfigurationError(f"{path} lacks {exc}") from exc


def run_populations(cfg: ExperimentConfig) -> PopulationTrace:
    out = ensure_dir(cfg.output_dir)
    spec = ChainSpec(cfg.chain_length, cfg.coupling)
    T = cfg.time
    meta = {}
    if cfg.uncontrolled:
        pulse = ControlPulse(T, np.zeros(cfg.slots))
        if cfg.theta is None or cfg.phi is None:
            theta, phi, F = optimize_initial_state_uncontrolled(spec, T, cfg.lambda_true)
        else:
            theta, phi = cfg.theta, cfg.phi
            F = qfi_of_pulse(spec, pulse, cfg.lambda_true, probe_initial_state(theta, phi, spec.dim))[0].F
        psi0 = probe_initial_state(theta, phi, spec.dim)
        meta.update(theta=theta, phi=phi, F=F)
    else:
        psi0 = basis_state(spec, 1)
        if cfg.pulse_file:
            pulse = load_pulse(cfg.pulse_file, T)
            F = qfi_of_pulse(spec, pulse, cfg.lambda_true, psi0)[0].F
        else:
            res = maximize_qfi(spec, T, cfg.lambda_true, psi0, optimizer_config(cfg))
            pulse, F = res.best_pulse, res.best_F
        meta.update(F=F)
    trace = run_population_trace(spec, pulse, psi0, cfg.lambda_true, cfg.samples_per_slot)
    columns = POPULATION_PREFIX + [f"p{j}" for j in range(spec.dim)] + ["norm"]
    rows = [[t, c, *p, n] for t, c, p, n in zip(trace.times, trace.amplitudes, trace.populations, trace.norms)]
    conf = cfg.to_dict()
    write_csv(out / "populations.csv", columns, rows, conf)
    write_json(out / "populations.json", {"T": pulse.T, "amplitudes": pulse.amplitudes,
                                          "psi0": psi0, **meta}, conf)
    return trace


# -- estimate --------------------------------------------------------------

def run_seed(base: int, run: int) -> int:
    return int(np.random.SeedSequence([base, run]).generate_state(1)[0])


def protocol_config(cfg: ExperimentConfig, run: int) -> ProtocolConfig:
    return ProtocolConfig(optimizer=optimizer_config(cfg), warm_restarts=cfg.warm_restarts,
                          max_rounds=cfg.max_rounds, seed=run_seed(cfg.seed, run),
                          subsample_stop=cfg.subsample_stop)


_worker_cache: dict = {}


def _estimate_run(args):
    cfg, arm, run = args
    spec = ChainSpec(cfg.chain_length, cfg.coupling)
    pcfg = protocol_config(cfg, run)
    try:
        trace = run_protocol(spec, cfg.time, cfg.lambda_true, cfg.lambda_init, cfg.epsilon, arm == "control",
                             pcfg, cache=_worker_cache)
    except ChainQfiError as exc:
        log.warning("run %d (%s) failed: %s", run, arm, exc)
        return {"run": run, "arm": arm, "seed": pcfg.seed, "total_S": 0, "rounds": 0,
                "estimate": float("nan"), "converged": False, "stop_reason": f"error: {exc}", "trace": []}
    return {"run": run, "arm": arm, "seed": pcfg.seed, "total_S": trace.total_S, "rounds": len(trace.rounds),
            "estimate": trace.estimate, "converged": trace.converged,
            "stop_reason": trace.stop_reason if not trace.failed else f"failed: {trace.stop_reason}",
            "trace": [r.__dict__ for r in trace.rounds]}


def summarize(results: list[dict]) -> dict:
    summary = {}
    for arm in sorted({r["arm"] for r in results}):
        ok = [r for r in results if r["arm"] == arm and r["converged"]]
        S = np.array([r["total_S"] for r in ok], dtype=float)
        est = np.array([r["estimate"] for r in ok], dtype=float)
        summary[arm] = {
            "runs": sum(r["arm"] == arm for r in results),
            "converged": len(ok),
            "mean_S": float(S.mean()) if S.size else float("nan"),
            "std_S": float(S.std(ddof=1)) if S.size > 1 else 0.0,
            "mean_estimate": float(est.mean()) if est.size else float("nan"),
            "std_estimate": float(est.std(ddof=1)) if est.size > 1 else 0.0,
        }
    return summary


def run_estimation_experiment(cfg: ExperimentConfig) -> dict:
    """Repeat the feedback protocol ``cfg.runs`` times per arm with per-run seeds."""
    out = ensure_dir(cfg.output_dir)
    arms = ["control", "free"] if cfg.arm == "both" else [cfg.arm]
    jobs = [(cfg, arm, run) for arm in arms for run in range(cfg.runs)]
    results = _pool_map(_estimate_run, jobs, cfg.workers)
    summary = summarize(results)
    conf = cfg.to_dict()
    write_csv(out / "estimate_runs.csv", ESTIMATE_COLUMNS,
              [[r[c] for c in ESTIMATE_COLUMNS] for r in results], conf)
    write_json(out / "estimate_summary.json", {"summary": summary, "runs": results}, conf)
    return {"summary": summary, "runs": results}


# -- oracle ----------------------------------------------------------------

def run_oracle(cfg: ExperimentConfig) -> list[list]:
    """Closed-form two-spin results next to their simulated counterparts."""
    out = ensure_dir(cfg.output_dir)
    spec2 = ChainSpec(2, cfg.coupling)
    rows = []
    for T in cfg.times:
        if T > np.pi / (2 * cfg.coupling):
            sim = simulate_three_step_qfi(T, c_strong=cfg.c_strong, J=cfg.coupling)
            ref = three_step_qfi_closed_form(T, cfg.coupling)
            rows.append(["three_step_qfi", T, 0.0, sim, ref, abs(sim - ref) / ref])
        for lam in cfg.oracle_lambdas:
            _, _, _, rate = uncontrolled_rate_envelope(spec2, T, lam * cfg.coupling)
            ref = uncontrolled_asymptotic_qfi(lam, T) / T**2
            rows.append(["uncontrolled_rate_envelope", T, lam, rate, ref, abs(rate - ref) / ref])
    conf = cfg.to_dict()
    write_csv(out / "oracle.csv", ORACLE_COLUMNS, rows, conf)
    write_json(out / "oracle.json", {"rows": [dict(zip(ORACLE_COLUMNS, r)) for r in rows]}, conf)
    return rows


# -- bound-check -----------------------------------------------------------

def random_sector_state(dim: int, rng: np.random.Generator) -> np.ndarray:
    psi = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return psi / np.linalg.norm(psi)


def bound_samples(n: int, seed: int, chain_lengths=(2, 3, 4, 5)):
    """Deterministic random (spec, pulse, lam, psi0) draws for the 4T^2 check."""
    rng = np.random.default_rng([seed, 4])
    for k in range(n):
        N = int(chain_lengths[k % len(chain_lengths)])
        T = float(rng.uniform(0.5, 25.0))
        m = int(rng.integers(1, 21))
        amps = rng.uniform(-3.0, 3.0, m)
        lam = float(rng.uniform(-1.0, 1.0))
        psi0 = random_sector_state(N + 1, rng) if k % 2 else basis_state(ChainSpec(N), 1)
        yield k, ChainSpec(N), ControlPulse(T, amps), lam, psi0


def run_bound_check(cfg: ExperimentConfig) -> list[list]:
    out = ensure_dir(cfg.output_dir)
    rows = []
    for k, spec, pulse, lam, psi0 in bound_samples(cfg.bound_samples, cfg.seed):
        F = qfi_of_pulse(spec, pulse, lam, psi0)[0].F
        bound = 4 * pulse.T**2
        rows.append([k, spec.N, pulse.T, pulse.m, F, bound, F / bound, F <= bound * (1 + 1e-9)])
    conf = cfg.to_dict()
    write_csv(out / "bound_check.csv", BOUND_COLUMNS, rows, conf)
    write_json(out / "bound_check.json", {"all_ok": all(r[-1] for r in rows),
                                          "max_ratio": max(r[6] for r in rows)}, conf)
    return rows


RUNNERS = {
    "qfi-sweep": run_qfi_sweep,
    "populations": run_populations,
    "estimate": run_estimation_experiment,
    "oracle": run_oracle,
    "bound-check": run_bound_check,
}
