"""Optimal qubit measurement (SLD) and the adaptive feedback estimation loop.

For a probe state ``rho = (1 + u.sigma)/2`` the symmetric logarithmic
derivative is ``L = alpha + v.sigma`` with::

    alpha = -(u.du) / (1 - |u|^2)
    v     = du + (u.du) / (1 - |u|^2) u

It has eigenvalues ``alpha +- |v|`` with projectors along ``+-v/|v|``.  The
estimator ``lam + L/F`` is measured on copies of the *true* state and its
sample mean becomes the next guess.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .chain import ChainSpec
from .errors import ConfigurationError, DegenerateMeasurementError, NumericError, ProtocolError
from .optimize import OptimizerConfig, maximize_qfi, optimize_initial_state_uncontrolled, probe_initial_state
from .propagator import ControlPulse, compose_pulse, evolve_state
from .qfi import PURE_EPS, _guarded_ratio, probe_surface, qfi

log = logging.getLogger(__name__)

IDENTITY_TOL = 1e-9
DEGENERATE_V = 1e-12


@dataclass(frozen=True)
class SldMeasurement:
    alpha: float
    v: np.ndarray
    l_plus: float
    l_minus: float

    @property
    def axis(self) -> np.ndarray:
        return self.v / np.linalg.norm(self.v)

    def mean(self, u) -> float:
        """``tr[rho L]`` for the qubit state with Bloch vector ``u``."""
        return float(self.alpha + np.dot(u, self.v))

    def second_moment(self, u) -> float:
        """``tr[rho L^2]``; equals the QFI when ``u`` is the state it was built from."""
        return float(self.alpha**2 + self.v @ self.v + 2 * self.alpha * np.dot(u, self.v))


def sld_from_bloch(u, du, deficit: float | None = None) -> SldMeasurement:
    u = np.asarray(u, dtype=float)
    du = np.asarray(du, dtype=float)
    g, _ = _guarded_ratio(u, du, deficit)
    v = du + g * u
    nv = float(np.linalg.norm(v))
    if nv < DEGENERATE_V:
        raise DegenerateMeasurementError(f"SLD Bloch part vanishes (|v| = {nv:.3g})")
    meas = SldMeasurement(-g, v, -g + nv, -g - nv)
    guarded = (1.0 - u @ u if deficit is None else deficit) < PURE_EPS
    if not guarded:
        bias = meas.mean(u)
        if abs(bias) > IDENTITY_TOL * max(1.0, abs(meas.alpha)):
            raise NumericError(f"tr[rho L] = {bias!r}, expected 0")
    return meas


def outcome_probabilities(u_true, measurement: SldMeasurement) -> tuple[float, float]:
    """Probabilities of the ``+`` and ``-`` outcomes on the state ``u_true``."""
    x = float(np.clip(np.dot(u_true, measurement.axis), -1.0, 1.0))
    p_plus = 0.5 * (1.0 + x)
    return p_plus, 1.0 - p_plus


def simulate_round(p_plus: float, shots: int, rng: np.random.Generator) -> int:
    """Number of ``+`` outcomes in ``shots`` Bernoulli trials."""
    if shots < 1:
        raise ConfigurationError(f"need at least one shot, got {shots}")
    return int(rng.binomial(int(shots), min(max(p_plus, 0.0), 1.0)))


def update_estimate(lam_n: float, measurement: SldMeasurement, k_plus: int, shots: int, F: float) -> float:
    """Sample mean of the estimator ``lam_n + L/F`` from the observed counts."""
    if not F > 0:
        raise ProtocolError(f"QFI must be positive to update the estimate, got {F!r}")
    f_plus = k_plus / shots
    return lam_n + (measurement.l_plus * f_plus + measurement.l_minus * (1.0 - f_plus)) / F


def shots_for(eps: float, F: float) -> int:
    return max(1, math.ceil(1.0 / (eps**2 * F)))


def fold_sizes(shots: int, folds: int) -> np.ndarray:
    folds = max(1, min(folds, shots))
    base, extra = divmod(shots, folds)
    return np.array([base + (i < extra) for i in range(folds)], dtype=int)


@dataclass(frozen=True)
class ProtocolConfig:
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    warm_restarts: int = 5
    max_rounds: int = 50
    seed: int = 0
    folds: int = 10
    # Fold standard errors collapse whenever p+- is extreme, which happens
    # exactly when the guess is far off, so this stop rule is opt-in.
    subsample_stop: bool = False
    noiseless: bool = False


@dataclass(frozen=True)
class RoundRecord:
    lam: float
    F: float
    shots: int
    k_plus: float
    lam_next: float
    fold_se: float
    p_plus: float
    attempts: int = 1


@dataclass
class EstimationTrace:
    rounds: list[RoundRecord] = field(default_factory=list)
    converged: bool = False
    stop_reason: str = ""
    failed: bool = False

    @property
    def total_S(self) -> int:
        return sum(r.shots for r in self.rounds)

    @property
    def estimate(self) -> float:
        return self.rounds[-1].lam_next if self.rounds else float("nan")


@dataclass(frozen=True)
class Setting:
    """Pulse and initial state used in one round, plus the QFI at the guess."""

    pulse: ControlPulse
    psi0: np.ndarray
    F: float
    optimizer_F: float | None = None


def bloch_at(spec: ChainSpec, pulse: ControlPulse, lam: float, psi0):
    psi, dpsi, _, _ = evolve_state(compose_pulse(pulse, spec, lam, with_gradient=False), psi0)
    s = probe_surface(psi, dpsi)
    return s.u, s.du, s.deficit


def controlled_setting(spec, T, lam, cfg: OptimizerConfig, warm_start=None, cache=None) -> Setting:
    psi0 = np.zeros(spec.dim, dtype=complex)
    psi0[1] = 1.0
    key = None
    if cache is not None:
        ws = None if warm_start is None else np.asarray(warm_start, dtype=float).tobytes()
        key = ("control", spec, float(T), float(lam), cfg, ws)
        if key in cache:
            return cache[key]
    res = maximize_qfi(spec, T, lam, psi0, cfg, warm_start=warm_start)
    setting = Setting(res.best_pulse, psi0, res.best_F, res.best_F)
    if key is not None:
        cache[key] = setting
    return setting


def uncontrolled_setting(spec, T, lam, cache=None) -> Setting:
    key = ("free", spec, float(T), float(lam))
    if cache is not None and key in cache:
        return cache[key]
    theta, phi, F = optimize_initial_state_uncontrolled(spec, T, lam)
    setting = Setting(ControlPulse.constant(T, 0.0), probe_initial_state(theta, phi, spec.dim), F)
    if cache is not None:
        cache[key] = setting
    return setting


def run_protocol(spec: ChainSpec, T: float, lam_true: float, lam0: float, eps: float, use_control: bool,
                 config: ProtocolConfig = ProtocolConfig(), cache: dict | None = None) -> EstimationTrace:
    """Adaptive estimation of ``lam_true`` starting from the guess ``lam0``.

    Each round fixes a measurement at the current guess, spends
    ``ceil(1/(eps^2 F))`` shots on the true state and moves the guess to the
    estimator's sample mean.  Stops when the guess moves by less than ``eps``,
    when the fold standard error of the round drops below ``eps/2`` (if
    enabled), or after ``max_rounds``.  With ``config.noiseless`` the
    observed frequencies are replaced by the exact outcome probabilities.
    ``cache`` may be shared across runs to reuse optimiser results.
    """
    if not eps > 0:
        raise ConfigurationError(f"accuracy must be positive, got {eps!r}")
    rng = np.random.default_rng(config.seed)
    trace = EstimationTrace()
    lam = float(lam0)
    warm = None
    for n in range(config.max_rounds):
        attempts = 0
        while True:
            attempts += 1
            if use_control:
                opt = config.optimizer
                if warm is not None:
                    opt = replace(opt, restarts=config.warm_restarts)
                opt = replace(opt, rng_seed=opt.rng_seed + 1000 * n + attempts - 1)
                setting = controlled_setting(spec, T, lam, opt, warm, cache)
            else:
                setting = uncontrolled_setting(spec, T, lam, cache)
            u, du, deficit = bloch_at(spec, setting.pulse, lam, setting.psi0)
            F = qfi(u, du, deficit).F
            try:
                meas = sld_from_bloch(u, du, deficit)
                break
            except DegenerateMeasurementError as exc:
                log.warning("round %d: %s", n, exc)
                if not use_control or attempts >= 3:
                    trace.failed = True
                    trace.stop_reason = "degenerate-measurement"
                    return trace
                warm = None
        if not F > 0:
            trace.failed = True
            trace.stop_reason = "zero-qfi"
            return trace

        u_true, _, _ = bloch_at(spec, setting.pulse, lam_true, setting.psi0)
        p_plus, _ = outcome_probabilities(u_true, meas)
        shots = shots_for(eps, F)
        sizes = fold_sizes(shots, config.folds)
        if config.noiseless:
            counts = sizes * p_plus
        else:
            counts = np.array([simulate_round(p_plus, s, rng) for s in sizes])
        k_plus = counts.sum()
        lam_next = update_estimate(lam, meas, k_plus, shots, F)
        if sizes.size > 1:
            fold_est = [update_estimate(lam, meas, k, int(s), F) for k, s in zip(counts, sizes)]
            fold_se = float(np.std(fold_est, ddof=1) / np.sqrt(sizes.size))
        else:
            fold_se = float("inf")
        trace.rounds.append(RoundRecord(lam, F, shots, k_plus, lam_next, fold_se, p_plus, attempts))
        log.debug("round %d: lam=%.6g F=%.6g S=%d -> %.6g", n, lam, F, shots, lam_next)

        if abs(lam_next - lam) < eps:
            trace.converged, trace.stop_reason = True, "step"
            return trace
        if config.subsample_stop and fold_se < eps / 2:
            trace.converged, trace.stop_reason = True, "standard-error"
            return trace
        lam = lam_next
        if use_control:
            warm = setting.pulse.amplitudes
    trace.stop_reason = "max-rounds"
    return trace
