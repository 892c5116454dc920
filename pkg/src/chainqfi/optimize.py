"""Pulse shaping by gradient ascent on the QFI, plus the uncontrolled baseline.

The ascent direction is a limited-memory BFGS estimate that falls back to the
plain gradient whenever it is not an ascent direction; every step passes an
Armijo backtracking test, so accepted iterates never lower the QFI.
"""
from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .chain import ChainSpec, derivative_generators, static_part
from .errors import ChainQfiError, ConfigurationError
from .propagator import ControlPulse, slot_blocks
from .qfi import purity_deficit, qfi_batch, qfi_of_pulse

log = logging.getLogger(__name__)

ARMIJO_C1 = 1e-4
SHRINK = 0.5
MAX_HALVINGS = 40
MEMORY = 10
BOUND_SLACK = 1e-9


@dataclass(frozen=True)
class OptimizerConfig:
    m: int = 20
    restarts: int = 20
    max_iterations: int = 500
    gradient_tolerance: float = 1e-6
    init_amplitude_range: tuple[float, float] = (-1.0, 1.0)
    amplitude_bound: float | None = None
    rng_seed: int = 0

    def __post_init__(self):
        if self.m < 1:
            raise ConfigurationError("m must be >= 1")
        if self.restarts < 1:
            raise ConfigurationError("restarts must be >= 1")
        if self.max_iterations < 0:
            raise ConfigurationError("max_iterations must be >= 0")
        if not self.gradient_tolerance > 0:
            raise ConfigurationError("gradient_tolerance must be positive")
        lo, hi = self.init_amplitude_range
        if not lo <= hi:
            raise ConfigurationError(f"bad init_amplitude_range {self.init_amplitude_range}")
        if self.amplitude_bound is not None and self.amplitude_bound <= 0:
            raise ConfigurationError("amplitude_bound must be positive")


@dataclass
class RestartRecord:
    initial_F: float
    F: float
    iterations: int
    converged: bool
    failed: bool = False
    amplitudes: np.ndarray | None = None
    trace: list[float] = field(default_factory=list)


@dataclass(frozen=True)
class OptimizationResult:
    best_pulse: ControlPulse
    best_F: float
    per_restart_F: list[float]
    iterations_used: list[int]
    converged_flags: list[bool]
    restarts: list[RestartRecord]
    best_index: int


def _lbfgs_direction(grad, history, gamma):
    """Two-loop recursion for the ascent direction of a maximisation.

    ``history`` holds ``(s, y)`` pairs with ``y`` the change of ``-grad``.
    """
    q = -grad.copy()
    alphas = []
    for s, y in reversed(history):
        rho = 1.0 / (y @ s)
        a = rho * (s @ q)
        alphas.append(a)
        q -= a * y
    r = gamma * q
    for (s, y), a in zip(history, reversed(alphas)):
        rho = 1.0 / (y @ s)
        b = rho * (y @ r)
        r += (a - b) * s
    return -r


def gradient_ascent(fun, x0, max_iterations=500, gradient_tolerance=1e-6, bound=None):
    """Maximise ``fun`` (returning value and gradient) from ``x0``.

    Stops when ``|grad| < gradient_tolerance * max(1, F)``.  Returns
    ``(x, F, iterations, converged, trace)`` where ``trace`` lists the
    accepted values, starting with ``F(x0)``.
    """
    clip = (lambda z: z) if bound is None else (lambda z: np.clip(z, -bound, bound))
    x = clip(np.asarray(x0, dtype=float).copy())
    F, g = fun(x)
    trace = [F]
    history: deque = deque(maxlen=MEMORY)
    gamma = None

    def done():
        gnorm = np.linalg.norm(g if bound is None else _projected_grad(x, g, bound))
        return gnorm < gradient_tolerance * max(1.0, F)

    while len(trace) <= max_iterations and not done():
        if gamma is None:
            d = g / max(1.0, np.linalg.norm(g))
        else:
            d = _lbfgs_direction(g, history, gamma)
            if not g @ d > 0:
                history.clear()
                d = g / max(1.0, np.linalg.norm(g))
        accepted = _armijo(fun, x, F, g, d, clip)
        if accepted is None and history:
            history.clear()
            d = g / max(1.0, np.linalg.norm(g))
            accepted = _armijo(fun, x, F, g, d, clip)
        if accepted is None:
            log.debug("line search stalled after %d steps, F=%g", len(trace) - 1, F)
            break
        x_new, F_new, g_new = accepted
        s = x_new - x
        y = g - g_new
        if s @ y > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            history.append((s, y))
            gamma = (s @ y) / (y @ y)
        x, F, g = x_new, F_new, g_new
        trace.append(F)
    return x, F, len(trace) - 1, bool(done()), trace


def _projected_grad(x, g, bound):
    g = g.copy()
    g[(x >= bound - BOUND_SLACK) & (g > 0)] = 0.0
    g[(x <= -bound + BOUND_SLACK) & (g < 0)] = 0.0
    return g


def _armijo(fun, x, F, g, d, clip):
    step = 1.0
    for _ in range(MAX_HALVINGS):
        x_new = clip(x + step * d)
        try:
            F_new, g_new = fun(x_new)
        except ChainQfiError:
            F_new = -np.inf
        if np.isfinite(F_new) and F_new >= F + ARMIJO_C1 * (g @ (x_new - x)) and F_new >= F:
            return x_new, F_new, g_new
        step *= SHRINK
    return None


def _restart_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(index)])


def maximize_qfi(spec: ChainSpec, T: float, lam_guess: float, psi0, config: OptimizerConfig,
                 warm_start=None) -> OptimizationResult:
    """Best-of-restarts gradient ascent of the QFI over slot amplitudes.

    Restart ``i`` draws its initial pulse from a generator seeded with
    ``(rng_seed, i)``.  With ``warm_start`` (an amplitude array) restart 0
    starts from it and the remaining restarts from perturbations of it.
    """
    if not T > 0:
        raise ConfigurationError(f"probing time must be positive, got {T!r}")
    template = ControlPulse(T, np.zeros(config.m))

    def fun(c):
        value, grad = qfi_of_pulse(spec, template.with_amplitudes(c), lam_guess, psi0, with_gradient=True)
        if not (np.isfinite(value.F) and np.all(np.isfinite(grad))):
            raise ChainQfiError("non-finite QFI during ascent")
        return value.F, grad

    lo, hi = config.init_amplitude_range
    records = []
    for i in range(config.restarts):
        rng = _restart_rng(config.rng_seed, i)
        if warm_start is None:
            c0 = rng.uniform(lo, hi, config.m)
        elif i == 0:
            c0 = np.asarray(warm_start, dtype=float).copy()
        else:
            c0 = np.asarray(warm_start, dtype=float) + rng.uniform(lo, hi, config.m) * 0.1 * i
        try:
            x, F, iters, conv, trace = gradient_ascent(
                fun, c0, config.max_iterations, config.gradient_tolerance, config.amplitude_bound)
        except ChainQfiError as exc:
            log.warning("restart %d failed: %s", i, exc)
            records.append(RestartRecord(np.nan, np.nan, 0, False, failed=True))
            continue
        records.append(RestartRecord(trace[0], F, iters, conv, amplitudes=x, trace=trace))
        log.debug("restart %d: F=%.6g after %d iterations (converged=%s)", i, F, iters, conv)

    good = [i for i, r in enumerate(records) if not r.failed]
    if not good:
        raise ChainQfiError("every optimiser restart failed")
    best = good[0]
    for i in good[1:]:
        if records[i].F > records[best].F:
            best = i
    return OptimizationResult(
        best_pulse=template.with_amplitudes(records[best].amplitudes),
        best_F=records[best].F,
        per_restart_F=[r.F for r in records],
        iterations_used=[r.iterations for r in records],
        converged_flags=[bool(r.converged) for r in records],
        restarts=records,
        best_index=best,
    )


def probe_initial_state(theta, phi, dim: int) -> np.ndarray:
    """``cos(theta/2)|0> + exp(i phi) sin(theta/2)|1>`` (broadcasts over angles)."""
    theta, phi = np.broadcast_arrays(np.asarray(theta, dtype=float), np.asarray(phi, dtype=float))
    psi = np.zeros(theta.shape + (dim,), dtype=complex)
    psi[..., 0] = np.cos(theta / 2)
    psi[..., 1] = np.exp(1j * phi) * np.sin(theta / 2)
    return psi


class UncontrolledQfi:
    """QFI at zero control as a function of the probe's initial Bloch angles."""

    def __init__(self, spec: ChainSpec, T: float, lam: float):
        dH, H_ctrl = derivative_generators(spec)
        b = slot_blocks(static_part(spec, lam), dH, H_ctrl, [0.0], T, mixed=False)[0]
        self.U, self.dU = b[0], b[1]
        self.dim = spec.dim

    def __call__(self, theta, phi):
        from .qfi import _bilinear, _sigma_stack

        psi0 = probe_initial_state(theta, phi, self.dim)
        psi = psi0 @ self.U.T
        dpsi = psi0 @ self.dU.T
        sig = _sigma_stack(self.dim)
        u = _bilinear(sig, psi, psi)
        du = 2.0 * _bilinear(sig, dpsi, psi)
        return qfi_batch(u, du, purity_deficit(psi))


GRID_STEP = np.pi / 60


def optimize_initial_state_uncontrolled(spec: ChainSpec, T: float, lam_guess: float, refine_top: int = 3):
    """Maximise the zero-control QFI over ``(theta, phi)``.

    A ``pi/60`` grid over ``[0, pi] x [0, 2 pi)`` is followed by Nelder-Mead
    refinement from the ``refine_top`` best grid points.
    """
    if not T > 0:
        raise ConfigurationError(f"probing time must be positive, got {T!r}")
    f = UncontrolledQfi(spec, T, lam_guess)
    thetas = np.arange(61) * GRID_STEP
    phis = np.arange(120) * GRID_STEP
    grid = f(thetas[:, None], phis[None, :])
    order = np.argsort(grid, axis=None)[::-1][:refine_top]
    best = (float(grid.flat[order[0]]), thetas[order[0] // 120], phis[order[0] % 120])
    for flat in order:
        start = np.array([thetas[flat // 120], phis[flat % 120]])
        res = minimize(lambda x: -f(x[0], x[1]), start, method="Nelder-Mead",
                       options={"xatol": 1e-10, "fatol": 1e-13, "maxiter": 4000})
        F = float(-res.fun)
        if F > best[0]:
            best = (F, float(res.x[0]), float(res.x[1]))
    F, theta, phi = best
    theta = float(np.mod(theta, 2 * np.pi))
    if theta > np.pi:
        theta, phi = 2 * np.pi - theta, phi + np.pi
    return theta, float(np.mod(phi, 2 * np.pi)), F


def uncontrolled_rate_envelope(spec: ChainSpec, T: float, lam: float, window: float | None = None,
                               samples: int = 120, fine_samples: int = 15):
    """Peak of the optimised zero-control ``F/T^2`` over ``[T, T + window]``.

    Without control ``F/T^2`` keeps oscillating at large ``T`` (for two spins
    with period ``pi / sqrt(J^2 + lam^2)``, the default window), so its
    large-T scaling is the envelope of these oscillations, not a limit.
    Returns ``(T_peak, theta, phi, F_peak / T_peak^2)``.
    """
    if window is None:
        window = np.pi / np.hypot(spec.J, lam)
    thetas = np.linspace(0.0, np.pi, 61)[:, None]
    phis = np.linspace(0.0, 2 * np.pi, 120, endpoint=False)[None, :]
    Ts = np.linspace(T, T + window, samples)
    coarse = [UncontrolledQfi(spec, t, lam)(thetas, phis).max() / t**2 for t in Ts]
    k = int(np.argmax(coarse))
    lo, hi = Ts[max(k - 1, 0)], Ts[min(k + 1, samples - 1)]
    fine = np.linspace(lo, hi, fine_samples)
    rates = [optimize_initial_state_uncontrolled(spec, t, lam, refine_top=1) for t in fine]
    j = int(np.argmax([r[2] / t**2 for r, t in zip(rates, fine)]))
    theta, phi, F = rates[j]
    return float(fine[j]), theta, phi, F / fine[j] ** 2
