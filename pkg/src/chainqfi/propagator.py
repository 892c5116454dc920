"""Slot propagators, their exact parameter derivatives, and pulse composition.

Each slot propagator ``U = exp(-i H_{c,lam} dt)`` comes with ``dU/dlam``,
``dU/dc`` and ``d2U/dc dlam``.  All four are read off the first block column
of ``exp(-i M dt)`` where ``M`` is the 4x4 block lower-triangular generator
obtained by differentiating the Schroedinger equation.  ``M`` is not normal,
so the exponential goes through scaling-and-squaring Pade (``scipy.linalg.expm``).

Time ordering is right to left: ``U_total = U_m ... U_1``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .chain import ChainSpec, derivative_generators, static_part
from .errors import ConfigurationError, ContractError, NumericError

NORM_TOL = 1e-9


@dataclass(frozen=True)
class ControlPulse:
    """Piecewise-constant probe field over total time ``T``.

    Slots are equal (``T/m``) unless ``durations`` is given; non-uniform
    slots are only used for hand-built protocols, never by the optimiser.
    """

    T: float
    amplitudes: np.ndarray
    durations: np.ndarray | None = None

    def __post_init__(self):
        amps = np.atleast_1d(np.asarray(self.amplitudes, dtype=float))
        if amps.ndim != 1 or amps.size < 1:
            raise ConfigurationError("pulse needs at least one slot")
        if not np.isfinite(self.T) or self.T <= 0:
            raise ConfigurationError(f"probing time must be positive, got {self.T!r}")
        if not np.all(np.isfinite(amps)):
            raise NumericError("pulse amplitudes must be finite")
        object.__setattr__(self, "amplitudes", amps)
        if self.durations is not None:
            dur = np.asarray(self.durations, dtype=float)
            if dur.shape != amps.shape or np.any(dur < 0):
                raise ConfigurationError("durations must be non-negative, one per slot")
            if not np.isclose(dur.sum(), self.T, rtol=1e-12, atol=0):
                raise ConfigurationError(f"durations sum to {dur.sum()!r}, expected T = {self.T!r}")
            object.__setattr__(self, "durations", dur)

    @property
    def m(self) -> int:
        return self.amplitudes.size

    @property
    def dt(self) -> float:
        return self.T / self.m

    @property
    def slot_durations(self) -> np.ndarray:
        if self.durations is None:
            return np.full(self.m, self.dt)
        return self.durations

    def with_amplitudes(self, amplitudes) -> "ControlPulse":
        return ControlPulse(self.T, amplitudes, self.durations)

    @classmethod
    def constant(cls, T: float, c: float, m: int = 1) -> "ControlPulse":
        return cls(T, np.full(m, float(c)))


@dataclass(frozen=True)
class SlotBundle:
    U: np.ndarray
    dU_lam: np.ndarray
    dU_c: np.ndarray
    dU_clam: np.ndarray


@dataclass(frozen=True)
class PulseBundle:
    """Full-pulse propagator and its derivatives.

    ``dU_c[i]`` and ``dU_clam[i]`` are derivatives with respect to the
    amplitude of slot ``i``; they are ``None`` when the gradient was not requested.
    """

    U: np.ndarray
    dU_lam: np.ndarray
    dU_c: np.ndarray | None = None
    dU_clam: np.ndarray | None = None


def _check_generators(H_lam, dH, H_ctrl):
    H_lam, dH, H_ctrl = (np.asarray(a, dtype=complex) for a in (H_lam, dH, H_ctrl))
    d = H_lam.shape[0]
    for a in (H_lam, dH, H_ctrl):
        if a.shape != (d, d):
            raise ConfigurationError(f"generator shapes disagree: {H_lam.shape}, {dH.shape}, {H_ctrl.shape}")
        if not np.all(np.isfinite(a)):
            raise NumericError("generator has non-finite entries")
    return H_lam, dH, H_ctrl


def _block_generators(H_lam, dH, H_ctrl, cs, mixed: bool) -> np.ndarray:
    d = H_lam.shape[0]
    nb = 4 if mixed else 2
    M = np.zeros((len(cs), nb * d, nb * d), dtype=complex)
    H = H_lam[None] + np.asarray(cs)[:, None, None] * H_ctrl[None]
    for b in range(nb):
        M[:, b * d:(b + 1) * d, b * d:(b + 1) * d] = H
    M[:, d:2 * d, :d] = dH
    if mixed:
        M[:, 2 * d:3 * d, :d] = H_ctrl
        M[:, 3 * d:, d:2 * d] = H_ctrl
        M[:, 3 * d:, 2 * d:3 * d] = dH
    return M


def slot_blocks(H_lam, dH, H_ctrl, cs, dt, mixed: bool = True) -> np.ndarray:
    """Vectorised slot bundles for an array of amplitudes.

    Returns an array of shape ``(len(cs), nb, d, d)`` holding the first block
    column of ``exp(-i M dt)``; ``nb`` is 4 with the control derivatives and
    2 without (``U`` and ``dU/dlam`` only).  Repeated amplitudes are
    exponentiated once.  ``dt`` is a scalar or one duration per amplitude.
    """
    H_lam, dH, H_ctrl = _check_generators(H_lam, dH, H_ctrl)
    cs = np.atleast_1d(np.asarray(cs, dtype=float))
    dts = np.broadcast_to(np.asarray(dt, dtype=float), cs.shape)
    if not (np.all(np.isfinite(cs)) and np.all(np.isfinite(dts))):
        raise NumericError("non-finite amplitude or slot duration")
    if np.any(dts < 0):
        raise ConfigurationError(f"slot duration must be non-negative, got {dt}")
    d = H_lam.shape[0]
    nb = 4 if mixed else 2
    keys = np.stack([cs, dts], axis=1)
    uniq, inverse = np.unique(keys, axis=0, return_inverse=True)
    M = _block_generators(H_lam, dH, H_ctrl, uniq[:, 0], mixed)
    E = expm(-1j * uniq[:, 1, None, None] * M)[:, :, :d]
    blocks = E.reshape(len(uniq), nb, d, d)[inverse.ravel()]
    if not np.all(np.isfinite(blocks)):
        raise NumericError("matrix exponential produced non-finite entries")
    return blocks


def slot_bundle(H_lam, dH, H_ctrl, c: float, dt: float) -> SlotBundle:
    """Propagator of one slot at amplitude ``c`` with its three derivatives."""
    b = slot_blocks(H_lam, dH, H_ctrl, [c], dt)[0]
    return SlotBundle(b[0], b[1], b[2], b[3])


def compose_blocks(blocks: np.ndarray) -> PulseBundle:
    """Chain-rule composition of per-slot blocks (slot 0 acts first).

    Prefix products ``P_k = U_{k-1} ... U_0`` and suffix products
    ``S_k = U_{m-1} ... U_{k+1}`` are accumulated together with their
    lambda-derivatives, which turns the product-rule sums into O(m) work.
    """
    m, nb, d, _ = blocks.shape
    U, dL = blocks[:, 0], blocks[:, 1]
    eye = np.eye(d, dtype=complex)
    zero = np.zeros((d, d), dtype=complex)

    P = np.empty((m + 1, d, d), dtype=complex)
    dP = np.empty((m + 1, d, d), dtype=complex)
    P[0], dP[0] = eye, zero
    for k in range(m):
        P[k + 1] = U[k] @ P[k]
        dP[k + 1] = dL[k] @ P[k] + U[k] @ dP[k]
    if nb == 2:
        return PulseBundle(P[m], dP[m])

    dC, dCL = blocks[:, 2], blocks[:, 3]
    S = np.empty((m, d, d), dtype=complex)
    dS = np.empty((m, d, d), dtype=complex)
    S[m - 1], dS[m - 1] = eye, zero
    for k in range(m - 1, 0, -1):
        S[k - 1] = S[k] @ U[k]
        dS[k - 1] = dS[k] @ U[k] + S[k] @ dL[k]
    dU_c = S @ dC @ P[:m]
    dU_clam = dS @ dC @ P[:m] + S @ dCL @ P[:m] + S @ dC @ dP[:m]
    return PulseBundle(P[m], dP[m], dU_c, dU_clam)


def compose_pulse(pulse: ControlPulse, spec: ChainSpec, lam: float, with_gradient: bool = True) -> PulseBundle:
    dH, H_ctrl = derivative_generators(spec)
    blocks = slot_blocks(static_part(spec, lam), dH, H_ctrl, pulse.amplitudes, pulse.slot_durations, mixed=with_gradient)
    return compose_blocks(blocks)


def check_normalised(psi: np.ndarray, what: str = "state") -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    norm = np.linalg.norm(psi)
    if abs(norm - 1.0) > NORM_TOL:
        raise ContractError(f"{what} must be normalised, |psi| = {norm!r}")
    return psi


def evolve_state(bundle: PulseBundle, psi0):
    """Apply every bundle matrix to ``psi0``.

    Returns ``(psi_T, dpsi_lam, dpsi_c, dpsi_clam)``; the last two are arrays
    of shape ``(m, d)`` or ``None`` if the bundle carries no control derivatives.
    """
    psi0 = check_normalised(psi0, "initial state")
    psi = bundle.U @ psi0
    dpsi = bundle.dU_lam @ psi0
    if bundle.dU_c is None:
        return psi, dpsi, None, None
    return psi, dpsi, bundle.dU_c @ psi0, bundle.dU_clam @ psi0
