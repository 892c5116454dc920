"""Probe Bloch vector, quantum Fisher information and its pulse gradient.

For a qubit with Bloch vector ``u`` depending on ``lam``::

    F = |du|^2 + (u . du)^2 / (1 - |u|^2)

``1 - |u|^2`` is evaluated as ``4 |a1|^2 sum_{j>=2} |a_j|^2`` straight from
the sector amplitudes, which avoids the cancellation of ``1 - |u|^2`` near
pure probe states.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .chain import ChainSpec, probe_embedding
from .errors import ContractError, NumericError
from .propagator import ControlPulse, check_normalised, compose_pulse, evolve_state

PURE_EPS = 1e-10
OVERLAP_EPS = 1e-8
BLOCH_TOL = 1e-9


@dataclass(frozen=True)
class ProbeSurface:
    u: np.ndarray
    du: np.ndarray
    deficit: float
    d_u: np.ndarray | None = None
    d_du: np.ndarray | None = None


@dataclass(frozen=True)
class QfiValue:
    F: float
    g: float


def _sigma_stack(dim: int) -> np.ndarray:
    return probe_embedding(dim - 1).as_stack()


def _bilinear(sig: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """``Re <x| sigma_k |y>`` for k = x, y, z; the trailing axis of ``x``/``y`` is the state."""
    return np.einsum("...a,kab,...b->...k", x.conj(), sig, y).real


def purity_deficit(psi: np.ndarray):
    """``1 - |u|^2`` of the probe, i.e. four times det of its reduced state.

    Works on a single state or a stack of states along the last axis.
    """
    p = np.abs(psi) ** 2
    return 4.0 * p[..., 1] * p[..., 2:].sum(axis=-1)


def reduce_to_bloch(psi, dpsi) -> tuple[np.ndarray, np.ndarray]:
    psi = check_normalised(psi)
    sig = _sigma_stack(psi.size)
    return _bilinear(sig, psi, psi), 2.0 * _bilinear(sig, np.asarray(dpsi), psi)


def probe_surface(psi, dpsi, dpsi_c=None, dpsi_clam=None) -> ProbeSurface:
    """Bloch vector, its lambda-derivative, and the per-slot derivatives if supplied."""
    u, du = reduce_to_bloch(psi, dpsi)
    d_u = d_du = None
    if dpsi_c is not None:
        sig = _sigma_stack(psi.size)
        d_u = 2.0 * _bilinear(sig, dpsi_c, psi)
        d_du = 2.0 * (_bilinear(sig, dpsi_clam, psi) + _bilinear(sig, dpsi[None, :], dpsi_c))
    return ProbeSurface(u, du, float(purity_deficit(psi)), d_u, d_du)


def _guarded_ratio(u, du, deficit):
    """``g = (u . du) / (1 - |u|^2)`` with the pure-state guard applied."""
    norm2 = float(u @ u)
    if norm2 > (1.0 + BLOCH_TOL) ** 2:
        raise NumericError(f"Bloch vector outside the ball: |u| = {np.sqrt(norm2)!r}")
    if deficit is None:
        deficit = 1.0 - norm2
    overlap = float(u @ du)
    if deficit < PURE_EPS:
        if abs(overlap) <= OVERLAP_EPS:
            return 0.0, overlap
        deficit = PURE_EPS
    return overlap / deficit, overlap


def qfi(u, du, deficit: float | None = None) -> QfiValue:
    """QFI of the probe; ``deficit`` overrides ``1 - |u|^2`` when known more accurately."""
    u = np.asarray(u, dtype=float)
    du = np.asarray(du, dtype=float)
    g, overlap = _guarded_ratio(u, du, deficit)
    F = float(du @ du) + g * overlap
    if not np.isfinite(F):
        raise NumericError("QFI is not finite")
    return QfiValue(max(F, 0.0), g)


def qfi_batch(u, du, deficit) -> np.ndarray:
    """Vectorised :func:`qfi` over leading axes (``u``, ``du`` shaped ``(..., 3)``)."""
    u = np.asarray(u, dtype=float)
    du = np.asarray(du, dtype=float)
    deficit = np.asarray(deficit, dtype=float)
    overlap = np.einsum("...k,...k->...", u, du)
    denom = np.maximum(deficit, PURE_EPS)
    second = np.where((deficit < PURE_EPS) & (np.abs(overlap) <= OVERLAP_EPS), 0.0, overlap**2 / denom)
    return np.maximum(np.einsum("...k,...k->...", du, du) + second, 0.0)


def qfi_gradient(surface: ProbeSurface) -> np.ndarray:
    if surface.d_u is None or surface.d_du is None:
        raise ContractError("per-slot derivatives are required for the QFI gradient")
    u, du = surface.u, surface.du
    g, _ = _guarded_ratio(u, du, surface.deficit)
    d_u, d_du = surface.d_u, surface.d_du
    return 2.0 * d_du @ du + 2.0 * g * (d_du @ u + d_u @ du + g * (d_u @ u))


def qfi_of_pulse(spec: ChainSpec, pulse: ControlPulse, lam: float, psi0, with_gradient: bool = False):
    """End-to-end QFI (and optionally its gradient over slot amplitudes)."""
    bundle = compose_pulse(pulse, spec, lam, with_gradient=with_gradient)
    surface = probe_surface(*evolve_state(bundle, psi0))
    value = qfi(surface.u, surface.du, surface.deficit)
    return value, (qfi_gradient(surface) if with_gradient else None)
