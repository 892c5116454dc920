"""Heisenberg chain with a probe field on site 1 and a target field on site N.

Everything lives in the zero/one-excitation sector with basis ordering
``[|0>, |1>, ..., |N>]``: ``|0>`` is all spins down and ``|j>`` has only
spin ``j`` flipped up.  Units are hbar = 1, energies in J, times in 1/J.

Phase convention for the embedded sigma_y: ``<1|sy|0> = +i``, hence
``u_y = 2 Im(a1 * conj(a0))``.  The QFI does not depend on this choice.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import reduce

import numpy as np

from .errors import ConfigurationError, ResourceError

MAX_ORACLE_SPINS = 12


@dataclass(frozen=True)
class ChainSpec:
    N: int
    J: float = 1.0

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 2:
            raise ConfigurationError(f"chain needs N >= 2 spins, got {self.N!r}")
        if not np.isfinite(self.J) or self.J <= 0:
            raise ConfigurationError(f"coupling J must be positive, got {self.J!r}")

    @property
    def dim(self) -> int:
        return self.N + 1


@dataclass(frozen=True)
class SectorBasis:
    N: int

    @property
    def dimension(self) -> int:
        return self.N + 1

    @property
    def labels(self) -> list[str]:
        return [f"|{j}>" for j in range(self.N + 1)]

    def vector(self, j: int) -> np.ndarray:
        e = np.zeros(self.N + 1, dtype=complex)
        e[j] = 1.0
        return e


@dataclass(frozen=True)
class SectorHamiltonian:
    matrix: np.ndarray
    c: float
    lam: float


@dataclass(frozen=True)
class ProbeEmbedding:
    sx: np.ndarray
    sy: np.ndarray
    sz: np.ndarray

    def as_stack(self) -> np.ndarray:
        return np.stack([self.sx, self.sy, self.sz])


def _diagonal(spec: ChainSpec, c: float, lam: float) -> np.ndarray:
    N, J = spec.N, spec.J
    d = np.full(N + 1, -0.5 * J * (N - 5) + c + lam, dtype=float)
    d[0] = -0.5 * J * (N - 1) + c + lam
    d[1] = -0.5 * J * (N - 3) - c + lam
    d[N] = -0.5 * J * (N - 3) + c - lam
    return d


def build_sector_hamiltonian(spec: ChainSpec, c: float, lam: float) -> SectorHamiltonian:
    """Sector block of the chain Hamiltonian at probe field ``c`` and target field ``lam``."""
    H = np.diag(_diagonal(spec, c, lam)).astype(complex)
    idx = np.arange(1, spec.N)
    H[idx, idx + 1] = -spec.J
    H[idx + 1, idx] = -spec.J
    return SectorHamiltonian(H, float(c), float(lam))


def derivative_generators(spec: ChainSpec) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(dH/dlam, H_ctrl)``, both diagonal in the sector basis."""
    dlam = np.ones(spec.dim)
    dlam[spec.N] = -1.0
    ctrl = np.ones(spec.dim)
    ctrl[1] = -1.0
    return np.diag(dlam).astype(complex), np.diag(ctrl).astype(complex)


def static_part(spec: ChainSpec, lam: float) -> np.ndarray:
    """``H_lam``: the Hamiltonian with the probe field switched off."""
    return build_sector_hamiltonian(spec, 0.0, lam).matrix


def probe_embedding(N: int) -> ProbeEmbedding:
    dim = N + 1
    sx = np.zeros((dim, dim), dtype=complex)
    sx[0, 1] = sx[1, 0] = 1.0
    sy = np.zeros((dim, dim), dtype=complex)
    sy[1, 0] = 1j
    sy[0, 1] = -1j
    sz = -np.eye(dim, dtype=complex)
    sz[1, 1] = 1.0
    return ProbeEmbedding(sx, sy, sz)


_PAULI = {
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def site_operator(op: np.ndarray, site: int, N: int) -> np.ndarray:
    """Embed a single-spin operator on ``site`` (1-based) into the 2^N space.

    Tensor factor ordering is site 1 leftmost; single-spin basis is (up, down).
    """
    factors = [np.eye(2, dtype=complex)] * N
    factors[site - 1] = op
    return reduce(np.kron, factors)


def build_full_hamiltonian_oracle(spec: ChainSpec, c: float, lam: float) -> np.ndarray:
    """Literal tensor-product Hamiltonian on the full 2^N space (test oracle)."""
    N, J = spec.N, spec.J
    if N > MAX_ORACLE_SPINS:
        raise ResourceError(f"full Hamiltonian limited to N <= {MAX_ORACLE_SPINS}, got {N}")
    dim = 2**N
    H = np.zeros((dim, dim), dtype=complex)
    for j in range(1, N):
        for p in _PAULI.values():
            H -= 0.5 * J * site_operator(p, j, N) @ site_operator(p, j + 1, N)
    H -= c * site_operator(_PAULI["z"], 1, N)
    H -= lam * site_operator(_PAULI["z"], N, N)
    return H


def total_sz(N: int) -> np.ndarray:
    return sum(site_operator(_PAULI["z"], j, N) for j in range(1, N + 1))


def sector_isometry(N: int) -> np.ndarray:
    """Columns are the sector basis states written in the 2^N product basis."""
    up = np.array([1.0, 0.0])
    down = np.array([0.0, 1.0])
    cols = []
    for j in range(N + 1):
        cols.append(reduce(np.kron, [up if k == j else down for k in range(1, N + 1)]))
    return np.array(cols, dtype=complex).T


def project_to_sector(H_full: np.ndarray, N: int) -> np.ndarray:
    V = sector_isometry(N)
    return V.conj().T @ H_full @ V
