"""Control-enhanced estimation of a remote field through a probe qubit on a Heisenberg chain."""

__version__ = "0.1.0"

from .chain import ChainSpec, build_sector_hamiltonian, derivative_generators  # noqa: E402
from .errors import ChainQfiError  # noqa: E402
from .propagator import ControlPulse, compose_pulse, evolve_state, slot_bundle  # noqa: E402
from .qfi import qfi, qfi_gradient, qfi_of_pulse, reduce_to_bloch  # noqa: E402

__all__ = [
    "ChainQfiError",
    "ChainSpec",
    "ControlPulse",
    "build_sector_hamiltonian",
    "compose_pulse",
    "derivative_generators",
    "evolve_state",
    "qfi",
    "qfi_gradient",
    "qfi_of_pulse",
    "reduce_to_bloch",
    "slot_bundle",
]
