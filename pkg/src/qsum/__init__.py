"""Simulator for multi-party quantum summation over chains of teleportation links."""
from .core import (
    BELL_LABELS,
    PAULI_U,
    BellLabel,
    MeasBasis,
    Parity,
    PauliOp,
    PreparedState,
    apply_pauli_to_prepared,
    correlation_expected,
    encode_E,
    entanglement_swap,
    pauli_compose,
    pauli_from_teleport_hop,
)
from .protocol import Backend, ConfigError, ProtocolConfig, SecretInputs, run_protocol
from .statevector import CapacityError, Register, equal_up_to_global_phase

__version__ = "0.1.0"
