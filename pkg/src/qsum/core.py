"""Symbolic algebra for Bell labels, single-qubit Paulis and the E-encoding.

Pauli operators are kept in the canonical form ``i**phase * Z**z * X**x``.
Everything here is an immutable value; the dense simulator in
:mod:`qsum.statevector` is used by the test-suite to check these rules.
"""
from __future__ import annotations

from enum import Enum
from typing import NamedTuple

import numpy as np


class BellLabel(NamedTuple):
    """Two bits ``(x, y)`` naming ``|B_xy> = (|0,x> + (-1)^y |1,x^1>)/sqrt(2)``."""

    x: int
    y: int

    def __xor__(self, other: "BellLabel") -> "BellLabel":  # type: ignore[override]
        return BellLabel(self.x ^ other.x, self.y ^ other.y)

    def __str__(self) -> str:
        return f"{self.x}{self.y}"

    @classmethod
    def from_index(cls, index: int) -> "BellLabel":
        return cls((index >> 1) & 1, index & 1)

    @property
    def index(self) -> int:
        return 2 * self.x + self.y


BELL_LABELS: tuple[BellLabel, ...] = tuple(BellLabel.from_index(k) for k in range(4))
B00 = BELL_LABELS[0]


class MeasBasis(Enum):
    COMPUTATIONAL = "computational"
    DIAGONAL = "diagonal"


class Parity(Enum):
    SAME = "same"
    OPPOSITE = "opposite"


class PreparedState(Enum):
    ZERO = "0"
    ONE = "1"
    PLUS = "+"
    MINUS = "-"

    @property
    def basis(self) -> MeasBasis:
        if self in (PreparedState.ZERO, PreparedState.ONE):
            return MeasBasis.COMPUTATIONAL
        return MeasBasis.DIAGONAL

    @property
    def e_bit(self) -> int:
        return 1 if self in (PreparedState.ONE, PreparedState.MINUS) else 0

    @classmethod
    def from_basis_bit(cls, basis: MeasBasis, bit: int) -> "PreparedState":
        if basis is MeasBasis.COMPUTATIONAL:
            return cls.ONE if bit else cls.ZERO
        return cls.MINUS if bit else cls.PLUS

    def vector(self) -> np.ndarray:
        s = 1 / np.sqrt(2)
        return {
            PreparedState.ZERO: np.array([1, 0], dtype=complex),
            PreparedState.ONE: np.array([0, 1], dtype=complex),
            PreparedState.PLUS: np.array([s, s], dtype=complex),
            PreparedState.MINUS: np.array([s, -s], dtype=complex),
        }[self]


PREPARED_STATES: tuple[PreparedState, ...] = tuple(PreparedState)


class PauliOp(NamedTuple):
    """``i**phase * Z**z * X**x`` with phase taken mod 4."""

    phase: int = 0
    z: int = 0
    x: int = 0

    def __matmul__(self, other: "PauliOp") -> "PauliOp":
        return pauli_compose(self, other)

    def __pow__(self, k: int) -> "PauliOp":
        out = IDENTITY
        for _ in range(k % 4):
            out = pauli_compose(out, self)
        return out

    def matrix(self) -> np.ndarray:
        zm = np.diag([1, -1]).astype(complex)
        xm = np.array([[0, 1], [1, 0]], dtype=complex)
        out = (1j ** self.phase) * np.eye(2, dtype=complex)
        if self.z:
            out = out @ zm
        if self.x:
            out = out @ xm
        return out

    def __str__(self) -> str:
        sign = ("", "i", "-", "-i")[self.phase % 4]
        body = ("Z" if self.z else "") + ("X" if self.x else "")
        return sign + (body or "I")


IDENTITY = PauliOp(0, 0, 0)
PAULI_X = PauliOp(0, 0, 1)
PAULI_Z = PauliOp(0, 1, 0)
# the encoding unitary U = ZX
PAULI_U = PauliOp(0, 1, 1)
ALL_PAULIS: tuple[PauliOp, ...] = tuple(
    PauliOp(p, z, x) for p in range(4) for z in (0, 1) for x in (0, 1)
)


def pauli_compose(p: PauliOp, q: PauliOp) -> PauliOp:
    """Canonical form of the product ``p @ q``.

    Moving ``X**p.x`` right past ``Z**q.z`` costs a factor ``(-1)**(p.x*q.z)``.
    """
    phase = (p.phase + q.phase + 2 * (p.x & q.z)) % 4
    return PauliOp(phase, p.z ^ q.z, p.x ^ q.x)


def pauli_xz(sx: int, sz: int) -> PauliOp:
    """The operator ``X**sx Z**sz`` (X written first) in canonical form."""
    return pauli_compose(PauliOp(0, 0, sx), PauliOp(0, sz, 0))


def pauli_from_teleport_hop(link: BellLabel, bsm: BellLabel) -> PauliOp:
    """Residual ``Z**(y^b) X**(x^a)`` left on the far qubit after one hop.

    ``link`` is the label ``(a, b)`` of the shared pair and ``bsm`` the outcome
    ``(x, y)``. The ``(-1)**(b*x)`` prefactor is a global phase and is dropped.
    """
    return PauliOp(0, bsm.y ^ link.y, bsm.x ^ link.x)


# action of X and Z on the four prepared states: (state, phase exponent)
_X_ACTION = {
    PreparedState.ZERO: (PreparedState.ONE, 0),
    PreparedState.ONE: (PreparedState.ZERO, 0),
    PreparedState.PLUS: (PreparedState.PLUS, 0),
    PreparedState.MINUS: (PreparedState.MINUS, 2),
}
_Z_ACTION = {
    PreparedState.ZERO: (PreparedState.ZERO, 0),
    PreparedState.ONE: (PreparedState.ONE, 2),
    PreparedState.PLUS: (PreparedState.MINUS, 0),
    PreparedState.MINUS: (PreparedState.PLUS, 0),
}


def apply_pauli_to_prepared(p: PauliOp, s: PreparedState) -> tuple[PreparedState, int]:
    """Apply ``p`` to ``|s>``; returns the new state and phase exponent (mod 4)."""
    phase = p.phase
    if p.x:
        s, k = _X_ACTION[s]
        phase += k
    if p.z:
        s, k = _Z_ACTION[s]
        phase += k
    return s, phase % 4


def encode_E(s: PreparedState) -> int:
    """0 for ``|0>, |+>``; 1 for ``|1>, |->``."""
    return s.e_bit


def entanglement_swap(outer_left: BellLabel, outer_right: BellLabel, bsm: BellLabel) -> BellLabel:
    """Label of the outer pair after a BSM joins two Bell pairs."""
    return outer_left ^ outer_right ^ bsm


def correlation_expected(label: BellLabel, basis: MeasBasis) -> Parity:
    """Parity of same-basis local measurements on the two halves of ``|B_label>``."""
    bit = label.x if basis is MeasBasis.COMPUTATIONAL else label.y
    return Parity.OPPOSITE if bit else Parity.SAME
