"""Dense state-vector simulation of a handful of qubits.

Qubit 0 is the most significant bit of the amplitude index. Qubits are only
ever appended; measured qubits stay in the register in their post-measurement
state.
"""
from __future__ import annotations

from typing import Optional

import numpy as np

from .core import BELL_LABELS, BellLabel, MeasBasis, PauliOp, PreparedState

DEFAULT_QUBIT_CAP = 20
NORM_TOL = 1e-9
OVERLAP_TOL = 1e-9


class CapacityError(ValueError):
    """Raised when a register would exceed its qubit cap."""


class DegenerateProjection(RuntimeError):
    """A forced or sampled outcome had (numerically) zero probability."""


def bell_vector(label: BellLabel) -> np.ndarray:
    """``|B_xy>`` over the basis ``|q1 q2>`` (index ``2*q1 + q2``)."""
    v = np.zeros(4, dtype=complex)
    s = 1 / np.sqrt(2)
    v[label.x] = s
    v[2 + (1 - label.x)] = s * (-1) ** label.y
    return v


# rows are <B_xy| for xy = 00, 01, 10, 11
_BELL_BRAS = np.array([bell_vector(b) for b in BELL_LABELS]).conj()
_BASIS_KETS = {
    MeasBasis.COMPUTATIONAL: np.array([[1, 0], [0, 1]], dtype=complex),
    MeasBasis.DIAGONAL: np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2),
}


def _sample(probs: np.ndarray, rng: np.random.Generator) -> int:
    r = rng.random() * probs.sum()
    return int(min(np.searchsorted(np.cumsum(probs), r, side="right"), len(probs) - 1))


class Register:
    """Amplitudes of ``qubit_count`` qubits, grown by the ``alloc_*`` methods."""

    def __init__(self, cap: int = DEFAULT_QUBIT_CAP):
        self.cap = cap
        self.amplitudes = np.ones(1, dtype=complex)

    @property
    def qubit_count(self) -> int:
        return int(self.amplitudes.size).bit_length() - 1

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def copy(self) -> "Register":
        other = Register(self.cap)
        other.amplitudes = self.amplitudes.copy()
        return other

    def _check(self, *qubits: int) -> None:
        k = self.qubit_count
        for q in qubits:
            if not 0 <= q < k:
                raise IndexError(f"qubit {q} out of range [0, {k})")

    def _append(self, state: np.ndarray) -> int:
        extra = int(state.size).bit_length() - 1
        if self.qubit_count + extra > self.cap:
            raise CapacityError(
                f"register cap is {self.cap} qubits; cannot add {extra} more to {self.qubit_count}"
            )
        first = self.qubit_count
        self.amplitudes = np.kron(self.amplitudes, state)
        return first

    def alloc_qubit(self, amplitudes) -> int:
        """Append one qubit in an arbitrary normalised state."""
        v = np.asarray(amplitudes, dtype=complex).reshape(2)
        if abs(np.linalg.norm(v) - 1) > NORM_TOL:
            raise ValueError("single-qubit state must be normalised")
        return self._append(v)

    def alloc_prepared(self, s: PreparedState) -> int:
        return self._append(s.vector())

    def alloc_bell(self, label: BellLabel) -> tuple[int, int]:
        q = self._append(bell_vector(label))
        return q, q + 1

    def _tensor(self) -> np.ndarray:
        return self.amplitudes.reshape((2,) * self.qubit_count)

    def apply_matrix(self, q: int, m: np.ndarray) -> None:
        self._check(q)
        t = np.tensordot(m, self._tensor(), axes=([1], [q]))
        self.amplitudes = np.moveaxis(t, 0, q).reshape(-1)

    def apply_gate(self, q: int, g: PauliOp) -> None:
        """Apply the Pauli ``g`` to qubit ``q``; the identity is a no-op."""
        self._check(q)
        if g.z == 0 and g.x == 0:
            if g.phase % 4:
                self.amplitudes = self.amplitudes * (1j ** g.phase)
            return
        self.apply_matrix(q, g.matrix())

    def _project(self, qubits: tuple[int, ...], bras: np.ndarray, rng, forced: Optional[int]) -> int:
        """Projective measurement onto the rows of ``bras`` (acting on ``qubits``)."""
        k = self.qubit_count
        t = np.moveaxis(self._tensor(), qubits, range(len(qubits)))
        flat = t.reshape(2 ** len(qubits), -1)
        rows = bras @ flat
        probs = np.einsum("ij,ij->i", rows, rows.conj()).real
        if forced is None:
            if rng is None:
                raise ValueError("an rng is required when the outcome is not forced")
            outcome = _sample(probs, rng)
        else:
            outcome = int(forced)
        p = probs[outcome]
        if p < 1e-12:
            raise DegenerateProjection(f"outcome {outcome} on qubits {qubits} has probability {p:.3g}")
        ket = bras[outcome].conj()
        post = np.outer(ket, rows[outcome] / np.sqrt(p))
        post = post.reshape((2,) * k)
        self.amplitudes = np.moveaxis(post, range(len(qubits)), qubits).reshape(-1)
        return outcome

    def bsm(self, q1: int, q2: int, rng: Optional[np.random.Generator] = None,
            forced: Optional[BellLabel] = None) -> BellLabel:
        """Bell-state measurement of ``(q1, q2)``; Born-rule sampled unless ``forced``."""
        self._check(q1, q2)
        if q1 == q2:
            raise ValueError("BSM needs two distinct qubits")
        idx = self._project((q1, q2), _BELL_BRAS, rng, None if forced is None else BellLabel(*forced).index)
        return BellLabel.from_index(idx)

    def measure_in_basis(self, q: int, basis: MeasBasis, rng: Optional[np.random.Generator] = None,
                         forced: Optional[int] = None) -> int:
        """Measure ``q`` in ``basis``; bit 0 is ``|0>`` or ``|+>``."""
        self._check(q)
        return self._project((q,), _BASIS_KETS[basis].conj(), rng, forced)

    def probabilities(self, qubits: tuple[int, ...], bras: np.ndarray) -> np.ndarray:
        self._check(*qubits)
        t = np.moveaxis(self._tensor(), qubits, range(len(qubits)))
        rows = bras @ t.reshape(2 ** len(qubits), -1)
        return np.einsum("ij,ij->i", rows, rows.conj()).real

    def bell_probabilities(self, q1: int, q2: int) -> np.ndarray:
        return self.probabilities((q1, q2), _BELL_BRAS)


def equal_up_to_global_phase(a: Register, b: Register, tol: float = OVERLAP_TOL) -> bool:
    if a.amplitudes.shape != b.amplitudes.shape:
        raise ValueError(f"shape mismatch: {a.qubit_count} vs {b.qubit_count} qubits")
    return abs(np.vdot(a.amplitudes, b.amplitudes)) >= 1 - tol
