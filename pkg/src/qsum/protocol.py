"""The five-step teleportation summation protocol.

Party 0 is the third party (TP); parties ``1..n`` hold private bit strings.
Link ``i`` joins party ``i`` (memory ``2i``) to party ``i+1 mod n+1``
(memory ``2i+1``). Every link carries ``L + R`` ordered Bell pairs; after the
security check removes ``R`` of them, the ``j``-th survivors of all links form
chain ``j`` which carries bit ``j`` of the sum from memory ``T`` back to TP's
memory ``2n+1``.

Two interchangeable backends run the chains: ``DENSE`` simulates each chain's
``2n+3`` qubits exactly, ``PAULI`` tracks only the accumulated Pauli frame.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np

from .core import (
    B00,
    BELL_LABELS,
    IDENTITY,
    PAULI_U,
    PREPARED_STATES,
    BellLabel,
    MeasBasis,
    Parity,
    PauliOp,
    PreparedState,
    apply_pauli_to_prepared,
    correlation_expected,
    encode_E,
    pauli_compose,
    pauli_from_teleport_hop,
    pauli_xz,
)
from .statevector import DEFAULT_QUBIT_CAP, CapacityError, Register

TP = 0


class ConfigError(ValueError):
    """Invalid protocol or scenario configuration."""


class Backend(Enum):
    DENSE = "dense"
    PAULI = "pauli"


class Verdict(Enum):
    PASS = "pass"
    ABORT = "abort"


@dataclass(frozen=True)
class ProtocolConfig:
    n: int
    L: int
    R: int
    backend: Backend = Backend.DENSE
    detection_threshold: float = 0.0
    seed: int = 0
    qubit_cap: int = DEFAULT_QUBIT_CAP
    # reported only; whether TP publishes the sum does not change the run
    publish_sum: bool = False

    def __post_init__(self):
        if isinstance(self.backend, str):
            object.__setattr__(self, "backend", Backend(self.backend))
        if self.n < 2:
            raise ConfigError(f"need at least 2 participants, got n={self.n}")
        if self.L < 1:
            raise ConfigError(f"need L >= 1 payload bits, got L={self.L}")
        if self.R < 2 or self.R % 2:
            raise ConfigError(f"R must be even and >= 2, got R={self.R}")
        if not 0.0 <= self.detection_threshold <= 1.0:
            raise ConfigError("detection_threshold must lie in [0, 1]")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")

    @property
    def chain_qubits(self) -> int:
        return len(chain_memories(self.n))

    def check_capacity(self) -> None:
        if self.backend is Backend.DENSE and self.chain_qubits > self.qubit_cap:
            raise CapacityError(
                f"dense chain for n={self.n} needs {self.chain_qubits} qubits, cap is {self.qubit_cap}"
            )

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "L": self.L,
            "R": self.R,
            "backend": self.backend.value,
            "detection_threshold": self.detection_threshold,
            "seed": self.seed,
            "qubit_cap": self.qubit_cap,
            "publish_sum": self.publish_sum,
        }


def chain_memories(n: int) -> list[str]:
    """Memories along one chain: ``T`` followed by ``0 .. 2n+1``."""
    return ["T"] + [str(k) for k in range(2 * n + 2)]


def reg_index(memory: int | str) -> int:
    """Register index of a chain memory (``T`` is qubit 0)."""
    return 0 if memory == "T" else int(memory) + 1


@dataclass
class SecretInputs:
    bits: np.ndarray

    def __post_init__(self):
        self.bits = np.asarray(self.bits, dtype=np.int8)
        if self.bits.ndim != 2 or not np.isin(self.bits, (0, 1)).all():
            raise ConfigError("inputs must be an n x L matrix of bits")

    @classmethod
    def coerce(cls, value, cfg: ProtocolConfig) -> "SecretInputs":
        inputs = value if isinstance(value, cls) else cls(value)
        if inputs.bits.shape != (cfg.n, cfg.L):
            raise ConfigError(f"inputs have shape {inputs.bits.shape}, expected {(cfg.n, cfg.L)}")
        return inputs

    @classmethod
    def random(cls, cfg: ProtocolConfig, rng: np.random.Generator) -> "SecretInputs":
        return cls(rng.integers(0, 2, size=(cfg.n, cfg.L)))

    def pointwise_sum(self) -> list[int]:
        return [int(b) for b in np.bitwise_xor.reduce(self.bits, axis=0)]


@dataclass(frozen=True)
class DetectionRecord:
    link: int
    position: int
    basis: MeasBasis
    bit_left: int
    bit_right: int
    chooser: int
    announced_label: BellLabel

    @property
    def mismatch(self) -> bool:
        seen = Parity.SAME if self.bit_left == self.bit_right else Parity.OPPOSITE
        return seen is not correlation_expected(self.announced_label, self.basis)


@dataclass(frozen=True)
class Announcement:
    step: str
    speaker: int
    kind: str
    public: bool
    data: tuple = ()


@dataclass
class PartyView:
    """What participant ``party`` has learned from announcements."""

    party: int
    announced_labels: dict = field(default_factory=dict)
    records: list = field(default_factory=list)


@dataclass
class NetworkState:
    """World state of one run. ``link_labels`` and ``tp_reference`` are TP's secrets."""

    cfg: ProtocolConfig
    link_labels: list[list[BellLabel]]
    tp_reference: list[PreparedState]
    fake: np.ndarray
    party_views: list[PartyView]
    decoy_positions: Optional[list[list[int]]] = None
    chain_positions: Optional[list[list[int]]] = None
    attacked_chains: frozenset = frozenset()
    detection_records: list[DetectionRecord] = field(default_factory=list)
    announcements: list[Announcement] = field(default_factory=list)
    encoding: Optional[np.ndarray] = None
    applied_gates: list[tuple[int, int]] = field(default_factory=list)
    registers: dict = field(default_factory=dict)

    @property
    def links(self) -> int:
        return self.cfg.n + 1

    def chain_label(self, link: int, chain: int) -> BellLabel:
        return self.link_labels[link][self.chain_positions[link][chain]]

    def chain_labels(self, chain: int) -> list[BellLabel]:
        return [self.chain_label(i, chain) for i in range(self.links)]

    def live_chains(self) -> list[int]:
        return [j for j in range(self.cfg.L) if j not in self.attacked_chains]

    def pairs_remaining(self, link: int) -> int:
        if self.decoy_positions is None:
            return len(self.link_labels[link])
        return len(self.link_labels[link]) - len(self.decoy_positions[link])


@dataclass(frozen=True)
class LinkCheck:
    link: int
    checks: int
    mismatches: int

    @property
    def rate(self) -> float:
        return self.mismatches / self.checks if self.checks else 0.0


@dataclass(frozen=True)
class DetectionReport:
    links: tuple[LinkCheck, ...]
    verdict: Verdict

    @property
    def passed(self) -> bool:
        return self.verdict is Verdict.PASS

    @property
    def total_mismatches(self) -> int:
        return sum(c.mismatches for c in self.links)


@dataclass
class Transcript:
    bsm_results: list[list[Optional[BellLabel]]]
    detection_records: list[DetectionRecord]
    announcements: list[Announcement]


@dataclass
class SumResult:
    sum_bits: list[Optional[int]]
    correction_masks: list[Optional[tuple[int, int]]]
    final_readouts: list[Optional[int]]
    readout_states: list[Optional[PreparedState]]


@dataclass
class ProtocolRun:
    report: DetectionReport
    result: Optional[SumResult]
    transcript: Transcript
    network: NetworkState

    @property
    def aborted(self) -> bool:
        return self.result is None


# --- Step 1 -------------------------------------------------------------------

def distribute_entanglement(cfg: ProtocolConfig, rng: np.random.Generator, *,
                            link_labels=None, reference=None) -> NetworkState:
    """TP draws ``(n+1)(L+R)`` Bell labels and ``L`` reference states.

    ``link_labels`` / ``reference`` override the random draws (for worked
    examples); the rng is consumed identically either way.
    """
    cfg.check_capacity()
    size = cfg.L + cfg.R
    drawn = rng.integers(0, 4, size=(cfg.n + 1, size))
    refs = rng.integers(0, 4, size=cfg.L)
    if link_labels is None:
        labels = [[BELL_LABELS[k] for k in row] for row in drawn]
    else:
        labels = [[BellLabel(*lab) for lab in row] for row in link_labels]
        if len(labels) != cfg.n + 1 or any(len(row) != size for row in labels):
            raise ConfigError(f"link_labels must be {(cfg.n + 1)} x {size}")
    if reference is None:
        ref = [PREPARED_STATES[k] for k in refs]
    else:
        ref = [PreparedState(s) if not isinstance(s, PreparedState) else s for s in reference]
        if len(ref) != cfg.L:
            raise ConfigError(f"reference must hold {cfg.L} states")
    return NetworkState(
        cfg=cfg,
        link_labels=labels,
        tp_reference=ref,
        fake=np.zeros((cfg.n + 1, size), dtype=bool),
        party_views=[PartyView(p) for p in range(1, cfg.n + 1)],
    )


# --- Step 2 -------------------------------------------------------------------

@lru_cache(maxsize=None)
def pair_outcome_probabilities(label: Optional[BellLabel], basis: MeasBasis) -> np.ndarray:
    """Joint distribution of ``(bit_left, bit_right)`` for a same-basis check.

    Computed on the dense register; ``label=None`` is a fake pair, i.e. halves
    of two independent Bell pairs presented as one pair. Index ``2*l + r``.
    """
    reg = Register()
    if label is None:
        reg.alloc_bell(B00)
        reg.alloc_bell(B00)
        left, right = 0, 3
    else:
        reg.alloc_bell(label)
        left, right = 0, 1
    kets = np.array([PreparedState.from_basis_bit(basis, b).vector() for b in (0, 1)])
    bras = np.kron(kets, kets).conj()
    probs = reg.probabilities((left, right), bras)
    probs.setflags(write=False)
    return probs


def _measure_pairs(net: NetworkState, link: int, positions, bases, rng: np.random.Generator):
    if net.cfg.backend is Backend.DENSE:
        probs = np.array([
            pair_outcome_probabilities(None if net.fake[link, p] else net.link_labels[link][p], b)
            for p, b in zip(positions, bases)
        ])
        cum = np.cumsum(probs, axis=1)
        u = rng.random(len(positions))[:, None] * cum[:, -1:]
        idx = np.minimum((u >= cum).sum(axis=1), 3)
        return [(int(k) >> 1, int(k) & 1) for k in idx]
    out = []
    for p, b in zip(positions, bases):
        left = int(rng.integers(2))
        if net.fake[link, p]:
            out.append((left, int(rng.integers(2))))
        else:
            flip = correlation_expected(net.link_labels[link][p], b) is Parity.OPPOSITE
            out.append((left, left ^ int(flip)))
    return out


def _check_batch(net, step, link, chooser, positions, rng, measure_rng):
    labels = tuple(net.link_labels[link][p] for p in positions)
    net.announcements.append(Announcement(step, TP, "decoy-labels", True, (link, tuple(positions), labels)))
    bases = [MeasBasis.COMPUTATIONAL if b else MeasBasis.DIAGONAL for b in rng.integers(0, 2, len(positions))]
    records = [
        DetectionRecord(link, int(pos), basis, left, right, chooser, lab)
        for pos, basis, lab, (left, right)
        in zip(positions, bases, labels, _measure_pairs(net, link, positions, bases, measure_rng))
    ]
    net.announcements.append(Announcement(
        step, chooser, "decoy-measurements", True,
        tuple((r.position, r.basis.value, r.bit_left, r.bit_right) for r in records)))
    # the two parties holding this link learn the announced data
    for party in {link, (link + 1) % net.links} - {TP}:
        view = net.party_views[party - 1]
        view.announced_labels.update({(link, int(p)): lab for p, lab in zip(positions, labels)})
        view.records.extend(records)
    net.detection_records.extend(records)
    return records


def run_security_detection(net: NetworkState, rng: np.random.Generator,
                           measure_rng: Optional[np.random.Generator] = None) -> DetectionReport:
    """Sub-steps 2.1-2.3: decoy selection, label announcement and same-basis checks.

    ``rng`` drives decoy and basis choices, ``measure_rng`` the measurement
    outcomes. Checked pairs are removed and the surviving pairs form chains.
    """
    cfg = net.cfg
    measure_rng = rng if measure_rng is None else measure_rng
    size = cfg.L + cfg.R
    decoys: list[list[int]] = [[] for _ in range(net.links)]
    per_link: list[list[DetectionRecord]] = [[] for _ in range(net.links)]

    def pick(link, count, chooser, step):
        taken = set(decoys[link])
        free = [p for p in range(size) if p not in taken]
        chosen = sorted(free[k] for k in rng.choice(len(free), size=count, replace=False))
        decoys[link].extend(chosen)
        per_link[link].extend(_check_batch(net, step, link, chooser, chosen, rng, measure_rng))

    pick(0, cfg.R, 1, "2.1")
    pick(cfg.n, cfg.R, cfg.n, "2.2")
    for i in range(1, cfg.n):
        pick(i, cfg.R // 2, i, "2.3")
        pick(i, cfg.R // 2, i + 1, "2.3")

    checks = tuple(
        LinkCheck(i, len(recs), sum(r.mismatch for r in recs)) for i, recs in enumerate(per_link)
    )
    verdict = Verdict.ABORT if any(c.rate > cfg.detection_threshold for c in checks) else Verdict.PASS
    remove_decoys(net, decoys)
    return DetectionReport(checks, verdict)


def remove_decoys(net: NetworkState, decoys: Sequence[Sequence[int]]) -> None:
    """Drop the consumed pairs; the j-th survivors of each link form chain j."""
    size = net.cfg.L + net.cfg.R
    net.decoy_positions = [sorted(int(p) for p in d) for d in decoys]
    net.chain_positions = []
    for d in net.decoy_positions:
        taken = set(d)
        net.chain_positions.append([p for p in range(size) if p not in taken])
    if any(len(c) != net.cfg.L for c in net.chain_positions):
        raise ConfigError("every link must keep exactly L pairs after decoy removal")
    net.attacked_chains = frozenset(
        j for j in range(net.cfg.L)
        if any(net.fake[i, net.chain_positions[i][j]] for i in range(net.links))
    )


# --- Step 3 -------------------------------------------------------------------

def build_chain_register(net: NetworkState, chain: int) -> Register:
    """Dense register for one chain: ``T`` then the ``n+1`` link pairs."""
    reg = Register(net.cfg.qubit_cap)
    reg.alloc_prepared(net.tp_reference[chain])
    for label in net.chain_labels(chain):
        reg.alloc_bell(label)
    return reg


def encode_private_inputs(net: NetworkState, inputs) -> None:
    """Party ``i`` applies ``U = ZX`` to its memory ``2i-1`` of chain ``j`` iff ``m_ij = 1``."""
    if net.chain_positions is None:
        raise ConfigError("security detection must run before encoding")
    inputs = SecretInputs.coerce(inputs, net.cfg)
    net.encoding = inputs.bits.copy()
    dense = net.cfg.backend is Backend.DENSE
    for j in net.live_chains():
        reg = build_chain_register(net, j) if dense else None
        for i in range(1, net.cfg.n + 1):
            if inputs.bits[i - 1, j]:
                net.applied_gates.append((j, 2 * i - 1))
                if dense:
                    reg.apply_gate(reg_index(2 * i - 1), PAULI_U)
        if dense:
            net.registers[j] = reg


# --- Step 4 -------------------------------------------------------------------

def perform_bsms(net: NetworkState, rng: np.random.Generator, forced=None) -> Transcript:
    """Every party Bell-measures its two memories on every chain.

    ``forced`` is an ``(n+1) x L`` tape of outcomes (row ``i`` is party ``i``)
    used instead of sampling.
    """
    if net.encoding is None:
        raise ConfigError("inputs must be encoded before the Bell measurements")
    cfg = net.cfg
    results: list[list[Optional[BellLabel]]] = [[None] * cfg.L for _ in range(net.links)]
    if cfg.backend is Backend.PAULI and forced is None:
        # outcomes of an honest chain are uniform and independent per hop
        draws = rng.integers(0, 4, size=(net.links, cfg.L))
    for j in net.live_chains():
        for i in range(net.links):
            tape = None if forced is None else BellLabel(*forced[i][j])
            if cfg.backend is Backend.DENSE:
                reg = net.registers[j]
                q = reg_index("T") if i == TP else reg_index(2 * i - 1)
                results[i][j] = reg.bsm(q, reg_index(2 * i), rng, forced=tape)
            else:
                results[i][j] = tape if tape is not None else BELL_LABELS[draws[i, j]]
    for i in range(1, net.links):
        net.announcements.append(Announcement("4", i, "bsm-results", False, tuple(results[i])))
    return Transcript(results, list(net.detection_records), list(net.announcements))


# --- Step 5 -------------------------------------------------------------------

def correction_mask(labels: Sequence[BellLabel], outcomes: Sequence[BellLabel]) -> tuple[int, int]:
    """``(S_x, S_z)``: XOR over hops of ``a_i ^ x_i`` and ``b_i ^ y_i``."""
    sx = sz = 0
    for lab, out in zip(labels, outcomes):
        sx ^= lab.x ^ out.x
        sz ^= lab.y ^ out.y
    return sx, sz


def pauli_frame(labels: Sequence[BellLabel], outcomes: Sequence[BellLabel],
                u_exponents: Sequence[int]) -> PauliOp:
    """Operator accumulated on the travelling qubit along one chain.

    ``u_exponents[i-1]`` is party ``i``'s encoding, applied after hop ``i-1``.
    """
    op = IDENTITY
    for hop, (lab, out) in enumerate(zip(labels, outcomes)):
        op = pauli_compose(pauli_from_teleport_hop(lab, out), op)
        if hop < len(u_exponents) and u_exponents[hop]:
            op = pauli_compose(PAULI_U, op)
    return op


def correct_and_compute(tr: Transcript, net: NetworkState,
                        rng: Optional[np.random.Generator] = None) -> SumResult:
    """TP undoes the chain's Pauli frame, reads out in the reference basis and compares."""
    cfg = net.cfg
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    L = cfg.L
    out = SumResult([None] * L, [None] * L, [None] * L, [None] * L)
    for j in net.live_chains():
        outcomes = [tr.bsm_results[i][j] for i in range(net.links)]
        if any(o is None for o in outcomes):
            raise ConfigError(f"transcript incomplete for chain {j}")
        labels = net.chain_labels(j)
        sx, sz = correction_mask(labels, outcomes)
        phi = net.tp_reference[j]
        fix = pauli_xz(sx, sz)
        if cfg.backend is Backend.DENSE:
            reg = net.registers[j]
            last = reg_index(2 * cfg.n + 1)
            reg.apply_gate(last, fix)
            t = reg.measure_in_basis(last, phi.basis, rng)
            readout = PreparedState.from_basis_bit(phi.basis, t)
        else:
            frame = pauli_frame(labels, outcomes, net.encoding[:, j])
            readout, _ = apply_pauli_to_prepared(pauli_compose(fix, frame), phi)
            t = readout.e_bit
        out.sum_bits[j] = encode_E(phi) ^ encode_E(readout)
        out.correction_masks[j] = (sx, sz)
        out.final_readouts[j] = t
        out.readout_states[j] = readout
    return out


# --- full run -----------------------------------------------------------------

def run_protocol(cfg: ProtocolConfig, inputs, rng: Optional[np.random.Generator] = None, *,
                 forced_outcomes=None, network: Optional[NetworkState] = None) -> ProtocolRun:
    """Steps 1-5. Returns early (``result=None``) when detection aborts.

    The rng is split into independent streams for distribution, decoy/basis
    choices, detection outcomes, Bell measurements and readout, so both
    backends see the same network and decoys for a given seed.
    """
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    dist_rng, choice_rng, det_rng, bsm_rng, read_rng = rng.spawn(5)
    inputs = SecretInputs.coerce(inputs, cfg)
    net = network if network is not None else distribute_entanglement(cfg, dist_rng)
    report = run_security_detection(net, choice_rng, det_rng)
    if not report.passed:
        tr = Transcript([[None] * cfg.L for _ in range(net.links)],
                        list(net.detection_records), list(net.announcements))
        return ProtocolRun(report, None, tr, net)
    encode_private_inputs(net, inputs)
    tr = perform_bsms(net, bsm_rng, forced=forced_outcomes)
    result = correct_and_compute(tr, net, read_rng)
    return ProtocolRun(report, result, tr, net)


# --- serialisation ------------------------------------------------------------

def _bits(label: Optional[BellLabel]):
    return None if label is None else [label.x, label.y]


def run_to_dict(run: ProtocolRun, reveal_secrets: bool = False) -> dict:
    """JSON-ready record of one run; TP's secrets only with ``reveal_secrets``."""
    net = run.network
    doc = {
        "config": net.cfg.to_dict(),
        "verdict": run.report.verdict.value,
        "link_checks": [
            {"link": c.link, "checks": c.checks, "mismatches": c.mismatches, "rate": c.rate}
            for c in run.report.links
        ],
        "detection_records": [
            {
                "link": r.link,
                "position": r.position,
                "basis": r.basis.value,
                "bit_left": r.bit_left,
                "bit_right": r.bit_right,
                "chooser": r.chooser,
                "announced_label": _bits(r.announced_label),
            }
            for r in run.transcript.detection_records
        ],
        "bsm_results": [[_bits(o) for o in row] for row in run.transcript.bsm_results],
        "sum_bits": None if run.result is None else run.result.sum_bits,
    }
    if reveal_secrets:
        doc["link_labels"] = [[_bits(lab) for lab in row] for row in net.link_labels]
        doc["tp_reference"] = [s.value for s in net.tp_reference]
        doc["decoy_positions"] = net.decoy_positions
        if run.result is not None:
            doc["correction_masks"] = run.result.correction_masks
            doc["final_readouts"] = run.result.final_readouts
    return doc
