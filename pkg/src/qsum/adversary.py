"""Attacks on the summation protocol and the experiments that score them.

* ``TpSwap``: the third party hands out fake pairs around a target party so
  that its own qubits ``b`` and ``c`` get entangled with the target's two
  memories, then reads the target's bit off an entanglement swap.
* ``FakeBell``: fake pairs (halves of two unrelated Bell pairs) planted on a
  link, scored by how often the decoy checks catch them.
* ``Collusion``: ``n-2`` participants try to learn an honest party's bit,
  either by withholding a memory and measuring it or by swapping around the
  honest party.

Attacked qubits are simulated on small dense registers that contain exactly
the qubits the attack touches; everything else on the attacked chain is in a
product state with them.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from math import comb
from typing import Optional, Union

import numpy as np

from .core import (
    B00,
    BELL_LABELS,
    MeasBasis,
    PAULI_U,
    BellLabel,
    pauli_xz,
)
from .protocol import (
    Backend,
    ConfigError,
    LinkCheck,
    NetworkState,
    ProtocolConfig,
    SecretInputs,
    correct_and_compute,
    correction_mask,
    distribute_entanglement,
    encode_private_inputs,
    perform_bsms,
    remove_decoys,
    run_security_detection,
)
from .statevector import Register


class Position(Enum):
    MID = "mid"
    ENDPOINT = "endpoint"


class CollusionStrategy(Enum):
    WITHHOLD_AND_MEASURE = "withhold"
    SWAP_AND_COMPARE = "swap"


class GuessRule(Enum):
    # uniform basis / correction / unknown labels
    RANDOM = "random"
    # unknown labels taken as 00 and the reference as |0>
    ASSUME_ZERO = "assume-zero"
    # colluders are handed TP's secrets; a power check for the experiment
    LEAKED = "leaked"


@dataclass(frozen=True)
class TpSwap:
    target: int

    def validate(self, cfg: ProtocolConfig) -> None:
        if not 1 <= self.target <= cfg.n:
            raise ConfigError(f"target party must be in [1, {cfg.n}], got {self.target}")

    def position(self, cfg: ProtocolConfig) -> Position:
        return Position.ENDPOINT if self.target in (1, cfg.n) else Position.MID

    def fake_links(self, cfg: ProtocolConfig) -> list[int]:
        """Inner links TP has to fake; links 0 and n already end at TP."""
        i = self.target
        return [k for k in (i - 1, i) if 1 <= k <= cfg.n - 1]


@dataclass(frozen=True)
class FakeBell:
    link: int
    count: int = 1

    def validate(self, cfg: ProtocolConfig) -> None:
        if not 0 <= self.link <= cfg.n:
            raise ConfigError(f"link must be in [0, {cfg.n}], got {self.link}")
        if not 0 <= self.count <= cfg.L + cfg.R:
            raise ConfigError(f"cannot plant {self.count} fake pairs on a link of {cfg.L + cfg.R}")


@dataclass(frozen=True)
class Collusion:
    honest: tuple[int, int]
    strategy: CollusionStrategy = CollusionStrategy.WITHHOLD_AND_MEASURE
    rule: GuessRule = GuessRule.RANDOM

    @property
    def adjacent(self) -> bool:
        p, q = self.honest
        return q == p + 1

    def partners(self, cfg: ProtocolConfig) -> tuple[int, int]:
        """Dishonest parties doing the work: ``(left, right)`` around the honest block.

        ``left`` is 0 for the withholding strategy, where only ``right`` acts.
        """
        p, q = self.honest
        right = p + 2 if self.adjacent else p + 1
        left = p - 1 if self.strategy is CollusionStrategy.SWAP_AND_COMPARE else 0
        return left, right

    def validate(self, cfg: ProtocolConfig) -> None:
        p, q = self.honest
        if cfg.n < 4:
            raise ConfigError("collusion of n-2 participants needs n >= 4")
        if not 1 <= p < q <= cfg.n:
            raise ConfigError(f"honest pair must satisfy 1 <= p < q <= n, got {self.honest}")
        left, right = self.partners(cfg)
        if right > cfg.n or right == q:
            raise ConfigError(f"party {right} must exist and be dishonest for this strategy")
        if self.strategy is CollusionStrategy.SWAP_AND_COMPARE and left < 1:
            raise ConfigError("swap strategy needs a dishonest participant left of the honest party")


AttackScenario = Union[TpSwap, FakeBell, Collusion]


@dataclass
class AttackOutcome:
    detected: bool
    adversary_guess: Optional[int]
    guess_correct: Optional[bool]
    decoys_hit_fake_links: int = 0
    escaped: bool = False
    # both fake pairs ended up on the same chain (mid-chain TpSwap only)
    aligned: Optional[bool] = None
    # sum bits of the untouched chains; None when not checked
    remaining_correct: Optional[bool] = None


@dataclass
class FakeBellTrial:
    aborted: bool
    fakes_selected: int
    fake_checks: int
    fake_mismatches: int
    link_checks: tuple[LinkCheck, ...]


@dataclass
class FakeBellStats:
    trials: int
    aborts: int
    fake_checks: int
    fake_mismatches: int

    @property
    def mismatch_rate(self) -> float:
        return self.fake_mismatches / self.fake_checks if self.fake_checks else 0.0

    @property
    def abort_rate(self) -> float:
        return self.aborts / self.trials

    @property
    def pass_rate(self) -> float:
        return 1 - self.abort_rate


# --- analytic references ----------------------------------------------------

def _check_lr(L: int, R: int) -> None:
    if L < 1 or R < 2 or R % 2:
        raise ConfigError(f"need L >= 1 and even R >= 2, got L={L}, R={R}")


def analytic_escape_probability(L: int, R: int, position: Position | str) -> float:
    """Chance that no fake pair of the swap attack is picked as a decoy."""
    _check_lr(L, R)
    position = Position(position)
    single = Fraction(L, L + R)
    return float(single ** 2 if position is Position.MID else single)


def fake_pass_probability(L: int, R: int, count: int = 1) -> float:
    """Chance a link carrying ``count`` fake pairs passes a threshold-0 check.

    Each fake picked as a decoy is caught with probability 1/2; the number picked
    is hypergeometric since the ``R`` decoys are a uniform subset.
    """
    _check_lr(L, R)
    total = comb(L + R, R)
    p = Fraction(0)
    for k in range(0, min(count, R) + 1):
        p += Fraction(comb(count, k) * comb(L + R - count, R - k), total) * Fraction(1, 2 ** k)
    return float(p)


# --- helpers ----------------------------------------------------------------

def _require_dense(cfg: ProtocolConfig) -> None:
    if cfg.backend is not Backend.DENSE:
        raise ConfigError("attack experiments need the dense backend")


def _remaining_correct(net: NetworkState, inputs: SecretInputs, rng) -> bool:
    bsm_rng, read_rng = rng.spawn(2)
    encode_private_inputs(net, inputs)
    tr = perform_bsms(net, bsm_rng)
    result = correct_and_compute(tr, net, read_rng)
    expected = inputs.pointwise_sum()
    return all(result.sum_bits[j] == expected[j] for j in net.live_chains())


def _skip_detection(net: NetworkState) -> None:
    size = net.cfg.L + net.cfg.R
    remove_decoys(net, [range(net.cfg.L, size)] * net.links)


# --- TP entanglement-swapping attack ----------------------------------------

def _swap_guess(left: BellLabel, right: BellLabel, m: int, rng) -> tuple[int, int]:
    """Four-qubit gadget: ``(b, A)`` and ``(B, c)``; the target encodes on ``A``.

    Returns ``(guess, announced outcome)``.
    """
    reg = Register()
    b, a = reg.alloc_bell(left)
    bb, c = reg.alloc_bell(right)
    if m:
        reg.apply_gate(a, PAULI_U)
    announced = reg.bsm(a, bb, rng)
    tp_out = reg.bsm(b, c, rng)
    return int(tp_out != announced ^ left ^ right), announced


def _misaligned_guess(net: NetworkState, i: int, j1: int, j2: int, inputs: SecretInputs, rng) -> int:
    """Fakes on different chains: ``b``'s partner and ``c``'s partner are never joined."""
    reg = Register()
    b, a1 = reg.alloc_bell(B00)
    b1, _ = reg.alloc_bell(net.chain_label(i, j1))
    _, a2 = reg.alloc_bell(net.chain_label(i - 1, j2))
    b2, c = reg.alloc_bell(B00)
    for q, j in ((a1, j1), (a2, j2)):
        if inputs.bits[i - 1, j]:
            reg.apply_gate(q, PAULI_U)
    announced = reg.bsm(a1, b1, rng)
    reg.bsm(a2, b2, rng)
    tp_out = reg.bsm(b, c, rng)
    return int(tp_out != announced)


def tp_swap_attack(cfg: ProtocolConfig, scenario: TpSwap, inputs, rng: np.random.Generator, *,
                   detection: bool = True, check_remaining: bool = True) -> AttackOutcome:
    """One run of the third party's entanglement-swapping attack on ``scenario.target``.

    TP fakes the inner link(s) next to the target at one raw position and keeps
    ``b`` and ``c`` entangled (as ``B00``) with the target's memories. With
    ``detection=False`` the decoys are the last ``R`` pairs and go unchecked,
    a test-only mode in which the attack always lands.
    """
    _require_dense(cfg)
    scenario.validate(cfg)
    inputs = SecretInputs.coerce(inputs, cfg)
    dist, choice, meas, place, gadget, rest = rng.spawn(6)
    net = distribute_entanglement(cfg, dist)
    size = cfg.L + cfg.R
    pos = int(place.integers(size if detection else cfg.L))
    links = scenario.fake_links(cfg)
    for k in links:
        net.fake[k, pos] = True

    if detection:
        report = run_security_detection(net, choice, meas)
        detected = not report.passed
    else:
        _skip_detection(net)
        detected = False
    hits = sum(pos in net.decoy_positions[k] for k in links)
    out = AttackOutcome(detected=detected, adversary_guess=None, guess_correct=None,
                        decoys_hit_fake_links=hits, escaped=hits == 0)
    if detected:
        return out

    if out.escaped:
        i, n = scenario.target, cfg.n
        ranks = [net.chain_positions[k].index(pos) for k in links]
        out.aligned = len(set(ranks)) == 1
        j = ranks[0]
        truth = int(inputs.bits[i - 1, j])
        if not out.aligned:
            guess = _misaligned_guess(net, i, ranks[0], ranks[1], inputs, gadget)
        elif i == 1:
            guess, _ = _swap_guess(net.chain_label(0, j), B00, truth, gadget)
        elif i == n:
            guess, _ = _swap_guess(B00, net.chain_label(n, j), truth, gadget)
        else:
            guess, _ = _swap_guess(B00, B00, truth, gadget)
        out.adversary_guess = guess
        out.guess_correct = guess == truth
    if check_remaining:
        out.remaining_correct = _remaining_correct(net, inputs, rest)
    return out


# --- fake Bell pairs ----------------------------------------------------------

def fake_bell_trial(cfg: ProtocolConfig, scenario: FakeBell, rng: np.random.Generator) -> FakeBellTrial:
    scenario.validate(cfg)
    dist, choice, meas, place = rng.spawn(4)
    net = distribute_entanglement(cfg, dist)
    size = cfg.L + cfg.R
    fakes = set(int(p) for p in place.choice(size, size=scenario.count, replace=False))
    for p in fakes:
        net.fake[scenario.link, p] = True
    report = run_security_detection(net, choice, meas)
    on_fakes = [r for r in net.detection_records if r.link == scenario.link and r.position in fakes]
    return FakeBellTrial(
        aborted=not report.passed,
        fakes_selected=len(on_fakes),
        fake_checks=len(on_fakes),
        fake_mismatches=sum(r.mismatch for r in on_fakes),
        link_checks=report.links,
    )


def fake_bell_detection_experiment(cfg: ProtocolConfig, scenario: FakeBell, rng: np.random.Generator,
                                   trials: int = 1) -> FakeBellStats:
    """Plant fakes, run the security check ``trials`` times, and tally the catches."""
    stats = FakeBellStats(trials, 0, 0, 0)
    for child in rng.spawn(trials):
        t = fake_bell_trial(cfg, scenario, child)
        stats.aborts += t.aborted
        stats.fake_checks += t.fake_checks
        stats.fake_mismatches += t.fake_mismatches
    return stats


# --- collusion of n-2 participants -----------------------------------------

def _withhold(net: NetworkState, scenario: Collusion, j: int, inputs: SecretInputs, rng) -> tuple[int, int]:
    """Party ``w`` keeps memory ``2w-1`` of chain ``j`` and measures it."""
    p, q = scenario.honest
    _, w = scenario.partners(net.cfg)
    phi = net.tp_reference[j]
    labels = [net.chain_label(k, j) for k in range(w)]
    reg = Register(net.cfg.qubit_cap)
    reg.alloc_prepared(phi)
    for lab in labels:
        reg.alloc_bell(lab)
    for k in range(1, w):
        if inputs.bits[k - 1, j]:
            reg.apply_gate(2 * k, PAULI_U)
    outcomes = [reg.bsm(0, 1, rng)]
    outcomes += [reg.bsm(2 * k, 2 * k + 1, rng) for k in range(1, w)]

    if scenario.rule is GuessRule.LEAKED:
        sx, sz = correction_mask(labels, outcomes)
        basis, e = phi.basis, phi.e_bit
    elif scenario.rule is GuessRule.ASSUME_ZERO:
        sx, sz = correction_mask([B00] * w, outcomes)
        basis, e = MeasBasis.COMPUTATIONAL, 0
    else:
        sx, sz, b, e = (int(v) for v in rng.integers(0, 2, 4))
        basis = MeasBasis.COMPUTATIONAL if b else MeasBasis.DIAGONAL
    target = 2 * w
    reg.apply_gate(target, pauli_xz(sx, sz))
    t = reg.measure_in_basis(target, basis, rng)
    known = 0
    for k in range(1, w):
        if k not in (p, q):
            known ^= int(inputs.bits[k - 1, j])
    truth = 0
    for k in range(1, w):
        if k in (p, q):
            truth ^= int(inputs.bits[k - 1, j])
    return t ^ e ^ known, truth


def _swap_compare(net: NetworkState, scenario: Collusion, j: int, inputs: SecretInputs, rng) -> tuple[int, int]:
    """Parties ``left`` and ``right`` Bell-measure the outer memories around the honest block."""
    left, right = scenario.partners(net.cfg)
    links = list(range(left, right))
    labels = [net.chain_label(k, j) for k in links]
    reg = Register(net.cfg.qubit_cap)
    qubits = {}
    for k, lab in zip(links, labels):
        qubits[2 * k], qubits[2 * k + 1] = reg.alloc_bell(lab)
    honest = range(left + 1, right)
    truth = 0
    for k in honest:
        if inputs.bits[k - 1, j]:
            reg.apply_gate(qubits[2 * k - 1], PAULI_U)
            truth ^= 1
    announced = [reg.bsm(qubits[2 * k - 1], qubits[2 * k], rng) for k in honest]
    outer = reg.bsm(qubits[2 * left], qubits[2 * right - 1], rng)

    if scenario.rule is GuessRule.LEAKED:
        guessed_labels = labels
    elif scenario.rule is GuessRule.ASSUME_ZERO:
        guessed_labels = [B00] * len(labels)
    else:
        guessed_labels = [BELL_LABELS[int(k)] for k in rng.integers(0, 4, len(labels))]
    d = outer
    for lab in list(guessed_labels) + announced:
        d = d ^ lab
    # U on one side flips both label bits
    return d.x, truth


def collusion_attack(cfg: ProtocolConfig, scenario: Collusion, inputs, rng: np.random.Generator, *,
                     check_remaining: bool = False) -> AttackOutcome:
    """Colluders attack one uniformly chosen chain after an honest distribution.

    The guessed quantity is ``m_p`` or, for an adjacent honest pair,
    ``m_p ^ m_(p+1)``. Colluders are given every announced BSM outcome.
    """
    _require_dense(cfg)
    scenario.validate(cfg)
    inputs = SecretInputs.coerce(inputs, cfg)
    dist, choice, meas, pick, gadget, rest = rng.spawn(6)
    net = distribute_entanglement(cfg, dist)
    report = run_security_detection(net, choice, meas)
    out = AttackOutcome(detected=not report.passed, adversary_guess=None, guess_correct=None)
    if out.detected:
        return out
    j = int(pick.integers(cfg.L))
    if scenario.strategy is CollusionStrategy.WITHHOLD_AND_MEASURE:
        guess, truth = _withhold(net, scenario, j, inputs, gadget)
    else:
        guess, truth = _swap_compare(net, scenario, j, inputs, gadget)
    out.adversary_guess = guess
    out.guess_correct = guess == truth
    if check_remaining:
        net.attacked_chains = frozenset({j})
        out.remaining_correct = _remaining_correct(net, inputs, rest)
    return out
