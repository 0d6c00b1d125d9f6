"""Acceptance criteria, one test each.

Run with pytest for the summary block, or directly
(``python tests/test_acceptance.py``) for one PASS/FAIL line per criterion.
"""
import itertools
import time
from fractions import Fraction

import numpy as np
import pytest
from scipy import stats

from conftest import ACCEPTANCE_LINES, within_sigma
from qsum.adversary import Position, analytic_escape_probability
from qsum.core import (
    B00,
    BELL_LABELS,
    PAULI_U,
    PREPARED_STATES,
    PreparedState,
    apply_pauli_to_prepared,
    entanglement_swap,
    pauli_compose,
    pauli_from_teleport_hop,
)
from qsum.harness import (
    RateParams,
    ScenarioSpec,
    efficiency_table,
    estimate_link_rate,
    run_scenario,
    simulator_memory_count,
)
from qsum.protocol import (
    Backend,
    ProtocolConfig,
    SecretInputs,
    distribute_entanglement,
    build_chain_register,
    run_protocol,
    run_security_detection,
)
from qsum.statevector import Register, equal_up_to_global_phase

ALPHA = 0.001


def criterion_1():
    t0 = time.perf_counter()
    outcomes = []
    for backend in Backend:
        cfg = ProtocolConfig(n=2, L=1, R=2, backend=backend)
        rng = np.random.default_rng(0)
        net = distribute_entanglement(cfg, rng, link_labels=[[B00] * 3] * 3, reference=[PreparedState.PLUS])
        run = run_protocol(cfg, [[0], [1]], rng, forced_outcomes=[[B00]] * 3, network=net)
        outcomes.append((run.result.sum_bits[0], run.result.readout_states[0].name))
    elapsed = time.perf_counter() - t0
    ok = all(o == (1, PreparedState.MINUS.name) for o in outcomes) and elapsed < 1.0
    return ok, f"sum bit and readout per backend {outcomes}, {elapsed:.3f}s"


def criterion_2():
    t0 = time.perf_counter()
    dense = ProtocolConfig(n=3, L=2, R=2)
    bad = runs = 0
    for bits in itertools.product((0, 1), repeat=6):
        inputs = SecretInputs(np.array(bits).reshape(3, 2))
        for seed in range(64):
            run = run_protocol(dense, inputs, np.random.default_rng(seed))
            if not run.aborted:
                runs += 1
                bad += run.result.sum_bits != inputs.pointwise_sum()
    pauli = ProtocolConfig(n=10, L=16, R=2, backend=Backend.PAULI)
    gen = np.random.default_rng(2)
    pauli_runs = 0
    for seed in range(10_000):
        inputs = SecretInputs.random(pauli, gen)
        run = run_protocol(pauli, inputs, np.random.default_rng(seed))
        if not run.aborted:
            pauli_runs += 1
            bad += run.result.sum_bits != inputs.pointwise_sum()
    elapsed = time.perf_counter() - t0
    ok = bad == 0 and runs == 4096 and pauli_runs == 10_000 and elapsed <= 120
    return ok, f"{runs} dense + {pauli_runs} Pauli-frame runs, {bad} wrong, {elapsed:.1f}s"


def criterion_3():
    t0 = time.perf_counter()
    worst = 1.0
    cases = 0
    for link, outcome, s, u in itertools.product(BELL_LABELS, BELL_LABELS, PREPARED_STATES, (0, 1)):
        reg = Register()
        reg.alloc_prepared(s)
        reg.alloc_bell(link)
        if u:
            reg.apply_gate(2, PAULI_U)
        reg.bsm(0, 1, forced=outcome)
        op = pauli_from_teleport_hop(link, outcome)
        if u:
            op = pauli_compose(PAULI_U, op)
        state, phase = apply_pauli_to_prepared(op, s)
        expected = Register()
        expected.alloc_bell(outcome)
        expected.alloc_qubit((1j ** phase) * state.vector())
        worst = min(worst, abs(np.vdot(expected.amplitudes, reg.amplitudes)))
        cases += equal_up_to_global_phase(expected, reg)
    elapsed = time.perf_counter() - t0
    return cases == 128 and elapsed < 10, f"{cases}/128 cases, min overlap {worst:.12f}, {elapsed:.2f}s"


def criterion_4():
    t0 = time.perf_counter()
    good = 0
    for a, b, k in itertools.product(BELL_LABELS, repeat=3):
        reg = Register()
        reg.alloc_bell(a)
        reg.alloc_bell(b)
        reg.bsm(1, 2, forced=k)
        outer = entanglement_swap(a, b, k)
        good += outer == (a.x ^ b.x ^ k.x, a.y ^ b.y ^ k.y) and reg.bell_probabilities(0, 3)[outer.index] > 1 - 1e-9
    elapsed = time.perf_counter() - t0
    return good == 64 and elapsed < 10, f"{good}/64 triples, {elapsed:.2f}s"


def criterion_5():
    t0 = time.perf_counter()
    parts, ok = [], True
    for target, pos in ((2, Position.MID), (1, Position.ENDPOINT)):
        spec = ScenarioSpec(n=4, L=8, R=8, scenario="tp-swap", target=target, trials=10_000, seed=target)
        st = run_scenario(spec)
        p = analytic_escape_probability(8, 8, pos)
        ok &= within_sigma(st.escape_events, st.trials, p)
        parts.append(f"{pos.value} {st.escape_events / st.trials:.4f} vs {p}")
    elapsed = time.perf_counter() - t0
    return ok and elapsed <= 300, f"{', '.join(parts)}, {elapsed:.1f}s"


def criterion_6():
    # every pair of link 1 is fake, so each of its R checks lands on a fake
    spec = ScenarioSpec(n=4, L=8, R=8, scenario="fake-bell", fake_link=1, fake_count=16, trials=1300, seed=6)
    st = run_scenario(spec)
    ok = st.fake_checks >= 10_000 and within_sigma(st.fake_mismatches, st.fake_checks, 0.5)
    return ok, f"{st.fake_mismatches}/{st.fake_checks} = {st.fake_mismatches / st.fake_checks:.4f}"


COLLUSIONS = {
    "withhold": dict(honest_pair=(1, 3), strategy="withhold"),
    "swap": dict(honest_pair=(2, 4), strategy="swap"),
    "adjacent withhold": dict(honest_pair=(1, 2), strategy="withhold"),
    "adjacent swap": dict(honest_pair=(2, 3), strategy="swap"),
}


def criterion_7():
    t0 = time.perf_counter()
    parts, ok = [], True
    for seed, (name, kw) in enumerate(COLLUSIONS.items()):
        st = run_scenario(ScenarioSpec(n=4, L=2, R=2, scenario="collude", trials=10_000, seed=seed, **kw))
        pvalue = stats.binomtest(st.guess_correct, st.guesses, 0.5).pvalue
        ok &= st.guesses >= 10_000 and pvalue > ALPHA
        parts.append(f"{name} {st.guess_correct / st.guesses:.4f} (p={pvalue:.3f})")
    elapsed = time.perf_counter() - t0
    return ok and elapsed <= 600, f"{'; '.join(parts)}, {elapsed:.1f}s"


def _outcome_histogram(bits, seed, trials=10_000):
    cfg = ProtocolConfig(n=3, L=1, R=2)
    counts = np.zeros(4 ** 4, dtype=int)
    for k in range(trials):
        run = run_protocol(cfg, bits, np.random.default_rng([seed, k]))
        idx = 0
        for row in run.transcript.bsm_results:
            idx = 4 * idx + row[0].index
        counts[idx] += 1
    return counts


def criterion_8():
    # both matrices sum to 0, the one value TP is meant to learn
    a = _outcome_histogram([[0], [0], [0]], seed=1)
    b = _outcome_histogram([[1], [1], [0]], seed=2)
    _, pvalue, dof, _ = stats.chi2_contingency(np.vstack([a, b]))
    return pvalue > ALPHA, f"chi2 over {dof + 1} joint outcomes, p={pvalue:.3f}"


def criterion_9():
    ok = True
    for n in range(2, 17):
        rows = {r.protocol: r for r in efficiency_table(n)}
        ok &= rows["Teleportation chain"].qubits == 2 * n + 3 == simulator_memory_count(n)
        ok &= rows["Teleportation chain"].efficiency == Fraction(1, 2 * n + 3)
        ok &= rows["Shi et al."].efficiency == Fraction(1, 3 * n - 2)
        ok &= rows["Liu et al. ((n+1)-partite)"].efficiency == Fraction(1, 3 * n + 1)
    for n in range(2, 9):
        cfg = ProtocolConfig(n=n, L=1, R=2)
        net = distribute_entanglement(cfg, np.random.default_rng(n))
        run_security_detection(net, np.random.default_rng(n))
        ok &= build_chain_register(net, 0).qubit_count == 2 * n + 3
    n3 = {r.protocol: str(r.efficiency) for r in efficiency_table(3)}
    ok &= n3["Teleportation chain"] == "1/9" and n3["Shi et al."] == "1/7"
    return ok, f"n=3: teleportation chain {n3['Teleportation chain']}, Shi et al. {n3['Shi et al.']}; 2n+3 checked for n in 2..16"


def criterion_10():
    rate = estimate_link_rate(RateParams(50, 0.2, 0.1, 1e6))
    return rate == 10_000, f"{rate!r} links/s"


CRITERIA = [
    ("1 worked example", criterion_1),
    ("2 completeness", criterion_2),
    ("3 teleportation identity", criterion_3),
    ("4 entanglement swapping", criterion_4),
    ("5 TP swap escape rates", criterion_5),
    ("6 fake-pair mismatch rate", criterion_6),
    ("7 collusion guess accuracy", criterion_7),
    ("8 transcript privacy", criterion_8),
    ("9 efficiency table", criterion_9),
    ("10 link rate", criterion_10),
]


@pytest.mark.parametrize("name,check", CRITERIA, ids=[c[0] for c in CRITERIA])
def test_acceptance(name, check):
    ok, detail = check()
    ACCEPTANCE_LINES.append((name, ok, detail))
    assert ok, detail


if __name__ == "__main__":
    failed = 0
    for name, check in CRITERIA:
        ok, detail = check()
        failed += not ok
        print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}", flush=True)
    raise SystemExit(1 if failed else 0)
