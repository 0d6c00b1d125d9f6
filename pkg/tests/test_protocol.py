import itertools
import json

import numpy as np
import pytest
from scipy import stats

from qsum.core import B00, BELL_LABELS, BellLabel, MeasBasis, PreparedState
from qsum.protocol import (
    Backend,
    ConfigError,
    ProtocolConfig,
    SecretInputs,
    Verdict,
    chain_memories,
    correct_and_compute,
    distribute_entanglement,
    encode_private_inputs,
    pair_outcome_probabilities,
    perform_bsms,
    reg_index,
    run_protocol,
    run_security_detection,
    run_to_dict,
)
from qsum.statevector import CapacityError


def worked_example(backend):
    cfg = ProtocolConfig(n=2, L=1, R=2, backend=backend)
    rng = np.random.default_rng(0)
    net = distribute_entanglement(cfg, rng, link_labels=[[B00] * 3] * 3, reference=[PreparedState.PLUS])
    tape = [[B00]] * 3
    return run_protocol(cfg, [[0], [1]], rng, forced_outcomes=tape, network=net)


@pytest.mark.parametrize("backend", list(Backend))
def test_worked_example(backend):
    run = worked_example(backend)
    assert run.report.verdict is Verdict.PASS
    assert run.result.sum_bits == [1]
    assert run.result.readout_states == [PreparedState.MINUS]
    assert run.result.final_readouts == [1]
    assert run.network.applied_gates == [(0, 3)]
    assert run.transcript.bsm_results == [[B00]] * 3


@pytest.mark.parametrize("kwargs", [
    dict(n=1, L=1, R=2),
    dict(n=2, L=0, R=2),
    dict(n=2, L=1, R=3),
    dict(n=2, L=1, R=0),
    dict(n=2, L=1, R=2, detection_threshold=1.5),
    dict(n=2, L=1, R=2, seed=-1),
])
def test_config_rejects(kwargs):
    with pytest.raises(ConfigError):
        ProtocolConfig(**kwargs)


def test_capacity_error():
    cfg = ProtocolConfig(n=9, L=1, R=2)
    with pytest.raises(CapacityError):
        run_protocol(cfg, np.zeros((9, 1), dtype=int))
    # the Pauli backend has no qubit cap
    run = run_protocol(ProtocolConfig(n=9, L=1, R=2, backend="pauli"), np.zeros((9, 1), dtype=int))
    assert run.result.sum_bits == [0]


def test_chain_memories():
    assert chain_memories(2) == ["T", "0", "1", "2", "3", "4", "5"]
    assert reg_index("T") == 0
    assert reg_index(3) == 4


def test_inputs_shape_checked():
    cfg = ProtocolConfig(n=2, L=2, R=2)
    with pytest.raises(ConfigError):
        SecretInputs.coerce([[0, 1]], cfg)
    with pytest.raises(ConfigError):
        SecretInputs([[0, 2], [1, 1]])


def test_distribution_counts_and_views(rng):
    cfg = ProtocolConfig(n=2, L=1, R=2)
    net = distribute_entanglement(cfg, rng)
    assert sum(len(row) for row in net.link_labels) == 9
    assert len(net.tp_reference) == 1
    assert all(not v.announced_labels and not v.records for v in net.party_views)


def test_label_and_reference_uniformity(rng):
    cfg = ProtocolConfig(n=4, L=10, R=10)
    counts = np.zeros(4)
    refs = np.zeros(4)
    for _ in range(100):
        net = distribute_entanglement(cfg, rng)
        for row in net.link_labels:
            for lab in row:
                counts[lab.index] += 1
        for s in net.tp_reference:
            refs[list(PreparedState).index(s)] += 1
    assert counts.sum() == 10_000
    assert stats.chisquare(counts).pvalue > 0.001
    assert stats.chisquare(refs).pvalue > 0.001


def test_honest_detection_has_no_mismatches(rng):
    cfg = ProtocolConfig(n=4, L=6, R=6)
    for _ in range(20):
        net = distribute_entanglement(cfg, rng)
        report = run_security_detection(net, rng)
        assert report.passed
        assert all(c.mismatches == 0 and c.checks == 6 for c in report.links)


def test_decoy_choosers_and_accounting(rng):
    cfg = ProtocolConfig(n=3, L=5, R=4)
    net = distribute_entanglement(cfg, rng)
    run_security_detection(net, rng)
    for link in range(net.links):
        assert len(set(net.decoy_positions[link])) == 4
        assert net.pairs_remaining(link) == 5
        assert set(net.decoy_positions[link]).isdisjoint(net.chain_positions[link])
    choosers = {}
    for r in net.detection_records:
        choosers.setdefault(r.link, []).append(r.chooser)
    assert choosers[0] == [1] * 4
    assert choosers[3] == [3] * 4
    for i in (1, 2):
        assert sorted(choosers[i]) == [i, i, i + 1, i + 1]


def test_views_are_role_scoped(rng):
    cfg = ProtocolConfig(n=3, L=2, R=2)
    net = distribute_entanglement(cfg, rng)
    run_security_detection(net, rng)
    for view in net.party_views:
        links = {link for link, _ in view.announced_labels}
        assert links == {view.party - 1, view.party}
        assert all(r.link in links for r in view.records)


def test_decoy_labels_announced_before_measurements(rng):
    cfg = ProtocolConfig(n=2, L=1, R=2)
    net = distribute_entanglement(cfg, rng)
    run_security_detection(net, rng)
    kinds = [a.kind for a in net.announcements]
    assert kinds == ["decoy-labels", "decoy-measurements"] * 4


@pytest.mark.parametrize("label", BELL_LABELS)
@pytest.mark.parametrize("basis", list(MeasBasis))
def test_pair_distribution(label, basis):
    probs = pair_outcome_probabilities(label, basis)
    same = probs[0] + probs[3]
    expected_same = (label.x == 0) if basis is MeasBasis.COMPUTATIONAL else (label.y == 0)
    assert same == pytest.approx(1.0 if expected_same else 0.0, abs=1e-12)
    np.testing.assert_allclose(pair_outcome_probabilities(None, basis), [0.25] * 4, atol=1e-12)


def test_encoding_gates(rng):
    cfg = ProtocolConfig(n=3, L=2, R=2)
    net = distribute_entanglement(cfg, rng)
    run_security_detection(net, rng)
    encode_private_inputs(net, np.zeros((3, 2), dtype=int))
    assert net.applied_gates == []
    net = distribute_entanglement(cfg, rng)
    run_security_detection(net, rng)
    encode_private_inputs(net, [[1, 0], [0, 0], [0, 1]])
    assert net.applied_gates == [(0, 1), (1, 5)]


def test_encoding_requires_detection(rng):
    cfg = ProtocolConfig(n=2, L=1, R=2)
    net = distribute_entanglement(cfg, rng)
    with pytest.raises(ConfigError):
        encode_private_inputs(net, [[0], [0]])


@pytest.mark.parametrize("backend", list(Backend))
def test_completeness_random(backend, rng):
    cfg = ProtocolConfig(n=3, L=4, R=2, backend=backend)
    for _ in range(100):
        inputs = SecretInputs.random(cfg, rng)
        run = run_protocol(cfg, inputs, rng)
        assert run.result.sum_bits == inputs.pointwise_sum()


@pytest.mark.parametrize("backend", list(Backend))
def test_zero_inputs_give_zero_sum(backend, rng):
    cfg = ProtocolConfig(n=4, L=3, R=2, backend=backend)
    for _ in range(30):
        assert run_protocol(cfg, np.zeros((4, 3), dtype=int), rng).result.sum_bits == [0, 0, 0]


def test_n2_matches_two_party_semantics(rng):
    cfg = ProtocolConfig(n=2, L=1, R=2)
    for m1, m2 in itertools.product((0, 1), repeat=2):
        for _ in range(10):
            assert run_protocol(cfg, [[m1], [m2]], rng).result.sum_bits == [m1 ^ m2]


def test_backends_agree_on_forced_tapes():
    gen = np.random.default_rng(3)
    for n in range(2, 7):
        for trial in range(8):
            L = 2
            inputs = gen.integers(0, 2, size=(n, L))
            tape = [[BELL_LABELS[k] for k in row] for row in gen.integers(0, 4, size=(n + 1, L))]
            runs = []
            for backend in Backend:
                cfg = ProtocolConfig(n=n, L=L, R=2, backend=backend)
                runs.append(run_protocol(cfg, inputs, np.random.default_rng(trial), forced_outcomes=tape))
            dense, pauli = runs
            assert dense.transcript.bsm_results == pauli.transcript.bsm_results
            assert dense.result.sum_bits == pauli.result.sum_bits
            assert dense.result.final_readouts == pauli.result.final_readouts
            assert dense.result.correction_masks == pauli.result.correction_masks
            assert dense.network.link_labels == pauli.network.link_labels


def test_dense_bsm_marginals_uniform(rng):
    cfg = ProtocolConfig(n=2, L=20, R=2)
    counts = np.zeros((3, 4))
    for _ in range(100):
        run = run_protocol(cfg, SecretInputs.random(cfg, rng), rng)
        for i, row in enumerate(run.transcript.bsm_results):
            for lab in row:
                counts[i, lab.index] += 1
    for row in counts:
        assert stats.chisquare(row).pvalue > 0.001


def test_permuting_input_rows_keeps_sum(rng):
    cfg = ProtocolConfig(n=4, L=6, R=2)
    inputs = SecretInputs.random(cfg, rng)
    perm = inputs.bits[rng.permutation(4)]
    a = run_protocol(cfg, inputs, np.random.default_rng(1)).result.sum_bits
    b = run_protocol(cfg, perm, np.random.default_rng(2)).result.sum_bits
    assert a == b == inputs.pointwise_sum()


def test_incomplete_transcript_rejected(rng):
    cfg = ProtocolConfig(n=2, L=2, R=2)
    net = distribute_entanglement(cfg, rng)
    run_security_detection(net, rng)
    encode_private_inputs(net, [[0, 1], [1, 1]])
    tr = perform_bsms(net, rng)
    tr.bsm_results[1][0] = None
    with pytest.raises(ConfigError):
        correct_and_compute(tr, net, rng)


def test_bsm_requires_encoding(rng):
    cfg = ProtocolConfig(n=2, L=1, R=2)
    net = distribute_entanglement(cfg, rng)
    run_security_detection(net, rng)
    with pytest.raises(ConfigError):
        perform_bsms(net, rng)


def test_step4_results_are_private(rng):
    run = run_protocol(ProtocolConfig(n=3, L=2, R=2), [[1, 0], [0, 1], [1, 1]], rng)
    step4 = [a for a in run.transcript.announcements if a.step == "4"]
    assert [a.speaker for a in step4] == [1, 2, 3]
    assert not any(a.public for a in step4)


def test_threshold_zero_aborts_iff_mismatch(rng):
    cfg = ProtocolConfig(n=3, L=4, R=4)
    aborts = 0
    for _ in range(200):
        net = distribute_entanglement(cfg, rng)
        net.fake[1, :] = True
        run = run_protocol(cfg, np.zeros((3, 4), dtype=int), rng, network=net)
        mismatched = any(r.mismatch for r in run.transcript.detection_records)
        assert run.aborted == mismatched
        aborts += run.aborted
    # four fake checks pass together with probability 1/16
    assert 150 < aborts < 200


def test_lenient_threshold_passes(rng):
    cfg = ProtocolConfig(n=2, L=2, R=2, detection_threshold=1.0)
    net = distribute_entanglement(cfg, rng)
    net.fake[0, :] = True
    run = run_protocol(cfg, [[0, 0], [1, 0]], rng, network=net)
    assert not run.aborted
    assert run.network.attacked_chains == frozenset({0, 1})
    assert run.result.sum_bits == [None, None]


def test_json_secrets_hidden_by_default():
    run = run_protocol(ProtocolConfig(n=2, L=2, R=2, seed=5), [[0, 1], [1, 1]])
    doc = run_to_dict(run)
    json.dumps(doc)
    for key in ("link_labels", "tp_reference", "decoy_positions", "correction_masks", "final_readouts"):
        assert key not in doc
    revealed = run_to_dict(run, reveal_secrets=True)
    assert len(revealed["link_labels"]) == 3
    assert revealed["sum_bits"] == [1, 0]


def test_seeded_runs_repeat():
    cfg = ProtocolConfig(n=3, L=3, R=2, seed=42)
    a = run_to_dict(run_protocol(cfg, [[1, 0, 1], [0, 0, 1], [1, 1, 1]]), reveal_secrets=True)
    b = run_to_dict(run_protocol(cfg, [[1, 0, 1], [0, 0, 1], [1, 1, 1]]), reveal_secrets=True)
    assert a == b
