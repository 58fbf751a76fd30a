import numpy as np
import pytest

from bellforge.core.errors import DimensionMismatch, InvariantError, LocalBehaviorError, ZeroProbabilityError
from bellforge.core.operators import FactorSpace, identity, ket, projector, tensor, tensor_all, trace_distance
from bellforge.core.quantum import dichotomic, observable_to_povm, random_state, validate_state
from bellforge.core.scenarios import SYSTEMS, closed_form_chsh, paper_state, psi_state
from bellforge.models.filtering import apply_filters, identity_filter, make_filter
from bellforge.models.polytope import (
    DeterministicStrategy,
    behavior_from_state,
    chsh_scale_margin,
    lp_membership,
)
from bellforge.models.protocols import (
    apply_one_way,
    block_residual,
    block_weights,
    certify_nonlocal,
    extract_block,
    lift_for_records,
    make_round,
    reveal_and_certify,
    reveal_one_bit,
    reveal_two_bits,
    run_protocol,
    select_nonlocal_branch,
    trace_out_records,
)
from bellforge.models.witness import QUTRIT_M, QUTRIT_MT

P = 1 / 18


def _branch_sum(rho, pairs):
    return sum(tensor(M, N) @ rho @ tensor(M, N).conj().T for M, N in pairs)


def _random_qutrit_povm(rng):
    U = np.linalg.qr(rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3)))[0]
    signs = rng.choice([-1.0, 1.0], size=3)
    return observable_to_povm(dichotomic((U * signs) @ U.conj().T))


def test_record_layout(example):
    rho2 = example.rho2
    assert rho2.space.labels == ("A'", "A''", "A", "B", "B'", "B''")
    assert rho2.space.dims == (2, 2, 3, 3, 2, 2)
    assert rho2.records == ("A'", "B'", "A''", "B''")
    assert rho2.a_records == ("A'", "A''") and rho2.b_records == ("B'", "B''")


def test_revealed_state_matches_explicit_sum(example):
    rho = example.rho.matrix
    Ms, Ns = (QUTRIT_M, QUTRIT_MT), (QUTRIT_M, QUTRIT_MT)
    expected = np.zeros((144, 144), dtype=complex)
    for x in range(2):
        for y in range(2):
            K = tensor(Ms[x], Ns[y])
            expected += tensor_all(projector(x, 2), projector(y, 2), K @ rho @ K.conj().T,
                                   projector(x, 2), projector(y, 2))
    assert np.max(np.abs(example.rho2.matrix - expected)) <= 1e-12


def test_transcript_counts_bits(example):
    t = example.transcript
    assert (t.bits_A_to_B, t.bits_B_to_A) == (1, 1)
    assert [r.direction for r in t.rounds] == ["A->B", "B->A"]
    assert t.final_space == example.rho2.space


def test_round_trip_to_original(example):
    back = trace_out_records(example.rho2, example.rho2.records)
    assert back.space == SYSTEMS
    assert trace_distance(back.matrix, example.rho.matrix) <= 1e-12


def test_block_weights(example):
    p, q = example.p, example.q
    w = block_weights(example.rho2)
    assert w[(0, 0, 0, 0)] == pytest.approx(p, abs=1e-12)
    assert w[(0, 0, 1, 1)] == pytest.approx(2 * p, abs=1e-12)
    assert w[(1, 1, 0, 0)] == pytest.approx(2 * q, abs=1e-12)
    assert w[(1, 1, 1, 1)] == pytest.approx(4 * q, abs=1e-12)
    assert sum(w.values()) == pytest.approx(1.0, abs=1e-12)
    assert block_residual(example.rho2) <= 1e-12


def test_block_extraction_equals_filtering(example, psi):
    block, weight = extract_block(example.rho2, {})
    filtered, p = apply_filters(example.rho, *example.filters)
    assert weight == pytest.approx(p, abs=1e-12)
    np.testing.assert_allclose(block.matrix, filtered.matrix, atol=1e-12)
    np.testing.assert_allclose(block.matrix, psi.matrix, atol=1e-12)


def test_extract_block_errors(example):
    with pytest.raises(InvariantError, match="unknown label"):
        extract_block(example.rho2, {"A": 0})
    with pytest.raises(DimensionMismatch):
        extract_block(example.rho2, (0, 0))
    with pytest.raises(InvariantError, match="outcome out of range"):
        extract_block(example.rho2, (2, 0, 0, 0))
    with pytest.raises(ZeroProbabilityError):
        extract_block(example.rho2, (0, 1, 0, 0))


def test_identity_filters_write_zero_records(rng):
    rho = random_state(SYSTEMS, rng)
    rho2, transcript = reveal_two_bits(rho, identity_filter(3, "A"), identity_filter(3, "B"))
    w = block_weights(rho2)
    assert w[(0, 0, 0, 0)] == pytest.approx(1.0, abs=1e-12)
    assert sum(v for k, v in w.items() if k != (0, 0, 0, 0)) == pytest.approx(0.0, abs=1e-12)
    assert transcript.bits_A_to_B == 1


def test_dropping_middle_records_matches_product_construction(example):
    rho3 = trace_out_records(example.rho2, ["B'", "A''"])
    assert rho3.space.labels == ("A'", "A", "B", "B''")
    rho = example.rho.matrix
    Ms = (QUTRIT_M, QUTRIT_MT)
    expected = sum(
        tensor_all(projector(x, 2), tensor(Ms[x], Ms[y]) @ rho @ tensor(Ms[x], Ms[y]).conj().T, projector(y, 2))
        for x in range(2) for y in range(2)
    )
    assert np.max(np.abs(rho3.matrix - expected)) <= 1e-12


def test_make_round_checks_completeness():
    with pytest.raises(InvariantError, match="completeness violated"):
        make_round("A", [QUTRIT_M])
    with pytest.raises(DimensionMismatch):
        make_round("A", [QUTRIT_M, identity(2)])
    rnd = make_round("B", [projector(0, 3), projector(1, 3), projector(2, 3)])
    assert rnd.outcomes == (0, 1, 2)
    assert rnd.bits == 2
    coarse = make_round("B", [(projector(0, 3), 0), (projector(1, 3), 0), (projector(2, 3), 1)])
    assert coarse.bits == 1 and coarse.sender_record_dim == 2


def test_round_with_named_records(psi):
    rnd = make_round("B", [QUTRIT_M, QUTRIT_MT], record_labels=("Bm", "Am"))
    out = apply_one_way(psi, rnd)
    assert out.space.labels == ("Am", "A", "B", "Bm")
    assert out.records == ("Am", "Bm")
    with pytest.raises(InvariantError, match="labels not unique"):
        apply_one_way(out, rnd)


def test_round_acts_on_unknown_factor(psi):
    rnd = make_round("A", [QUTRIT_M, QUTRIT_MT], acts_on=("B",))
    with pytest.raises(InvariantError, match="unknown label"):
        apply_one_way(psi, rnd)


def test_three_outcome_round_keeps_weights(psi):
    rnd = make_round("A", [projector(0, 3), projector(1, 3), projector(2, 3)])
    out, transcript = run_protocol(psi, [rnd])
    assert out.space.dims == (3, 3, 3, 3)
    w = block_weights(out)
    assert w[(0, 0)] == pytest.approx(0.5) and w[(1, 1)] == pytest.approx(0.5)
    assert w[(2, 2)] == pytest.approx(0.0, abs=1e-15)
    assert transcript.bits_A_to_B == 2


def test_paper_observables_are_lifted_qutrit_measurements(example, qutrit_povms):
    strategy = DeterministicStrategy((1, 1), (1, 1))
    liftedA, liftedB = lift_for_records(example.rho2, *qutrit_povms, strategy)
    s = example.settings
    for lifted, obs in zip(liftedA + liftedB, (s.a1, s.a2, s.b1, s.b2)):
        povm = observable_to_povm(obs)
        for got, want in zip(lifted.elements, povm.elements):
            np.testing.assert_allclose(got, want, atol=1e-12)


def test_revealed_behavior_is_certified_nonlocal(example, qutrit_povms):
    liftedA, liftedB = lift_for_records(example.rho2, *qutrit_povms, DeterministicStrategy((1, 1), (1, 1)))
    result = certify_nonlocal(example.rho2, liftedA, liftedB)
    assert not result.inside
    assert chsh_scale_margin(result) >= closed_form_chsh(P) - 2.0 - 1e-6


def test_lift_requires_canonical_records():
    space = FactorSpace(("A", "R", "B"), (2, 2, 2))
    state = validate_state(identity(8) / 8, space, a_labels=("A", "R"), records=("R",))
    qubit = observable_to_povm(dichotomic(np.diag([1.0, -1.0])))
    with pytest.raises(InvariantError, match="records not canonical"):
        lift_for_records(state, [qubit], [qubit], DeterministicStrategy((1,), (1,)))


def test_reveal_and_certify_two_bits(example, qutrit_povms):
    out = reveal_and_certify(example.rho, *example.filters, *qutrit_povms)
    assert out.success_probability == pytest.approx(P, abs=1e-12)
    assert out.revealed_nonlocal
    assert out.mixture_error <= 1e-9
    assert not lp_membership(out.filtered_behavior).inside
    assert (out.transcript.bits_A_to_B, out.transcript.bits_B_to_A) == (1, 1)


def test_one_bit_reveals_a_single_filter(qutrit_povms):
    tau = validate_state(0.5 * psi_state().matrix + 0.5 * tensor(projector(2, 3), projector(2, 3)), SYSTEMS)
    mA = make_filter(QUTRIT_M, "A")
    filtered, p = apply_filters(tau, mA, identity_filter(3, "B"))
    np.testing.assert_allclose(filtered.matrix, psi_state().matrix, atol=1e-12)
    out = reveal_and_certify(tau, mA, None, *qutrit_povms)
    assert out.success_probability == pytest.approx(0.5)
    assert (out.transcript.bits_A_to_B, out.transcript.bits_B_to_A) == (1, 0)
    assert out.revealed.space.labels == ("A'", "A", "B", "B'")
    assert out.revealed_nonlocal
    assert out.mixture_error <= 1e-9


def test_reveal_one_bit_keeps_empty_branch(psi):
    rho1, transcript = reveal_one_bit(psi, make_filter(QUTRIT_M, "A"))
    assert transcript.bits_A_to_B == 1
    assert block_weights(rho1)[(1, 1)] == pytest.approx(0.0, abs=1e-15)


def test_identity_filter_still_sends_one_bit(psi):
    rho1, transcript = reveal_one_bit(psi, identity_filter(3, "A"))
    assert (transcript.bits_A_to_B, transcript.bits_B_to_A) == (1, 0)
    assert block_weights(rho1)[(1, 1)] == pytest.approx(0.0, abs=1e-15)
    kept, weight = extract_block(rho1, (0, 0))
    assert weight == pytest.approx(1.0)
    np.testing.assert_allclose(kept.matrix, psi.matrix, atol=1e-12)


def test_select_nonlocal_branch(qutrit_povms):
    half_m = tensor(QUTRIT_M / 2, projector(2, 3))
    state = validate_state(0.8 * psi_state().matrix + 0.1 * half_m + 0.1 * tensor(projector(2, 3), projector(2, 3)),
                           SYSTEMS)
    branches = [(QUTRIT_M, QUTRIT_M), (QUTRIT_M, QUTRIT_MT), (QUTRIT_MT, identity(3))]
    sel = select_nonlocal_branch(state, branches, *qutrit_povms)
    index, omega, weight = sel
    assert index == 0
    assert weight == pytest.approx(0.8)
    np.testing.assert_allclose(omega.matrix, psi_state().matrix, atol=1e-12)
    assert not sel.result.inside
    # every other branch is local on its own
    for M, N in branches[1:]:
        out = _branch_sum(state.matrix, [(M, N)])
        branch = validate_state(out / np.trace(out).real, SYSTEMS)
        assert lp_membership(behavior_from_state(branch, *qutrit_povms)).inside


def test_select_nonlocal_branch_errors(qutrit_povms):
    product = validate_state(tensor(projector(2, 3), projector(2, 3)), SYSTEMS)
    branches = [(QUTRIT_M, identity(3)), (QUTRIT_MT, identity(3))]
    with pytest.raises(LocalBehaviorError, match="aggregate behavior is local"):
        select_nonlocal_branch(product, branches, *qutrit_povms)
    with pytest.raises(InvariantError, match="completeness violated"):
        select_nonlocal_branch(product, [(QUTRIT_M, identity(3))], *qutrit_povms)


def test_example_state_behaviors_look_local(rng):
    rho = paper_state(P)
    for _ in range(200):
        povmsA = [_random_qutrit_povm(rng) for _ in range(2)]
        povmsB = [_random_qutrit_povm(rng) for _ in range(2)]
        assert lp_membership(behavior_from_state(rho, povmsA, povmsB)).inside


def test_partially_revealed_state_looks_local_to_record_blind_measurements(example, rng):
    rho3 = trace_out_records(example.rho2, ["B'", "A''"])
    blind = identity(2)
    for _ in range(200):
        povmsA = [_random_qutrit_povm(rng) for _ in range(2)]
        povmsB = [_random_qutrit_povm(rng) for _ in range(2)]
        liftedA = [observable_to_povm(dichotomic(tensor(blind, p.elements[0] - p.elements[1]))) for p in povmsA]
        liftedB = [observable_to_povm(dichotomic(tensor(p.elements[0] - p.elements[1], blind))) for p in povmsB]
        assert lp_membership(behavior_from_state(rho3, liftedA, liftedB)).inside


def test_pure_record_state_has_no_block_coupling():
    v = np.kron(ket(0, 2), np.kron(ket(0, 2), ket(1, 2))).reshape(-1)
    space = FactorSpace(("R", "A", "B"), (2, 2, 2))
    state = validate_state(np.outer(v, v.conj()), space, a_labels=("R", "A"), records=("R",))
    assert block_residual(state) == 0.0
