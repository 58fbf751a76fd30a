import numpy as np
import pytest

from bellforge.core.config import BellforgeConfig
from bellforge.core.errors import CapacityError, DimensionMismatch, InvariantError, LocalBehaviorError
from bellforge.core.operators import FactorSpace, identity, projector
from bellforge.core.quantum import dichotomic, make_povm, observable_to_povm, pure_state, validate_state
from bellforge.models.polytope import (
    DeterministicStrategy,
    Scenario,
    behavior_from_state,
    chsh_scale_margin,
    deterministic_behavior,
    find_escaping_vertex,
    lift_povm,
    lp_membership,
    make_behavior,
    mix_with_vertex,
    no_signaling_check,
    strategies,
    vertex_matrix,
)
from bellforge.models.witness import chsh_from_behavior, horodecki_max_chsh

CHSH = Scenario((2, 2), (2, 2))


def _pr_box():
    p = np.zeros(CHSH.size)
    for k in range(2):
        for l in range(2):
            for i in range(2):
                for j in range(2):
                    if (i ^ j) == k * l:
                        p[CHSH.entry(k, l, i, j)] = 0.5
    return make_behavior(CHSH, p)


def _qubit_behavior(state):
    _, s = horodecki_max_chsh(state)
    povmsA = [observable_to_povm(s.a1), observable_to_povm(s.a2)]
    povmsB = [observable_to_povm(s.b1), observable_to_povm(s.b2)]
    return behavior_from_state(state, povmsA, povmsB)


def test_scenario_layout():
    sc = Scenario((2, 3), (2,))
    assert sc.vertex_count == 2 * 3 * 2
    assert sc.size == 4 + 6
    assert sc.entry(1, 0, 2, 1) == 4 + 5


def test_strategy_enumeration_order():
    first = list(strategies(CHSH))[:3]
    assert first == [
        DeterministicStrategy((1, 1), (1, 1)),
        DeterministicStrategy((1, 1), (1, 2)),
        DeterministicStrategy((1, 1), (2, 1)),
    ]
    D = vertex_matrix(CHSH)
    assert D.shape == (16, 16)
    np.testing.assert_allclose(D.sum(axis=1), 4.0)
    np.testing.assert_allclose(D[5], deterministic_behavior(CHSH, list(strategies(CHSH))[5]).probs)


def test_deterministic_strategy_checked():
    with pytest.raises(InvariantError, match="outcome out of range"):
        deterministic_behavior(CHSH, DeterministicStrategy((1, 3), (1, 1)))


def test_make_behavior_checks():
    with pytest.raises(DimensionMismatch):
        make_behavior(CHSH, np.full(15, 0.25))
    with pytest.raises(InvariantError, match="not normalized"):
        make_behavior(CHSH, np.full(16, 0.2))


def test_white_noise_is_inside():
    result = lp_membership(make_behavior(CHSH, np.full(16, 0.25)))
    assert result.inside
    np.testing.assert_allclose(result.weights @ vertex_matrix(CHSH), 0.25, atol=1e-9)
    assert result.weights.min() >= 0 and result.weights.sum() == pytest.approx(1.0)
    assert np.count_nonzero(result.weights > 1e-12) <= 9
    assert chsh_scale_margin(result) is None


def test_vertices_are_inside():
    for strat in list(strategies(CHSH))[::5]:
        assert lp_membership(deterministic_behavior(CHSH, strat)).inside


def test_pr_box_is_outside():
    pr = _pr_box()
    assert no_signaling_check(pr)
    assert chsh_from_behavior(pr) == pytest.approx(4.0)
    result = lp_membership(pr)
    assert not result.inside
    cert = result.certificate
    assert cert.kind == "normalized"
    assert cert.margin >= 2.0 - 1e-9
    assert np.max(np.abs(cert.coefficients)) == pytest.approx(1.0)
    assert np.max(vertex_matrix(CHSH) @ cert.coefficients + cert.offset) <= 1e-12


def test_farkas_certificate_is_verified():
    cfg = BellforgeConfig.from_dict({"polytope": {"certificate": "farkas"}})
    result = lp_membership(_pr_box(), cfg)
    assert not result.inside
    assert result.certificate.kind == "farkas"
    assert result.certificate.margin > 0
    assert np.max(vertex_matrix(CHSH) @ result.certificate.coefficients + result.certificate.offset) <= 1e-12


def test_vertex_cap():
    wide = Scenario((2,) * 10, (2,) * 10)
    assert wide.vertex_count == 2 ** 20
    with pytest.raises(CapacityError, match="exceed cap 100000"):
        lp_membership(make_behavior(wide, np.full(wide.size, 0.25)))
    cfg = BellforgeConfig.from_dict({"polytope": {"vertex_cap": 8}})
    with pytest.raises(CapacityError):
        lp_membership(make_behavior(CHSH, np.full(16, 0.25)), cfg)


def test_product_state_behavior_is_local_and_no_signaling(rng, random_qubit_observable):
    rho = validate_state(np.kron(projector(0, 2), identity(2) / 2), FactorSpace(("A", "B"), (2, 2)))
    povmsA = [observable_to_povm(dichotomic(random_qubit_observable())) for _ in range(2)]
    povmsB = [observable_to_povm(dichotomic(random_qubit_observable())) for _ in range(2)]
    b = behavior_from_state(rho, povmsA, povmsB)
    assert no_signaling_check(b)
    assert lp_membership(b).inside


def test_behavior_dimension_checked(psi):
    qubit = make_povm([projector(0, 2), projector(1, 2)])
    with pytest.raises(DimensionMismatch):
        behavior_from_state(psi, [qubit], [qubit])


def test_singlet_behavior_reaches_tsirelson():
    v = np.array([0, 1, -1, 0]) / np.sqrt(2)
    singlet = pure_state(v, FactorSpace(("A", "B"), (2, 2)))
    b = _qubit_behavior(singlet)
    assert abs(chsh_from_behavior(b)) == pytest.approx(2 * np.sqrt(2), abs=1e-9)
    result = lp_membership(b)
    assert not result.inside
    assert chsh_scale_margin(result) >= 2 * np.sqrt(2) - 2 - 1e-6


def test_mix_with_vertex_weight_checked():
    with pytest.raises(InvariantError, match="weight out of range"):
        mix_with_vertex(_pr_box(), 0.0, DeterministicStrategy((1, 1), (1, 1)))


def test_escaping_vertex_rejects_local_input():
    with pytest.raises(LocalBehaviorError):
        find_escaping_vertex(make_behavior(CHSH, np.full(16, 0.25)), 0.5)


def test_escaping_vertex_on_random_entangled_states(rng):
    found = 0
    while found < 20:
        v = rng.standard_normal(4) + 1j * rng.standard_normal(4)
        state = pure_state(v, FactorSpace(("A", "B"), (2, 2)))
        b = _qubit_behavior(state)
        if chsh_from_behavior(b) <= 2.01:
            continue
        found += 1
        for weight in (0.9, 0.5, 1 / 18):
            strategy, mixed, result = find_escaping_vertex(b, weight)
            assert not result.inside
            np.testing.assert_allclose(mixed.probs, mix_with_vertex(b, weight, strategy).probs)
            for earlier in strategies(b.scenario):
                if earlier == strategy:
                    break
                assert lp_membership(mix_with_vertex(b, weight, earlier)).inside


def test_all_plus_vertex_escapes_at_smallest_weight(psi, qutrit_povms):
    b = behavior_from_state(psi, *qutrit_povms)
    assert chsh_from_behavior(b) == pytest.approx(2 * np.sqrt(2), abs=1e-9)
    strategy, mixed, result = find_escaping_vertex(b, 1 / 18)
    assert strategy == DeterministicStrategy((1, 1), (1, 1))
    assert chsh_from_behavior(mixed) == pytest.approx(2 + 2 * (np.sqrt(2) - 1) / 18, abs=1e-9)
    assert not result.inside
    assert chsh_scale_margin(result) == pytest.approx(2 * (np.sqrt(2) - 1) / 18, abs=1e-4)


def _correlator_behavior(E):
    """Unbiased marginals, p(ij|kl) = (1 + (-1)^(i+j) E_kl) / 4."""
    p = np.zeros(CHSH.size)
    for k in range(2):
        for l in range(2):
            for i in range(2):
                for j in range(2):
                    p[CHSH.entry(k, l, i, j)] = (1 + (-1) ** (i + j) * E[k, l]) / 4
    return make_behavior(CHSH, p)


def _max_chsh_form(E):
    """Largest of the eight CHSH forms: one correlator negated, overall sign free."""
    total = E.sum()
    return max(abs(total - 2 * E[k, l]) for k in range(2) for l in range(2))


def test_membership_matches_chsh_forms_on_random_correlators():
    rng = np.random.default_rng(7)
    checked = 0
    while checked < 50:
        E = rng.uniform(-1, 1, size=(2, 2))
        s = _max_chsh_form(E)
        if abs(s - 2) < 1e-6:
            continue
        checked += 1
        assert lp_membership(_correlator_behavior(E)).inside == (s < 2)


def test_mixing_with_any_vertex_stays_local():
    noise = make_behavior(CHSH, np.full(16, 0.25))
    for strategy in strategies(CHSH):
        for weight in (0.3, 1.0):
            assert lp_membership(mix_with_vertex(noise, weight, strategy)).inside


def test_lift_povm_forces_outcome_off_block():
    povm = make_povm([projector(0, 2), projector(1, 2)], party=("A",))
    P0 = projector(0, 2)
    lifted = lift_povm(povm, P0, 2, 2, record_labels=("A'",))
    assert lifted.dim == 4
    assert lifted.party == ("A'", "A")
    np.testing.assert_allclose(lifted.elements[0], np.kron(P0, projector(0, 2)))
    np.testing.assert_allclose(lifted.elements[1], np.kron(P0, projector(1, 2)) + np.kron(projector(1, 2), identity(2)))
    after = lift_povm(povm, P0, 2, 1, records_after=True, record_labels=("B'",))
    assert after.party == ("A", "B'")
    np.testing.assert_allclose(after.elements[0], np.kron(projector(0, 2), P0) + np.kron(identity(2), projector(1, 2)))


def test_lift_povm_checks_arguments():
    povm = make_povm([projector(0, 2), projector(1, 2)])
    with pytest.raises(InvariantError, match="not a projector"):
        lift_povm(povm, identity(2) / 2, 2, 1)
    with pytest.raises(InvariantError, match="outcome out of range"):
        lift_povm(povm, projector(0, 2), 2, 3)
    with pytest.raises(DimensionMismatch):
        lift_povm(povm, projector(0, 3), 2, 1)
