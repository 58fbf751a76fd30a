import numpy as np
import pytest

from bellforge.core.errors import DimensionMismatch
from bellforge.core.operators import FactorSpace, identity
from bellforge.core.quantum import dichotomic, observable_to_povm, pure_state, random_state
from bellforge.core.scenarios import build_paper_state, closed_form_chsh
from bellforge.models.polytope import Scenario, behavior_from_state, make_behavior
from bellforge.models.witness import (
    TSIRELSON,
    chsh_from_behavior,
    chsh_operator,
    chsh_value,
    correlation_matrix,
    correlator,
    horodecki_max_chsh,
    make_settings,
    paper_observables,
    qutrit_settings,
)


@pytest.mark.parametrize("p", [1 / 18, 1 / 36, 1 / 100])
def test_revealed_state_chsh_matches_closed_form(p):
    ex = build_paper_state(p)
    assert chsh_value(ex.rho2, ex.settings) == pytest.approx(closed_form_chsh(p), abs=1e-9)


def test_paper_observables_are_dichotomic():
    s = paper_observables()
    for obs in (s.a1, s.a2, s.b1, s.b2):
        assert obs.dim == 12
        np.testing.assert_allclose(obs.matrix @ obs.matrix, identity(12), atol=1e-12)


def test_qutrit_settings_on_psi_reach_tsirelson(psi):
    assert chsh_value(psi, qutrit_settings()) == pytest.approx(TSIRELSON, abs=1e-12)


def test_chsh_operator_expectation(psi):
    s = qutrit_settings()
    value = float(np.trace(psi.matrix @ chsh_operator(s)).real)
    assert value == pytest.approx(chsh_value(psi, s), abs=1e-12)


def test_observables_agree_with_behavior_functional(rng, bloch):
    space = FactorSpace(("A", "B"), (2, 2))
    for _ in range(100):
        state = random_state(space, rng)
        obs = [bloch(rng.standard_normal(3)) for _ in range(4)]
        s = make_settings(*obs)
        povmsA = [observable_to_povm(s.a1), observable_to_povm(s.a2)]
        povmsB = [observable_to_povm(s.b1), observable_to_povm(s.b2)]
        b = behavior_from_state(state, povmsA, povmsB)
        assert abs(chsh_value(state, s) - chsh_from_behavior(b)) <= 1e-9


def test_correlator_checks_dimensions(psi):
    with pytest.raises(DimensionMismatch):
        correlator(psi, identity(2), identity(3))


def test_make_settings_checks_sides():
    with pytest.raises(DimensionMismatch):
        make_settings(identity(2), identity(3), identity(2), identity(2))


def test_chsh_from_behavior_requires_binary_scenario():
    sc = Scenario((3, 2), (2, 2))
    with pytest.raises(DimensionMismatch):
        chsh_from_behavior(make_behavior(sc, np.concatenate([np.full(6, 1 / 6)] * 2 + [np.full(4, 0.25)] * 2)))


def test_horodecki_on_singlet():
    singlet = pure_state(np.array([0, 1, -1, 0]), FactorSpace(("A", "B"), (2, 2)))
    np.testing.assert_allclose(correlation_matrix(singlet), -np.eye(3), atol=1e-12)
    value, s = horodecki_max_chsh(singlet)
    assert value == pytest.approx(TSIRELSON, abs=1e-12)
    assert chsh_value(singlet, s) == pytest.approx(value, abs=1e-12)


def test_horodecki_settings_attain_the_maximum(rng, bloch):
    space = FactorSpace(("A", "B"), (2, 2))
    for _ in range(20):
        state = random_state(space, rng, rank=2)
        value, s = horodecki_max_chsh(state)
        assert chsh_value(state, s) == pytest.approx(value, abs=1e-9)
        for _ in range(5):
            trial = make_settings(*(dichotomic(bloch(rng.standard_normal(3))) for _ in range(4)))
            assert chsh_value(state, trial) <= value + 1e-9


def test_correlation_matrix_needs_qubits(psi):
    with pytest.raises(DimensionMismatch):
        correlation_matrix(psi)
