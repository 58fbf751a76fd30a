import numpy as np
import pytest
from loguru import logger

from bellforge.core.operators import FactorSpace
from bellforge.core.quantum import observable_to_povm
from bellforge.core.scenarios import build_paper_state, psi_state
from bellforge.models.witness import qutrit_settings


@pytest.fixture(autouse=True)
def _quiet_logs():
    logger.remove()
    logger.add(lambda m: None, level="WARNING")
    yield


@pytest.fixture
def rng():
    return np.random.default_rng(42)


@pytest.fixture
def qubits():
    return FactorSpace(("A", "B"), (2, 2))


@pytest.fixture(scope="session")
def example():
    return build_paper_state(1 / 18)


@pytest.fixture(scope="session")
def psi():
    return psi_state()


@pytest.fixture(scope="session")
def qutrit_povms():
    """(A POVMs, B POVMs) of the example observables on one qutrit per side."""
    s = qutrit_settings()
    return [observable_to_povm(s.a1), observable_to_povm(s.a2)], [observable_to_povm(s.b1), observable_to_povm(s.b2)]


def bloch_observable(v):
    v = np.asarray(v, dtype=float)
    v = v / np.linalg.norm(v)
    X = np.array([[0, 1], [1, 0]], dtype=complex)
    Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
    Z = np.array([[1, 0], [0, -1]], dtype=complex)
    return v[0] * X + v[1] * Y + v[2] * Z


@pytest.fixture
def random_qubit_observable(rng):
    return lambda: bloch_observable(rng.standard_normal(3))


@pytest.fixture
def bloch():
    return bloch_observable
