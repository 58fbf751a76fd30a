"""CHSH evaluation, the explicit record-aware observables of the worked example,
and the two-qubit maximal-CHSH criterion."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from loguru import logger

from ..core.config import TOL
from ..core.errors import DimensionMismatch
from ..core.operators import Operator, as_operator, identity, projector, tensor
from ..core.quantum import BipartiteState, DichotomicObservable, dichotomic
from .polytope import Behavior

TSIRELSON = 2.0 * np.sqrt(2.0)

# qutrit operators of the worked example: σ₁, σ₂ on span{|0>,|1>}, M and its complement M̃
QUTRIT_SIGMA1 = np.diag([1.0, -1.0, 0.0]).astype(np.complex128)
QUTRIT_SIGMA2 = np.array([[0, 1, 0], [1, 0, 0], [0, 0, 0]], dtype=np.complex128)
QUTRIT_M = np.diag([1.0, 1.0, 0.0]).astype(np.complex128)
QUTRIT_MT = np.diag([0.0, 0.0, 1.0]).astype(np.complex128)

PAULI = (
    np.array([[0, 1], [1, 0]], dtype=np.complex128),
    np.array([[0, -1j], [1j, 0]], dtype=np.complex128),
    np.array([[1, 0], [0, -1]], dtype=np.complex128),
)


@dataclass(frozen=True)
class ChshSettings:
    a1: DichotomicObservable
    a2: DichotomicObservable
    b1: DichotomicObservable
    b2: DichotomicObservable


def make_settings(a1, a2, b1, b2) -> ChshSettings:
    obs = [o if isinstance(o, DichotomicObservable) else dichotomic(o) for o in (a1, a2, b1, b2)]
    if obs[0].dim != obs[1].dim or obs[2].dim != obs[3].dim:
        raise DimensionMismatch("A1/A2 and B1/B2 must act on the same spaces")
    return ChshSettings(*obs)


def correlator(state: BipartiteState, a: Operator, b: Operator) -> float:
    """tr(ρ A ⊗ B) without forming the Kronecker product."""
    dA, dB = state.a_dim, state.b_dim
    a, b = as_operator(a), as_operator(b)
    if a.shape != (dA, dA) or b.shape != (dB, dB):
        raise DimensionMismatch(f"observables {a.shape}/{b.shape} on sides of dimension {dA}/{dB}")
    R = state.matrix.reshape(dA, dB, dA, dB)
    return float(np.einsum("xyuv,ux,vy->", R, a, b).real)


def chsh_operator(s: ChshSettings) -> Operator:
    b_plus = s.b1.matrix + s.b2.matrix
    b_minus = s.b1.matrix - s.b2.matrix
    return tensor(s.a1.matrix, b_plus) + tensor(s.a2.matrix, b_minus)


def chsh_value(state: BipartiteState, s: ChshSettings) -> float:
    """⟨A₁(B₁+B₂) + A₂(B₁−B₂)⟩ in `state`."""
    b_plus = s.b1.matrix + s.b2.matrix
    b_minus = s.b1.matrix - s.b2.matrix
    value = correlator(state, s.a1.matrix, b_plus) + correlator(state, s.a2.matrix, b_minus)
    if abs(value) > TSIRELSON + TOL.tsirelson:
        logger.warning("CHSH value {:.12g} exceeds the Tsirelson bound by {:.3g}", value, abs(value) - TSIRELSON)
    return value


def chsh_from_behavior(b: Behavior) -> float:
    """CHSH combination of a 2-setting/2-outcome behavior, outcome 1 counted as +1."""
    sc = b.scenario
    if sc.mA != (2, 2) or sc.nB != (2, 2):
        raise DimensionMismatch(f"CHSH needs a 2x2x2x2 scenario, got mA={sc.mA} nB={sc.nB}")
    signs = np.array([[1.0, -1.0], [-1.0, 1.0]])
    E = [[float(np.sum(signs * b.block(k, l))) for l in range(2)] for k in range(2)]
    return E[0][0] + E[0][1] + E[1][0] - E[1][1]


def paper_observables(p: float | None = None) -> ChshSettings:
    """A_k = P₀ ⊗ (σ_k + M̃) + P̃ ⊗ I on A′A″A and
    B_l = ([σ′₁ + (3−2l)σ′₂]/√2 + Ñ) ⊗ Q₀ + I ⊗ Q̃ on BB′B″.

    `p` is accepted for symmetry with the state constructor; the observables
    do not depend on it.
    """
    P0 = tensor(projector(0, 2), projector(0, 2))
    Pt = identity(4) - P0
    sigmas = (QUTRIT_SIGMA1, QUTRIT_SIGMA2)
    a = [tensor(P0, sigma + QUTRIT_MT) + tensor(Pt, identity(3)) for sigma in sigmas]
    b = []
    for l in (1, 2):
        local = (QUTRIT_SIGMA1 + (3 - 2 * l) * QUTRIT_SIGMA2) / np.sqrt(2.0) + QUTRIT_MT
        b.append(tensor(local, P0) + tensor(identity(3), Pt))
    return make_settings(a[0], a[1], b[0], b[1])


def qutrit_settings() -> ChshSettings:
    """The example's observables restricted to the all-zero record block (one qutrit per side)."""
    a = [sigma + QUTRIT_MT for sigma in (QUTRIT_SIGMA1, QUTRIT_SIGMA2)]
    b = [(QUTRIT_SIGMA1 + (3 - 2 * l) * QUTRIT_SIGMA2) / np.sqrt(2.0) + QUTRIT_MT for l in (1, 2)]
    return make_settings(a[0], a[1], b[0], b[1])


def correlation_matrix(state: BipartiteState) -> np.ndarray:
    if state.a_dim != 2 or state.b_dim != 2:
        raise DimensionMismatch(f"two-qubit state required, got sides {state.a_dim} x {state.b_dim}")
    return np.array([[correlator(state, si, sj) for sj in PAULI] for si in PAULI])


def _bloch_observable(v: np.ndarray) -> DichotomicObservable:
    v = v / np.linalg.norm(v)
    return dichotomic(sum(c * s for c, s in zip(v, PAULI)))


def horodecki_max_chsh(state: BipartiteState) -> tuple[float, ChshSettings]:
    """Maximal CHSH value 2·sqrt(t₁² + t₂²) over the two largest singular values of T,
    with settings built from the singular vectors."""
    T = correlation_matrix(state)
    U, t, Vh = np.linalg.svd(T)
    value = 2.0 * float(np.hypot(t[0], t[1]))
    theta = float(np.arctan2(t[1], t[0]))
    c, c2 = Vh[0], Vh[1]
    settings = ChshSettings(
        a1=_bloch_observable(U[:, 0]),
        a2=_bloch_observable(U[:, 1]),
        b1=_bloch_observable(np.cos(theta) * c + np.sin(theta) * c2),
        b2=_bloch_observable(np.cos(theta) * c - np.sin(theta) * c2),
    )
    logger.debug("Horodecki criterion: singular values {} -> max CHSH {:.12g}", np.round(t, 12), value)
    return value, settings
