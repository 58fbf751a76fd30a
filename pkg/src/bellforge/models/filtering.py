from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
from loguru import logger

from ..core.config import TOL
from ..core.errors import DimensionMismatch, InvariantError, ZeroProbabilityError
from ..core.operators import Operator, apply_local, as_operator, frozen, identity, psd_sqrt
from ..core.quantum import BipartiteState, validate_state

Party = Literal["A", "B"]


@dataclass(frozen=True)
class LocalFilter:
    """A contraction M (M†M ≤ I) applied by one party."""

    party: Party
    matrix: Operator

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    @property
    def effect(self) -> Operator:
        return self.matrix.conj().T @ self.matrix


def make_filter(matrix, party: Party = "A", tol: float = TOL.compare) -> LocalFilter:
    m = as_operator(matrix)
    if party not in ("A", "B"):
        raise InvariantError("unknown party", repr(party))
    if m.shape[0] != m.shape[1]:
        raise DimensionMismatch(f"filter must be square, got {m.shape}")
    top = float(np.linalg.eigvalsh(m.conj().T @ m)[-1]) if m.size else 0.0
    if top > 1.0 + tol:
        raise InvariantError("contraction violated", f"largest eigenvalue of M†M is {top:.12g}")
    if top > 1.0:
        logger.warning("Filter exceeds M†M ≤ I by {:.3g}; rescaling by 1/sqrt({:.12g})", top - 1.0, top)
        m = m / np.sqrt(top)
    return LocalFilter(party=party, matrix=frozen(m))


def identity_filter(dim: int, party: Party = "A") -> LocalFilter:
    return LocalFilter(party=party, matrix=frozen(identity(dim)))


def complement_filter(f: LocalFilter) -> LocalFilter:
    """M̃ = sqrt(I - M†M), so that M†M + M̃†M̃ = I."""
    eff = f.effect
    top = float(np.linalg.eigvalsh(eff)[-1]) if eff.size else 0.0
    if top > 1.0 + TOL.compare:
        raise InvariantError("contraction violated", f"largest eigenvalue of M†M is {top:.12g}")
    rest = identity(f.dim) - eff
    return LocalFilter(party=f.party, matrix=frozen(psd_sqrt(rest, tol=TOL.compare)))


def filter_targets(state: BipartiteState, f: LocalFilter) -> tuple[str, ...]:
    """System factors of `f`'s party; the filter acts on their joint space."""
    targets = state.a_systems if f.party == "A" else state.b_systems
    d = state.space.dim_of(targets)
    if f.matrix.shape != (d, d):
        raise DimensionMismatch(f"{f.party}-side filter {f.matrix.shape} on systems {targets} of dimension {d}")
    return targets


def filtered_operator(state: BipartiteState, mA: LocalFilter, nB: LocalFilter) -> Operator:
    """Unnormalized (M ⊗ N) ρ (M ⊗ N)†."""
    if mA.party != "A" or nB.party != "B":
        raise InvariantError("unknown party", f"expected an A filter and a B filter, got {mA.party}/{nB.party}")
    out, _ = apply_local(mA.matrix, state.matrix, state.space, filter_targets(state, mA))
    out, _ = apply_local(nB.matrix, out, state.space, filter_targets(state, nB))
    return out


def apply_filters(state: BipartiteState, mA: LocalFilter, nB: LocalFilter,
                  eps: float = TOL.prob_floor) -> tuple[BipartiteState, float]:
    """Local filtering ρ ↦ (M⊗N)ρ(M⊗N)†/p with p = tr(M†M ⊗ N†N ρ)."""
    unnorm = filtered_operator(state, mA, nB)
    p = float(np.trace(unnorm).real)
    if p <= eps:
        raise ZeroProbabilityError(f"p = {p:.3g}")
    logger.debug("Filtering succeeded with probability {:.12g}", p)
    filtered = validate_state(unnorm / p, state.space, state.a_labels, state.b_labels, state.records)
    return filtered, p
