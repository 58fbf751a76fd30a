"""Validated quantum objects: bipartite density operators, POVMs, dichotomic observables."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .config import TOL
from .errors import DimensionMismatch, InvariantError
from .operators import (
    FactorSpace,
    Operator,
    as_operator,
    frozen,
    hermiticity_error,
    identity,
    max_entry_distance,
    random_density,
)


@dataclass(frozen=True)
class BipartiteState:
    """Density operator on `space`; `a_labels` precede `b_labels` in the factor order.

    `records` names the factors holding classical outcome records. On the A side
    they sit left of A's systems, on the B side right of B's systems, both in
    the order the records were written.
    """

    space: FactorSpace
    matrix: Operator
    a_labels: tuple[str, ...]
    b_labels: tuple[str, ...]
    records: tuple[str, ...] = ()

    @property
    def dim(self) -> int:
        return self.space.dim

    @property
    def a_space(self) -> FactorSpace:
        return self.space.keep(self.a_labels)

    @property
    def b_space(self) -> FactorSpace:
        return self.space.keep(self.b_labels)

    @property
    def a_dim(self) -> int:
        return self.a_space.dim

    @property
    def b_dim(self) -> int:
        return self.b_space.dim

    @property
    def a_records(self) -> tuple[str, ...]:
        return tuple(lab for lab in self.a_labels if lab in self.records)

    @property
    def b_records(self) -> tuple[str, ...]:
        return tuple(lab for lab in self.b_labels if lab in self.records)

    @property
    def a_systems(self) -> tuple[str, ...]:
        return tuple(lab for lab in self.a_labels if lab not in self.records)

    @property
    def b_systems(self) -> tuple[str, ...]:
        return tuple(lab for lab in self.b_labels if lab not in self.records)

    def side_of(self, label: str) -> str:
        self.space.index(label)
        return "A" if label in self.a_labels else "B"


def _partition(space: FactorSpace, a_labels, b_labels) -> tuple[tuple[str, ...], tuple[str, ...]]:
    labels = space.labels
    if a_labels is None and b_labels is None:
        if len(labels) != 2:
            raise InvariantError("partition required", f"cannot infer A/B sides of {labels}")
        return (labels[0],), (labels[1],)
    if a_labels is None:
        b_labels = tuple(b_labels)
        a_labels = tuple(lab for lab in labels if lab not in b_labels)
    elif b_labels is None:
        a_labels = tuple(a_labels)
        b_labels = tuple(lab for lab in labels if lab not in a_labels)
    a_labels, b_labels = tuple(a_labels), tuple(b_labels)
    if a_labels + b_labels != labels:
        raise InvariantError("partition not contiguous", f"A={a_labels} B={b_labels} over {labels}")
    if not a_labels or not b_labels:
        raise InvariantError("partition not contiguous", "both sides need at least one factor")
    return a_labels, b_labels


def validate_state(matrix, space: FactorSpace, a_labels: Sequence[str] | None = None,
                   b_labels: Sequence[str] | None = None, records: Sequence[str] = (),
                   tol: float = TOL.eig) -> BipartiteState:
    m = as_operator(matrix)
    if m.shape != (space.dim, space.dim):
        raise DimensionMismatch(f"matrix {m.shape} on space {space.labels} of dimension {space.dim}")
    herr = hermiticity_error(m)
    if herr > tol:
        raise InvariantError("not Hermitian", f"max |ρ - ρ†| = {herr:.3g}")
    lo = float(np.linalg.eigvalsh((m + m.conj().T) / 2)[0])
    if lo < -tol:
        raise InvariantError("not PSD", f"smallest eigenvalue {lo:.3g}")
    tr = float(np.trace(m).real)
    if abs(tr - 1.0) > tol:
        raise InvariantError("trace not 1", f"trace = {tr:.12g}")
    a, b = _partition(space, a_labels, b_labels)
    for lab in records:
        space.index(lab)
    return BipartiteState(space=space, matrix=frozen(m), a_labels=a, b_labels=b, records=tuple(records))


def pure_state(vector, space: FactorSpace, a_labels: Sequence[str] | None = None,
               b_labels: Sequence[str] | None = None) -> BipartiteState:
    v = np.asarray(vector, dtype=np.complex128).reshape(-1)
    if v.size != space.dim:
        raise DimensionMismatch(f"vector of length {v.size} on space of dimension {space.dim}")
    norm = np.linalg.norm(v)
    if norm == 0:
        raise InvariantError("zero vector")
    v = v / norm
    return validate_state(np.outer(v, v.conj()), space, a_labels, b_labels)


def expectation(state: BipartiteState | Operator, op) -> float:
    rho = state.matrix if isinstance(state, BipartiteState) else as_operator(state)
    o = as_operator(op)
    if o.shape != rho.shape:
        raise DimensionMismatch(f"observable {o.shape} vs state {rho.shape}")
    return float(np.einsum("ij,ji->", rho, o).real)


# ---------- measurements ----------
@dataclass(frozen=True)
class Povm:
    """Labelled positive operators summing to identity on `party`'s space.

    Outcome labels are 1, 2, ... in element order; `values` optionally assigns
    each outcome a number (+1/-1 for dichotomic observables).
    """

    party: tuple[str, ...]
    elements: tuple[Operator, ...]
    labels: tuple[int, ...]
    values: tuple[float, ...] | None = None

    @property
    def dim(self) -> int:
        return self.elements[0].shape[0]

    def __len__(self) -> int:
        return len(self.elements)


def make_povm(elements: Sequence, party: Sequence[str] = (), values: Sequence[float] | None = None,
              tol: float = TOL.compare) -> Povm:
    ops = [as_operator(e) for e in elements]
    if not ops:
        raise InvariantError("empty POVM")
    d = ops[0].shape[0]
    for i, e in enumerate(ops, start=1):
        if e.shape != (d, d):
            raise DimensionMismatch(f"POVM element {i} has shape {e.shape}, expected {(d, d)}")
        herr = hermiticity_error(e)
        if herr > TOL.eig:
            raise InvariantError("not Hermitian", f"POVM element {i}")
        lo = float(np.linalg.eigvalsh((e + e.conj().T) / 2)[0])
        if lo < -TOL.eig:
            raise InvariantError("not PSD", f"POVM element {i}: smallest eigenvalue {lo:.3g}")
    err = max_entry_distance(sum(ops), identity(d))
    if err > tol:
        raise InvariantError("not complete", f"POVM elements miss identity by {err:.3g}")
    if values is not None and len(values) != len(ops):
        raise InvariantError("outcome out of range", f"{len(values)} values for {len(ops)} outcomes")
    return Povm(
        party=tuple(party),
        elements=tuple(frozen(e) for e in ops),
        labels=tuple(range(1, len(ops) + 1)),
        values=None if values is None else tuple(float(x) for x in values),
    )


@dataclass(frozen=True)
class DichotomicObservable:
    matrix: Operator

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


def dichotomic(matrix, tol: float = TOL.compare) -> DichotomicObservable:
    """Validate O = O† and O² = I. Degenerate spectra (all +1, say) are allowed."""
    o = as_operator(matrix)
    if o.shape[0] != o.shape[1]:
        raise DimensionMismatch(f"observable must be square, got {o.shape}")
    if hermiticity_error(o) > TOL.eig:
        raise InvariantError("not Hermitian", "dichotomic observable")
    err = max_entry_distance(o @ o, identity(o.shape[0]))
    if err > tol:
        raise InvariantError("spectrum not ±1", f"max |O² - I| = {err:.3g}")
    return DichotomicObservable(frozen(o))


def observable_to_povm(obs: DichotomicObservable, party: Sequence[str] = ()) -> Povm:
    """Outcome 1 is the +1 eigenspace projector, outcome 2 the -1 one."""
    eye = identity(obs.dim)
    return make_povm([(eye + obs.matrix) / 2, (eye - obs.matrix) / 2], party=party, values=(1.0, -1.0))


def random_state(space: FactorSpace, rng: np.random.Generator, rank: int | None = None,
                 a_labels: Sequence[str] | None = None, b_labels: Sequence[str] | None = None) -> BipartiteState:
    return validate_state(random_density(space.dim, rng, rank), space, a_labels, b_labels)
