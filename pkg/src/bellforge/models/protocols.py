"""One-way LOCC rounds with classical record ancillas, the filter-revealing
protocols built from them, and the measurements/certificates that go with them.

Every round appends one record factor per party. A-side records are placed
left of A's systems and B-side records right of B's systems, each side in the
order the rounds were run, so two rounds leave the layout A′ A″ A | B B′ B″.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal, Mapping, Sequence

import numpy as np
from loguru import logger

from ..core.config import TOL, BellforgeConfig
from ..core.errors import DimensionMismatch, InvariantError, LocalBehaviorError, NumericalFailure, ZeroProbabilityError
from ..core.operators import (
    FactorSpace,
    Operator,
    apply_local,
    as_operator,
    basis_projector,
    frozen,
    identity,
    max_entry_distance,
    partial_trace,
    permute_factors,
    projector,
    tensor,
)
from ..core.quantum import BipartiteState, Povm, validate_state
from .filtering import LocalFilter, apply_filters, complement_filter, filter_targets, identity_filter
from .polytope import (
    Behavior,
    DeterministicStrategy,
    behavior_from_state,
    deterministic_behavior,
    find_escaping_vertex,
    lift_povm,
    lp_membership,
)
from .types import MembershipResult

Party = Literal["A", "B"]


# ---------- rounds ----------
@dataclass(frozen=True)
class KrausBranch:
    kraus: Operator
    record: int          # value written to both record ancillas
    label: str = ""


@dataclass(frozen=True)
class OneWayRound:
    """Sender measures with Kraus operators F_i (Σ F_i†F_i = I) and broadcasts i.

    `acts_on` lists the sender-side factors the Kraus operators act on, in state
    order; by default the sender's systems. Several branches may share a record
    value, in which case they form one coarse-grained outcome.
    """

    sender: Party
    branches: tuple[KrausBranch, ...]
    sender_record_dim: int
    receiver_record_dim: int
    acts_on: tuple[str, ...] | None = None
    output_dims: tuple[int, ...] | None = None
    record_labels: tuple[str, str] | None = None   # (sender's, receiver's)

    @property
    def direction(self) -> str:
        return "A->B" if self.sender == "A" else "B->A"

    @property
    def outcomes(self) -> tuple[int, ...]:
        return tuple(sorted({br.record for br in self.branches}))

    @property
    def bits(self) -> int:
        n = len(self.outcomes)
        return math.ceil(math.log2(n)) if n > 1 else 0


def make_round(sender: Party, branches: Sequence, *, record_dim: int | None = None,
               acts_on: Sequence[str] | None = None, output_dims: Sequence[int] | None = None,
               record_labels: tuple[str, str] | None = None, tol: float = TOL.compare) -> OneWayRound:
    """Build and validate a round.

    `branches` holds bare Kraus operators (record i for the i-th one),
    ``(kraus, record)`` pairs or ``KrausBranch`` values.
    """
    if sender not in ("A", "B"):
        raise InvariantError("unknown party", repr(sender))
    built: list[KrausBranch] = []
    for i, br in enumerate(branches):
        if isinstance(br, KrausBranch):
            built.append(KrausBranch(frozen(br.kraus), int(br.record), br.label))
        elif isinstance(br, tuple) and len(br) == 2 and np.ndim(br[1]) == 0:
            built.append(KrausBranch(frozen(as_operator(br[0])), int(br[1]), f"{sender}{i}"))
        else:
            built.append(KrausBranch(frozen(as_operator(br)), i, f"{sender}{i}"))
    if not built:
        raise InvariantError("completeness violated", "a round needs at least one branch")
    shape = built[0].kraus.shape
    for br in built:
        if br.kraus.shape != shape:
            raise DimensionMismatch(f"Kraus operators of shapes {shape} and {br.kraus.shape} in one round")
        if br.record < 0:
            raise InvariantError("outcome out of range", f"record value {br.record}")
    total = sum(br.kraus.conj().T @ br.kraus for br in built)
    err = max_entry_distance(total, identity(shape[1]))
    if err > tol:
        raise InvariantError("completeness violated", f"Σ F†F misses identity by {err:.3g}")
    needed = max(br.record for br in built) + 1
    dim = needed if record_dim is None else int(record_dim)
    if dim < needed:
        raise InvariantError("outcome out of range", f"record value {needed - 1} on a record of dimension {dim}")
    return OneWayRound(
        sender=sender,
        branches=tuple(built),
        sender_record_dim=dim,
        receiver_record_dim=dim,
        acts_on=None if acts_on is None else tuple(acts_on),
        output_dims=None if output_dims is None else tuple(int(d) for d in output_dims),
        record_labels=record_labels,
    )


@dataclass(frozen=True)
class ProtocolTranscript:
    rounds: tuple[OneWayRound, ...] = ()
    bits_A_to_B: int = 0
    bits_B_to_A: int = 0
    final_space: FactorSpace | None = None

    def extended(self, rnd: OneWayRound, space: FactorSpace) -> "ProtocolTranscript":
        a2b = self.bits_A_to_B + (rnd.bits if rnd.sender == "A" else 0)
        b2a = self.bits_B_to_A + (rnd.bits if rnd.sender == "B" else 0)
        return ProtocolTranscript(self.rounds + (rnd,), a2b, b2a, space)


def _fresh_label(base: str, taken: Sequence[str]) -> str:
    label = base + "'"
    while label in taken:
        label += "'"
    return label


def _record_labels(state: BipartiteState, rnd: OneWayRound) -> tuple[str, str]:
    """(A-side record, B-side record) for the next round."""
    if rnd.record_labels is not None:
        send, recv = rnd.record_labels
        a_lab, b_lab = (send, recv) if rnd.sender == "A" else (recv, send)
    else:
        a_lab = _fresh_label("A", state.space.labels)
        b_lab = _fresh_label("B", state.space.labels + (a_lab,))
    for lab in (a_lab, b_lab):
        if lab in state.space.labels:
            raise InvariantError("labels not unique", f"record label {lab!r} already in use")
    if a_lab == b_lab:
        raise InvariantError("labels not unique", f"both records named {a_lab!r}")
    return a_lab, b_lab


def apply_one_way(state: BipartiteState, rnd: OneWayRound) -> BipartiteState:
    """ρ ↦ Σ_r |r⟩⟨r| ⊗ (Σ_{i: record i = r} F_i ρ F_i†) ⊗ |r⟩⟨r|, records in canonical order."""
    side_labels = state.a_labels if rnd.sender == "A" else state.b_labels
    targets = rnd.acts_on if rnd.acts_on is not None else (
        state.a_systems if rnd.sender == "A" else state.b_systems)
    for lab in targets:
        if lab not in side_labels:
            raise InvariantError("unknown label", f"{lab!r} is not on side {rnd.sender}")
    targets = tuple(lab for lab in side_labels if lab in targets)   # state order
    d_in = state.space.dim_of(targets)
    kshape = rnd.branches[0].kraus.shape
    if kshape[1] != d_in:
        raise DimensionMismatch(f"Kraus operators {kshape} on factors {targets} of dimension {d_in}")
    out_dims = rnd.output_dims
    if out_dims is None and kshape[0] != kshape[1]:
        if len(targets) != 1:
            raise DimensionMismatch("rectangular Kraus operators on several factors need output_dims")
        out_dims = (kshape[0],)

    a_lab, b_lab = _record_labels(state, rnd)
    a_dim = rnd.sender_record_dim if rnd.sender == "A" else rnd.receiver_record_dim
    b_dim = rnd.receiver_record_dim if rnd.sender == "A" else rnd.sender_record_dim

    new_space = None
    blocks: dict[int, Operator] = {}
    for br in rnd.branches:
        out, new_space = apply_local(br.kraus, state.matrix, state.space, targets, out_dims)
        blocks[br.record] = blocks[br.record] + out if br.record in blocks else out

    work = FactorSpace((a_lab,), (a_dim,)) + new_space + FactorSpace((b_lab,), (b_dim,))
    full = np.zeros((work.dim, work.dim), dtype=np.complex128)
    for r, block in blocks.items():
        full += tensor(tensor(projector(r, a_dim), block), projector(r, b_dim))

    a_order = state.a_records + (a_lab,) + state.a_systems
    b_order = state.b_systems + state.b_records + (b_lab,)
    order = a_order + b_order
    out = permute_factors(full, work, order)
    logger.debug("{} round: {} branches, records {}/{} (dims {}/{})",
                 rnd.direction, len(rnd.branches), a_lab, b_lab, a_dim, b_dim)
    return validate_state(out, work.reordered(order), a_order, b_order, state.records + (a_lab, b_lab))


def run_protocol(state: BipartiteState, rounds: Sequence[OneWayRound],
                 transcript: ProtocolTranscript | None = None) -> tuple[BipartiteState, ProtocolTranscript]:
    transcript = transcript or ProtocolTranscript(final_space=state.space)
    for rnd in rounds:
        state = apply_one_way(state, rnd)
        transcript = transcript.extended(rnd, state.space)
    return state, transcript


# ---------- filter-revealing protocols ----------
def _filter_round(state: BipartiteState, f: LocalFilter) -> OneWayRound:
    filter_targets(state, f)
    comp = complement_filter(f)
    return make_round(f.party, [(f.matrix, 0), (comp.matrix, 1)], record_dim=2)


def reveal_two_bits(state: BipartiteState, mA: LocalFilter, nB: LocalFilter
                    ) -> tuple[BipartiteState, ProtocolTranscript]:
    """ρ₂ = Σ_i P_i ⊗ K_i ρ K_i† ⊗ Q_i with K = M⊗N, M⊗Ñ, M̃⊗N, M̃⊗Ñ.

    A sends whether M or M̃ fired, then B sends whether N or Ñ fired.
    """
    if mA.party != "A" or nB.party != "B":
        raise InvariantError("unknown party", f"expected an A filter and a B filter, got {mA.party}/{nB.party}")
    rounds = [_filter_round(state, mA), _filter_round(state, nB)]
    rho2, transcript = run_protocol(state, rounds)
    logger.info("Two-bit protocol done: {} on {}", rho2.space.labels, rho2.space.dims)
    return rho2, transcript


def reveal_one_bit(state: BipartiteState, mA: LocalFilter) -> tuple[BipartiteState, ProtocolTranscript]:
    """ρ₁ = R₀ ⊗ MρM† ⊗ S₀ + R₁ ⊗ M̃ρM̃† ⊗ S₁.

    The complement branch is kept even when it vanishes, so the round always
    carries one bit.
    """
    if mA.party != "A":
        raise InvariantError("unknown party", f"expected an A filter, got {mA.party}")
    rho1, transcript = run_protocol(state, [_filter_round(state, mA)])
    logger.info("One-bit protocol done: {} on {}", rho1.space.labels, rho1.space.dims)
    return rho1, transcript


# ---------- record blocks ----------
def _record_values(state: BipartiteState, values) -> tuple[int, ...]:
    if isinstance(values, Mapping):
        unknown = set(values) - set(state.records)
        if unknown:
            raise InvariantError("unknown label", f"{sorted(unknown)} are not records")
        return tuple(int(values.get(lab, 0)) for lab in state.records)
    values = tuple(int(v) for v in values)
    if len(values) != len(state.records):
        raise DimensionMismatch(f"{len(values)} record values for records {state.records}")
    return values


def _records_first(state: BipartiteState):
    systems = tuple(lab for lab in state.space.labels if lab not in state.records)
    rec_dims = tuple(state.space.dims[state.space.index(r)] for r in state.records)
    d_rec = int(np.prod(rec_dims, dtype=np.int64))
    d_sys = state.dim // d_rec
    m = permute_factors(state.matrix, state.space, state.records + systems)
    return m.reshape(d_rec, d_sys, d_rec, d_sys), rec_dims, systems


def extract_block(state: BipartiteState, values, eps: float = TOL.prob_floor) -> tuple[BipartiteState, float]:
    """Project onto one record configuration, drop the records and normalize.

    `values` is either a mapping record label -> value (missing labels read 0)
    or a tuple in `state.records` order. Returns the block state and its weight.
    """
    vals = _record_values(state, values)
    t, rec_dims, systems = _records_first(state)
    for v, d in zip(vals, rec_dims):
        if not 0 <= v < d:
            raise InvariantError("outcome out of range", f"record value {v} of dimension {d}")
    idx = int(np.ravel_multi_index(vals, rec_dims)) if rec_dims else 0
    block = t[idx, :, idx, :]
    weight = float(np.trace(block).real)
    if weight <= eps:
        raise ZeroProbabilityError(f"record block {vals} has weight {weight:.3g}")
    space = state.space.keep(systems)
    a = tuple(lab for lab in state.a_labels if lab in systems)
    b = tuple(lab for lab in state.b_labels if lab in systems)
    return validate_state(block / weight, space, a, b), weight


def block_weights(state: BipartiteState) -> dict[tuple[int, ...], float]:
    """Weight of every record configuration, keyed by values in `state.records` order."""
    t, rec_dims, _ = _records_first(state)
    diag = np.einsum("iaia->i", t).real
    return {tuple(int(x) for x in np.unravel_index(i, rec_dims)): float(w) for i, w in enumerate(diag)}


def block_residual(state: BipartiteState) -> float:
    """Largest entry coupling two different record configurations (zero for classical records)."""
    t, _, _ = _records_first(state)
    off = t.copy()
    for i in range(t.shape[0]):
        off[i, :, i, :] = 0.0
    return float(np.max(np.abs(off), initial=0.0))


def trace_out_records(state: BipartiteState, drop: Sequence[str]) -> BipartiteState:
    drop = tuple(drop)
    for lab in drop:
        state.space.index(lab)
    if not drop:
        return state
    keep = tuple(lab for lab in state.space.labels if lab not in drop)
    m = partial_trace(state.matrix, state.space, keep)
    a = tuple(lab for lab in state.a_labels if lab in keep)
    b = tuple(lab for lab in state.b_labels if lab in keep)
    records = tuple(lab for lab in state.records if lab in keep)
    return validate_state(m, state.space.keep(keep), a, b, records)


# ---------- lifted measurements and certification ----------
def lift_for_records(state: BipartiteState, povmsA: Sequence[Povm], povmsB: Sequence[Povm],
                     strategy: DeterministicStrategy) -> tuple[list[Povm], list[Povm]]:
    """Lift system POVMs to the record-extended sides: measure when every record
    reads 0, otherwise output the strategy's forced outcome."""
    if state.a_labels != state.a_records + state.a_systems or state.b_labels != state.b_systems + state.b_records:
        raise InvariantError("records not canonical", f"factor order {state.space.labels}")
    if len(strategy.rs) != len(povmsA) or len(strategy.ss) != len(povmsB):
        raise InvariantError("outcome out of range", f"strategy {strategy} for {len(povmsA)}x{len(povmsB)} settings")
    sp = state.space
    a_rec_dims = tuple(sp.dims[sp.index(r)] for r in state.a_records)
    b_rec_dims = tuple(sp.dims[sp.index(r)] for r in state.b_records)
    PA = basis_projector((0,) * len(a_rec_dims), a_rec_dims)
    QB = basis_projector((0,) * len(b_rec_dims), b_rec_dims)
    liftedA = [lift_povm(p, PA, PA.shape[0], r, record_labels=state.a_records)
               for p, r in zip(povmsA, strategy.rs)]
    liftedB = [lift_povm(p, QB, QB.shape[0], s, records_after=True, record_labels=state.b_records)
               for p, s in zip(povmsB, strategy.ss)]
    return liftedA, liftedB


def certify_nonlocal(state: BipartiteState, povmsA: Sequence[Povm], povmsB: Sequence[Povm],
                     cfg: BellforgeConfig | None = None) -> MembershipResult:
    result = lp_membership(behavior_from_state(state, povmsA, povmsB), cfg)
    logger.info("Behavior is {}", "inside the local polytope" if result.inside else "NONLOCAL")
    return result


@dataclass(frozen=True)
class BranchSelection:
    index: int
    state: BipartiteState
    weight: float
    result: MembershipResult

    def __iter__(self):
        return iter((self.index, self.state, self.weight))


def _branch_operator(state: BipartiteState, M: Operator, N: Operator) -> Operator:
    out, _ = apply_local(M, state.matrix, state.space, state.a_systems)
    out, _ = apply_local(N, out, state.space, state.b_systems)
    return out


def select_nonlocal_branch(state: BipartiteState, separable_branches: Sequence[tuple], povmsA: Sequence[Povm],
                           povmsB: Sequence[Povm], cfg: BellforgeConfig | None = None,
                           tol: float = TOL.compare) -> BranchSelection:
    """First branch ω_i of the separable map Σ_i (M_i⊗N_i)·(M_i⊗N_i)† whose behavior is nonlocal."""
    dA = state.space.dim_of(state.a_systems)
    dB = state.space.dim_of(state.b_systems)
    branches = [(as_operator(M), as_operator(N)) for M, N in separable_branches]
    if not branches:
        raise InvariantError("completeness violated", "no branches")
    total = np.zeros((dA * dB, dA * dB), dtype=np.complex128)
    for M, N in branches:
        if M.shape != (dA, dA) or N.shape != (dB, dB):
            raise DimensionMismatch(f"branch ({M.shape}, {N.shape}) on systems of dimension {dA} x {dB}")
        total += tensor(M.conj().T @ M, N.conj().T @ N)
    err = max_entry_distance(total, identity(dA * dB))
    if err > tol:
        raise InvariantError("completeness violated", f"Σ M†M ⊗ N†N misses identity by {err:.3g}")

    outputs = [_branch_operator(state, M, N) for M, N in branches]
    weights = [float(np.trace(o).real) for o in outputs]
    image = validate_state(sum(outputs), state.space, state.a_labels, state.b_labels, state.records)
    if lp_membership(behavior_from_state(image, povmsA, povmsB), cfg).inside:
        raise LocalBehaviorError("aggregate behavior is local")
    for i, (out, q) in enumerate(zip(outputs, weights)):
        if q <= TOL.prob_floor:
            continue
        omega = validate_state(out / q, state.space, state.a_labels, state.b_labels, state.records)
        result = lp_membership(behavior_from_state(omega, povmsA, povmsB), cfg)
        logger.debug("Branch {} (weight {:.6g}): {}", i, q, "local" if result.inside else "nonlocal")
        if not result.inside:
            return BranchSelection(index=i, state=omega, weight=q, result=result)
    raise NumericalFailure("no nonlocal branch")


@dataclass(frozen=True)
class RevealOutcome:
    filtered: BipartiteState
    success_probability: float
    revealed: BipartiteState
    transcript: ProtocolTranscript
    strategy: DeterministicStrategy
    filtered_behavior: Behavior
    revealed_behavior: Behavior
    result: MembershipResult
    mixture_error: float = field(default=0.0)

    @property
    def revealed_nonlocal(self) -> bool:
        return not self.result.inside


def reveal_and_certify(state: BipartiteState, mA: LocalFilter, nB: LocalFilter | None,
                       povmsA: Sequence[Povm], povmsB: Sequence[Povm],
                       strategy: DeterministicStrategy | None = None,
                       cfg: BellforgeConfig | None = None) -> RevealOutcome:
    """Filter, pick the forced outcomes, run the LOCC protocol and certify its output.

    With ``nB=None`` only A filters and one bit is sent. The POVMs act on the
    systems; they are lifted to the records the protocol writes. Unless a
    strategy is given, the first deterministic vertex keeping the mixture
    p·b̂ + (1-p)·d_λ nonlocal is used.
    """
    if nB is None:
        filtered, p = apply_filters(state, mA, identity_filter(state.space.dim_of(state.b_systems), "B"))
        revealed, transcript = reveal_one_bit(state, mA)
    else:
        filtered, p = apply_filters(state, mA, nB)
        revealed, transcript = reveal_two_bits(state, mA, nB)
    b_hat = behavior_from_state(filtered, povmsA, povmsB)
    if strategy is None:
        strategy, _, _ = find_escaping_vertex(b_hat, p, cfg)
    liftedA, liftedB = lift_for_records(revealed, povmsA, povmsB, strategy)
    b_rev = behavior_from_state(revealed, liftedA, liftedB)
    expected = p * b_hat.probs + (1.0 - p) * deterministic_behavior(b_hat.scenario, strategy).probs
    mixture_error = float(np.max(np.abs(b_rev.probs - expected)))
    result = lp_membership(b_rev, cfg)
    logger.info("Revealed with p={:.6g}, forced outcomes rs={} ss={}: {}",
                p, strategy.rs, strategy.ss, "inside" if result.inside else "NONLOCAL")
    return RevealOutcome(
        filtered=filtered,
        success_probability=p,
        revealed=revealed,
        transcript=transcript,
        strategy=strategy,
        filtered_behavior=b_hat,
        revealed_behavior=b_rev,
        result=result,
        mixture_error=mixture_error,
    )
