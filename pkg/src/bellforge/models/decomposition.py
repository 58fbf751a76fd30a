"""Alternating-round LOCC maps and their rewriting as one-way rounds with records.

An alternating protocol has 2n instrument rounds, A on odd rounds and B on even
ones. The operators of round r may depend on every earlier outcome, so each
round maps an outcome prefix (i_1, ..., i_{r-1}) to its list of branch
operators. The direct map is Λ(ρ) = Σ_𝐢 K_𝐢 ρ K_𝐢† with
K_𝐢 = (M^(2n-1)...M^(1)) ⊗ (N^(2n)...N^(2)). The composed map runs one one-way
round per instrument round, each controlled by the projector onto the records
of the prefix, and tracing its records out gives back Λ(ρ).
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Literal, Mapping, Sequence

import numpy as np
from loguru import logger

from ..core.config import TOL, BellforgeConfig
from ..core.errors import CapacityError, DimensionMismatch, InvariantError
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
    random_isometry,
    tensor,
    trace_distance,
)
from ..core.quantum import BipartiteState, validate_state
from .protocols import KrausBranch, OneWayRound, ProtocolTranscript, run_protocol

Party = Literal["A", "B"]
Prefix = tuple[int, ...]


@dataclass(frozen=True)
class InstrumentRound:
    party: Party
    operators: Mapping[Prefix, tuple[Operator, ...]]   # outcome prefix -> branch operators
    source_dim: int
    target_dim: int

    @property
    def branch_count(self) -> int:
        return len(next(iter(self.operators.values())))


def make_instrument(party: Party, operators: Mapping[Prefix, Sequence], tol: float = TOL.compare) -> InstrumentRound:
    if party not in ("A", "B"):
        raise InvariantError("unknown party", repr(party))
    if not operators:
        raise InvariantError("completeness violated", "instrument without operators")
    ops = {tuple(int(i) for i in k): tuple(frozen(as_operator(m)) for m in v) for k, v in operators.items()}
    shape = next(iter(ops.values()))[0].shape
    counts = {len(v) for v in ops.values()}
    if len(counts) != 1:
        raise InvariantError("completeness violated", f"branch counts {sorted(counts)} differ between prefixes")
    for prefix, branch in ops.items():
        for m in branch:
            if m.shape != shape:
                raise DimensionMismatch(f"operator {m.shape} vs {shape} in round of party {party}")
        err = max_entry_distance(sum(m.conj().T @ m for m in branch), identity(shape[1]))
        if err > tol:
            raise InvariantError("completeness violated", f"prefix {prefix}: Σ M†M misses identity by {err:.3g}")
    return InstrumentRound(party=party, operators=ops, source_dim=shape[1], target_dim=shape[0])


@dataclass(frozen=True)
class AlternatingProtocol:
    rounds: tuple[InstrumentRound, ...]

    @property
    def n(self) -> int:
        return len(self.rounds) // 2

    @property
    def branch_counts(self) -> tuple[int, ...]:
        return tuple(r.branch_count for r in self.rounds)

    @property
    def a_rounds(self) -> tuple[InstrumentRound, ...]:
        return self.rounds[0::2]

    @property
    def b_rounds(self) -> tuple[InstrumentRound, ...]:
        return self.rounds[1::2]

    @property
    def a_dims(self) -> tuple[int, int]:
        return self.a_rounds[0].source_dim, self.a_rounds[-1].target_dim

    @property
    def b_dims(self) -> tuple[int, int]:
        return self.b_rounds[0].source_dim, self.b_rounds[-1].target_dim

    def prefixes(self, r: int) -> list[Prefix]:
        """All outcome histories before round `r` (0-based)."""
        return list(itertools.product(*(range(d) for d in self.branch_counts[:r])))

    def outcomes(self) -> list[Prefix]:
        return self.prefixes(len(self.rounds))


def make_protocol(rounds: Sequence[InstrumentRound]) -> AlternatingProtocol:
    rounds = tuple(rounds)
    if not rounds or len(rounds) % 2:
        raise InvariantError("not alternating", f"need 2n rounds, got {len(rounds)}")
    for r, rnd in enumerate(rounds):
        want = "A" if r % 2 == 0 else "B"
        if rnd.party != want:
            raise InvariantError("not alternating", f"round {r + 1} belongs to {rnd.party}, expected {want}")
    for side in (rounds[0::2], rounds[1::2]):
        for prev, nxt in zip(side, side[1:]):
            if prev.target_dim != nxt.source_dim:
                raise DimensionMismatch(
                    f"party {nxt.party}: round maps to {prev.target_dim} but the next expects {nxt.source_dim}")
    proto = AlternatingProtocol(rounds)
    for r, rnd in enumerate(rounds):
        want = set(proto.prefixes(r))
        have = set(rnd.operators)
        if want != have:
            missing = sorted(want - have)[:3]
            raise InvariantError("completeness violated",
                                 f"round {r + 1} has operators for {len(have)} of {len(want)} prefixes (missing {missing})")
    return proto


def _side_targets(state: BipartiteState) -> tuple[tuple[str, ...], tuple[str, ...]]:
    a, b = state.a_systems, state.b_systems
    if len(a) != 1 or len(b) != 1:
        raise DimensionMismatch(f"protocols act on one system factor per side, got {a} and {b}")
    return a, b


def _check_fits(protocol: AlternatingProtocol, state: BipartiteState) -> None:
    a, b = _side_targets(state)
    if state.space.dim_of(a) != protocol.a_dims[0] or state.space.dim_of(b) != protocol.b_dims[0]:
        raise DimensionMismatch(
            f"protocol starts on {protocol.a_dims[0]} x {protocol.b_dims[0]}, "
            f"state systems are {state.space.dim_of(a)} x {state.space.dim_of(b)}")


def apply_direct(protocol: AlternatingProtocol, state: BipartiteState) -> BipartiteState:
    """Σ_𝐢 K_𝐢 ρ K_𝐢†, branching round by round."""
    _check_fits(protocol, state)
    if state.records:
        raise InvariantError("records present", "apply to a state without record factors")
    a, b = _side_targets(state)
    live: list[tuple[Prefix, Operator, FactorSpace]] = [((), state.matrix, state.space)]
    for rnd in protocol.rounds:
        target = a if rnd.party == "A" else b
        nxt = []
        for prefix, X, space in live:
            for i, m in enumerate(rnd.operators[prefix]):
                Y, out_space = apply_local(m, X, space, target, (rnd.target_dim,))
                nxt.append((prefix + (i,), Y, out_space))
        live = nxt
    total = sum(X for _, X, _ in live)
    logger.debug("Direct map summed {} outcome tuples", len(live))
    return validate_state(total, live[0][2], state.a_labels, state.b_labels)


def contraction_norms(protocol: AlternatingProtocol) -> dict[str, dict[Prefix, float]]:
    """Largest singular value of M^(2n-1)...M^(1) (and of the B product) per outcome tuple."""
    out: dict[str, dict[Prefix, float]] = {"A": {}, "B": {}}
    for outcome in protocol.outcomes():
        for party in ("A", "B"):
            prod = None
            for r, rnd in enumerate(protocol.rounds):
                if rnd.party != party:
                    continue
                m = rnd.operators[outcome[:r]][outcome[r]]
                prod = m if prod is None else m @ prod
            out[party][outcome] = float(np.linalg.norm(prod, 2))
    return out


# ---------- composition of one-way rounds ----------
@dataclass(frozen=True)
class ComposedMap:
    protocol: AlternatingProtocol
    one_way_rounds: tuple[OneWayRound, ...]
    total_space: FactorSpace
    system_labels: tuple[str, str] = ("A", "B")

    @property
    def ancilla_count(self) -> int:
        return 2 * len(self.one_way_rounds)


def record_label(party: Party, r: int) -> str:
    return f"{party}'{r}"


def build_composed(protocol: AlternatingProtocol, system_labels: tuple[str, str] = ("A", "B"),
                   cfg: BellforgeConfig | None = None) -> ComposedMap:
    """One one-way round per instrument round r, with Kraus operators
    P_prefix ⊗ M^(r)_{prefix, i} on the sender's records and system.

    Both parties record i_r in an ancilla of dimension d_r.
    """
    cfg = cfg or BellforgeConfig()
    counts = protocol.branch_counts
    rec_dim = int(np.prod([d * d for d in counts], dtype=np.int64))
    widest = max(max(r.source_dim, r.target_dim) for r in protocol.a_rounds)
    widest_b = max(max(r.source_dim, r.target_dim) for r in protocol.b_rounds)
    if rec_dim * widest * widest_b > cfg.decomposition.dim_cap:
        raise CapacityError(
            f"composed space of dimension {rec_dim * widest * widest_b} exceeds cap {cfg.decomposition.dim_cap}")

    a_sys, b_sys = system_labels
    rounds = []
    for r, rnd in enumerate(protocol.rounds):
        sender = rnd.party
        # the sender holds one record per earlier round, in round order
        prior = tuple(record_label(sender, k + 1) for k in range(r))
        prior_dims = counts[:r]
        branches = []
        for prefix in protocol.prefixes(r):
            P = basis_projector(prefix, prior_dims)
            for i, m in enumerate(rnd.operators[prefix]):
                kraus = tensor(P, m) if sender == "A" else tensor(m, P)
                branches.append(KrausBranch(frozen(kraus), i, f"{sender}{r + 1}:{prefix}->{i}"))
        if sender == "A":
            acts_on = prior + (a_sys,)
            out_dims = tuple(prior_dims) + (rnd.target_dim,)
        else:
            acts_on = (b_sys,) + prior
            out_dims = (rnd.target_dim,) + tuple(prior_dims)
        other = "B" if sender == "A" else "A"
        rounds.append(OneWayRound(
            sender=sender,
            branches=tuple(branches),
            sender_record_dim=counts[r],
            receiver_record_dim=counts[r],
            acts_on=acts_on,
            output_dims=out_dims,
            record_labels=(record_label(sender, r + 1), record_label(other, r + 1)),
        ))
        _check_round_complete(rounds[-1])

    a_labels = tuple(record_label("A", r + 1) for r in range(len(counts))) + (a_sys,)
    b_labels = (b_sys,) + tuple(record_label("B", r + 1) for r in range(len(counts)))
    total = FactorSpace(
        a_labels + b_labels,
        tuple(counts) + (protocol.a_dims[1], protocol.b_dims[1]) + tuple(counts),
    )
    logger.debug("Composed {} one-way rounds on a space of dimension {}", len(rounds), total.dim)
    return ComposedMap(protocol=protocol, one_way_rounds=tuple(rounds), total_space=total,
                       system_labels=(a_sys, b_sys))


def _check_round_complete(rnd: OneWayRound, tol: float = TOL.compare) -> None:
    k = rnd.branches[0].kraus
    err = max_entry_distance(sum(b.kraus.conj().T @ b.kraus for b in rnd.branches), identity(k.shape[1]))
    if err > tol:
        raise InvariantError("completeness violated", f"{rnd.direction} round misses identity by {err:.3g}")


def apply_composed(cmap: ComposedMap, state: BipartiteState) -> tuple[BipartiteState, ProtocolTranscript]:
    """Φ(ρ) = Λ_2n ∘ ... ∘ Λ_1 (ρ), records included."""
    _check_fits(cmap.protocol, state)
    a, b = _side_targets(state)
    if (a[0], b[0]) != cmap.system_labels:
        raise InvariantError("unknown label", f"state systems {a + b} differ from the composed map's")
    return run_protocol(state, cmap.one_way_rounds)


def verify_equivalence(protocol: AlternatingProtocol, state: BipartiteState,
                       cfg: BellforgeConfig | None = None, cmap: ComposedMap | None = None) -> float:
    """Trace distance between Φ(ρ) with its records traced out and Λ(ρ).

    `cmap` reuses a composed map already built for this protocol.
    """
    a, b = _side_targets(state)
    if cmap is None:
        cmap = build_composed(protocol, (a[0], b[0]), cfg)
    elif cmap.protocol is not protocol:
        raise InvariantError("protocol mismatch", "composed map was built for a different protocol")
    phi, _ = apply_composed(cmap, state)
    reduced = partial_trace(phi.matrix, phi.space, a + b)
    direct = apply_direct(protocol, state)
    dist = trace_distance(reduced, direct.matrix)
    logger.info("Composed vs direct map: trace distance {:.3g} (n={}, composed dim {})", dist, protocol.n, phi.dim)
    return dist


# ---------- generators ----------
def random_instrument(party: Party, prefixes: Sequence[Prefix], branches: int, source_dim: int,
                      target_dim: int, rng: np.random.Generator) -> InstrumentRound:
    """Branch operators cut from the columns of a random isometry, one isometry per prefix."""
    ops = {}
    for prefix in prefixes:
        V = random_isometry(branches * target_dim, source_dim, rng)
        ops[prefix] = [V[i * target_dim:(i + 1) * target_dim, :] for i in range(branches)]
    return make_instrument(party, ops)


def random_protocol(n: int, branches: int, dim: int, rng: np.random.Generator) -> AlternatingProtocol:
    rounds: list[InstrumentRound] = []
    for r in range(2 * n):
        prefixes = list(itertools.product(*(range(branches) for _ in range(r))))
        rounds.append(random_instrument("A" if r % 2 == 0 else "B", prefixes, branches, dim, dim, rng))
    return make_protocol(rounds)


def filter_protocol(mA: Operator, nB: Operator) -> AlternatingProtocol:
    """The two-filter reveal protocol as a one-pair alternating protocol."""
    from .filtering import complement_filter, make_filter

    M = make_filter(mA, "A")
    N = make_filter(nB, "B")
    Mt, Nt = complement_filter(M), complement_filter(N)
    return make_protocol([
        make_instrument("A", {(): [M.matrix, Mt.matrix]}),
        make_instrument("B", {(0,): [N.matrix, Nt.matrix], (1,): [N.matrix, Nt.matrix]}),
    ])
