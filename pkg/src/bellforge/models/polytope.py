"""Bell scenarios, behaviors and the local polytope.

A behavior is stored as one flat vector: blocks ordered by setting pair (k, l)
with k major, each block holding p(ij|kl) row-major in (i, j). Settings and
outcomes are 1-based at the interface (as in ``DeterministicStrategy``) and
0-based in array indexing.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterator, Sequence

import numpy as np
from loguru import logger

from ..core.config import TOL, BellforgeConfig
from ..core.errors import CapacityError, DimensionMismatch, InvariantError, LocalBehaviorError, NumericalFailure
from ..core.operators import Operator, as_operator, identity, is_projector, tensor
from ..core.quantum import BipartiteState, Povm, make_povm
from ..plugins import get as get_backend
from .types import BellInequality, MembershipResult


@dataclass(frozen=True)
class Scenario:
    mA: tuple[int, ...]   # outcome count per A setting
    nB: tuple[int, ...]   # outcome count per B setting

    def __post_init__(self):
        object.__setattr__(self, "mA", tuple(int(m) for m in self.mA))
        object.__setattr__(self, "nB", tuple(int(n) for n in self.nB))
        if not self.mA or not self.nB:
            raise InvariantError("empty scenario", "each side needs at least one setting")
        if min(self.mA + self.nB) < 1:
            raise InvariantError("outcome count < 1", f"mA={self.mA} nB={self.nB}")

    @property
    def vertex_count(self) -> int:
        return int(np.prod(self.mA, dtype=np.int64) * np.prod(self.nB, dtype=np.int64))

    @property
    def offsets(self) -> dict[tuple[int, int], int]:
        return _offsets(self)

    @property
    def size(self) -> int:
        return sum(m * n for m in self.mA for n in self.nB)

    def entry(self, k: int, l: int, i: int, j: int) -> int:
        """Flat index of p(ij|kl), all indices 0-based."""
        return self.offsets[(k, l)] + i * self.nB[l] + j


@lru_cache(maxsize=64)
def _offsets(scenario: Scenario) -> dict[tuple[int, int], int]:
    out, pos = {}, 0
    for k, m in enumerate(scenario.mA):
        for l, n in enumerate(scenario.nB):
            out[(k, l)] = pos
            pos += m * n
    return out


@dataclass(frozen=True)
class Behavior:
    scenario: Scenario
    probs: np.ndarray

    def block(self, k: int, l: int) -> np.ndarray:
        """p(·,·|kl) as an m_k x n_l array (0-based k, l)."""
        start = self.scenario.offsets[(k, l)]
        m, n = self.scenario.mA[k], self.scenario.nB[l]
        return self.probs[start:start + m * n].reshape(m, n)


def make_behavior(scenario: Scenario, probs, tol: float = TOL.compare) -> Behavior:
    p = np.array(probs, dtype=float).reshape(-1)
    if p.size != scenario.size:
        raise DimensionMismatch(f"{p.size} probabilities for a scenario of {scenario.size} entries")
    if p.size and p.min() < -TOL.eig:
        raise InvariantError("negative probability", f"min entry {p.min():.3g}")
    b = Behavior(scenario, p)
    for (k, l) in scenario.offsets:
        s = b.block(k, l).sum()
        if abs(s - 1.0) > tol:
            raise InvariantError("not normalized", f"block ({k + 1},{l + 1}) sums to {s:.12g}")
    p.flags.writeable = False
    return b


@dataclass(frozen=True)
class DeterministicStrategy:
    rs: tuple[int, ...]   # forced outcome per A setting, 1-based
    ss: tuple[int, ...]   # forced outcome per B setting, 1-based


def _check_strategy(scenario: Scenario, strategy: DeterministicStrategy) -> None:
    if len(strategy.rs) != len(scenario.mA) or len(strategy.ss) != len(scenario.nB):
        raise InvariantError("outcome out of range", f"strategy {strategy} for scenario {scenario}")
    for r, m in zip(strategy.rs, scenario.mA):
        if not 1 <= r <= m:
            raise InvariantError("outcome out of range", f"r={r} with {m} outcomes")
    for s, n in zip(strategy.ss, scenario.nB):
        if not 1 <= s <= n:
            raise InvariantError("outcome out of range", f"s={s} with {n} outcomes")


def strategies(scenario: Scenario) -> Iterator[DeterministicStrategy]:
    """Mixed-radix enumeration over (r_1..r_K, s_1..s_L), last index fastest."""
    K = len(scenario.mA)
    ranges = [range(1, m + 1) for m in scenario.mA] + [range(1, n + 1) for n in scenario.nB]
    for combo in itertools.product(*ranges):
        yield DeterministicStrategy(rs=tuple(combo[:K]), ss=tuple(combo[K:]))


def deterministic_behavior(scenario: Scenario, strategy: DeterministicStrategy) -> Behavior:
    _check_strategy(scenario, strategy)
    p = np.zeros(scenario.size)
    for (k, l) in scenario.offsets:
        p[scenario.entry(k, l, strategy.rs[k] - 1, strategy.ss[l] - 1)] = 1.0
    return make_behavior(scenario, p)


@lru_cache(maxsize=16)
def vertex_matrix(scenario: Scenario) -> np.ndarray:
    """0/1 matrix with one row d_λ per strategy, in enumeration order."""
    D = np.zeros((scenario.vertex_count, scenario.size))
    pairs = list(scenario.offsets)
    for v, strat in enumerate(strategies(scenario)):
        for (k, l) in pairs:
            D[v, scenario.entry(k, l, strat.rs[k] - 1, strat.ss[l] - 1)] = 1.0
    D.flags.writeable = False
    logger.debug("Built {} x {} vertex matrix for mA={} nB={}", *D.shape, scenario.mA, scenario.nB)
    return D


# ---------- quantum behaviors ----------
def behavior_from_state(state: BipartiteState, povmsA: Sequence[Povm], povmsB: Sequence[Povm]) -> Behavior:
    """p(ij|kl) = tr(ρ A_{i|k} ⊗ B_{j|l}); POVMs act on the whole A side and the whole B side."""
    dA, dB = state.a_dim, state.b_dim
    for povm in povmsA:
        if povm.dim != dA:
            raise DimensionMismatch(f"A-side POVM of dimension {povm.dim} on A side of dimension {dA}")
    for povm in povmsB:
        if povm.dim != dB:
            raise DimensionMismatch(f"B-side POVM of dimension {povm.dim} on B side of dimension {dB}")
    scenario = Scenario(tuple(len(p) for p in povmsA), tuple(len(p) for p in povmsB))
    R = state.matrix.reshape(dA, dB, dA, dB)
    Bs = [np.stack(p.elements) for p in povmsB]
    blocks = []
    for povm in povmsA:
        # X_i[y, v] = sum_{x,u} ρ[x,y,u,v] A_i[u,x]
        X = np.einsum("xyuv,iux->iyv", R, np.stack(povm.elements))
        for Bl in Bs:
            blocks.append(np.einsum("iyv,jvy->ij", X, Bl).real.reshape(-1))
    p = np.concatenate(blocks)
    p[np.abs(p) < 1e-15] = 0.0
    return make_behavior(scenario, p)


def no_signaling_check(b: Behavior, tol: float = TOL.compare) -> bool:
    sc = b.scenario
    for k in range(len(sc.mA)):
        marg = [b.block(k, l).sum(axis=1) for l in range(len(sc.nB))]
        if any(np.max(np.abs(m - marg[0])) > tol for m in marg[1:]):
            return False
    for l in range(len(sc.nB)):
        marg = [b.block(k, l).sum(axis=0) for k in range(len(sc.mA))]
        if any(np.max(np.abs(m - marg[0])) > tol for m in marg[1:]):
            return False
    return True


# ---------- membership ----------
def _verified_inequality(b: Behavior, s: np.ndarray, kind: str, solver_offset: float | None = None) -> BellInequality:
    """Scale to max |s_e| = 1, tighten the offset to -max_λ s·d_λ, and check the violation."""
    scale = float(np.max(np.abs(s), initial=0.0))
    if scale <= 0.0:
        raise NumericalFailure("certificate has no nonzero coefficient")
    s = s / scale
    D = vertex_matrix(b.scenario)
    offset = -float(np.max(D @ s))
    if solver_offset is not None and solver_offset / scale > offset + TOL.lp:
        logger.warning("{} certificate offset tightened by {:.3g}", kind, solver_offset / scale - offset)
    worst = float(np.max(D @ s + offset))
    if worst > 1e-12:
        raise NumericalFailure(f"{kind} certificate violated by a vertex ({worst:.3g})")
    margin = float(s @ b.probs + offset)
    if margin <= TOL.lp:
        raise NumericalFailure(f"{kind} certificate margin {margin:.3g} does not exceed {TOL.lp}")
    s.flags.writeable = False
    return BellInequality(coefficients=s, offset=offset, margin=margin, kind=kind)


def normalized_certificate(b: Behavior, cfg: BellforgeConfig | None = None) -> BellInequality:
    """Most violated inequality with coefficients in [-1, 1].

    Maximizes s·b + s0 over s = u - 1 (0 <= u <= 2) and free s0 = v⁺ - v⁻,
    subject to s·d_λ + s0 <= 0 for every vertex; slack w_λ and t_e make it
    standard form.
    """
    from .simplex import solve_standard_form

    cfg = cfg or BellforgeConfig()
    D = vertex_matrix(b.scenario)
    V, E = D.shape
    blocks = float(len(b.scenario.offsets))
    n = E + 2 + V + E
    A = np.zeros((V + E, n))
    A[:V, :E] = D
    A[:V, E] = 1.0
    A[:V, E + 1] = -1.0
    A[:V, E + 2:E + 2 + V] = np.eye(V)
    A[V:, :E] = np.eye(E)
    A[V:, E + 2 + V:] = np.eye(E)
    rhs = np.concatenate([np.full(V, blocks), np.full(E, 2.0)])
    c = np.zeros(n)
    c[:E] = -b.probs
    c[E], c[E + 1] = -1.0, 1.0
    res = solve_standard_form(c, A, rhs, max_iterations=cfg.polytope.max_iterations)
    if res.status != "optimal":
        raise NumericalFailure(f"certificate LP ended {res.status}")
    return _verified_inequality(b, res.x[:E] - 1.0, "normalized", solver_offset=float(res.x[E] - res.x[E + 1]))


def lp_membership(b: Behavior, cfg: BellforgeConfig | None = None) -> MembershipResult:
    """Decide b ∈ ℒ; return mixture weights when inside, a verified Bell inequality when outside."""
    cfg = cfg or BellforgeConfig()
    if b.scenario.vertex_count > cfg.polytope.vertex_cap:
        raise CapacityError(f"{b.scenario.vertex_count} vertices exceed cap {cfg.polytope.vertex_cap}")
    D = vertex_matrix(b.scenario)
    verdict = get_backend(cfg.polytope.backend)(D, b.probs, cfg)
    if verdict.inside:
        w = np.clip(verdict.weights, 0.0, None)
        w = w / w.sum()
        err = float(np.max(np.abs(w @ D - b.probs)))
        if err > 1e-8:
            raise NumericalFailure(f"mixture weights miss the behavior by {err:.3g}")
        w.flags.writeable = False
        return MembershipResult(inside=True, weights=w, backend=verdict.backend)
    if cfg.polytope.certificate == "farkas" and verdict.farkas is not None:
        y = verdict.farkas
        # y = (s, s0) up to scale; the offset is recomputed exactly anyway
        cert = _verified_inequality(b, np.array(y[:-1], dtype=float), "farkas", solver_offset=float(y[-1]))
    else:
        cert = normalized_certificate(b, cfg)
    logger.debug("Behavior outside ℒ ({}): margin {:.6g}", cert.kind, cert.margin)
    return MembershipResult(inside=False, certificate=cert, backend=verdict.backend)


def chsh_scale_margin(result: MembershipResult) -> float | None:
    """Violation margin with coefficients bounded by 1, the scale on which the
    CHSH expression exceeds its local bound by S - 2. None when inside."""
    if result.inside:
        return None
    cert = result.certificate
    return cert.margin / float(np.max(np.abs(cert.coefficients)))


def mix_with_vertex(b: Behavior, weight_p: float, strategy: DeterministicStrategy) -> Behavior:
    """p·b + (1 - p)·d_λ."""
    if not 0.0 < weight_p <= 1.0:
        raise InvariantError("weight out of range", f"p = {weight_p} not in (0, 1]")
    d = deterministic_behavior(b.scenario, strategy)
    return make_behavior(b.scenario, weight_p * b.probs + (1.0 - weight_p) * d.probs)


def find_escaping_vertex(b: Behavior, weight_p: float, cfg: BellforgeConfig | None = None
                         ) -> tuple[DeterministicStrategy, Behavior, MembershipResult]:
    """First strategy (enumeration order) whose mixture with b stays outside ℒ."""
    if not 0.0 < weight_p <= 1.0:
        raise InvariantError("weight out of range", f"p = {weight_p} not in (0, 1]")
    if lp_membership(b, cfg).inside:
        raise LocalBehaviorError("input behavior is local")
    for strategy in strategies(b.scenario):
        mixed = mix_with_vertex(b, weight_p, strategy)
        result = lp_membership(mixed, cfg)
        if not result.inside:
            logger.debug("Escaping vertex rs={} ss={} at p={:.6g}", strategy.rs, strategy.ss, weight_p)
            return strategy, mixed, result
    raise NumericalFailure("no escaping vertex found")


# ---------- lifted measurements ----------
def lift_povm(povm: Povm, record_projector, record_space_dim: int, forced_outcome: int, *,
              records_after: bool = False, record_labels: Sequence[str] = ()) -> Povm:
    """Ã_i = P₀ ⊗ A_i + δ_{i,r} (I - P₀) ⊗ I.

    The record factor precedes the system unless `records_after` (the B-side
    layout, where records follow B's systems).
    """
    P = as_operator(record_projector)
    if P.shape != (record_space_dim, record_space_dim):
        raise DimensionMismatch(f"record projector {P.shape} for record dimension {record_space_dim}")
    if not is_projector(P):
        raise InvariantError("not a projector", "record projector")
    if not 1 <= forced_outcome <= len(povm):
        raise InvariantError("outcome out of range", f"forced outcome {forced_outcome} of {len(povm)}")
    rest = identity(record_space_dim) - P
    eye = identity(povm.dim)

    def _join(rec: Operator, sys: Operator) -> Operator:
        return tensor(sys, rec) if records_after else tensor(rec, sys)

    elements = []
    for label, A in zip(povm.labels, povm.elements):
        el = _join(P, A)
        if label == forced_outcome:
            el = el + _join(rest, eye)
        elements.append(el)
    party = povm.party + tuple(record_labels) if records_after else tuple(record_labels) + povm.party
    return make_povm(elements, party=party, values=povm.values)
