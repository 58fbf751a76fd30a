"""The qutrit worked example: a Bell-local-looking mixture whose two filters
isolate a maximally entangled state, revealed by two one-bit messages."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np
import pandas as pd
from loguru import logger

from ..models.filtering import LocalFilter, apply_filters, make_filter
from ..models.polytope import behavior_from_state, chsh_scale_margin, lp_membership
from ..models.protocols import ProtocolTranscript, extract_block, reveal_two_bits, trace_out_records
from ..models.witness import QUTRIT_M, ChshSettings, chsh_value, paper_observables
from .config import BellforgeConfig
from .datatypes import Report
from .errors import InvariantError
from .operators import FactorSpace, tensor, trace_distance
from .quantum import BipartiteState, observable_to_povm, pure_state, validate_state

P_MAX = 1.0 / 18.0
SYSTEMS = FactorSpace(("A", "B"), (3, 3))


@dataclass(frozen=True)
class PaperExample:
    p: float
    q: float
    rho: BipartiteState
    filters: tuple[LocalFilter, LocalFilter]
    rho2: BipartiteState
    transcript: ProtocolTranscript
    settings: ChshSettings


def closed_form_chsh(p: float) -> float:
    return 2.0 * p * (np.sqrt(2.0) - 1.0) + 2.0


def psi_state() -> BipartiteState:
    """(|00⟩ + |11⟩)/√2 on two qutrits."""
    v = np.zeros(9)
    v[0] = v[4] = 1.0
    return pure_state(v, SYSTEMS)


def _check_p(p: float) -> None:
    if not 0.0 < p <= P_MAX + 1e-15:
        raise InvariantError("p out of range", f"p = {p} not in (0, 1/18]")


def paper_state(p: float) -> BipartiteState:
    """ρ = p|ψ⟩⟨ψ| + p M⊗Ñ + q M̃⊗N + 4q M̃⊗Ñ with q = (1 - 3p)/6."""
    _check_p(p)
    q = (1.0 - 3.0 * p) / 6.0
    M = QUTRIT_M
    Mt = np.eye(3) - M
    rho = p * psi_state().matrix + p * tensor(M, Mt) + q * tensor(Mt, M) + 4 * q * tensor(Mt, Mt)
    return validate_state(rho, SYSTEMS)


def build_paper_state(p: float) -> PaperExample:
    _check_p(p)
    rho = paper_state(p)
    mA = make_filter(QUTRIT_M, "A")
    nB = make_filter(QUTRIT_M, "B")
    rho2, transcript = reveal_two_bits(rho, mA, nB)
    return PaperExample(
        p=p,
        q=(1.0 - 3.0 * p) / 6.0,
        rho=rho,
        filters=(mA, nB),
        rho2=rho2,
        transcript=transcript,
        settings=paper_observables(p),
    )


def two_bit_block_weights(rho2: BipartiteState) -> list[float]:
    """Weights of the record blocks K₀..K₃ (M⊗N, M⊗Ñ, M̃⊗N, M̃⊗Ñ)."""
    a1, a2 = rho2.a_records
    b1, b2 = rho2.b_records
    out = []
    for i in range(4):
        x, y = divmod(i, 2)
        try:
            _, w = extract_block(rho2, {a1: x, a2: y, b1: x, b2: y})
        except InvariantError:
            w = 0.0
        out.append(w)
    return out


def reproduce_report(p: float, cfg: BellforgeConfig | None = None) -> Report:
    ex = build_paper_state(p)
    _, prob = apply_filters(ex.rho, *ex.filters)
    chsh = chsh_value(ex.rho2, ex.settings)
    closed = closed_form_chsh(p)
    s = ex.settings
    povmsA = [observable_to_povm(s.a1, ex.rho2.a_labels), observable_to_povm(s.a2, ex.rho2.a_labels)]
    povmsB = [observable_to_povm(s.b1, ex.rho2.b_labels), observable_to_povm(s.b2, ex.rho2.b_labels)]
    result = lp_membership(behavior_from_state(ex.rho2, povmsA, povmsB), cfg)
    roundtrip = trace_distance(trace_out_records(ex.rho2, ex.rho2.records).matrix, ex.rho.matrix)
    report = Report(
        p=p,
        q=ex.q,
        filter_probability=prob,
        chsh=chsh,
        chsh_closed_form=closed,
        chsh_error=abs(chsh - closed),
        inside=result.inside,
        verdict="INSIDE" if result.inside else "NONLOCAL",
        certificate_margin=None if result.inside else result.certificate.margin,
        chsh_scale_margin=chsh_scale_margin(result),
        roundtrip_distance=roundtrip,
        bits_a_to_b=ex.transcript.bits_A_to_B,
        bits_b_to_a=ex.transcript.bits_B_to_A,
        block_weights=two_bit_block_weights(ex.rho2),
    )
    logger.info("p={:.6g}: CHSH {:.12g} (closed form {:.12g}), {}", p, chsh, closed, report.verdict)
    return report


def grid(p_max: float, points: int) -> list[float]:
    """`points` evenly spaced values in (0, p_max]."""
    if points < 1:
        raise InvariantError("p out of range", f"grid needs at least one point, got {points}")
    return [p_max * k / points for k in range(1, points + 1)]


def report_frame(ps: Iterable[float], cfg: BellforgeConfig | None = None) -> pd.DataFrame:
    rows = [reproduce_report(p, cfg).model_dump(exclude={"schema_"}) for p in ps]
    df = pd.DataFrame(rows)
    if not df.empty:
        df["block_weights"] = df["block_weights"].map(lambda w: " ".join(f"{x:.6g}" for x in w))
    return df
