from __future__ import annotations

import math
from typing import Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .. import SCHEMA


class _Versioned(BaseModel):
    model_config = ConfigDict(populate_by_name=True, extra="forbid")

    schema_: str = Field(SCHEMA, alias="schema")

    @field_validator("schema_")
    @classmethod
    def _known_schema(cls, v: str) -> str:
        if v != SCHEMA:
            raise ValueError(f"unsupported schema {v!r}, expected {SCHEMA!r}")
        return v


class JsonOperator(BaseModel):
    """Row-major complex matrix, entries as [re, im] pairs."""
    model_config = ConfigDict(extra="forbid")

    rows: int = Field(ge=1)
    cols: int = Field(ge=1)
    data: List[Tuple[float, float]]

    @model_validator(mode="after")
    def _shape(self):
        if len(self.data) != self.rows * self.cols:
            raise ValueError(f"{len(self.data)} entries for a {self.rows} x {self.cols} operator")
        if not all(math.isfinite(re) and math.isfinite(im) for re, im in self.data):
            raise ValueError("operator entries must be finite")
        return self


class Partition(BaseModel):
    A: List[str]
    B: List[str]


class StateFile(_Versioned):
    dims: List[int]
    labels: List[str]
    partition: Partition
    records: List[str] = Field(default_factory=list)
    matrix: JsonOperator


class FilterFile(_Versioned):
    party: Literal["A", "B"]
    matrix: JsonOperator


class BehaviorFile(_Versioned):
    mA: List[int]
    nB: List[int]
    probs: Dict[str, List[List[float]]]   # "k,l" (1-based) -> m_k x n_l block


class SettingsFile(_Versioned):
    a1: JsonOperator
    a2: JsonOperator
    b1: JsonOperator
    b2: JsonOperator


class BranchSpec(BaseModel):
    prefix: List[int] = Field(default_factory=list)
    operators: List[JsonOperator]


class RoundSpec(BaseModel):
    party: Literal["A", "B"]
    source_dim: int = Field(ge=1)
    target_dim: int = Field(ge=1)
    branches: List[BranchSpec]


class ProtocolFile(_Versioned):
    rounds: List[RoundSpec]


# ---------- results ----------
class CertificateOut(BaseModel):
    coefficients: Dict[str, List[List[float]]]
    offset: float
    margin: float
    kind: str


class MembershipOut(_Versioned):
    inside: bool
    verdict: Literal["INSIDE", "NONLOCAL"]
    backend: str
    weights: Optional[List[float]] = None
    certificate: Optional[CertificateOut] = None


class FilterOut(_Versioned):
    probability: float
    state: StateFile


class RevealOut(_Versioned):
    bits_a_to_b: int
    bits_b_to_a: int
    state: StateFile


class ChshOut(_Versioned):
    chsh: float


class EquivalenceOut(_Versioned):
    trace_distance: float
    n: int
    composed_dim: int


class Report(_Versioned):
    """One row of the worked-example reproduction."""
    p: float
    q: float
    filter_probability: float
    chsh: float
    chsh_closed_form: float
    chsh_error: float
    inside: bool
    verdict: Literal["INSIDE", "NONLOCAL"]
    certificate_margin: Optional[float] = None
    chsh_scale_margin: Optional[float] = None
    roundtrip_distance: float
    bits_a_to_b: int
    bits_b_to_a: int
    block_weights: List[float]


class ReportGrid(_Versioned):
    reports: List[Report]
