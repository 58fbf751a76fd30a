# src/bellforge/models/types.py
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Dict, Optional

import numpy as np


@dataclass
class FeasibilityVerdict:
    """Raw answer of an LP backend to "is the target a convex mixture of the vertices?"."""
    inside: bool
    weights: Optional[np.ndarray] = None
    farkas: Optional[np.ndarray] = None   # y over (entries..., normalization) when the backend has one
    residual: float = 0.0
    backend: str = "simplex"
    info: Dict[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class BellInequality:
    """s·p + offset <= 0 holds for every local behavior p; `margin` = s·b + offset for the tested b."""
    coefficients: np.ndarray
    offset: float
    margin: float
    kind: str = "normalized"


@dataclass(frozen=True)
class MembershipResult:
    inside: bool
    weights: Optional[np.ndarray] = None          # q_λ over vertices, enumeration order
    certificate: Optional[BellInequality] = None
    backend: str = "simplex"

    def __post_init__(self):
        if (self.weights is None) == (self.certificate is None):
            raise ValueError("exactly one of weights/certificate must be present")
