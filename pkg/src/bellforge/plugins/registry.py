from __future__ import annotations
from typing import Callable, Dict, Protocol

import numpy as np

from ..core.errors import BellforgeError
from ..models.types import FeasibilityVerdict


class MembershipBackend(Protocol):
    def __call__(self, vertices: np.ndarray, target: np.ndarray, cfg) -> FeasibilityVerdict: ...


_BACKENDS: Dict[str, MembershipBackend] = {}

def register(name: str):
    def _decorator(fn: MembershipBackend):
        _BACKENDS[name] = fn
        return fn
    return _decorator

def available() -> list[str]:
    return sorted(_BACKENDS)

def get(name: str) -> MembershipBackend:
    if name not in _BACKENDS:
        raise BellforgeError(f"No LP backend registered under '{name}' (have: {', '.join(available())})")
    return _BACKENDS[name]
