# bellforge/core/config.py
from __future__ import annotations
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Dict, Optional
import pathlib
import yaml


# ---------- fixed numerical tolerances ----------
@dataclass(frozen=True)
class Tolerances:
    eig: float = 1e-10          # Hermiticity / PSD slack on eigenvalues
    compare: float = 1e-9       # max-entry comparisons, completeness, normalization
    prob_floor: float = 1e-12   # success probabilities at or below this are impossible branches
    lp: float = 1e-9            # simplex pivoting and feasibility
    tsirelson: float = 1e-9     # slack before a CHSH value above 2*sqrt(2) is reported

TOL = Tolerances()


# ---------- leaf configs ----------
@dataclass
class PolytopeConfig:
    backend: str = "simplex"            # registry name: "simplex" | "highs"
    vertex_cap: int = 100_000
    certificate: str = "normalized"     # "normalized" | "farkas"
    max_iterations: int = 50_000

@dataclass
class SolverConfig:
    driver: str = "appsi"               # "appsi" (exec fallback) | "exec"
    time_limit: int = 30

@dataclass
class DecompositionConfig:
    dim_cap: int = 4096                 # largest composed-map dimension we will build

@dataclass
class RunConfig:
    random_seed: int = 42
    log_level: str = "INFO"

_SECTIONS = {
    "polytope": PolytopeConfig,
    "solver": SolverConfig,
    "decomposition": DecompositionConfig,
    "run": RunConfig,
}

# ---------- helpers ----------
def _as(cls, obj, section: str):
    """Overlay a dict section onto `cls` defaults; pass instances through."""
    if isinstance(obj, cls):
        return obj
    if obj is None:
        return cls()
    if not isinstance(obj, dict):
        raise TypeError(f"config section '{section}' must be a mapping, got {type(obj).__name__}")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(obj) - known)
    if unknown:
        raise TypeError(f"unknown key(s) in config section '{section}': {', '.join(unknown)}")
    return cls(**obj)

# ---------- top-level ----------
@dataclass
class BellforgeConfig:
    polytope: PolytopeConfig = field(default_factory=PolytopeConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    decomposition: DecompositionConfig = field(default_factory=DecompositionConfig)
    run: RunConfig = field(default_factory=RunConfig)

    def __post_init__(self):
        for name, cls in _SECTIONS.items():
            setattr(self, name, _as(cls, getattr(self, name), name))

    @classmethod
    def from_dict(cls, d: Optional[Dict[str, Any]]) -> "BellforgeConfig":
        d = d or {}
        unknown = sorted(set(d) - set(_SECTIONS))
        if unknown:
            raise TypeError(f"unknown config section(s): {', '.join(unknown)}")
        return cls(**{name: _as(sec, d.get(name), name) for name, sec in _SECTIONS.items()})

def load_config(path_or_dict: str | pathlib.Path | Dict[str, Any] | BellforgeConfig | None = None) -> BellforgeConfig:
    """Accept YAML path, dict, BellforgeConfig or None; always return a fresh, fully-typed BellforgeConfig."""
    if path_or_dict is None:
        return BellforgeConfig()
    if isinstance(path_or_dict, BellforgeConfig):
        return BellforgeConfig.from_dict(asdict(path_or_dict))
    if isinstance(path_or_dict, dict):
        return BellforgeConfig.from_dict(path_or_dict)
    path = pathlib.Path(path_or_dict)
    with path.open("r") as f:
        d = yaml.safe_load(f) or {}
    return BellforgeConfig.from_dict(d)
