
from __future__ import annotations
import numpy as np
from .registry import register
from ..core.config import BellforgeConfig
from ..models.simplex import solve_standard_form
from ..models.solvers import highs_membership
from ..models.types import FeasibilityVerdict


@register("simplex")
def simplex_backend(vertices: np.ndarray, target: np.ndarray, cfg: BellforgeConfig) -> FeasibilityVerdict:
    # rows: one per behavior entry, then the normalization sum_λ q_λ = 1
    A = np.vstack([vertices.T, np.ones((1, vertices.shape[0]))])
    b = np.append(target, 1.0)
    res = solve_standard_form(None, A, b, max_iterations=cfg.polytope.max_iterations)
    if res.status == "infeasible":
        return FeasibilityVerdict(inside=False, farkas=res.farkas, residual=res.infeasibility,
                                  info={"iterations": res.iterations})
    return FeasibilityVerdict(inside=True, weights=res.x, residual=res.infeasibility,
                              info={"iterations": res.iterations})


@register("highs")
def highs_backend(vertices: np.ndarray, target: np.ndarray, cfg: BellforgeConfig) -> FeasibilityVerdict:
    return highs_membership(vertices, target, cfg.solver)
