
from __future__ import annotations
import numpy as np
import pyomo.environ as pyo
from ..core.config import SolverConfig
from .types import FeasibilityVerdict
from loguru import logger

# HiGHS reports feasibility to its own primal tolerance; residuals below this count as zero.
HIGHS_RESIDUAL_TOL = 1e-7

def _solve(m: pyo.ConcreteModel, cfg: SolverConfig) -> tuple[str, str]:
    """Solve with HiGHS; (termination condition, driver used)."""
    if cfg.driver == "appsi":
        try:
            from pyomo.contrib.appsi.solvers.highs import Highs
            solver = Highs()
            solver.config.time_limit = cfg.time_limit
            res = solver.solve(m)
            return str(res.termination_condition), "appsi"
        except Exception as e:
            logger.warning("Falling back to exec HiGHS: {}", e)
    solver = pyo.SolverFactory("highs")
    solver.options["time_limit"] = cfg.time_limit
    res = solver.solve(m, tee=False)
    return str(res.solver.termination_condition), "exec"


def build_membership_model(vertices: np.ndarray, target: np.ndarray) -> pyo.ConcreteModel:
    """
    L1-residual membership LP over the columns of `vertices` (one row per vertex).

    Decisions:
      - q[v] >= 0, weight of vertex v; up[e], dn[e] >= 0, residual of entry e.

    Constraints:
      - Match: sum_v q[v] * d_v[e] + up[e] - dn[e] == target[e]
      - Convex: sum_v q[v] == 1

    Objective:
      - Minimize sum_e (up[e] + dn[e]); zero iff target lies in the hull.
    """
    n_vert, n_ent = vertices.shape
    support = [np.flatnonzero(vertices[:, e]).tolist() for e in range(n_ent)]

    m = pyo.ConcreteModel(name="local_polytope_membership")
    m.V = pyo.Set(initialize=list(range(n_vert)))
    m.E = pyo.Set(initialize=list(range(n_ent)))

    # ---------- Decisions ----------
    m.q = pyo.Var(m.V, domain=pyo.NonNegativeReals)
    m.up = pyo.Var(m.E, domain=pyo.NonNegativeReals)
    m.dn = pyo.Var(m.E, domain=pyo.NonNegativeReals)

    # ---------- Constraints ----------
    def _match(_m, e):
        return sum(float(vertices[v, e]) * _m.q[v] for v in support[e]) + _m.up[e] - _m.dn[e] == float(target[e])
    m.Match = pyo.Constraint(m.E, rule=_match)
    m.Convex = pyo.Constraint(expr=sum(m.q[v] for v in m.V) == 1)

    # ---------- Objective ----------
    m.obj = pyo.Objective(expr=sum(m.up[e] + m.dn[e] for e in m.E), sense=pyo.minimize)
    return m


def highs_membership(vertices: np.ndarray, target: np.ndarray, cfg: SolverConfig) -> FeasibilityVerdict:
    m = build_membership_model(vertices, target)
    status, driver = _solve(m, cfg)
    if "optimal" not in status.lower():
        logger.warning("HiGHS membership solve ended with status {}", status)
    residual = float(pyo.value(m.obj))
    weights = np.array([pyo.value(m.q[v]) or 0.0 for v in m.V])
    inside = residual <= HIGHS_RESIDUAL_TOL
    logger.debug("HiGHS membership: residual={:.3g} driver={} inside={}", residual, driver, inside)
    return FeasibilityVerdict(
        inside=inside,
        weights=np.clip(weights, 0.0, None) if inside else None,
        residual=residual,
        backend="highs",
        info={"status": status, "driver": driver},
    )
