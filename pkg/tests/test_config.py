import numpy as np
import pytest

from bellforge.core.config import TOL, BellforgeConfig, PolytopeConfig, load_config
from bellforge.core.errors import BellforgeError
from bellforge.models.polytope import Scenario, lp_membership, make_behavior
from bellforge.models.types import FeasibilityVerdict, MembershipResult
from bellforge.plugins import available, get, register


def test_defaults():
    cfg = load_config()
    assert cfg.polytope.backend == "simplex"
    assert cfg.polytope.vertex_cap == 100_000
    assert cfg.decomposition.dim_cap == 4096
    assert cfg.run.random_seed == 42
    assert TOL.eig == 1e-10 and TOL.prob_floor == 1e-12


def test_partial_dict_overlays_defaults():
    cfg = load_config({"polytope": {"certificate": "farkas"}, "solver": {"time_limit": 5}})
    assert cfg.polytope.certificate == "farkas"
    assert cfg.polytope.backend == "simplex"
    assert cfg.solver.time_limit == 5 and cfg.solver.driver == "appsi"


def test_config_copies():
    cfg = BellforgeConfig(polytope=PolytopeConfig(backend="highs"))
    again = load_config(cfg)
    assert again.polytope.backend == "highs"
    assert load_config(None) == BellforgeConfig()


def test_unknown_backend():
    with pytest.raises(BellforgeError, match="No LP backend registered under 'nope'"):
        get("nope")


def test_registered_backend_is_used():
    calls = []

    @register("always-inside")
    def _always_inside(vertices, target, cfg):
        calls.append(vertices.shape)
        w = np.zeros(vertices.shape[0])
        w[0] = 1.0
        return FeasibilityVerdict(inside=True, weights=w, backend="always-inside")

    assert "always-inside" in available()
    sc = Scenario((1,), (1,))
    result = lp_membership(make_behavior(sc, [1.0]), BellforgeConfig.from_dict({"polytope": {"backend": "always-inside"}}))
    assert result.inside and result.backend == "always-inside"
    assert calls == [(1, 1)]


def test_membership_result_needs_exactly_one_answer():
    with pytest.raises(ValueError):
        MembershipResult(inside=True)


def test_config_copy_is_independent():
    cfg = BellforgeConfig()
    again = load_config(cfg)
    again.polytope.vertex_cap = 8
    assert cfg.polytope.vertex_cap == 100_000


def test_unknown_keys_are_named():
    with pytest.raises(TypeError, match="'polytope': speed"):
        load_config({"polytope": {"speed": 3}})
    with pytest.raises(TypeError, match="section\\(s\\): solvers"):
        load_config({"solvers": {}})
    with pytest.raises(TypeError, match="must be a mapping"):
        load_config({"run": [1, 2]})
