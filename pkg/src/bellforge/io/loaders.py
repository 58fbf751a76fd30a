from __future__ import annotations

from pathlib import Path
from typing import Type, TypeVar

import numpy as np
import yaml
from loguru import logger
from pydantic import BaseModel, ValidationError

from ..core.config import BellforgeConfig
from ..core.config import load_config as _load_config
from ..core.datatypes import (
    BehaviorFile,
    BranchSpec,
    CertificateOut,
    FilterFile,
    JsonOperator,
    MembershipOut,
    Partition,
    ProtocolFile,
    RoundSpec,
    SettingsFile,
    StateFile,
)
from ..core.errors import FormatError
from ..core.operators import FactorSpace, Operator
from ..core.quantum import BipartiteState, validate_state
from ..models.decomposition import AlternatingProtocol, make_instrument, make_protocol
from ..models.filtering import LocalFilter, make_filter
from ..models.polytope import Behavior, Scenario, make_behavior
from ..models.types import MembershipResult
from ..models.witness import ChshSettings, make_settings

M = TypeVar("M", bound=BaseModel)


# ---------- plumbing ----------
def _read(path: str | Path, model: Type[M]) -> M:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as e:
        raise FormatError(f"cannot read {p}: {e.strerror or e}") from e
    try:
        return model.model_validate_json(text)
    except ValidationError as e:
        first = e.errors()[0]
        where = ".".join(str(x) for x in first.get("loc", ()))
        raise FormatError(f"{p}: {first.get('msg', 'invalid')}{f' at {where}' if where else ''}") from e


def to_json(model: BaseModel) -> str:
    return model.model_dump_json(by_alias=True, indent=2)


def _write(path: str | Path, model: BaseModel) -> None:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(to_json(model) + "\n")
    logger.debug("Wrote {} to {}", type(model).__name__, p)


def load_config(path: str | Path | None = None) -> BellforgeConfig:
    if path is None:
        return _load_config(None)
    try:
        return _load_config(path)
    except (OSError, TypeError, ValueError, yaml.YAMLError) as e:
        raise FormatError(f"bad config {path}: {e}") from e


# ---------- operators ----------
def operator_to_json(op) -> JsonOperator:
    a = np.asarray(op, dtype=np.complex128)
    flat = a.reshape(-1)
    return JsonOperator(rows=a.shape[0], cols=a.shape[1],
                        data=[(float(z.real), float(z.imag)) for z in flat])


def operator_from_json(j: JsonOperator) -> Operator:
    d = np.array(j.data, dtype=float).reshape(j.rows * j.cols, 2)
    return (d[:, 0] + 1j * d[:, 1]).reshape(j.rows, j.cols)


# ---------- states ----------
def state_to_model(state: BipartiteState) -> StateFile:
    return StateFile(
        dims=list(state.space.dims),
        labels=list(state.space.labels),
        partition=Partition(A=list(state.a_labels), B=list(state.b_labels)),
        records=list(state.records),
        matrix=operator_to_json(state.matrix),
    )


def state_from_model(m: StateFile) -> BipartiteState:
    space = FactorSpace(tuple(m.labels), tuple(m.dims))
    return validate_state(operator_from_json(m.matrix), space, m.partition.A, m.partition.B, m.records)


def load_state(path: str | Path) -> BipartiteState:
    return state_from_model(_read(path, StateFile))


def save_state(state: BipartiteState, path: str | Path) -> None:
    _write(path, state_to_model(state))


# ---------- filters ----------
def load_filter(path: str | Path) -> LocalFilter:
    m = _read(path, FilterFile)
    return make_filter(operator_from_json(m.matrix), m.party)


def save_filter(f: LocalFilter, path: str | Path) -> None:
    _write(path, FilterFile(party=f.party, matrix=operator_to_json(f.matrix)))


# ---------- behaviors ----------
def _blocks(scenario: Scenario, vec: np.ndarray) -> dict[str, list[list[float]]]:
    out = {}
    for (k, l), start in scenario.offsets.items():
        m, n = scenario.mA[k], scenario.nB[l]
        out[f"{k + 1},{l + 1}"] = vec[start:start + m * n].reshape(m, n).tolist()
    return out


def behavior_to_model(b: Behavior) -> BehaviorFile:
    return BehaviorFile(mA=list(b.scenario.mA), nB=list(b.scenario.nB), probs=_blocks(b.scenario, b.probs))


def behavior_from_model(m: BehaviorFile) -> Behavior:
    scenario = Scenario(tuple(m.mA), tuple(m.nB))
    p = np.zeros(scenario.size)
    expected = {f"{k + 1},{l + 1}" for (k, l) in scenario.offsets}
    if set(m.probs) != expected:
        raise FormatError(f"behavior blocks {sorted(m.probs)} do not match settings {sorted(expected)}")
    for (k, l), start in scenario.offsets.items():
        block = np.asarray(m.probs[f"{k + 1},{l + 1}"], dtype=float)
        if block.shape != (scenario.mA[k], scenario.nB[l]):
            raise FormatError(f"block {k + 1},{l + 1} has shape {block.shape}, "
                              f"expected {(scenario.mA[k], scenario.nB[l])}")
        p[start:start + block.size] = block.reshape(-1)
    return make_behavior(scenario, p)


def load_behavior(path: str | Path) -> Behavior:
    return behavior_from_model(_read(path, BehaviorFile))


def save_behavior(b: Behavior, path: str | Path) -> None:
    _write(path, behavior_to_model(b))


# ---------- CHSH settings ----------
def load_settings(path: str | Path) -> ChshSettings:
    m = _read(path, SettingsFile)
    return make_settings(*(operator_from_json(o) for o in (m.a1, m.a2, m.b1, m.b2)))


def save_settings(s: ChshSettings, path: str | Path) -> None:
    _write(path, SettingsFile(**{k: operator_to_json(getattr(s, k).matrix) for k in ("a1", "a2", "b1", "b2")}))


# ---------- alternating protocols ----------
def protocol_to_model(protocol: AlternatingProtocol) -> ProtocolFile:
    rounds = []
    for rnd in protocol.rounds:
        branches = [BranchSpec(prefix=list(prefix), operators=[operator_to_json(o) for o in ops])
                    for prefix, ops in rnd.operators.items()]
        rounds.append(RoundSpec(party=rnd.party, source_dim=rnd.source_dim, target_dim=rnd.target_dim,
                                branches=branches))
    return ProtocolFile(rounds=rounds)


def protocol_from_model(m: ProtocolFile) -> AlternatingProtocol:
    rounds = []
    for r, spec in enumerate(m.rounds, start=1):
        ops = {tuple(br.prefix): [operator_from_json(o) for o in br.operators] for br in spec.branches}
        rnd = make_instrument(spec.party, ops)
        if (rnd.source_dim, rnd.target_dim) != (spec.source_dim, spec.target_dim):
            raise FormatError(f"round {r}: operators map {rnd.source_dim} -> {rnd.target_dim}, "
                              f"file declares {spec.source_dim} -> {spec.target_dim}")
        rounds.append(rnd)
    return make_protocol(rounds)


def load_protocol(path: str | Path) -> AlternatingProtocol:
    return protocol_from_model(_read(path, ProtocolFile))


def save_protocol(protocol: AlternatingProtocol, path: str | Path) -> None:
    _write(path, protocol_to_model(protocol))


# ---------- results ----------
def membership_to_model(result: MembershipResult, scenario: Scenario) -> MembershipOut:
    cert = None
    if result.certificate is not None:
        c = result.certificate
        cert = CertificateOut(coefficients=_blocks(scenario, np.asarray(c.coefficients)),
                              offset=c.offset, margin=c.margin, kind=c.kind)
    return MembershipOut(
        inside=result.inside,
        verdict="INSIDE" if result.inside else "NONLOCAL",
        backend=result.backend,
        weights=None if result.weights is None else [float(w) for w in result.weights],
        certificate=cert,
    )

