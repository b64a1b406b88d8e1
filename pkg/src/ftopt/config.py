"""
Experiment specification schema and construction of runtime objects.

Specs are YAML (or JSON) documents validated by the pydantic models below;
unknown keys are rejected. ``ExperimentSpec.model_json_schema()`` is the
published schema (also written to ``docs/experiment.schema.json``).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Annotated, Literal, Optional, Union

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from ftopt import signals as sg
from ftopt.flows import FlowKind, GainSpec, SolverState, initial_state
from ftopt.graph import BUILTIN_NETWORKS, Network
from ftopt.problems import QuadraticCost, ResourceProfile, SquaredAffineCost, TVLogistic
from ftopt.sim import NoiseSpec, SimConfig

SCHEMA_VERSION = 1


class SpecError(ValueError):
    """Spec is unreadable or fails schema validation."""


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class WaveCfg(_Strict):
    kind: Literal["sin", "cos"] = "sin"
    amp: float = 1.0
    freq: float = 1.0
    phase: float = 0.0


class SignalCfg(_Strict):
    const: float = 0.0
    slope: float = 0.0
    waves: list[WaveCfg] = Field(default_factory=list)


# a bare number is a constant signal
SignalLike = Union[float, SignalCfg]


def to_signal(s):
    if isinstance(s, (int, float)):
        return sg.const(float(s))
    return sg.Signal(s.const, s.slope, tuple(sg.Wave(w.kind, w.amp, w.freq, w.phase) for w in s.waves))


class NetworkCfg(_Strict):
    builtin: Optional[str] = None
    nodes: Optional[int] = None
    edges: Optional[list[tuple[int, int, float]]] = None

    @model_validator(mode="after")
    def _one_form(self):
        if (self.builtin is None) == (self.nodes is None):
            raise ValueError("give either 'builtin' or 'nodes' + 'edges'")
        if self.builtin is not None and self.builtin not in BUILTIN_NETWORKS:
            raise ValueError(f"unknown builtin network {self.builtin!r}; known: {sorted(BUILTIN_NETWORKS)}")
        if self.nodes is not None and self.edges is None:
            self.edges = []
        return self

    def build(self):
        if self.builtin is not None:
            return BUILTIN_NETWORKS[self.builtin]()
        return Network.from_edge_list(self.nodes, self.edges)


class QuadraticAgent(_Strict):
    curvature: Union[float, list[list[float]]]
    linear: list[SignalLike]
    offset: SignalLike = 0.0

    def build(self):
        return QuadraticCost(np.asarray(self.curvature, dtype=float),
                             tuple(to_signal(s) for s in self.linear), to_signal(self.offset))


class SquaredAffineAgent(_Strict):
    scale: float
    drift: list[SignalLike]

    def build(self):
        return SquaredAffineCost(self.scale, tuple(to_signal(s) for s in self.drift))


class LogisticAgent(_Strict):
    label: Literal[-1, 1]
    sample0: list[float]
    freq: float
    beta: float = Field(gt=0)

    def build(self):
        return TVLogistic(self.label, np.asarray(self.sample0), self.freq, self.beta)


class _ProblemBase(_Strict):
    demands: Optional[list[list[SignalLike]]] = None
    delta: Optional[float] = Field(default=None, ge=0)

    def build_models(self):
        return [a.build() for a in self.agents]

    def build_profiles(self):
        if self.demands is None:
            return None
        return [ResourceProfile(tuple(to_signal(s) for s in d), self.delta) for d in self.demands]


class QuadraticProblem(_ProblemBase):
    family: Literal["quadratic"]
    agents: list[QuadraticAgent]


class SquaredAffineProblem(_ProblemBase):
    family: Literal["squared_affine"]
    agents: list[SquaredAffineAgent]


class LogisticProblem(_ProblemBase):
    family: Literal["logistic"]
    agents: list[LogisticAgent]


ProblemCfg = Annotated[Union[QuadraticProblem, SquaredAffineProblem, LogisticProblem],
                       Field(discriminator="family")]


class GainCfg(_Strict):
    variant: Literal["power_sign", "norm_scaled"] = "power_sign"
    a: float = 1.0
    b: float = 0.0
    p: float = 0.5
    q: float = 2.0
    r: float = 2.0
    alpha: float = 1.0
    smoothing: Optional[float] = None

    def build(self):
        return GainSpec(**self.model_dump())


class NoiseCfg(_Strict):
    link_sigma: float = Field(default=0.0, ge=0)
    drift_sigma: float = Field(default=0.0, ge=0)


class SimCfg(_Strict):
    h: float = Field(gt=0)
    t_end: float = Field(gt=0)
    record_every: int = Field(default=1, ge=1)


class InitCfg(_Strict):
    primary: list[list[float]]


class OracleCfg(_Strict):
    tol: float = Field(default=1e-12, gt=0)


class SettlingCfg(_Strict):
    threshold: Optional[float] = Field(default=None, gt=0)
    dwell: float = Field(default=0.5, gt=0)


class OutputCfg(_Strict):
    dir: Optional[str] = None


class ExperimentSpec(_Strict):
    schema_version: Literal[1] = SCHEMA_VERSION
    name: str
    seed: int = Field(default=0, ge=0, lt=2 ** 64)
    flow: FlowKind
    network: Optional[NetworkCfg] = None
    problem: ProblemCfg
    gain: GainCfg
    sim: SimCfg
    noise: Optional[NoiseCfg] = None
    init: InitCfg
    oracle: OracleCfg = Field(default_factory=OracleCfg)
    settling: SettlingCfg = Field(default_factory=SettlingCfg)
    output: OutputCfg = Field(default_factory=OutputCfg)

    @model_validator(mode="after")
    def _consistent(self):
        n_agents = len(self.problem.agents)
        if n_agents == 0:
            raise ValueError("problem needs at least one agent")
        if self.flow is FlowKind.CENTRALIZED:
            if n_agents != 1:
                raise ValueError("centralized flow takes exactly one agent")
        elif self.network is None:
            raise ValueError(f"flow {self.flow.value} needs a network")
        if self.flow is FlowKind.DUAL_DORAP:
            if self.problem.demands is None or len(self.problem.demands) != n_agents:
                raise ValueError("dual_dorap needs one demand vector per agent")
        if len(self.init.primary) != n_agents:
            raise ValueError("init.primary needs one row per agent")
        if self.sim.h > self.sim.t_end:
            raise ValueError("sim.h exceeds sim.t_end")
        return self

    def canonical(self):
        """JSON-compatible canonical form (parse(canonical) == self)."""
        return self.model_dump(mode="json", exclude_none=True)


def parse_spec(data):
    """Validate a mapping (or YAML/JSON text) into an ExperimentSpec."""
    if isinstance(data, (str, bytes)):
        try:
            data = yaml.safe_load(data)
        except yaml.YAMLError as exc:
            raise SpecError(f"unreadable spec: {exc}") from exc
    if not isinstance(data, dict):
        raise SpecError("spec must be a mapping")
    try:
        return ExperimentSpec.model_validate(data)
    except ValidationError as exc:
        raise SpecError(str(exc)) from exc


def load_spec(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise SpecError(f"cannot read spec {path}: {exc}") from exc
    return parse_spec(text)


def dump_spec(spec, fmt="yaml"):
    data = spec.canonical()
    if fmt == "json":
        return json.dumps(data, indent=2)
    return yaml.safe_dump(data, sort_keys=False)


def json_schema():
    return ExperimentSpec.model_json_schema()


@dataclass
class Experiment:
    """Runtime objects built from a validated spec."""

    spec: ExperimentSpec
    flow: FlowKind
    models: list
    profiles: list | None
    net: Network | None
    gain: GainSpec
    simcfg: SimConfig
    init: SolverState


def build(spec, seed=None):
    """
    Construct the runtime objects of a validated spec.

    Raises ``SpecError`` for values the schema accepts but the models reject
    (wrong dimensions, indefinite curvature, ...), ``GraphError`` for bad
    networks.
    """
    flow = FlowKind(spec.flow)
    net = spec.network.build() if spec.network is not None else None
    try:
        models = spec.problem.build_models()
        profiles = spec.problem.build_profiles() if flow is FlowKind.DUAL_DORAP else None
        gain = spec.gain.build()
        noise = NoiseSpec(**spec.noise.model_dump()) if spec.noise is not None else None
        simcfg = SimConfig(spec.sim.h, spec.sim.t_end, spec.sim.record_every,
                           spec.seed if seed is None else seed, noise)
    except ValueError as exc:
        raise SpecError(str(exc)) from exc
    dims = {m.dim for m in models}
    if profiles:
        dims |= {p.dim for p in profiles}
    primary = np.asarray(spec.init.primary, dtype=float)
    if len(dims) != 1 or primary.ndim != 2 or primary.shape[1] not in dims:
        raise SpecError(f"inconsistent dimensions: models/demands {sorted(dims)}, init {primary.shape}")
    if net is not None and flow is not FlowKind.CENTRALIZED and net.n_nodes != len(models):
        raise SpecError(f"network has {net.n_nodes} nodes but the problem has {len(models)} agents")
    init = initial_state(flow, models, primary, profiles)
    return Experiment(spec, flow, models, profiles, net, gain, simcfg, init)
