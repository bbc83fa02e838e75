"""Scenario files: a versioned JSON document describing agents, topology, game and run.

Schema (version 1)::

    {
      "schema": 1,
      "name": "six_robot",
      "agents": [ {"plant": {"A": [[...]], "B": [[...]], "C": [[...]]},
                   "initial": [6, 8], "target": [10, 6],
                   "box": [[0, 20], [0, 20]]}, ... ],
      "topology": {"kind": "ring", "neighbors_per_side": 1},
      "game": {"step_size": 0.05, "gradient_convention": "full_chain_rule"},
      "control": {"state_weight": 1.0, "input_weight": 1.0},
      "run": {"max_iters": 5000, "stop_tol": 1e-9, "telemetry_stride": 1,
              "seed": 0, "dropout_fraction": 0.0}
    }

``agents`` may instead be a generator object for large swarms::

    {"count": 200, "plants": [plant, plant, ...],   # cycled over agents
     "box": [[0, 20], [0, 20]],
     "initial": {"random": {"low": [1, 1], "high": [19, 19]}},
     "target":  {"random": {"low": [1, 1], "high": [19, 19]}}}

Random draws are derived from the single run seed, so a scenario file fully
determines the experiment.  ``topology.kind`` is "ring", "complete" or
"edges" (explicit edge list).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from . import graph as graphmod
from .errors import AssumptionViolated, SchemaError
from .game import GameSpec, GradientConvention
from .plant import (PlantModel, RegulatorGains, check_controllability,
                    check_regulator_rank, synthesize_gains)

SCHEMA_VERSION = 1

# Seed-stream tags; dropout uses the bare seed inside the engine.
_AGENT_GEN_STREAM = 11


@dataclass(frozen=True)
class AgentSpec:
    plant: PlantModel
    initial: np.ndarray
    target: np.ndarray
    box: np.ndarray              # (d, 2)


@dataclass(frozen=True)
class RunConfig:
    max_iters: int = 5000
    stop_tol: float = 1e-9
    telemetry_stride: int = 1
    seed: int = 0
    dropout_fraction: float = 0.0


@dataclass(frozen=True)
class ControlConfig:
    state_weight: float = 1.0
    input_weight: float = 1.0


@dataclass
class Scenario:
    name: str
    agents: list[AgentSpec]
    graph: graphmod.CommGraph
    game: GameSpec
    run: RunConfig = field(default_factory=RunConfig)
    control: ControlConfig = field(default_factory=ControlConfig)

    @property
    def n_agents(self) -> int:
        return len(self.agents)

    @property
    def dim(self) -> int:
        return self.agents[0].target.shape[0]

    def gain_set(self) -> list[RegulatorGains]:
        """Per-agent gains, synthesized once per distinct plant."""
        cache: dict[bytes, RegulatorGains] = {}
        out = []
        for agent in self.agents:
            sig = agent.plant.signature()
            if sig not in cache:
                cache[sig] = synthesize_gains(agent.plant,
                                              self.control.state_weight,
                                              self.control.input_weight)
            out.append(cache[sig])
        return out

    def to_dict(self) -> dict:
        """Serialize with the agent list fully expanded."""
        return {
            "schema": SCHEMA_VERSION,
            "name": self.name,
            "agents": [
                {
                    "plant": {"A": a.plant.A.tolist(), "B": a.plant.B.tolist(),
                              "C": a.plant.C.tolist()},
                    "initial": a.initial.tolist(),
                    "target": a.target.tolist(),
                    "box": a.box.tolist(),
                }
                for a in self.agents
            ],
            "topology": self._topology_dict,
            "game": {"step_size": self.game.step_size,
                     "gradient_convention": self.game.convention.value},
            "control": {"state_weight": self.control.state_weight,
                        "input_weight": self.control.input_weight},
            "run": {"max_iters": self.run.max_iters, "stop_tol": self.run.stop_tol,
                    "telemetry_stride": self.run.telemetry_stride,
                    "seed": self.run.seed,
                    "dropout_fraction": self.run.dropout_fraction},
        }

    @property
    def _topology_dict(self) -> dict:
        edges = [[int(i), int(j)] for i, j in self.graph.edges()]
        return {"kind": "edges", "n": self.graph.n_agents, "edges": edges}


def _require(doc: dict, key: str, errors: list, context: str = "scenario"):
    if key not in doc:
        errors.append(f"{context}: missing field '{key}'")
        return None
    return doc[key]


def _build_topology(topo: dict, n_agents: int, errors: list):
    kind = topo.get("kind")
    try:
        if kind == "ring":
            return graphmod.build_ring(n_agents, int(topo.get("neighbors_per_side", 1)))
        if kind == "complete":
            return graphmod.build_complete(n_agents)
        if kind == "edges":
            adj = np.zeros((n_agents, n_agents), dtype=bool)
            for i, j in topo.get("edges", []):
                adj[i, j] = adj[j, i] = True
            return graphmod.metropolis_weights(adj)
    except Exception as exc:  # noqa: BLE001 - collected for the failure report
        errors.append(f"topology: {exc}")
        return None
    errors.append(f"topology: unknown kind {kind!r}")
    return None


def _expand_agents(spec, seed: int, errors: list) -> list[dict]:
    """Return the explicit agent list, drawing generated fields from the seed."""
    if isinstance(spec, list):
        return spec
    if not isinstance(spec, dict):
        errors.append("agents: must be a list or a generator object")
        return []
    count = int(spec.get("count", 0))
    plants = spec.get("plants", [])
    if count < 1 or not plants:
        errors.append("agents: generator needs 'count' >= 1 and a 'plants' list")
        return []
    box = spec.get("box")
    rng = np.random.default_rng([seed, _AGENT_GEN_STREAM])

    def draw(field_spec, label):
        if isinstance(field_spec, dict) and "random" in field_spec:
            lo = np.asarray(field_spec["random"]["low"], dtype=float)
            hi = np.asarray(field_spec["random"]["high"], dtype=float)
            return rng.uniform(lo, hi, size=(count, lo.shape[0]))
        if isinstance(field_spec, list):
            return np.asarray(field_spec, dtype=float)
        errors.append(f"agents: cannot interpret generated field '{label}'")
        return np.zeros((count, 1))

    initials = draw(spec.get("initial"), "initial")
    targets = draw(spec.get("target"), "target")
    return [
        {"plant": plants[i % len(plants)], "initial": initials[i].tolist(),
         "target": targets[i].tolist(), "box": box}
        for i in range(count)
    ]


def parse_scenario(text: str | bytes) -> Scenario:
    """Parse and validate a scenario document.

    Raises SchemaError for malformed documents and AssumptionViolated with
    the complete list of failed model assumptions otherwise.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise SchemaError("scenario document must be a JSON object")
    if doc.get("schema") != SCHEMA_VERSION:
        raise SchemaError(f"unsupported schema version {doc.get('schema')!r}")

    errors: list[str] = []
    name = doc.get("name", "unnamed")
    run_doc = doc.get("run", {})
    run = RunConfig(
        max_iters=int(run_doc.get("max_iters", 5000)),
        stop_tol=float(run_doc.get("stop_tol", 1e-9)),
        telemetry_stride=int(run_doc.get("telemetry_stride", 1)),
        seed=int(run_doc.get("seed", 0)),
        dropout_fraction=float(run_doc.get("dropout_fraction", 0.0)),
    )
    ctrl_doc = doc.get("control", {})
    control = ControlConfig(
        state_weight=float(ctrl_doc.get("state_weight", 1.0)),
        input_weight=float(ctrl_doc.get("input_weight", 1.0)),
    )

    agents_doc = _require(doc, "agents", errors)
    agent_dicts = _expand_agents(agents_doc, run.seed, errors) if agents_doc is not None else []
    if not agent_dicts:
        raise SchemaError("; ".join(errors) or "no agents")

    agents: list[AgentSpec] = []
    for i, a in enumerate(agent_dicts):
        try:
            plant = PlantModel(A=a["plant"]["A"], B=a["plant"]["B"], C=a["plant"]["C"])
            initial = np.asarray(a["initial"], dtype=float)
            target = np.asarray(a["target"], dtype=float)
            box = np.asarray(a["box"], dtype=float)
            if box.shape != (target.shape[0], 2):
                raise ValueError("box must be (dim, 2)")
            if initial.shape != target.shape:
                raise ValueError("initial and target dimensions differ")
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"agent {i}: {exc}") from exc
        agents.append(AgentSpec(plant=plant, initial=initial, target=target, box=box))

    dims = {a.target.shape[0] for a in agents}
    if len(dims) != 1:
        raise SchemaError("all agents must share one decision dimension")

    topo_doc = _require(doc, "topology", errors)
    comm = _build_topology(topo_doc, len(agents), errors) if topo_doc else None

    game_doc = doc.get("game", {})
    try:
        game = GameSpec(
            targets=np.stack([a.target for a in agents]),
            boxes=np.stack([a.box for a in agents]),
            step_size=float(game_doc.get("step_size", 0.05)),
            convention=GradientConvention(game_doc.get("gradient_convention",
                                                       "full_chain_rule")),
        )
    except ValueError as exc:
        raise SchemaError(f"game: {exc}") from exc

    # Model assumption validators; every failure is reported, not just the first.
    if comm is not None:
        if comm.n_agents != len(agents):
            errors.append("topology size does not match the agent count")
        if not graphmod.is_strongly_connected(comm.adjacency):
            errors.append("Assumption 1: communication graph is not connected")
        if np.abs(comm.weights.sum(axis=0) - 1).max() > graphmod.WEIGHT_TOL:
            errors.append("Assumption 1: column sums of the weight matrix differ from 1")
        if np.abs(comm.weights.sum(axis=1) - 1).max() > graphmod.WEIGHT_TOL:
            errors.append("Assumption 1: row sums of the weight matrix differ from 1")
    for i, a in enumerate(agents):
        if a.plant.q != 1:
            errors.append(f"agent {i}: per-axis plants need a single output (q == 1)")
        if not check_controllability(a.plant):
            errors.append(f"Assumption 4: controllability fails for agent {i}")
        elif not check_regulator_rank(a.plant):
            errors.append(f"Assumption 4: rank condition fails for agent {i}")
        if (a.initial < a.box[:, 0]).any() or (a.initial > a.box[:, 1]).any():
            errors.append(f"agent {i}: initial position outside its decision box")
    if not 0.0 <= run.dropout_fraction <= 1.0:
        errors.append("run: dropout_fraction must lie in [0, 1]")
    if run.max_iters < 1 or run.telemetry_stride < 1:
        errors.append("run: max_iters and telemetry_stride must be positive")

    if errors:
        raise AssumptionViolated(errors)
    return Scenario(name=name, agents=agents, graph=comm, game=game,
                    run=run, control=control)


def load_scenario(path) -> Scenario:
    with open(path, "rb") as fh:
        return parse_scenario(fh.read())


def load_bundled(name: str) -> Scenario:
    """Load one of the scenarios shipped with the package (e.g. 'six_robot')."""
    data = resources.files("neswarm.scenarios").joinpath(f"{name}.json").read_bytes()
    return parse_scenario(data)


def apply_overrides(doc: dict, overrides: dict[str, str]) -> dict:
    """Apply whitelisted key=value overrides to a raw scenario document."""
    allowed = {
        "alpha": ("game", "step_size", float),
        "step_size": ("game", "step_size", float),
        "convention": ("game", "gradient_convention", str),
        "max_iters": ("run", "max_iters", int),
        "stop_tol": ("run", "stop_tol", float),
        "seed": ("run", "seed", int),
        "stride": ("run", "telemetry_stride", int),
        "dropout_fraction": ("run", "dropout_fraction", float),
    }
    for key, raw in overrides.items():
        if key not in allowed:
            raise SchemaError(f"unknown override '{key}' (allowed: {sorted(allowed)})")
        section, fieldname, cast = allowed[key]
        doc.setdefault(section, {})[fieldname] = cast(raw)
    return doc
