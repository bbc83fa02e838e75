"""Synchronous-round execution of the distributed NE-seeking iteration.

One round, in order: sample the dropout mask, read the consensus estimate
from the previous round's v, update the reference via a projected
pseudo-gradient step, update the tracked consensus state, then apply the
control input built from the pre-update reference and advance every plant.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import DivergenceDetected, InitOutsideBox
from .game import GameSpec, NePoint, project_all, pseudo_gradient_stack, solve_ne
from .graph import CommGraph, DropoutMask, apply_dropout
from .plant import PlantModel, RegulatorGains, synthesize_gains

STOP_CONSECUTIVE = 10


@dataclass
class PlantGroup:
    """Agents sharing one plant, batched for vectorized updates.

    ``x`` has shape (len(indices), n, d): one state column per spatial axis.
    """

    indices: np.ndarray
    plant: PlantModel
    gains: RegulatorGains
    x: np.ndarray

    def outputs(self) -> np.ndarray:
        """y = C x per agent and axis, shape (len(indices), d)."""
        return np.einsum("qn,and->aqd", self.plant.C, self.x)[:, 0, :]

    def advance(self, xi_rows: np.ndarray) -> None:
        """Apply u = -K x + (G + K Psi) xi and step the dynamics."""
        ff = self.gains.feedforward[:, 0]          # (m,), q == 1
        u = (-np.einsum("mn,and->amd", self.gains.K, self.x)
             + ff[None, :, None] * xi_rows[:, None, :])
        self.x = (np.einsum("ij,ajd->aid", self.plant.A, self.x)
                  + np.einsum("im,amd->aid", self.plant.B, u))


@dataclass
class SwarmState:
    """Full iterate of the swarm at the start of round ``step``."""

    step: int
    xi: np.ndarray               # (N, d) references
    v: np.ndarray                # (N, d) consensus states
    groups: list[PlantGroup]
    last_seen: np.ndarray | None = None   # (N, N, d) stale-value buffer, dropout only

    def outputs(self) -> np.ndarray:
        y = np.empty_like(self.xi)
        for grp in self.groups:
            y[grp.indices] = grp.outputs()
        return y


@dataclass(frozen=True)
class TelemetryRow:
    step: int
    y: np.ndarray
    xi: np.ndarray
    v: np.ndarray
    v_hat: np.ndarray
    cost: np.ndarray
    track_err: np.ndarray
    lyapunov: float
    ne_sup: float
    ne_sum: float
    consensus_err: float


@dataclass
class TrajectoryLog:
    rows: list[TelemetryRow]
    final: TelemetryRow
    ne: NePoint
    converged: bool
    iterations: int
    wall_clock: float
    name: str
    seed: int
    convention: str
    stride: int


def lyapunov_value(xi: np.ndarray, ne: NePoint) -> float:
    """Sum over agents of the squared distance between xi_i and y_i*."""
    return float(((xi - ne.y_star) ** 2).sum())


def consensus_error(v_hat: np.ndarray, xi: np.ndarray) -> float:
    """max_i || vhat_i - mean(xi) ||."""
    xibar = xi.mean(axis=0)
    return float(np.sqrt(((v_hat - xibar) ** 2).sum(axis=1)).max())


def consensus_estimate(graph: CommGraph, v: np.ndarray,
                       mask: DropoutMask | None = None,
                       last_seen: np.ndarray | None = None) -> np.ndarray:
    """vhat_i = sum_j a_ij vtilde_j.

    Without a mask this is a plain weighted average of the current v.  With a
    mask, dropped edges deliver the last value received on that edge instead
    (the self term is always live); ``last_seen`` is refreshed on live edges.
    """
    if mask is None or not mask.dropped_edges:
        if last_seen is not None:
            live = graph.adjacency
            last_seen[live] = np.broadcast_to(v[None, :, :], last_seen.shape)[live]
        return graph.weights @ v
    if last_seen is None:
        raise ValueError("stale-value dropout needs a last_seen buffer")
    n = graph.n_agents
    live = graph.adjacency.copy()
    if mask.dropped_edges:
        ii, jj = np.array(sorted(mask.dropped_edges)).T
        live[ii, jj] = False
        live[jj, ii] = False
    last_seen[live] = np.broadcast_to(v[None, :, :], last_seen.shape)[live]
    idx = np.arange(n)
    last_seen[idx, idx] = v
    return np.einsum("ij,ijd->id", graph.weights, last_seen)


def reference_update(spec: GameSpec, xi: np.ndarray, v_hat: np.ndarray) -> np.ndarray:
    """Projected pseudo-gradient step on the references, all agents at once."""
    return project_all(spec, xi - spec.step_size * pseudo_gradient_stack(spec, xi, v_hat))


def tracking_update(v_hat: np.ndarray, xi_next: np.ndarray, xi: np.ndarray) -> np.ndarray:
    """v(k+1) = vhat(k) + xi(k+1) - xi(k)."""
    return v_hat + xi_next - xi


def init_state(scenario, gains_by_agent: list[RegulatorGains]) -> SwarmState:
    """Start the swarm at the scenario's initial positions.

    xi(0) and v(0) are the initial outputs; per-axis states are Psi times the
    axis component so that y(0) equals xi(0) exactly.
    """
    n = scenario.n_agents
    d = scenario.dim
    xi0 = np.stack([a.initial for a in scenario.agents]).astype(float)
    lo = scenario.game.boxes[..., 0]
    hi = scenario.game.boxes[..., 1]
    if (xi0 < lo).any() or (xi0 > hi).any():
        bad = sorted(set(np.nonzero((xi0 < lo) | (xi0 > hi))[0].tolist()))
        raise InitOutsideBox(f"initial position outside decision box for agents {bad}")

    by_sig: dict[bytes, list[int]] = {}
    for i, agent in enumerate(scenario.agents):
        by_sig.setdefault(agent.plant.signature(), []).append(i)
    groups = []
    for sig, idx in by_sig.items():
        plant = scenario.agents[idx[0]].plant
        gains = gains_by_agent[idx[0]]
        psi = gains.Psi[:, 0]                       # (n,), q == 1
        x0 = psi[None, :, None] * xi0[idx][:, None, :]
        groups.append(PlantGroup(indices=np.array(idx), plant=plant, gains=gains, x=x0))

    last_seen = None
    if scenario.run.dropout_fraction > 0:
        last_seen = np.zeros((n, n, d))
        last_seen[:] = xi0[None, :, :]              # everyone has seen v(0)
    return SwarmState(step=0, xi=xi0, v=xi0.copy(), groups=groups, last_seen=last_seen)


def snapshot(state: SwarmState, scenario, ne: NePoint,
             v_hat: np.ndarray | None = None) -> TelemetryRow:
    """Telemetry for the state as it stands, without advancing it."""
    if v_hat is None:
        v_hat = scenario.graph.weights @ state.v
    y = state.outputs()
    ybar = y.mean(axis=0)
    targets = scenario.game.targets
    costs = ((y - targets) ** 2).sum(axis=1) + ((y - ybar) ** 2).sum(axis=1)
    track = np.sqrt(((y - state.xi) ** 2).sum(axis=1))
    return TelemetryRow(
        step=state.step,
        y=y, xi=state.xi.copy(), v=state.v.copy(), v_hat=v_hat,
        cost=costs, track_err=track,
        lyapunov=lyapunov_value(state.xi, ne),
        ne_sup=float(np.abs(state.xi - ne.y_star).max()),
        ne_sum=float(np.abs(y - ne.y_star).sum()),
        consensus_err=consensus_error(v_hat, state.xi),
    )


def step(state: SwarmState, scenario, ne: NePoint,
         collect: bool = True) -> tuple[TelemetryRow | None, float]:
    """Advance the swarm one synchronous round.

    Returns the telemetry row for the pre-update state (when ``collect``)
    and the sup-norm reference change of the round.
    """
    run = scenario.run
    mask = None
    if run.dropout_fraction > 0:
        mask = apply_dropout(scenario.graph, run.dropout_fraction, state.step, run.seed)
    v_hat = consensus_estimate(scenario.graph, state.v, mask, state.last_seen)
    xi_next = reference_update(scenario.game, state.xi, v_hat)
    v_next = tracking_update(v_hat, xi_next, state.xi)
    if not (np.isfinite(xi_next).all() and np.isfinite(v_next).all()):
        raise DivergenceDetected(f"non-finite iterate at step {state.step}")

    row = snapshot(state, scenario, ne, v_hat) if collect else None
    delta = float(np.abs(xi_next - state.xi).max())

    for grp in state.groups:
        grp.advance(state.xi[grp.indices])          # control uses pre-update xi
    state.xi = xi_next
    state.v = v_next
    state.step += 1
    return row, delta


def run(scenario, max_iters: int | None = None, stop_tol: float | None = None,
        stride: int | None = None, ne: NePoint | None = None) -> TrajectoryLog:
    """Iterate until the stop rule fires or the iteration cap is reached.

    Stop rule: sup-norm reference change below ``stop_tol`` for 10
    consecutive rounds.  Deterministic for a fixed scenario and seed.
    """
    cfg = scenario.run
    max_iters = cfg.max_iters if max_iters is None else max_iters
    stop_tol = cfg.stop_tol if stop_tol is None else stop_tol
    stride = cfg.telemetry_stride if stride is None else stride

    gains = scenario.gain_set()
    if ne is None:
        ne = solve_ne(scenario.game)
    state = init_state(scenario, gains)

    rows: list[TelemetryRow] = []
    consecutive = 0
    converged = False
    t0 = time.perf_counter()
    for k in range(max_iters):
        row, delta = step(state, scenario, ne, collect=(k % stride == 0))
        if row is not None:
            rows.append(row)
        if delta < stop_tol:
            consecutive += 1
            if consecutive >= STOP_CONSECUTIVE:
                converged = True
                break
        else:
            consecutive = 0
    wall = time.perf_counter() - t0
    final = snapshot(state, scenario, ne)
    return TrajectoryLog(rows=rows, final=final, ne=ne, converged=converged,
                         iterations=state.step, wall_clock=wall,
                         name=scenario.name, seed=cfg.seed,
                         convention=scenario.game.convention.value, stride=stride)
