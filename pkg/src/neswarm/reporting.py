"""Result persistence: trajectory CSV, run summary JSON, SVG figures."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .engine import TrajectoryLog  # noqa: E402
from .game import NePoint  # noqa: E402

PLOT_KINDS = ("trajectories", "estimates", "per_agent_convergence", "error_sum")

_AXIS_NAMES = ("x", "y", "z")


def _axis_labels(d: int) -> list[str]:
    return [_AXIS_NAMES[i] if i < len(_AXIS_NAMES) else f"a{i}" for i in range(d)]


def _fmt(value: float) -> str:
    # repr of a Python float is the shortest round-trip decimal
    return repr(float(value))


def write_csv(log: TrajectoryLog, destination) -> None:
    """One row per (step, agent) plus one GLOBAL row per step.

    Columns: k, agent_id, xi_*, y_*, vhat_*, cost, ne_err, track_err.
    GLOBAL rows carry k, "GLOBAL", V, consensus_err.
    """
    if not log.rows:
        raise ValueError("empty trajectory log")
    d = log.rows[0].xi.shape[1]
    axes = _axis_labels(d)
    header = (["k", "agent_id"]
              + [f"xi_{a}" for a in axes] + [f"y_{a}" for a in axes]
              + [f"vhat_{a}" for a in axes] + ["cost", "ne_err", "track_err"])
    with open(destination, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in log.rows:
            ne_err = np.abs(row.xi - log.ne.y_star).max(axis=1)
            for i in range(row.xi.shape[0]):
                writer.writerow(
                    [row.step, i]
                    + [_fmt(v) for v in row.xi[i]]
                    + [_fmt(v) for v in row.y[i]]
                    + [_fmt(v) for v in row.v_hat[i]]
                    + [_fmt(row.cost[i]), _fmt(ne_err[i]), _fmt(row.track_err[i])]
                )
            writer.writerow([row.step, "GLOBAL", _fmt(row.lyapunov),
                             _fmt(row.consensus_err)])


def write_summary(log: TrajectoryLog, oracle: NePoint | None = None,
                  destination=None) -> dict:
    """Final-state metrics against the oracle equilibrium, as a JSON document."""
    oracle = oracle if oracle is not None else log.ne
    if oracle.convention.value != log.convention:
        raise ValueError(
            f"oracle convention {oracle.convention.value!r} does not match "
            f"run convention {log.convention!r}")
    final = log.final
    per_agent = np.abs(final.xi - oracle.y_star).max(axis=1)
    summary = {
        "name": log.name,
        "convention": log.convention,
        "seed": log.seed,
        "iterations": log.iterations,
        "converged": log.converged,
        "wall_clock_seconds": log.wall_clock,
        "final_ne_error": float(per_agent.max()),
        "ne_error_per_agent": per_agent.tolist(),
        "summed_ne_error": final.ne_sum,
        "final_lyapunov": final.lyapunov,
        "final_consensus_error": final.consensus_err,
        "final_tracking_error": float(final.track_err.max()),
    }
    if destination is not None:
        with open(destination, "w") as fh:
            json.dump(summary, fh, indent=2)
    return summary


@dataclass
class PlotData:
    """Stacked telemetry series: steps (T,), the rest (T, N, d)."""

    steps: np.ndarray
    xi: np.ndarray
    y: np.ndarray
    v_hat: np.ndarray

    @classmethod
    def from_log(cls, log: TrajectoryLog) -> "PlotData":
        return cls(steps=np.array([r.step for r in log.rows]),
                   xi=np.stack([r.xi for r in log.rows]),
                   y=np.stack([r.y for r in log.rows]),
                   v_hat=np.stack([r.v_hat for r in log.rows]))

    @classmethod
    def from_csv(cls, path) -> "PlotData":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            d = sum(1 for h in header if h.startswith("xi_"))
            per_step: dict[int, dict[int, list[float]]] = {}
            for rec in reader:
                if rec[1] == "GLOBAL":
                    continue
                per_step.setdefault(int(rec[0]), {})[int(rec[1])] = [
                    float(v) for v in rec[2:2 + 3 * d]]
        steps = sorted(per_step)
        n = len(per_step[steps[0]])
        data = np.array([[per_step[k][i] for i in range(n)] for k in steps])
        return cls(steps=np.array(steps), xi=data[..., :d], y=data[..., d:2 * d],
                   v_hat=data[..., 2 * d:3 * d])


def build_figure(data: PlotData, kind: str, ne: NePoint | None = None,
                 agents: list[int] | None = None):
    """Assemble one of the four standard figures as a matplotlib Figure."""
    if kind not in PLOT_KINDS:
        raise ValueError(f"unknown plot kind {kind!r} (choose from {PLOT_KINDS})")
    n = data.xi.shape[1]
    d = data.xi.shape[2]
    if agents is None:
        agents = list(range(n))
    if not agents:
        raise ValueError("empty agent selection")
    axes_lbl = _axis_labels(d)

    fig, ax = plt.subplots(figsize=(6, 4.5))
    if kind == "trajectories":
        for i in agents:
            if d >= 2:
                ax.plot(data.y[:, i, 0], data.y[:, i, 1], lw=1)
                ax.plot(data.y[0, i, 0], data.y[0, i, 1], "k^", ms=5)
                ax.plot(data.y[-1, i, 0], data.y[-1, i, 1], "r*", ms=7)
            else:
                ax.plot(data.steps, data.y[:, i, 0], lw=1)
        ax.set_xlabel(axes_lbl[0])
        ax.set_ylabel(axes_lbl[1] if d >= 2 else "output")
        ax.set_title("output trajectories")
    elif kind == "estimates":
        xibar = data.xi.mean(axis=1)                # (T, d)
        for i in agents:
            for a in range(d):
                ax.plot(data.steps, data.v_hat[:, i, a], lw=0.8, alpha=0.7)
        for a in range(d):
            ax.plot(data.steps, xibar[:, a], lw=2.0,
                    label=f"mean reference {axes_lbl[a]}")
        ax.legend(loc="best", fontsize=8)
        ax.set_xlabel("iteration")
        ax.set_ylabel("aggregate estimate")
        ax.set_title("aggregate estimates vs true mean")
    elif kind == "per_agent_convergence":
        for i in agents:
            for a in range(d):
                line, = ax.plot(data.steps, data.xi[:, i, a], lw=1)
                if ne is not None:
                    ax.axhline(ne.y_star[i, a], color=line.get_color(),
                               ls="--", lw=0.8)
        ax.set_xlabel("iteration")
        ax.set_ylabel("reference components")
        ax.set_title("per-agent convergence (dashed: equilibrium)")
    else:  # error_sum
        if ne is None:
            raise ValueError("error_sum plot needs the equilibrium oracle")
        series = np.abs(data.y[:, agents, :] - ne.y_star[agents]).sum(axis=(1, 2))
        ax.plot(data.steps, series, lw=1.2)
        ax.set_yscale("log")
        ax.set_xlabel("iteration")
        ax.set_ylabel("summed equilibrium error")
        ax.set_title("summed error vs iteration")
    fig.tight_layout()
    return fig


def emit_plot(data: PlotData, kind: str, destination, ne: NePoint | None = None,
              agents: list[int] | None = None) -> None:
    """Write one figure as a static SVG document."""
    fig = build_figure(data, kind, ne=ne, agents=agents)
    try:
        fig.savefig(destination, format="svg")
    finally:
        plt.close(fig)
