"""Command-line entry point.

Exit codes are the machine contract: 0 success/converged, 1 validation or
consistency failure, 2 divergence or non-convergence.  Human-readable text
goes to stderr; data products go to files in the output directory.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import engine, reporting, scenario as scenario_io
from .errors import (BoxActive, DivergenceDetected, NeswarmError, ScenarioError,
                     SchemaError)
from .game import best_response_fixed_point, closed_form_ne, solve_ne
from .plant import spectral_radius

log = logging.getLogger("neswarm")

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_DIVERGED = 2

ORACLE_AGREEMENT_FACTOR = 10.0
ORACLE_TOL = 1e-10


def _say(msg: str) -> None:
    print(msg, file=sys.stderr)


def _parse_overrides(pairs: list[str]) -> dict[str, str]:
    out = {}
    for pair in pairs or []:
        if "=" not in pair:
            raise ScenarioError(f"override '{pair}' is not key=value")
        key, _, value = pair.partition("=")
        out[key.strip()] = value.strip()
    return out


def _load(args) -> scenario_io.Scenario:
    try:
        with open(args.scenario, "rb") as fh:
            doc = json.loads(fh.read())
        if not isinstance(doc, dict):
            raise SchemaError("scenario document must be a JSON object")
    except (OSError, json.JSONDecodeError) as exc:
        raise SchemaError(f"cannot read scenario: {exc}") from exc
    doc = scenario_io.apply_overrides(doc, _parse_overrides(args.set))
    return scenario_io.parse_scenario(json.dumps(doc))


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_run(args) -> int:
    try:
        scen = _load(args)
    except ScenarioError as exc:
        _say(f"invalid scenario: {exc}")
        return EXIT_INVALID
    out = _outdir(args)
    stride = args.stride if args.stride else None
    try:
        traj = engine.run(scen, stride=stride)
    except DivergenceDetected as exc:
        _say(f"divergence: {exc}")
        return EXIT_DIVERGED
    reporting.write_csv(traj, out / "trajectory.csv")
    summary = reporting.write_summary(traj, destination=out / "summary.json")
    if not args.no_plots:
        data = reporting.PlotData.from_log(traj)
        for kind in reporting.PLOT_KINDS:
            reporting.emit_plot(data, kind, out / f"{kind}.svg", ne=traj.ne)
    _say(f"{scen.name}: {traj.iterations} iterations, "
         f"converged={traj.converged}, final NE error "
         f"{summary['final_ne_error']:.3e}, wall {traj.wall_clock:.3f}s")
    if not traj.converged:
        _say("did not converge before the iteration cap")
        return EXIT_DIVERGED
    return EXIT_OK


def cmd_validate(args) -> int:
    try:
        scen = _load(args)
    except ScenarioError as exc:
        _say(f"invalid scenario: {exc}")
        return EXIT_INVALID
    _say(f"{scen.name}: {scen.n_agents} agents, all assumption checks pass")
    return EXIT_OK


def cmd_gains(args) -> int:
    try:
        scen = _load(args)
    except ScenarioError as exc:
        _say(f"invalid scenario: {exc}")
        return EXIT_INVALID
    out = _outdir(args)
    blocks = []
    try:
        gains = scen.gain_set()
    except NeswarmError as exc:
        _say(f"gain synthesis failed: {exc}")
        return EXIT_INVALID
    for i, (agent, g) in enumerate(zip(scen.agents, gains)):
        plant = agent.plant
        res_state = np.abs((plant.A - np.eye(plant.n)) @ g.Psi + plant.B @ g.G).max()
        res_out = np.abs(plant.C @ g.Psi - np.eye(plant.q)).max()
        rho = spectral_radius(plant.A - plant.B @ g.K)
        blocks.append({
            "agent": i, "K": g.K.tolist(), "Psi": g.Psi.tolist(), "G": g.G.tolist(),
            "residual_state": float(res_state), "residual_output": float(res_out),
            "closed_loop_spectral_radius": float(rho),
        })
        _say(f"agent {i}: rho(A-BK)={rho:.6f}, residuals "
             f"{res_state:.2e}/{res_out:.2e}\n  K={g.K.tolist()}\n  "
             f"Psi={g.Psi.tolist()}\n  G={g.G.tolist()}")
    with open(out / "gains.json", "w") as fh:
        json.dump(blocks, fh, indent=2)
    return EXIT_OK


def cmd_oracle(args) -> int:
    try:
        scen = _load(args)
    except ScenarioError as exc:
        _say(f"invalid scenario: {exc}")
        return EXIT_INVALID
    out = _outdir(args)
    br = best_response_fixed_point(scen.game, tol=ORACLE_TOL)
    closed = None
    try:
        closed = closed_form_ne(scen.game)
    except BoxActive:
        _say("closed form reports an active box; using the best-response oracle")
    if closed is not None:
        gap = float(np.abs(closed.y_star - br.y_star).max())
        if gap > ORACLE_AGREEMENT_FACTOR * ORACLE_TOL:
            _say(f"oracle disagreement {gap:.3e} exceeds "
                 f"{ORACLE_AGREEMENT_FACTOR * ORACLE_TOL:.1e}")
            return EXIT_INVALID
    point = closed if closed is not None else br
    doc = {
        "convention": point.convention.value,
        "y_star": point.y_star.tolist(),
        "aggregate": point.aggregate.tolist(),
        "residual": point.residual,
        "source": "closed_form" if closed is not None else "best_response",
    }
    with open(out / "oracle.json", "w") as fh:
        json.dump(doc, fh, indent=2)
    for i, y in enumerate(point.y_star):
        _say(f"agent {i}: y* = {y.tolist()}")
    return EXIT_OK


def cmd_sweep_dropout(args) -> int:
    try:
        scen_doc_path = args.scenario
        with open(scen_doc_path, "rb") as fh:
            base_doc = json.loads(fh.read())
        base_doc = scenario_io.apply_overrides(base_doc, _parse_overrides(args.set))
    except (OSError, json.JSONDecodeError, ScenarioError) as exc:
        _say(f"invalid scenario: {exc}")
        return EXIT_INVALID
    fractions = [float(f) for f in args.fractions.split(",")]
    out = _outdir(args)
    rows = []
    for frac in fractions:
        doc = json.loads(json.dumps(base_doc))
        doc.setdefault("run", {})["dropout_fraction"] = frac
        cell_dir = out / f"dropout_{frac:g}"
        cell_dir.mkdir(parents=True, exist_ok=True)
        status = "ok"
        iters_to_threshold = ""
        final_error = ""
        try:
            scen = scenario_io.parse_scenario(json.dumps(doc))
            traj = engine.run(scen)
            series = np.array([r.ne_sum for r in traj.rows])
            steps = np.array([r.step for r in traj.rows])
            hits = np.nonzero(series < args.threshold)[0]
            iters_to_threshold = int(steps[hits[0]]) if hits.size else ""
            final_error = traj.final.ne_sum
            data = reporting.PlotData.from_log(traj)
            reporting.emit_plot(data, "error_sum", cell_dir / "error_sum.svg",
                                ne=traj.ne)
            reporting.write_summary(traj, destination=cell_dir / "summary.json")
        except NeswarmError as exc:
            status = f"failed: {exc}"
            _say(f"fraction {frac}: {status}")
        rows.append((frac, iters_to_threshold, final_error, status))
        _say(f"fraction {frac}: iterations_to_threshold={iters_to_threshold!r}, "
             f"final_error={final_error!r}")
    with open(out / "sweep.csv", "w") as fh:
        fh.write("fraction,iterations_to_threshold,final_error,status\n")
        for frac, it, err, status in rows:
            fh.write(f"{frac},{it},{err},{status}\n")
    return EXIT_OK


def cmd_plot(args) -> int:
    try:
        scen = _load(args)
    except ScenarioError as exc:
        _say(f"invalid scenario: {exc}")
        return EXIT_INVALID
    out = _outdir(args)
    csv_path = out / "trajectory.csv"
    if not csv_path.exists():
        _say(f"no trajectory.csv in {out}; run the scenario first")
        return EXIT_INVALID
    data = reporting.PlotData.from_csv(csv_path)
    ne = solve_ne(scen.game)
    kinds = reporting.PLOT_KINDS if args.kind == "all" else (args.kind,)
    for kind in kinds:
        reporting.emit_plot(data, kind, out / f"{kind}.svg", ne=ne)
        _say(f"wrote {out / (kind + '.svg')}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="neswarm",
        description="Distributed Nash equilibrium seeking for linear agent swarms")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, scenario=True):
        if scenario:
            p.add_argument("scenario", help="scenario JSON file")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--set", action="append", metavar="K=V",
                       help="override a scenario field (repeatable)")

    p_run = sub.add_parser("run", help="simulate a scenario end to end")
    common(p_run)
    p_run.add_argument("--no-plots", action="store_true")
    p_run.add_argument("--stride", type=int, default=0,
                       help="log every N-th telemetry row")
    p_run.set_defaults(func=cmd_run)

    p_val = sub.add_parser("validate", help="check a scenario against all assumptions")
    common(p_val)
    p_val.set_defaults(func=cmd_validate)

    p_gains = sub.add_parser("gains", help="synthesize and print per-agent gains")
    common(p_gains)
    p_gains.set_defaults(func=cmd_gains)

    p_oracle = sub.add_parser("oracle", help="compute the equilibrium oracle")
    common(p_oracle)
    p_oracle.set_defaults(func=cmd_oracle)

    p_sweep = sub.add_parser("sweep-dropout", help="run once per dropout fraction")
    common(p_sweep)
    p_sweep.add_argument("--fractions", default="0,0.5",
                         help="comma-separated dropout fractions")
    p_sweep.add_argument("--threshold", type=float, default=1e-2,
                         help="summed-error threshold for iteration counting")
    p_sweep.set_defaults(func=cmd_sweep_dropout)

    p_plot = sub.add_parser("plot", help="re-plot a recorded trajectory")
    common(p_plot)
    p_plot.add_argument("--kind", default="all",
                        choices=("all",) + reporting.PLOT_KINDS)
    p_plot.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    level = os.environ.get("NES_LOG_LEVEL", "info").upper()
    logging.basicConfig(level=getattr(logging, level, logging.INFO),
                        stream=sys.stderr, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except NeswarmError as exc:
        _say(f"error: {exc}")
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
