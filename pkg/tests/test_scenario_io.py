import json

import numpy as np
import pytest
from numpy.testing import assert_allclose

from neswarm import engine, reporting
from neswarm import scenario as sio
from neswarm.errors import AssumptionViolated, SchemaError
from neswarm.game import solve_ne

from conftest import parse, scenario_doc

BUNDLED = ("six_robot", "ring200", "ring200_dropout", "integrator_demo")


@pytest.mark.parametrize("name", BUNDLED)
def test_bundled_scenarios_pass_all_validators(name):
    scen = sio.load_bundled(name)
    assert scen.name == name
    assert scen.n_agents >= 1


def test_six_robot_contents(six_robot):
    assert six_robot.n_agents == 6
    assert_allclose(six_robot.agents[0].initial, [6.0, 8.0])
    assert_allclose(six_robot.agents[0].target, [10.0, 6.0])
    assert six_robot.game.step_size == 0.05
    assert six_robot.game.convention.value == "full_chain_rule"
    assert (six_robot.graph.adjacency.sum(axis=1) == 2).all()   # ring, 1 per side


def test_malformed_documents_raise_schema_error():
    with pytest.raises(SchemaError):
        sio.parse_scenario(b"{not json")
    with pytest.raises(SchemaError):
        sio.parse_scenario(json.dumps([1, 2, 3]))
    with pytest.raises(SchemaError):
        parse(scenario_doc(schema=99))
    doc = scenario_doc()
    del doc["agents"]
    with pytest.raises(SchemaError):
        parse(doc)


def test_uncontrollable_plant_named_in_failures():
    doc = scenario_doc()
    doc["agents"][0]["plant"] = {"A": [[1]], "B": [[0]], "C": [[1]]}
    doc["agents"][0].update(initial=[0.0], target=[1.0], box=[[-10, 10]])
    doc["agents"][1].update(
        plant={"A": [[1]], "B": [[1]], "C": [[1]]},
        initial=[0.0], target=[1.0], box=[[-10, 10]])
    with pytest.raises(AssumptionViolated) as err:
        parse(doc)
    assert any("controllability" in f and "agent 0" in f for f in err.value.failures)


def test_initial_outside_box_reported():
    doc = scenario_doc()
    doc["agents"][1]["initial"] = [500.0, 0.0]
    with pytest.raises(AssumptionViolated) as err:
        parse(doc)
    assert any("agent 1" in f and "outside" in f for f in err.value.failures)


def test_all_failures_collected_not_just_first():
    doc = scenario_doc()
    doc["agents"][0]["plant"] = {"A": [[1, 0], [0, 1]], "B": [[1], [0]],
                                 "C": [[1, 0]]}          # uncontrollable
    doc["agents"][1]["initial"] = [500.0, 0.0]           # outside the box
    with pytest.raises(AssumptionViolated) as err:
        parse(doc)
    text = "\n".join(err.value.failures)
    assert "controllability" in text and "outside" in text
    assert len(err.value.failures) >= 2


def test_disconnected_topology_reported():
    doc = scenario_doc(n_agents=4)
    doc["topology"] = {"kind": "edges", "edges": [[0, 1], [2, 3]]}
    with pytest.raises(AssumptionViolated) as err:
        parse(doc)
    assert any("connected" in f for f in err.value.failures)


def test_roundtrip_parse_serialize_parse(six_robot):
    again = sio.parse_scenario(json.dumps(six_robot.to_dict()))
    assert again.name == six_robot.name
    assert again.n_agents == six_robot.n_agents
    assert np.array_equal(again.graph.adjacency, six_robot.graph.adjacency)
    assert_allclose(again.graph.weights, six_robot.graph.weights, atol=1e-15)
    assert_allclose(again.game.targets, six_robot.game.targets)
    assert_allclose(again.game.boxes, six_robot.game.boxes)
    assert again.game.convention == six_robot.game.convention
    assert again.run == six_robot.run
    assert again.control == six_robot.control
    for a, b in zip(again.agents, six_robot.agents):
        assert a.plant.signature() == b.plant.signature()
        assert_allclose(a.initial, b.initial)
        assert_allclose(a.target, b.target)


def test_generator_agents_expand_deterministically():
    scen1 = sio.load_bundled("ring200")
    scen2 = sio.load_bundled("ring200")
    assert scen1.n_agents == 200
    plants = [a.plant.signature() for a in scen1.agents]
    assert plants[0] == plants[3] and plants[1] == plants[4]     # plants cycle
    assert len(set(plants)) == 3
    init1 = np.stack([a.initial for a in scen1.agents])
    init2 = np.stack([a.initial for a in scen2.agents])
    assert np.array_equal(init1, init2)
    assert (init1 >= 1.0).all() and (init1 <= 19.0).all()


def test_overrides_whitelist():
    doc = scenario_doc()
    doc = sio.apply_overrides(doc, {"alpha": "0.01", "max_iters": "42", "seed": "9"})
    assert doc["game"]["step_size"] == 0.01
    assert doc["run"]["max_iters"] == 42
    assert doc["run"]["seed"] == 9
    with pytest.raises(SchemaError):
        sio.apply_overrides(doc, {"weights": "1"})


def test_gain_set_shared_across_identical_plants(six_robot):
    gains = six_robot.gain_set()
    assert gains[0] is gains[1]
    assert gains[2] is gains[3]
    assert gains[0] is not gains[2]


# ---- result persistence -------------------------------------------------


def test_csv_row_count_contract(integrator_demo, tmp_path):
    log = engine.run(integrator_demo, max_iters=2, stop_tol=0.0)
    dest = tmp_path / "t.csv"
    reporting.write_csv(log, dest)
    lines = dest.read_text().strip().split("\n")
    assert len(lines) == 1 + 2 + 2          # header + 2 agent rows + 2 global rows
    assert lines[0].startswith("k,agent_id,xi_x,y_x,vhat_x,cost,ne_err,track_err")
    assert lines[2].split(",")[1] == "GLOBAL"


def test_csv_row_count_with_stride(six_robot, tmp_path):
    log = engine.run(six_robot, max_iters=100, stop_tol=0.0, stride=10)
    dest = tmp_path / "t.csv"
    reporting.write_csv(log, dest)
    lines = dest.read_text().strip().split("\n")
    assert len(lines) == (100 // 10) * (6 + 1) + 1


def test_csv_byte_identical_across_runs(six_robot, tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    reporting.write_csv(engine.run(six_robot), a)
    reporting.write_csv(engine.run(six_robot), b)
    assert a.read_bytes() == b.read_bytes()


def test_csv_global_lyapunov_nonincreasing_tail(six_robot, tmp_path):
    dest = tmp_path / "t.csv"
    reporting.write_csv(engine.run(six_robot), dest)
    v_series = [float(line.split(",")[2]) for line in
                dest.read_text().strip().split("\n")[1:]
                if line.split(",")[1] == "GLOBAL"]
    tail = v_series[-max(1, len(v_series) // 10):]
    assert all(b <= a + 1e-15 for a, b in zip(tail, tail[1:]))


def test_write_summary_fields(integrator_demo, tmp_path):
    log = engine.run(integrator_demo)
    dest = tmp_path / "summary.json"
    summary = reporting.write_summary(log, destination=dest)
    loaded = json.loads(dest.read_text())
    assert loaded == summary
    assert summary["final_ne_error"] <= 1e-6
    assert summary["converged"] is True
    assert summary["iterations"] == log.iterations
    assert summary["wall_clock_seconds"] > 0
    assert len(summary["ne_error_per_agent"]) == 1


def test_write_summary_rejects_convention_mismatch(integrator_demo):
    log = engine.run(integrator_demo)
    from neswarm.game import GameSpec, GradientConvention, closed_form_ne
    other = GameSpec(targets=integrator_demo.game.targets,
                     boxes=integrator_demo.game.boxes, step_size=0.1,
                     convention=GradientConvention.PARTIAL_FIXED_AGGREGATE)
    with pytest.raises(ValueError):
        reporting.write_summary(log, oracle=closed_form_ne(other))


def test_plot_data_csv_roundtrip(six_robot, tmp_path):
    log = engine.run(six_robot, max_iters=50, stop_tol=0.0)
    dest = tmp_path / "t.csv"
    reporting.write_csv(log, dest)
    from_log = reporting.PlotData.from_log(log)
    from_csv = reporting.PlotData.from_csv(dest)
    assert np.array_equal(from_log.steps, from_csv.steps)
    assert_allclose(from_log.xi, from_csv.xi, rtol=0, atol=0)   # exact round-trip
    assert_allclose(from_log.y, from_csv.y, rtol=0, atol=0)
    assert_allclose(from_log.v_hat, from_csv.v_hat, rtol=0, atol=0)


def test_per_agent_convergence_figure_line_counts(six_robot):
    log = engine.run(six_robot, max_iters=50, stop_tol=0.0)
    data = reporting.PlotData.from_log(log)
    fig = reporting.build_figure(data, "per_agent_convergence", ne=log.ne)
    lines = fig.axes[0].get_lines()
    solid = [ln for ln in lines if ln.get_linestyle() == "-"]
    dashed = [ln for ln in lines if ln.get_linestyle() == "--"]
    assert len(solid) == 12 and len(dashed) == 12     # 6 agents x 2 axes
    import matplotlib.pyplot as plt
    plt.close(fig)


def test_error_sum_figure_single_series(six_robot):
    log = engine.run(six_robot, max_iters=50, stop_tol=0.0)
    data = reporting.PlotData.from_log(log)
    fig = reporting.build_figure(data, "error_sum", ne=log.ne)
    assert len(fig.axes[0].get_lines()) == 1
    import matplotlib.pyplot as plt
    plt.close(fig)


def test_figure_errors(six_robot):
    log = engine.run(six_robot, max_iters=20, stop_tol=0.0)
    data = reporting.PlotData.from_log(log)
    with pytest.raises(ValueError):
        reporting.build_figure(data, "histogram")
    with pytest.raises(ValueError):
        reporting.build_figure(data, "trajectories", agents=[])


def test_emit_plot_writes_svg(six_robot, tmp_path):
    log = engine.run(six_robot, max_iters=20, stop_tol=0.0)
    data = reporting.PlotData.from_log(log)
    for kind in reporting.PLOT_KINDS:
        dest = tmp_path / f"{kind}.svg"
        reporting.emit_plot(data, kind, dest, ne=log.ne)
        assert dest.read_bytes().lstrip().startswith(b"<?xml")
