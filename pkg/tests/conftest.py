import json

import numpy as np
import pytest

from neswarm import scenario as sio


@pytest.fixture
def six_robot():
    return sio.load_bundled("six_robot")


@pytest.fixture
def integrator_demo():
    return sio.load_bundled("integrator_demo")


def scenario_doc(n_agents=2, **overrides):
    """A minimal valid scenario document for small tests."""
    doc = {
        "schema": 1,
        "name": "tiny",
        "agents": [
            {
                "plant": {"A": [[0, 1], [0, 0]], "B": [[0, 1], [1, -2]], "C": [[1, 1]]},
                "initial": [float(i), 1.0],
                "target": [float(i + 1), 2.0],
                "box": [[-10, 10], [-10, 10]],
            }
            for i in range(n_agents)
        ],
        "topology": {"kind": "complete"},
        "game": {"step_size": 0.05, "gradient_convention": "full_chain_rule"},
        "run": {"max_iters": 500, "stop_tol": 1e-9, "telemetry_stride": 1,
                "seed": 0, "dropout_fraction": 0.0},
    }
    doc.update(overrides)
    return doc


def parse(doc):
    return sio.parse_scenario(json.dumps(doc))


@pytest.fixture
def tiny_scenario():
    return parse(scenario_doc())


def rng(seed=0):
    return np.random.default_rng(seed)
