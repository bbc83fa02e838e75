"""Exception hierarchy shared across the package."""


class NeswarmError(Exception):
    """Base class for all errors raised by this package."""


class DisconnectedGraph(NeswarmError):
    """The adjacency matrix does not describe a connected graph."""


class RegulatorRankDeficient(NeswarmError):
    """The regulator rank condition fails; the steady-state equations may be unsolvable."""


class RiccatiDiverged(NeswarmError):
    """The Riccati recursion failed to converge (uncontrollable or ill-posed pair)."""


class NotStabilizing(NeswarmError):
    """The synthesized feedback gain does not place the closed loop inside the unit circle."""


class BoxActive(NeswarmError):
    """The closed-form equilibrium leaves a decision box; use the best-response oracle."""


class NoConvergence(NeswarmError):
    """An iterative solver exhausted its iteration budget."""


class DivergenceDetected(NeswarmError):
    """The swarm iteration produced non-finite values or failed to settle (step size too large)."""


class InitOutsideBox(NeswarmError):
    """An agent's initial position lies outside its decision box."""


class ScenarioError(NeswarmError):
    """Base class for scenario file problems."""


class SchemaError(ScenarioError):
    """The scenario document is malformed."""


class AssumptionViolated(ScenarioError):
    """One or more model assumptions fail for the scenario.

    ``failures`` lists every violation found, not just the first.
    """

    def __init__(self, failures):
        self.failures = list(failures)
        super().__init__("; ".join(self.failures))
