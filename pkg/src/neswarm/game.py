"""Aggregative game: quadratic costs, pseudo-gradients, projections, NE oracles.

Each agent pays ||y_i - r_i||^2 + ||y_i - ybar||^2 where ybar is the mean
decision.  Two gradient conventions are supported: FULL_CHAIN_RULE
differentiates through the 1/N dependence of the mean on y_i (this is the
gradient of the cost the agent actually incurs); PARTIAL_FIXED_AGGREGATE
treats the aggregate as an exogenous signal.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import BoxActive, NoConvergence

DEFAULT_BR_TOL = 1e-10
DEFAULT_BR_MAX_ITERS = 100_000


class GradientConvention(str, enum.Enum):
    FULL_CHAIN_RULE = "full_chain_rule"
    PARTIAL_FIXED_AGGREGATE = "partial_fixed_aggregate"


@dataclass(frozen=True)
class GameSpec:
    """Targets, decision boxes, step size and gradient convention."""

    targets: np.ndarray          # (N, d)
    boxes: np.ndarray            # (N, d, 2) as [lo, hi] per coordinate
    step_size: float
    convention: GradientConvention = GradientConvention.FULL_CHAIN_RULE

    def __post_init__(self):
        targets = np.atleast_2d(np.asarray(self.targets, dtype=float))
        boxes = np.asarray(self.boxes, dtype=float)
        object.__setattr__(self, "targets", targets)
        object.__setattr__(self, "boxes", boxes)
        object.__setattr__(self, "convention", GradientConvention(self.convention))
        n, d = targets.shape
        if boxes.shape != (n, d, 2):
            raise ValueError("boxes must have shape (n_agents, dim, 2)")
        if (boxes[..., 0] > boxes[..., 1]).any():
            raise ValueError("empty box: lo > hi")
        if self.step_size <= 0:
            raise ValueError("step size must be positive")

    @property
    def n_agents(self) -> int:
        return self.targets.shape[0]

    @property
    def dim(self) -> int:
        return self.targets.shape[1]

    def aggregate_weight(self) -> float:
        """Coefficient on (y_i - z) in the pseudo-gradient."""
        if self.convention is GradientConvention.FULL_CHAIN_RULE:
            return 1.0 - 1.0 / self.n_agents
        return 1.0


@dataclass(frozen=True)
class NePoint:
    """A Nash equilibrium candidate with its first-order residual."""

    y_star: np.ndarray           # (N, d)
    aggregate: np.ndarray        # (d,)
    residual: float
    convention: GradientConvention = GradientConvention.FULL_CHAIN_RULE

    def __post_init__(self):
        y = np.atleast_2d(np.asarray(self.y_star, dtype=float))
        object.__setattr__(self, "y_star", y)
        object.__setattr__(self, "aggregate", np.asarray(self.aggregate, dtype=float))
        if np.abs(self.aggregate - y.mean(axis=0)).max() > 1e-12:
            raise ValueError("aggregate must equal the mean decision")


def cost(spec: GameSpec, i: int, y_i: np.ndarray, y_bar: np.ndarray) -> float:
    """||y_i - r_i||^2 + ||y_i - y_bar||^2."""
    r = spec.targets[i]
    y_i = np.asarray(y_i, dtype=float)
    y_bar = np.asarray(y_bar, dtype=float)
    return float(((y_i - r) ** 2).sum() + ((y_i - y_bar) ** 2).sum())


def pseudo_gradient(spec: GameSpec, i: int, y_i: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Agent i's partial gradient with the aggregate estimate z substituted for the mean."""
    r = spec.targets[i]
    y_i = np.asarray(y_i, dtype=float)
    z = np.asarray(z, dtype=float)
    return 2.0 * (y_i - r) + 2.0 * spec.aggregate_weight() * (y_i - z)


def pseudo_gradient_stack(spec: GameSpec, y: np.ndarray, z: np.ndarray) -> np.ndarray:
    """All agents' pseudo-gradients at once; y is (N, d), z is (N, d) or (d,)."""
    return 2.0 * (y - spec.targets) + 2.0 * spec.aggregate_weight() * (y - z)


def project_box(v: np.ndarray, box: np.ndarray) -> np.ndarray:
    """Per-coordinate clamp onto [lo, hi]; idempotent and nonexpansive."""
    box = np.asarray(box, dtype=float)
    lo, hi = box[..., 0], box[..., 1]
    if (lo > hi).any():
        raise ValueError("empty box: lo > hi")
    return np.clip(np.asarray(v, dtype=float), lo, hi)


def project_all(spec: GameSpec, y: np.ndarray) -> np.ndarray:
    return np.clip(y, spec.boxes[..., 0], spec.boxes[..., 1])


def ne_residual(spec: GameSpec, y: np.ndarray) -> float:
    """Max violation of the projected first-order conditions at y."""
    z = y.mean(axis=0)
    grad = pseudo_gradient_stack(spec, y, z)
    return float(np.abs(y - project_all(spec, y - grad)).max())


def closed_form_ne(spec: GameSpec) -> NePoint:
    """Equilibrium of the quadratic game assuming all boxes are inactive.

    Stationarity of every agent plus summing over agents pins the aggregate
    at the mean target, giving y_i* = (r_i + c rbar) / (1 + c) with
    c the aggregate weight of the convention.
    """
    r = spec.targets
    rbar = r.mean(axis=0)
    c = spec.aggregate_weight()
    y_star = (r + c * rbar) / (1.0 + c)
    lo, hi = spec.boxes[..., 0], spec.boxes[..., 1]
    if (y_star < lo).any() or (y_star > hi).any():
        raise BoxActive("closed-form equilibrium leaves a decision box")
    return NePoint(y_star=y_star, aggregate=y_star.mean(axis=0),
                   residual=ne_residual(spec, y_star), convention=spec.convention)


def best_response_fixed_point(spec: GameSpec, tol: float = DEFAULT_BR_TOL,
                              max_iters: int = DEFAULT_BR_MAX_ITERS) -> NePoint:
    """Cyclic exact best responses until the sup-norm sweep change drops below tol.

    Each agent's cost is a separable convex quadratic over a box, so the
    constrained best response is the clamped unconstrained minimizer.  Under
    the partial convention the aggregate is held at its current sweep value
    when an agent replies.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    n = spec.n_agents
    r = spec.targets
    lo, hi = spec.boxes[..., 0], spec.boxes[..., 1]
    y = np.clip(r.copy(), lo, hi)
    full = spec.convention is GradientConvention.FULL_CHAIN_RULE
    c = 1.0 - 1.0 / n
    for _ in range(max_iters):
        change = 0.0
        for i in range(n):
            if full:
                # minimize ||y_i - r_i||^2 + ||c y_i - S/N||^2, S = sum of others
                others = y.sum(axis=0) - y[i]
                best = (r[i] + c * others / n) / (1.0 + c * c)
            else:
                best = (r[i] + y.mean(axis=0)) / 2.0
            best = np.clip(best, lo[i], hi[i])
            change = max(change, float(np.abs(best - y[i]).max()))
            y[i] = best
        if change < tol:
            return NePoint(y_star=y, aggregate=y.mean(axis=0),
                           residual=ne_residual(spec, y), convention=spec.convention)
    raise NoConvergence(f"best response did not settle within {max_iters} sweeps")


def solve_ne(spec: GameSpec) -> NePoint:
    """Closed form when interior, best-response fallback otherwise."""
    try:
        return closed_form_ne(spec)
    except BoxActive:
        return best_response_fixed_point(spec)
