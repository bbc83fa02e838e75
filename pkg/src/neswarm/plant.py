"""Heterogeneous linear agent dynamics and tracking-gain synthesis.

Each agent follows x(k+1) = A x(k) + B u(k), y(k) = C x(k).  The control law
u = -K x + (G + K Psi) xi makes y track a reference xi exactly at steady
state, provided (A - I) Psi + B G = 0 and C Psi = I and A - B K is Schur
stable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NotStabilizing, RegulatorRankDeficient, RiccatiDiverged

RANK_RTOL = 1e-10
RESIDUAL_TOL = 1e-9
RICCATI_TOL = 1e-12
RICCATI_MAX_ITERS = 10_000


@dataclass(frozen=True)
class PlantModel:
    """State-space matrices (A, B, C) of one agent."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        B = np.atleast_2d(np.asarray(self.B, dtype=float))
        C = np.atleast_2d(np.asarray(self.C, dtype=float))
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)
        n = A.shape[0]
        if A.shape != (n, n):
            raise ValueError("A must be square")
        if B.shape[0] != n or B.shape[1] < 1:
            raise ValueError("B must be n x m with m >= 1")
        if C.shape[1] != n or C.shape[0] < 1:
            raise ValueError("C must be q x n with q >= 1")

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def q(self) -> int:
        return self.C.shape[0]

    def signature(self) -> bytes:
        """Content hash key for gain caching."""
        return self.A.tobytes() + b"|" + self.B.tobytes() + b"|" + self.C.tobytes()


@dataclass(frozen=True)
class RegulatorGains:
    """Feedback gain K plus steady-state maps Psi (state) and G (input)."""

    K: np.ndarray
    Psi: np.ndarray
    G: np.ndarray

    @property
    def feedforward(self) -> np.ndarray:
        """G + K Psi, the reference-to-input map of the control law."""
        return self.G + self.K @ self.Psi


def spectral_radius(M: np.ndarray) -> float:
    """Largest eigenvalue modulus of a square matrix."""
    return float(np.abs(np.linalg.eigvals(np.atleast_2d(M))).max())


def _numeric_rank(M: np.ndarray) -> int:
    s = np.linalg.svd(M, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int((s > RANK_RTOL * s[0]).sum())


def check_controllability(plant: PlantModel) -> bool:
    """Rank test on [B, AB, ..., A^(n-1) B]."""
    blocks = [plant.B]
    for _ in range(plant.n - 1):
        blocks.append(plant.A @ blocks[-1])
    return _numeric_rank(np.hstack(blocks)) == plant.n


def regulator_block(plant: PlantModel) -> np.ndarray:
    """The (n+q) x (n+m) block matrix [[A - I, B], [C, 0]]."""
    n, m, q = plant.n, plant.m, plant.q
    top = np.hstack([plant.A - np.eye(n), plant.B])
    bottom = np.hstack([plant.C, np.zeros((q, m))])
    return np.vstack([top, bottom])


def check_regulator_rank(plant: PlantModel) -> bool:
    """True iff the regulator block matrix has full row rank n + q."""
    return _numeric_rank(regulator_block(plant)) == plant.n + plant.q


def solve_regulator_equations(plant: PlantModel) -> tuple[np.ndarray, np.ndarray]:
    """Solve (A - I) Psi + B G = 0, C Psi = I for (Psi, G).

    The pair is obtained by vectorising the stacked block system with a
    Kronecker product and taking the minimum-norm least-squares solution,
    which is unique even when the system is underdetermined (m > q).
    """
    if not check_regulator_rank(plant):
        raise RegulatorRankDeficient("rank([[A - I, B], [C, 0]]) < n + q")
    n, m, q = plant.n, plant.m, plant.q
    block = regulator_block(plant)
    rhs = np.vstack([np.zeros((n, q)), np.eye(q)])
    # vec(O T) = (I kron O) vec(T), column-major stacking
    system = np.kron(np.eye(q), block)
    sol, *_ = np.linalg.lstsq(system, rhs.reshape(-1, order="F"), rcond=None)
    T = sol.reshape(n + m, q, order="F")
    Psi, G = T[:n, :], T[n:, :]
    res = max(np.abs((plant.A - np.eye(n)) @ Psi + plant.B @ G).max(),
              np.abs(plant.C @ Psi - np.eye(q)).max())
    if res > RESIDUAL_TOL:
        raise RegulatorRankDeficient(f"regulator residual {res:.3e} exceeds {RESIDUAL_TOL}")
    return Psi, G


def synthesize_stabilizing_gain(plant: PlantModel, state_weight: float = 1.0,
                                input_weight: float = 1.0) -> np.ndarray:
    """Discrete-time LQR gain via fixed-point iteration of the Riccati recursion."""
    if state_weight < 0 or input_weight <= 0:
        raise ValueError("need state_weight >= 0 and input_weight > 0")
    A, B = plant.A, plant.B
    Q = state_weight * np.eye(plant.n)
    R = input_weight * np.eye(plant.m)
    P = Q.copy()
    for _ in range(RICCATI_MAX_ITERS):
        BtP = B.T @ P
        gain = np.linalg.solve(R + BtP @ B, BtP @ A)
        P_next = A.T @ P @ A - A.T @ P @ B @ gain + Q
        if not np.isfinite(P_next).all():
            raise RiccatiDiverged("Riccati recursion produced non-finite values")
        if np.abs(P_next - P).max() < RICCATI_TOL:
            P = P_next
            break
        P = P_next
    else:
        raise RiccatiDiverged(f"no fixed point after {RICCATI_MAX_ITERS} iterations")
    BtP = B.T @ P
    K = np.linalg.solve(R + BtP @ B, BtP @ A)
    if spectral_radius(A - B @ K) >= 1.0:
        raise NotStabilizing("closed loop has spectral radius >= 1")
    return K


def synthesize_gains(plant: PlantModel, state_weight: float = 1.0,
                     input_weight: float = 1.0) -> RegulatorGains:
    """Full gain set for one plant: stabilizing K plus (Psi, G)."""
    K = synthesize_stabilizing_gain(plant, state_weight, input_weight)
    Psi, G = solve_regulator_equations(plant)
    return RegulatorGains(K=K, Psi=Psi, G=G)


def plant_step(plant: PlantModel, x: np.ndarray, u: np.ndarray):
    """One dynamics update; the output is read from the pre-step state."""
    x = np.asarray(x, dtype=float).reshape(plant.n)
    u = np.asarray(u, dtype=float).reshape(plant.m)
    return plant.A @ x + plant.B @ u, plant.C @ x


def control_input(gains: RegulatorGains, x: np.ndarray, xi: np.ndarray) -> np.ndarray:
    """u = -K x + (G + K Psi) xi."""
    x = np.asarray(x, dtype=float).reshape(-1)
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    return -gains.K @ x + gains.feedforward @ xi
