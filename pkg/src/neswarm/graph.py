"""Communication topology: adjacency, doubly stochastic weights, edge dropout."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DisconnectedGraph

WEIGHT_TOL = 1e-12


@dataclass(frozen=True)
class CommGraph:
    """An undirected communication graph with a doubly stochastic weight matrix.

    ``adjacency`` is a symmetric boolean matrix with a false diagonal;
    ``weights[i, j]`` is positive only on edges or the diagonal, and every
    row and column sums to one.
    """

    adjacency: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        adj = np.asarray(self.adjacency, dtype=bool)
        w = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "adjacency", adj)
        object.__setattr__(self, "weights", w)
        n = adj.shape[0]
        if adj.shape != (n, n) or w.shape != (n, n):
            raise ValueError("adjacency and weights must be square and equally sized")
        if adj.diagonal().any() or not np.array_equal(adj, adj.T):
            raise ValueError("adjacency must be symmetric with an all-false diagonal")
        if (w < 0).any():
            raise ValueError("weights must be nonnegative")
        off_support = w.copy()
        np.fill_diagonal(off_support, 0.0)
        if (off_support[~adj] != 0).any():
            raise ValueError("positive weight on a non-edge")
        if np.abs(w.sum(axis=1) - 1).max() > WEIGHT_TOL:
            raise ValueError("row sums of weights must equal 1")
        if np.abs(w.sum(axis=0) - 1).max() > WEIGHT_TOL:
            raise ValueError("column sums of weights must equal 1")

    @property
    def n_agents(self) -> int:
        return self.adjacency.shape[0]

    def edges(self) -> list[tuple[int, int]]:
        """Undirected edges as sorted (i, j) pairs with i < j."""
        ii, jj = np.nonzero(np.triu(self.adjacency, k=1))
        return list(zip(ii.tolist(), jj.tolist()))


@dataclass(frozen=True)
class DropoutMask:
    """The set of edges suppressed (in both directions) for one round."""

    step: int
    dropped_edges: frozenset = field(default_factory=frozenset)
    rng_seed: int = 0

    def drops(self, i: int, j: int) -> bool:
        return (min(i, j), max(i, j)) in self.dropped_edges


def is_strongly_connected(adjacency: np.ndarray) -> bool:
    """True iff every node reaches every other node.

    One breadth-first search each on the graph and its transpose.
    """
    adj = np.asarray(adjacency, dtype=bool)
    n = adj.shape[0]
    if n == 0:
        return False

    def reaches_all(a):
        seen = np.zeros(n, dtype=bool)
        seen[0] = True
        frontier = [0]
        while frontier:
            nxt = a[frontier].any(axis=0) & ~seen
            frontier = np.nonzero(nxt)[0].tolist()
            seen |= nxt
        return seen.all()

    return bool(reaches_all(adj) and reaches_all(adj.T))


def metropolis_weights(adjacency: np.ndarray) -> CommGraph:
    """Build a doubly stochastic weight matrix from a connected adjacency.

    Edge weight 1 / (1 + max(deg_i, deg_j)); self-weight tops the row up to
    one.  Symmetric by construction, hence both row and column stochastic.
    """
    adj = np.asarray(adjacency, dtype=bool)
    if not is_strongly_connected(adj):
        raise DisconnectedGraph("adjacency is not connected")
    deg = adj.sum(axis=1)
    n = adj.shape[0]
    w = np.zeros((n, n))
    pair_deg = np.maximum.outer(deg, deg).astype(float)
    w[adj] = 1.0 / (1.0 + pair_deg[adj])
    np.fill_diagonal(w, 1.0 - w.sum(axis=1))
    return CommGraph(adjacency=adj, weights=w)


def build_ring(n: int, neighbors_per_side: int) -> CommGraph:
    """Circulant ring where node i talks to i +/- 1 .. i +/- neighbors_per_side."""
    if n < 2 or neighbors_per_side < 1:
        raise ValueError("ring needs at least 2 nodes and 1 neighbor per side")
    if n == 2:
        if neighbors_per_side != 1:
            raise ValueError("neighborhood spans the whole ring")
    elif 2 * neighbors_per_side >= n:
        raise ValueError("neighborhood spans the whole ring")
    adj = np.zeros((n, n), dtype=bool)
    idx = np.arange(n)
    for off in range(1, neighbors_per_side + 1):
        adj[idx, (idx + off) % n] = True
        adj[idx, (idx - off) % n] = True
    return metropolis_weights(adj)


def build_complete(n: int) -> CommGraph:
    if n < 2:
        raise ValueError("complete graph needs at least 2 nodes")
    adj = ~np.eye(n, dtype=bool)
    return metropolis_weights(adj)


def apply_dropout(graph: CommGraph, drop_fraction: float, step: int,
                  rng_seed: int) -> DropoutMask:
    """Sample round(drop_fraction * |edges|) distinct edges to silence this round.

    Deterministic for a fixed (rng_seed, step) pair.
    """
    if not 0.0 <= drop_fraction <= 1.0:
        raise ValueError("drop_fraction must lie in [0, 1]")
    edges = graph.edges()
    k = int(round(drop_fraction * len(edges)))
    if k == 0:
        return DropoutMask(step=step, rng_seed=rng_seed)
    rng = np.random.default_rng([rng_seed, step])
    chosen = rng.choice(len(edges), size=k, replace=False)
    dropped = frozenset(edges[c] for c in chosen)
    return DropoutMask(step=step, dropped_edges=dropped, rng_seed=rng_seed)
