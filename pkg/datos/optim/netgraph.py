# optim/netgraph.py
"""
Communication graphs and gossip matrices.

A Graph is an undirected connected topology on agents 0..m-1. A MixingMatrix
wraps the lazy gossip matrix W = (1 - c) I + c W~ and performs the row mixing
W @ X that every solver step relies on.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import networkx as nx
import numpy as np

from app.exceptions import ConfigurationError, GraphError, ParseError
from storage.text import read_lines

logger = logging.getLogger(__name__)

MAX_REDRAWS = 10**6


@dataclass(frozen=True)
class Graph:
    m: int
    edges: frozenset[tuple[int, int]]

    def __post_init__(self):
        if self.m < 1:
            raise GraphError(f"agent count must be positive, got {self.m}")
        normalized = set()
        for i, j in self.edges:
            if i == j:
                raise GraphError(f"self-loop on agent {i}")
            if not (0 <= i < self.m and 0 <= j < self.m):
                raise GraphError(f"edge ({i}, {j}) outside 0..{self.m - 1}")
            normalized.add((min(i, j), max(i, j)))
        object.__setattr__(self, "edges", frozenset(normalized))
        if not nx.is_connected(self.to_networkx()):
            raise GraphError("graph is not connected")

    @classmethod
    def from_edges(cls, m: int, edges: Iterable[tuple[int, int]]) -> "Graph":
        return cls(m=m, edges=frozenset((int(i), int(j)) for i, j in edges))

    def to_networkx(self) -> nx.Graph:
        g = nx.Graph()
        g.add_nodes_from(range(self.m))
        g.add_edges_from(self.edges)
        return g

    def neighbors(self, i: int) -> list[int]:
        """Open neighbourhood of agent i in increasing index order."""
        return sorted({b if a == i else a for a, b in self.edges if i in (a, b)})

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.m, dtype=int)
        for i, j in self.edges:
            deg[i] += 1
            deg[j] += 1
        return deg

    def diameter(self) -> int:
        return 0 if self.m == 1 else nx.diameter(self.to_networkx())


def erdos_renyi(m: int, p: float, seed: int) -> Graph:
    """
    Sample G(m, p) with networkx, redrawing with seed+1 until the draw is connected.
    """
    if m < 2:
        raise ConfigurationError(f"erdos_renyi needs m >= 2, got {m}")
    if not (0.0 < p <= 1.0):
        raise ConfigurationError(f"edge probability must lie in (0, 1], got {p}")

    for attempt in range(MAX_REDRAWS):
        g = nx.gnp_random_graph(m, p, seed=seed + attempt)
        if nx.is_connected(g):
            if attempt:
                logger.debug("[graph] connected draw after %d redraws (seed %d)", attempt, seed + attempt)
            return Graph.from_edges(m, g.edges())
    raise GraphError(f"no connected G({m}, {p}) draw within {MAX_REDRAWS} redraws from seed {seed}")


def path_graph(m: int) -> Graph:
    return Graph.from_edges(m, ((i, i + 1) for i in range(m - 1)))


def complete_graph(m: int) -> Graph:
    return Graph.from_edges(m, ((i, j) for i in range(m) for j in range(i + 1, m)))


def star_graph(m: int) -> Graph:
    return Graph.from_edges(m, ((0, j) for j in range(1, m)))


def closed_neighborhood(g: Graph, i: int) -> set[int]:
    if not 0 <= i < g.m:
        raise IndexError(f"agent index {i} outside 0..{g.m - 1}")
    return {i, *g.neighbors(i)}


def metropolis_weights(g: Graph) -> np.ndarray:
    """
    Metropolis-Hastings weights: 1 / (1 + max(deg i, deg j)) on edges,
    the remaining mass on the diagonal.
    """
    deg = g.degrees()
    base = np.zeros((g.m, g.m))
    for i, j in sorted(g.edges):
        w = 1.0 / (1.0 + max(deg[i], deg[j]))
        base[i, j] = w
        base[j, i] = w
    for i in range(g.m):
        off = 0.0
        for j in range(g.m):
            if j != i:
                off += base[i, j]
        base[i, i] = 1.0 - off
    return base


def _check_base(base: np.ndarray) -> None:
    if base.ndim != 2 or base.shape[0] != base.shape[1]:
        raise ConfigurationError(f"gossip matrix must be square, got shape {base.shape}")
    if np.max(np.abs(base - base.T)) > 1e-14:
        raise ConfigurationError("gossip matrix is not symmetric")
    if np.max(np.abs(base.sum(axis=1) - 1.0)) > 1e-12:
        raise ConfigurationError("gossip matrix rows do not sum to one")
    if np.any(np.diag(base) <= 0.0):
        raise ConfigurationError("gossip matrix needs a positive diagonal")


@dataclass(frozen=True, eq=False)
class MixingMatrix:
    W: np.ndarray
    base: np.ndarray
    c: float
    # neighbour-slot tables: row i mixes X[slots[i, s]] with weight weights[i, s], s ascending
    slots: np.ndarray = field(init=False, repr=False, compare=False)
    weights: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        m = self.W.shape[0]
        support = [np.flatnonzero(self.W[i]) for i in range(m)]
        width = max(len(s) for s in support)
        slots = np.tile(np.arange(m)[:, None], (1, width))
        weights = np.zeros((m, width))
        for i, cols in enumerate(support):
            slots[i, : len(cols)] = cols
            weights[i, : len(cols)] = self.W[i, cols]
        object.__setattr__(self, "slots", slots)
        object.__setattr__(self, "weights", weights)

    @property
    def m(self) -> int:
        return self.W.shape[0]

    def gossip(self, X: np.ndarray) -> np.ndarray:
        """W @ X, summed over neighbour slots in a fixed order."""
        out = self.weights[:, 0, None] * X[self.slots[:, 0]]
        for s in range(1, self.slots.shape[1]):
            out = out + self.weights[:, s, None] * X[self.slots[:, s]]
        return out

    def laplacian(self, X: np.ndarray) -> np.ndarray:
        """(I - W) @ X."""
        return X - self.gossip(X)

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.W)[0])


def mixing_matrix(base: np.ndarray, c: float) -> MixingMatrix:
    if not (0.0 < c < 0.5):
        raise ConfigurationError(f"mixing scalar c must lie in (0, 1/2), got {c}")
    base = np.asarray(base, dtype=float)
    _check_base(base)
    m = base.shape[0]
    W = (1.0 - c) * np.eye(m) + c * base
    mix = MixingMatrix(W=W, base=base, c=c)
    if mix.min_eigenvalue() < 1.0 - 2.0 * c - 1e-10:
        raise ConfigurationError("mixing matrix is not positive definite")
    return mix


def _psd_sqrt(A: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh((A + A.T) / 2.0)
    if vals[0] < -1e-12:
        raise ConfigurationError(f"matrix square root of an indefinite matrix (min eigenvalue {vals[0]:.3e})")
    vals = np.clip(vals, 0.0, None)
    root = (vecs * np.sqrt(vals)) @ vecs.T
    return (root + root.T) / 2.0


def sqrt_operators(mix: MixingMatrix, *, skip_sqrt: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """
    Explicit (L, M) with M^2 = W and L = sqrt(I - M^2), so L^2 = I - W.

    skip_sqrt replaces M by W itself; only the self-test uses it, as a fault.
    """
    M = mix.W.copy() if skip_sqrt else _psd_sqrt(mix.W)
    L = _psd_sqrt(np.eye(mix.m) - M @ M)
    return L, M


def read_graph_file(path: str | Path) -> Graph:
    """Edge-list text: a header 'm <count>' then one 'i j' pair per line."""
    m = None
    edges = []
    for lineno, raw in enumerate(read_lines(path), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        if m is None:
            if len(tokens) != 2 or tokens[0] != "m":
                raise ParseError(lineno, "expected header 'm <count>'")
            try:
                m = int(tokens[1])
            except ValueError:
                raise ParseError(lineno, f"agent count '{tokens[1]}' is not an integer")
            continue
        if len(tokens) != 2:
            raise ParseError(lineno, "expected an 'i j' pair")
        try:
            edges.append((int(tokens[0]), int(tokens[1])))
        except ValueError:
            raise ParseError(lineno, f"non-integer edge '{line}'")
    if m is None:
        raise ParseError(0, "empty graph file")
    return Graph.from_edges(m, edges)


def write_graph_file(g: Graph, path: str | Path) -> None:
    lines = [f"m {g.m}"] + [f"{i} {j}" for i, j in sorted(g.edges)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
