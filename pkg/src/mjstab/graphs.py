"""Undirected graphs, Laplacians and enumeration of packet-loss subgraphs.

Vertices are numbered 1..n.  Every edge carries a position in a fixed edge
ordering; the position determines which bit of the mode index the edge
controls, so all mode-indexed quantities in the package agree on the same
binary encoding: mode j (1-based) has the edge at position k transmitting
exactly when bit (m - k) of j - 1 is set.
"""

from __future__ import annotations

from collections.abc import Mapping, Sequence
from dataclasses import dataclass

import numpy as np

from .errors import DisconnectedGraph, ModeCapExceeded

MODE_CAP = 16

# Relative zero threshold for Laplacian eigenvalues.
_ZERO_EIG_REL = 1e-9


@dataclass(frozen=True)
class Graph:
    """Undirected graph with an explicit edge ordering.

    ``edges[k]`` is the edge with position k + 1 in the ordering (positions
    are 1-based to match mode arithmetic).  Use :meth:`from_edges` instead of
    the raw constructor so invariants are checked.
    """

    n: int
    edges: tuple[tuple[int, int], ...]

    @classmethod
    def from_edges(
        cls,
        n: int,
        edges: Sequence[Sequence[int]],
        edge_order: Sequence[Sequence[int]] | None = None,
    ) -> "Graph":
        """Build a graph from 1-based edge pairs.

        The default edge ordering is lexicographic by (min, max) vertex;
        pass ``edge_order`` (a permutation of the edge list) to override.
        """
        if n < 2:
            raise ValueError(f"need at least 2 vertices, got n={n}")
        canon = []
        for pair in edges:
            i, j = int(pair[0]), int(pair[1])
            if i == j:
                raise ValueError(f"self-loop on vertex {i}")
            if not (1 <= i <= n and 1 <= j <= n):
                raise ValueError(f"edge ({i},{j}) outside vertex range 1..{n}")
            canon.append((min(i, j), max(i, j)))
        if len(set(canon)) != len(canon):
            raise ValueError("duplicate edges")
        if edge_order is None:
            ordered = tuple(sorted(canon))
        else:
            ordered = tuple(
                (min(int(p[0]), int(p[1])), max(int(p[0]), int(p[1])))
                for p in edge_order
            )
            if sorted(ordered) != sorted(canon):
                raise ValueError("edge_order is not a permutation of the edge set")
        return cls(n=n, edges=ordered)

    @property
    def m(self) -> int:
        return len(self.edges)

    @property
    def edge_position(self) -> dict[tuple[int, int], int]:
        """Map from canonical edge pair to its 1-based position."""
        return {e: k + 1 for k, e in enumerate(self.edges)}

    def neighbors(self, i: int) -> frozenset[int]:
        out = set()
        for a, b in self.edges:
            if a == i:
                out.add(b)
            elif b == i:
                out.add(a)
        return frozenset(out)


def path_graph(n: int) -> Graph:
    return Graph.from_edges(n, [(i, i + 1) for i in range(1, n)])


def cycle_graph(n: int) -> Graph:
    if n < 3:
        raise ValueError("cycle needs n >= 3")
    return Graph.from_edges(n, [(i, i + 1) for i in range(1, n)] + [(1, n)])


def complete_graph(n: int) -> Graph:
    return Graph.from_edges(
        n, [(i, j) for i in range(1, n + 1) for j in range(i + 1, n + 1)]
    )


def laplacian(g: Graph) -> np.ndarray:
    """Integer Laplacian: degree on the diagonal, -1 on edges."""
    lap = np.zeros((g.n, g.n), dtype=np.int64)
    for i, j in g.edges:
        lap[i - 1, j - 1] = -1
        lap[j - 1, i - 1] = -1
        lap[i - 1, i - 1] += 1
        lap[j - 1, j - 1] += 1
    return lap


@dataclass(frozen=True)
class LaplacianSpectrum:
    """Sorted Laplacian eigenvalues with the connectivity pair extracted.

    ``lambda2`` is the second-smallest eigenvalue floored to 0.0 when it
    falls below the zero threshold, so ``lambda2 > 0`` iff the graph is
    connected.  ``lambdaN`` is the largest eigenvalue.
    """

    eigenvalues: tuple[float, ...]
    lambda2: float
    lambdaN: float


def spectrum(g: Graph, require_connected: bool = False) -> LaplacianSpectrum:
    """Eigenvalues of the symmetric Laplacian, sorted non-decreasing.

    Raises DisconnectedGraph when ``require_connected`` is set and the
    second eigenvalue is below the zero threshold.
    """
    eig = np.linalg.eigvalsh(laplacian(g).astype(float))
    eig.sort()
    lam_n = float(eig[-1])
    threshold = _ZERO_EIG_REL * max(1.0, lam_n)
    lam2 = float(eig[1]) if abs(eig[1]) > threshold else 0.0
    if require_connected and lam2 <= 0.0:
        raise DisconnectedGraph(f"graph with n={g.n}, m={g.m} is not connected")
    return LaplacianSpectrum(
        eigenvalues=tuple(float(v) for v in eig), lambda2=lam2, lambdaN=lam_n
    )


def _normalize_bits(theta, g: Graph) -> tuple[int, ...]:
    """Accept a mapping edge->bit or a sequence in edge-position order."""
    if isinstance(theta, Mapping):
        keys = {
            (min(int(a), int(b)), max(int(a), int(b))): v for (a, b), v in theta.items()
        }
        expected = set(g.edges)
        if set(keys) != expected:
            missing = expected - set(keys)
            extra = set(keys) - expected
            raise ValueError(f"edge assignment mismatch: missing={missing}, extra={extra}")
        bits = tuple(int(keys[e]) for e in g.edges)
    else:
        bits = tuple(int(v) for v in theta)
        if len(bits) != g.m:
            raise ValueError(f"expected {g.m} bits, got {len(bits)}")
    if any(b not in (0, 1) for b in bits):
        raise ValueError("edge bits must be 0 or 1")
    return bits


def mode_index(theta, g: Graph) -> int:
    """Combine per-edge transmit bits into a single mode index in 1..2^m.

    The edge at position k contributes 2^(m - k) when it transmits, so the
    first edge in the ordering is the most significant bit.
    """
    bits = _normalize_bits(theta, g)
    return 1 + sum(b << (g.m - k) for k, b in enumerate(bits, start=1))


def mode_bits(j: int, m: int) -> tuple[int, ...]:
    """Per-edge transmit bits of mode j (1-based), most significant first."""
    if not 1 <= j <= 1 << m:
        raise ValueError(f"mode index {j} outside 1..{1 << m}")
    return tuple((j - 1) >> (m - k) & 1 for k in range(1, m + 1))


def enumerate_loss_modes(g: Graph, cap: int = MODE_CAP) -> list[Graph]:
    """All 2^m subgraphs induced by packet loss, in mode-index order.

    Element j - 1 of the result (0-based) is the subgraph of mode j: it
    keeps exactly the edges whose transmit bit is set in the mode encoding.
    Mode 1 is edgeless, mode 2^m is the nominal graph.
    """
    if g.m > cap:
        raise ModeCapExceeded(f"m={g.m} exceeds cap {cap}")
    out = []
    for j in range(1, (1 << g.m) + 1):
        bits = mode_bits(j, g.m)
        kept = [e for e, b in zip(g.edges, bits) if b]
        out.append(Graph(n=g.n, edges=tuple(kept)))
    return out


def disagreement_basis(n: int) -> np.ndarray:
    """Orthonormal basis of the complement of the all-ones direction.

    Returns U of shape (n, n-1) with U^T U = I and U^T 1 = 0, built from a
    Householder reflection so the result is deterministic.
    """
    v = np.full(n, 1.0 / np.sqrt(n))
    w = v.copy()
    w[0] -= 1.0
    h = np.eye(n) - 2.0 * np.outer(w, w) / (w @ w)
    return h[:, 1:]
