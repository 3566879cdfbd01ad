"""Communication graph, augmented-vector layout, and derived linear maps.

Players communicate over a directed graph whose undirected closure must be
connected and self-loop free.  An edge ``(i, j)`` means information flows
from player ``i`` to player ``j``; hence ``i`` is an *in-neighbor* of ``j``
(``j`` depends on ``i``'s decision) and ``j`` is an *out-neighbor* of ``i``.

Every player keeps, next to its own decision, a private estimate of each
in-neighbor's decision.  Stacking all of these gives the augmented vector
``y`` of length ``n_tilde``.  The linear maps built here act on that vector:

* the extended Laplacian ``L_tilde`` of the owner/estimator dependency graph,
  whose kernel is exactly the consensus subspace,
* the selection map ``R`` extracting the stack of own decisions,
* the consensus projector ``C`` averaging each decision over its copies,
* incidence maps for the dependency graph (``B_tilde``) and for the
  communication graph (``B``, and ``B_m = B (x) I_m`` for m-dimensional
  multipliers).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .errors import BadDimension, Disconnected, SelfLoop

_EIG_TOL = 1e-9


@dataclass(frozen=True)
class NetworkTopology:
    """Validated communication graph with per-player decision dimensions."""

    player_count: int
    decision_dims: tuple[int, ...]
    directed_edges: frozenset[tuple[int, int]]
    in_neighbors: tuple[tuple[int, ...], ...]
    out_neighbors: tuple[tuple[int, ...], ...]

    @property
    def n_total(self) -> int:
        """Total decision dimension n = sum of n_i."""
        return sum(self.decision_dims)

    def n_plus(self, i: int) -> int:
        """Stacked dimension of player i's in-neighbor decisions."""
        return sum(self.decision_dims[j] for j in self.in_neighbors[i])

    @property
    def n_tilde(self) -> int:
        """Length of the augmented vector (decisions plus all estimates)."""
        return self.n_total + sum(self.n_plus(i) for i in range(self.player_count))

    @property
    def in_counts(self) -> tuple[int, ...]:
        return tuple(len(s) for s in self.in_neighbors)

    @property
    def out_counts(self) -> tuple[int, ...]:
        return tuple(len(s) for s in self.out_neighbors)

    @property
    def max_out_count(self) -> int:
        return max(self.out_counts)

    @property
    def min_out_count(self) -> int:
        return min(self.out_counts)

    def sorted_edges(self) -> list[tuple[int, int]]:
        """Directed edges in (tail, head) lexicographic order."""
        return sorted(self.directed_edges)


def build_topology(player_count, decision_dims, edges) -> NetworkTopology:
    """Validate and construct a :class:`NetworkTopology`.

    Raises
    ------
    SelfLoop, BadDimension, Disconnected
        If an edge starts and ends at the same player, a decision dimension
        is not a positive integer, or the undirected closure of the edge set
        is not connected.
    """
    if player_count < 1:
        raise BadDimension(-1, player_count)
    decision_dims = tuple(int(d) for d in decision_dims)
    if len(decision_dims) != player_count:
        raise BadDimension(-1, len(decision_dims))
    for i, d in enumerate(decision_dims):
        if d < 1:
            raise BadDimension(i, d)

    edge_set = set()
    for (i, j) in edges:
        i, j = int(i), int(j)
        if i == j:
            raise SelfLoop(i)
        if not (0 <= i < player_count and 0 <= j < player_count):
            raise BadDimension(i if not 0 <= i < player_count else j, None)
        edge_set.add((i, j))

    # Connectivity of the undirected closure (Assumption: the communication
    # link itself is bidirectional even when the dependency is one-way).
    if player_count > 1:
        adj = [[] for _ in range(player_count)]
        for (i, j) in edge_set:
            adj[i].append(j)
            adj[j].append(i)
        seen = {0}
        stack = [0]
        while stack:
            u = stack.pop()
            for v in adj[u]:
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
        if len(seen) != player_count:
            rest = sorted(set(range(player_count)) - seen)
            raise Disconnected([sorted(seen), rest])

    in_nb = tuple(tuple(sorted(i for (i, j) in edge_set if j == p)) for p in range(player_count))
    out_nb = tuple(tuple(sorted(j for (i, j) in edge_set if i == p)) for p in range(player_count))
    return NetworkTopology(player_count, decision_dims, frozenset(edge_set), in_nb, out_nb)


@dataclass(frozen=True)
class AugmentedLayout:
    """Canonical index layout of the augmented vector.

    Per player (ascending): own decision block first, then one estimate
    block per in-neighbor, in-neighbors ascending by index.
    """

    topology: NetworkTopology
    own_slices: tuple[slice, ...]
    estimate_slices: dict = field(hash=False)  # (estimator i, owner j) -> slice
    n_tilde: int = 0

    def own(self, i: int) -> slice:
        return self.own_slices[i]

    def estimate(self, i: int, j: int) -> slice:
        return self.estimate_slices[(i, j)]

    def local_view_indices(self, i: int) -> np.ndarray:
        """Indices of [own decision; in-neighbor estimates] for player i."""
        idx = list(range(self.own_slices[i].start, self.own_slices[i].stop))
        for j in self.topology.in_neighbors[i]:
            s = self.estimate_slices[(i, j)]
            idx.extend(range(s.start, s.stop))
        return np.asarray(idx, dtype=np.intp)

    def dependency_components(self):
        """For each owner j: (own slice, [(estimator i, slice), ...])."""
        out = []
        for j in range(self.topology.player_count):
            copies = [(i, self.estimate_slices[(i, j)])
                      for i in self.topology.out_neighbors[j]]
            out.append((self.own_slices[j], copies))
        return out


def build_layout(topology: NetworkTopology) -> AugmentedLayout:
    own = []
    est = {}
    pos = 0
    for i in range(topology.player_count):
        ni = topology.decision_dims[i]
        own.append(slice(pos, pos + ni))
        pos += ni
        for j in topology.in_neighbors[i]:
            nj = topology.decision_dims[j]
            est[(i, j)] = slice(pos, pos + nj)
            pos += nj
    return AugmentedLayout(topology, tuple(own), est, pos)


@dataclass
class StructuralMaps:
    """Derived linear maps of a topology (see module docstring)."""

    topology: NetworkTopology
    layout: AugmentedLayout
    L_tilde: sparse.csr_matrix
    R: sparse.csr_matrix
    C: np.ndarray
    sigma1: float
    B: np.ndarray          # communication-graph incidence, N x |E|
    B_tilde: sparse.csr_matrix  # dependency-graph incidence, n_tilde x sum(n_i^+)
    edge_order: list       # directed communication edges, column order of B
    dep_edge_order: list   # dependency edges (owner j, estimator i), column blocks of B_tilde
    mu_slices: dict        # (owner j, estimator i) -> slice into the mu vector

    def L_dense(self) -> np.ndarray:
        return self.L_tilde.toarray()

    def B_m(self, m: int) -> np.ndarray:
        """Multiplier-consensus incidence B (x) I_m."""
        return np.kron(self.B, np.eye(m))


def _extended_laplacian(layout: AugmentedLayout) -> sparse.csr_matrix:
    nt = layout.n_tilde
    rows, cols, vals = [], [], []

    def add_block(sl_a, sl_b, sign):
        for a, b in zip(range(sl_a.start, sl_a.stop), range(sl_b.start, sl_b.stop)):
            rows.append(a)
            cols.append(b)
            vals.append(sign)

    for own_sl, copies in layout.dependency_components():
        for (_, est_sl) in copies:
            add_block(own_sl, own_sl, 1.0)
            add_block(est_sl, est_sl, 1.0)
            add_block(own_sl, est_sl, -1.0)
            add_block(est_sl, own_sl, -1.0)
    return sparse.csr_matrix((vals, (rows, cols)), shape=(nt, nt))


def _selection_map(layout: AugmentedLayout) -> sparse.csr_matrix:
    topo = layout.topology
    rows, cols = [], []
    r = 0
    for i in range(topo.player_count):
        sl = layout.own(i)
        for c in range(sl.start, sl.stop):
            rows.append(r)
            cols.append(c)
            r += 1
    n = topo.n_total
    return sparse.csr_matrix((np.ones(len(rows)), (rows, cols)),
                             shape=(n, layout.n_tilde))


def _consensus_projector(layout: AugmentedLayout) -> np.ndarray:
    """Block-averaging projector over each dependency component."""
    nt = layout.n_tilde
    C = np.zeros((nt, nt))
    for own_sl, copies in layout.dependency_components():
        slots = [own_sl] + [sl for (_, sl) in copies]
        w = 1.0 / len(slots)
        for sa in slots:
            for sb in slots:
                C[sa, sb] += w * np.eye(sa.stop - sa.start)
    return C


def build_structural_maps(topology: NetworkTopology,
                          layout: AugmentedLayout | None = None) -> StructuralMaps:
    """Assemble all structural maps and the spectral constant sigma1."""
    if layout is None:
        layout = build_layout(topology)
    L = _extended_laplacian(layout)
    R = _selection_map(layout)
    C = _consensus_projector(layout)

    eigs = np.linalg.eigvalsh(L.toarray())
    positive = eigs[eigs > _EIG_TOL]
    # A graph with no edges has no positive eigenvalues; sigma1 is then moot.
    sigma1 = float(positive.min()) if positive.size else float("inf")

    edge_order = topology.sorted_edges()
    B = np.zeros((topology.player_count, len(edge_order)))
    for col, (tail, head) in enumerate(edge_order):
        B[head, col] = 1.0
        B[tail, col] = -1.0

    # Dependency incidence: one block column per (owner j -> estimator i)
    # edge, +I at the estimate slot, -I at the owner's decision slot.
    dep_edges = []
    for j in range(topology.player_count):
        for i in topology.out_neighbors[j]:
            dep_edges.append((j, i))
    rows, cols, vals = [], [], []
    mu_slices = {}
    pos = 0
    for (j, i) in dep_edges:
        nj = topology.decision_dims[j]
        est_sl = layout.estimate(i, j)
        own_sl = layout.own(j)
        mu_slices[(j, i)] = slice(pos, pos + nj)
        for k in range(nj):
            rows.append(est_sl.start + k)
            cols.append(pos + k)
            vals.append(1.0)
            rows.append(own_sl.start + k)
            cols.append(pos + k)
            vals.append(-1.0)
        pos += nj
    B_tilde = sparse.csr_matrix((vals, (rows, cols)), shape=(layout.n_tilde, pos))

    return StructuralMaps(topology, layout, L, R, C, sigma1, B, B_tilde,
                          edge_order, dep_edges, mu_slices)


def circle_with_chords(player_count: int, chord_count: int, rng) -> set[tuple[int, int]]:
    """Undirected circle over all players plus random distinct chords.

    Every undirected link is materialized as both directed edges, so each
    endpoint estimates the other's decision.
    """
    links = {(i, (i + 1) % player_count) for i in range(player_count)}
    links = {tuple(sorted(e)) for e in links}
    all_pairs = [(i, j) for i in range(player_count) for j in range(i + 1, player_count)
                 if (i, j) not in links]
    if chord_count > len(all_pairs):
        raise ValueError("not enough non-circle pairs for the requested chords")
    picks = rng.choice(len(all_pairs), size=chord_count, replace=False)
    links |= {all_pairs[k] for k in picks}
    edges = set()
    for (i, j) in links:
        edges.add((i, j))
        edges.add((j, i))
    return edges
