"""Core graph types: CSR graphs, partitions, modularity, coarsening.

Everything here is plain numpy. Graphs are undirected and simple; the only
place self-loops appear is on super-graphs produced by :func:`coarsen`,
which keep them in a separate per-node array rather than in the adjacency.
All structures are immutable after construction and safe to share across
workers.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse import csgraph


class Graph:
    """Undirected simple graph in compressed sparse (CSR) form.

    Neighbor lists are sorted ascending. ``weights`` is None for unweighted
    graphs (implicit weight 1.0); coarsened graphs carry real weights.
    """

    __slots__ = ("node_count", "edge_count", "indptr", "indices", "weights", "degrees")

    def __init__(self, node_count, indptr, indices, weights=None):
        self.node_count = int(node_count)
        self.indptr = np.asarray(indptr, dtype=np.int64)
        self.indices = np.asarray(indices, dtype=np.int64)
        self.weights = None if weights is None else np.asarray(weights, dtype=np.float64)
        self.degrees = np.diff(self.indptr)
        self.edge_count = int(self.indices.shape[0] // 2)

    @classmethod
    def from_edges(cls, node_count, edges, weights=None):
        """Build from canonical unique edges, shape (m, 2) with i < j per row."""
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if edges.size and (edges.min() < 0 or edges.max() >= node_count):
            raise ValueError("edge endpoint out of range")
        if edges.size and np.any(edges[:, 0] == edges[:, 1]):
            raise ValueError("self-loops are not allowed")
        src = np.concatenate([edges[:, 0], edges[:, 1]])
        dst = np.concatenate([edges[:, 1], edges[:, 0]])
        if weights is not None:
            w = np.asarray(weights, dtype=np.float64)
            w = np.concatenate([w, w])
        order = np.lexsort((dst, src))
        src, dst = src[order], dst[order]
        indptr = np.zeros(node_count + 1, dtype=np.int64)
        np.add.at(indptr, src + 1, 1)
        np.cumsum(indptr, out=indptr)
        return cls(node_count, indptr, dst, None if weights is None else w[order])

    def neighbors(self, i):
        return self.indices[self.indptr[i]:self.indptr[i + 1]]

    def canonical_edges(self):
        """All edges as an (M, 2) array with i < j, sorted lexicographically."""
        rows = np.repeat(np.arange(self.node_count, dtype=np.int64), self.degrees)
        keep = rows < self.indices
        return np.stack([rows[keep], self.indices[keep]], axis=1)

    def strengths(self):
        """Weighted degrees (equal to ``degrees`` for unweighted graphs)."""
        if self.weights is None:
            return self.degrees.astype(np.float64)
        out = np.zeros(self.node_count)
        rows = np.repeat(np.arange(self.node_count, dtype=np.int64), self.degrees)
        np.add.at(out, rows, self.weights)
        return out

    def total_weight(self):
        """Sum of edge weights (M for unweighted graphs)."""
        if self.weights is None:
            return float(self.edge_count)
        return float(self.weights.sum()) / 2.0

    def adjacency(self):
        """scipy CSR view of the adjacency matrix."""
        data = np.ones(self.indices.shape[0]) if self.weights is None else self.weights
        return sp.csr_matrix((data, self.indices, self.indptr),
                             shape=(self.node_count, self.node_count))


class Partition:
    """Node -> community assignment with dense labels in [0, K)."""

    __slots__ = ("labels", "community_count")

    def __init__(self, labels, densify=False):
        labels = np.asarray(labels, dtype=np.int64)
        if labels.ndim != 1:
            raise ValueError("labels must be one-dimensional")
        if densify:
            _, labels = np.unique(labels, return_inverse=True)
        self.labels = labels
        k = int(labels.max()) + 1 if labels.size else 0
        if labels.size and (labels.min() < 0 or len(np.unique(labels)) != k):
            raise ValueError("labels must be dense in [0, K)")
        self.community_count = k

    def __len__(self):
        return self.labels.shape[0]

    def members(self):
        """List of node-index arrays, one per community."""
        order = np.argsort(self.labels, kind="stable")
        bounds = np.searchsorted(self.labels[order], np.arange(self.community_count + 1))
        return [order[bounds[r]:bounds[r + 1]] for r in range(self.community_count)]

    @staticmethod
    def singletons(n):
        return Partition(np.arange(n, dtype=np.int64))


@dataclass(frozen=True)
class SuperGraph:
    """Community-level graph: one node per community of the inducing partition.

    ``self_loops[r]`` is twice the internal edge weight of community r, so
    that weighted-degree bookkeeping matches the uncoarsened graph and a
    super-partition has the same modularity as its lifted counterpart.
    """

    graph: Graph
    self_loops: np.ndarray
    node_map: np.ndarray = field(repr=False)

    @property
    def node_count(self):
        return self.graph.node_count


@dataclass
class EdgeListResult:
    """Outcome of :func:`load_edge_list`: graph plus the id remap and drop counts."""

    graph: Graph
    original_ids: np.ndarray  # dense id -> original id, sorted ascending
    self_loops_dropped: int
    duplicates_dropped: int


def load_edge_list(source):
    """Parse a whitespace-separated edge list into a :class:`Graph`.

    ``source`` may be a path, an open text stream, or bytes. Lines starting
    with '#' are comments; blank lines are skipped. Node ids are arbitrary
    non-negative integers and get remapped to dense [0, N) in ascending
    order of the original ids. Self-loops and duplicate edges are dropped
    and counted.

    Raises ValueError with a line number on malformed input, and on empty
    input (no edges at all).
    """
    if isinstance(source, (str, bytes)) and not isinstance(source, str):
        source = io.StringIO(source.decode("utf-8"))
    close = False
    if isinstance(source, str):
        source = open(source, "r", encoding="utf-8")
        close = True
    try:
        pairs = []
        for lineno, line in enumerate(source, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) < 2:
                raise ValueError(f"line {lineno}: expected two node ids, got {line!r}")
            try:
                u, v = int(parts[0]), int(parts[1])
            except ValueError:
                raise ValueError(f"line {lineno}: non-integer node id in {line!r}") from None
            if u < 0 or v < 0:
                raise ValueError(f"line {lineno}: negative node id in {line!r}")
            pairs.append((u, v))
    finally:
        if close:
            source.close()
    if not pairs:
        raise ValueError("empty edge list")
    raw = np.asarray(pairs, dtype=np.int64)
    original_ids, dense = np.unique(raw, return_inverse=True)
    dense = dense.reshape(raw.shape)
    self_mask = dense[:, 0] == dense[:, 1]
    self_loops = int(self_mask.sum())
    dense = dense[~self_mask]
    lo = np.minimum(dense[:, 0], dense[:, 1])
    hi = np.maximum(dense[:, 0], dense[:, 1])
    canon = np.stack([lo, hi], axis=1)
    edges = np.unique(canon, axis=0) if canon.size else canon
    duplicates = int(canon.shape[0] - edges.shape[0])
    graph = Graph.from_edges(len(original_ids), edges)
    return EdgeListResult(graph, original_ids, self_loops, duplicates)


def write_partition(path, partition, original_ids=None):
    """Write one 'original_node_id community_id' pair per line, sorted by node id."""
    ids = original_ids if original_ids is not None else np.arange(len(partition))
    np.savetxt(path, np.stack([np.asarray(ids), partition.labels], axis=1), fmt="%d")


def read_partition(path, original_ids=None, allow_extra=False):
    """Read a partition file written by :func:`write_partition`.

    If ``original_ids`` is given, ids in the file are mapped back to dense
    node indices through it; otherwise ids must already be dense. With
    ``allow_extra``, rows for unknown ids are silently restricted away
    (useful when a ground-truth file covers isolated nodes an edge-list
    file could not carry); otherwise unknown ids are an error.
    """
    nodes, labels = [], []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ValueError(f"line {lineno}: expected 'node community'")
            nodes.append(int(parts[0]))
            labels.append(int(parts[1]))
    nodes = np.asarray(nodes, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if original_ids is not None:
        pos = np.minimum(np.searchsorted(original_ids, nodes),
                         len(original_ids) - 1)
        known = original_ids[pos] == nodes
        if not known.all():
            if not allow_extra:
                raise ValueError("partition file references unknown node ids")
            pos, labels = pos[known], labels[known]
        nodes = pos
    if not np.array_equal(np.sort(nodes), np.arange(len(nodes))):
        raise ValueError("partition file must cover each node exactly once")
    out = np.empty(len(nodes), dtype=np.int64)
    out[nodes] = labels
    return Partition(out, densify=True)


def modularity(g, p):
    """Newman modularity of a partition.

    Computed per community as intra-weight / total minus the squared
    degree-mass fraction, which equals the double sum over all ordered node
    pairs (diagonal included) of A_ij - deg(i)deg(j)/(2M), divided by 2M.
    """
    if len(p) != g.node_count:
        raise ValueError("partition does not cover the graph")
    two_m = 2.0 * g.total_weight()
    if two_m <= 0:
        raise ValueError("modularity is undefined for graphs without edges")
    labels = p.labels
    rows = np.repeat(np.arange(g.node_count, dtype=np.int64), g.degrees)
    same = labels[rows] == labels[g.indices]
    if g.weights is None:
        intra = float(same.sum())  # ordered count = 2 * intra edges
    else:
        intra = float(g.weights[same].sum())
    deg_mass = np.bincount(labels, weights=g.strengths(), minlength=p.community_count)
    return intra / two_m - float(((deg_mass / two_m) ** 2).sum())


def reduced_modularity_features(g):
    """Sparse modularity matrix restricted to the edge set.

    Returns a scipy CSR matrix with the graph's sparsity pattern whose
    stored values are A_ij - deg(i)deg(j)/(2M). Requires M >= 1.
    """
    two_m = 2.0 * g.total_weight()
    if two_m <= 0:
        raise ValueError("feature matrix is undefined for graphs without edges")
    d = g.strengths()
    rows = np.repeat(np.arange(g.node_count, dtype=np.int64), g.degrees)
    a = np.ones(g.indices.shape[0]) if g.weights is None else g.weights
    data = a - d[rows] * d[g.indices] / two_m
    return sp.csr_matrix((data, g.indices.copy(), g.indptr.copy()),
                         shape=(g.node_count, g.node_count))


def connected_components(n, edges):
    """Partition of [0, n) into connected components.

    ``edges`` is an (m, 2) array-like; isolated nodes become singleton
    communities. Endpoints outside [0, n) raise ValueError.
    """
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if edges.size and (edges.min() < 0 or edges.max() >= n):
        raise ValueError("edge endpoint out of range")
    data = np.ones(edges.shape[0], dtype=np.int8)
    adj = sp.coo_matrix((data, (edges[:, 0], edges[:, 1])), shape=(n, n))
    _, labels = csgraph.connected_components(adj, directed=False)
    return Partition(labels, densify=True)


def coarsen(g, p, self_loops=None):
    """Merge each community of ``p`` into one super-node.

    Super-edge weights sum the inter-community edge weights; each
    super-node's self-loop is the ordered intra-community weight mass,
    i.e. 2x the internal edge weight. ``self_loops`` carries the input's
    own per-node loops when coarsening an already-coarsened graph.
    """
    if len(p) != g.node_count:
        raise ValueError("partition does not cover the graph")
    k = p.community_count
    labels = p.labels
    rows = np.repeat(np.arange(g.node_count, dtype=np.int64), g.degrees)
    w = np.ones(g.indices.shape[0]) if g.weights is None else g.weights
    cr, cc = labels[rows], labels[g.indices]
    diag = cr == cc
    loops = np.bincount(cr[diag], weights=w[diag], minlength=k)
    if self_loops is not None:
        loops = loops + np.bincount(labels, weights=self_loops, minlength=k)
    keys = cr[~diag] * np.int64(k) + cc[~diag]
    uniq, inv = np.unique(keys, return_inverse=True)
    agg = np.bincount(inv, weights=w[~diag])
    src, dst = uniq // k, uniq % k
    # uniq is sorted, so (src, dst) is already in CSR order
    indptr = np.zeros(k + 1, dtype=np.int64)
    np.add.at(indptr, src + 1, 1)
    np.cumsum(indptr, out=indptr)
    super_graph = Graph(k, indptr, dst, agg)
    return SuperGraph(super_graph, loops, labels.copy())


def lift(sp_partition, node_map):
    """Map a partition of super-nodes back to the original node set."""
    node_map = np.asarray(node_map, dtype=np.int64)
    if len(sp_partition) != int(node_map.max()) + 1:
        raise ValueError("super partition does not cover all super-nodes")
    return Partition(sp_partition.labels[node_map])
