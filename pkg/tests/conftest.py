import numpy as np
import pytest

from paircomm.graph import Graph


def random_simple_graph(rng, n, edge_prob=None, m=None):
    """Random simple graph: either G(n, p) or a fixed edge count."""
    if m is not None:
        pairs = set()
        while len(pairs) < m:
            i, j = rng.integers(0, n, size=2)
            if i != j:
                pairs.add((min(i, j), max(i, j)))
        edges = sorted(pairs)
    else:
        iu, ju = np.triu_indices(n, k=1)
        mask = rng.random(iu.shape[0]) < edge_prob
        edges = np.stack([iu[mask], ju[mask]], axis=1)
    return Graph.from_edges(n, np.asarray(list(edges), dtype=np.int64).reshape(-1, 2))


def modularity_bruteforce(g, p):
    """Double loop over all ordered node pairs, diagonal included."""
    a = g.adjacency().toarray()
    d = a.sum(axis=1)
    two_m = d.sum()
    labels = p.labels
    total = 0.0
    for i in range(g.node_count):
        for j in range(g.node_count):
            if labels[i] == labels[j]:
                total += a[i, j] - d[i] * d[j] / two_m
    return total / two_m


class UnionFind:
    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, x):
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[rb] = ra


def components_oracle(n, edges):
    uf = UnionFind(n)
    for i, j in edges:
        uf.union(int(i), int(j))
    roots = [uf.find(i) for i in range(n)]
    return np.unique(roots, return_inverse=True)[1]


def same_partition(labels_a, labels_b):
    """True when two labelings agree up to a permutation of label ids."""
    labels_a = np.asarray(labels_a)
    labels_b = np.asarray(labels_b)
    if labels_a.shape != labels_b.shape:
        return False
    pairing = {}
    reverse = {}
    for a, b in zip(labels_a.tolist(), labels_b.tolist()):
        if pairing.setdefault(a, b) != b or reverse.setdefault(b, a) != a:
            return False
    return True


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
