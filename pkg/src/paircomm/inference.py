"""Online inference and refinement.

Inference scores the graph's edges plus a sample of random node pairs,
keeps the pairs scored above 0.5 as edges of an auxiliary graph, and reads
communities off its connected components; the number of communities is
whatever falls out. Refinement either seeds label propagation with that
partition or coarsens the graph by it and runs weighted Louvain on the
much smaller super-graph.

Phase timings (feature extraction / forward pass / result derivation /
refinement) are recorded with a monotonic clock.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .graph import (Graph, Partition, SuperGraph, coarsen, connected_components,
                    lift, reduced_modularity_features)
from .model import ProjectionSpec, encode, node_features, score_batch


@dataclass
class PhaseTimings:
    """Seconds per inference phase; refinement stays 0 when skipped."""

    feat_s: float = 0.0
    ffp_s: float = 0.0
    init_s: float = 0.0
    rfn_s: float = 0.0

    def total(self):
        return self.feat_s + self.ffp_s + self.init_s + self.rfn_s


@dataclass(frozen=True)
class RefinerChoice:
    """Which refiner to run after inference, with its knobs.

    kind is one of 'lpa', 'louvain', 'none'.
    """

    kind: str = "louvain"
    seed: int = 0
    max_iter: int = 100       # lpa sweeps
    resolution: float = 1.0   # louvain null-term multiplier
    max_levels: int = 20      # louvain aggregation rounds

    def validate(self):
        if self.kind not in ("lpa", "louvain", "none"):
            raise ValueError(f"unknown refiner {self.kind!r}")
        if self.max_iter < 1 or self.max_levels < 1 or self.resolution <= 0:
            raise ValueError("refiner options out of range")
        return self


def sample_pairs(g, n_samples, rng):
    """Edge set plus up to ``n_samples`` random distinct node pairs.

    Sampled pairs are canonicalized to i < j and deduplicated against the
    edges and each other (duplicates are dropped, not redrawn). Edges come
    first in the result, then the sampled extras in sorted order.
    """
    if n_samples < 0:
        raise ValueError("n_samples must be >= 0")
    n = g.node_count
    if n < 2:
        raise ValueError("need at least two nodes to sample pairs")
    edges = g.canonical_edges()
    if n_samples == 0:
        return edges
    i = rng.integers(0, n, size=n_samples)
    j = rng.integers(0, n - 1, size=n_samples)
    j = j + (j >= i)
    lo, hi = np.minimum(i, j), np.maximum(i, j)
    keys = np.unique(lo * np.int64(n) + hi)
    edge_keys = edges[:, 0] * np.int64(n) + edges[:, 1]
    keys = keys[~np.isin(keys, edge_keys, assume_unique=True)]
    extras = np.stack([keys // n, keys % n], axis=1)
    return np.concatenate([edges, extras], axis=0)


def communities_from_scores(n, pairs, scores):
    """Auxiliary-graph step: keep pairs scored strictly above 0.5, then
    return the connected components of the kept pairs as a partition."""
    kept = np.asarray(pairs)[np.asarray(scores) > 0.5]
    return connected_components(n, kept)


def infer_partition(g, params, n_samples, rng, proj_seed=None):
    """One-pass inductive inference; K is emergent, never an input.

    Returns (partition, timings) where timings cover feature extraction,
    the model forward pass, and result derivation.
    """
    timings = PhaseTimings()
    if proj_seed is None:
        proj_seed = int(rng.integers(0, 2 ** 31 - 1))
    t0 = time.perf_counter()
    qt = None
    if params.config.feature_mode == "modularity":
        qt = reduced_modularity_features(g)
    x = node_features(g, qt, ProjectionSpec(proj_seed, params.config.dim), params)
    timings.feat_s = time.perf_counter() - t0

    t0 = time.perf_counter()
    pairs = sample_pairs(g, n_samples, rng)
    timings.init_s = time.perf_counter() - t0

    t0 = time.perf_counter()
    z = encode(g, x, params)
    scores = score_batch(z, pairs, params)
    timings.ffp_s = time.perf_counter() - t0

    t0 = time.perf_counter()
    partition = communities_from_scores(g.node_count, pairs, scores)
    timings.init_s += time.perf_counter() - t0
    return partition, timings


def lpa(g, init=None, rng=None, max_iter=100):
    """Asynchronous label propagation.

    Starts from ``init`` (or unique labels per node), visits nodes in a
    fresh random order every sweep, and moves each node to the weighted
    majority label among its neighbors. The current label is kept when it
    is among the maximal ones; otherwise ties break uniformly at random.
    Stops after a sweep with no change, or after ``max_iter`` sweeps.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    n = g.node_count
    if init is not None:
        if len(init) != n:
            raise ValueError("initial partition does not cover the graph")
        labels = init.labels.copy()
    else:
        labels = np.arange(n, dtype=np.int64)
    indptr, indices = g.indptr, g.indices
    weights = g.weights
    for _ in range(max_iter):
        changed = 0
        for i in rng.permutation(n):
            lo, hi = indptr[i], indptr[i + 1]
            if lo == hi:
                continue
            nb_labels = labels[indices[lo:hi]]
            if weights is None:
                counts = {}
                for lab in nb_labels:
                    counts[lab] = counts.get(lab, 0) + 1
            else:
                counts = {}
                for lab, w in zip(nb_labels, weights[lo:hi]):
                    counts[lab] = counts.get(lab, 0.0) + w
            best = max(counts.values())
            top = [lab for lab, c in counts.items() if c == best]
            if labels[i] in top:
                continue
            top.sort()
            labels[i] = top[rng.integers(len(top))] if len(top) > 1 else top[0]
            changed += 1
        if changed == 0:
            break
    return Partition(labels, densify=True)


def _as_weighted_arrays(g_or_super):
    if isinstance(g_or_super, SuperGraph):
        g = g_or_super.graph
        loops = g_or_super.self_loops.astype(np.float64)
    else:
        g = g_or_super
        loops = np.zeros(g.node_count)
    w = np.ones(g.indices.shape[0]) if g.weights is None else g.weights
    return g.node_count, g.indptr, g.indices, w, loops


def _louvain_level(n, indptr, indices, weights, loops, resolution, rng,
                   max_sweeps=100):
    """Local moving phase; returns (labels, moved_any)."""
    strength = loops.copy()
    rows = np.repeat(np.arange(n, dtype=np.int64), np.diff(indptr))
    np.add.at(strength, rows, weights)
    mass = float(strength.sum())
    if mass <= 0:
        return np.arange(n, dtype=np.int64), False
    comm = np.arange(n, dtype=np.int64)
    tot = strength.copy()
    moved_any = False
    for _ in range(max_sweeps):
        moves = 0
        for i in rng.permutation(n):
            lo, hi = indptr[i], indptr[i + 1]
            nbrs = indices[lo:hi]
            wts = weights[lo:hi]
            here = comm[i]
            link = {}
            for c, w in zip(comm[nbrs], wts):
                link[c] = link.get(c, 0.0) + w
            tot[here] -= strength[i]
            k_i = strength[i]
            best_c, best_gain = here, link.get(here, 0.0) - resolution * tot[here] * k_i / mass
            for c in sorted(link):
                if c == here:
                    continue
                gain = link[c] - resolution * tot[c] * k_i / mass
                if gain > best_gain + 1e-12:
                    best_c, best_gain = c, gain
            tot[best_c] += strength[i]
            if best_c != here:
                comm[i] = best_c
                moves += 1
        if moves == 0:
            break
        moved_any = True
    return comm, moved_any


def louvain(g_or_super, resolution=1.0, rng=None, max_levels=20):
    """Greedy modularity maximization on a (possibly weighted) graph.

    Two-phase loop: local moving by positive gain, then aggregation into a
    community-level graph, repeated until nothing moves. Super-graph
    self-loop weights are honored, so running this on a coarsened graph is
    equivalent to refining the partition that produced it.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    n, indptr, indices, weights, loops = _as_weighted_arrays(g_or_super)
    assignment = np.arange(n, dtype=np.int64)
    cur = Graph(n, indptr, indices, weights)
    cur_loops = loops
    for _ in range(max_levels):
        labels, moved = _louvain_level(cur.node_count, cur.indptr, cur.indices,
                                       np.ones(cur.indices.shape[0]) if cur.weights is None else cur.weights,
                                       cur_loops, resolution, rng)
        if not moved:
            break
        level = Partition(labels, densify=True)
        assignment = level.labels[assignment]
        if level.community_count == cur.node_count:
            break
        sg = coarsen(cur, level, self_loops=cur_loops)
        cur, cur_loops = sg.graph, sg.self_loops
    return Partition(assignment, densify=True)


def refine(g, initial, choice):
    """Run the chosen refiner from the given starting partition.

    The Louvain path coarsens by the initial partition, optimizes the
    super-graph, and lifts the result back; the LPA path seeds propagation
    with the initial labels. Returns (partition, refinement_seconds).
    """
    choice.validate()
    if len(initial) != g.node_count:
        raise ValueError("initial partition does not cover the graph")
    rng = np.random.default_rng(choice.seed)
    t0 = time.perf_counter()
    if choice.kind == "none":
        return initial, 0.0
    if choice.kind == "lpa":
        out = lpa(g, init=initial, rng=rng, max_iter=choice.max_iter)
    else:
        sg = coarsen(g, initial)
        sp = louvain(sg, resolution=choice.resolution, rng=rng,
                     max_levels=choice.max_levels)
        out = lift(sp, sg.node_map)
    return out, time.perf_counter() - t0


def end_to_end(g, params, n_samples, choice, rng, proj_seed=None):
    """Inference followed by refinement, with the full phase timing vector."""
    partition, timings = infer_partition(g, params, n_samples, rng, proj_seed)
    refined, rfn_s = refine(g, partition, choice)
    timings.rfn_s = rfn_s
    return refined, timings
