"""Synthetic pre-training data: degree-corrected block-model graphs.

Each graph comes with community ground truth. Generator parameters are
sampled per graph from configurable uniform ranges; degree bounds follow
from the sampled (N, K). Generation of graph t uses a generator seeded by
(master seed, t), so serial and parallel corpus builds agree bit for bit.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, asdict

import numpy as np

from .graph import Graph, Partition, write_partition


@dataclass(frozen=True)
class GenConfig:
    """Sampling ranges for one corpus. Integer ranges are inclusive."""

    n_range: tuple = (2000, 5000)
    k_range: tuple = (2, 1000)
    gamma_range: tuple = (2.0, 3.5)
    mu_range: tuple = (2.5, 5.0)
    rho_range: tuple = (1.0, 3.0)
    graph_count: int = 1000
    deg_min_cap: int = 5
    deg_max_cap: int = 500

    def validate(self):
        for name in ("n_range", "k_range", "gamma_range", "mu_range", "rho_range"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name}: lower bound {lo} exceeds upper bound {hi}")
        if self.n_range[0] < 2 or self.k_range[0] < 1:
            raise ValueError("need at least 2 nodes and 1 community")
        if self.k_range[1] > self.n_range[0]:
            raise ValueError("k_range upper bound must not exceed the smallest N")
        if self.gamma_range[0] <= 0 or self.mu_range[0] <= 0 or self.rho_range[0] <= 0:
            raise ValueError("gamma, mu, rho must be positive")
        if self.graph_count < 1:
            raise ValueError("graph_count must be >= 1")
        return self


@dataclass(frozen=True)
class GenParams:
    """One sampled generator configuration."""

    n: int
    k: int
    deg_min: int
    deg_max: int
    gamma: float
    mu: float
    rho: float

    def validate(self):
        if not (1 <= self.deg_min <= self.deg_max <= self.n):
            raise ValueError("need 1 <= deg_min <= deg_max <= n")
        if self.k > self.n:
            raise ValueError("more communities than nodes")
        if min(self.gamma, self.mu, self.rho) <= 0:
            raise ValueError("gamma, mu, rho must be positive")
        return self


def degree_bounds(n, k, deg_min_cap=5, deg_max_cap=500):
    """Degree-range rules: min{cap, ceil(N/4K)} and min{cap, ceil(N/K)}."""
    lo = min(deg_min_cap, -(-n // (4 * k)))
    hi = min(deg_max_cap, -(-n // k))
    return max(lo, 1), max(hi, 1)


def sample_params(cfg, rng):
    """Draw one GenParams from the configured distributions."""
    cfg.validate()
    n = int(rng.integers(cfg.n_range[0], cfg.n_range[1] + 1))
    k = int(rng.integers(cfg.k_range[0], cfg.k_range[1] + 1))
    gamma = float(rng.uniform(*cfg.gamma_range))
    mu = float(rng.uniform(*cfg.mu_range))
    rho = float(rng.uniform(*cfg.rho_range))
    deg_min, deg_max = degree_bounds(n, k, cfg.deg_min_cap, cfg.deg_max_cap)
    return GenParams(n, k, deg_min, deg_max, gamma, mu, rho).validate()


def _sample_degrees(rng, size, deg_min, deg_max, gamma):
    # truncated power law: P(deg = k) proportional to k^(-gamma) on [deg_min, deg_max]
    ks = np.arange(deg_min, deg_max + 1, dtype=np.float64)
    w = ks ** (-gamma)
    cum = np.cumsum(w / w.sum())
    idx = np.minimum(np.searchsorted(cum, rng.random(size), side="right"), len(ks) - 1)
    return deg_min + idx.astype(np.int64)


@dataclass(frozen=True)
class BlockModel:
    """Degree-corrected block quantities derived from labels and target degrees.

    theta holds per-node degree corrections that sum to one within each
    community; omega[r, t] carries the expected edge mass between blocks,
    with a mu : 1 split between the diagonal and the rest.
    """

    theta: np.ndarray
    omega: np.ndarray
    phi: np.ndarray       # per-community degree sums
    phi_total: float

    def validate(self):
        k = len(self.phi)
        if self.omega.shape != (k, k) or not np.allclose(self.omega, self.omega.T):
            raise ValueError("omega must be a symmetric K x K matrix")
        return self


def build_block_model(labels, degrees, mu):
    """theta, phi and the block interaction matrix for given labels/degrees."""
    k = int(labels.max()) + 1
    phi = np.bincount(labels, weights=degrees, minlength=k)
    phi_total = float(degrees.sum())
    theta = degrees / phi[labels]
    omega = np.outer(phi, phi) / (phi_total * (1.0 + mu))
    np.fill_diagonal(omega, mu / (1.0 + mu) * phi)
    return BlockModel(theta, omega, phi, phi_total)


def generate_dcsbm(params, rng):
    """Sample one graph with ground-truth communities.

    Community size proportions are Dirichlet(10/rho) per community; node
    labels are multinomial over those proportions; target degrees follow a
    truncated power law; an edge between i < j appears when a Poisson draw
    with mean theta_i * theta_j * Omega[c_i, c_j] is at least one. The
    block matrix puts a mu : 1 mass ratio on within- versus
    between-community edges. Communities left empty by the multinomial are
    dropped and labels re-densified.

    Multi-edges are collapsed (equivalently: Bernoulli(1 - exp(-mean))),
    and self-pairs are never sampled. Edge sampling draws per-block-pair
    Poisson totals and then assigns endpoints by the degree-correction
    weights, which has the same distribution as the pairwise loop but runs
    in O(M + K^2).
    """
    params.validate()
    n, k = params.n, params.k
    proportions = rng.dirichlet(np.full(k, 10.0 / params.rho))
    labels = rng.choice(k, size=n, p=proportions)
    _, labels = np.unique(labels, return_inverse=True)
    k = int(labels.max()) + 1

    degs = _sample_degrees(rng, n, params.deg_min, params.deg_max, params.gamma)
    block = build_block_model(labels, degs, params.mu)
    theta, omega = block.theta, block.omega

    order = np.argsort(labels, kind="stable")
    bounds = np.searchsorted(labels[order], np.arange(k + 1))
    members = [order[bounds[r]:bounds[r + 1]] for r in range(k)]
    cum_theta = [np.cumsum(theta[m]) for m in members]

    def draw(r, count):
        u = rng.random(count)
        idx = np.minimum(np.searchsorted(cum_theta[r], u, side="right"),
                         len(members[r]) - 1)
        return members[r][idx]

    # Expected pair-level Poisson mass aggregated per unordered block pair:
    # within a block the unordered pairs carry half of Omega_rr.
    block_means = np.triu(omega)
    np.fill_diagonal(block_means, np.diag(omega) / 2.0)
    counts = rng.poisson(block_means)
    chunks = []
    for r, t in zip(*np.nonzero(counts)):
        c = counts[r, t]
        i, j = draw(r, c), draw(t, c)
        keep = i != j
        lo = np.minimum(i[keep], j[keep])
        hi = np.maximum(i[keep], j[keep])
        chunks.append(np.stack([lo, hi], axis=1))
    if chunks:
        edges = np.unique(np.concatenate(chunks), axis=0)
    else:
        edges = np.empty((0, 2), dtype=np.int64)
    return Graph.from_edges(n, edges), Partition(labels)


def graph_rng(master_seed, graph_index):
    """Independent generator for one graph of a corpus."""
    return np.random.default_rng(np.random.SeedSequence((int(master_seed), int(graph_index))))


def generate_corpus(cfg, master_seed):
    """Yield (index, GenParams, Graph, Partition) for every graph of the corpus."""
    cfg.validate()
    for t in range(cfg.graph_count):
        rng = graph_rng(master_seed, t)
        params = sample_params(cfg, rng)
        graph, truth = generate_dcsbm(params, rng)
        yield t, params, graph, truth


def save_corpus(out_dir, cfg, master_seed):
    """Generate and persist a corpus; returns the manifest dict.

    Layout: <dir>/manifest.json plus per-graph edge list and ground-truth
    label files in the formats used everywhere else in the package.
    """
    os.makedirs(out_dir, exist_ok=True)
    entries = []
    for t, params, graph, truth in generate_corpus(cfg, master_seed):
        edge_file = f"graph_{t:05d}.edges"
        label_file = f"graph_{t:05d}.labels"
        np.savetxt(os.path.join(out_dir, edge_file), graph.canonical_edges(), fmt="%d")
        write_partition(os.path.join(out_dir, label_file), truth)
        entries.append({
            "id": t,
            "seed": [int(master_seed), t],
            "nodes": graph.node_count,
            "edges": graph.edge_count,
            "communities": truth.community_count,
            "params": asdict(params),
            "edge_file": edge_file,
            "label_file": label_file,
        })
    manifest = {"seed": int(master_seed), "config": asdict(cfg), "graphs": entries}
    with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
    return manifest


def load_corpus(corpus_dir):
    """Read a saved corpus back as (manifest, [(Graph, Partition), ...])."""
    with open(os.path.join(corpus_dir, "manifest.json"), "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    items = []
    for entry in manifest["graphs"]:
        n = entry["nodes"]
        path = os.path.join(corpus_dir, entry["edge_file"])
        rows = np.loadtxt(path, dtype=np.int64, ndmin=2) if os.path.getsize(path) else np.empty((0, 2), np.int64)
        graph = Graph.from_edges(n, rows)
        labels = np.loadtxt(os.path.join(corpus_dir, entry["label_file"]), dtype=np.int64, ndmin=2)
        lab = np.empty(n, dtype=np.int64)
        lab[labels[:, 0]] = labels[:, 1]
        items.append((graph, Partition(lab)))
    return manifest, items


def corpus_stats(manifest):
    """Aggregate statistics of a corpus manifest (counts, K, density)."""
    ns = np.array([e["nodes"] for e in manifest["graphs"]], dtype=float)
    ms = np.array([e["edges"] for e in manifest["graphs"]], dtype=float)
    ks = np.array([e["communities"] for e in manifest["graphs"]], dtype=float)
    dens = 2.0 * ms / np.maximum(ns * (ns - 1.0), 1.0)
    return {
        "graphs": len(ns),
        "avg_nodes": float(ns.mean()),
        "min_nodes": int(ns.min()),
        "max_nodes": int(ns.max()),
        "avg_edges": float(ms.mean()),
        "min_edges": int(ms.min()),
        "max_edges": int(ms.max()),
        "avg_communities": float(ks.mean()),
        "min_communities": int(ks.min()),
        "max_communities": int(ks.max()),
        "avg_density": float(dens.mean()),
        "min_density": float(dens.min()),
        "max_density": float(dens.max()),
    }
