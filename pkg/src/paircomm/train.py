"""Offline training: losses, exact reverse-mode gradients, Adam loop.

The two objectives are a relaxed modularity term over the dense score
matrix and a binary cross entropy against ground-truth co-membership,
combined as L = L_mod + alpha * L_bce. Gradients are hand-derived and
checked against central finite differences in the test suite.

One optimizer step is taken per graph. All randomness (parameter init,
optional epoch shuffling, per-graph projection seeds) derives from the
config seed, so a run is reproducible bit for bit and can be resumed
from a checkpoint without divergence.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .graph import reduced_modularity_features
from .model import (ModelConfig, ModelParams, ProjectionSpec, encode,
                    load_model, node_features, save_model, score_dense)

BCE_CLIP = 1e-7


@dataclass(frozen=True)
class TrainConfig:
    alpha: float = 1.0            # weight of the cross-entropy term
    resolution: float = 1.0       # lambda on the degree null term
    epochs: int = 20
    learning_rate: float = 1e-4
    seed: int = 0
    dense_limit: int = 6000
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    shuffle: bool = False
    checkpoint_every: int = 0
    use_bce: bool = True          # ablation switch: drop BCE from the objective
    use_mod: bool = True          # ablation switch: drop the modularity term

    def validate(self):
        if self.alpha <= 0 or self.resolution <= 0:
            raise ValueError("alpha and resolution must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if not (self.use_bce or self.use_mod):
            raise ValueError("at least one loss term must stay enabled")
        return self


def build_ground_truth(p):
    """Dense binary co-membership matrix: S_ij = 1 iff labels match.

    Symmetric with unit diagonal, and invariant under any relabeling of
    community ids.
    """
    labels = p.labels
    return (labels[:, None] == labels[None, :]).astype(np.float64)


def loss_mod(g, s_hat, resolution):
    """Relaxed modularity objective (negated, so lower is better).

    Gathers scores at the edge positions and subtracts the degree-weighted
    null mass d^T S_hat d, without forming the D S_hat D product.
    """
    m = g.edge_count
    if m < 1:
        raise ValueError("modularity loss undefined without edges")
    edges = g.canonical_edges()
    gathered = float(s_hat[edges[:, 0], edges[:, 1]].sum())
    d = g.degrees.astype(np.float64)
    null = float(d @ (s_hat @ d))
    return -(gathered / m - resolution * null / (4.0 * m * m))


def loss_bce(s_true, s_hat):
    """Binary cross entropy over all N^2 ordered pairs, scores clipped
    to [BCE_CLIP, 1 - BCE_CLIP] before the logs."""
    c = np.clip(s_hat, BCE_CLIP, 1.0 - BCE_CLIP)
    return float(-(s_true * np.log(c) + (1.0 - s_true) * np.log1p(-c)).sum())


def loss_total(g, s_true, s_hat, alpha, resolution):
    return loss_mod(g, s_hat, resolution) + alpha * loss_bce(s_true, s_hat)


def _row_normalize_backward(d_out, out_rows, norms, zero_mask):
    # out = u / |u|; pull d_out back through, dropping the radial component.
    dot = np.einsum("ij,ij->i", d_out, out_rows)
    safe = np.where(zero_mask, 1.0, norms)
    d_in = (d_out - dot[:, None] * out_rows) / safe[:, None]
    if zero_mask.any():
        d_in[zero_mask] = 0.0
    return d_in


def _zero_grads(params):
    return {name: np.zeros_like(params[name]) for name in params.names()}


def _head_backward(d_h, cache, params, head, grads):
    """Backprop one classifier head; returns the gradient w.r.t. its input."""
    n_layers = params.config.classifier_layers
    vs = cache["vs"]
    da = d_h * cache["relu_mask"]
    w, _ = params.layer(head, n_layers - 1)
    grads[f"{head}_w_{n_layers - 1}"] += vs[n_layers - 1].T @ da
    grads[f"{head}_b_{n_layers - 1}"] += da.sum(axis=0)
    dv = da @ w.T
    for s in range(n_layers - 2, -1, -1):
        w, _ = params.layer(head, s)
        t = vs[s + 1] - vs[s]  # the tanh part of the skip layer
        da = dv * (1.0 - t * t)
        grads[f"{head}_w_{s}"] += vs[s].T @ da
        grads[f"{head}_b_{s}"] += da.sum(axis=0)
        dv = da @ w.T + dv
    return dv


def _classifier_backward(d_s, clf_cache, z, params, grads):
    """From dL/dS_hat to dL/dZ, accumulating head parameter gradients."""
    s_hat = clf_cache["s_hat"]
    gram = clf_cache["gram"]
    if params.config.classifier_mode == "fixed_temperature":
        d_gram = d_s * s_hat * (1.0 - s_hat) / params.config.fixed_tau
        return (d_gram + d_gram.T) @ z
    tau = clf_cache["tau"]
    d_e = d_s * s_hat
    d_tau = 2.0 * d_e * (gram - 1.0)
    d_gram = 2.0 * d_e * tau
    hs, hd = clf_cache["hs"], clf_cache["hd"]
    d_hs = d_tau @ hd
    d_hd = d_tau.T @ hs
    d_z = (d_gram + d_gram.T) @ z
    d_z += _head_backward(d_hs, clf_cache["heads"]["hs"], params, "hs", grads)
    d_z += _head_backward(d_hd, clf_cache["heads"]["hd"], params, "hd", grads)
    return d_z


def _encoder_backward(d_z, enc_cache, params, grads):
    """From dL/dZ to dL/dX, accumulating encoder parameter gradients."""
    d_y = _row_normalize_backward(d_z, enc_cache["z"], enc_cache["y_norm"],
                                  enc_cache["y_zero"])
    if enc_cache["mode"] == "identity":
        return d_y
    grads["out_w"] += enc_cache["acc"].T @ d_y
    grads["out_b"] += d_y.sum(axis=0)
    d_acc = d_y @ params["out_w"].T
    a_n = enc_cache["a_n"]
    d_carry = np.zeros_like(d_acc)
    for s in range(params.config.gnn_layers - 1, -1, -1):
        layer = enc_cache["layers"][s]
        d_out = d_acc + d_carry
        d_t = _row_normalize_backward(d_out, layer["z"], layer["norm"], layer["zero"])
        d_p = d_t * (1.0 - layer["t"] * layer["t"])
        grads[f"gnn_w_{s}"] += layer["az"].T @ d_p
        d_az = d_p @ params[f"gnn_w_{s}"].T
        d_carry = a_n @ d_az  # a_n is symmetric
    return d_carry


def _features_backward(d_x, feat_cache, params, grads):
    outs = feat_cache["layer_outputs"]
    if outs is None:  # degree one-hot features are constants
        return
    dv = d_x
    for s in range(params.config.feat_layers - 1, -1, -1):
        u_out, u_in = outs[s + 1], outs[s]
        da = dv * (1.0 - u_out * u_out)
        grads[f"feat_w_{s}"] += u_in.T @ da
        grads[f"feat_b_{s}"] += da.sum(axis=0)
        dv = da @ params[f"feat_w_{s}"].T
    # gradient w.r.t. the projected input is discarded: projection and
    # feature matrix are constants of the graph


def _score_matrix_grad(g, s_true, s_hat, alpha, resolution, use_bce, use_mod,
                       pin_diagonal):
    n = s_hat.shape[0]
    m = g.edge_count
    d_s = np.zeros((n, n))
    if use_mod:
        deg = g.degrees.astype(np.float64)
        d_s += (resolution / (4.0 * m * m)) * np.outer(deg, deg)
        edges = g.canonical_edges()
        d_s[edges[:, 0], edges[:, 1]] -= 1.0 / m
    if use_bce:
        c = np.clip(s_hat, BCE_CLIP, 1.0 - BCE_CLIP)
        inside = (s_hat > BCE_CLIP) & (s_hat < 1.0 - BCE_CLIP)
        d_s += alpha * inside * (c - s_true) / (c * (1.0 - c))
    if pin_diagonal:
        np.fill_diagonal(d_s, 0.0)
    return d_s


def graph_losses_and_gradients(g, truth, params, cfg, proj_seed):
    """One full forward/backward pass on a single graph.

    Returns (loss_mod, loss_bce, loss_total, grads) where the disabled
    ablation terms contribute zero to the total and to the gradients but
    are still reported in the log.
    """
    if g.node_count > cfg.dense_limit:
        raise ValueError(f"graph with N={g.node_count} exceeds dense limit "
                         f"{cfg.dense_limit}")
    qt = None
    if params.config.feature_mode == "modularity":
        qt = reduced_modularity_features(g)
    proj = ProjectionSpec(seed=proj_seed, dim=params.config.dim)
    x, feat_cache = node_features(g, qt, proj, params, want_cache=True)
    z, enc_cache = encode(g, x, params, want_cache=True)
    s_hat, clf_cache = score_dense(z, params, max_nodes=cfg.dense_limit,
                                   want_cache=True)
    s_true = build_ground_truth(truth)

    l_mod = loss_mod(g, s_hat, cfg.resolution)
    l_bce = loss_bce(s_true, s_hat)
    l_total = (l_mod if cfg.use_mod else 0.0) + \
              (cfg.alpha * l_bce if cfg.use_bce else 0.0)

    pin = params.config.classifier_mode == "pairwise_temperature"
    d_s = _score_matrix_grad(g, s_true, s_hat, cfg.alpha, cfg.resolution,
                             cfg.use_bce, cfg.use_mod, pin_diagonal=pin)
    grads = _zero_grads(params)
    d_z = _classifier_backward(d_s, clf_cache, z, params, grads)
    d_x = _encoder_backward(d_z, enc_cache, params, grads)
    _features_backward(d_x, feat_cache, params, grads)
    return l_mod, l_bce, l_total, grads


def gradients(g, truth, params, alpha, resolution, proj_seed, dense_limit=6000):
    """Exact reverse-mode gradients of the combined objective.

    The random projection and the sparse feature matrix are treated as
    constants. Validated against central finite differences.
    """
    cfg = TrainConfig(alpha=alpha, resolution=resolution,
                      dense_limit=dense_limit).validate()
    return graph_losses_and_gradients(g, truth, params, cfg, proj_seed)[3]


class Adam:
    """Standard Adam with bias correction, one slot pair per named tensor."""

    def __init__(self, params, learning_rate, beta1=0.9, beta2=0.999, eps=1e-8):
        self.learning_rate = learning_rate
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = {name: np.zeros_like(params[name]) for name in params.names()}
        self.v = {name: np.zeros_like(params[name]) for name in params.names()}

    def step(self, params, grads):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for name in params.names():
            g = grads[name]
            self.m[name] = b1 * self.m[name] + (1.0 - b1) * g
            self.v[name] = b2 * self.v[name] + (1.0 - b2) * g * g
            m_hat = self.m[name] / (1.0 - b1 ** self.t)
            v_hat = self.v[name] / (1.0 - b2 ** self.t)
            params[name] = params[name] - self.learning_rate * m_hat / (np.sqrt(v_hat) + self.eps)


def projection_seed_for(master_seed, graph_index):
    """Stable per-graph projection seed; the same features are seen each epoch."""
    ss = np.random.SeedSequence((int(master_seed), 2, int(graph_index)))
    return int(ss.generate_state(1)[0])


def _epoch_order(cfg, epoch, count):
    if not cfg.shuffle:
        return np.arange(count)
    rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, 1, epoch)))
    return rng.permutation(count)


@dataclass
class TrainResult:
    params: ModelParams
    log: list = field(default_factory=list)

    def write_log(self, path):
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "graph", "loss_mod", "loss_bce", "loss_total"])
            for row in self.log:
                writer.writerow([row["epoch"], row["graph"], repr(row["loss_mod"]),
                                 repr(row["loss_bce"]), repr(row["loss_total"])])


def save_checkpoint(path, params, optimizer, epochs_done):
    """Write a resumable checkpoint.

    The checkpoint itself is a regular model file (loadable by
    ``load_model``); optimizer state and the epoch counter go to a JSON
    sidecar at ``<path>.optimizer.json``. JSON round-trips float64 exactly,
    so resuming reproduces an uninterrupted run bit for bit.
    """
    save_model(path, params)
    state = {
        "epochs_done": int(epochs_done),
        "t": optimizer.t,
        "learning_rate": optimizer.learning_rate,
        "beta1": optimizer.beta1,
        "beta2": optimizer.beta2,
        "eps": optimizer.eps,
        "m": {name: optimizer.m[name].tolist() for name in params.names()},
        "v": {name: optimizer.v[name].tolist() for name in params.names()},
    }
    with open(str(path) + ".optimizer.json", "w", encoding="utf-8") as fh:
        json.dump(state, fh)


def load_checkpoint(path):
    _, params = load_model(path)
    with open(str(path) + ".optimizer.json", "r", encoding="utf-8") as fh:
        state = json.load(fh)
    optimizer = Adam(params, state["learning_rate"], state["beta1"],
                     state["beta2"], state["eps"])
    optimizer.t = int(state["t"])
    for name in params.names():
        optimizer.m[name] = np.asarray(state["m"][name], dtype=np.float64)
        optimizer.v[name] = np.asarray(state["v"][name], dtype=np.float64)
    return params, optimizer, int(state["epochs_done"])


def pretrain(corpus, cfg, model_config=None, resume_from=None,
             checkpoint_dir=None, on_epoch=None):
    """Run the training loop over the corpus.

    ``corpus`` is a list of (Graph, Partition) pairs, iterated in index
    order each epoch (or a seed-derived shuffle). One Adam step is taken
    per graph. Non-finite losses abort with a diagnostic snapshot written
    next to the checkpoints when a checkpoint directory is configured.
    """
    cfg.validate()
    if model_config is None:
        model_config = ModelConfig()
    for g, _ in corpus:
        if g.node_count > cfg.dense_limit:
            raise ValueError(f"corpus graph with N={g.node_count} exceeds the "
                             f"dense limit {cfg.dense_limit}")
    if resume_from is not None:
        params, optimizer, first_epoch = load_checkpoint(resume_from)
    else:
        rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, 0)))
        params = ModelParams.init(model_config, rng)
        optimizer = Adam(params, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps)
        first_epoch = 0
    result = TrainResult(params=params)
    for epoch in range(first_epoch, cfg.epochs):
        for idx in _epoch_order(cfg, epoch, len(corpus)):
            g, truth = corpus[idx]
            l_mod, l_bce, l_total, grads = graph_losses_and_gradients(
                g, truth, params, cfg, projection_seed_for(cfg.seed, idx))
            if not np.isfinite(l_total):
                snapshot = {"epoch": epoch, "graph": int(idx),
                            "loss_mod": l_mod, "loss_bce": l_bce}
                if checkpoint_dir:
                    os.makedirs(checkpoint_dir, exist_ok=True)
                    with open(os.path.join(checkpoint_dir, "diagnostic.json"),
                              "w", encoding="utf-8") as fh:
                        json.dump(snapshot, fh, indent=2)
                raise RuntimeError(f"non-finite loss at epoch {epoch}, "
                                   f"graph {idx}: {snapshot}")
            optimizer.step(params, grads)
            result.log.append({"epoch": epoch, "graph": int(idx),
                               "loss_mod": l_mod, "loss_bce": l_bce,
                               "loss_total": l_total})
        if checkpoint_dir and cfg.checkpoint_every and \
                (epoch + 1) % cfg.checkpoint_every == 0:
            os.makedirs(checkpoint_dir, exist_ok=True)
            save_checkpoint(os.path.join(checkpoint_dir, f"epoch_{epoch + 1:04d}.model"),
                            params, optimizer, epoch + 1)
        if on_epoch is not None:
            on_epoch(epoch, result.log)
    return result
