"""Forward model: feature extraction, embedding encoder, pair classifier.

All arithmetic is float64 numpy; forward passes are pure functions of
(params, inputs) and deterministic given the projection seed. Each stage
can return a cache of intermediates for the training code's reverse pass.

The ablation variants (degree one-hot features, identity encoder, fixed
single-temperature classifier) are selected through ModelConfig and are
recorded in the serialized model file.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np
import scipy.sparse as sp

FORMAT_NAME = "paircomm-model"
FORMAT_VERSION = 1

FEATURE_MODES = ("modularity", "degree_onehot")
ENCODER_MODES = ("gnn", "identity")
CLASSIFIER_MODES = ("pairwise_temperature", "fixed_temperature")


@dataclass(frozen=True)
class ModelConfig:
    dim: int = 64
    feat_layers: int = 2
    gnn_layers: int = 2
    classifier_layers: int = 2
    feature_mode: str = "modularity"
    encoder_mode: str = "gnn"
    classifier_mode: str = "pairwise_temperature"
    fixed_tau: float = 1.0

    def validate(self):
        if self.dim < 1 or self.feat_layers < 1 or self.gnn_layers < 1 or self.classifier_layers < 1:
            raise ValueError("all layer counts and dim must be >= 1")
        if self.feature_mode not in FEATURE_MODES:
            raise ValueError(f"unknown feature_mode {self.feature_mode!r}")
        if self.encoder_mode not in ENCODER_MODES:
            raise ValueError(f"unknown encoder_mode {self.encoder_mode!r}")
        if self.classifier_mode not in CLASSIFIER_MODES:
            raise ValueError(f"unknown classifier_mode {self.classifier_mode!r}")
        if self.classifier_mode == "fixed_temperature" and self.fixed_tau == 0:
            raise ValueError("fixed_tau must be nonzero")
        return self


@dataclass(frozen=True)
class ProjectionSpec:
    """Seeded Gaussian random projection to ``dim`` columns, entries N(0, 1/dim)."""

    seed: int
    dim: int


class ModelParams:
    """All trainable tensors, addressable by name in a fixed order.

    The two classifier heads share a layer layout but have independent
    parameters. Weight shapes are all (dim, dim), biases (dim,).
    """

    def __init__(self, config, tensors):
        self.config = config.validate()
        self._tensors = dict(tensors)
        for name, shape in self._expected_shapes(config):
            arr = self._tensors.get(name)
            if arr is None or arr.shape != shape:
                raise ValueError(f"tensor {name}: expected shape {shape}, "
                                 f"got {None if arr is None else arr.shape}")

    @staticmethod
    def _expected_shapes(config):
        d = config.dim
        shapes = []
        for s in range(config.feat_layers):
            shapes += [(f"feat_w_{s}", (d, d)), (f"feat_b_{s}", (d,))]
        for s in range(config.gnn_layers):
            shapes.append((f"gnn_w_{s}", (d, d)))
        shapes += [("out_w", (d, d)), ("out_b", (d,))]
        for head in ("hs", "hd"):
            for s in range(config.classifier_layers):
                shapes += [(f"{head}_w_{s}", (d, d)), (f"{head}_b_{s}", (d,))]
        return shapes

    @classmethod
    def init(cls, config, rng):
        """Glorot-uniform weights, zero biases.

        The final classifier-layer biases start at +0.1 so the ReLU
        temperature units are active from the first step; with zero bias a
        third of all pairs can start at temperature exactly 0, which
        freezes their cross-entropy gradient at the clip boundary.
        """
        d = config.dim
        limit = np.sqrt(6.0 / (2 * d))
        last = config.classifier_layers - 1
        tensors = {}
        for name, shape in cls._expected_shapes(config):
            if name in (f"hs_b_{last}", f"hd_b_{last}"):
                tensors[name] = np.full(shape, 0.1)
            elif len(shape) == 1:
                tensors[name] = np.zeros(shape)
            else:
                tensors[name] = rng.uniform(-limit, limit, size=shape)
        return cls(config, tensors)

    def names(self):
        return [name for name, _ in self._expected_shapes(self.config)]

    def __getitem__(self, name):
        return self._tensors[name]

    def __setitem__(self, name, value):
        if name not in self._tensors:
            raise KeyError(name)
        self._tensors[name] = value

    def layer(self, prefix, s):
        return self._tensors[f"{prefix}_w_{s}"], self._tensors.get(f"{prefix}_b_{s}")

    def copy(self):
        return ModelParams(self.config, {k: v.copy() for k, v in self._tensors.items()})

    def allclose(self, other):
        return all(np.array_equal(self[n], other[n]) for n in self.names())


def random_projection_features(qt, proj, block=16):
    """Sparse-times-dense product Q~ @ Omega without storing Omega whole.

    The projection matrix is materialized in column blocks from the seed,
    so peak extra memory is N x block instead of N x dim.
    """
    n = qt.shape[0]
    out = np.empty((n, proj.dim))
    for b0 in range(0, proj.dim, block):
        bw = min(block, proj.dim - b0)
        rng = np.random.default_rng(np.random.SeedSequence((int(proj.seed), b0)))
        omega = rng.standard_normal((n, bw)) / np.sqrt(proj.dim)
        out[:, b0:b0 + bw] = qt @ omega
    return out


def extract_features(qt, proj, params, want_cache=False):
    """Feature extraction: tanh MLP over the randomly projected sparse features."""
    config = params.config
    if proj.dim != config.dim:
        raise ValueError(f"projection dim {proj.dim} != model dim {config.dim}")
    if qt.shape[0] != qt.shape[1]:
        raise ValueError("feature matrix must be square")
    u = random_projection_features(qt, proj)
    layer_outputs = [u]
    for s in range(config.feat_layers):
        w, b = params.layer("feat", s)
        u = np.tanh(u @ w + b)
        layer_outputs.append(u)
    if want_cache:
        return u, {"layer_outputs": layer_outputs}
    return u


def degree_onehot_features(g, dim):
    """Ablation features: one-hot of node degree, clamped to the last bucket."""
    x = np.zeros((g.node_count, dim))
    x[np.arange(g.node_count), np.minimum(g.degrees, dim - 1)] = 1.0
    return x


def node_features(g, qt, proj, params, want_cache=False):
    """Dispatch on the configured feature mode."""
    if params.config.feature_mode == "degree_onehot":
        x = degree_onehot_features(g, params.config.dim)
        return (x, {"layer_outputs": None}) if want_cache else x
    return extract_features(qt, proj, params, want_cache)


def normalized_adjacency(g):
    """Symmetric normalization of the self-looped adjacency, as scipy CSR."""
    n = g.node_count
    inv_sqrt = 1.0 / np.sqrt(g.degrees + 1.0)
    rows = np.repeat(np.arange(n, dtype=np.int64), g.degrees)
    off = inv_sqrt[rows] * inv_sqrt[g.indices]
    diag = inv_sqrt * inv_sqrt
    coo_rows = np.concatenate([rows, np.arange(n, dtype=np.int64)])
    coo_cols = np.concatenate([g.indices, np.arange(n, dtype=np.int64)])
    data = np.concatenate([off, diag])
    return sp.coo_matrix((data, (coo_rows, coo_cols)), shape=(n, n)).tocsr()


def row_normalize(u):
    """Row-wise l2 normalization; all-zero rows become the first basis vector."""
    nrm = np.sqrt(np.einsum("ij,ij->i", u, u))
    zero = nrm == 0.0
    safe = np.where(zero, 1.0, nrm)
    out = u / safe[:, None]
    if zero.any():
        out[zero] = 0.0
        out[zero, 0] = 1.0
    return out, nrm, zero


def encode(g, x, params, want_cache=False):
    """Embedding encoder: GNN layers with row normalization, summed, then linear.

    Every layer is zhat = rownorm(tanh(Ahat_norm @ z @ W)); the layer
    outputs are summed and passed through the output linear map, and the
    result is row-normalized so all embeddings live on the unit sphere.
    """
    config = params.config
    if x.shape != (g.node_count, config.dim):
        raise ValueError(f"features must be ({g.node_count}, {config.dim}), got {x.shape}")
    if config.encoder_mode == "identity":
        z, nrm, zero = row_normalize(x)
        if want_cache:
            return z, {"mode": "identity", "x": x, "y_norm": nrm, "y_zero": zero, "z": z}
        return z
    a_n = normalized_adjacency(g)
    layers = []
    z_prev = x
    acc = np.zeros_like(x)
    for s in range(config.gnn_layers):
        w = params[f"gnn_w_{s}"]
        az = a_n @ z_prev
        t = np.tanh(az @ w)
        z_s, nrm, zero = row_normalize(t)
        layers.append({"z_in": z_prev, "az": az, "t": t, "norm": nrm, "zero": zero, "z": z_s})
        acc = acc + z_s
        z_prev = z_s
    y = acc @ params["out_w"] + params["out_b"]
    z, nrm_y, zero_y = row_normalize(y)
    if want_cache:
        return z, {"mode": "gnn", "a_n": a_n, "x": x, "layers": layers, "acc": acc,
                   "y_norm": nrm_y, "y_zero": zero_y, "z": z}
    return z


def _head_forward(z, params, head, want_cache=False):
    """One classifier head: skip-connected tanh layers, final ReLU layer."""
    n_layers = params.config.classifier_layers
    vs = [z]
    v = z
    for s in range(n_layers - 1):
        w, b = params.layer(head, s)
        v = np.tanh(v @ w + b) + v
        vs.append(v)
    w, b = params.layer(head, n_layers - 1)
    pre = v @ w + b
    h = np.maximum(pre, 0.0)
    if want_cache:
        return h, {"vs": vs, "relu_mask": pre > 0.0}
    return h


def classifier_heads(z, params, want_cache=False):
    """Head outputs for every node; tau for pair (i, j) is hs[i] . hd[j]."""
    if want_cache:
        hs, cs = _head_forward(z, params, "hs", True)
        hd, cd = _head_forward(z, params, "hd", True)
        return hs, hd, {"hs": cs, "hd": cd}
    return _head_forward(z, params, "hs"), _head_forward(z, params, "hd")


def _check_unit_rows(z, tol=1e-6):
    nrm = np.sqrt(np.einsum("ij,ij->i", z, z))
    if np.any(np.abs(nrm - 1.0) > tol):
        raise ValueError("embeddings must be unit-norm rows")


def pair_score(z_i, z_j, params):
    """Co-membership score exp(2 * tau_ij * (z_i . z_j - 1)) in (0, 1]."""
    z_i = np.asarray(z_i, dtype=np.float64)
    z_j = np.asarray(z_j, dtype=np.float64)
    _check_unit_rows(z_i[None, :])
    _check_unit_rows(z_j[None, :])
    hs, hd = classifier_heads(np.stack([z_i, z_j]), params)
    tau = float(hs[0] @ hd[1])
    dot = min(float(z_i @ z_j), 1.0)
    return float(np.exp(2.0 * tau * (dot - 1.0)))


def pair_score_naive(z_i, z_j, tau):
    """Fixed-temperature variant: sigmoid((z_i . z_j) / tau)."""
    if tau == 0:
        raise ValueError("tau must be nonzero")
    dot = float(np.asarray(z_i) @ np.asarray(z_j))
    return float(1.0 / (1.0 + np.exp(-dot / tau)))


def score_batch(z, pairs, params):
    """Scores for a list of node pairs, evaluated in canonical (i < j) order.

    A pure function of (z, pairs, params): duplicate pairs get identical
    scores, and orientation of the input pairs does not matter.
    """
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    if pairs.size == 0:
        return np.empty(0)
    if np.any(pairs[:, 0] == pairs[:, 1]):
        raise ValueError("self-pairs cannot be scored")
    _check_unit_rows(z)
    a = np.minimum(pairs[:, 0], pairs[:, 1])
    b = np.maximum(pairs[:, 0], pairs[:, 1])
    dots = np.minimum(np.einsum("ij,ij->i", z[a], z[b]), 1.0)
    if params.config.classifier_mode == "fixed_temperature":
        return 1.0 / (1.0 + np.exp(-dots / params.config.fixed_tau))
    hs, hd = classifier_heads(z, params)
    taus = np.einsum("ij,ij->i", hs[a], hd[b])
    return np.exp(2.0 * taus * (dots - 1.0))


def score_dense(z, params, max_nodes=6000, want_cache=False):
    """Full N x N score matrix; pre-training scale only.

    For the pairwise-temperature classifier the diagonal is exactly 1 and
    is treated as constant. Refuses to run past ``max_nodes``.
    """
    n = z.shape[0]
    if n > max_nodes:
        raise ValueError(f"dense scoring refused for N={n} > max_nodes={max_nodes}")
    gram = z @ z.T
    if params.config.classifier_mode == "fixed_temperature":
        s_hat = 1.0 / (1.0 + np.exp(-gram / params.config.fixed_tau))
        if want_cache:
            return s_hat, {"gram": gram, "s_hat": s_hat, "heads": None}
        return s_hat
    hs, hd, head_cache = classifier_heads(z, params, want_cache=True)
    tau = hs @ hd.T
    s_hat = np.exp(2.0 * tau * (gram - 1.0))
    np.minimum(s_hat, 1.0, out=s_hat)
    np.fill_diagonal(s_hat, 1.0)
    if want_cache:
        return s_hat, {"gram": gram, "tau": tau, "s_hat": s_hat,
                       "hs": hs, "hd": hd, "heads": head_cache}
    return s_hat


def _format_float(x):
    return repr(float(x))


def save_model(path, params, projection_policy="per-graph-seed"):
    """Write the versioned text serialization: config, then each tensor
    with its shape, rows of shortest-round-trip decimal float64."""
    config = params.config
    lines = [f"{FORMAT_NAME} {FORMAT_VERSION}"]
    for key, value in asdict(config).items():
        lines.append(f"{key} {value}")
    lines.append(f"projection_policy {projection_policy}")
    names = params.names()
    lines.append(f"tensors {len(names)}")
    for name in names:
        arr = params[name]
        shape = " ".join(str(s) for s in arr.shape)
        lines.append(f"tensor {name} {shape}")
        rows = arr.reshape(arr.shape[0], -1) if arr.ndim > 1 else arr.reshape(1, -1)
        for row in rows:
            lines.append(" ".join(_format_float(v) for v in row))
    lines.append("end")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_model(path):
    """Read a model file back; exact float64 round trip."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines or not lines[0].startswith(FORMAT_NAME):
        raise ValueError("not a model file")
    version = int(lines[0].split()[1])
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {version}")
    idx = 1
    fields = {}
    while not lines[idx].startswith("tensors "):
        key, value = lines[idx].split(maxsplit=1)
        fields[key] = value
        idx += 1
    config = ModelConfig(
        dim=int(fields["dim"]),
        feat_layers=int(fields["feat_layers"]),
        gnn_layers=int(fields["gnn_layers"]),
        classifier_layers=int(fields["classifier_layers"]),
        feature_mode=fields["feature_mode"],
        encoder_mode=fields["encoder_mode"],
        classifier_mode=fields["classifier_mode"],
        fixed_tau=float(fields["fixed_tau"]),
    )
    count = int(lines[idx].split()[1])
    idx += 1
    tensors = {}
    for _ in range(count):
        header = lines[idx].split()
        if header[0] != "tensor":
            raise ValueError(f"expected tensor header at line {idx + 1}")
        name = header[1]
        shape = tuple(int(s) for s in header[2:])
        idx += 1
        n_rows = shape[0] if len(shape) > 1 else 1
        rows = []
        for _ in range(n_rows):
            rows.append([float(tok) for tok in lines[idx].split()])
            idx += 1
        tensors[name] = np.asarray(rows, dtype=np.float64).reshape(shape)
    if lines[idx] != "end":
        raise ValueError("missing end marker")
    return config, ModelParams(config, tensors)
