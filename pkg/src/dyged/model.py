"""DyGED: per-snapshot GCN, attention pooling, LSTM over pooled embeddings,
temporal attention, and an MLP classifier.

The network is evaluated on a *batch* of windows at once. Snapshots are
encoded once per batch (a snapshot appears in up to ``k + 1`` windows) and
windows then gather their pooled embeddings by index. Row vectors keep
their matrix shape (``1 x h``) throughout so every step is a matrix op on
the tape.

Column 0 of the score/probability output is the event class, column 1 the
no-event class.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .autodiff import Node, Tape
from .errors import ConfigError, DimensionError, ParseError
from .graph import DynamicGraph, Snapshot, SnapshotWindow, assemble_features, normalized_adjacency

__all__ = [
    "VARIANTS",
    "ModelConfig",
    "ModelParams",
    "WindowDataset",
    "ForwardResult",
    "param_shapes",
    "init_params",
    "gcn_forward",
    "v_att_pool",
    "pool_variant",
    "lstm_step",
    "t_att",
    "mlp_forward",
    "weighted_loss",
    "loss",
    "forward_batch",
    "forward",
    "save_checkpoint",
    "load_checkpoint",
]

VARIANTS = ("full", "CT", "NL", "NA", "mean", "max")
_GATES = ("i", "f", "o", "c")


@dataclass(frozen=True)
class ModelConfig:
    d_in: int
    hidden: int = 64  # GCN hidden width h'
    h: int = 64
    k: int = 3
    mlp_layers: int = 2
    mlp_hidden: int | None = None  # defaults to h
    variant: str = "full"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; valid variants: {', '.join(VARIANTS)}")
        for name in ("d_in", "hidden", "h", "mlp_layers"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.k < 0:
            raise ConfigError(f"k must be >= 0, got {self.k}")
        if self.mlp_hidden is not None and self.mlp_hidden <= 0:
            raise ConfigError(f"mlp_hidden must be positive, got {self.mlp_hidden}")

    @property
    def uses_attention_pool(self) -> bool:
        return self.variant not in ("mean", "max")

    @property
    def uses_lstm(self) -> bool:
        return self.variant not in ("CT", "NL")

    @property
    def uses_time_attention(self) -> bool:
        return self.variant not in ("CT", "NA")

    @property
    def mlp_in(self) -> int:
        return (self.k + 1) * self.h if self.variant == "CT" else self.h


def param_shapes(cfg: ModelConfig) -> dict[str, tuple[int, int]]:
    """Names and shapes of every learnable tensor, in declared order."""
    h = cfg.h
    shapes = {"gcn.W0": (cfg.d_in, cfg.hidden), "gcn.W1": (cfg.hidden, h)}
    if cfg.uses_attention_pool:
        shapes.update({"v_att.phi": (h, h), "v_att.w": (1, h)})
    if cfg.uses_lstm:
        for g in _GATES:
            shapes[f"lstm.W_{g}"] = (h, h)
        for g in _GATES:
            shapes[f"lstm.U_{g}"] = (h, h)
        for g in _GATES:
            shapes[f"lstm.b_{g}"] = (1, h)
    if cfg.uses_time_attention:
        shapes.update({"t_att.phi": (h, h), "t_att.w": (1, h)})
    widths = [cfg.mlp_in] + [cfg.mlp_hidden or h] * (cfg.mlp_layers - 1) + [2]
    for i in range(cfg.mlp_layers):
        shapes[f"mlp.{i}.weight"] = (widths[i], widths[i + 1])
        shapes[f"mlp.{i}.bias"] = (1, widths[i + 1])
    return shapes


@dataclass(eq=False)
class ModelParams:
    config: ModelConfig
    tensors: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        expected = param_shapes(self.config)
        if list(self.tensors) != list(expected):
            raise ConfigError(f"parameter names {list(self.tensors)} do not match variant {self.config.variant!r}")
        for name, shape in expected.items():
            if self.tensors[name].shape != shape:
                raise DimensionError(f"{name}: expected shape {shape}, got {self.tensors[name].shape}")

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]

    def copy(self) -> "ModelParams":
        return ModelParams(self.config, {k: v.copy() for k, v in self.tensors.items()})

    def group(self, prefix: str) -> dict[str, np.ndarray]:
        """Tensors of one component, e.g. ``group("lstm")``."""
        return {k.split(".", 1)[1]: v for k, v in self.tensors.items() if k.startswith(prefix + ".")}


def init_params(cfg: ModelConfig, seed: int) -> ModelParams:
    """Glorot-uniform weights, zero biases, LSTM forget bias of one."""
    rng = np.random.default_rng(seed)
    tensors = {}
    for name, shape in param_shapes(cfg).items():
        if name.endswith("bias") or name.startswith("lstm.b_"):
            tensors[name] = np.ones(shape) if name == "lstm.b_f" else np.zeros(shape)
        else:
            limit = np.sqrt(6.0 / (shape[0] + shape[1]))
            tensors[name] = rng.uniform(-limit, limit, size=shape)
    return ModelParams(cfg, tensors)


# -- building blocks (all operate on tape nodes) -------------------------------


def gcn_forward(tape: Tape, a_hat, x: Node, w0: Node, w1: Node, mask=None) -> Node:
    """Two-layer GCN ``relu(A relu(A X W0) W1)``; ``mask`` is the hidden-layer dropout.

    ``a_hat`` is either a dense node (``n x n`` or a batch of them) or a
    constant ``scipy.sparse`` matrix, typically block-diagonal over several
    snapshots whose node rows are stacked in ``x``.
    """
    if a_hat.shape[-1] != x.shape[-2]:
        raise DimensionError(f"adjacency {a_hat.shape} does not match features {x.shape}")
    propagate = tape.matmul if isinstance(a_hat, Node) else tape.spmm
    hidden = tape.relu(propagate(a_hat, tape.matmul(x, w0)))
    hidden = tape.dropout(hidden, mask)
    return tape.relu(propagate(a_hat, tape.matmul(hidden, w1)))


def _self_attention(tape: Tape, z: Node, phi: Node, w: Node) -> tuple[Node, Node]:
    if z.shape[-2] == 0:
        raise DimensionError("attention over zero rows")
    scores = tape.matmul(w, tape.tanh(tape.matmul(phi, tape.transpose(z))))
    alpha = tape.softmax_row(scores)
    return tape.matmul(alpha, z), alpha


def v_att_pool(tape: Tape, z: Node, phi: Node, w: Node) -> tuple[Node, Node]:
    """Attention pooling of node embeddings ``z`` (``n x h``) into one ``1 x h`` row.

    Returns the pooled row and the ``1 x n`` attention weights.
    """
    return _self_attention(tape, z, phi, w)


def t_att(tape: Tape, zs: Node, phi: Node, w: Node) -> tuple[Node, Node]:
    """Temporal attention over the ``(k+1) x h`` stack of dynamic embeddings."""
    return _self_attention(tape, zs, phi, w)


def pool_variant(tape: Tape, z: Node, kind: str) -> Node:
    if kind == "mean":
        return tape.mean_rows(z)
    if kind == "max":
        return tape.max_rows(z)
    raise ConfigError(f"pooling kind must be 'mean' or 'max', got {kind!r}")


def lstm_step(tape: Tape, h_prev: Node, c_prev: Node, z: Node, p: dict[str, Node]) -> tuple[Node, Node]:
    """One LSTM step with input ``z``; ``p`` maps ``W_i``, ``U_i``, ``b_i``, ... to nodes."""
    if not (h_prev.shape == c_prev.shape == z.shape):
        raise DimensionError(f"lstm_step: state {h_prev.shape}/{c_prev.shape} vs input {z.shape}")

    def gate(g):
        pre = tape.add(tape.matmul(z, p[f"W_{g}"]), tape.matmul(h_prev, p[f"U_{g}"]))
        return tape.add_bias(pre, p[f"b_{g}"])

    i = tape.sigmoid(gate("i"))
    f = tape.sigmoid(gate("f"))
    o = tape.sigmoid(gate("o"))
    cand = tape.tanh(gate("c"))
    c = tape.add(tape.mul(f, c_prev), tape.mul(i, cand))
    h = tape.mul(o, tape.tanh(c))
    return h, c


def mlp_forward(tape: Tape, x: Node, layers: Sequence[tuple[Node, Node]], masks=None) -> Node:
    masks = masks or [None] * (len(layers) - 1)
    for i, (weight, bias) in enumerate(layers):
        x = tape.add_bias(tape.matmul(x, weight), bias)
        if i < len(layers) - 1:
            x = tape.dropout(tape.relu(x), masks[i])
    return x


def weighted_loss(tape: Tape, scores: Node, labels, x: float) -> Node:
    """Class-ratio weighted cross-entropy, averaged over the batch.

    ``x`` is the fraction of positive windows in the training set; event
    terms are weighted by ``1 - x`` and no-event terms by ``x``.
    """
    if not 0.0 < x < 1.0:
        raise ConfigError(f"positive ratio x must lie in (0, 1), got {x}")
    labels = np.asarray(labels, dtype=np.float64).reshape(-1)
    batch = scores.shape[0] if scores.value.ndim == 3 else 1
    if labels.size != batch or scores.shape[-1] != 2:
        raise DimensionError(f"scores {scores.shape} do not match {labels.size} labels")
    weights = np.zeros(scores.shape)
    weights[..., 0] = ((1.0 - x) * labels).reshape(weights[..., 0].shape)
    weights[..., 1] = (x * (1.0 - labels)).reshape(weights[..., 1].shape)
    logp = tape.log(tape.softmax_row(scores), floor=1e-12)
    return tape.scale(tape.sum(tape.mul(tape.const(weights), logp)), -1.0 / batch)


def loss(scores, labels, x: float) -> float:
    """Numeric value of :func:`weighted_loss` for a ``B x 2`` score array."""
    tape = Tape()
    scores = np.asarray(scores, dtype=np.float64).reshape(-1, 1, 2)
    return float(weighted_loss(tape, tape.const(scores), labels, x).value[0, 0])


# -- data ---------------------------------------------------------------------


def _normalized_entries(s: Snapshot) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Nonzeros of the normalized adjacency of ``s`` as ``(rows, cols, values)``."""
    u, v = s.edges[:, 0], s.edges[:, 1]
    deg = np.ones(s.n)
    np.add.at(deg, u, s.weights)
    np.add.at(deg, v, s.weights)
    inv = 1.0 / np.sqrt(deg)
    off = s.weights * inv[u] * inv[v]
    diag = np.arange(s.n)
    return (
        np.concatenate([diag, u, v]),
        np.concatenate([diag, v, u]),
        np.concatenate([inv * inv, off, off]),
    )


@dataclass(eq=False)
class WindowDataset:
    """Per-snapshot normalized adjacency (sparse) and features, plus the windows over them.

    Window ``j`` ends at snapshot ``targets[j]`` and covers snapshots
    ``targets[j] - k .. targets[j]``.
    """

    n: int
    ptr: np.ndarray  # (T+1,) offsets of each snapshot's nonzeros
    rows: np.ndarray
    cols: np.ndarray
    vals: np.ndarray
    x: np.ndarray  # (T, n, d_in)
    labels: np.ndarray  # (T,)
    k: int
    targets: np.ndarray | None = None

    def __post_init__(self):
        T = len(self.x)
        if T <= self.k:
            raise ConfigError(f"k={self.k} needs at least {self.k + 1} snapshots, dataset has T={T}")
        if self.targets is None:
            self.targets = np.arange(self.k, T)

    @classmethod
    def from_snapshots(cls, snaps: Sequence[Snapshot], labels, k: int, feature_mode: str = "static", targets=None):
        if not snaps:
            raise ConfigError("no snapshots given")
        entries = [_normalized_entries(s) for s in snaps]
        ptr = np.concatenate([[0], np.cumsum([len(e[0]) for e in entries])])
        x = np.stack([assemble_features(s, feature_mode) for s in snaps])
        rows, cols, vals = (np.concatenate(parts) for parts in zip(*entries))
        return cls(snaps[0].n, ptr, rows, cols, vals, x, np.asarray(labels, dtype=np.int64), k, targets)

    @classmethod
    def from_graph(cls, g: DynamicGraph, k: int, feature_mode: str = "static") -> "WindowDataset":
        if k < 0 or g.T <= k:
            raise ConfigError(f"k={k} needs at least {k + 1} snapshots, graph has T={g.T}")
        return cls.from_snapshots(g.snapshots, g.labels, k, feature_mode)

    @classmethod
    def from_windows(cls, ws: Sequence[SnapshotWindow], feature_mode: str = "static") -> "WindowDataset":
        """Dataset holding exactly the given windows (snapshots are duplicated per window)."""
        if not ws:
            raise ConfigError("no windows given")
        k = ws[0].k
        snaps = [s for w in ws for s in w.snapshots]
        labels = np.zeros(len(snaps), dtype=np.int64)
        labels[k :: k + 1] = [w.label for w in ws]
        return cls.from_snapshots(snaps, labels, k, feature_mode, targets=np.arange(k, len(snaps), k + 1))

    @property
    def T(self) -> int:
        return len(self.x)

    @property
    def n_windows(self) -> int:
        return len(self.targets)

    @property
    def window_labels(self) -> np.ndarray:
        return self.labels[self.targets]

    @property
    def d_in(self) -> int:
        return self.x.shape[-1]

    def batch(self, idx) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Unique snapshot ids, ``(B, k+1)`` window layout into them, and labels."""
        idx = np.asarray(idx, dtype=np.intp)
        span = self.targets[idx][:, None] + np.arange(-self.k, 1)[None, :]
        snaps, local = np.unique(span, return_inverse=True)
        return snaps, local.reshape(span.shape), self.labels[self.targets[idx]]

    def adjacency(self, snaps) -> sp.csr_matrix:
        """Block-diagonal normalized adjacency of the given snapshots, in that order."""
        snaps = np.asarray(snaps, dtype=np.intp)
        lengths = self.ptr[snaps + 1] - self.ptr[snaps]
        block = np.repeat(np.arange(len(snaps)), lengths)
        pick = np.repeat(self.ptr[snaps] - np.cumsum(lengths) + lengths, lengths) + np.arange(lengths.sum())
        size = len(snaps) * self.n
        offset = block * self.n
        return sp.csr_matrix((self.vals[pick], (self.rows[pick] + offset, self.cols[pick] + offset)), shape=(size, size))

    def dense_adjacency(self, snaps) -> np.ndarray:
        """``(S, n, n)`` stack of normalized adjacency matrices."""
        snaps = np.asarray(snaps, dtype=np.intp)
        out = np.zeros((len(snaps), self.n, self.n))
        for i, t in enumerate(snaps):
            sl = slice(self.ptr[t], self.ptr[t + 1])
            out[i, self.rows[sl], self.cols[sl]] = self.vals[sl]
        return out


# -- full network -------------------------------------------------------------


@dataclass(eq=False)
class ForwardResult:
    tape: Tape
    leaves: dict[str, Node]
    scores: Node  # (B, 1, 2)
    node_attention: np.ndarray | None  # (S, n) per encoded snapshot
    time_attention: np.ndarray | None  # (B, k+1)
    embeddings: np.ndarray  # (B, mlp_in)
    snapshot_ids: np.ndarray | None = None

    def probabilities(self) -> np.ndarray:
        s = self.scores.value[:, 0, :]
        e = np.exp(s - s.max(axis=1, keepdims=True))
        return e / e.sum(axis=1, keepdims=True)


def _dropout_mask(rng, shape, rate):
    keep = rng.random(shape) >= rate
    return keep / (1.0 - rate)


def forward_batch(
    params: ModelParams,
    a_hat: np.ndarray,
    x: np.ndarray,
    layout: np.ndarray,
    train: bool = False,
    rng: np.random.Generator | None = None,
    dropout: float = 0.2,
) -> ForwardResult:
    """Run the network on ``B`` windows.

    ``x`` (``S x n x d``) holds the features of the snapshots in play and
    ``a_hat`` their normalized adjacency, either as a dense ``S x n x n``
    stack or as a sparse block-diagonal ``Sn x Sn`` matrix. ``layout``
    (``B x (k+1)``) lists, per window, the snapshot rows in time order.
    """
    cfg = params.config
    layout = np.asarray(layout, dtype=np.intp)
    if layout.ndim != 2 or layout.shape[1] != cfg.k + 1:
        raise ConfigError(f"window layout {layout.shape} inconsistent with k={cfg.k}")
    if x.shape[-1] != cfg.d_in:
        raise DimensionError(f"feature width {x.shape[-1]} does not match model d_in={cfg.d_in}")
    if train and dropout > 0:
        if rng is None:
            raise ConfigError("training mode needs an rng for dropout masks")
        draw = lambda shape: _dropout_mask(rng, shape, dropout)  # noqa: E731
    else:
        draw = lambda shape: None  # noqa: E731

    tape = Tape()
    P = {name: tape.leaf(arr, name=name) for name, arr in params.tensors.items()}
    S, n = x.shape[0], x.shape[1]
    B, h = len(layout), cfg.h
    if sp.issparse(a_hat):
        if a_hat.shape != (S * n, S * n):
            raise DimensionError(f"block adjacency {a_hat.shape} does not match {S} snapshots of {n} nodes")
        X = tape.const(x.reshape(S * n, -1), "x")
        Z = gcn_forward(tape, a_hat, X, P["gcn.W0"], P["gcn.W1"], draw((S * n, cfg.hidden)))
        Z = tape.reshape(Z, (S, n, h))
    else:
        A, X = tape.const(a_hat, "a_hat"), tape.const(x, "x")
        Z = gcn_forward(tape, A, X, P["gcn.W0"], P["gcn.W1"], draw((S, n, cfg.hidden)))
    node_att = None
    if cfg.uses_attention_pool:
        pooled, alpha = v_att_pool(tape, Z, P["v_att.phi"], P["v_att.w"])
        node_att = alpha.value[:, 0, :]
    else:
        pooled = pool_variant(tape, Z, cfg.variant)

    steps = [tape.take(pooled, layout[:, j]) for j in range(cfg.k + 1)]
    time_att = None
    if cfg.variant == "CT":
        final = tape.concat("cols", steps)
    else:
        if cfg.uses_lstm:
            lp = {name.split(".", 1)[1]: node for name, node in P.items() if name.startswith("lstm.")}
            hs, state_h = [], tape.const(np.zeros((B, 1, h)))
            state_c = state_h
            for z in steps:
                state_h, state_c = lstm_step(tape, state_h, state_c, z, lp)
                hs.append(state_h)
        else:
            hs = steps
        if cfg.uses_time_attention:
            final, beta = t_att(tape, tape.concat("rows", hs), P["t_att.phi"], P["t_att.w"])
            time_att = beta.value[:, 0, :]
        else:
            final = hs[-1]

    layers = [(P[f"mlp.{i}.weight"], P[f"mlp.{i}.bias"]) for i in range(cfg.mlp_layers)]
    width = cfg.mlp_hidden or h
    masks = [draw((B, 1, width)) for _ in range(cfg.mlp_layers - 1)]
    scores = mlp_forward(tape, final, layers, masks)
    return ForwardResult(tape, P, scores, node_att, time_att, final.value[:, 0, :])


def forward(
    window: SnapshotWindow,
    params: ModelParams,
    mode: str = "eval",
    rng: np.random.Generator | None = None,
    feature_mode: str = "static",
    dropout: float = 0.2,
) -> tuple[np.ndarray, dict]:
    """Scores (length 2) for one window, plus attention/embedding diagnostics."""
    if mode not in ("train", "eval"):
        raise ConfigError(f"mode must be 'train' or 'eval', got {mode!r}")
    if window.k != params.config.k:
        raise ConfigError(f"window has k={window.k} but model expects k={params.config.k}")
    a_hat = np.stack([normalized_adjacency(s) for s in window.snapshots])
    x = np.stack([assemble_features(s, feature_mode) for s in window.snapshots])
    layout = np.arange(window.k + 1)[None, :]
    res = forward_batch(params, a_hat, x, layout, train=mode == "train", rng=rng, dropout=dropout)
    diagnostics = {
        "node_attention": res.node_attention,
        "time_attention": None if res.time_attention is None else res.time_attention[0],
        "embedding": res.embeddings[0],
        "probabilities": res.probabilities()[0],
    }
    return res.scores.value[0, 0].copy(), diagnostics


# -- checkpoint ---------------------------------------------------------------

_MAGIC = b"DYGED-CKPT"
_VERSION = 1


def save_checkpoint(params: ModelParams, path) -> None:
    """Binary checkpoint: magic + version line, JSON header line, raw little-endian float64."""
    header = {
        "config": asdict(params.config),
        "tensors": [[name, list(arr.shape)] for name, arr in params.tensors.items()],
    }
    with open(path, "wb") as fh:
        fh.write(_MAGIC + b" %d\n" % _VERSION)
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        for arr in params.tensors.values():
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path) -> ModelParams:
    with open(path, "rb") as fh:
        first = fh.readline()
        if not first.startswith(_MAGIC):
            raise ParseError(path, 1, "not a checkpoint file")
        try:
            version = int(first[len(_MAGIC) :].strip())
        except ValueError:
            raise ParseError(path, 1, "bad version field") from None
        if version != _VERSION:
            raise ParseError(path, 1, f"unsupported checkpoint version {version}")
        try:
            header = json.loads(fh.readline())
        except json.JSONDecodeError as exc:
            raise ParseError(path, 2, f"bad header: {exc}") from None
        tensors = {}
        for name, shape in header["tensors"]:
            count = int(np.prod(shape))
            buf = fh.read(8 * count)
            if len(buf) != 8 * count:
                raise ParseError(path, 3, f"truncated data for {name}")
            tensors[name] = np.frombuffer(buf, dtype="<f8").reshape(shape).astype(np.float64)
        if fh.read(1):
            raise ParseError(path, 3, "trailing bytes after last tensor")
    return ModelParams(ModelConfig(**header["config"]), tensors)
