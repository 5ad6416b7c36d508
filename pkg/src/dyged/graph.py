"""Dynamic graphs: snapshots over a fixed vertex set, windows, and node features.

Structural features (degree, betweenness, clustering) are computed on the
unweighted skeleton of a snapshot. The normalized adjacency used by the GCN
does use edge weights.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError, EmptyInputError, ParseError

__all__ = [
    "Snapshot",
    "DynamicGraph",
    "SnapshotWindow",
    "normalized_adjacency",
    "degree_feature",
    "betweenness_feature",
    "clustering_feature",
    "dynamic_features",
    "assemble_features",
    "windows",
    "write_graph",
    "read_graph",
    "FEATURE_MODES",
]

FEATURE_MODES = ("static", "dynamic", "both")


@dataclass(frozen=True, eq=False)
class Snapshot:
    """Weighted undirected graph at one timestamp.

    ``edges`` is an ``(m, 2)`` integer array of vertex pairs, each unordered
    pair stored once; ``weights`` holds the matching positive weights and
    ``features`` is the ``n x d`` node feature matrix (``d`` may be 0).
    """

    t: int
    n: int
    edges: np.ndarray
    weights: np.ndarray
    features: np.ndarray

    def __post_init__(self):
        edges = np.array(self.edges, dtype=np.int64).reshape(-1, 2)
        weights = np.array(self.weights, dtype=np.float64).reshape(-1)
        feats = np.array(self.features, dtype=np.float64)
        if feats.ndim == 1 and feats.size == 0:
            feats = feats.reshape(self.n, 0)
        if len(weights) != len(edges):
            raise ValueError(f"{len(edges)} edges but {len(weights)} weights")
        if feats.ndim != 2 or feats.shape[0] != self.n:
            raise ValueError(f"features must have {self.n} rows, got shape {feats.shape}")
        if len(edges):
            if edges.min() < 0 or edges.max() >= self.n:
                raise ValueError(f"vertex id out of range [0, {self.n})")
            if np.any(edges[:, 0] == edges[:, 1]):
                raise ValueError("self-loops are not allowed")
            if np.any(~(weights > 0)) or not np.all(np.isfinite(weights)):
                raise ValueError("edge weights must be positive and finite")
            keys = np.sort(edges, axis=1)
            if len(np.unique(keys, axis=0)) != len(keys):
                raise ValueError("duplicate undirected edge")
        for arr in (edges, weights, feats):
            arr.flags.writeable = False
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "features", feats)

    @property
    def m(self) -> int:
        return len(self.edges)

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def adjacency(self, weighted: bool = True) -> np.ndarray:
        a = np.zeros((self.n, self.n))
        if self.m:
            w = self.weights if weighted else 1.0
            a[self.edges[:, 0], self.edges[:, 1]] = w
            a[self.edges[:, 1], self.edges[:, 0]] = w
        return a

    def neighbors(self) -> list[list[int]]:
        adj: list[list[int]] = [[] for _ in range(self.n)]
        for u, v in self.edges.tolist():
            adj[u].append(v)
            adj[v].append(u)
        return adj

    def permuted(self, perm: Sequence[int]) -> "Snapshot":
        """Relabel vertices: old vertex ``i`` becomes ``perm[i]``."""
        perm = np.asarray(perm)
        feats = np.empty_like(self.features)
        feats[perm] = self.features
        return Snapshot(self.t, self.n, perm[self.edges], self.weights, feats)


@dataclass(frozen=True, eq=False)
class DynamicGraph:
    n: int
    snapshots: tuple[Snapshot, ...]
    labels: np.ndarray
    node_names: tuple[str, ...] | None = None

    def __post_init__(self):
        snaps = tuple(self.snapshots)
        labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if len(labels) != len(snaps):
            raise ValueError(f"{len(snaps)} snapshots but {len(labels)} labels")
        if not np.isin(labels, (0, 1)).all():
            raise ValueError("labels must be 0 or 1")
        ts = [s.t for s in snaps]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError("snapshot timestamps must be strictly increasing")
        for s in snaps:
            if s.n != self.n:
                raise ValueError(f"snapshot {s.t} has {s.n} vertices, expected {self.n}")
        if len({s.d for s in snaps}) > 1:
            raise ValueError("feature dimension varies across snapshots")
        if self.node_names is not None and len(self.node_names) != self.n:
            raise ValueError("node_names length differs from n")
        labels.flags.writeable = False
        object.__setattr__(self, "snapshots", snaps)
        object.__setattr__(self, "labels", labels)

    @property
    def T(self) -> int:
        return len(self.snapshots)

    @property
    def d(self) -> int:
        return self.snapshots[0].d if self.snapshots else 0


@dataclass(frozen=True, eq=False)
class SnapshotWindow:
    """The ``k + 1`` consecutive snapshots ending at index ``t`` and its label."""

    snapshots: tuple[Snapshot, ...]
    label: int
    t: int

    @property
    def k(self) -> int:
        return len(self.snapshots) - 1


def windows(g: DynamicGraph, k: int) -> list[SnapshotWindow]:
    if k < 0:
        raise ConfigError(f"window order k must be >= 0, got {k}")
    if g.T <= k:
        raise EmptyInputError(f"k={k} needs at least {k + 1} snapshots, graph has T={g.T}")
    return [
        SnapshotWindow(g.snapshots[t - k : t + 1], int(g.labels[t]), t)
        for t in range(k, g.T)
    ]


# -- structure ----------------------------------------------------------------


def normalized_adjacency(s: Snapshot) -> np.ndarray:
    """``D^-1/2 (I + A) D^-1/2`` with ``D`` the weighted degree of ``I + A``."""
    a = s.adjacency(weighted=True)
    a[np.diag_indices(s.n)] += 1.0
    inv_sqrt = 1.0 / np.sqrt(a.sum(axis=1))
    return a * inv_sqrt[:, None] * inv_sqrt[None, :]


def degree_feature(s: Snapshot) -> np.ndarray:
    deg = np.zeros(s.n)
    if s.m:
        np.add.at(deg, s.edges.ravel(), 1.0)
    return deg


def betweenness_feature(s: Snapshot) -> np.ndarray:
    """Normalized shortest-path betweenness on the unweighted skeleton.

    Brandes' algorithm run level-synchronously for all sources at once: a
    BFS sweep counts shortest paths ``sigma``, then dependencies are
    accumulated from the deepest level back to the sources,
    ``delta[v] += sigma[v] / sigma[w] * (1 + delta[w])`` for every edge
    ``v -> w`` one level down.
    """
    n = s.n
    if n < 3:
        return np.zeros(n)
    a = s.adjacency(weighted=False)
    dist = np.full((n, n), -1)
    np.fill_diagonal(dist, 0)
    sigma = np.eye(n)
    frontier = np.eye(n)
    depth = 0
    while True:
        reach = frontier @ a
        new = (reach > 0) & (dist < 0)
        if not new.any():
            break
        depth += 1
        dist[new] = depth
        sigma[new] = reach[new]
        frontier = np.where(new, sigma, 0.0)
    delta = np.zeros((n, n))
    for level in range(depth, 0, -1):
        coef = np.where(dist == level, (1.0 + delta) / np.where(sigma > 0, sigma, 1.0), 0.0)
        parents = dist == level - 1
        delta[parents] += (sigma * (coef @ a))[parents]
    np.fill_diagonal(delta, 0.0)
    # each unordered pair is counted from both endpoints
    return delta.sum(axis=0) / 2.0 / ((n - 1) * (n - 2) / 2.0)


def clustering_feature(s: Snapshot) -> np.ndarray:
    a = s.adjacency(weighted=False)
    deg = a.sum(axis=1)
    tri = np.einsum("ij,jk,ki->i", a, a, a) / 2.0
    out = np.zeros(s.n)
    ok = deg >= 2
    out[ok] = 2.0 * tri[ok] / (deg[ok] * (deg[ok] - 1))
    return out


def _standardize(cols: np.ndarray) -> np.ndarray:
    mu = cols.mean(axis=0)
    sd = cols.std(axis=0)
    out = np.zeros_like(cols)
    ok = sd > 1e-12
    out[:, ok] = (cols[:, ok] - mu[ok]) / sd[ok]
    return out


def dynamic_features(s: Snapshot, standardize: bool = True) -> np.ndarray:
    """``n x 3`` matrix of degree, betweenness and clustering columns."""
    raw = np.column_stack([degree_feature(s), betweenness_feature(s), clustering_feature(s)])
    return _standardize(raw) if standardize else raw


def assemble_features(s: Snapshot, mode: str) -> np.ndarray:
    if mode not in FEATURE_MODES:
        raise ConfigError(f"feature mode must be one of {FEATURE_MODES}, got {mode!r}")
    if mode in ("static", "both") and s.d == 0:
        raise ConfigError(f"feature mode {mode!r} needs static features but d=0")
    if mode == "static":
        return np.array(s.features)
    dyn = dynamic_features(s)
    if mode == "dynamic":
        return dyn
    return np.hstack([s.features, dyn])


# -- text format --------------------------------------------------------------


@dataclass
class _Reader:
    path: Path
    rows: list[tuple[int, list[str]]] = field(default_factory=list)

    @classmethod
    def open(cls, path: Path) -> "_Reader":
        r = cls(path)
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.strip()
                if line and not line.startswith("#"):
                    r.rows.append((lineno, line.split("\t")))
        return r

    def error(self, lineno, msg):
        return ParseError(self.path, lineno, msg)


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_graph(g: DynamicGraph, directory) -> None:
    """Write ``meta``, ``edges.tsv``, ``labels.tsv`` and (if ``d > 0``) ``features.tsv``.

    Only the first snapshot's features are written; the format stores
    static features.
    """
    out = Path(directory)
    out.mkdir(exist_ok=True)
    (out / "meta").write_text(f"n={g.n} T={g.T} d={g.d}\n", encoding="utf-8")
    with open(out / "edges.tsv", "w", encoding="utf-8") as fh:
        for i, s in enumerate(g.snapshots):
            for (u, v), w in zip(s.edges.tolist(), s.weights.tolist()):
                fh.write(f"{i}\t{u}\t{v}\t{_fmt(w)}\n")
    with open(out / "labels.tsv", "w", encoding="utf-8") as fh:
        for i, lab in enumerate(g.labels.tolist()):
            fh.write(f"{i}\t{lab}\n")
    if g.d:
        with open(out / "features.tsv", "w", encoding="utf-8") as fh:
            for u, row in enumerate(g.snapshots[0].features.tolist()):
                fh.write("\t".join([str(u)] + [_fmt(x) for x in row]) + "\n")


def _parse_int(reader, lineno, text, what):
    try:
        return int(text)
    except ValueError:
        raise reader.error(lineno, f"{what} is not an integer: {text!r}") from None


def read_graph(directory) -> DynamicGraph:
    src = Path(directory)
    meta_path = src / "meta"
    meta: dict[str, int] = {}
    with open(meta_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            for tok in line.split():
                key, sep, val = tok.partition("=")
                if not sep:
                    raise ParseError(meta_path, lineno, f"expected key=value, got {tok!r}")
                try:
                    meta[key] = int(val)
                except ValueError:
                    raise ParseError(meta_path, lineno, f"{key} is not an integer: {val!r}") from None
    for key in ("n", "T", "d"):
        if key not in meta:
            raise ParseError(meta_path, 1, f"missing {key}=")
    n, T, d = meta["n"], meta["T"], meta["d"]

    edges: list[list[tuple[int, int]]] = [[] for _ in range(T)]
    weights: list[list[float]] = [[] for _ in range(T)]
    seen: list[set] = [set() for _ in range(T)]
    reader = _Reader.open(src / "edges.tsv")
    for lineno, cols in reader.rows:
        if len(cols) != 4:
            raise reader.error(lineno, f"expected 4 columns (t, u, v, w), got {len(cols)}")
        t = _parse_int(reader, lineno, cols[0], "t")
        u = _parse_int(reader, lineno, cols[1], "u")
        v = _parse_int(reader, lineno, cols[2], "v")
        try:
            w = float(cols[3])
        except ValueError:
            raise reader.error(lineno, f"weight is not a number: {cols[3]!r}") from None
        if not 0 <= t < T:
            raise reader.error(lineno, f"timestamp {t} out of range [0, {T})")
        if not (0 <= u < n and 0 <= v < n):
            raise reader.error(lineno, f"vertex id out of range [0, {n}): ({u}, {v})")
        if u == v:
            raise reader.error(lineno, f"self-loop on vertex {u}")
        if not (w > 0 and np.isfinite(w)):
            raise reader.error(lineno, f"weight must be positive, got {cols[3]}")
        key = (min(u, v), max(u, v))
        if key in seen[t]:
            raise reader.error(lineno, f"duplicate edge {key} in snapshot {t}")
        seen[t].add(key)
        edges[t].append((u, v))
        weights[t].append(w)

    feats = np.zeros((n, d))
    feat_path = src / "features.tsv"
    if d:
        reader = _Reader.open(feat_path)
        filled = np.zeros(n, dtype=bool)
        for lineno, cols in reader.rows:
            if len(cols) != d + 1:
                raise reader.error(lineno, f"expected {d + 1} columns, got {len(cols)}")
            u = _parse_int(reader, lineno, cols[0], "u")
            if not 0 <= u < n:
                raise reader.error(lineno, f"vertex id out of range [0, {n}): {u}")
            if filled[u]:
                raise reader.error(lineno, f"duplicate feature row for vertex {u}")
            try:
                feats[u] = [float(x) for x in cols[1:]]
            except ValueError:
                raise reader.error(lineno, "non-numeric feature value") from None
            filled[u] = True
        if not filled.all():
            missing = int(np.flatnonzero(~filled)[0])
            raise ParseError(feat_path, len(reader.rows), f"no feature row for vertex {missing}")

    labels = np.full(T, -1)
    reader = _Reader.open(src / "labels.tsv")
    for lineno, cols in reader.rows:
        if len(cols) != 2:
            raise reader.error(lineno, f"expected 2 columns (t, label), got {len(cols)}")
        t = _parse_int(reader, lineno, cols[0], "t")
        lab = _parse_int(reader, lineno, cols[1], "label")
        if not 0 <= t < T:
            raise reader.error(lineno, f"timestamp {t} out of range [0, {T})")
        if lab not in (0, 1):
            raise reader.error(lineno, f"label must be 0 or 1, got {lab}")
        if labels[t] >= 0:
            raise reader.error(lineno, f"duplicate label for t={t}")
        labels[t] = lab
    if (labels < 0).any():
        missing = int(np.flatnonzero(labels < 0)[0])
        raise ParseError(src / "labels.tsv", len(reader.rows), f"no label for t={missing}")

    snaps = tuple(Snapshot(t, n, np.array(edges[t], dtype=np.int64).reshape(-1, 2), weights[t], feats) for t in range(T))
    return DynamicGraph(n, snaps, labels)
