"""Scoring windows, AUC, and tab-separated exports for plotting tools."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

from .errors import UndefinedMetricError
from .model import ModelParams, WindowDataset, forward_batch

__all__ = ["EvalReport", "auc", "minmax_scale", "node_importance", "evaluate", "export", "read_scores"]


def auc(scores, labels) -> float:
    """Area under the ROC curve via the Mann-Whitney rank sum; ties count one half."""
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    labels = np.asarray(labels).reshape(-1)
    if scores.shape != labels.shape:
        raise ValueError(f"{scores.size} scores but {labels.size} labels")
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError(f"AUC needs both classes, got {n_pos} positives and {n_neg} negatives")
    ranks = rankdata(scores)  # average ranks for ties
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def minmax_scale(scores) -> np.ndarray:
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    if s.size == 0:
        raise ValueError("cannot scale an empty score vector")
    lo, hi = s.min(), s.max()
    if hi == lo:
        return np.full_like(s, 0.5)
    return (s - lo) / (hi - lo)


@dataclass(eq=False)
class EvalReport:
    """Per-window outputs, all index-aligned with ``t``.

    ``node_attention`` holds, for each window, the pooling weights of its
    current snapshot; ``time_attention`` the ``k + 1`` temporal weights
    (oldest first). Either is ``None`` when the variant has no such layer.
    """

    t: np.ndarray
    scores: np.ndarray
    labels: np.ndarray
    auc: float
    node_attention: np.ndarray | None
    time_attention: np.ndarray | None
    embeddings: np.ndarray
    k: int = 0

    def __len__(self) -> int:
        return len(self.t)


def evaluate(params: ModelParams, dataset: WindowDataset, indices=None, batch_size: int = 256) -> EvalReport:
    """Score windows in eval mode. ``auc`` is NaN when the labels are single-class."""
    cfg = params.config
    idx = np.arange(dataset.n_windows) if indices is None else np.asarray(indices, dtype=np.intp)
    probs, node_att, time_att, emb = [], [], [], []
    for start in range(0, len(idx), batch_size):
        chunk = idx[start : start + batch_size]
        snaps, layout, _ = dataset.batch(chunk)
        res = forward_batch(params, dataset.adjacency(snaps), dataset.x[snaps], layout)
        probs.append(res.probabilities()[:, 0])
        emb.append(res.embeddings)
        if res.node_attention is not None:
            node_att.append(res.node_attention[layout[:, -1]])
        if res.time_attention is not None:
            time_att.append(res.time_attention)
    n = dataset.x.shape[1]
    labels = dataset.window_labels[idx]
    scores = np.concatenate(probs) if probs else np.zeros(0)
    try:
        value = auc(scores, labels)
    except UndefinedMetricError:
        value = float("nan")
    return EvalReport(
        t=dataset.targets[idx],
        scores=scores,
        labels=labels,
        auc=value,
        node_attention=np.concatenate(node_att) if node_att else (np.zeros((0, n)) if cfg.uses_attention_pool else None),
        time_attention=np.concatenate(time_att) if time_att else (np.zeros((0, cfg.k + 1)) if cfg.uses_time_attention else None),
        embeddings=np.concatenate(emb) if emb else np.zeros((0, cfg.mlp_in)),
        k=cfg.k,
    )


def node_importance(report: EvalReport) -> np.ndarray:
    """Mean pooling weight of each node across the report's windows."""
    if report.node_attention is None:
        raise ValueError("report carries no node attention (mean/max pooling variant)")
    if len(report.node_attention) == 0:
        raise ValueError("report has no windows")
    return report.node_attention.mean(axis=0)


def _fmt(x) -> str:
    return format(float(x), ".17g")


def _write(path: Path, header: list[str], rows) -> None:
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\t".join(header) + "\n")
            for row in rows:
                fh.write("\t".join(row) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def export(report: EvalReport, directory) -> dict[str, Path]:
    """Write ``scores.tsv``, ``node_attention.tsv``, ``time_attention.tsv`` and
    ``embeddings.tsv`` into ``directory``; returns the written paths.

    Files without data (empty report, or a variant lacking that layer) get
    the header line only.
    """
    out = Path(directory)
    if not out.is_dir():
        raise OSError(f"export directory does not exist: {out}")
    paths = {name: out / f"{name}.tsv" for name in ("scores", "node_attention", "time_attention", "embeddings")}

    _write(
        paths["scores"],
        ["t", "score", "label"],
        ([str(int(t)), _fmt(s), str(int(l))] for t, s, l in zip(report.t, report.scores, report.labels)),
    )

    node_rows = []
    if report.node_attention is not None and len(report.node_attention):
        node_rows = [[str(i), _fmt(w)] for i, w in enumerate(node_importance(report))]
    _write(paths["node_attention"], ["node", "mean_weight"], node_rows)

    time_rows = []
    if report.time_attention is not None and len(report.time_attention):
        mean = report.time_attention.mean(axis=0)
        std = report.time_attention.std(axis=0)
        k = report.time_attention.shape[1] - 1
        time_rows = [[str(j - k), _fmt(m), _fmt(s)] for j, (m, s) in enumerate(zip(mean, std))]
    _write(paths["time_attention"], ["offset", "mean", "stdev"], time_rows)

    dim = report.embeddings.shape[1] if report.embeddings.ndim == 2 else 0
    _write(
        paths["embeddings"],
        ["t"] + [f"e{j}" for j in range(dim)],
        ([str(int(t))] + [_fmt(v) for v in row] for t, row in zip(report.t, report.embeddings)),
    )
    return paths


def read_scores(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Parse a ``scores.tsv`` export back into ``(t, scores, labels)``."""
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()[1:]
    if not lines:
        return np.zeros(0, dtype=np.int64), np.zeros(0), np.zeros(0, dtype=np.int64)
    data = np.loadtxt(lines, delimiter="\t", ndmin=2)
    return data[:, 0].astype(np.int64), data[:, 1], data[:, 2].astype(np.int64)
