"""Finite-difference verification of the model's analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .graph import Snapshot, assemble_features, normalized_adjacency
from .model import VARIANTS, ModelConfig, ModelParams, forward_batch, init_params, weighted_loss

__all__ = ["GradcheckConfig", "TensorCheck", "relative_error", "toy_problem", "check_variant", "check_all"]


@dataclass(frozen=True)
class GradcheckConfig:
    n: int = 5
    d: int = 3
    hidden: int = 4
    h: int = 4
    k: int = 2
    windows: int = 3
    step: float = 1e-4
    floor: float = 1e-8  # denominator floor for entries that are ~0 on both sides
    tol: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        if not (2 <= self.n <= 8 and 1 <= self.h <= 8 and 1 <= self.hidden <= 8):
            raise ConfigError(f"gradcheck needs small dims (n <= 8, h <= 8), got n={self.n}, hidden={self.hidden}, h={self.h}")
        if self.d < 1 or self.k < 0 or self.windows < 2:
            raise ConfigError("gradcheck needs d >= 1, k >= 0 and at least two windows")
        if not self.step > 0 or not self.tol > 0:
            raise ConfigError("step and tol must be positive")


@dataclass(frozen=True)
class TensorCheck:
    variant: str
    name: str
    max_rel_error: float
    passed: bool


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8) -> float:
    """Largest entrywise ``|a - n| / max(|a|, |n|, floor)``."""
    a, n = np.asarray(analytic), np.asarray(numeric)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom)) if a.size else 0.0


def toy_problem(cfg: GradcheckConfig):
    """Random weighted snapshots and labels: ``(a_hat, x, layout, labels)``.

    Windows overlap so a snapshot feeds several windows; both classes occur.
    """
    rng = np.random.default_rng(cfg.seed)
    T = cfg.windows + cfg.k
    feats = rng.uniform(-1.0, 1.0, size=(cfg.n, cfg.d))
    iu, ju = np.triu_indices(cfg.n, k=1)
    snaps = []
    for t in range(T):
        keep = rng.random(len(iu)) < 0.6
        edges = np.column_stack([iu[keep], ju[keep]])
        snaps.append(Snapshot(t, cfg.n, edges, rng.uniform(0.5, 2.0, keep.sum()), feats))
    a_hat = np.stack([normalized_adjacency(s) for s in snaps])
    x = np.stack([assemble_features(s, "static") for s in snaps]) + rng.normal(0.0, 0.1, size=(T, cfg.n, cfg.d))
    layout = np.arange(cfg.windows)[:, None] + np.arange(cfg.k + 1)[None, :]
    labels = np.arange(cfg.windows) % 2
    return a_hat, x, layout, labels


def _loss_and_grads(params, problem, x_ratio):
    a_hat, x, layout, labels = problem
    res = forward_batch(params, a_hat, x, layout)
    value = weighted_loss(res.tape, res.scores, labels, x_ratio)
    return float(value.value[0, 0]), res.tape, value


def check_variant(variant: str, cfg: GradcheckConfig = GradcheckConfig()) -> list[TensorCheck]:
    """Compare analytic and 4-point central-difference gradients for every tensor."""
    problem = toy_problem(cfg)
    model_cfg = ModelConfig(d_in=cfg.d, hidden=cfg.hidden, h=cfg.h, k=cfg.k, variant=variant)
    params = init_params(model_cfg, cfg.seed)
    # move biases off zero so every path carries a nonzero gradient
    rng = np.random.default_rng([cfg.seed, 7])
    tensors = {name: arr + rng.uniform(-0.3, 0.3, arr.shape) for name, arr in params.tensors.items()}
    params = ModelParams(model_cfg, tensors)
    x_ratio = float(np.mean(problem[3]))

    _, tape, value = _loss_and_grads(params, problem, x_ratio)
    grads = tape.backward(value)

    def f():
        return _loss_and_grads(params, problem, x_ratio)[0]

    out = []
    hstep = cfg.step
    for name, arr in params.tensors.items():
        numeric = np.zeros_like(arr)
        for idx in np.ndindex(arr.shape):
            old = arr[idx]
            vals = []
            for off in (2.0, 1.0, -1.0, -2.0):
                arr[idx] = old + off * hstep
                vals.append(f())
            arr[idx] = old
            numeric[idx] = (-vals[0] + 8.0 * vals[1] - 8.0 * vals[2] + vals[3]) / (12.0 * hstep)
        err = relative_error(grads[name], numeric, cfg.floor)
        out.append(TensorCheck(variant, name, err, err < cfg.tol))
    return out


def check_all(cfg: GradcheckConfig = GradcheckConfig(), variants=VARIANTS) -> list[TensorCheck]:
    return [c for v in variants for c in check_variant(v, cfg)]
