"""Adam, mini-batch training, and growing-window nested cross-validation."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .errors import ConfigError, ContractError, DygedError
from .evaluator import EvalReport, auc, evaluate
from .graph import FEATURE_MODES
from .model import VARIANTS, ModelConfig, ModelParams, WindowDataset, forward_batch, init_params, weighted_loss

__all__ = [
    "TrainConfig",
    "AdamState",
    "FoldSpec",
    "adam_step",
    "make_folds",
    "positive_ratio",
    "train",
    "ExperimentResult",
    "run_experiment",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.005
    dropout: float = 0.2
    batch_size: int = 100
    epochs: int = 100
    k: int = 3
    seed: int = 0
    variant: str = "full"
    feature_mode: str = "both"
    hidden: int = 64
    h: int = 64
    mlp_layers: int = 2
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if not self.lr >= 0:
            raise ConfigError(f"lr must be >= 0, got {self.lr}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must lie in [0, 1), got {self.dropout}")
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; valid variants: {', '.join(VARIANTS)}")
        if self.feature_mode not in FEATURE_MODES:
            raise ConfigError(f"feature_mode must be one of {FEATURE_MODES}, got {self.feature_mode!r}")
        if self.k < 0:
            raise ConfigError(f"k must be >= 0, got {self.k}")

    def model_config(self, d_in: int) -> ModelConfig:
        return ModelConfig(d_in=d_in, hidden=self.hidden, h=self.h, k=self.k, mlp_layers=self.mlp_layers, variant=self.variant)


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0

    @classmethod
    def zeros_like(cls, params: dict[str, np.ndarray]) -> "AdamState":
        return cls({k: np.zeros_like(p) for k, p in params.items()}, {k: np.zeros_like(p) for k, p in params.items()})


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamState, cfg: TrainConfig):
    """One bias-corrected Adam update. Returns new ``(params, state)``; inputs are not modified."""
    if params.keys() != grads.keys() or params.keys() != state.m.keys():
        raise ContractError("params, grads and Adam moments must share the same names")
    step = state.step + 1
    new_p, new_m, new_v = {}, {}, {}
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape or state.m[name].shape != p.shape:
            raise ContractError(f"{name}: shape mismatch between param {p.shape}, grad {g.shape}, moment {state.m[name].shape}")
        m = cfg.beta1 * state.m[name] + (1.0 - cfg.beta1) * g
        v = cfg.beta2 * state.v[name] + (1.0 - cfg.beta2) * g * g
        m_hat = m / (1.0 - cfg.beta1**step)
        v_hat = v / (1.0 - cfg.beta2**step)
        new_p[name] = p - cfg.lr * m_hat / (np.sqrt(v_hat) + cfg.eps)
        new_m[name], new_v[name] = m, v
    return new_p, AdamState(new_m, new_v, step)


@dataclass(frozen=True)
class FoldSpec:
    """Contiguous (train, test) index ranges over windows, in time order."""

    folds: tuple[tuple[range, range], ...]

    def __iter__(self):
        return iter(self.folds)

    def __len__(self) -> int:
        return len(self.folds)


def make_folds(n_windows: int, p: int) -> FoldSpec:
    """Growing-window nested folds.

    The first half of the windows is training-only; the rest is cut into
    ``p`` contiguous test blocks (sizes differ by at most one). Each fold
    trains on every window before its test block.

    >>> [(list(tr), list(te)) for tr, te in make_folds(10, 2)][1]
    ([0, 1, 2, 3, 4, 5, 6, 7], [8, 9])
    """
    if p < 2:
        raise ConfigError(f"p must be >= 2, got {p}")
    start = n_windows // 2
    if n_windows - start < p or start < 1:
        raise ConfigError(f"{n_windows} windows are too few for p={p} folds")
    blocks = np.array_split(np.arange(start, n_windows), p)
    return FoldSpec(tuple((range(0, int(b[0])), range(int(b[0]), int(b[-1]) + 1)) for b in blocks))


def positive_ratio(labels) -> float:
    labels = np.asarray(labels)
    x = float(labels.mean()) if labels.size else 0.0
    if not 0.0 < x < 1.0:
        raise ConfigError(f"training windows must contain both classes; positive ratio x={x:g}")
    return x


def train(dataset: WindowDataset, cfg: TrainConfig, indices=None, params: ModelParams | None = None):
    """Fit a model on the windows ``indices`` (default: all).

    Returns the final parameters and the per-epoch mean training loss.
    """
    if dataset.k != cfg.k:
        raise ConfigError(f"dataset built with k={dataset.k} but config has k={cfg.k}")
    idx = np.arange(dataset.n_windows) if indices is None else np.asarray(indices, dtype=np.intp)
    x = positive_ratio(dataset.window_labels[idx])
    if params is None:
        params = init_params(cfg.model_config(dataset.d_in), cfg.seed)
    rng = np.random.default_rng([cfg.seed, 1])
    tensors = {k: v.copy() for k, v in params.tensors.items()}
    state = AdamState.zeros_like(tensors)
    trace = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(idx)
        total = 0.0
        for start in range(0, len(order), cfg.batch_size):
            chunk = order[start : start + cfg.batch_size]
            snaps, layout, labels = dataset.batch(chunk)
            res = forward_batch(
                ModelParams(params.config, tensors),
                dataset.adjacency(snaps),
                dataset.x[snaps],
                layout,
                train=True,
                rng=rng,
                dropout=cfg.dropout,
            )
            value = weighted_loss(res.tape, res.scores, labels, x)
            grads = res.tape.backward(value)
            tensors, state = adam_step(tensors, {k: grads[k] for k in tensors}, state, cfg)
            total += float(value.value[0, 0]) * len(chunk)
        trace.append(total / len(idx))
        log.debug("epoch %d loss %.6f", epoch, trace[-1])
    return ModelParams(params.config, tensors), trace


@dataclass(eq=False)
class ExperimentResult:
    reports: list[EvalReport]
    fold_ids: list[tuple[int, int]]  # (fold, repetition)
    config: dict = field(default_factory=dict)

    @property
    def aucs(self) -> np.ndarray:
        return np.array([r.auc for r in self.reports])

    @property
    def mean_auc(self) -> float:
        return float(np.mean(self.aucs))

    @property
    def std_auc(self) -> float:
        return float(np.std(self.aucs))


def _run_fold(dataset, cfg, train_idx, test_idx, fold, rep):
    seed = int(np.random.SeedSequence([cfg.seed, fold, rep]).generate_state(1)[0])
    fold_cfg = replace(cfg, seed=seed)
    try:
        params, _ = train(dataset, fold_cfg, train_idx)
        report = evaluate(params, dataset, test_idx)
        if np.isnan(report.auc):
            auc(report.scores, report.labels)  # raises with the class counts
    except DygedError as exc:
        raise type(exc)(f"fold {fold}, repetition {rep}: {exc}") from exc
    return report


def run_experiment(dataset: WindowDataset, cfg: TrainConfig, p: int, repetitions: int = 1, jobs: int = 1) -> ExperimentResult:
    """Train and score every fold ``repetitions`` times; AUC per (fold, repetition)."""
    if repetitions < 1:
        raise ConfigError(f"repetitions must be >= 1, got {repetitions}")
    folds = make_folds(dataset.n_windows, p)
    tasks = [
        (dataset, cfg, np.array(tr), np.array(te), f, r)
        for r in range(repetitions)
        for f, (tr, te) in enumerate(folds)
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            reports = list(pool.map(_run_fold, *zip(*tasks)))
    else:
        reports = [_run_fold(*t) for t in tasks]
    echo = asdict(cfg) | {"p": p, "repetitions": repetitions}
    return ExperimentResult(reports, [(t[4], t[5]) for t in tasks], echo)
