"""Synthetic dynamic graphs with planted, labeled events.

Every snapshot is an Erdos-Renyi graph with Gamma(2, 1/2) edge weights
(mean one). A timestamp is an event with probability ``event_prob``; the
chosen mechanism then perturbs the snapshots at the offsets listed in
``lead_offsets`` before it (``(0,)``: the event snapshot itself, ``(1,)``:
only the snapshot one step earlier).

Mechanisms
----------
densify_clique
    Pairs inside a fixed random set of ``clique_size`` vertices connect
    with probability ``base_edge_prob + boost`` (capped at one).
hub
    Pairs touching one fixed random vertex get the same boost.
shuffle
    Nothing is perturbed; labels carry no structural signal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .graph import DynamicGraph, Snapshot

__all__ = ["MECHANISMS", "GenSpec", "generate", "expected_separability"]

MECHANISMS = ("densify_clique", "hub", "shuffle")


@dataclass(frozen=True)
class GenSpec:
    n: int = 40
    T: int = 600
    base_edge_prob: float = 0.1
    event_prob: float = 0.1
    mechanism: str = "densify_clique"
    clique_size: int = 8
    boost: float = 0.8
    d: int = 4
    feature_noise: float = 1.0  # stdev of the static node features
    lead_offsets: tuple[int, ...] = (0,)
    seed: int = 0

    def __post_init__(self):
        if self.n < 2 or self.T < 1:
            raise ConfigError(f"need n >= 2 and T >= 1, got n={self.n}, T={self.T}")
        if not 0.0 < self.base_edge_prob < 1.0:
            raise ConfigError(f"base_edge_prob must lie in (0, 1), got {self.base_edge_prob}")
        if not 0.0 <= self.event_prob < 1.0:
            raise ConfigError(f"event_prob must lie in [0, 1), got {self.event_prob}")
        if self.mechanism not in MECHANISMS:
            raise ConfigError(f"mechanism must be one of {MECHANISMS}, got {self.mechanism!r}")
        if not 2 <= self.clique_size <= self.n:
            raise ConfigError(f"clique_size must lie in [2, n={self.n}], got {self.clique_size}")
        if not 0.0 <= self.boost <= 1.0:
            raise ConfigError(f"boost must lie in [0, 1], got {self.boost}")
        if self.d < 0 or self.feature_noise < 0:
            raise ConfigError("d and feature_noise must be non-negative")
        if not self.lead_offsets or min(self.lead_offsets) < 0:
            raise ConfigError(f"lead_offsets must be non-empty and non-negative, got {self.lead_offsets}")


def generate(spec: GenSpec) -> DynamicGraph:
    rng = np.random.default_rng(spec.seed)
    n = spec.n
    iu, ju = np.triu_indices(n, k=1)
    clique = np.sort(rng.choice(n, spec.clique_size, replace=False))
    hub = int(rng.integers(n))
    features = rng.normal(0.0, spec.feature_noise, size=(n, spec.d))
    labels = (rng.random(spec.T) < spec.event_prob).astype(np.int64)

    boosted = np.zeros(len(iu), dtype=bool)
    if spec.mechanism == "densify_clique":
        member = np.zeros(n, dtype=bool)
        member[clique] = True
        boosted = member[iu] & member[ju]
    elif spec.mechanism == "hub":
        boosted = (iu == hub) | (ju == hub)

    perturbed = np.zeros(spec.T, dtype=bool)
    if spec.mechanism != "shuffle":
        for off in spec.lead_offsets:
            hit = np.flatnonzero(labels) - off
            perturbed[hit[hit >= 0]] = True

    base = np.full(len(iu), spec.base_edge_prob)
    event = np.where(boosted, min(1.0, spec.base_edge_prob + spec.boost), spec.base_edge_prob)
    snaps = []
    for t in range(spec.T):
        u = rng.random(len(iu))
        w = rng.gamma(2.0, 0.5, size=len(iu))
        keep = u < (event if perturbed[t] else base)
        # gamma draws can underflow to exactly zero in principle
        w = np.maximum(w[keep], np.finfo(float).tiny)
        snaps.append(Snapshot(t, n, np.column_stack([iu[keep], ju[keep]]), w, features))
    return DynamicGraph(n, tuple(snaps), labels)


def expected_separability(spec: GenSpec) -> str:
    """Coarse difficulty tag: ``"trivial"``, ``"hard"`` or ``"null"``.

    Uses the z-score of the extra edges the mechanism adds against the
    binomial noise of the affected vertex pairs.
    """
    if spec.mechanism == "shuffle" or spec.boost == 0.0 or spec.event_prob == 0.0:
        return "null"
    p = spec.base_edge_prob
    pairs = math.comb(spec.clique_size, 2) if spec.mechanism == "densify_clique" else spec.n - 1
    lift = min(1.0, p + spec.boost) - p
    z = math.sqrt(pairs) * lift / math.sqrt(p * (1.0 - p))
    return "trivial" if z >= 6.0 else "hard"
