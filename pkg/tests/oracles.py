"""Independent brute-force references shared by the unit and acceptance tests."""

import itertools

import numpy as np


def exhaustive_betweenness(n, edges):
    """Enumerate every simple path, keep the shortest per pair, count interior visits."""
    adj = {v: set() for v in range(n)}
    for u, v in edges:
        adj[u].add(v)
        adj[v].add(u)
    score = np.zeros(n)
    for s, t in itertools.combinations(range(n), 2):
        paths = []

        def walk(path):
            if path[-1] == t:
                paths.append(list(path))
                return
            for w in adj[path[-1]]:
                if w not in path:
                    path.append(w)
                    walk(path)
                    path.pop()

        walk([s])
        if not paths:
            continue
        shortest = min(len(p) for p in paths)
        best = [p for p in paths if len(p) == shortest]
        for p in best:
            for v in p[1:-1]:
                score[v] += 1.0 / len(best)
    if n < 3:
        return score
    return score / ((n - 1) * (n - 2) / 2.0)


def exhaustive_clustering(n, edges):
    es = {frozenset(e) for e in map(tuple, edges)}
    out = np.zeros(n)
    for v in range(n):
        nb = [u for u in range(n) if frozenset((u, v)) in es]
        if len(nb) < 2:
            continue
        closed = sum(frozenset((a, b)) in es for a, b in itertools.combinations(nb, 2))
        out[v] = closed / (len(nb) * (len(nb) - 1) / 2)
    return out


def brute_force_auc(scores, labels):
    pos = [s for s, l in zip(scores, labels) if l == 1]
    neg = [s for s, l in zip(scores, labels) if l == 0]
    total = 0.0
    for p in pos:
        for q in neg:
            total += 1.0 if p > q else 0.5 if p == q else 0.0
    return total / (len(pos) * len(neg))
