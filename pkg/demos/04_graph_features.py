"""
Snapshot features and normalization
===================================

The building blocks used before any learning happens: the renormalized
adjacency, and the degree / betweenness / clustering features that are
recomputed on every snapshot.
"""

import numpy as np

from dyged.graph import Snapshot, betweenness_feature, clustering_feature, degree_feature, dynamic_features, normalized_adjacency

# a path 0-1-2 plus a triangle 2-3-4
edges = [[0, 1], [1, 2], [2, 3], [3, 4], [2, 4]]
s = Snapshot(0, 5, edges, np.ones(len(edges)), np.zeros((5, 0)))

np.set_printoptions(precision=3, suppress=True)
print("normalized adjacency with self-loops:")
print(normalized_adjacency(s))
print("degree     ", degree_feature(s))
print("betweenness", betweenness_feature(s))
print("clustering ", clustering_feature(s))

# the model sees these standardized per snapshot
print("standardized:")
print(dynamic_features(s))
