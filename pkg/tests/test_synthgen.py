import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dyged.errors import ConfigError
from dyged.graph import write_graph
from dyged.synthgen import GenSpec, expected_separability, generate


class TestGenerate:
    def test_no_events(self):
        g = generate(GenSpec(n=10, T=50, clique_size=4, event_prob=0.0))
        assert not g.labels.any()

    def test_deterministic_bytes(self, tmp_path):
        spec = GenSpec(n=12, T=30, clique_size=4, seed=9)
        write_graph(generate(spec), tmp_path / "a")
        write_graph(generate(spec), tmp_path / "b")
        for name in ("meta", "edges.tsv", "labels.tsv", "features.tsv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_static_features_fixed(self):
        g = generate(GenSpec(n=10, T=5, clique_size=4, d=3, feature_noise=2.0))
        for s in g.snapshots:
            assert np.array_equal(s.features, g.snapshots[0].features)
        assert g.d == 3

    def test_weights_unit_mean(self):
        g = generate(GenSpec(n=40, T=100, event_prob=0.0, seed=1))
        w = np.concatenate([s.weights for s in g.snapshots])
        assert np.all(w > 0)
        # Gamma(2, 1/2) has mean 1 and variance 1/2
        assert abs(w.mean() - 1.0) < 4 * np.sqrt(0.5 / len(w))

    def test_clique_densifies_on_events(self):
        g = generate(GenSpec(n=40, T=400, seed=2))
        m = np.array([s.m for s in g.snapshots])
        pos, neg = m[g.labels == 1], m[g.labels == 0]
        # 28 clique pairs gain 0.8 probability: about 22 extra edges
        assert 18 < pos.mean() - neg.mean() < 27

    def test_hub_raises_one_degree(self):
        g = generate(GenSpec(n=30, T=200, mechanism="hub", seed=3))
        deg = np.zeros((g.T, g.n))
        for t, s in enumerate(g.snapshots):
            np.add.at(deg[t], s.edges.ravel(), 1)
        gap = deg[g.labels == 1].mean(axis=0) - deg[g.labels == 0].mean(axis=0)
        assert gap.max() > 15
        assert np.sort(gap)[-2] < 3

    def test_shuffle_has_no_signal(self):
        g = generate(GenSpec(n=40, T=400, mechanism="shuffle", seed=4))
        m = np.array([s.m for s in g.snapshots])
        diff = m[g.labels == 1].mean() - m[g.labels == 0].mean()
        assert abs(diff) < 4.0

    def test_lead_in_perturbs_previous_snapshot(self):
        g = generate(GenSpec(n=40, T=400, lead_offsets=(1,), seed=5))
        m = np.array([s.m for s in g.snapshots])
        lab = g.labels
        before = np.zeros_like(lab)
        before[:-1] = lab[1:]
        only_before = (before == 1) & (lab == 0)
        quiet = (before == 0) & (lab == 0)
        assert m[only_before].mean() - m[quiet].mean() > 15
        assert abs(m[(lab == 1) & (before == 0)].mean() - m[quiet].mean()) < 5

    @settings(max_examples=20, deadline=None)
    @given(st.integers(3, 15), st.integers(1, 30), st.floats(0.05, 0.95), st.integers(0, 1000))
    def test_snapshots_valid(self, n, T, p, seed):
        g = generate(GenSpec(n=n, T=T, base_edge_prob=p, clique_size=min(3, n), seed=seed))
        assert g.T == T and g.n == n
        for s in g.snapshots:
            assert np.all(s.edges[:, 0] != s.edges[:, 1])
            assert np.all(s.weights > 0)

    def test_label_rate_within_binomial_bound(self):
        spec = GenSpec(n=5, T=5000, clique_size=3, event_prob=0.1, seed=6)
        g = generate(spec)
        sigma = np.sqrt(0.1 * 0.9 / spec.T)
        assert abs(g.labels.mean() - 0.1) < 3 * sigma


class TestSpec:
    @pytest.mark.parametrize(
        "kw",
        [
            dict(n=1),
            dict(base_edge_prob=0.0),
            dict(event_prob=1.0),
            dict(mechanism="teleport"),
            dict(clique_size=50),
            dict(boost=1.5),
            dict(lead_offsets=()),
            dict(feature_noise=-1.0),
        ],
    )
    def test_rejects(self, kw):
        with pytest.raises(ConfigError):
            GenSpec(**kw)

    def test_separability(self):
        assert expected_separability(GenSpec()) == "trivial"
        assert expected_separability(GenSpec(mechanism="shuffle")) == "null"
        assert expected_separability(GenSpec(boost=0.0)) == "null"
        assert expected_separability(GenSpec(clique_size=3, boost=0.1)) == "hard"
