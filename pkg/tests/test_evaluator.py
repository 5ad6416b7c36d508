import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import brute_force_auc

from dyged.errors import UndefinedMetricError
from dyged.evaluator import EvalReport, auc, evaluate, export, minmax_scale, node_importance, read_scores
from dyged.model import ModelConfig, WindowDataset, init_params
from dyged.synthgen import GenSpec, generate


@st.composite
def scored_labels(draw, max_size=200):
    n = draw(st.integers(2, max_size))
    labels = draw(st.lists(st.integers(0, 1), min_size=n, max_size=n))
    if len(set(labels)) < 2:
        labels[0], labels[-1] = 0, 1
    # a small grid of values forces plenty of ties
    scores = draw(st.lists(st.integers(0, 6).map(lambda v: v / 6), min_size=n, max_size=n))
    return np.array(scores), np.array(labels)


class TestAuc:
    def test_documented_example(self):
        assert auc([0.9, 0.8, 0.3, 0.1], [1, 0, 1, 0]) == 0.75

    def test_perfect_and_reversed(self):
        assert auc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0
        assert auc([0.9, 0.8, 0.2, 0.1], [0, 0, 1, 1]) == 0.0

    def test_all_tied(self):
        assert auc(np.full(7, 0.3), [0, 1, 0, 1, 1, 0, 0]) == 0.5

    def test_single_class(self):
        with pytest.raises(UndefinedMetricError, match="0 negatives"):
            auc([0.1, 0.2], [1, 1])

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            auc([0.1, 0.2], [1])

    @settings(max_examples=100, deadline=None)
    @given(scored_labels())
    def test_matches_brute_force_exactly(self, data):
        scores, labels = data
        assert auc(scores, labels) == brute_force_auc(scores, labels)

    @settings(max_examples=100, deadline=None)
    @given(scored_labels())
    def test_minmax_invariant_exactly(self, data):
        scores, labels = data
        assert auc(minmax_scale(scores), labels) == auc(scores, labels)


class TestMinmax:
    def test_examples(self):
        assert minmax_scale([2, 4, 6]).tolist() == [0.0, 0.5, 1.0]
        assert minmax_scale([3.3, 3.3, 3.3]).tolist() == [0.5, 0.5, 0.5]

    def test_empty(self):
        with pytest.raises(ValueError):
            minmax_scale([])

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=50))
    def test_range_and_order(self, xs):
        s = minmax_scale(xs)
        assert np.all((s >= 0) & (s <= 1))
        order = np.argsort(xs, kind="stable")
        assert np.all(np.diff(s[order]) >= 0)


def report(n_windows=3, n=4, k=2, seed=0):
    rng = np.random.default_rng(seed)
    node = rng.dirichlet(np.ones(n), size=n_windows)
    time = rng.dirichlet(np.ones(k + 1), size=n_windows)
    return EvalReport(
        t=np.arange(k, k + n_windows),
        scores=rng.random(n_windows),
        labels=np.array([0, 1, 0][:n_windows]),
        auc=0.5,
        node_attention=node,
        time_attention=time,
        embeddings=rng.normal(size=(n_windows, 5)),
        k=k,
    )


class TestNodeImportance:
    def test_single_window(self):
        r = report(n_windows=1)
        assert np.array_equal(node_importance(r), r.node_attention[0])

    def test_uniform(self):
        r = report()
        r.node_attention = np.full((3, 4), 0.25)
        assert node_importance(r).tolist() == [0.25] * 4

    def test_two_window_average(self):
        r = report(n_windows=2)
        r.node_attention = np.array([[0.1, 0.2, 0.3, 0.4], [0.3, 0.2, 0.1, 0.4]])
        np.testing.assert_allclose(node_importance(r), [0.2, 0.2, 0.2, 0.4])

    def test_no_attention(self):
        r = report()
        r.node_attention = None
        with pytest.raises(ValueError):
            node_importance(r)


class TestExport:
    def test_files_and_shapes(self, tmp_path):
        r = report(k=2)
        paths = export(r, tmp_path)
        assert set(paths) == {"scores", "node_attention", "time_attention", "embeddings"}
        time_rows = paths["time_attention"].read_text().splitlines()
        assert time_rows[0] == "offset\tmean\tstdev"
        assert [row.split("\t")[0] for row in time_rows[1:]] == ["-2", "-1", "0"]
        assert len(paths["node_attention"].read_text().splitlines()) == 5
        emb = np.loadtxt(paths["embeddings"], skiprows=1, ndmin=2)
        assert np.array_equal(emb[:, 1:], r.embeddings)

    def test_scores_round_trip_exact(self, tmp_path):
        r = report()
        paths = export(r, tmp_path)
        t, scores, labels = read_scores(paths["scores"])
        assert np.array_equal(t, r.t)
        assert scores.tobytes() == r.scores.tobytes()
        assert auc(scores, labels) == auc(r.scores, r.labels)

    def test_empty_report_headers_only(self, tmp_path):
        r = EvalReport(np.zeros(0, int), np.zeros(0), np.zeros(0, int), float("nan"), np.zeros((0, 4)), np.zeros((0, 3)), np.zeros((0, 5)), 2)
        paths = export(r, tmp_path)
        for p in paths.values():
            assert len(p.read_text().splitlines()) == 1
        assert read_scores(paths["scores"])[1].size == 0

    def test_variant_without_attention(self, tmp_path):
        r = report()
        r.node_attention = None
        r.time_attention = None
        paths = export(r, tmp_path)
        assert paths["node_attention"].read_text() == "node\tmean_weight\n"
        assert paths["time_attention"].read_text() == "offset\tmean\tstdev\n"

    def test_missing_directory(self, tmp_path):
        with pytest.raises(OSError, match="absent"):
            export(report(), tmp_path / "absent")


class TestEvaluate:
    def test_aligned_outputs(self):
        g = generate(GenSpec(n=12, T=40, clique_size=4, seed=0))
        ds = WindowDataset.from_graph(g, 2, "both")
        params = init_params(ModelConfig(d_in=ds.d_in, hidden=4, h=4, k=2), 0)
        r = evaluate(params, ds, batch_size=7)
        assert len(r) == ds.n_windows == 38
        assert r.t.tolist() == list(range(2, 40))
        assert r.node_attention.shape == (38, 12) and r.time_attention.shape == (38, 3)
        np.testing.assert_allclose(r.node_attention.sum(axis=1), 1.0, atol=1e-12)
        full = evaluate(params, ds)
        np.testing.assert_allclose(r.scores, full.scores, atol=1e-14)

    def test_single_class_gives_nan(self):
        g = generate(GenSpec(n=8, T=20, clique_size=3, event_prob=0.0, seed=0))
        ds = WindowDataset.from_graph(g, 1, "both")
        params = init_params(ModelConfig(d_in=ds.d_in, hidden=4, h=4, k=1), 0)
        assert np.isnan(evaluate(params, ds).auc)
