import numpy as np
import pytest

from dyged.errors import ConfigError, ContractError
from dyged.model import WindowDataset, init_params
from dyged.synthgen import GenSpec, generate
from dyged.trainer import AdamState, TrainConfig, adam_step, make_folds, positive_ratio, run_experiment, train

SMALL = dict(h=8, hidden=8, epochs=2, batch_size=50)


@pytest.fixture(scope="module")
def trivial():
    return WindowDataset.from_graph(generate(GenSpec(n=20, T=120, clique_size=8, seed=1)), 3, "both")


class TestAdam:
    CFG = TrainConfig()

    def test_zero_gradient_keeps_params_and_decays_moments(self):
        p = {"w": np.array([[1.0, -2.0]])}
        state = AdamState({"w": np.array([[0.5, 0.5]])}, {"w": np.array([[0.25, 0.25]])}, step=3)
        new, st = adam_step(p, {"w": np.zeros((1, 2))}, state, self.CFG)
        m_hat = 0.9 * 0.5 / (1 - 0.9**4)
        v_hat = 0.999 * 0.25 / (1 - 0.999**4)
        # the update is driven only by the remaining momentum
        np.testing.assert_allclose(new["w"], p["w"] - 0.005 * m_hat / (np.sqrt(v_hat) + 1e-8))
        np.testing.assert_allclose(st.m["w"], 0.45)
        np.testing.assert_allclose(st.v["w"], 0.24975)

    def test_zero_gradient_from_fresh_state(self):
        p = {"w": np.ones((2, 2))}
        new, st = adam_step(p, {"w": np.zeros((2, 2))}, AdamState.zeros_like(p), self.CFG)
        assert np.array_equal(new["w"], p["w"])
        assert st.step == 1

    def test_first_step_moves_lr(self):
        p = {"w": np.zeros((3, 2))}
        g = np.array([[3.0, -0.2], [1e-3, 50.0], [-7.0, 1.0]])
        new, _ = adam_step(p, {"w": g}, AdamState.zeros_like(p), self.CFG)
        np.testing.assert_allclose(new["w"], -0.005 * np.sign(g), rtol=1e-4)

    def test_inputs_untouched(self):
        p = {"w": np.ones((1, 1))}
        state = AdamState.zeros_like(p)
        adam_step(p, {"w": np.ones((1, 1))}, state, self.CFG)
        assert p["w"][0, 0] == 1.0 and state.m["w"][0, 0] == 0.0 and state.step == 0

    def test_mismatch(self):
        p = {"w": np.ones((1, 2))}
        with pytest.raises(ContractError):
            adam_step(p, {"v": np.ones((1, 2))}, AdamState.zeros_like(p), self.CFG)
        with pytest.raises(ContractError):
            adam_step(p, {"w": np.ones((2, 1))}, AdamState.zeros_like(p), self.CFG)


class TestTrainConfig:
    def test_defaults(self):
        cfg = TrainConfig()
        assert (cfg.lr, cfg.dropout, cfg.batch_size) == (0.005, 0.2, 100)
        assert (cfg.beta1, cfg.beta2, cfg.eps) == (0.9, 0.999, 1e-8)

    @pytest.mark.parametrize(
        "kw", [dict(lr=-1.0), dict(batch_size=0), dict(epochs=0), dict(dropout=1.0), dict(variant="x"), dict(feature_mode="x"), dict(k=-1)]
    )
    def test_rejects(self, kw):
        with pytest.raises(ConfigError):
            TrainConfig(**kw)


class TestFolds:
    def test_documented_example(self):
        folds = [(list(tr), list(te)) for tr, te in make_folds(10, 2)]
        assert folds == [([0, 1, 2, 3, 4], [5, 6, 7]), ([0, 1, 2, 3, 4, 5, 6, 7], [8, 9])]

    @pytest.mark.parametrize("n,p", [(10, 2), (11, 3), (100, 5), (7, 3), (600, 4)])
    def test_partition_and_no_leakage(self, n, p):
        folds = make_folds(n, p)
        assert len(folds) == p
        tests = [i for _, te in folds for i in te]
        assert tests == list(range(n // 2, n))
        sizes = [len(te) for _, te in folds]
        assert max(sizes) - min(sizes) <= 1
        for tr, te in folds:
            assert max(tr) < min(te)
            assert not set(tr) & set(te)
            assert list(tr) == list(range(min(te)))

    def test_too_few(self):
        with pytest.raises(ConfigError):
            make_folds(1, 2)
        assert len(make_folds(3, 2)) == 2
        with pytest.raises(ConfigError):
            make_folds(10, 1)


class TestTrain:
    def test_single_class_names_ratio(self, trivial):
        idx = np.flatnonzero(trivial.window_labels == 0)
        with pytest.raises(ConfigError, match="x=0"):
            train(trivial, TrainConfig(k=3, **SMALL), idx)

    def test_positive_ratio(self):
        assert positive_ratio([0, 1, 0, 0]) == 0.25
        with pytest.raises(ConfigError):
            positive_ratio([1, 1])

    def test_zero_lr_keeps_params(self, trivial):
        cfg = TrainConfig(lr=0.0, **SMALL)
        start = init_params(cfg.model_config(trivial.d_in), cfg.seed)
        params, trace = train(trivial, cfg)
        assert len(trace) == 2
        for name in start.tensors:
            assert np.array_equal(params[name], start[name])

    def test_deterministic(self, trivial):
        cfg = TrainConfig(seed=5, **SMALL)
        a, ta = train(trivial, cfg)
        b, tb = train(trivial, cfg)
        assert ta == tb
        for name in a.tensors:
            assert a[name].tobytes() == b[name].tobytes()

    def test_seed_matters(self, trivial):
        a, _ = train(trivial, TrainConfig(seed=1, **SMALL))
        b, _ = train(trivial, TrainConfig(seed=2, **SMALL))
        assert not np.array_equal(a["gcn.W0"], b["gcn.W0"])

    def test_k_mismatch(self, trivial):
        with pytest.raises(ConfigError, match="k=3"):
            train(trivial, TrainConfig(k=2, **SMALL))

    def test_loss_finite_and_decreasing_overall(self, trivial):
        params, trace = train(trivial, TrainConfig(h=16, hidden=16, epochs=40, seed=0))
        assert all(np.isfinite(trace))
        assert trace[-1] < trace[0]


class TestExperiment:
    def test_report_count_and_reproducible(self, trivial):
        cfg = TrainConfig(**SMALL)
        a = run_experiment(trivial, cfg, p=2)
        b = run_experiment(trivial, cfg, p=2)
        assert len(a.reports) == 2 and a.fold_ids == [(0, 0), (1, 0)]
        assert a.mean_auc == b.mean_auc and a.std_auc == b.std_auc
        assert a.config["p"] == 2 and a.config["lr"] == 0.005

    def test_repetitions_differ(self, trivial):
        res = run_experiment(trivial, TrainConfig(**SMALL), p=2, repetitions=2)
        assert len(res.reports) == 4
        assert not np.array_equal(res.reports[0].scores, res.reports[2].scores)

    def test_test_windows_follow_training(self, trivial):
        res = run_experiment(trivial, TrainConfig(**SMALL), p=2)
        folds = make_folds(trivial.n_windows, 2)
        for rep, (tr, te) in zip(res.reports, folds):
            assert rep.t.tolist() == trivial.targets[list(te)].tolist()
            assert rep.t.min() > trivial.targets[tr[-1]]

    def test_parallel_matches_serial(self, trivial):
        cfg = TrainConfig(**SMALL)
        a = run_experiment(trivial, cfg, p=2)
        b = run_experiment(trivial, cfg, p=2, jobs=2)
        assert a.aucs.tolist() == b.aucs.tolist()

    def test_errors_carry_fold_context(self):
        # this seed draws no events at all, so fold 0 trains on one class
        ds = WindowDataset.from_graph(generate(GenSpec(n=10, T=30, event_prob=0.02, seed=3)), 3, "both")
        with pytest.raises(ConfigError, match="fold 0, repetition 0"):
            run_experiment(ds, TrainConfig(**SMALL), p=2)

    def test_bad_repetitions(self, trivial):
        with pytest.raises(ConfigError):
            run_experiment(trivial, TrainConfig(**SMALL), p=2, repetitions=0)
