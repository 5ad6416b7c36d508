import pytest

from dyged.autodiff import Op, corrupted_adjoint
from dyged.errors import ConfigError
from dyged.gradcheck import GradcheckConfig, check_variant, relative_error, toy_problem
from dyged.model import VARIANTS, ModelConfig, param_shapes


class TestRelativeError:
    def test_examples(self):
        assert relative_error([1.0], [1.0]) == 0.0
        assert relative_error([2.0], [1.0]) == 0.5
        assert relative_error([0.0], [0.0]) == 0.0

    def test_floor_guards_tiny_entries(self):
        assert relative_error([1e-12], [2e-12]) == pytest.approx(1e-4)


class TestToyProblem:
    def test_shapes_and_classes(self):
        cfg = GradcheckConfig()
        a_hat, x, layout, labels = toy_problem(cfg)
        assert a_hat.shape == (5, 5, 5) and x.shape == (5, 5, 3)
        assert layout.tolist() == [[0, 1, 2], [1, 2, 3], [2, 3, 4]]
        assert set(labels.tolist()) == {0, 1}


class TestCheckVariant:
    @pytest.mark.parametrize("variant", VARIANTS)
    def test_every_tensor_passes(self, variant):
        checks = check_variant(variant)
        names = [c.name for c in checks]
        assert names == list(param_shapes(ModelConfig(d_in=3, hidden=4, h=4, k=2, variant=variant)))
        for c in checks:
            assert c.passed, f"{variant}:{c.name} rel err {c.max_rel_error:.2e}"

    @pytest.mark.parametrize("op", [Op.TANH, Op.SOFTMAX_ROW, Op.SIGMOID, Op.ADD_BIAS])
    def test_corrupted_adjoint_detected(self, op):
        with corrupted_adjoint(op):
            checks = check_variant("full")
        assert not all(c.passed for c in checks)

    def test_small_dims_enforced(self):
        with pytest.raises(ConfigError):
            GradcheckConfig(n=9)
        with pytest.raises(ConfigError):
            GradcheckConfig(h=16)
