"""
Tests for module plumbing (bataxis.nn).
"""

import numpy as np
import pytest

from bataxis import tensor as T
from bataxis.errors import DimensionError
from bataxis.nn import FeedForward, LayerNorm, Linear, Module, count_parameters, init_rng
from bataxis.tensor import DiffTensor, Parameter, grad_check


class TwoLayer(Module):
    def __init__(self, seed=0, extra=False):
        super().__init__("net")
        if extra:
            self.extra = Linear(3, 3, "extra", seed)
        self.first = Linear(4, 3, "first", seed)
        self.norm = LayerNorm(3, "norm")
        self.stack = [FeedForward(3, 6, f"ffn{i}", seed) for i in range(2)]

    def __call__(self, x):
        out = self.norm(self.first(x))
        for block in self.stack:
            out = out + block(out)
        return out


class TestInit:
    """Tests for per-name deterministic initialization."""

    def test_same_seed_same_weights(self):
        assert np.array_equal(Linear(4, 3, "a", 7).weight.data, Linear(4, 3, "a", 7).weight.data)

    def test_name_changes_draw(self):
        assert not np.array_equal(Linear(4, 3, "a", 7).weight.data, Linear(4, 3, "b", 7).weight.data)

    def test_shared_names_agree_across_architectures(self):
        plain, bigger = TwoLayer(seed=3), TwoLayer(seed=3, extra=True)
        assert np.array_equal(plain.first.weight.data, bigger.first.weight.data)
        assert np.array_equal(plain.stack[1].inner.weight.data, bigger.stack[1].inner.weight.data)

    def test_init_rng_is_reproducible(self):
        assert init_rng(1, "x").random() == init_rng(1, "x").random()

    def test_linear_bias_starts_at_zero(self):
        layer = Linear(5, 2, "lin", 0)
        assert np.all(layer.bias.data == 0.0)
        assert np.all(np.abs(layer.weight.data) <= 1.0 / np.sqrt(5))


class TestModule:
    """Tests for parameter discovery and state dicts."""

    def test_parameter_names_in_definition_order(self):
        names = list(TwoLayer().parameters())
        assert names[:4] == ["first.weight", "first.bias", "norm.gain", "norm.bias"]
        assert names[-1] == "ffn1.outer.bias"
        assert len(names) == 12

    def test_count_parameters(self):
        net = TwoLayer()
        expected = (4 * 3 + 3) + 3 + 3 + 2 * ((3 * 6 + 6) + (6 * 3 + 3))
        assert count_parameters(net) == expected

    def test_duplicate_names_raise(self):
        class Clash(Module):
            def __init__(self):
                super().__init__("clash")
                self.a = Linear(2, 2, "same", 0)
                self.b = Linear(2, 2, "same", 1)

        with pytest.raises(ValueError, match="duplicate"):
            Clash().parameters()

    def test_train_eval_propagates(self):
        net = TwoLayer().eval()
        assert not net.training
        assert not net.stack[0].training
        net.train()
        assert net.stack[1].training

    def test_state_dict_round_trip(self):
        source, target = TwoLayer(seed=1), TwoLayer(seed=2)
        target.load_state_dict(source.state_dict())
        for name, param in target.parameters().items():
            assert np.array_equal(param.data, source.parameters()[name].data)

    def test_state_dict_is_a_copy(self):
        net = TwoLayer()
        state = net.state_dict()
        state["first.bias"][:] = 99.0
        assert np.all(net.first.bias.data == 0.0)

    def test_strict_load_reports_mismatch(self):
        state = TwoLayer().state_dict()
        del state["norm.gain"]
        with pytest.raises(KeyError, match="norm.gain"):
            TwoLayer().load_state_dict(state)
        TwoLayer().load_state_dict(state, strict=False)

    def test_shape_mismatch_raises(self):
        state = TwoLayer().state_dict()
        state["first.weight"] = np.zeros((3, 3))
        with pytest.raises(DimensionError):
            TwoLayer().load_state_dict(state)

    def test_zero_grad(self):
        net = TwoLayer()
        net(DiffTensor(np.ones((2, 4)))).sum().backward()
        assert net.first.weight.grad is not None
        net.zero_grad()
        assert all(p.grad is None for p in net.parameters().values())


class TestLayers:
    """Tests for Linear, LayerNorm and FeedForward."""

    def test_linear_rejects_wrong_width(self):
        with pytest.raises(DimensionError, match="input width 5"):
            Linear(4, 2, "lin")(DiffTensor(np.ones((3, 5))))

    def test_layer_norm_output_is_normalized(self, rng):
        out = LayerNorm(8, "ln")(DiffTensor(rng.standard_normal((5, 8)) * 10 + 3))
        assert np.allclose(out.data.mean(axis=-1), 0.0, atol=1e-9)
        assert np.allclose(out.data.std(axis=-1), 1.0, atol=1e-3)

    @pytest.mark.parametrize("seed", range(5))
    def test_network_gradients(self, seed):
        net = TwoLayer(seed=seed)
        gen = np.random.default_rng(seed)
        x = DiffTensor(gen.standard_normal((3, 4)))
        w = DiffTensor(gen.standard_normal((3, 3)))
        params = list(net.parameters().values())
        report = grad_check(lambda *_: (net(x) * w).sum(), params)
        assert report.passed, report.errors

    def test_feedforward_dropout_only_in_training(self, rng):
        ffn = FeedForward(4, 8, "ffn", dropout=0.5)
        x = DiffTensor(rng.standard_normal((6, 4)))
        ffn.eval()
        assert np.array_equal(ffn(x, np.random.default_rng(0)).data, ffn(x).data)
        ffn.train()
        assert not np.array_equal(ffn(x, np.random.default_rng(0)).data, ffn.eval()(x).data)
