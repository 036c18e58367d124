import math

import numpy as np
import pytest
from scipy.integrate import quad

from empchat import tensor as tc
from empchat.rng import stream
from gradcheck import fd_check
from op_battery import OP_CASES


def t64(data, requires_grad=False):
    return tc.Tensor(np.asarray(data, dtype=np.float64), requires_grad=requires_grad)


class TestSoftmax:
    def test_equal_logits_uniform(self):
        out = tc.softmax(t64([0.0, 0.0, 0.0]))
        np.testing.assert_allclose(out.data, [1 / 3] * 3, atol=1e-12)

    def test_analytic_two_class(self):
        out = tc.softmax(t64([0.0, math.log(2.0)]))
        np.testing.assert_allclose(out.data, [1 / 3, 2 / 3], atol=1e-12)

    def test_stabilized_no_overflow(self):
        out = tc.softmax(t64([1000.0, 0.0]))
        assert np.all(np.isfinite(out.data))
        assert out.data[0] > 1 - 1e-12 and out.data[1] < 1e-12

    def test_rows_sum_to_one(self):
        x = t64(stream(7, "sm").uniform(-1e4, 1e4, size=(8, 16)))
        out = tc.softmax(x)
        np.testing.assert_allclose(out.data.sum(axis=-1), np.ones(8), atol=1e-9)
        assert np.all(out.data >= 0)

    def test_shift_invariance(self):
        x = stream(8, "sm").uniform(-5, 5, size=(4, 6))
        a = tc.softmax(t64(x)).data
        b = tc.softmax(t64(x + 123.456)).data
        np.testing.assert_allclose(a, b, atol=1e-9)

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            tc.softmax(t64([0.0, np.nan]))
        with pytest.raises(ValueError):
            tc.softmax(t64([np.inf, 0.0]))


class TestCrossEntropy:
    def test_uniform_logits(self):
        logits = t64(np.zeros(100))
        out = tc.cross_entropy(logits, 42)
        assert abs(out.item() - math.log(100)) < 1e-12

    def test_perfect_prediction(self):
        logits = np.full(10, -1e4)
        logits[3] = 1e4
        out = tc.cross_entropy(t64(logits), 3)
        assert out.item() < 1e-9

    def test_analytic(self):
        out = tc.cross_entropy(t64([0.0, math.log(3.0)]), 0)
        assert abs(out.item() - math.log(4.0)) < 1e-12

    def test_index_out_of_range(self):
        with pytest.raises(ValueError):
            tc.cross_entropy(t64([0.0, 1.0]), 2)
        with pytest.raises(ValueError):
            tc.cross_entropy(t64([0.0, 1.0]), -1)


class TestLayerNorm:
    def test_zero_variance_collapses_to_bias(self):
        out = tc.layer_norm(t64([1.0, 1.0, 1.0]), t64(np.ones(3)), t64(np.zeros(3)), eps=1e-5)
        np.testing.assert_allclose(out.data, np.zeros(3), atol=1e-9)

    def test_already_normalized(self):
        out = tc.layer_norm(t64([-1.0, 1.0]), t64(np.ones(2)), t64(np.zeros(2)), eps=1e-12)
        np.testing.assert_allclose(out.data, [-1.0, 1.0], atol=1e-6)

    def test_affine(self):
        out = tc.layer_norm(t64([0.0, 2.0]), t64([2.0, 2.0]), t64([1.0, 1.0]), eps=1e-12)
        np.testing.assert_allclose(out.data, [-1.0, 3.0], atol=1e-5)

    def test_zero_length_rejected(self):
        with pytest.raises(ValueError):
            tc.layer_norm(t64([]), t64([]), t64([]), eps=1e-5)


class TestGelu:
    def test_at_zero(self):
        assert tc.gelu(t64([0.0])).data[0] == 0.0

    def test_asymptote(self):
        assert abs(tc.gelu(t64([10.0])).data[0] - 10.0) < 1e-6

    def test_against_quadrature_oracle(self):
        # Phi(1) by numerical quadrature of the standard normal density
        phi, _ = quad(lambda t: math.exp(-0.5 * t * t) / math.sqrt(2 * math.pi), -50, 1.0)
        assert abs(tc.gelu(t64([1.0])).data[0] - 1.0 * phi) < 1e-6


class TestBackward:
    def test_sum_gives_ones(self):
        x = t64(stream(1, "bw").uniform(-2, 2, size=(3, 5)), requires_grad=True)
        tc.tsum(x).backward()
        np.testing.assert_allclose(x.grad, np.ones((3, 5)))

    def test_dot_bilinear(self):
        x = t64([1.0, 2.0], requires_grad=True)
        y = t64([3.0, 4.0], requires_grad=True)
        tc.dot(x, y).backward()
        np.testing.assert_allclose(x.grad, [3.0, 4.0])
        np.testing.assert_allclose(y.grad, [1.0, 2.0])

    def test_fanout_accumulates(self):
        x = t64([1.5], requires_grad=True)
        tc.tsum(tc.add(x, x)).backward()
        np.testing.assert_allclose(x.grad, [2.0])

    def test_non_scalar_rejected(self):
        x = t64([1.0, 2.0], requires_grad=True)
        with pytest.raises(ValueError):
            tc.backward(tc.add(x, x))

    def test_grad_shape_matches_data(self):
        x = t64(np.ones((2, 3)), requires_grad=True)
        tc.tmean(tc.mul(x, x)).backward()
        assert x.grad.shape == x.data.shape

    def test_repeated_backward_accumulates(self):
        # gradient accumulation across micro-batches relies on +=
        x = t64([2.0], requires_grad=True)
        tc.tsum(tc.mul(x, x)).backward()
        first = x.grad.copy()
        tc.tsum(tc.mul(x, x)).backward()
        np.testing.assert_allclose(x.grad, 2 * first)


class TestMatmulShapes:
    def test_shape_algebra(self):
        a = t64(np.ones((3, 4)))
        b = t64(np.ones((4, 2)))
        assert tc.matmul(a, b).shape == (3, 2)

    def test_inner_mismatch_rejected(self):
        with pytest.raises(ValueError):
            tc.matmul(t64(np.ones((3, 4))), t64(np.ones((3, 2))))

    def test_leading_mismatch_rejected(self):
        with pytest.raises(ValueError):
            tc.matmul(t64(np.ones((2, 3, 4))), t64(np.ones((3, 4, 2))))


@pytest.mark.parametrize("name,builder", OP_CASES)
def test_gradients_match_finite_differences(name, builder):
    for trial in range(3):
        make_loss, arrays = builder(stream(1234 + trial, "fd", name))
        fd_check(make_loss, arrays)


def test_random_composition_finite_difference():
    from op_battery import case_composition

    make_loss, arrays = case_composition(stream(99, "fd-comp"))
    fd_check(make_loss, arrays)


class TestCheckpointFile:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "params.ckpt"
        rng = stream(5, "ckpt")
        named = {
            "emb": rng.normal(size=(7, 3)).astype(np.float32),
            "w": rng.normal(size=(3, 2)),
            "b": np.zeros(2, dtype=np.float32),
        }
        tc.save_tensors(path, named)
        loaded = tc.load_tensors(path)
        assert set(loaded) == set(named)
        for k in named:
            assert loaded[k].dtype == named[k].dtype
            np.testing.assert_array_equal(loaded[k], named[k])

    def test_deterministic_bytes(self, tmp_path):
        named = {"a": np.arange(6, dtype=np.float32).reshape(2, 3)}
        p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
        tc.save_tensors(p1, named)
        tc.save_tensors(p2, named)
        assert p1.read_bytes() == p2.read_bytes()
