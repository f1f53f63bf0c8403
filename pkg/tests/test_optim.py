import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from emod.autodiff import Tensor
from emod.exceptions import ShapeMismatch
from emod.optim import AdamW, OptimizerState, adamw_step, clip_, clip_gradients, cosine_lr, global_norm


def adam_reference(theta, grads, lr, b1=0.9, b2=0.999, eps=1e-8):
    """Scalar Adam, element by element."""
    theta = list(theta)
    m = [0.0] * len(theta)
    v = [0.0] * len(theta)
    for t, g in enumerate(grads, start=1):
        for i in range(len(theta)):
            m[i] = b1 * m[i] + (1 - b1) * g[i]
            v[i] = b2 * v[i] + (1 - b2) * g[i] ** 2
            mh = m[i] / (1 - b1**t)
            vh = v[i] / (1 - b2**t)
            theta[i] -= lr * mh / (math.sqrt(vh) + eps)
    return theta


class TestAdamW:
    def test_zero_grad_no_decay_is_identity(self):
        p = Tensor(np.array([1.0, -2.0]))
        opt = AdamW([p], lr=1e-3, weight_decay=0.0)
        opt.step([np.zeros(2)])
        np.testing.assert_array_equal(p.data, [1.0, -2.0])

    def test_first_step(self):
        p = Tensor(np.array([1.0]))
        AdamW([p], lr=1e-3, weight_decay=0.0).step([np.array([0.5])])
        assert p.data[0] == pytest.approx(1.0 - 1e-3 * 0.5 / (0.5 + 1e-8), abs=1e-15)
        assert p.data[0] == pytest.approx(0.999, abs=1e-10)

    def test_decoupled_decay(self):
        p = Tensor(np.array([2.0, -3.0]))
        AdamW([p], lr=1e-3, weight_decay=0.1).step([np.zeros(2)])
        np.testing.assert_array_equal(p.data, np.array([2.0, -3.0]) - 1e-3 * 0.1 * np.array([2.0, -3.0]))

    def test_matches_adam_reference(self, rng):
        theta = rng.standard_normal(5)
        grads = [rng.standard_normal(5) for _ in range(10)]
        p = Tensor(theta.copy())
        opt = AdamW([p], lr=1e-2, weight_decay=0.0)
        for g in grads:
            opt.step([g])
        ref = adam_reference(theta.tolist(), [g.tolist() for g in grads], 1e-2)
        assert np.max(np.abs(p.data - ref)) < 1e-12

    def test_uses_param_grad(self):
        p = Tensor(np.array([1.0]), requires_grad=True)
        p.grad = np.array([0.5])
        opt = AdamW([p], lr=1e-3, weight_decay=0.0)
        opt.step()
        assert p.data[0] < 1.0
        opt.zero_grad()
        assert p.grad is None

    def test_state_shapes_and_step_count(self, rng):
        params = [Tensor(rng.standard_normal((2, 3))), Tensor(rng.standard_normal(4))]
        opt = AdamW(params)
        for k in range(3):
            opt.step([rng.standard_normal(p.shape) for p in params])
            assert opt.state.step == k + 1
        assert [m.shape for m in opt.state.m] == [(2, 3), (4,)]
        assert [v.shape for v in opt.state.v] == [(2, 3), (4,)]

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            adamw_step([Tensor(np.zeros(3))], [np.zeros(2)], OptimizerState(m=[np.zeros(3)], v=[np.zeros(3)]))

    def test_float32_stays_float32(self):
        p = Tensor(np.ones(3, dtype=np.float32))
        AdamW([p]).step([np.ones(3, dtype=np.float32)])
        assert p.dtype == np.float32


class TestCosine:
    def test_endpoints(self):
        assert cosine_lr(0, 100, 5e-4, 1e-7) == 5e-4
        assert cosine_lr(100, 100, 5e-4, 1e-7) == 1e-7

    def test_midpoint(self):
        assert cosine_lr(50, 100, 5e-4, 1e-7) == pytest.approx((5e-4 + 1e-7) / 2, rel=1e-14)

    def test_monotone(self):
        lrs = [cosine_lr(s, 37, 1.0, 0.01) for s in range(38)]
        assert all(a >= b for a, b in zip(lrs, lrs[1:]))


class TestClip:
    def test_halves(self):
        g = [np.array([3.0, 0.0]), np.array([[0.0, 3.0 * math.sqrt(3)]])]
        out, norm = clip_gradients(g, 3.0)
        assert norm == pytest.approx(6.0)
        for a, b in zip(out, g):
            np.testing.assert_allclose(a, b / 2, rtol=1e-12)

    def test_below_threshold_untouched(self):
        g = [np.array([1.2, 1.6])]
        out, norm = clip_gradients(g, 3.0)
        assert norm == pytest.approx(2.0) and out[0] is g[0]

    def test_none_entries(self):
        out, _ = clip_gradients([None, np.array([30.0, 40.0])], 5.0)
        assert out[0] is None
        np.testing.assert_allclose(out[1], [3.0, 4.0])

    def test_invalid_max(self):
        with pytest.raises(ValueError):
            clip_gradients([np.ones(2)], 0.0)

    @settings(max_examples=200, deadline=None)
    @given(st.integers(0, 2**31 - 1), st.sampled_from([np.float32, np.float64]))
    def test_post_clip_bound_and_no_growth(self, seed, dtype):
        rng = np.random.default_rng(seed)
        grads = [(rng.standard_normal(rng.integers(1, 50)) * 10 ** rng.uniform(-3, 3)).astype(dtype)
                 for _ in range(rng.integers(1, 6))]
        out, _ = clip_gradients(grads, 3.0)
        assert global_norm(out) <= 3.0 + 1e-9
        for a, b in zip(out, grads):
            assert np.all(np.abs(a) <= np.abs(b))

    def test_inplace_on_params(self):
        p = Tensor(np.zeros(2), requires_grad=True)
        p.grad = np.array([6.0, 8.0])
        assert clip_([p], 1.0) == pytest.approx(10.0)
        np.testing.assert_allclose(p.grad, [0.6, 0.8])
