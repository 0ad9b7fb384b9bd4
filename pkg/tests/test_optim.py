"""Optimizer and learning-rate schedule contracts."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from newscast.autodiff import Tensor
from newscast.errors import ConfigError
from newscast.optim import EPS, AdamState, adam_step, lr_at_step


class TestAdam:
    def test_zero_gradient_leaves_parameters_unchanged(self):
        p = Tensor(np.full((2, 2), 1.5), requires_grad=True)
        state = AdamState([p])
        for _ in range(5):
            adam_step(state, {p: np.zeros((2, 2))}, lr=0.1)
        np.testing.assert_array_equal(p.data, np.full((2, 2), 1.5))
        assert np.abs(state.m[0]).max() == 0.0

    def test_constant_gradient_closed_form(self):
        # With constant gradient g the bias-corrected moments are exactly
        # m_hat = g and v_hat = g**2 at every step, so each update is
        # lr * g / (|g| + eps).
        g = 0.37
        lr = 0.01
        p = Tensor([[2.0]], requires_grad=True)
        state = AdamState([p])
        n = 25
        for _ in range(n):
            adam_step(state, {p: np.array([[g]])}, lr=lr)
        expected = 2.0 - n * lr * g / (abs(g) + EPS)
        np.testing.assert_allclose(p.data[0, 0], expected, rtol=1e-12)

    def test_update_magnitude_saturates_at_lr(self):
        p = Tensor([[0.0]], requires_grad=True)
        state = AdamState([p])
        before = 0.0
        for _ in range(200):
            before = p.data[0, 0]
            adam_step(state, {p: np.array([[5.0]])}, lr=0.01)
        last_step = before - p.data[0, 0]
        assert last_step > 0  # moves against the gradient
        np.testing.assert_allclose(last_step, 0.01, rtol=1e-6)

    def test_step_counter(self):
        p = Tensor([[1.0]], requires_grad=True)
        state = AdamState([p])
        for _ in range(7):
            adam_step(state, {p: np.array([[1.0]])}, lr=0.1)
        assert state.step == 7

    def test_shape_mismatch_rejected(self):
        p = Tensor(np.ones((2, 2)), requires_grad=True)
        state = AdamState([p])
        with pytest.raises(ValueError, match="shape"):
            adam_step(state, {p: np.ones((2, 3))}, lr=0.1)


class TestSchedule:
    def test_endpoints(self):
        assert lr_at_step(0, 100, 200, 1e-5) == 0.0
        assert lr_at_step(100, 100, 200, 1e-5) == 1e-5
        assert lr_at_step(200, 100, 200, 1e-5) == 0.0
        assert lr_at_step(999, 100, 200, 1e-5) == 0.0

    def test_decay_midpoint(self):
        np.testing.assert_allclose(lr_at_step(150, 100, 200, 1e-5), 5e-6, rtol=1e-12)

    def test_invalid_config(self):
        with pytest.raises(ConfigError):
            lr_at_step(10, 100, 100, 1e-5)

    @given(st.integers(1, 500), st.integers(501, 2000), st.floats(1e-8, 1.0))
    @settings(max_examples=60, deadline=None)
    def test_piecewise_linear_and_continuous(self, warmup, total, peak):
        # the two one-sided interpolants agree at the warmup knee
        ramp = lr_at_step(warmup, warmup, total, peak)
        decay_side = peak * (total - warmup) / (total - warmup)
        assert abs(ramp - peak) < 1e-15
        assert abs(decay_side - peak) < 1e-15
        # linearity inside each branch
        if warmup >= 2:
            a, b = lr_at_step(warmup - 1, warmup, total, peak), lr_at_step(warmup, warmup, total, peak)
            step = b - a
            assert abs(lr_at_step(1, warmup, total, peak) - step) < 1e-12 * max(1.0, peak)
        mid = (warmup + total) // 2
        if warmup < mid < total:
            left = lr_at_step(mid - 1, warmup, total, peak)
            right = lr_at_step(mid + 1, warmup, total, peak)
            np.testing.assert_allclose(lr_at_step(mid, warmup, total, peak),
                                       (left + right) / 2, rtol=1e-9)
