# -*- coding: utf-8 -*-

"""
Unit tests for AdamW, gradient clipping and the learning-rate schedule.
"""

import numpy as np
import pytest

from cma_inpaint.exceptions import CheckpointError
from cma_inpaint.nn import Parameter
from cma_inpaint.optim import AdamW, clip_grad_norm, global_grad_norm, lr_at


class TestLearningRate:
    """Tests for lr_at."""

    @pytest.mark.parametrize(
        "step, expected",
        [(1, 1e-4 / 200), (100, 0.5e-4), (200, 1e-4), (5000, 1e-4)],
    )
    def test_linear_warmup_then_constant(self, step, expected):
        """
        What it does: Evaluates the schedule with base 1e-4 and 200 warmup steps.
        Purpose: Ensure the linear ramp and the constant plateau.
        """
        assert lr_at(step, 1e-4, 200) == pytest.approx(expected, rel=1e-12)

    def test_invalid_warmup(self):
        """
        What it does: Passes zero warmup steps.
        Purpose: Ensure ValueError.
        """
        with pytest.raises(ValueError, match="warmup_steps"):
            lr_at(1, 1e-4, 0)


class TestClipping:
    """Tests for global_grad_norm/clip_grad_norm."""

    def _params(self):
        a = Parameter(np.zeros(2))
        b = Parameter(np.zeros((1, 1)))
        a.grad = np.array([3.0, 0.0], dtype=np.float32)
        b.grad = np.array([[4.0]], dtype=np.float32)
        return [a, b, Parameter(np.zeros(3))]

    def test_norm_over_all_parameters(self):
        """
        What it does: Computes the joint norm of gradients (3, 0) and (4).
        Purpose: Ensure 5, with gradient-less parameters skipped.
        """
        assert global_grad_norm(self._params()) == pytest.approx(5.0)

    def test_clip_to_one(self):
        """
        What it does: Clips a norm-5 gradient to 1.
        Purpose: Ensure the pre-clip norm is returned and the new norm is 1 ± 1e-5.
        """
        params = self._params()
        before = clip_grad_norm(params, 1.0)
        after = global_grad_norm(params)
        print(f"norm {before} -> {after}")
        assert before == pytest.approx(5.0)
        assert abs(after - 1.0) <= 1e-5
        np.testing.assert_allclose(params[0].grad, [0.6, 0.0], atol=1e-6)
        assert params[0].grad.dtype == np.float32

    def test_small_norm_untouched(self):
        """
        What it does: Clips a norm-5 gradient to 10.
        Purpose: Ensure gradients below the threshold are unchanged.
        """
        params = self._params()
        clip_grad_norm(params, 10.0)
        np.testing.assert_array_equal(params[1].grad, [[4.0]])


class TestAdamW:
    """Tests for AdamW."""

    def test_first_step_is_sign_step(self):
        """
        What it does: Takes one step with unit gradients.
        Purpose: Ensure the bias-corrected first step moves each weight by lr.
        """
        w = Parameter(np.ones((2, 2)))
        w.grad = np.full((2, 2), 0.3, dtype=np.float32)
        AdamW([("w", w)], weight_decay=0.0).step(lr=0.1)
        np.testing.assert_allclose(w.data, np.full((2, 2), 0.9), atol=1e-6)

    def test_decay_applies_to_matrices_only(self):
        """
        What it does: Steps a matrix and a bias with zero gradients.
        Purpose: Ensure decoupled decay shrinks the matrix and leaves the bias alone.
        """
        w = Parameter(np.ones((2, 2)))
        b = Parameter(np.ones(2))
        w.grad = np.zeros((2, 2), dtype=np.float32)
        b.grad = np.zeros(2, dtype=np.float32)
        AdamW([("w", w), ("b", b)], weight_decay=0.5).step(lr=0.1)
        np.testing.assert_allclose(w.data, np.full((2, 2), 0.95), atol=1e-7)
        np.testing.assert_array_equal(b.data, np.ones(2))

    def test_missing_gradient_is_skipped(self):
        """
        What it does: Steps a parameter without gradient.
        Purpose: Ensure it is left alone while the step counter advances.
        """
        p = Parameter(np.ones((2, 2)))
        opt = AdamW([("p", p)])
        opt.step(lr=0.1)
        assert opt.t == 1
        np.testing.assert_array_equal(p.data, np.ones((2, 2)))

    def test_zero_grad(self):
        """
        What it does: Clears gradients through the optimizer.
        Purpose: Ensure every parameter gradient is reset.
        """
        p = Parameter(np.ones(3))
        p.grad = np.ones(3, dtype=np.float32)
        opt = AdamW([("p", p)])
        opt.zero_grad()
        assert p.grad is None or not np.any(p.grad)

    def test_state_round_trip_continues_identically(self, rng):
        """
        What it does: Copies moments and step counter to a fresh optimizer.
        Purpose: Ensure both optimizers produce the same next update.
        """
        start = rng.normal(size=(3, 2))
        grads = [rng.normal(size=(3, 2)).astype(np.float32) for _ in range(3)]
        a = Parameter(start.copy())
        opt_a = AdamW([("w", a)])
        for g in grads[:2]:
            a.grad = g
            opt_a.step(lr=0.01)
        b = Parameter(a.data.copy())
        opt_b = AdamW([("w", b)])
        opt_b.load_state_dict(opt_a.state_dict(), opt_a.t)
        a.grad = grads[2]
        b.grad = grads[2].copy()
        opt_a.step(lr=0.01)
        opt_b.step(lr=0.01)
        np.testing.assert_array_equal(a.data, b.data)
        assert sorted(opt_a.state_dict()) == ["m.w", "v.w"]

    def test_load_state_errors(self):
        """
        What it does: Loads incomplete and misshaped moment buffers.
        Purpose: Ensure CheckpointError names the buffer.
        """
        opt = AdamW([("w", Parameter(np.zeros((2, 2))))])
        with pytest.raises(CheckpointError, match="missing m.w"):
            opt.load_state_dict({}, 0)
        with pytest.raises(CheckpointError, match="v.w"):
            opt.load_state_dict({"m.w": np.zeros((2, 2)), "v.w": np.zeros(3)}, 0)
