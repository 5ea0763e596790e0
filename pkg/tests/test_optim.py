from unittest import TestCase

import numpy as np

from pmlm.core import functional as F
from pmlm.core.optim import Adam, OptimizerState, adam_step, NonFiniteGradientException
from pmlm.core.tensor import Tensor


class TestAdam(TestCase):

    def test_first_step_moves_by_learning_rate(self):
        """偏差修正后第一步的步长约等于学习率"""
        param = Tensor(np.array([1.0]), requires_grad=True)
        state = adam_step({'p': param}, {'p': np.array([0.5])}, OptimizerState(lr=0.1))
        self.assertEqual(1, state.step)
        self.assertAlmostEqual(0.9, float(param.data[0]), places=6)

    def test_non_finite_gradient_rejected(self):
        """任一梯度含 NaN 时拒绝更新，所有参数保持原值"""
        a = Tensor(np.array([1.0, 2.0]), requires_grad=True)
        b = Tensor(np.array([3.0]), requires_grad=True)
        state = OptimizerState(lr=0.1)
        with self.assertRaises(NonFiniteGradientException) as ctx:
            adam_step({'a': a, 'b': b}, {'a': np.array([0.1, 0.1]), 'b': np.array([np.nan])}, state)
        self.assertEqual('b', ctx.exception.name)
        np.testing.assert_array_equal([1.0, 2.0], a.data)
        np.testing.assert_array_equal([3.0], b.data)
        self.assertEqual(0, state.step)

    def test_missing_gradient_is_zero(self):
        """没有梯度的参数只受权重衰减影响"""
        param = Tensor(np.array([2.0]), requires_grad=True)
        adam_step({'p': param}, {'p': None}, OptimizerState(lr=0.1, weight_decay=0.1))
        self.assertAlmostEqual(1.98, float(param.data[0]), places=10)

    def test_minimizes_quadratic(self):
        """Adam 能把二次函数优化到最小值附近"""
        param = Tensor(np.array([3.0, -2.0]), requires_grad=True)
        optimizer = Adam({'p': param}, lr=0.05)
        for _ in range(2000):
            optimizer.zero_grad()
            F.sum(F.mul(param, param)).backward()
            optimizer.step()
        self.assertLess(np.abs(param.data).max(), 0.05)
