import math
from unittest import TestCase

import numpy as np
import sympy as sp
from scipy.special import log_softmax

from common_data import tiny_model, random_tokens
from pmlm.config import MASK_ID
from pmlm.core.tensor import no_grad
from pmlm.masking.pattern import EnumerationLimitException
from pmlm.model.transformer import UnsupportedAttentionModeException
from pmlm.objective.equivalence import (verify_equivalence, duplication_audit, duplication_factor, beta_identity,
                                        beta_integral)


class TestEquivalence(TestCase):

    def test_random_models(self):
        """任意参数的模型上，u-PMLM 期望损失与排列自回归损失在常数 C 下相等"""
        rng = np.random.default_rng(7)
        for seed in range(20):
            model = tiny_model(seed=seed)
            for n in range(1, 6):
                report = verify_equivalence(model, random_tokens(rng, n))
                self.assertTrue(report.passed, f'seed={seed}, N={n}')
                self.assertLess(report.max_abs_gap, 1e-9)
                self.assertEqual(math.factorial(n + 1), report.constant_C)

    def test_relative_positions(self):
        """等价关系与位置编码方式无关"""
        model = tiny_model(seed=1, positional_kind='relative')
        report = verify_equivalence(model, random_tokens(np.random.default_rng(0), 4))
        self.assertTrue(report.passed)

    def test_single_token(self):
        """N = 1 时两边都是 -log p(x_1 | [MASK]) / 2"""
        model = tiny_model(seed=3)
        with no_grad():
            log_p = log_softmax(model.forward(np.array([MASK_ID])).data, axis=-1)[0, 5]
        report = verify_equivalence(model, np.array([5]))
        self.assertAlmostEqual(-log_p / 2, report.pmlm_exact, places=12)
        self.assertAlmostEqual(-log_p / 2, report.aplm_normalized, places=12)
        self.assertAlmostEqual(-log_p, report.aplm_mean, places=12)

    def test_failed_report_is_logged(self):
        """误差超出容许范围时报告失败并记录警告"""
        with self.assertLogs('pmlm.objective.equivalence', level='WARNING'):
            report = verify_equivalence(tiny_model(), np.array([3, 4]), tolerance=-1.0)
        self.assertFalse(report.passed)

    def test_guards(self):
        with self.assertRaises(EnumerationLimitException):
            verify_equivalence(tiny_model(), random_tokens(np.random.default_rng(0), 7))
        with self.assertRaises(UnsupportedAttentionModeException):
            verify_equivalence(tiny_model(attention_mode='causal'), np.array([3, 4]))


class TestDuplicationFactor(TestCase):

    def test_audit(self):
        """每个 (未揭示集合, 下一位置) 恰好被 (N-K)!(K-1)! 个排列实现"""
        for n in range(1, 8):
            audit = duplication_audit(n)
            self.assertEqual(list(range(1, n + 1)), list(audit))
            for k, entry in audit.items():
                self.assertTrue(entry.ok, f'N={n}, K={k}')
                self.assertEqual(duplication_factor(n, k), entry.observed_min)
                self.assertEqual(math.comb(n, k) * k, entry.groups)

    def test_counts_cover_all_permutations(self):
        """重复因子乘以组数等于 N! 个排列在每一步的贡献"""
        for n in range(1, 8):
            for k in range(1, n + 1):
                self.assertEqual(math.factorial(n), duplication_factor(n, k) * math.comb(n, k) * k)

    def test_beta_identity(self):
        """B(N-K+1, K+1) · (N+1)! == (N-K)! · K! 精确成立"""
        for n in range(0, 21):
            for k in range(0, n + 1):
                self.assertTrue(beta_identity(n, k), f'N={n}, K={k}')

    def test_beta_integral(self):
        """符号积分与阶乘形式一致"""
        for n in range(1, 7):
            for k in range(n + 1):
                expected = sp.Rational(math.factorial(n - k) * math.factorial(k), math.factorial(n + 1))
                self.assertEqual(expected, beta_integral(n, k))
