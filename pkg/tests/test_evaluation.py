import math
from unittest import TestCase

import numpy as np

from common_data import tiny_model, random_tokens, make_uniform
from pmlm.config import PAD_ID
from pmlm.evaluation import (ppl_bidirectional, ppl_causal, bench_latency, scoring_order, UnsupportedModeException,
                             EmptyCorpusException)
from pmlm.generation import SamplerSpec
from pmlm.model.transformer import UnsupportedAttentionModeException
from pmlm.objective import conditional_log_probs
from pmlm.objective.ar import ar_loss


def order_nll(table: np.ndarray, tokens_order: list[int]) -> float:
    """用条件概率表计算给定顺序的负对数似然：第 t 步未揭示集合为 σ_t..σ_N"""
    nll = 0.0
    for t, position in enumerate(tokens_order):
        index = sum(1 << p for p in tokens_order[t:])
        nll -= table[index, position]
    return nll


class TestPplBidirectional(TestCase):

    def setUp(self):
        self.rng = np.random.default_rng(4)
        self.model = tiny_model(seed=8)

    def test_uniform_model(self):
        """均匀输出时两种模式的困惑度都等于词表大小"""
        model = make_uniform(self.model)
        corpus = [random_tokens(self.rng, n) for n in (3, 5, 7)]
        for mode in ('sequential', 'random'):
            report = ppl_bidirectional(model, corpus, mode=mode)
            self.assertAlmostEqual(12.0, report.ppl, places=9)
            self.assertEqual(15, report.token_count)

    def test_single_token_modes_agree(self):
        """N = 1 时两种模式相同"""
        corpus = [random_tokens(self.rng, 1) for _ in range(4)]
        sequential = ppl_bidirectional(self.model, corpus, mode='sequential')
        random = ppl_bidirectional(self.model, corpus, mode='random', seed=3)
        self.assertAlmostEqual(sequential.ppl, random.ppl, places=12)

    def test_matches_conditional_table(self):
        """每条序列的负对数似然与条件概率表在同一顺序下的结果一致"""
        corpus = [random_tokens(self.rng, n) for n in (2, 3, 4)]
        for mode in ('sequential', 'random'):
            report = ppl_bidirectional(self.model, corpus, mode=mode, seed=5)
            total = 0.0
            for tokens, sequence in zip(corpus, report.sequences):
                expected = order_nll(conditional_log_probs(self.model, tokens), sequence.order)
                self.assertAlmostEqual(expected, sequence.nll, delta=1e-10)
                total += expected
            self.assertAlmostEqual(math.exp(total / 9), report.ppl, delta=1e-9)

    def test_sequential_order_is_identity(self):
        report = ppl_bidirectional(self.model, [random_tokens(self.rng, 5)])
        self.assertEqual([0, 1, 2, 3, 4], report.sequences[0].order)

    def test_random_orders_depend_only_on_seed_and_index(self):
        """随机顺序只由 (种子, 序列下标) 决定，与处理先后无关"""
        corpus = [random_tokens(self.rng, 6) for _ in range(5)]
        report = ppl_bidirectional(self.model, corpus, mode='random', seed=11)
        for index, tokens in enumerate(corpus):
            self.assertEqual(scoring_order(tokens, 'random', 11, index).tolist(), report.sequences[index].order)
        single = ppl_bidirectional(self.model, corpus[:1], mode='random', seed=11)
        self.assertAlmostEqual(report.sequences[0].nll, single.sequences[0].nll, delta=1e-12)
        self.assertEqual(report, ppl_bidirectional(self.model, corpus, mode='random', seed=11))
        self.assertEqual(sorted(report.sequences[0].order), list(range(6)))

    def test_padding_invariance(self):
        """尾部 [PAD] 不改变困惑度"""
        corpus = [random_tokens(self.rng, 4), random_tokens(self.rng, 3)]
        padded = [np.concatenate([tokens, [PAD_ID] * (6 - len(tokens))]) for tokens in corpus]
        for mode in ('sequential', 'random'):
            self.assertAlmostEqual(ppl_bidirectional(self.model, corpus, mode=mode).ppl,
                                   ppl_bidirectional(self.model, padded, mode=mode).ppl, delta=1e-10)

    def test_guards(self):
        with self.assertRaises(EmptyCorpusException):
            ppl_bidirectional(self.model, [])
        with self.assertRaises(EmptyCorpusException):
            ppl_bidirectional(self.model, [np.array([PAD_ID, PAD_ID])])
        with self.assertRaises(UnsupportedAttentionModeException):
            ppl_bidirectional(tiny_model(attention_mode='causal'), [np.array([3, 4])])

    def test_render(self):
        report = ppl_bidirectional(self.model, [random_tokens(self.rng, 3)], mode='random')
        self.assertIn('PPL(random)', report.render())


class TestPplCausal(TestCase):

    def setUp(self):
        self.rng = np.random.default_rng(6)
        self.model = tiny_model(seed=9, attention_mode='causal')

    def test_matches_ar_loss(self):
        """单条序列的困惑度等于 exp(自回归损失)"""
        tokens = random_tokens(self.rng, 7)
        report = ppl_causal(self.model, [tokens])
        self.assertAlmostEqual(ar_loss(self.model, tokens).perplexity, report.ppl, delta=1e-9)

    def test_uniform_model(self):
        report = ppl_causal(make_uniform(self.model), [random_tokens(self.rng, 5), random_tokens(self.rng, 2)])
        self.assertAlmostEqual(12.0, report.ppl, places=9)

    def test_padding_invariance(self):
        tokens = random_tokens(self.rng, 4)
        padded = np.concatenate([tokens, [PAD_ID, PAD_ID]])
        self.assertAlmostEqual(ppl_causal(self.model, [tokens]).ppl, ppl_causal(self.model, [padded]).ppl,
                               delta=1e-10)

    def test_random_mode_unsupported(self):
        """因果模型不能按随机顺序打分"""
        with self.assertRaises(UnsupportedModeException) as ctx:
            ppl_causal(self.model, [np.array([3, 4])], mode='random')
        self.assertEqual('random', ctx.exception.mode)

    def test_guards(self):
        with self.assertRaises(EmptyCorpusException):
            ppl_causal(self.model, [])
        with self.assertRaises(UnsupportedAttentionModeException):
            ppl_causal(tiny_model(), [np.array([3, 4])])


class TestBenchLatency(TestCase):

    def test_minimal_run(self):
        """一条长度为 1 的序列，每条路径一次前向"""
        benchmark = bench_latency(tiny_model(attention_mode='causal'), tiny_model(), 1, 1, SamplerSpec.greedy())
        self.assertEqual(['causal', 'bidirectional'], [r.model_kind for r in benchmark.reports])
        self.assertEqual([1, 1], [r.forwards for r in benchmark.reports])
        self.assertEqual(1.0, benchmark.reports[0].ratio)
        self.assertGreater(benchmark.reports[1].ratio, 0.0)
        rendered = benchmark.render()
        self.assertIn('Latency', rendered)
        self.assertIn('1.20', rendered)

    def test_bidirectional_slower_on_long_sequences(self):
        """长度 32 时完整重算比增量缓存慢"""
        benchmark = bench_latency(tiny_model(attention_mode='causal'), tiny_model(), 2, 32, SamplerSpec.greedy())
        causal, bidirectional = benchmark.reports
        self.assertGreater(bidirectional.seconds, causal.seconds)

    def test_mismatched_models(self):
        with self.assertRaises(UnsupportedAttentionModeException):
            bench_latency(tiny_model(), tiny_model(), 1, 1, SamplerSpec.greedy())
        with self.assertLogs('pmlm.evaluation.latency', level='WARNING'):
            bench_latency(tiny_model(attention_mode='causal'), tiny_model(layers=1), 1, 1, SamplerSpec.greedy())
