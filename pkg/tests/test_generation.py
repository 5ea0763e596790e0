import math
from unittest import TestCase

import numpy as np
from pydantic import ValidationError

from common_data import tiny_model, random_tokens
from pmlm.config import MASK_ID
from pmlm.core.tensor import no_grad
from pmlm.generation import (GenerationOrder, GenerationConstraints, SamplerSpec, sample_token, generate,
                             generate_left_to_right, generate_causal, replay_trace, InvalidOrderException,
                             ExhaustedCandidatesException, SPECIAL_IDS)
from pmlm.model.transformer import UnsupportedAttentionModeException
from pmlm.objective.ar import causal_inputs


class TestSampleToken(TestCase):

    def setUp(self):
        self.rng = np.random.default_rng(0)

    def test_greedy(self):
        """贪心取最大值"""
        self.assertEqual(1, sample_token(np.array([0.0, 5.0, 1.0]), SamplerSpec.greedy(), self.rng))

    def test_greedy_tie_breaks_to_lowest_id(self):
        greedy = SamplerSpec.greedy()
        self.assertEqual(0, sample_token(np.array([2.0, 2.0]), greedy, self.rng))
        self.assertEqual(4, sample_token(np.array([0, 0, 0, 0, 2.0, 2.0]), greedy, self.rng, SPECIAL_IDS))

    def test_special_tokens_excluded(self):
        """特殊符号不参与采样，全部被排除时报错"""
        greedy = SamplerSpec.greedy()
        self.assertEqual(3, sample_token(np.array([9.0, 9.0, 9.0, 0.0]), greedy, self.rng, SPECIAL_IDS))
        with self.assertRaises(ExhaustedCandidatesException):
            sample_token(np.array([1.0, 2.0, 3.0]), greedy, self.rng, SPECIAL_IDS)

    def test_non_finite_logits(self):
        with self.assertRaises(ValueError):
            sample_token(np.array([0.0, np.nan, 1.0, 2.0]), SamplerSpec.greedy(), self.rng)

    def test_top_one_is_greedy(self):
        """k = 1 的 top_k 等价于贪心"""
        top_one = SamplerSpec(kind='top_k', k=1)
        for _ in range(50):
            logits = self.rng.normal(size=12)
            self.assertEqual(sample_token(logits, SamplerSpec.greedy(), self.rng),
                             sample_token(logits, top_one, self.rng))

    def test_top_k_restricts_candidates(self):
        """只会采到分数最高的 k 个候选"""
        logits = np.array([0, 0, 0, 1.0, 3.0, 2.9, -1.0])
        drawn = {sample_token(logits, SamplerSpec(kind='top_k', k=2), self.rng) for _ in range(500)}
        self.assertEqual({4, 5}, drawn)

    def test_temperature_frequencies(self):
        """softmax([ln 1, ln 3]) 下编号 1 的频率约为 0.75"""
        logits = np.array([math.log(1), math.log(3)])
        spec = SamplerSpec(kind='temperature', temperature=1.0)
        draws = [sample_token(logits, spec, self.rng) for _ in range(10000)]
        self.assertAlmostEqual(0.75, np.mean(draws), delta=0.02)

    def test_invalid_spec(self):
        with self.assertRaises(ValidationError):
            SamplerSpec(kind='temperature', temperature=0.0)
        with self.assertRaises(ValidationError):
            SamplerSpec(kind='top_k', k=0)


class TestGenerate(TestCase):

    def setUp(self):
        self.rng = np.random.default_rng(1)
        self.model = tiny_model(seed=2)

    def test_trace_shape(self):
        """每一步揭示一个位置，第 t 步快照中有 t 个非 [MASK] 位置"""
        order = GenerationOrder.explicit([2, 6, 0, 1, 3, 5, 4, 7])
        tokens, trace = generate(self.model, GenerationConstraints(target_length=8), order, SamplerSpec.greedy(),
                                 self.rng)
        self.assertEqual(8, len(trace.steps))
        self.assertEqual(order.sigma, trace.order)
        for t, step in enumerate(trace.steps, start=1):
            self.assertEqual(t, step.step)
            self.assertEqual(t, sum(token != MASK_ID for token in step.snapshot))
            self.assertEqual(step.token, step.snapshot[step.position])
        self.assertEqual(tokens.tolist(), trace.steps[-1].snapshot)

    def test_single_position(self):
        """N = 1 时输出单个 [MASK] 前向的 argmax"""
        tokens, _ = generate(self.model, GenerationConstraints(target_length=1), GenerationOrder.left_to_right(1),
                             SamplerSpec.greedy(), self.rng)
        with no_grad():
            logits = self.model.forward(np.array([MASK_ID])).data[0]
        self.assertEqual(sample_token(logits, SamplerSpec.greedy(), self.rng, SPECIAL_IDS), tokens[0])

    def test_deterministic(self):
        """相同种子、顺序与锚点得到相同输出"""
        constraints = GenerationConstraints(anchors={0: 5}, target_length=6)
        outputs = []
        for _ in range(2):
            rng = np.random.default_rng(9)
            order = GenerationOrder.random(6, rng, exclude=constraints.anchors)
            outputs.append(generate(self.model, constraints, order, SamplerSpec(), rng)[0].tolist())
        self.assertEqual(outputs[0], outputs[1])

    def test_invalid_partition(self):
        """顺序与锚点重叠或没有覆盖全部位置"""
        constraints = GenerationConstraints(anchors={1: 4}, target_length=3)
        for sigma in ([0, 1, 2], [0], [0, 2, 3]):
            with self.assertRaises(InvalidOrderException):
                generate(self.model, constraints, GenerationOrder.explicit(sigma), SamplerSpec.greedy(), self.rng)
        with self.assertRaises(ValidationError):
            GenerationOrder.explicit([0, 0])

    def test_invalid_anchors(self):
        with self.assertRaises(ValidationError):
            GenerationConstraints(anchors={0: MASK_ID}, target_length=2)
        with self.assertRaises(ValidationError):
            GenerationConstraints(anchors={2: 5}, target_length=2)

    def test_rejects_causal(self):
        with self.assertRaises(UnsupportedAttentionModeException):
            generate(tiny_model(attention_mode='causal'), GenerationConstraints(target_length=2),
                     GenerationOrder.left_to_right(2), SamplerSpec.greedy(), self.rng)

    def test_randomized_invariants(self):
        """随机长度、锚点与顺序下：没有残留 [MASK]，锚点不变，轨迹可以重放"""
        rng = np.random.default_rng(2024)
        greedy = SamplerSpec.greedy()
        for _ in range(1000):
            n = int(rng.integers(1, 33))
            count = int(rng.integers(0, n))
            positions = rng.choice(n, size=count, replace=False)
            anchors = {int(p): int(t) for p, t in zip(positions, random_tokens(rng, count))}
            constraints = GenerationConstraints(anchors=anchors, target_length=n)
            order = GenerationOrder.random(n, rng, exclude=anchors)
            tokens, trace = generate(self.model, constraints, order, greedy, rng)
            self.assertNotIn(MASK_ID, tokens.tolist())
            self.assertEqual(n - count, len(trace.steps))
            for position, token in anchors.items():
                self.assertEqual(token, tokens[position])
            self.assertEqual([], replay_trace(self.model, constraints, trace))

    def test_identity_order_equals_left_to_right(self):
        """恒等顺序生成与从左到右生成逐词一致"""
        for n in (1, 4, 9):
            prompt = random_tokens(self.rng, n // 2).tolist()
            constraints = GenerationConstraints(anchors=dict(enumerate(prompt)), target_length=n)
            order = GenerationOrder.left_to_right(n, exclude=constraints.anchors)
            expected, _ = generate(self.model, constraints, order, SamplerSpec.greedy(), self.rng)
            actual = generate_left_to_right(self.model, prompt, n, SamplerSpec.greedy(), self.rng)
            self.assertEqual(expected.tolist(), actual.tolist())

    def test_left_to_right_with_closing_anchor(self):
        """开头与结尾都固定时两端保持不变"""
        output = generate_left_to_right(self.model, [3, 4], 8, SamplerSpec.greedy(), self.rng, anchors={7: 5})
        self.assertEqual([3, 4], output[:2].tolist())
        self.assertEqual(5, output[7])
        with self.assertRaises(InvalidOrderException):
            generate_left_to_right(self.model, [3, 4], 8, SamplerSpec.greedy(), self.rng, anchors={1: 5})
        with self.assertRaises(InvalidOrderException):
            generate_left_to_right(self.model, [3, 4], 2, SamplerSpec.greedy(), self.rng)

    def test_never_emits_special_tokens(self):
        """输出层偏向特殊符号时，各生成路径仍只输出普通词"""
        greedy = SamplerSpec.greedy()
        for mode in ('bidirectional', 'causal'):
            model = tiny_model(seed=4, attention_mode=mode)
            model.params['head.bias'].data[list(SPECIAL_IDS)] += 100.0
            if mode == 'causal':
                outputs = [generate_causal(model, 6, greedy, self.rng)]
            else:
                outputs = [generate(model, GenerationConstraints(target_length=6), GenerationOrder.random(6, self.rng),
                                    greedy, self.rng)[0],
                           generate_left_to_right(model, [3], 6, greedy, self.rng)]
            for output in outputs:
                self.assertTrue(all(token >= len(SPECIAL_IDS) for token in output.tolist()), mode)

    def test_replay_detects_tampering(self):
        """篡改轨迹后重放报告不一致的步"""
        constraints = GenerationConstraints(target_length=4)
        _, trace = generate(self.model, constraints, GenerationOrder.left_to_right(4), SamplerSpec.greedy(),
                            self.rng)
        step = trace.steps[1]
        step.token = 3 if step.token != 3 else 4
        self.assertEqual([2], replay_trace(self.model, constraints, trace))


class TestGenerateCausal(TestCase):

    def test_matches_full_forward_greedy(self):
        """增量生成与逐步完整前向的贪心结果一致"""
        model = tiny_model(seed=3, attention_mode='causal')
        greedy = SamplerSpec.greedy()
        output = generate_causal(model, 6, greedy, np.random.default_rng(0), prompt=[4])
        self.assertEqual(4, output[0])
        for n in range(1, 6):
            with no_grad():
                logits = model.forward(causal_inputs(output[:n + 1])).data[n]
            self.assertEqual(sample_token(logits, greedy, None, SPECIAL_IDS), output[n])

    def test_rejects_bidirectional(self):
        with self.assertRaises(UnsupportedAttentionModeException):
            generate_causal(tiny_model(), 3, SamplerSpec.greedy(), np.random.default_rng(0))
