"""任意顺序生成

双向模型：从全 [MASK] 序列出发（锚点事先揭示），每一步对当前快照做一次完整前向，
在 σ 指定的位置上采样一个词，直到所有位置都被揭示。
因果模型：首位读入 [MASK] 作为起始符，借助键值缓存逐个向右生成。
"""
import logging
from typing import Optional, Sequence

import numpy as np

from pmlm.config import MASK_ID
from pmlm.core.tensor import no_grad
from pmlm.generation.model import (GenerationConstraints, GenerationOrder, GenerationStep, GenerationTrace,
                                   SamplerSpec)
from pmlm.generation.sampler import sample_token, SPECIAL_IDS
from pmlm.model.transformer import Transformer, UnsupportedAttentionModeException

logger = logging.getLogger('pmlm.generation')


class InvalidOrderException(Exception):
    """生成顺序与锚点没有恰好划分全部位置"""

    def __init__(self, message="生成顺序与锚点必须恰好覆盖全部位置且互不重叠"):
        self.message = message
        super().__init__(self.message)


def _require_bidirectional(model: Transformer, operation: str):
    if model.attention_mode != 'bidirectional':
        raise UnsupportedAttentionModeException(model.attention_mode, operation)


def _check_partition(constraints: GenerationConstraints, order: GenerationOrder):
    n = constraints.target_length
    anchored = set(constraints.anchors)
    overlap = anchored.intersection(order.sigma)
    if overlap:
        raise InvalidOrderException(f"位置 {sorted(overlap)} 既是锚点又出现在生成顺序中")
    covered = anchored.union(order.sigma)
    if covered != set(range(n)):
        missing = sorted(set(range(n)) - covered)
        extra = sorted(covered - set(range(n)))
        raise InvalidOrderException(f"生成顺序与锚点没有划分 [0, {n}): 缺少 {missing}，越界 {extra}")


def initial_sequence(constraints: GenerationConstraints) -> np.ndarray:
    """全 [MASK] 序列，锚点位置填入锚点词"""
    sequence = np.full(constraints.target_length, MASK_ID, dtype=np.int64)
    for position, token in constraints.anchors.items():
        sequence[position] = token
    return sequence


def generate(model: Transformer, constraints: GenerationConstraints, order: GenerationOrder,
             sampler: SamplerSpec, rng: np.random.Generator) -> tuple[np.ndarray, GenerationTrace]:
    """
    按给定顺序生成一条序列
    Args:
        model: 双向模型
        constraints: 锚点与目标长度
        order: 生成顺序，必须恰好覆盖非锚点位置
        sampler: 采样策略
        rng: 随机数发生器

    Returns:
        生成的序列（不含 [MASK]）与逐步轨迹
    Raises:
        UnsupportedAttentionModeException: 模型不是双向模式
        InvalidOrderException: 顺序与锚点重叠或没有覆盖全部位置
    """
    _require_bidirectional(model, 'generate')
    _check_partition(constraints, order)
    sequence = initial_sequence(constraints)
    trace = GenerationTrace()
    with no_grad():
        for step, position in enumerate(order.sigma, start=1):
            logits = model.forward(sequence).data[position]
            token = sample_token(logits, sampler, rng, SPECIAL_IDS)
            sequence[position] = token
            trace.steps.append(GenerationStep(step=step, position=position, token=token,
                                              snapshot=sequence.tolist()))
            logger.debug(f'第 {step} 步: 位置 {position} -> {token}')
    return sequence, trace


def generate_left_to_right(model: Transformer, prompt: Sequence[int], target_length: int, sampler: SamplerSpec,
                           rng: np.random.Generator, anchors: Optional[dict[int, int]] = None) -> np.ndarray:
    """
    以前缀为锚点、其余位置从左到右生成
    Args:
        model: 双向模型
        prompt: 前缀，放在位置 0..|prompt|-1
        target_length: 目标长度，必须大于前缀长度
        sampler: 采样策略
        rng: 随机数发生器
        anchors: 额外的锚点（例如固定结尾）

    Raises:
        InvalidOrderException: 前缀不短于目标长度，或额外锚点与前缀冲突
    """
    prompt = [int(token) for token in prompt]
    if len(prompt) >= target_length:
        raise InvalidOrderException(f"前缀长度 {len(prompt)} 必须小于目标长度 {target_length}")
    merged = dict(enumerate(prompt))
    for position, token in (anchors or {}).items():
        if merged.get(position, token) != token:
            raise InvalidOrderException(f"锚点位置 {position} 与前缀冲突")
        merged[position] = token
    constraints = GenerationConstraints(anchors=merged, target_length=target_length)
    order = GenerationOrder.left_to_right(target_length, exclude=merged)
    sequence, _ = generate(model, constraints, order, sampler, rng)
    return sequence


def replay_trace(model: Transformer, constraints: GenerationConstraints, trace: GenerationTrace) -> list[int]:
    """
    逐步重放贪心生成的轨迹：以上一步快照为输入重新求 argmax，检查是否与记录一致
    Returns:
        不一致的步数，全部一致时为空
    """
    _require_bidirectional(model, 'replay_trace')
    greedy = SamplerSpec.greedy()
    sequence = initial_sequence(constraints)
    mismatched = []
    with no_grad():
        for step in trace.steps:
            logits = model.forward(sequence).data[step.position]
            if sample_token(logits, greedy, None, SPECIAL_IDS) != step.token:
                mismatched.append(step.step)
            sequence = np.asarray(step.snapshot, dtype=np.int64)
    if mismatched:
        logger.warning(f'轨迹重放不一致的步: {mismatched}')
    return mismatched


def generate_causal(model: Transformer, length: int, sampler: SamplerSpec, rng: np.random.Generator,
                    prompt: Sequence[int] = ()) -> np.ndarray:
    """
    因果模型从左到右生成，每一步只对新位置做增量前向
    Args:
        model: 因果模型
        length: 目标长度（不含起始符）
        sampler: 采样策略
        rng: 随机数发生器
        prompt: 前缀

    Raises:
        UnsupportedAttentionModeException: 模型不是因果模式
        InvalidOrderException: 前缀长于目标长度
    """
    if model.attention_mode != 'causal':
        raise UnsupportedAttentionModeException(model.attention_mode, 'generate_causal')
    if len(prompt) > length:
        raise InvalidOrderException(f"前缀长度 {len(prompt)} 超过目标长度 {length}")
    tokens = [MASK_ID, *(int(token) for token in prompt)]
    cache = None
    while len(tokens) - 1 < length:
        logits, cache = model.forward_incremental(np.asarray(tokens), cache)
        tokens.append(sample_token(logits, sampler, rng, SPECIAL_IDS))
    return np.asarray(tokens[1:], dtype=np.int64)
