"""生成耗时对比：双向模型逐步完整重算 vs. 因果模型增量缓存"""
import logging
import time

import numpy as np

from pmlm.evaluation.model import LatencyBenchmark, LatencyReport
from pmlm.generation.generator import generate, generate_causal
from pmlm.generation.model import GenerationConstraints, GenerationOrder, SamplerSpec
from pmlm.model.transformer import Transformer, UnsupportedAttentionModeException

logger = logging.getLogger('pmlm.evaluation.latency')


def _same_size(causal: Transformer, bidirectional: Transformer) -> bool:
    fields = ('vocab_size', 'layers', 'heads', 'hidden_size', 'intermediate_size', 'positional_kind')
    return all(getattr(causal.config, f) == getattr(bidirectional.config, f) for f in fields)


def bench_latency(causal: Transformer, bidirectional: Transformer, count: int, length: int,
                  sampler: SamplerSpec, seed: int = 0) -> LatencyBenchmark:
    """
    分别用两种路径生成 count 条长度为 length 的序列并计时
    Args:
        causal: 因果模型（增量缓存路径）
        bidirectional: 同规模的双向模型（完整重算路径）
        count: 序列条数
        length: 序列长度
        sampler: 采样策略
        seed: 两条路径各自使用 default_rng(seed)

    Returns:
        两行耗时报告，比例相对因果模型
    """
    if causal.attention_mode != 'causal':
        raise UnsupportedAttentionModeException(causal.attention_mode, 'bench_latency')
    if bidirectional.attention_mode != 'bidirectional':
        raise UnsupportedAttentionModeException(bidirectional.attention_mode, 'bench_latency')
    if not _same_size(causal, bidirectional):
        logger.warning('两个模型规模不一致，耗时比没有可比性')

    rng = np.random.default_rng(seed)
    start = time.perf_counter()
    for _ in range(count):
        generate_causal(causal, length, sampler, rng)
    causal_seconds = max(time.perf_counter() - start, 1e-9)

    rng = np.random.default_rng(seed)
    constraints = GenerationConstraints(target_length=length)
    order = GenerationOrder.left_to_right(length)
    start = time.perf_counter()
    for _ in range(count):
        generate(bidirectional, constraints, order, sampler, rng)
    bidirectional_seconds = max(time.perf_counter() - start, 1e-9)

    reports = [
        LatencyReport(model_kind='causal', count=count, length=length, seconds=causal_seconds,
                      forwards=count * length, ratio=1.0),
        LatencyReport(model_kind='bidirectional', count=count, length=length, seconds=bidirectional_seconds,
                      forwards=count * length, ratio=bidirectional_seconds / causal_seconds),
    ]
    logger.info(f'生成耗时: 因果 {causal_seconds:.3f}s，双向 {bidirectional_seconds:.3f}s')
    return LatencyBenchmark(reports=reports)
