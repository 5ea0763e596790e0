"""从一行分数中采样一个词"""
from typing import Iterable

import numpy as np

from pmlm.config import PAD_ID, MASK_ID, UNK_ID
from pmlm.generation.model import SamplerSpec

SPECIAL_IDS = (PAD_ID, MASK_ID, UNK_ID)


class ExhaustedCandidatesException(Exception):
    """全部候选都被排除"""

    def __init__(self, message="排除特殊符号后没有可选的候选词"):
        self.message = message
        super().__init__(self.message)


def _softmax(scores: np.ndarray) -> np.ndarray:
    exp = np.exp(scores - scores.max())
    return exp / exp.sum()


def sample_token(logits: np.ndarray, sampler: SamplerSpec, rng: np.random.Generator,
                 excluded: Iterable[int] = ()) -> int:
    """
    按采样策略选出一个词
    Args:
        logits: 一行有限的分数
        sampler: 采样策略；greedy 取最大值（并列时取最小编号），temperature 按 softmax(logits/T) 采样，
            top_k 在前 k 个候选上重新归一化后采样
        rng: 随机数发生器
        excluded: 不参与采样的编号，生成时传入 SPECIAL_IDS

    Returns:
        词编号
    Raises:
        ExhaustedCandidatesException: 所有候选都被排除
    """
    logits = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(logits)):
        raise ValueError("分数中包含非有限值")
    allowed = np.ones(len(logits), dtype=bool)
    for token in excluded:
        if 0 <= token < len(logits):
            allowed[token] = False
    if not allowed.any():
        raise ExhaustedCandidatesException()
    scores = np.where(allowed, logits, -np.inf)
    if sampler.kind == 'greedy':
        return int(np.argmax(scores))
    scores = scores / sampler.temperature
    if sampler.kind == 'top_k':
        ranked = np.argsort(-scores, kind='stable')[:min(sampler.k, int(allowed.sum()))]
        return int(ranked[rng.choice(len(ranked), p=_softmax(scores[ranked]))])
    candidates = np.flatnonzero(allowed)
    return int(candidates[rng.choice(len(candidates), p=_softmax(scores[candidates]))])
