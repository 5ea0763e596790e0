"""顺序与随机顺序困惑度

双向模型按顺序 σ 打分：位置 σ_t 上的真实词在 σ_1..σ_{t-1} 揭示真实词、其余位置为 [MASK] 的条件下计算概率；
因果模型只支持从左到右的顺序。[PAD] 不参与分子和计数。
"""
import logging
import math
from typing import Iterable

import numpy as np

from pmlm.config import PAD_ID, MASK_ID
from pmlm.core.functional import log_softmax_array
from pmlm.core.tensor import no_grad
from pmlm.evaluation.model import PplMode, PplReport, SequencePpl
from pmlm.model.transformer import Transformer, UnsupportedAttentionModeException
from pmlm.objective.ar import causal_inputs

logger = logging.getLogger('pmlm.evaluation')


class UnsupportedModeException(Exception):
    """模型不支持所请求的评估模式"""

    def __init__(self, mode: str, model_kind: str, message: str = None):
        self.mode = mode
        self.model_kind = model_kind
        self.message = message or f"{model_kind} 模型不支持 {mode} 模式的困惑度（只能从左到右打分）"
        super().__init__(self.message)


class EmptyCorpusException(Exception):
    """语料中没有可打分的位置"""

    def __init__(self, message="语料为空或只包含 [PAD]"):
        self.message = message
        super().__init__(self.message)


def scoring_order(tokens: np.ndarray, mode: PplMode, seed: int, index: int) -> np.ndarray:
    """第 index 条序列的打分顺序：顺序模式为非填充位置升序，随机模式由 (seed, index) 确定的均匀排列"""
    valid = np.flatnonzero(tokens != PAD_ID)
    if mode == 'random':
        return np.random.default_rng([seed, index]).permutation(valid)
    return valid


def order_inputs(tokens: np.ndarray, order: np.ndarray) -> np.ndarray:
    """形状为 (T, N) 的输入，第 t 行揭示 σ_1..σ_{t-1}，σ_t..σ_T 为 [MASK]"""
    inputs = np.repeat(tokens[None, :], len(order), axis=0)
    for t in range(len(order)):
        inputs[t, order[t:]] = MASK_ID
    return inputs


def _report(mode: PplMode, model_kind: str, seed: int, sequences: list[SequencePpl]) -> PplReport:
    token_count = sum(s.token_count for s in sequences)
    if token_count == 0:
        raise EmptyCorpusException()
    mean_nll = sum(s.nll for s in sequences) / token_count
    report = PplReport(mode=mode, model_kind=model_kind, ppl=math.exp(max(mean_nll, 0.0)), mean_nll=mean_nll,
                       token_count=token_count, seed=seed, sequences=sequences)
    logger.info(f'{model_kind} 模型 {mode} 困惑度 {report.ppl:.4f}（{token_count} 个位置）')
    return report


def ppl_bidirectional(model: Transformer, corpus: Iterable[np.ndarray], mode: PplMode = 'sequential',
                      seed: int = 0) -> PplReport:
    """
    双向模型在给定顺序下的教师强制困惑度
    Args:
        model: 双向模型
        corpus: 序列集合，可以含尾部 [PAD]
        mode: sequential 使用恒等顺序，random 为每条序列抽一个均匀随机顺序
        seed: 随机顺序的种子

    Raises:
        UnsupportedAttentionModeException: 模型不是双向模式
        EmptyCorpusException: 没有可打分的位置
    """
    if model.attention_mode != 'bidirectional':
        raise UnsupportedAttentionModeException(model.attention_mode, 'ppl_bidirectional')
    sequences = []
    with no_grad():
        for index, tokens in enumerate(corpus):
            tokens = np.asarray(tokens, dtype=np.int64)
            order = scoring_order(tokens, mode, seed, index)
            nll = 0.0
            if len(order):
                log_probs = log_softmax_array(model.forward(order_inputs(tokens, order)).data)
                steps = np.arange(len(order))
                nll = -float(log_probs[steps, order, tokens[order]].sum())
            sequences.append(SequencePpl(index=index, order=order.tolist(), nll=nll, token_count=len(order)))
    return _report(mode, 'bidirectional', seed, sequences)


def ppl_causal(model: Transformer, corpus: Iterable[np.ndarray], mode: PplMode = 'sequential') -> PplReport:
    """
    因果模型从左到右的教师强制困惑度
    Raises:
        UnsupportedModeException: 请求随机顺序
        UnsupportedAttentionModeException: 模型不是因果模式
        EmptyCorpusException: 没有可打分的位置
    """
    if mode == 'random':
        raise UnsupportedModeException(mode, model.attention_mode)
    if model.attention_mode != 'causal':
        raise UnsupportedAttentionModeException(model.attention_mode, 'ppl_causal')
    sequences = []
    with no_grad():
        for index, tokens in enumerate(corpus):
            tokens = np.asarray(tokens, dtype=np.int64)
            valid = np.flatnonzero(tokens != PAD_ID)
            log_probs = log_softmax_array(model.forward(causal_inputs(tokens)).data)
            nll = -float(log_probs[valid, tokens[valid]].sum())
            sequences.append(SequencePpl(index=index, order=valid.tolist(), nll=nll, token_count=len(valid)))
    return _report(mode, 'causal', 0, sequences)
