"""概率掩码语言模型（PMLM）目标：采样估计与精确枚举"""
import logging
from typing import Literal, Optional

import numpy as np

from pmlm.config import PmlmConfig, PAD_ID, MASK_ID
from pmlm.core import functional as F
from pmlm.masking.pattern import MaskPattern, sample_mask
from pmlm.masking.prior import MaskingPrior, sample_ratio, log_mask_probability
from pmlm.model.transformer import Transformer
from pmlm.objective import (require_mode, require_length, require_unpadded, conditional_log_probs,
                            mask_bits)
from pmlm.objective.mlm import mlm_loss
from pmlm.objective.model import LossValue

logger = logging.getLogger('pmlm.objective.pmlm')

ZeroMaskPolicy = Literal['resample_once', 'zero']
"""K = 0 时的处理方式：重采样一次，或直接记为 0 损失"""


def draw_pattern(n: int, prior: MaskingPrior, rng: np.random.Generator,
                 pad_flags: Optional[np.ndarray] = None,
                 zero_mask_policy: ZeroMaskPolicy = 'resample_once') -> MaskPattern:
    """先采样比率 r，再按 r 独立掩码每个位置"""
    pattern = sample_mask(n, sample_ratio(prior, rng), rng, pad_flags)
    if pattern.k == 0 and zero_mask_policy == 'resample_once':
        logger.debug('采样到空掩码，重采样一次')
        pattern = sample_mask(n, sample_ratio(prior, rng), rng, pad_flags)
    return pattern


def pmlm_training_step(model: Transformer, tokens: np.ndarray, prior: MaskingPrior, rng: np.random.Generator,
                       training: bool = False,
                       zero_mask_policy: ZeroMaskPolicy = 'resample_once') -> LossValue:
    """
    采样一个 (r, M) 后计算 MLM 损失，是 PMLM 期望损失的单样本估计

    zero_mask_policy 为 'zero' 时估计是无偏的；'resample_once' 用于训练，避免浪费步数。
    最终仍为空掩码时返回 token_count = 0 的零损失。
    """
    require_mode(model, 'bidirectional', 'pmlm_training_step')
    tokens = np.asarray(tokens)
    pattern = draw_pattern(len(tokens), prior, rng, tokens == PAD_ID, zero_mask_policy)
    if pattern.k == 0:
        return LossValue(value=0.0, token_count=0)
    return mlm_loss(model, tokens, pattern, training=training, rng=rng)


def pmlm_batch_loss(model: Transformer, batch: np.ndarray, prior: MaskingPrior, rng: np.random.Generator,
                    training: bool = False,
                    zero_mask_policy: ZeroMaskPolicy = 'resample_once') -> LossValue:
    """
    批量版本的采样估计：每条序列独立采样 (r, M)，各自的 MLM 损失在批内取平均
    Args:
        model: 双向模型
        batch: 形状为 (B, N) 的序列
        prior: 掩码比率先验
        rng: 随机数发生器，同时用于采样和随机失活
        training: 是否启用随机失活
        zero_mask_policy: K = 0 的处理方式
    """
    require_mode(model, 'bidirectional', 'pmlm_training_step')
    batch = np.atleast_2d(np.asarray(batch))
    masks = np.stack([draw_pattern(batch.shape[1], prior, rng, row == PAD_ID, zero_mask_policy).as_array()
                      for row in batch])
    counts = masks.sum(axis=1)
    rows = counts > 0
    if not rows.any():
        return LossValue(value=0.0, token_count=0)
    weights = np.zeros(batch.shape)
    weights[rows] = masks[rows] / counts[rows, None] / len(batch)
    logits = model.forward(np.where(masks, MASK_ID, batch), training=training, rng=rng)
    return LossValue.from_graph(F.cross_entropy(logits, batch, weights), int(counts.sum()))


def expected_log_likelihood(table: np.ndarray, prior: MaskingPrior) -> float:
    """
    Σ_M α_M (1/K) Σ_k log p(x_{π_k} | X_{-Π})，K = 0 的项记为 0
    Args:
        table: conditional_log_probs 得到的 (2^N, N) 条件对数概率表
        prior: 掩码比率先验
    """
    n = table.shape[1]
    bits = mask_bits(n)
    counts = bits.sum(axis=1)
    alpha = np.exp([log_mask_probability(n, k, prior) for k in range(n + 1)])[counts]
    per_mask = np.where(counts > 0, (table * bits).sum(axis=1) / np.maximum(counts, 1), 0.0)
    return float((alpha * per_mask).sum())


def pmlm_exact_loss(model: Transformer, tokens: np.ndarray, prior: MaskingPrior) -> LossValue:
    """
    枚举全部 2^N 个掩码模式得到 PMLM 期望损失
    Raises:
        EnumerationLimitException: N 超过精确计算上限
    """
    require_mode(model, 'bidirectional', 'pmlm_exact_loss')
    tokens = np.asarray(tokens)
    require_length(len(tokens), PmlmConfig.PMLM_EXACT_LOSS_LIMIT)
    require_unpadded(tokens)
    table = conditional_log_probs(model, tokens)
    return LossValue(value=-expected_log_likelihood(table, prior), token_count=len(tokens))
