"""自回归语言模型目标（GPT 风格，教师强制）

因果模型第一个槽位读入 [MASK] 作为起始标记，位置 n 的输出预测 x_n。
"""
from typing import Optional

import numpy as np

from pmlm.config import PAD_ID, MASK_ID
from pmlm.core import functional as F
from pmlm.model.transformer import Transformer
from pmlm.objective import require_mode
from pmlm.objective.model import LossValue


def causal_inputs(batch: np.ndarray) -> np.ndarray:
    """右移一位并在开头放入起始标记"""
    batch = np.asarray(batch)
    shifted = np.empty_like(batch)
    shifted[..., 0] = MASK_ID
    shifted[..., 1:] = batch[..., :-1]
    return shifted


def ar_batch_loss(model: Transformer, batch: np.ndarray, training: bool = False,
                  rng: Optional[np.random.Generator] = None) -> LossValue:
    """
    一个批次上的自回归损失，每条序列先在自身非填充位置上取平均，再在序列间取平均
    Args:
        model: 因果模型
        batch: 形状为 (B, N) 的序列
        training: 是否启用随机失活
        rng: 随机失活使用的随机数发生器
    """
    require_mode(model, 'causal', 'ar_loss')
    batch = np.atleast_2d(np.asarray(batch))
    valid = batch != PAD_ID
    counts = valid.sum(axis=1)
    rows = counts > 0
    if not rows.any():
        return LossValue(value=0.0, token_count=0)
    weights = np.zeros(batch.shape)
    weights[rows] = valid[rows] / counts[rows, None] / rows.sum()
    logits = model.forward(causal_inputs(batch), training=training, rng=rng)
    return LossValue.from_graph(F.cross_entropy(logits, batch, weights), int(counts.sum()))


def ar_loss(model: Transformer, tokens: np.ndarray) -> LossValue:
    """
    单条序列的自回归损失 -(1/N) Σ_n log p(x_n | x_1..x_{n-1})，[PAD] 不计入
    Raises:
        UnsupportedAttentionModeException: 模型不是因果模式
    """
    return ar_batch_loss(model, np.asarray(tokens).reshape(1, -1))
