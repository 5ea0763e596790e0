"""训练目标：自回归、MLM、PMLM、APLM 及其精确枚举"""
import logging

import numpy as np

from pmlm.config import PAD_ID, MASK_ID
from pmlm.core.functional import log_softmax_array
from pmlm.core.tensor import no_grad
from pmlm.masking.pattern import EnumerationLimitException
from pmlm.model.config import AttentionMode
from pmlm.model.transformer import Transformer, UnsupportedAttentionModeException, InvalidSequenceException

logger = logging.getLogger('pmlm.objective')


class EmptyMaskException(Exception):
    """掩码集合为空（K = 0）"""

    def __init__(self, message="掩码集合为空，MLM 损失中的 1/K 没有定义"):
        self.message = message
        super().__init__(self.message)


def require_mode(model: Transformer, mode: AttentionMode, operation: str):
    """检查模型的注意力模式"""
    if model.attention_mode != mode:
        raise UnsupportedAttentionModeException(model.attention_mode, operation)


def require_length(n: int, limit: int):
    """检查枚举规模"""
    if n > limit:
        raise EnumerationLimitException(n, limit)


def require_unpadded(tokens: np.ndarray):
    """精确枚举只接受不含 [PAD] 的序列"""
    pads = np.flatnonzero(tokens == PAD_ID)
    if len(pads):
        raise InvalidSequenceException(int(pads[0]), PAD_ID, message=f"精确枚举不接受 [PAD]，位置 {pads[0]}")


def mask_bits(n: int) -> np.ndarray:
    """形状为 (2^n, n) 的布尔数组，第 i 行是整数 i 的二进制展开（低位在前）"""
    indices = np.arange(2 ** n)
    return ((indices[:, None] >> np.arange(n)[None, :]) & 1).astype(bool)


def conditional_log_probs(model: Transformer, tokens: np.ndarray) -> np.ndarray:
    """
    一次批量前向得到全部 2^N 种掩码输入下，每个位置上真实词的对数概率
    Args:
        model: 双向模型
        tokens: 一维序列

    Returns:
        形状为 (2^N, N) 的数组，[i, n] 为 log p(x_n | 掩码模式 i 下的输入)
    """
    tokens = np.asarray(tokens)
    n = len(tokens)
    bits = mask_bits(n)
    inputs = np.where(bits, MASK_ID, tokens[None, :])
    with no_grad():
        logits = model.forward(inputs, training=False).data
    log_probs = log_softmax_array(logits)
    table = np.take_along_axis(log_probs, np.broadcast_to(tokens, bits.shape)[..., None], axis=-1)[..., 0]
    logger.debug(f'条件概率表计算完成: N={n}，共 {len(bits)} 种掩码')
    return table
