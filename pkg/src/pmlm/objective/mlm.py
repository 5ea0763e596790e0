"""掩码语言模型目标"""
import numpy as np

from pmlm.core import functional as F
from pmlm.masking.pattern import MaskPattern
from pmlm.model.transformer import Transformer
from pmlm.objective import require_mode, EmptyMaskException
from pmlm.objective.model import LossValue


def mlm_loss(model: Transformer, tokens: np.ndarray, pattern: MaskPattern, training: bool = False,
             rng: np.random.Generator = None) -> LossValue:
    """
    -(1/K) Σ_k log p(x_{π_k} | X_{-Π})，被掩码位置输入替换为 [MASK]，未掩码位置不计入损失
    Args:
        model: 双向模型
        tokens: 一维原始序列
        pattern: 掩码模式
        training: 是否启用随机失活
        rng: 随机失活使用的随机数发生器

    Raises:
        EmptyMaskException: K = 0，由调用方决定如何处理
        UnsupportedAttentionModeException: 模型不是双向模式
    """
    require_mode(model, 'bidirectional', 'mlm_loss')
    tokens = np.asarray(tokens)
    if pattern.n != len(tokens):
        raise ValueError(f"掩码长度 {pattern.n} 与序列长度 {len(tokens)} 不一致")
    if pattern.k == 0:
        raise EmptyMaskException()
    weights = pattern.as_array() / pattern.k
    logits = model.forward(pattern.apply(tokens), training=training, rng=rng)
    return LossValue.from_graph(F.cross_entropy(logits, tokens, weights), pattern.k)
