"""排列自回归语言模型（APLM）目标，只作为验证用的精确枚举

条件概率 p(x_{σ_t} | x_{σ_1}..x_{σ_{t-1}}) 通过双向模型计算：已揭示位置输入真实词，其余位置输入 [MASK]。
"""
import itertools
import math

import numpy as np

from pmlm.config import PmlmConfig
from pmlm.model.transformer import Transformer
from pmlm.objective import require_mode, require_length, require_unpadded, conditional_log_probs
from pmlm.objective.model import LossValue


def hidden_set_index(hidden) -> int:
    """未揭示位置集合对应的掩码编号"""
    return sum(1 << position for position in hidden)


def permutation_total(table: np.ndarray) -> float:
    """
    Σ_σ Σ_t log p(x_{σ_t} | 已揭示 σ_1..σ_{t-1})
    Args:
        table: conditional_log_probs 得到的 (2^N, N) 条件对数概率表
    """
    n = table.shape[1]
    total = 0.0
    for sigma in itertools.permutations(range(n)):
        for t in range(n):
            total += table[hidden_set_index(sigma[t:]), sigma[t]]
    return total


def aplm_exact_loss(model: Transformer, tokens: np.ndarray) -> LossValue:
    """
    -(1/(N·N!)) Σ_σ Σ_t log p(x_{σ_t} | x_{σ_1}..x_{σ_{t-1}})
    Raises:
        EnumerationLimitException: N 超过排列枚举上限
    """
    require_mode(model, 'bidirectional', 'aplm_exact_loss')
    tokens = np.asarray(tokens)
    n = len(tokens)
    require_length(n, PmlmConfig.PMLM_PERMUTATION_LIMIT)
    require_unpadded(tokens)
    total = permutation_total(conditional_log_probs(model, tokens))
    return LossValue(value=-total / (n * math.factorial(n)), token_count=n)
