"""掩码模式 M 的采样、概率与枚举"""
import itertools
import logging
import math
from typing import Optional

import numpy as np
from pydantic import BaseModel, model_validator

from pmlm.config import PmlmConfig, MASK_ID
from pmlm.masking.prior import MaskingPrior, log_mask_probability

logger = logging.getLogger('pmlm.masking')


class EnumerationLimitException(Exception):
    """枚举规模超过限制"""

    def __init__(self, n: int, limit: int, message: str = None):
        self.n = n
        self.limit = limit
        self.message = message or f"序列长度 {n} 超过枚举上限 {limit}"
        super().__init__(self.message)


class MaskPattern(BaseModel):
    """掩码模式"""

    mask: list[int]
    """逐位置的二值掩码 m_1..m_N"""
    positions: list[int]
    """升序的被掩码位置 Π（从 0 开始）"""

    @model_validator(mode='after')
    def _check_consistency(self):
        if any(m not in (0, 1) for m in self.mask):
            raise ValueError("掩码只能为 0 或 1")
        if self.positions != [i for i, m in enumerate(self.mask) if m]:
            raise ValueError("被掩码位置与掩码不一致")
        return self

    @classmethod
    def from_mask(cls, mask) -> 'MaskPattern':
        mask = [int(bool(m)) for m in mask]
        return cls(mask=mask, positions=[i for i, m in enumerate(mask) if m])

    @property
    def n(self) -> int:
        """序列长度"""
        return len(self.mask)

    @property
    def k(self) -> int:
        """被掩码位置的个数"""
        return len(self.positions)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.mask, dtype=bool)

    def apply(self, tokens: np.ndarray) -> np.ndarray:
        """把被掩码位置替换为 [MASK]"""
        masked = np.array(tokens, copy=True)
        masked[self.positions] = MASK_ID
        return masked


class MaskWeight(BaseModel):
    """掩码模式在先验下的概率 α_M（对数形式）"""

    log_alpha: float
    """log α_M"""

    @property
    def alpha(self) -> float:
        return math.exp(self.log_alpha)


def sample_mask(n: int, r: float, rng: np.random.Generator,
                pad_flags: Optional[np.ndarray] = None) -> MaskPattern:
    """
    每个非填充位置以概率 r 独立地被掩码
    Args:
        n: 序列长度
        r: 掩码比率
        rng: 随机数发生器
        pad_flags: 填充标记，填充位置永远不会被掩码

    Returns:
        掩码模式
    """
    if not 0.0 <= r <= 1.0:
        raise ValueError(f"掩码比率 {r} 不在 [0, 1] 内")
    mask = rng.random(n) < r
    if pad_flags is not None:
        mask &= ~np.asarray(pad_flags, dtype=bool)
    return MaskPattern.from_mask(mask)


def mask_probability(pattern: MaskPattern, prior: MaskingPrior) -> MaskWeight:
    """计算掩码模式在先验下积分掉 r 之后的概率"""
    return MaskWeight(log_alpha=log_mask_probability(pattern.n, pattern.k, prior))


def enumerate_masks(n: int) -> list[MaskPattern]:
    """
    枚举长度为 n 的全部 2^n 个掩码模式，第 i 个模式的第 j 位是 i 的第 j 个二进制位
    Raises:
        EnumerationLimitException: n 超过枚举上限
    """
    limit = PmlmConfig.PMLM_MASK_ENUMERATION_LIMIT
    if n > limit:
        raise EnumerationLimitException(n, limit)
    return [MaskPattern.from_mask(reversed(bits)) for bits in itertools.product((0, 1), repeat=n)]
