"""掩码比率先验 p(r)"""
from functools import lru_cache
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, Field, model_validator
from scipy.integrate import quad
from scipy.special import gammaln, xlogy

PriorKind = Literal['uniform', 'point_mass', 'truncated_uniform']


class MaskingPrior(BaseModel):
    """
    掩码比率 r 的先验分布

    - uniform: [0, 1] 上的连续均匀分布（u-PMLM）
    - point_mass: 固定比率 r0（BERT 风格，如 0.15）
    - truncated_uniform: [a, b] 上的均匀分布
    """

    kind: PriorKind = 'uniform'
    """先验类型"""
    r0: Optional[float] = Field(default=None, ge=0.0, le=1.0)
    """点质量先验的比率"""
    a: float = Field(default=0.0, ge=0.0, le=1.0)
    """截断均匀先验的下界"""
    b: float = Field(default=1.0, ge=0.0, le=1.0)
    """截断均匀先验的上界"""

    @model_validator(mode='after')
    def _check_bounds(self):
        if self.kind == 'point_mass':
            if self.r0 is None:
                raise ValueError("point_mass 先验需要指定 r0")
        elif self.kind == 'uniform':
            if (self.a, self.b) != (0.0, 1.0):
                raise ValueError("uniform 先验的区间固定为 [0, 1]")
        elif not self.a < self.b:
            raise ValueError(f"truncated_uniform 先验需要 a < b，当前 a={self.a}, b={self.b}")
        return self

    @classmethod
    def uniform(cls) -> 'MaskingPrior':
        return cls(kind='uniform')

    @classmethod
    def point_mass(cls, r0: float) -> 'MaskingPrior':
        return cls(kind='point_mass', r0=r0)

    @classmethod
    def truncated_uniform(cls, a: float, b: float) -> 'MaskingPrior':
        return cls(kind='truncated_uniform', a=a, b=b)

    @property
    def mean(self) -> float:
        """先验均值"""
        if self.kind == 'point_mass':
            return self.r0
        return (self.a + self.b) / 2

    @property
    def variance(self) -> float:
        """先验方差"""
        if self.kind == 'point_mass':
            return 0.0
        return (self.b - self.a) ** 2 / 12


def sample_ratio(prior: MaskingPrior, rng: np.random.Generator) -> float:
    """
    从先验中采样掩码比率
    Args:
        prior: 先验
        rng: 随机数发生器

    Returns:
        位于先验支撑集内的比率 r
    """
    if prior.kind == 'point_mass':
        return float(prior.r0)
    return float(prior.a + (prior.b - prior.a) * rng.random())


@lru_cache(maxsize=4096)
def _truncated_log_alpha(n: int, k: int, a: float, b: float) -> float:
    value, _ = quad(lambda r: r ** k * (1.0 - r) ** (n - k), a, b, epsabs=0.0, epsrel=1e-13, limit=200)
    if value <= 0.0:
        return -np.inf
    return float(np.log(value) - np.log(b - a))


def log_mask_probability(n: int, k: int, prior: MaskingPrior) -> float:
    """
    长度为 n、掩码数为 k 的某个具体掩码模式的对数概率 log α_M

    - uniform: lgamma(N-K+1) + lgamma(K+1) - lgamma(N+2)，即 log[(N-K)!K!/(N+1)!]
    - point_mass: K log r0 + (N-K) log(1-r0)，r0 ∈ {0, 1} 且 K 不相容时为 -inf
    - truncated_uniform: 对 r^K (1-r)^(N-K) / (b-a) 在 [a, b] 上数值积分
    """
    if not 0 <= k <= n:
        raise ValueError(f"掩码数 {k} 不在 [0, {n}] 内")
    if prior.kind == 'uniform':
        return float(gammaln(n - k + 1) + gammaln(k + 1) - gammaln(n + 2))
    if prior.kind == 'point_mass':
        return float(xlogy(k, prior.r0) + xlogy(n - k, 1.0 - prior.r0))
    return _truncated_log_alpha(n, k, prior.a, prior.b)
