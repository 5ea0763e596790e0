"""训练目标相关的数据结构"""
import math
from typing import Optional

from pydantic import BaseModel, PrivateAttr

from pmlm.core.tensor import Tensor


class LossValue(BaseModel):
    """平均负对数似然（单位：nats）"""

    value: float
    """平均负对数似然"""
    token_count: int
    """参与计算的位置数"""

    _graph: Optional[Tensor] = PrivateAttr(default=None)

    @classmethod
    def from_graph(cls, graph: Tensor, token_count: int) -> 'LossValue':
        """由记录了计算图的标量损失构造，训练时可直接反向传播"""
        loss = cls(value=graph.item(), token_count=token_count)
        loss._graph = graph
        return loss

    @property
    def graph(self) -> Optional[Tensor]:
        """计算图，未记录或没有贡献位置时为 None"""
        return self._graph

    @property
    def perplexity(self) -> float:
        return math.exp(self.value)


class DuplicationEntry(BaseModel):
    """给定掩码大小 K 时，每个 (掩码, 下一位置) 条件项被排列重复的次数"""

    k: int
    """掩码大小"""
    expected: int
    """公式 (N-K)!(K-1)!"""
    observed_min: int
    """实际计数的最小值"""
    observed_max: int
    """实际计数的最大值"""
    groups: int
    """不同 (掩码, 下一位置) 组合的个数，应为 C(N,K)*K"""
    ok: bool
    """计数是否全部等于公式值"""


class EquivalenceReport(BaseModel):
    """u-PMLM 与排列自回归模型等价性的数值验证报告"""

    n: int
    """序列长度"""
    pmlm_exact: float
    """u-PMLM 精确期望损失（nats）"""
    aplm_mean: float
    """对全部 N! 个排列取平均的自回归总负对数似然（nats）"""
    aplm_normalized: float
    """用常数 C 归一化的排列总负对数似然（nats），应等于 pmlm_exact"""
    scaled_pmlm: float
    """(N+1) * pmlm_exact，应等于 aplm_mean"""
    constant_C: int
    """归一化常数 C = (N+1)!"""
    max_abs_gap: float
    """两种归一化形式下的最大绝对误差"""
    tolerance: float
    """允许的误差"""
    duplication_audit: dict[int, DuplicationEntry]
    """按 K 分组的重复因子核对结果"""
    passed: bool
    """误差在容许范围内且重复因子全部核对通过"""
