"""生成相关的数据结构"""
from typing import Literal, Iterable

import numpy as np
from pydantic import BaseModel, Field, model_validator

from pmlm.config import MASK_ID, PAD_ID

OrderMode = Literal['random', 'left_to_right', 'explicit']
SamplerKind = Literal['greedy', 'temperature', 'top_k']


class GenerationOrder(BaseModel):
    """生成顺序 σ，只包含需要生成的位置（锚点位置事先揭示，不在其中）"""

    sigma: list[int]
    """依次预测的位置（从 0 开始）"""
    mode: OrderMode = 'explicit'
    """顺序来源"""

    @model_validator(mode='after')
    def _check_sigma(self):
        if len(set(self.sigma)) != len(self.sigma) or any(p < 0 for p in self.sigma):
            raise ValueError(f"生成顺序必须由互不相同的非负位置组成: {self.sigma}")
        if self.mode == 'left_to_right' and self.sigma != sorted(self.sigma):
            raise ValueError("left_to_right 顺序必须升序")
        return self

    @classmethod
    def random(cls, n: int, rng: np.random.Generator, exclude: Iterable[int] = ()) -> 'GenerationOrder':
        """一次性抽取剩余位置的均匀随机排列，与每步从 U 中均匀挑选同分布，且可重放"""
        excluded = set(exclude)
        remaining = np.array([p for p in range(n) if p not in excluded], dtype=np.int64)
        return cls(sigma=rng.permutation(remaining).tolist(), mode='random')

    @classmethod
    def left_to_right(cls, n: int, exclude: Iterable[int] = ()) -> 'GenerationOrder':
        excluded = set(exclude)
        return cls(sigma=[p for p in range(n) if p not in excluded], mode='left_to_right')

    @classmethod
    def explicit(cls, sigma: Iterable[int]) -> 'GenerationOrder':
        return cls(sigma=list(sigma), mode='explicit')


class GenerationConstraints(BaseModel):
    """生成约束：固定在指定位置上的锚点词与目标长度"""

    anchors: dict[int, int] = Field(default_factory=dict)
    """位置 -> 词编号"""
    target_length: int = Field(ge=1)
    """目标长度 N"""

    @model_validator(mode='after')
    def _check_anchors(self):
        for position, token in self.anchors.items():
            if not 0 <= position < self.target_length:
                raise ValueError(f"锚点位置 {position} 不在 [0, {self.target_length}) 内")
            if token in (MASK_ID, PAD_ID):
                raise ValueError(f"锚点位置 {position} 上不能是 [MASK] 或 [PAD]")
        return self


class GenerationStep(BaseModel):
    """生成过程中的一步"""

    step: int
    """步数，从 1 开始"""
    position: int
    """本步预测的位置"""
    token: int
    """本步生成的词"""
    snapshot: list[int]
    """本步结束后的序列状态"""


class GenerationTrace(BaseModel):
    """生成轨迹"""

    steps: list[GenerationStep] = Field(default_factory=list)
    """按顺序记录的每一步"""

    @property
    def order(self) -> list[int]:
        return [step.position for step in self.steps]


class SamplerSpec(BaseModel):
    """采样策略"""

    kind: SamplerKind = 'top_k'
    """greedy / temperature / top_k"""
    temperature: float = Field(default=1.0, gt=0.0)
    """温度"""
    k: int = Field(default=40, ge=1)
    """top_k 保留的候选数"""

    @classmethod
    def greedy(cls) -> 'SamplerSpec':
        return cls(kind='greedy')
