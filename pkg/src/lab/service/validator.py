import math
from abc import abstractmethod
from typing import Generic, TypeVar

from lab.service.entity import RunConfig

_CHECKED = TypeVar('_CHECKED')


class Validator(Generic[_CHECKED]):
    """训练前后的检查器，如训练配置是否自洽、每步损失是否有限"""

    @abstractmethod
    def validate(self, item: _CHECKED) -> bool:
        """返回 False 时调用方拒绝该配置或中止训练"""
        pass

    def __call__(self, item: _CHECKED) -> bool:
        return self.validate(item)


class InvalidRunConfigException(Exception):
    """训练配置前后矛盾"""

    def __init__(self, errors: list[str]):
        self.errors = errors
        self.message = "训练配置无效: " + "; ".join(errors)
        super().__init__(self.message)


class RunConfigValidator(Validator[RunConfig]):
    """训练配置的一致性检查，在任何计算之前执行"""

    def errors(self, item: RunConfig) -> list[str]:
        """列出全部矛盾之处"""
        errors = []
        mode = item.model.attention_mode
        if mode == 'causal' and item.prior is not None:
            errors.append("因果模型使用自回归目标，不能再指定掩码先验")
        if mode == 'bidirectional' and item.prior is None:
            errors.append("双向模型需要掩码先验（uniform 为 u-PMLM，point_mass 为 BERT 风格）")
        return errors

    def validate(self, item: RunConfig) -> bool:
        return not self.errors(item)

    def check(self, item: RunConfig):
        """
        Raises:
            InvalidRunConfigException: 存在矛盾
        """
        errors = self.errors(item)
        if errors:
            raise InvalidRunConfigException(errors)


class FiniteLossValidator(Validator[float]):
    """损失必须是有限值"""

    def validate(self, item: float) -> bool:
        return item is not None and math.isfinite(item)
