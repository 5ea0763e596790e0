"""优化器模块"""
import logging
from typing import Mapping, Optional

import numpy as np

from pmlm.core.tensor import Tensor

logger = logging.getLogger('pmlm.core.optim')


class NonFiniteGradientException(Exception):
    """梯度中出现非有限值"""

    def __init__(self, name: str, message: str = None):
        self.name = name
        self.message = message or f"参数 {name} 的梯度包含 NaN 或 Inf，本次更新被拒绝"
        super().__init__(self.message)


class OptimizerState:
    """Adam 优化器状态"""

    def __init__(self, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8, weight_decay: float = 0.0):
        self.lr = lr
        """学习率"""
        self.beta1 = beta1
        """一阶矩衰减率"""
        self.beta2 = beta2
        """二阶矩衰减率"""
        self.eps = eps
        """数值稳定项"""
        self.weight_decay = weight_decay
        """解耦的权重衰减系数"""
        self.step = 0
        """已执行的更新次数"""
        self.first_moment: dict[str, np.ndarray] = {}
        self.second_moment: dict[str, np.ndarray] = {}


def adam_step(params: Mapping[str, Tensor],
              grads: Mapping[str, Optional[np.ndarray]],
              state: OptimizerState) -> OptimizerState:
    """
    执行一次带偏差修正的 Adam 更新，原地修改参数
    Args:
        params: 参数名到参数张量的映射
        grads: 参数名到梯度的映射，缺失或为 None 视为零梯度
        state: 优化器状态

    Returns:
        更新后的状态
    Raises:
        NonFiniteGradientException: 任一梯度含非有限值，此时不修改任何参数
    """
    for name in params:
        grad = grads.get(name)
        if grad is not None and not np.all(np.isfinite(grad)):
            raise NonFiniteGradientException(name)
    state.step += 1
    bias1 = 1.0 - state.beta1 ** state.step
    bias2 = 1.0 - state.beta2 ** state.step
    for name, param in params.items():
        grad = grads.get(name)
        if grad is None:
            grad = np.zeros_like(param.data)
        m = state.first_moment.get(name)
        v = state.second_moment.get(name)
        if m is None:
            m = np.zeros_like(param.data)
            v = np.zeros_like(param.data)
        m = state.beta1 * m + (1.0 - state.beta1) * grad
        v = state.beta2 * v + (1.0 - state.beta2) * grad * grad
        state.first_moment[name] = m
        state.second_moment[name] = v
        update = (m / bias1) / (np.sqrt(v / bias2) + state.eps)
        if state.weight_decay:
            update = update + state.weight_decay * param.data
        param.data = param.data - state.lr * update
    return state


class Adam:
    """对一组命名参数执行 Adam 更新"""

    def __init__(self, params: Mapping[str, Tensor], lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8, weight_decay: float = 0.0):
        self.params = params
        self.state = OptimizerState(lr=lr, beta1=beta1, beta2=beta2, eps=eps, weight_decay=weight_decay)

    def zero_grad(self):
        """清空全部参数的梯度"""
        for param in self.params.values():
            param.zero_grad()

    def step(self):
        """使用参数上累积的梯度执行一次更新"""
        adam_step(self.params, {name: p.grad for name, p in self.params.items()}, self.state)
        logger.debug(f'第 {self.state.step} 次参数更新完成')
