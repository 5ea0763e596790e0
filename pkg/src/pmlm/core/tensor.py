"""张量模块，提供带反向模式自动微分的稠密多维数组

所有数据统一使用 float64 存储，计算图在前向时记录，调用 ``backward`` 时按拓扑逆序回传梯度。
"""
import logging
from contextlib import contextmanager
from typing import Callable, Optional, Sequence

import numpy as np

logger = logging.getLogger('pmlm.core')

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]
"""反向函数：输入上游梯度，返回每个父节点的梯度"""


class ShapeMismatchException(Exception):
    """形状不匹配异常"""

    def __init__(self, primitive: str, left: tuple, right: tuple, message: str = None):
        self.primitive = primitive
        self.left = tuple(left)
        self.right = tuple(right)
        self.message = message or f"[{primitive}] 形状不匹配: {self.left} 与 {self.right}"
        super().__init__(self.message)


class NonScalarLossException(Exception):
    """损失不是标量异常"""

    def __init__(self, shape: tuple, message: str = None):
        self.shape = tuple(shape)
        self.message = message or f"只能从标量损失开始反向传播，当前形状为 {self.shape}"
        super().__init__(self.message)


class GradMode:
    """全局计算图记录开关"""
    enabled: bool = True


@contextmanager
def no_grad():
    """在上下文内关闭计算图记录，用于评估与生成"""
    previous = GradMode.enabled
    GradMode.enabled = False
    try:
        yield
    finally:
        GradMode.enabled = previous


class Tensor:
    """带梯度的多维数组

    - ``data`` 始终为行优先的 float64 数组
    - ``grad`` 与 ``data`` 同形状，未参与反向传播时为 None
    """

    def __init__(self, data, requires_grad: bool = False, name: str = None):
        self.data: np.ndarray = np.array(data, dtype=np.float64)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents: tuple['Tensor', ...] = ()
        self._backward: Optional[BackwardFn] = None

    @classmethod
    def from_op(cls, data: np.ndarray, parents: Sequence['Tensor'], backward: BackwardFn) -> 'Tensor':
        """
        由算子创建输出张量，在需要时记录计算图
        Args:
            data: 前向结果
            parents: 参与计算的输入张量
            backward: 反向函数

        Returns:
            输出张量
        """
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        out.name = None
        out._parents = ()
        out._backward = None
        out.requires_grad = GradMode.enabled and any(p.requires_grad for p in parents)
        if out.requires_grad:
            out._parents = tuple(parents)
            out._backward = backward
        return out

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def zero_grad(self):
        """清空梯度"""
        self.grad = None

    def backward(self):
        """
        从标量损失开始反向传播，梯度累加到所有参与计算的张量上

        连续调用两次而不清空梯度，结果会累加。
        Raises:
            NonScalarLossException: 损失不是标量
        """
        if self.data.size != 1:
            raise NonScalarLossException(self.data.shape)
        order = self._topological_order()
        upstream: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            grad = upstream.pop(id(node), None)
            if grad is None:
                continue
            node.grad = grad.copy() if node.grad is None else node.grad + grad
            if node._backward is None:
                continue
            for parent, parent_grad in zip(node._parents, node._backward(grad)):
                if parent_grad is None or not parent.requires_grad:
                    continue
                key = id(parent)
                upstream[key] = upstream[key] + parent_grad if key in upstream else parent_grad
        logger.debug(f'反向传播完成，共 {len(order)} 个节点')

    def _topological_order(self) -> list['Tensor']:
        order, visited = [], set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in visited:
                    stack.append((parent, False))
        return order

    def __add__(self, other):
        from pmlm.core import functional as F
        return F.add(self, other)

    def __radd__(self, other):
        from pmlm.core import functional as F
        return F.add(other, self)

    def __sub__(self, other):
        from pmlm.core import functional as F
        return F.sub(self, other)

    def __mul__(self, other):
        from pmlm.core import functional as F
        return F.mul(self, other)

    def __rmul__(self, other):
        from pmlm.core import functional as F
        return F.mul(other, self)

    def __matmul__(self, other):
        from pmlm.core import functional as F
        return F.matmul(self, other)

    def __neg__(self):
        from pmlm.core import functional as F
        return F.mul(self, -1.0)

    def __repr__(self) -> str:
        label = f", name={self.name}" if self.name else ""
        return f"Tensor(shape={self.shape}{label})"
