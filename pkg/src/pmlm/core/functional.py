"""前向算子集合，每个算子同时给出对应的反向函数"""
import math
from typing import Optional, Union

import numpy as np
from scipy.special import erf, logsumexp

from pmlm.core.tensor import Tensor, ShapeMismatchException

Operand = Union[Tensor, np.ndarray, float, int]

_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)


def as_tensor(value: Operand) -> Tensor:
    """将常量包装为不需要梯度的张量"""
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """将广播后的梯度求和还原到原始形状"""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(primitive: str, a: Tensor, b: Tensor) -> tuple:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeMismatchException(primitive, a.shape, b.shape)


def add(a: Operand, b: Operand) -> Tensor:
    """逐元素加法，支持广播"""
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape('add', a, b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return Tensor.from_op(a.data + b.data, (a, b), backward)


def sub(a: Operand, b: Operand) -> Tensor:
    """逐元素减法，支持广播"""
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape('sub', a, b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return Tensor.from_op(a.data - b.data, (a, b), backward)


def mul(a: Operand, b: Operand) -> Tensor:
    """逐元素乘法，支持广播"""
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape('mul', a, b)

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return Tensor.from_op(a.data * b.data, (a, b), backward)


def matmul(a: Operand, b: Operand) -> Tensor:
    """
    矩阵乘法，最后两维做乘法，前面的维度按批广播
    Raises:
        ShapeMismatchException: 内维不一致或批维不可广播
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeMismatchException('matmul', a.shape, b.shape)
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise ShapeMismatchException('matmul', a.shape, b.shape)

    def backward(g):
        grad_a = g @ np.swapaxes(b.data, -1, -2)
        grad_b = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast(grad_a, a.shape), _unbroadcast(grad_b, b.shape)

    return Tensor.from_op(a.data @ b.data, (a, b), backward)


def transpose(x: Tensor, axes: tuple) -> Tensor:
    """维度置换"""
    inverse = tuple(np.argsort(axes))

    def backward(g):
        return (g.transpose(inverse),)

    return Tensor.from_op(x.data.transpose(axes), (x,), backward)


def reshape(x: Tensor, shape: tuple) -> Tensor:
    """改变形状，元素个数必须一致"""
    try:
        data = x.data.reshape(shape)
    except ValueError:
        raise ShapeMismatchException('reshape', x.shape, tuple(shape))

    def backward(g):
        return (g.reshape(x.shape),)

    return Tensor.from_op(data, (x,), backward)


def sum(x: Tensor, axis: Optional[int] = None, keepdims: bool = False) -> Tensor:
    """求和"""

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return Tensor.from_op(np.asarray(x.data.sum(axis=axis, keepdims=keepdims)), (x,), backward)


def dot(a: Tensor, b: Tensor) -> Tensor:
    """一维向量内积"""
    if a.ndim != 1 or a.shape != b.shape:
        raise ShapeMismatchException('dot', a.shape, b.shape)
    return sum(mul(a, b))


def softmax(x: Tensor) -> Tensor:
    """最后一维上的 softmax"""
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    y = exp / exp.sum(axis=-1, keepdims=True)

    def backward(g):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return Tensor.from_op(y, (x,), backward)


def log_softmax_array(logits: np.ndarray) -> np.ndarray:
    """不记录计算图的 log-softmax，用于评估"""
    return logits - logsumexp(logits, axis=-1, keepdims=True)


def layer_norm(x: Tensor, weight: Tensor, bias: Tensor, eps: float) -> Tensor:
    """
    最后一维上的层归一化，之后做逐元素仿射变换
    Args:
        x: 输入
        weight: 缩放参数，长度为最后一维大小
        bias: 平移参数，长度为最后一维大小
        eps: 数值稳定项

    Returns:
        归一化结果
    """
    if weight.shape != x.shape[-1:]:
        raise ShapeMismatchException('layer_norm', x.shape, weight.shape)
    if bias.shape != x.shape[-1:]:
        raise ShapeMismatchException('layer_norm', x.shape, bias.shape)
    mean = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mean
    rstd = 1.0 / np.sqrt((centered * centered).mean(axis=-1, keepdims=True) + eps)
    normed = centered * rstd
    lead = tuple(range(x.ndim - 1))

    def backward(g):
        grad_weight = (g * normed).sum(axis=lead)
        grad_bias = g.sum(axis=lead)
        d_normed = g * weight.data
        grad_x = rstd * (d_normed
                         - d_normed.mean(axis=-1, keepdims=True)
                         - normed * (d_normed * normed).mean(axis=-1, keepdims=True))
        return grad_x, grad_weight, grad_bias

    return Tensor.from_op(normed * weight.data + bias.data, (x, weight, bias), backward)


def gelu(x: Tensor) -> Tensor:
    """精确形式的 GELU: 0.5 * x * (1 + erf(x / sqrt(2)))"""
    cdf = 0.5 * (1.0 + erf(x.data * _INV_SQRT2))

    def backward(g):
        pdf = np.exp(-0.5 * x.data * x.data) * _INV_SQRT2PI
        return (g * (cdf + x.data * pdf),)

    return Tensor.from_op(x.data * cdf, (x,), backward)


def embedding(table: Tensor, ids: np.ndarray) -> Tensor:
    """
    按编号查表
    Args:
        table: 形状为 (V, H) 的表
        ids: 任意形状的整数编号

    Returns:
        形状为 ids.shape + (H,) 的张量
    """
    ids = np.asarray(ids)
    if table.ndim != 2 or not np.issubdtype(ids.dtype, np.integer):
        raise ShapeMismatchException('embedding', table.shape, ids.shape)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise ShapeMismatchException('embedding', table.shape, ids.shape,
                                     message=f"[embedding] 编号越界: 表大小 {table.shape[0]}，"
                                             f"编号范围 [{ids.min()}, {ids.max()}]")

    def backward(g):
        grad = np.zeros_like(table.data)
        np.add.at(grad, ids, g)
        return (grad,)

    return Tensor.from_op(table.data[ids], (table,), backward)


def cross_entropy(logits: Tensor, targets: np.ndarray, weights: Optional[np.ndarray] = None) -> Tensor:
    """
    以整数为目标的交叉熵
    Args:
        logits: 形状为 (..., V) 的未归一化分数
        targets: 形状为 (...) 的目标编号
        weights: 形状为 (...) 的位置权重；为空时对所有位置取平均

    Returns:
        标量损失 sum(weights * nll)
    """
    targets = np.asarray(targets)
    if logits.shape[:-1] != targets.shape:
        raise ShapeMismatchException('cross_entropy', logits.shape, targets.shape)
    if weights is None:
        weights = np.full(targets.shape, 1.0 / max(targets.size, 1))
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != targets.shape:
        raise ShapeMismatchException('cross_entropy', weights.shape, targets.shape)
    log_probs = log_softmax_array(logits.data)
    picked = np.take_along_axis(log_probs, targets[..., None], axis=-1)[..., 0]
    value = -(weights * picked).sum()

    def backward(g):
        grad = np.exp(log_probs)
        np.put_along_axis(grad, targets[..., None],
                          np.take_along_axis(grad, targets[..., None], axis=-1) - 1.0, axis=-1)
        return (g * weights[..., None] * grad,)

    return Tensor.from_op(np.asarray(value), (logits,), backward)


def dropout(x: Tensor, rate: float, rng: Optional[np.random.Generator], training: bool) -> Tensor:
    """反向缩放的随机失活，推理或比率为 0 时原样返回"""
    if not training or rate <= 0.0 or rng is None:
        return x
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)

    def backward(g):
        return (g * keep,)

    return Tensor.from_op(x.data * keep, (x,), backward)
