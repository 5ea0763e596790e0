"""数值内核：张量、算子、反向传播与优化器"""
from pmlm.core.tensor import Tensor, no_grad, ShapeMismatchException, NonScalarLossException
from pmlm.core.optim import Adam, OptimizerState, adam_step, NonFiniteGradientException
