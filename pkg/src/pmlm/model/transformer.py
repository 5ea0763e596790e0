"""Transformer 主干模型

词嵌入 + 位置编码，若干层自注意力/前馈层（Pre-LN），最后经输出投影得到每个位置的词表分数。
可配置为双向（MLM 风格）或因果（GPT 风格）注意力。
"""
import logging
import math
from typing import Optional

import numpy as np

from pmlm.config import PmlmConfig, PAD_ID
from pmlm.core import functional as F
from pmlm.core.tensor import Tensor, no_grad
from pmlm.model.config import TransformerConfig, AttentionMode

logger = logging.getLogger('pmlm.model')

ModelParameters = dict[str, Tensor]
"""参数名到参数张量的映射，名称集合完全由配置决定"""


class InvalidSequenceException(Exception):
    """输入序列不合法"""

    def __init__(self, position: int, token_id: int, message: str = None):
        self.position = position
        self.token_id = token_id
        self.message = message or f"位置 {position} 上的编号 {token_id} 不合法"
        super().__init__(self.message)


class UnsupportedAttentionModeException(Exception):
    """当前注意力模式不支持该操作"""

    def __init__(self, mode: str, operation: str, message: str = None):
        self.mode = mode
        self.operation = operation
        self.message = message or f"{operation} 不支持 {mode} 注意力模式"
        super().__init__(self.message)


def parameter_shapes(config: TransformerConfig) -> dict[str, tuple]:
    """
    由配置推导全部参数的名称与形状，顺序固定
    Args:
        config: 模型配置

    Returns:
        参数名到形状的有序映射
    """
    h, i = config.hidden_size, config.intermediate_size
    shapes = {'embeddings.token': (config.vocab_size, h)}
    if config.positional_kind == 'absolute':
        shapes['embeddings.position'] = (config.max_len, h)
    for layer in range(config.layers):
        prefix = f'layers.{layer}'
        shapes[f'{prefix}.attention.norm.weight'] = (h,)
        shapes[f'{prefix}.attention.norm.bias'] = (h,)
        for proj in ('query', 'key', 'value', 'output'):
            shapes[f'{prefix}.attention.{proj}.weight'] = (h, h)
            shapes[f'{prefix}.attention.{proj}.bias'] = (h,)
        if config.positional_kind == 'relative':
            shapes[f'{prefix}.attention.relative_bias'] = (config.heads, 2 * config.relative_window + 1)
        shapes[f'{prefix}.ffn.norm.weight'] = (h,)
        shapes[f'{prefix}.ffn.norm.bias'] = (h,)
        shapes[f'{prefix}.ffn.intermediate.weight'] = (h, i)
        shapes[f'{prefix}.ffn.intermediate.bias'] = (i,)
        shapes[f'{prefix}.ffn.output.weight'] = (i, h)
        shapes[f'{prefix}.ffn.output.bias'] = (h,)
    shapes['final_norm.weight'] = (h,)
    shapes['final_norm.bias'] = (h,)
    shapes['head.weight'] = (h, config.vocab_size)
    shapes['head.bias'] = (config.vocab_size,)
    return shapes


def init_parameters(config: TransformerConfig, rng: np.random.Generator) -> ModelParameters:
    """权重矩阵与各类表按 N(0, 0.02) 初始化，偏置为 0，层归一化缩放为 1"""
    params = {}
    for name, shape in parameter_shapes(config).items():
        if name.endswith('norm.weight'):
            data = np.ones(shape)
        elif name.endswith('bias') and not name.endswith('relative_bias'):
            data = np.zeros(shape)
        else:
            data = rng.normal(0.0, PmlmConfig.PMLM_INIT_STD, size=shape)
        params[name] = Tensor(data, requires_grad=True, name=name)
    return params


def relative_positions(query_positions: np.ndarray, key_positions: np.ndarray, window: int) -> np.ndarray:
    """截断后的相对距离索引 clamp(j - i, -window, window) + window"""
    distance = key_positions[None, :] - query_positions[:, None]
    return np.clip(distance, -window, window) + window


def relative_attention_bias(distance_table: Tensor, n: int, window: int) -> Tensor:
    """
    由相对距离表生成每个头的 N×N 加性注意力偏置
    Args:
        distance_table: 形状为 (heads, 2*window+1) 的可学习表
        n: 序列长度
        window: 最大相对距离

    Returns:
        形状为 (heads, N, N) 的偏置，bias[h, i, j] 只依赖于截断后的 j - i
    """
    positions = np.arange(n)
    return _relative_bias(distance_table, positions, positions, window)


def _relative_bias(distance_table: Tensor, query_positions: np.ndarray, key_positions: np.ndarray,
                   window: int) -> Tensor:
    index = relative_positions(query_positions, key_positions, window)
    bias = F.embedding(F.transpose(distance_table, (1, 0)), index)
    return F.transpose(bias, (2, 0, 1))


def attention_mask(pad: np.ndarray, mode: AttentionMode,
                   query_positions: Optional[np.ndarray] = None) -> np.ndarray:
    """
    生成加性注意力掩码
    Args:
        pad: 形状为 (B, T) 的填充标记（对应全部键）
        mode: 注意力模式
        query_positions: 查询位置，为空时与键位置相同

    Returns:
        形状为 (B, 1, Q, T) 的掩码，可见处为 0，不可见处为 -inf
    """
    total = pad.shape[1]
    keys = np.arange(total)
    queries = keys if query_positions is None else query_positions
    allowed = np.broadcast_to(~pad[:, None, :], (pad.shape[0], len(queries), total))
    if mode == 'causal':
        allowed = allowed & (keys[None, None, :] <= queries[None, :, None])
    # 每个查询至少能看到自身，保证 softmax 行不全为 -inf
    allowed = allowed | (keys[None, None, :] == queries[None, :, None])
    return np.where(allowed, 0.0, -np.inf)[:, None, :, :]


class KVCache:
    """因果模式增量推理使用的键值缓存"""

    def __init__(self, layers: int):
        self.keys: list[Optional[np.ndarray]] = [None] * layers
        """每层缓存的键，形状 (1, heads, T, d)"""
        self.values: list[Optional[np.ndarray]] = [None] * layers
        """每层缓存的值，形状 (1, heads, T, d)"""
        self.tokens = np.zeros(0, dtype=np.int64)
        """已经处理过的前缀"""

    @property
    def length(self) -> int:
        return len(self.tokens)


class Transformer:
    """Transformer 主干模型"""

    def __init__(self, config: TransformerConfig, params: ModelParameters = None, seed: int = 0):
        """

        Args:
            config: 模型配置
            params: 已有参数，为空时按 seed 随机初始化
            seed: 初始化随机种子
        """
        self.config = config
        self.params: ModelParameters = params if params is not None else init_parameters(
            config, np.random.default_rng(seed))
        expected = set(parameter_shapes(config))
        if set(self.params) != expected:
            raise ValueError(f"参数名集合与配置不一致: 缺少 {sorted(expected - set(self.params))}，"
                             f"多余 {sorted(set(self.params) - expected)}")

    @property
    def attention_mode(self) -> AttentionMode:
        return self.config.attention_mode

    def zero_grad(self):
        """清空全部参数的梯度"""
        for param in self.params.values():
            param.zero_grad()

    def num_parameters(self) -> int:
        return int(sum(p.size for p in self.params.values()))

    def validate(self, tokens: np.ndarray) -> np.ndarray:
        """
        检查输入序列
        Returns:
            形状为 (B, N) 的整数数组
        Raises:
            InvalidSequenceException: 序列过长或编号越界
        """
        tokens = np.asarray(tokens)
        batch = tokens.reshape(1, -1) if tokens.ndim == 1 else tokens
        if batch.ndim != 2:
            raise InvalidSequenceException(-1, -1, message=f"输入形状 {tokens.shape} 不是一维或二维")
        n = batch.shape[1]
        if n > self.config.max_len:
            raise InvalidSequenceException(self.config.max_len, int(batch[0, self.config.max_len]),
                                           message=f"序列长度 {n} 超过最大长度 {self.config.max_len}")
        bad = np.argwhere((batch < 0) | (batch >= self.config.vocab_size))
        if len(bad):
            row, position = bad[0]
            token_id = int(batch[row, position])
            raise InvalidSequenceException(int(position), token_id,
                                           message=f"位置 {position} 上的编号 {token_id} 超出词表大小 "
                                                   f"{self.config.vocab_size}")
        return batch.astype(np.int64)

    def forward(self, tokens: np.ndarray, attention_mode: AttentionMode = None,
                training: bool = False, rng: np.random.Generator = None) -> Tensor:
        """
        完整前向计算
        Args:
            tokens: 形状为 (N,) 或 (B, N) 的编号
            attention_mode: 注意力模式，为空时使用配置中的模式
            training: 是否处于训练模式（启用随机失活）
            rng: 随机失活使用的随机数发生器

        Returns:
            形状为 (N, V) 或 (B, N, V) 的分数
        """
        single = np.asarray(tokens).ndim == 1
        batch = self.validate(tokens)
        mode = attention_mode or self.config.attention_mode
        n = batch.shape[1]
        positions = np.arange(n)
        x = self._embed(batch, positions)
        x = F.dropout(x, self.config.dropout_rate, rng, training)
        mask = attention_mask(batch == PAD_ID, mode)
        for layer in range(self.config.layers):
            x = self._layer(x, layer, mask, positions, positions, training, rng)
        logits = self._head(x)
        if single:
            logits = F.reshape(logits, logits.shape[1:])
        return logits

    def forward_incremental(self, tokens_prefix: np.ndarray, cache: KVCache = None) -> tuple[np.ndarray, KVCache]:
        """
        因果模式下的增量前向，只计算缓存之外的新位置
        Args:
            tokens_prefix: 一维前缀
            cache: 之前步骤的缓存，为空或与前缀不一致时重新开始

        Returns:
            前缀最后一个位置的分数与更新后的缓存
        Raises:
            UnsupportedAttentionModeException: 模型不是因果模式，双向模型每一步都需要重算全部隐状态
        """
        if self.config.attention_mode != 'causal':
            raise UnsupportedAttentionModeException(self.config.attention_mode, 'forward_incremental')
        tokens = self.validate(np.asarray(tokens_prefix).reshape(-1))[0]
        if cache is None or cache.length >= len(tokens) or not np.array_equal(cache.tokens,
                                                                               tokens[:cache.length]):
            cache = KVCache(self.config.layers)
        start, total = cache.length, len(tokens)
        queries = np.arange(start, total)
        keys = np.arange(total)
        with no_grad():
            x = self._embed(tokens[None, start:], queries)
            mask = attention_mask((tokens == PAD_ID)[None, :], 'causal', queries)
            for layer in range(self.config.layers):
                x = self._layer(x, layer, mask, queries, keys, False, None, cache)
            logits = self._head(x)
        cache.tokens = tokens.copy()
        return logits.data[0, -1], cache

    def _embed(self, batch: np.ndarray, positions: np.ndarray) -> Tensor:
        x = F.embedding(self.params['embeddings.token'], batch)
        if self.config.positional_kind == 'absolute':
            x = F.add(x, F.embedding(self.params['embeddings.position'], positions))
        return x

    def _linear(self, x: Tensor, name: str) -> Tensor:
        return F.add(F.matmul(x, self.params[f'{name}.weight']), self.params[f'{name}.bias'])

    def _split_heads(self, x: Tensor) -> Tensor:
        b, n, _ = x.shape
        x = F.reshape(x, (b, n, self.config.heads, self.config.head_size))
        return F.transpose(x, (0, 2, 1, 3))

    def _merge_heads(self, x: Tensor) -> Tensor:
        b, _, n, _ = x.shape
        return F.reshape(F.transpose(x, (0, 2, 1, 3)), (b, n, self.config.hidden_size))

    def _attention(self, h: Tensor, layer: int, mask: np.ndarray, queries: np.ndarray, keys: np.ndarray,
                   cache: KVCache = None) -> Tensor:
        prefix = f'layers.{layer}.attention'
        q = self._split_heads(self._linear(h, f'{prefix}.query'))
        k = self._split_heads(self._linear(h, f'{prefix}.key'))
        v = self._split_heads(self._linear(h, f'{prefix}.value'))
        if cache is not None:
            if cache.keys[layer] is not None:
                k = Tensor(np.concatenate([cache.keys[layer], k.data], axis=2))
                v = Tensor(np.concatenate([cache.values[layer], v.data], axis=2))
            cache.keys[layer], cache.values[layer] = k.data, v.data
        scores = F.mul(F.matmul(q, F.transpose(k, (0, 1, 3, 2))), 1.0 / math.sqrt(self.config.head_size))
        if self.config.positional_kind == 'relative':
            scores = F.add(scores, _relative_bias(self.params[f'{prefix}.relative_bias'], queries, keys,
                                                  self.config.relative_window))
        probs = F.softmax(F.add(scores, mask))
        context = self._merge_heads(F.matmul(probs, v))
        return self._linear(context, f'{prefix}.output')

    def _layer(self, x: Tensor, layer: int, mask: np.ndarray, queries: np.ndarray, keys: np.ndarray,
               training: bool, rng: Optional[np.random.Generator], cache: KVCache = None) -> Tensor:
        prefix = f'layers.{layer}'
        eps = PmlmConfig.PMLM_LAYER_NORM_EPS
        h = F.layer_norm(x, self.params[f'{prefix}.attention.norm.weight'],
                         self.params[f'{prefix}.attention.norm.bias'], eps)
        attended = self._attention(h, layer, mask, queries, keys, cache)
        x = F.add(x, F.dropout(attended, self.config.dropout_rate, rng, training))
        h = F.layer_norm(x, self.params[f'{prefix}.ffn.norm.weight'], self.params[f'{prefix}.ffn.norm.bias'], eps)
        h = F.gelu(self._linear(h, f'{prefix}.ffn.intermediate'))
        h = self._linear(h, f'{prefix}.ffn.output')
        return F.add(x, F.dropout(h, self.config.dropout_rate, rng, training))

    def _head(self, x: Tensor) -> Tensor:
        x = F.layer_norm(x, self.params['final_norm.weight'], self.params['final_norm.bias'],
                         PmlmConfig.PMLM_LAYER_NORM_EPS)
        return self._linear(x, 'head')
