"""Transformer 结构配置"""
from typing import Literal

from pydantic import BaseModel, Field, model_validator

from pmlm.config import PmlmConfig

AttentionMode = Literal['bidirectional', 'causal']
PositionalKind = Literal['absolute', 'relative']


class TransformerConfig(BaseModel):
    """Transformer 结构配置，默认值为可在 CPU 上几分钟内训练完成的桌面规模"""

    vocab_size: int = Field(ge=4)
    """词表大小，包含 [PAD]、[MASK]、[UNK] 等特殊符号"""
    max_len: int = Field(default=64, ge=1)
    """最大序列长度"""
    layers: int = Field(default=2, ge=1)
    """层数"""
    heads: int = Field(default=4, ge=1)
    """注意力头数"""
    hidden_size: int = Field(default=64, ge=1)
    """隐层维度"""
    intermediate_size: int = Field(default=256, ge=1)
    """前馈层中间维度"""
    dropout_rate: float = Field(default=0.1, ge=0.0, lt=1.0)
    """随机失活比率"""
    attention_mode: AttentionMode = 'bidirectional'
    """注意力模式：双向（MLM）或因果（GPT）"""
    positional_kind: PositionalKind = 'absolute'
    """位置编码类型：绝对位置表或相对距离偏置"""
    relative_window: int = Field(default=PmlmConfig.PMLM_RELATIVE_WINDOW, ge=1)
    """相对位置编码截断的最大相对距离"""

    @model_validator(mode='after')
    def _check_heads(self):
        if self.hidden_size % self.heads != 0:
            raise ValueError(f"hidden_size={self.hidden_size} 不能被 heads={self.heads} 整除")
        return self

    @property
    def head_size(self) -> int:
        return self.hidden_size // self.heads


def base_scale_config(vocab_size: int) -> TransformerConfig:
    """与 BERT-base 同尺寸的配置：12 层、12 头、隐层 768、中间层 3072、最大长度 128"""
    return TransformerConfig(vocab_size=vocab_size, max_len=128, layers=12, heads=12,
                             hidden_size=768, intermediate_size=3072, dropout_rate=0.1)
