"""Transformer 主干模型"""
from pmlm.model.config import TransformerConfig
from pmlm.model.transformer import (Transformer, KVCache, ModelParameters, InvalidSequenceException,
                                    UnsupportedAttentionModeException, relative_attention_bias)
