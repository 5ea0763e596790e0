from collections import Counter
from typing import Literal, Optional, Iterable

import numpy as np
from pydantic import BaseModel, Field, model_validator

from pmlm.config import SPECIAL_TOKENS, PAD_ID, UNK_ID, MASK_ID
from pmlm.masking.prior import MaskingPrior
from pmlm.model.config import TransformerConfig
from pmlm.objective.pmlm import ZeroMaskPolicy

TokenizerKind = Literal['char', 'whitespace']
Split = Literal['train', 'test']


def tokenize(text: str, kind: TokenizerKind) -> list[str]:
    """按字符或空白切分"""
    if kind == 'char':
        return list(text)
    return text.split()


class Vocabulary(BaseModel):
    """词表，编号 0..2 固定为 [PAD]、[MASK]、[UNK]"""

    kind: TokenizerKind = 'char'
    """切分方式"""
    tokens: list[str] = Field(default_factory=lambda: list(SPECIAL_TOKENS))
    """编号 -> 符号"""

    @model_validator(mode='after')
    def _check_specials(self):
        if tuple(self.tokens[:len(SPECIAL_TOKENS)]) != SPECIAL_TOKENS:
            raise ValueError(f"词表前 {len(SPECIAL_TOKENS)} 个符号必须是 {SPECIAL_TOKENS}")
        if len(set(self.tokens)) != len(self.tokens):
            raise ValueError("词表中存在重复符号")
        return self

    @classmethod
    def build(cls, texts: Iterable[str], kind: TokenizerKind) -> 'Vocabulary':
        """按出现频率降序、再按码位升序排列，结果与文本顺序无关"""
        counter = Counter()
        for text in texts:
            counter.update(tokenize(text, kind))
        for special in SPECIAL_TOKENS:
            counter.pop(special, None)
        ordered = sorted(counter, key=lambda symbol: (-counter[symbol], symbol))
        return cls(kind=kind, tokens=list(SPECIAL_TOKENS) + ordered)

    def __len__(self):
        return len(self.tokens)

    @property
    def index(self) -> dict[str, int]:
        return {symbol: i for i, symbol in enumerate(self.tokens)}

    def encode(self, text: str) -> list[int]:
        """未登录符号与文本中字面的特殊符号都编码为 [UNK]"""
        index = self.index
        symbols = tokenize(text, self.kind)
        return [UNK_ID if symbol in SPECIAL_TOKENS else index.get(symbol, UNK_ID) for symbol in symbols]

    def decode(self, ids: Iterable[int], mask_symbol: Optional[str] = None) -> str:
        """
        编号还原为文本，[PAD] 被忽略
        Args:
            ids: 编号序列
            mask_symbol: [MASK] 的显示符号，为空时显示 [MASK]
        """
        symbols = []
        for i in ids:
            i = int(i)
            if i == PAD_ID:
                continue
            symbols.append(mask_symbol if i == MASK_ID and mask_symbol is not None else self.tokens[i])
        return ''.join(symbols) if self.kind == 'char' else ' '.join(symbols)


class Corpus(BaseModel):
    """切分、编码并填充到固定长度的语料"""

    sequences: list[list[int]]
    """每条长度都是 max_len，不足部分为 [PAD]"""
    vocabulary: Vocabulary
    """词表"""
    split: Split = 'train'
    """train 或 test"""
    max_len: int
    """序列长度"""

    @model_validator(mode='after')
    def _check_ids(self):
        size = len(self.vocabulary)
        for row, sequence in enumerate(self.sequences):
            if len(sequence) != self.max_len:
                raise ValueError(f"第 {row} 条序列长度 {len(sequence)} 不等于 {self.max_len}")
            if any(not 0 <= i < size for i in sequence):
                raise ValueError(f"第 {row} 条序列中存在超出词表的编号")
        return self

    def __len__(self):
        return len(self.sequences)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.sequences, dtype=np.int64).reshape(len(self.sequences), self.max_len)


class TrainingConfig(BaseModel):
    """训练过程配置"""

    steps: int = Field(default=2000, ge=1)
    """训练步数"""
    batch_size: int = Field(default=16, ge=1)
    """批大小"""
    learning_rate: float = Field(default=1e-3, gt=0.0)
    """学习率"""
    weight_decay: float = Field(default=0.01, ge=0.0)
    """解耦权重衰减"""
    seed: int
    """随机种子，同时决定初始化、批次抽取、掩码采样与随机失活"""
    zero_mask_policy: ZeroMaskPolicy = 'resample_once'
    """采样到空掩码时的处理方式"""


class RunConfig(BaseModel):
    """一次训练的完整配置"""

    model: TransformerConfig
    """模型结构，vocab_size 在训练时由训练语料的词表决定"""
    prior: Optional[MaskingPrior] = None
    """掩码比率先验，只用于双向模型"""
    training: TrainingConfig
    """训练过程"""
    tokenizer: TokenizerKind = 'char'
    """切分方式"""
    train_path: str
    """训练语料路径"""
    test_path: Optional[str] = None
    """测试语料路径"""
    checkpoint_path: str = 'model.ckpt'
    """检查点路径"""
    loss_log_path: Optional[str] = None
    """损失日志路径，为空时为检查点路径加 .loss.jsonl"""

    @property
    def resolved_loss_log_path(self) -> str:
        return self.loss_log_path or f'{self.checkpoint_path}.loss.jsonl'


class LossRecord(BaseModel):
    """损失日志中的一条记录"""

    step: int
    """训练步数，从 1 开始"""
    loss: float
    """该步批次的平均负对数似然"""
    token_count: int
    """参与计算的位置数"""
