"""内置的训练配置：三种可比较的模型共享同一组结构与训练超参数"""
from typing import Optional

from lab.service.entity import RunConfig, TrainingConfig
from pmlm.masking.prior import MaskingPrior
from pmlm.model.config import TransformerConfig

BERT_MASK_RATIO = 0.15

PRESET_NAMES = ('upmlm', 'bert-like', 'gpt-like', 'upmlm-rel')


class UnknownPresetException(Exception):
    """没有这个预设"""

    def __init__(self, name: str):
        self.name = name
        self.message = f"未知的预设 {name}，可选: {', '.join(PRESET_NAMES)}"
        super().__init__(self.message)


def desk_model(**overrides) -> TransformerConfig:
    """桌面规模的结构，vocab_size 只是占位，训练时由词表决定"""
    fields = dict(vocab_size=4, max_len=32, layers=2, heads=4, hidden_size=64, intermediate_size=256,
                  dropout_rate=0.1)
    fields.update(overrides)
    return TransformerConfig(**fields)


def preset(name: str, train_path: str = 'train.txt', test_path: Optional[str] = None, seed: int = 0,
           checkpoint_path: Optional[str] = None) -> RunConfig:
    """
    生成预设配置
    Args:
        name: upmlm（双向 + 均匀先验）、bert-like（双向 + 固定比率 0.15）、gpt-like（因果自回归）、
            upmlm-rel（相对位置编码的 u-PMLM）
        train_path: 训练语料
        test_path: 测试语料
        seed: 随机种子
        checkpoint_path: 检查点路径，为空时为 <name>.ckpt
    """
    if name == 'upmlm':
        model, prior = desk_model(), MaskingPrior.uniform()
    elif name == 'bert-like':
        model, prior = desk_model(), MaskingPrior.point_mass(BERT_MASK_RATIO)
    elif name == 'gpt-like':
        model, prior = desk_model(attention_mode='causal'), None
    elif name == 'upmlm-rel':
        model, prior = desk_model(positional_kind='relative'), MaskingPrior.uniform()
    else:
        raise UnknownPresetException(name)
    return RunConfig(model=model, prior=prior, training=TrainingConfig(seed=seed), tokenizer='char',
                     train_path=train_path, test_path=test_path,
                     checkpoint_path=checkpoint_path or f'{name}.ckpt')
