import logging
from typing import Optional

import numpy as np
from pydantic import BaseModel

from lab.config import LabConfig
from lab.repository.d_basic import CheckpointRepository, LossLogRepository
from lab.service.entity import RunConfig, Corpus, LossRecord
from lab.service.validator import RunConfigValidator, FiniteLossValidator
from pmlm.core.optim import Adam, NonFiniteGradientException
from pmlm.model.checkpoint import encode_checkpoint
from pmlm.model.transformer import Transformer
from pmlm.objective.ar import ar_batch_loss
from pmlm.objective.model import LossValue
from pmlm.objective.pmlm import pmlm_batch_loss

logger = logging.getLogger('lab.train')


class TrainingDivergedException(Exception):
    """训练过程中出现非有限损失或梯度"""

    def __init__(self, step: int, message: str = None):
        self.step = step
        self.message = message or f"第 {step} 步出现非有限损失，已保留上一个有效检查点"
        super().__init__(self.message)


class TrainingResult(BaseModel):
    """训练结果摘要"""

    steps: int
    """完成的步数"""
    initial_loss: Optional[float]
    """第一步的损失"""
    final_loss: Optional[float]
    """最后一步的损失"""
    checkpoint_path: str
    """检查点保存位置"""


class TrainService:
    """按配置训练模型，定期保存检查点并记录损失"""

    config_validator = RunConfigValidator()
    loss_validator = FiniteLossValidator()

    def __init__(self, config: RunConfig, checkpoint_repository: CheckpointRepository,
                 loss_log_repository: LossLogRepository):
        """
        Args:
            config: 训练配置
            checkpoint_repository: 检查点仓库，键为 config.checkpoint_path
            loss_log_repository: 损失日志
        """
        self.config_validator.check(config)
        self.config = config
        self.checkpoint_repository = checkpoint_repository
        self.loss_log_repository = loss_log_repository

    def build_model(self, corpus: Corpus) -> Transformer:
        """按训练语料的词表大小构建模型"""
        model_config = self.config.model.model_copy(
            update={'vocab_size': len(corpus.vocabulary), 'max_len': max(self.config.model.max_len, corpus.max_len)})
        return Transformer(model_config, seed=self.config.training.seed)

    def save(self, model: Transformer, corpus: Corpus, step: int):
        extra = {'vocabulary': corpus.vocabulary.model_dump(), 'step': step,
                 'prior': self.config.prior.model_dump() if self.config.prior else None}
        self.checkpoint_repository.set_item(self.config.checkpoint_path, encode_checkpoint(model, extra))

    def step_loss(self, model: Transformer, batch: np.ndarray, rng: np.random.Generator) -> LossValue:
        """一个批次的训练损失：双向模型使用 PMLM 采样估计，因果模型使用自回归损失"""
        if model.attention_mode == 'causal':
            return ar_batch_loss(model, batch, training=True, rng=rng)
        return pmlm_batch_loss(model, batch, self.config.prior, rng, training=True,
                               zero_mask_policy=self.config.training.zero_mask_policy)

    def train(self, corpus: Corpus) -> tuple[Transformer, TrainingResult]:
        """
        训练
        Args:
            corpus: 训练语料

        Returns:
            训练后的模型与结果摘要
        Raises:
            TrainingDivergedException: 出现非有限损失或梯度
        """
        training = self.config.training
        rng = np.random.default_rng(training.seed)
        model = self.build_model(corpus)
        optimizer = Adam(model.params, lr=training.learning_rate, weight_decay=training.weight_decay)
        data = corpus.as_array()
        self.loss_log_repository.reset()
        self.save(model, corpus, 0)
        logger.info(f'开始训练: {model.attention_mode} 模型，{model.num_parameters()} 个参数，'
                    f'{len(data)} 条序列，{training.steps} 步')

        initial_loss, final_loss = None, None
        for step in range(1, training.steps + 1):
            batch = data[rng.integers(0, len(data), size=training.batch_size)]
            loss = self.step_loss(model, batch, rng)
            if loss.token_count == 0:
                logger.debug(f'第 {step} 步没有参与计算的位置，跳过')
                continue
            if not self.loss_validator(loss.value):
                logger.error(f'第 {step} 步损失为 {loss.value}')
                raise TrainingDivergedException(step)
            optimizer.zero_grad()
            loss.graph.backward()
            try:
                optimizer.step()
            except NonFiniteGradientException as e:
                logger.error(e.message)
                raise TrainingDivergedException(step, e.message)
            self.loss_log_repository.append(LossRecord(step=step, loss=loss.value, token_count=loss.token_count))
            initial_loss = loss.value if initial_loss is None else initial_loss
            final_loss = loss.value
            if step % LabConfig.LAB_LOG_EVERY == 0:
                logger.info(f'第 {step} 步: 损失 {loss.value:.4f}')
            if step % LabConfig.LAB_CHECKPOINT_EVERY == 0:
                self.save(model, corpus, step)

        self.save(model, corpus, training.steps)
        logger.info(f'训练完成: 初始损失 {initial_loss}，最终损失 {final_loss}')
        return model, TrainingResult(steps=training.steps, initial_loss=initial_loss, final_loss=final_loss,
                                     checkpoint_path=self.config.checkpoint_path)
