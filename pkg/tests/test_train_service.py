import math
import tempfile
import unittest
from pathlib import Path
from unittest import TestCase
from unittest.mock import patch

import numpy as np

from common_data import tiny_config, RUN_SLOW
from lab.repository.d_basic import (SimpleKVRepository, SimpleLossLogRepository, FileCheckpointRepository,
                                    JsonlLossLogRepository)
from lab.service.corpus import ingest
from lab.service.entity import RunConfig, TrainingConfig, Corpus, Vocabulary, LossRecord
from lab.service.experiment_service import ExperimentService
from lab.service.presets import preset, UnknownPresetException, PRESET_NAMES
from lab.service.train_service import TrainService, TrainingDivergedException
from lab.service.validator import InvalidRunConfigException, RunConfigValidator, FiniteLossValidator
from pmlm.masking.prior import MaskingPrior
from pmlm.model.checkpoint import decode_checkpoint
from pmlm.objective.model import LossValue


def small_corpus() -> Corpus:
    texts = ['abcabcabc', 'bcabca', 'cab']
    vocabulary = Vocabulary.build(texts, 'char')
    sequences = []
    for text in texts:
        ids = vocabulary.encode(text)[:8]
        sequences.append(ids + [0] * (8 - len(ids)))
    return Corpus(sequences=sequences, vocabulary=vocabulary, max_len=8)


def run_config(steps: int = 5, **overrides) -> RunConfig:
    fields = dict(model=tiny_config(max_len=8), prior=MaskingPrior.uniform(),
                  training=TrainingConfig(steps=steps, batch_size=2, seed=0), train_path='train.txt',
                  checkpoint_path='model.ckpt')
    fields.update(overrides)
    return RunConfig(**fields)


class TestRunConfigValidator(TestCase):

    def test_contradictions(self):
        """因果模型不接受先验，双向模型必须有先验"""
        validator = RunConfigValidator()
        self.assertTrue(validator(run_config()))
        causal = run_config(model=tiny_config(attention_mode='causal'))
        self.assertEqual(1, len(validator.errors(causal)))
        with self.assertRaises(InvalidRunConfigException):
            TrainService(causal, SimpleKVRepository(), SimpleLossLogRepository())
        with self.assertRaises(InvalidRunConfigException):
            TrainService(run_config(prior=None), SimpleKVRepository(), SimpleLossLogRepository())

    def test_presets(self):
        """预设配置都能通过检查"""
        for name in PRESET_NAMES:
            config = preset(name, seed=3)
            self.assertTrue(RunConfigValidator()(config), name)
            self.assertEqual(f'{name}.ckpt', config.checkpoint_path)
        self.assertEqual(0.15, preset('bert-like').prior.r0)
        self.assertEqual('relative', preset('upmlm-rel').model.positional_kind)
        with self.assertRaises(UnknownPresetException):
            preset('xlnet')

    def test_finite_loss(self):
        validator = FiniteLossValidator()
        self.assertTrue(validator(2.5))
        for value in (float('nan'), float('inf'), None):
            self.assertFalse(validator(value))


class TestTrainService(TestCase):

    def setUp(self):
        self.corpus = small_corpus()

    def _train(self, config: RunConfig):
        checkpoints, losses = SimpleKVRepository(), SimpleLossLogRepository()
        model, result = TrainService(config, checkpoints, losses).train(self.corpus)
        return model, result, checkpoints, losses

    def test_short_run(self):
        """训练若干步后保存包含词表与步数的检查点"""
        model, result, checkpoints, losses = self._train(run_config(steps=5))
        self.assertEqual(5, result.steps)
        self.assertEqual(len(self.corpus.vocabulary), model.config.vocab_size)
        self.assertLessEqual(len(losses.records()), 5)
        self.assertTrue(all(math.isfinite(r.loss) for r in losses.records()))
        loaded, header = decode_checkpoint(checkpoints.get_item('model.ckpt'))
        self.assertEqual(5, header['step'])
        self.assertEqual(self.corpus.vocabulary, Vocabulary.model_validate(header['vocabulary']))
        self.assertEqual('uniform', header['prior']['kind'])
        self.assertEqual(model.config, loaded.config)

    def test_causal_run(self):
        config = run_config(model=tiny_config(max_len=8, attention_mode='causal'), prior=None)
        _, result, _, losses = self._train(config)
        self.assertEqual(5, len(losses.records()))
        self.assertIsNotNone(result.final_loss)

    def test_deterministic(self):
        """相同种子得到逐字节相同的检查点"""
        config = run_config(steps=4, model=tiny_config(max_len=8, dropout_rate=0.1))
        first = self._train(config)[2].get_item('model.ckpt')
        second = self._train(config)[2].get_item('model.ckpt')
        self.assertEqual(first, second)

    def test_deterministic_loss_log(self):
        """相同种子两次训练写出逐字节相同的损失日志"""
        config = run_config(steps=6, model=tiny_config(max_len=8, dropout_rate=0.1))
        with tempfile.TemporaryDirectory() as directory:
            contents = []
            for name in ('first.jsonl', 'second.jsonl'):
                path = Path(directory) / name
                TrainService(config, SimpleKVRepository(), JsonlLossLogRepository(str(path))).train(self.corpus)
                contents.append(path.read_bytes())
        self.assertEqual(contents[0], contents[1])
        self.assertGreater(len(contents[0]), 0)

    def test_loss_decreases(self):
        """重复模式的小语料上损失下降"""
        config = run_config(steps=150, model=tiny_config(max_len=8, attention_mode='causal'), prior=None,
                            training=TrainingConfig(steps=150, batch_size=3, seed=0, learning_rate=1e-2))
        _, _, _, losses = self._train(config)
        records = losses.records()
        self.assertLess(np.mean([r.loss for r in records[-10:]]), np.mean([r.loss for r in records[:10]]))

    def test_divergence(self):
        """非有限损失时中止，之前的检查点保持不变"""
        checkpoints = SimpleKVRepository()
        service = TrainService(run_config(), checkpoints, SimpleLossLogRepository())
        with patch.object(TrainService, 'step_loss', return_value=LossValue(value=float('nan'), token_count=3)):
            with self.assertRaises(TrainingDivergedException) as ctx:
                service.train(self.corpus)
        self.assertEqual(1, ctx.exception.step)
        _, header = decode_checkpoint(checkpoints.get_item('model.ckpt'))
        self.assertEqual(0, header['step'])


class TestRepository(TestCase):

    def setUp(self):
        self._dir = tempfile.TemporaryDirectory()
        self.dir = Path(self._dir.name)

    def tearDown(self):
        self._dir.cleanup()

    def test_file_checkpoint_repository(self):
        """原子写入后不残留临时文件"""
        with FileCheckpointRepository(self._dir.name) as repository:
            self.assertIsNone(repository.get_item('a.ckpt'))
            repository.set_item('a.ckpt', b'first')
            repository.set_item('a.ckpt', b'second')
            self.assertEqual(b'second', repository.get_item('a.ckpt'))
            self.assertEqual(['a.ckpt'], list(repository))
            self.assertEqual(['a.ckpt'], [p.name for p in self.dir.iterdir()])
            repository.del_item('a.ckpt')
            self.assertEqual(0, len(repository))
            self.assertFalse((self.dir / 'a.ckpt').exists())

    def test_jsonl_loss_log(self):
        log = JsonlLossLogRepository(str(self.dir / 'loss.jsonl'))
        self.assertEqual([], log.records())
        log.reset()
        records = [LossRecord(step=1, loss=2.5, token_count=7), LossRecord(step=2, loss=2.25, token_count=6)]
        for record in records:
            log.append(record)
        self.assertEqual(records, log.records())
        log.reset()
        self.assertEqual([], log.records())


def synthetic_corpus(rng: np.random.Generator, size: int) -> str:
    """由少量句型重复拼接的字符语料"""
    subjects = ['the cat', 'a dog', 'my bird', 'our fox']
    verbs = ['sat on', 'ran to', 'looked at', 'jumped over']
    objects = ['the mat', 'a log', 'the hill', 'my hat']
    lines, total = [], 0
    while total < size:
        line = ' '.join([subjects[rng.integers(4)], verbs[rng.integers(4)], objects[rng.integers(4)]]) + '.'
        lines.append(line)
        total += len(line) + 1
    return '\n'.join(lines) + '\n'


@unittest.skipUnless(RUN_SLOW, '设置 LAB_RUN_SLOW=1 时运行')
class TestDeskScaleTraining(TestCase):
    """桌面规模训练：三种预设训练后的测试困惑度都明显低于未训练模型"""

    def test_presets_learn(self):
        rng = np.random.default_rng(0)
        with tempfile.TemporaryDirectory() as directory:
            train_path, test_path = Path(directory) / 'train.txt', Path(directory) / 'test.txt'
            train_path.write_text(synthetic_corpus(rng, 100_000), encoding='utf-8')
            test_path.write_text(synthetic_corpus(rng, 3_000), encoding='utf-8')
            service = ExperimentService(FileCheckpointRepository(directory))
            for name in ('upmlm', 'bert-like', 'gpt-like'):
                config = preset(name, str(train_path), str(test_path), seed=0,
                                checkpoint_path=str(Path(directory) / f'{name}.ckpt'))
                train = ingest(config.train_path, config.tokenizer, config.model.max_len)
                test = ingest(config.test_path, config.tokenizer, train.max_len, train.vocabulary, split='test')
                untrained = TrainService(config, SimpleKVRepository(), SimpleLossLogRepository()).build_model(train)
                baseline = service.score(untrained, test, 'sequential', 0).ppl
                _, report = service.train(config)
                self.assertLess(report.ppl, 0.6 * baseline, name)
                if name == 'upmlm':
                    model = service.load(config.checkpoint_path).model
                    random = service.score(model, test, 'random', 0).ppl
                    self.assertLessEqual(random, 1.35 * report.ppl)
