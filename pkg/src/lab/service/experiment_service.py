"""实验编排：从检查点加载模型，串起生成、评估、等价性验证与耗时对比

命令行中的位置（锚点文件、顺序文件、轨迹）都从 1 开始，库内部从 0 开始，转换只发生在这里。
"""
import logging
from typing import Optional, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict

from lab.repository.d_basic import CheckpointRepository, FileCheckpointRepository, JsonlLossLogRepository
from lab.service.corpus import ingest
from lab.service.entity import Vocabulary, RunConfig, Corpus
from lab.service.train_service import TrainService, TrainingResult
from pmlm.config import SPECIAL_TOKENS
from pmlm.evaluation.latency import bench_latency
from pmlm.evaluation.model import PplReport, LatencyBenchmark, PplMode, render_table
from pmlm.evaluation.ppl import ppl_bidirectional, ppl_causal
from pmlm.generation.generator import generate, generate_causal, InvalidOrderException
from pmlm.generation.model import GenerationConstraints, GenerationOrder, GenerationTrace, SamplerSpec
from pmlm.model.checkpoint import decode_checkpoint, CheckpointFormatException
from pmlm.model.config import TransformerConfig
from pmlm.model.transformer import Transformer
from pmlm.objective.equivalence import verify_equivalence
from pmlm.objective.model import EquivalenceReport

logger = logging.getLogger('lab.experiment')

OrderKind = Literal['random', 'ltr', 'file']
TRACE_MASK_SYMBOL = '_'


class AnchorFileException(Exception):
    """锚点文件中存在格式错误的行"""

    def __init__(self, errors: list[tuple[int, str]]):
        self.errors = errors
        """(行号, 原因)"""
        self.message = "锚点文件格式错误: " + "; ".join(f"第 {line} 行: {reason}" for line, reason in errors)
        super().__init__(self.message)


class LoadedModel(BaseModel):
    """从检查点还原的模型与词表"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    model: Transformer
    vocabulary: Vocabulary


def parse_anchors(text: str, vocabulary: Vocabulary, length: int) -> dict[int, int]:
    """
    解析锚点文件，每行 `<位置>:<符号>`，位置从 1 开始；空行与 # 开头的行被忽略
    Returns:
        从 0 开始的位置 -> 词编号
    Raises:
        AnchorFileException: 汇总全部出错的行号
    """
    index = vocabulary.index
    anchors, errors = {}, []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.rstrip('\r\n')
        if not line.strip() or line.lstrip().startswith('#'):
            continue
        position, separator, symbol = line.partition(':')
        if not separator:
            errors.append((lineno, "缺少冒号"))
            continue
        try:
            position = int(position.strip())
        except ValueError:
            errors.append((lineno, f"位置 {position!r} 不是整数"))
            continue
        if not 1 <= position <= length:
            errors.append((lineno, f"位置 {position} 不在 1..{length} 内"))
        elif symbol in SPECIAL_TOKENS or symbol not in index:
            errors.append((lineno, f"符号 {symbol!r} 不在词表中或是特殊符号"))
        elif position - 1 in anchors:
            errors.append((lineno, f"位置 {position} 重复"))
        else:
            anchors[position - 1] = index[symbol]
    if errors:
        raise AnchorFileException(errors)
    return anchors


def parse_order(text: str) -> list[int]:
    """
    解析顺序文件：以空白分隔、从 1 开始的位置
    Raises:
        InvalidOrderException: 含有非整数
    """
    try:
        return [int(token) - 1 for token in text.split()]
    except ValueError as e:
        raise InvalidOrderException(f"顺序文件无法解析: {e}")


def trace_rows(trace: GenerationTrace, vocabulary: Vocabulary) -> list[dict]:
    """轨迹的 JSON Lines 行：位置从 1 开始，快照中 [MASK] 显示为 _"""
    return [{'step': step.step, 'position': step.position + 1, 'token': vocabulary.tokens[step.token],
             'token_id': step.token, 'snapshot': vocabulary.decode(step.snapshot, mask_symbol=TRACE_MASK_SYMBOL)}
            for step in trace.steps]


def render_trace(rows: list[dict]) -> str:
    return render_table(['Step', 'Position', 'Token', 'Sequence'],
                        [[row['step'], row['position'], row['token'], row['snapshot']] for row in rows])


def render_equivalence(report: EquivalenceReport) -> str:
    table = render_table(['Quantity', 'Value'], [
        ['N', report.n],
        ['u-PMLM loss', f'{report.pmlm_exact:.12f}'],
        ['APLM / C', f'{report.aplm_normalized:.12f}'],
        ['(N+1) * u-PMLM', f'{report.scaled_pmlm:.12f}'],
        ['APLM mean over N!', f'{report.aplm_mean:.12f}'],
        ['C = (N+1)!', report.constant_C],
        ['max |gap|', f'{report.max_abs_gap:.3e}'],
    ])
    audit = render_table(['K', 'expected (N-K)!(K-1)!', 'observed', 'groups', 'ok'],
                         [[e.k, e.expected, f'{e.observed_min}..{e.observed_max}', e.groups, e.ok]
                          for e in report.duplication_audit.values()])
    return f'{table}\n\n{audit}\n\n{"PASSED" if report.passed else "FAILED"}'


def equivalence_model(seed: int, vocab_size: int = 12) -> Transformer:
    """任意参数即可：等价关系对所有参数都成立"""
    config = TransformerConfig(vocab_size=vocab_size, max_len=16, layers=2, heads=2, hidden_size=16,
                               intermediate_size=32, dropout_rate=0.0)
    return Transformer(config, seed=seed)


class ExperimentService:
    """命令行背后的实验操作"""

    def __init__(self, checkpoint_repository: Optional[CheckpointRepository] = None):
        self.checkpoint_repository = checkpoint_repository or FileCheckpointRepository('.')

    def load(self, path: str) -> LoadedModel:
        """
        Raises:
            CheckpointFormatException: 文件不存在、格式错误或缺少词表
        """
        blob = self.checkpoint_repository.get_item(path)
        if blob is None:
            raise CheckpointFormatException(f"检查点 {path} 不存在")
        model, header = decode_checkpoint(blob)
        if 'vocabulary' not in header:
            raise CheckpointFormatException(f"检查点 {path} 中没有词表")
        vocabulary = Vocabulary.model_validate(header['vocabulary'])
        logger.info(f'加载检查点 {path}: {model.attention_mode} 模型，词表大小 {len(vocabulary)}')
        return LoadedModel(model=model, vocabulary=vocabulary)

    def train(self, config: RunConfig) -> tuple[TrainingResult, Optional[PplReport]]:
        """训练并在测试集上评估顺序困惑度"""
        service = TrainService(config, self.checkpoint_repository,
                               JsonlLossLogRepository(config.resolved_loss_log_path))
        corpus = ingest(config.train_path, config.tokenizer, config.model.max_len)
        model, result = service.train(corpus)
        report = None
        if config.test_path:
            test = ingest(config.test_path, config.tokenizer, corpus.max_len, corpus.vocabulary, split='test')
            report = self.score(model, test, 'sequential', config.training.seed)
        return result, report

    @staticmethod
    def score(model: Transformer, corpus: Corpus, mode: PplMode, seed: int) -> PplReport:
        sequences = corpus.as_array()
        if model.attention_mode == 'causal':
            return ppl_causal(model, sequences, mode)
        return ppl_bidirectional(model, sequences, mode, seed)

    def eval_ppl(self, checkpoint: str, corpus_path: str, mode: PplMode, seed: int) -> PplReport:
        """
        Raises:
            UnsupportedModeException: 因果模型请求随机顺序
        """
        loaded = self.load(checkpoint)
        corpus = ingest(corpus_path, loaded.vocabulary.kind, loaded.model.config.max_len, loaded.vocabulary,
                        split='test')
        return self.score(loaded.model, corpus, mode, seed)

    def generate(self, checkpoint: str, length: int, order_kind: OrderKind, sampler: SamplerSpec, seed: int,
                 anchors_text: Optional[str] = None, order_text: Optional[str] = None
                 ) -> tuple[str, list[int], Optional[list[dict]]]:
        """
        Returns:
            生成文本、编号序列与轨迹行（因果模型没有轨迹）
        """
        loaded = self.load(checkpoint)
        model, vocabulary = loaded.model, loaded.vocabulary
        rng = np.random.default_rng(seed)
        anchors = parse_anchors(anchors_text, vocabulary, length) if anchors_text else {}
        if model.attention_mode == 'causal':
            if anchors or order_kind != 'ltr':
                raise InvalidOrderException("因果模型只能从左到右生成，且不支持锚点")
            tokens = generate_causal(model, length, sampler, rng)
            return vocabulary.decode(tokens), tokens.tolist(), None
        constraints = GenerationConstraints(anchors=anchors, target_length=length)
        if order_kind == 'random':
            order = GenerationOrder.random(length, rng, exclude=anchors)
        elif order_kind == 'ltr':
            order = GenerationOrder.left_to_right(length, exclude=anchors)
        else:
            if order_text is None:
                raise InvalidOrderException("--order file 需要同时指定 --order-file")
            order = GenerationOrder.explicit(parse_order(order_text))
        tokens, trace = generate(model, constraints, order, sampler, rng)
        return vocabulary.decode(tokens), tokens.tolist(), trace_rows(trace, vocabulary)

    def verify(self, n: int, seed: int, checkpoint: Optional[str] = None) -> EquivalenceReport:
        """在检查点模型或按种子随机初始化的模型上验证等价关系"""
        model = self.load(checkpoint).model if checkpoint else equivalence_model(seed)
        rng = np.random.default_rng(seed)
        tokens = rng.integers(len(SPECIAL_TOKENS), model.config.vocab_size, size=n)
        return verify_equivalence(model, tokens)

    def bench(self, causal_checkpoint: Optional[str], bidirectional_checkpoint: Optional[str], count: int,
              length: int, sampler: SamplerSpec, seed: int) -> LatencyBenchmark:
        """没有给出检查点时使用同规模的随机初始化模型"""
        if causal_checkpoint and bidirectional_checkpoint:
            causal = self.load(causal_checkpoint).model
            bidirectional = self.load(bidirectional_checkpoint).model
        else:
            config = TransformerConfig(vocab_size=32, max_len=max(length, 1), layers=2, heads=4, hidden_size=64,
                                       intermediate_size=256, dropout_rate=0.0)
            causal = Transformer(config.model_copy(update={'attention_mode': 'causal'}), seed=seed)
            bidirectional = Transformer(config, seed=seed)
        return bench_latency(causal, bidirectional, count, length, sampler, seed)

