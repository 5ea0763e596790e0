"""评估报告"""
from typing import Literal, Sequence

from pydantic import BaseModel, Field

PplMode = Literal['sequential', 'random']

REFERENCE_RATIO = 126.8 / 105.6
"""大规模 GPU 实验中双向模型与因果模型生成耗时之比，仅作参照"""

COST_NOTE = ("双向模型每生成一个词都要更新全部位置的隐状态（每步一次长度 N 的完整前向），"
             "因果模型借助键值缓存每步只计算新位置")


def render_table(headers: Sequence[str], rows: Sequence[Sequence]) -> str:
    """对齐的纯文本表格"""
    cells = [[str(h) for h in headers]] + [[str(c) for c in row] for row in rows]
    widths = [max(len(row[i]) for row in cells) for i in range(len(headers))]
    lines = ['  '.join(cell.ljust(width) for cell, width in zip(row, widths)).rstrip() for row in cells]
    lines.insert(1, '  '.join('-' * width for width in widths))
    return '\n'.join(lines)


class SequencePpl(BaseModel):
    """单条序列的评估结果"""

    index: int
    """序列在语料中的下标"""
    order: list[int]
    """打分顺序（从 0 开始的位置）"""
    nll: float
    """负对数似然总和（nats）"""
    token_count: int
    """参与打分的非填充位置数"""


class PplReport(BaseModel):
    """困惑度报告"""

    mode: PplMode
    """sequential 或 random"""
    model_kind: str = 'bidirectional'
    """被评估模型的注意力模式"""
    ppl: float = Field(ge=1.0)
    """exp(平均负对数似然)"""
    mean_nll: float
    """平均负对数似然（nats）"""
    token_count: int
    """参与打分的位置数，不含 [PAD]"""
    seed: int
    """随机顺序使用的种子，第 i 条序列的顺序由 (seed, i) 决定"""
    sequences: list[SequencePpl] = Field(default_factory=list)
    """逐条结果"""

    def render(self) -> str:
        column = 'PPL(sequential)' if self.mode == 'sequential' else 'PPL(random)'
        return render_table(['Model', column, 'Tokens'],
                            [[self.model_kind, f'{self.ppl:.2f}', self.token_count]])


class LatencyReport(BaseModel):
    """一种生成路径的耗时"""

    model_kind: str
    """bidirectional（每步完整重算）或 causal（增量缓存）"""
    count: int
    """生成的序列条数"""
    length: int
    """每条序列的长度"""
    seconds: float = Field(gt=0.0)
    """墙钟时间"""
    forwards: int
    """前向调用次数"""
    ratio: float
    """相对因果模型的耗时比"""


class LatencyBenchmark(BaseModel):
    """生成耗时对比"""

    reports: list[LatencyReport]
    """各生成路径的结果"""
    reference_ratio: float = REFERENCE_RATIO
    """参照比例，不作为断言"""
    note: str = COST_NOTE
    """单步计算代价说明"""

    def render(self) -> str:
        table = render_table(['Model', 'Latency'],
                             [[report.model_kind, f'{report.seconds:.3f}s (x{report.ratio:.2f})']
                              for report in self.reports])
        count, length = self.reports[0].count, self.reports[0].length
        return '\n'.join([f'生成 {count} 条长度为 {length} 的序列', table,
                          f'参照比例 126.8/105.6 ≈ {self.reference_ratio:.2f}', self.note])
