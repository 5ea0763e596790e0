"""困惑度评估与生成耗时对比"""
from pmlm.evaluation.model import PplReport, SequencePpl, LatencyReport, LatencyBenchmark, render_table
from pmlm.evaluation.ppl import (ppl_bidirectional, ppl_causal, UnsupportedModeException, EmptyCorpusException,
                                 scoring_order, order_inputs)
from pmlm.evaluation.latency import bench_latency
