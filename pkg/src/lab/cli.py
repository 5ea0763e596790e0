"""命令行入口

子命令: train / init-config / generate / eval-ppl / verify-equivalence / bench-latency。
每个子命令在标准输出打印文本表格，--json 指定时另外写出 JSON 报告。
退出码: 0 成功，1 领域错误或验证未通过，2 参数错误（argparse）。
"""
import argparse
import json
import logging
import logging.config
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

import colorlog
from pydantic import ValidationError

from lab.config import LabConfig
from lab.service.entity import RunConfig
from lab.service.experiment_service import (ExperimentService, AnchorFileException, render_trace,
                                            render_equivalence)
from lab.service.presets import preset, PRESET_NAMES, UnknownPresetException
from lab.service.train_service import TrainingDivergedException
from lab.service.validator import InvalidRunConfigException
from pmlm.evaluation.ppl import UnsupportedModeException, EmptyCorpusException
from pmlm.generation.generator import InvalidOrderException
from pmlm.generation.model import SamplerSpec
from pmlm.generation.sampler import ExhaustedCandidatesException
from pmlm.masking.pattern import EnumerationLimitException
from pmlm.model.checkpoint import CheckpointFormatException
from pmlm.model.transformer import InvalidSequenceException, UnsupportedAttentionModeException

logger = logging.getLogger('lab.cli')

DOMAIN_EXCEPTIONS = (AnchorFileException, InvalidRunConfigException, TrainingDivergedException,
                     UnsupportedModeException, EmptyCorpusException, InvalidOrderException,
                     ExhaustedCandidatesException, EnumerationLimitException, CheckpointFormatException,
                     InvalidSequenceException, UnsupportedAttentionModeException, UnknownPresetException)


def setup_logging():
    """按 log_config.json 配置日志，文件不存在时只输出彩色控制台日志"""
    path = Path(LabConfig.LAB_LOG_CONFIG)
    if not path.is_file():
        colorlog.basicConfig(level=logging.INFO,
                             format='%(log_color)s%(asctime)s - %(name)s - %(levelname)s - %(message)s')
        return
    config = json.loads(path.read_text(encoding='utf-8'))
    os.makedirs(LabConfig.LAB_LOG_DIR, exist_ok=True)
    for handler in config.get('handlers', {}).values():
        if 'filename' in handler:
            handler['filename'] = os.path.join(LabConfig.LAB_LOG_DIR, os.path.basename(handler['filename']))
    logging.config.dictConfig(config)


def _write_json(path: Optional[str], payload):
    if path:
        Path(path).write_text(json.dumps(payload, ensure_ascii=False, indent=2, sort_keys=True), encoding='utf-8')


def _sampler(args) -> SamplerSpec:
    return SamplerSpec(kind=args.sampler, temperature=args.temperature, k=args.k)


def cmd_train(args, service: ExperimentService) -> int:
    config = RunConfig.model_validate_json(Path(args.config).read_text(encoding='utf-8'))
    if args.steps is not None:
        config = config.model_copy(update={'training': config.training.model_copy(update={'steps': args.steps})})
    result, report = service.train(config)
    print(f'训练完成: {result.steps} 步，初始损失 {result.initial_loss}，最终损失 {result.final_loss}')
    print(f'检查点: {result.checkpoint_path}')
    if report is not None:
        print(report.render())
    _write_json(args.json, {'result': result.model_dump(), 'test_ppl': report.model_dump() if report else None})
    return 0


def cmd_init_config(args, service: ExperimentService) -> int:
    config = preset(args.preset, train_path=args.train, test_path=args.test, seed=args.seed)
    Path(args.out).write_text(config.model_dump_json(indent=2), encoding='utf-8')
    print(f'已写出预设 {args.preset} 到 {args.out}')
    return 0


def cmd_generate(args, service: ExperimentService) -> int:
    anchors_text = Path(args.anchors).read_text(encoding='utf-8') if args.anchors else None
    order_text = Path(args.order_file).read_text(encoding='utf-8') if args.order_file else None
    text, tokens, rows = service.generate(args.checkpoint, args.length, args.order, _sampler(args), args.seed,
                                          anchors_text, order_text)
    if rows is not None:
        print(render_trace(rows))
        if args.trace:
            Path(args.trace).write_text(''.join(json.dumps(row, ensure_ascii=False) + '\n' for row in rows),
                                        encoding='utf-8')
    print(text)
    _write_json(args.json, {'text': text, 'tokens': tokens})
    return 0


def cmd_eval_ppl(args, service: ExperimentService) -> int:
    report = service.eval_ppl(args.checkpoint, args.corpus, args.mode, args.seed)
    print(report.render())
    _write_json(args.json, report.model_dump())
    return 0


def cmd_verify_equivalence(args, service: ExperimentService) -> int:
    report = service.verify(args.n, args.seed, args.checkpoint)
    print(render_equivalence(report))
    _write_json(args.json, report.model_dump())
    return 0 if report.passed else 1


def cmd_bench_latency(args, service: ExperimentService) -> int:
    benchmark = service.bench(args.causal, args.bidirectional, args.count, args.length, _sampler(args), args.seed)
    print(benchmark.render())
    _write_json(args.json, benchmark.model_dump())
    return 0


def _add_json_argument(parser: argparse.ArgumentParser):
    parser.add_argument('--json', metavar='PATH', help='JSON 报告输出路径，省略时只打印文本')


def _add_sampler_arguments(parser: argparse.ArgumentParser, default: str):
    parser.add_argument('--sampler', choices=['greedy', 'temperature', 'top_k'], default=default)
    parser.add_argument('--temperature', type=float, default=1.0)
    parser.add_argument('--k', type=int, default=40)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='pmlm-lab', description='概率掩码语言模型实验')
    subparsers = parser.add_subparsers(dest='command', required=True)

    train = subparsers.add_parser('train', help='按配置文件训练')
    train.add_argument('--config', required=True)
    train.add_argument('--steps', type=int, default=None, help='覆盖配置中的训练步数')
    _add_json_argument(train)
    train.set_defaults(handler=cmd_train)

    init = subparsers.add_parser('init-config', help='写出预设配置')
    init.add_argument('--preset', choices=PRESET_NAMES, required=True)
    init.add_argument('--out', required=True)
    init.add_argument('--train', default='train.txt')
    init.add_argument('--test', default=None)
    init.add_argument('--seed', type=int, default=0)
    init.set_defaults(handler=cmd_init_config)

    generate = subparsers.add_parser('generate', help='按给定顺序生成')
    generate.add_argument('--checkpoint', required=True)
    generate.add_argument('--length', type=int, required=True)
    generate.add_argument('--order', choices=['random', 'ltr', 'file'], default='random')
    generate.add_argument('--order-file', help='以空白分隔、从 1 开始的位置')
    generate.add_argument('--anchors', help='每行 <位置>:<符号>，位置从 1 开始')
    generate.add_argument('--seed', type=int, default=0)
    generate.add_argument('--trace', help='轨迹输出路径（JSON Lines）')
    _add_json_argument(generate)
    _add_sampler_arguments(generate, 'top_k')
    generate.set_defaults(handler=cmd_generate)

    ppl = subparsers.add_parser('eval-ppl', help='顺序或随机顺序困惑度')
    ppl.add_argument('--checkpoint', required=True)
    ppl.add_argument('--corpus', required=True)
    ppl.add_argument('--mode', choices=['sequential', 'random'], default='sequential')
    ppl.add_argument('--seed', type=int, default=0)
    _add_json_argument(ppl)
    ppl.set_defaults(handler=cmd_eval_ppl)

    verify = subparsers.add_parser('verify-equivalence', help='数值验证 u-PMLM 与排列自回归模型的等价性')
    verify.add_argument('--n', type=int, required=True)
    verify.add_argument('--seed', type=int, default=0)
    verify.add_argument('--checkpoint', default=None)
    _add_json_argument(verify)
    verify.set_defaults(handler=cmd_verify_equivalence)

    bench = subparsers.add_parser('bench-latency', help='生成耗时对比')
    bench.add_argument('--count', type=int, default=4)
    bench.add_argument('--length', type=int, default=32)
    bench.add_argument('--causal', default=None, help='因果模型检查点')
    bench.add_argument('--bidirectional', default=None, help='双向模型检查点')
    bench.add_argument('--seed', type=int, default=0)
    _add_json_argument(bench)
    _add_sampler_arguments(bench, 'greedy')
    bench.set_defaults(handler=cmd_bench_latency)
    return parser


def main(argv: Optional[Sequence[str]] = None, service: Optional[ExperimentService] = None) -> int:
    """
    解析参数并执行子命令
    Returns:
        退出码
    """
    args = build_parser().parse_args(argv)
    service = service or ExperimentService()
    try:
        return args.handler(args, service)
    except DOMAIN_EXCEPTIONS as e:
        logger.error(f'{args.command} 失败: {e.message}')
        print(e.message, file=sys.stderr)
        return 1
    except (ValidationError, ValueError, OSError) as e:
        logger.error(f'{args.command} 失败: {e}')
        print(str(e), file=sys.stderr)
        return 1


def run():
    """控制台脚本入口"""
    setup_logging()
    sys.exit(main())
