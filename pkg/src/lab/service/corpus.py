"""语料读取：按行切分文档，编码后按最大长度分块并填充"""
import logging
import math
from pathlib import Path
from typing import Optional

from lab.service.entity import Corpus, Vocabulary, TokenizerKind, Split
from pmlm.config import PAD_ID
from pmlm.evaluation.ppl import EmptyCorpusException

logger = logging.getLogger('lab.corpus')


def read_documents(path: str) -> list[str]:
    """读取 UTF-8 文本，每个非空行是一篇文档"""
    text = Path(path).read_text(encoding='utf-8')
    return [line for line in text.splitlines() if line.strip()]


def chunk(ids: list[int], max_len: int) -> list[list[int]]:
    """切成 ⌈len/max_len⌉ 块，最后一块用 [PAD] 补齐"""
    chunks = []
    for i in range(math.ceil(len(ids) / max_len)):
        piece = ids[i * max_len:(i + 1) * max_len]
        chunks.append(piece + [PAD_ID] * (max_len - len(piece)))
    return chunks


def ingest(path: str, kind: TokenizerKind, max_len: int, vocabulary: Optional[Vocabulary] = None,
           split: Split = 'train') -> Corpus:
    """
    读取语料
    Args:
        path: 文本文件路径
        kind: 切分方式
        max_len: 序列长度
        vocabulary: 已有词表（测试集沿用训练集的词表），为空时由本文件构建
        split: train 或 test

    Raises:
        OSError: 文件无法读取
        UnicodeDecodeError: 文件不是 UTF-8
        EmptyCorpusException: 没有任何非空文档
    """
    documents = read_documents(path)
    if not documents:
        raise EmptyCorpusException(f"语料 {path} 中没有任何文档")
    if vocabulary is None:
        vocabulary = Vocabulary.build(documents, kind)
    elif vocabulary.kind != kind:
        raise ValueError(f"词表的切分方式 {vocabulary.kind} 与请求的 {kind} 不一致")
    sequences = []
    for document in documents:
        ids = vocabulary.encode(document)
        if ids:
            sequences.extend(chunk(ids, max_len))
    if not sequences:
        raise EmptyCorpusException(f"语料 {path} 切分后为空")
    logger.info(f'读取语料 {path}: {len(documents)} 篇文档，{len(sequences)} 条序列，词表大小 {len(vocabulary)}')
    return Corpus(sequences=sequences, vocabulary=vocabulary, split=split, max_len=max_len)
