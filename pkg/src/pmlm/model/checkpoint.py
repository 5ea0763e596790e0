"""检查点编解码

文件布局：UTF-8 JSON 头部 {config, tensors: name -> {shape, dtype, byte_offset}, ...} + '\\0' + 小端 float64 数据。
"""
import json
from typing import Any, Optional

import numpy as np

from pmlm.core.tensor import Tensor
from pmlm.model.config import TransformerConfig
from pmlm.model.transformer import Transformer, parameter_shapes

SEPARATOR = b'\0'
DTYPE = 'f64'
_NUMPY_DTYPE = np.dtype('<f8')


class CheckpointFormatException(Exception):
    """检查点格式错误"""

    def __init__(self, message: str = "检查点格式错误"):
        self.message = message
        super().__init__(self.message)


def encode_checkpoint(model: Transformer, extra: Optional[dict[str, Any]] = None) -> bytes:
    """
    将模型编码为字节串，相同参数总是得到相同字节
    Args:
        model: 模型
        extra: 额外写入头部的字段（如词表）

    Returns:
        检查点字节串
    """
    directory, chunks, offset = {}, [], 0
    for name in parameter_shapes(model.config):
        data = np.ascontiguousarray(model.params[name].data, dtype=_NUMPY_DTYPE)
        directory[name] = {'shape': list(data.shape), 'dtype': DTYPE, 'byte_offset': offset}
        chunk = data.tobytes()
        chunks.append(chunk)
        offset += len(chunk)
    header = {'config': model.config.model_dump(), 'tensors': directory}
    for key, value in (extra or {}).items():
        if key in header:
            raise CheckpointFormatException(f"额外字段 {key} 与保留字段冲突")
        header[key] = value
    head = json.dumps(header, sort_keys=True, ensure_ascii=False, separators=(',', ':')).encode('utf-8')
    return head + SEPARATOR + b''.join(chunks)


def decode_checkpoint(blob: bytes) -> tuple[Transformer, dict[str, Any]]:
    """
    从字节串还原模型
    Returns:
        模型与头部中的额外字段
    Raises:
        CheckpointFormatException: 头部无法解析、参数集合与配置不一致或数据越界
    """
    split = blob.find(SEPARATOR)
    if split < 0:
        raise CheckpointFormatException("缺少头部分隔符")
    try:
        header = json.loads(blob[:split].decode('utf-8'))
        if not isinstance(header, dict):
            raise CheckpointFormatException(f"头部不是 JSON 对象: {type(header).__name__}")
        config = TransformerConfig.model_validate(header.pop('config'))
        directory = header.pop('tensors')
    except (ValueError, KeyError) as e:
        raise CheckpointFormatException(f"头部无法解析: {e}")
    if not isinstance(directory, dict) or not all(isinstance(entry, dict) for entry in directory.values()):
        raise CheckpointFormatException("参数目录必须是以参数名为键的 JSON 对象")
    payload = memoryview(blob)[split + 1:]
    expected = parameter_shapes(config)
    if set(directory) != set(expected):
        raise CheckpointFormatException(f"参数集合与配置不一致: {sorted(set(directory) ^ set(expected))}")
    params = {}
    for name, shape in expected.items():
        entry = directory[name]
        if entry.get('dtype') != DTYPE or tuple(entry.get('shape', ())) != shape:
            raise CheckpointFormatException(f"参数 {name} 的形状或类型与配置不一致")
        start = entry.get('byte_offset')
        if not isinstance(start, int):
            raise CheckpointFormatException(f"参数 {name} 缺少整数偏移")
        end = start + int(np.prod(shape, dtype=np.int64)) * _NUMPY_DTYPE.itemsize
        if start < 0 or end > len(payload):
            raise CheckpointFormatException(f"参数 {name} 的数据越界")
        data = np.frombuffer(payload[start:end], dtype=_NUMPY_DTYPE).reshape(shape).astype(np.float64)
        params[name] = Tensor(data, requires_grad=True, name=name)
    return Transformer(config, params=params), header
