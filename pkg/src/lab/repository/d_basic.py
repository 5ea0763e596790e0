import logging
import os
import tempfile
from abc import abstractmethod
from pathlib import Path
from typing import TypeVar, Generic, Iterator, Optional

from lab.service.entity import LossRecord

_KEY = TypeVar('_KEY')
_VAL = TypeVar('_VAL')

logger = logging.getLogger('lab.repository')


class KVRepository(Generic[_KEY, _VAL]):
    """
    键值存储仓库

    - 实现了__enter__和__exit__方法，使得可以使用with语句
    - 实现了close方法，使得可以关闭连接
    """

    @abstractmethod
    def __iter__(self) -> Iterator[_KEY]:
        pass

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        self.close()

    def close(self):
        """关闭连接"""
        pass

    @abstractmethod
    def get_item(self, key: _KEY) -> Optional[_VAL]:
        """获取键值，不存在时返回 None"""
        pass

    @abstractmethod
    def set_item(self, key: _KEY, value: _VAL):
        """设置键值"""
        pass

    @abstractmethod
    def del_item(self, key: _KEY):
        """删除键值"""
        pass

    @abstractmethod
    def __len__(self):
        pass


class SimpleKVRepository(KVRepository[_KEY, _VAL]):
    """内存中的键值存储仓库"""

    def __init__(self):
        self.data: dict[_KEY, _VAL] = {}

    def get_item(self, key: _KEY) -> Optional[_VAL]:
        return self.data.get(key)

    def set_item(self, key: _KEY, value: _VAL):
        self.data[key] = value

    def del_item(self, key: _KEY):
        if key in self.data:
            del self.data[key]

    def __iter__(self):
        return iter(list(self.data))

    def __len__(self):
        return len(self.data)


CheckpointRepository = KVRepository[str, bytes]
"""检查点仓库：路径 -> 检查点字节串"""


class FileCheckpointRepository(KVRepository[str, bytes]):
    """以文件保存检查点，写入先落到同目录的临时文件再原子替换，中途失败时旧文件保持完整"""

    def __init__(self, directory: str = '.'):
        self.directory = Path(directory)
        self._written: list[str] = []

    def _path(self, key: str) -> Path:
        return self.directory / key

    def get_item(self, key: str) -> Optional[bytes]:
        path = self._path(key)
        if not path.is_file():
            return None
        return path.read_bytes()

    def set_item(self, key: str, value: bytes):
        path = self._path(key)
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f'.{path.name}.', suffix='.tmp')
        try:
            with os.fdopen(fd, 'wb') as f:
                f.write(value)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.remove(tmp)
            raise
        if key not in self._written:
            self._written.append(key)
        logger.debug(f'写入检查点 {path}（{len(value)} 字节）')

    def del_item(self, key: str):
        path = self._path(key)
        if path.is_file():
            path.unlink()
        if key in self._written:
            self._written.remove(key)

    def __iter__(self):
        return iter(list(self._written))

    def __len__(self):
        return len(self._written)


class LossLogRepository:
    """损失日志"""

    @abstractmethod
    def append(self, record: LossRecord):
        """追加一条记录"""
        pass

    @abstractmethod
    def records(self) -> list[LossRecord]:
        """全部记录"""
        pass

    @abstractmethod
    def reset(self):
        """清空日志"""
        pass


class SimpleLossLogRepository(LossLogRepository):
    """内存中的损失日志"""

    def __init__(self):
        self.data: list[LossRecord] = []

    def append(self, record: LossRecord):
        self.data.append(record)

    def records(self) -> list[LossRecord]:
        return list(self.data)

    def reset(self):
        self.data.clear()


class JsonlLossLogRepository(LossLogRepository):
    """JSON Lines 文件形式的损失日志，每行一条记录"""

    def __init__(self, path: str):
        self.path = Path(path)

    def append(self, record: LossRecord):
        with self.path.open('a', encoding='utf-8') as f:
            f.write(record.model_dump_json() + '\n')

    def records(self) -> list[LossRecord]:
        if not self.path.is_file():
            return []
        lines = self.path.read_text(encoding='utf-8').splitlines()
        return [LossRecord.model_validate_json(line) for line in lines if line.strip()]

    def reset(self):
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.path.write_text('', encoding='utf-8')
