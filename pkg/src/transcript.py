"""
运行记录模块
把账本区块、消息投递和 DKG 广播转成 JSON lines，并计算记录摘要
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, List, Union

from .group import PointG1, PointG2, Scalar


def to_jsonable(obj: Any) -> Any:
    """群元素/字节转 hex，dataclass 转 dict，集合排序后转列表"""
    if isinstance(obj, Enum):
        return obj.value
    if obj is None or isinstance(obj, (bool, int, float, str)):
        return obj
    if isinstance(obj, (bytes, bytearray)):
        return bytes(obj).hex()
    if isinstance(obj, (PointG1, PointG2)):
        return obj.hex()
    if isinstance(obj, Scalar):
        return obj.to_bytes().hex()
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: to_jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (set, frozenset)):
        return sorted(to_jsonable(v) for v in obj)
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    raise TypeError(f"无法序列化: {type(obj).__name__}")


def dumps_line(record: dict) -> str:
    return json.dumps(to_jsonable(record), sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def render_jsonl(records: Iterable[dict]) -> str:
    return "".join(dumps_line(r) + "\n" for r in records)


def digest(records: Iterable[dict]) -> str:
    return hashlib.sha256(render_jsonl(records).encode("utf-8")).hexdigest()


def write_jsonl(path: Union[str, Path], records: List[dict]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(render_jsonl(records), encoding="utf-8")
    return path
