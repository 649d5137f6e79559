"""
节点行为画像（BAR 模型）
altruistic / lazy / byzantine / offline / withholder，每个节点在一个场景中只有一种
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, FrozenSet, Optional, Tuple


class BehaviorKind(str, Enum):
    ALTRUISTIC = "altruistic"
    LAZY = "lazy"
    BYZANTINE = "byzantine"
    OFFLINE = "offline"
    WITHHOLDER = "withholder"


class CorruptionMode(str, Enum):
    RANDOM_POINT = "random_point"
    WRONG_PAYLOAD = "wrong_payload"
    WITHHOLD = "withhold"


@dataclass(frozen=True)
class BehaviorProfile:
    kind: BehaviorKind = BehaviorKind.ALTRUISTIC
    # lazy：不读链，固定回答 (true, lazy_block, 0, true)
    lazy_block: int = 1
    corruption: CorruptionMode = CorruptionMode.RANDOM_POINT
    # offline：[start, end) 区间；end 为 None 表示一直离线
    offline: Tuple[Tuple[int, Optional[int]], ...] = ()
    # 以下两项只对 byzantine 生效
    bad_deal_targets: FrozenSet[str] = frozenset()
    forge_key: bool = False

    def __post_init__(self):
        if self.kind != BehaviorKind.BYZANTINE and (self.bad_deal_targets or self.forge_key):
            raise ValueError("bad_deal_targets / forge_key 只适用于 byzantine 节点")

    @property
    def is_honest(self) -> bool:
        return self.kind == BehaviorKind.ALTRUISTIC

    def is_offline(self, height: int) -> bool:
        if self.kind != BehaviorKind.OFFLINE:
            return False
        if not self.offline:
            return True
        return any(start <= height and (end is None or height < end) for start, end in self.offline)

    def answers_queries(self) -> bool:
        # 有离线区间的节点在区间外照常工作，区间内由模拟器跳过
        if self.kind == BehaviorKind.OFFLINE:
            return bool(self.offline)
        if self.kind == BehaviorKind.WITHHOLDER:
            return False
        if self.kind == BehaviorKind.BYZANTINE and self.corruption == CorruptionMode.WITHHOLD:
            return False
        return True

    @classmethod
    def from_dict(cls, data: Optional[Dict[str, Any]]) -> "BehaviorProfile":
        """场景文件里的 behavior 段；字符串简写等价于 {kind: ...}"""
        if data is None:
            return cls()
        if isinstance(data, str):
            data = {"kind": data}
        intervals = []
        for item in data.get("offline", []) or []:
            if isinstance(item, (list, tuple)) and len(item) == 2:
                intervals.append((int(item[0]), None if item[1] is None else int(item[1])))
            elif isinstance(item, dict):
                end = item.get("until")
                intervals.append((int(item.get("from", 0)), None if end is None else int(end)))
            else:
                raise ValueError(f"离线区间格式错误: {item!r}")
        return cls(
            kind=BehaviorKind(data.get("kind", "altruistic")),
            lazy_block=int(data.get("lazy_block", 1)),
            corruption=CorruptionMode(data.get("corruption", "random_point")),
            offline=tuple(intervals),
            bad_deal_targets=frozenset(data.get("bad_deal_targets", []) or []),
            forge_key=bool(data.get("forge_key", False)),
        )
