"""
门限 BLS 签名模块
σ ∈ G1, PK ∈ G2；验证式 e(σ, G) = e(H(m), PK) 写成 pairing_check([(σ, −G), (H(m), PK)])
"""
from __future__ import annotations

import logging
import random
from dataclasses import dataclass
from typing import TYPE_CHECKING, Dict, Sequence, Tuple

from .group import (
    GroupError,
    PointG1,
    PointG2,
    Scalar,
    hash_to_g1,
    pairing_check,
    random_scalar,
    sum_points,
)
from .sharing import SharingError, lagrange_coefficients, select_threshold_subset

if TYPE_CHECKING:
    from .dkg import KeyShare

logger = logging.getLogger("vote-oracle.tbls")


class ThresholdError(ValueError):
    """签名分片不足或序号重复"""


@dataclass(frozen=True)
class SignatureShare:
    index: int
    point: PointG1

    def to_bytes(self) -> bytes:
        return self.index.to_bytes(4, "big") + self.point.to_bytes()


@dataclass(frozen=True)
class Signature:
    point: PointG1

    def to_bytes(self) -> bytes:
        return self.point.to_bytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "Signature":
        return cls(PointG1.from_bytes(data))


@dataclass(frozen=True)
class KeyPair:
    """节点长期身份密钥（注册时提交的 BLS 公钥）"""

    secret: Scalar
    public: PointG2


# ═══════════════════════════════════════════════════════
# 单签名 BLS
# ═══════════════════════════════════════════════════════


def keygen(rng: random.Random) -> KeyPair:
    sk = random_scalar(rng)
    return KeyPair(sk, PointG2.generator() * sk)


def sign(secret: Scalar, message: bytes) -> Signature:
    return Signature(hash_to_g1(message) * secret)


def _pairing_ok(point: PointG1, message: bytes, key: PointG2) -> bool:
    try:
        return pairing_check([(point, -PointG2.generator()), (hash_to_g1(message), key)])
    except GroupError as e:
        logger.warning(f"⚠️ 配对校验输入非法: {e}")
        return False


def verify(sig: Signature, message: bytes, pk: PointG2) -> bool:
    """e(σ, −G) · e(H(m), PK) == 1"""
    return _pairing_ok(sig.point, message, pk)


# ═══════════════════════════════════════════════════════
# 门限签名
# ═══════════════════════════════════════════════════════


def sign_share(key_share: "KeyShare", message: bytes) -> SignatureShare:
    return SignatureShare(key_share.index, hash_to_g1(message) * key_share.secret)


def verify_share(share: SignatureShare, message: bytes, verification_key: PointG2) -> bool:
    return _pairing_ok(share.point, message, verification_key)


def recover(shares: Sequence[SignatureShare], t: int) -> Signature:
    """
    Lagrange 插值恢复完整签名 Σ λᵢ·σᵢ。

    输入须已逐个通过 verify_share；多于 t 个时取序号最小的 t 个。
    """
    by_index: Dict[int, SignatureShare] = {}
    for s in shares:
        if s.index in by_index:
            raise ThresholdError(f"签名分片序号重复: {s.index}")
        by_index[s.index] = s
    try:
        chosen = select_threshold_subset(by_index, t)
        lam = lagrange_coefficients(chosen)
    except SharingError as e:
        raise ThresholdError(str(e)) from e
    return Signature(sum_points(
        (by_index[i].point * lam[i] for i in chosen), PointG1.identity()
    ))


def share_indices(shares: Sequence[SignatureShare]) -> Tuple[int, ...]:
    return tuple(sorted(s.index for s in shares))
