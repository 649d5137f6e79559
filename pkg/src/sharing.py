"""
秘密分享模块
Shamir 门限分享 + Lagrange 恢复，以及 Feldman / Pedersen 可验证秘密分享承诺
"""
from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass
from typing import Dict, Iterable, List, Sequence, Tuple

from .group import PointG2, Scalar, random_scalar, sum_points

# Pedersen 承诺第二生成元的域标签
PEDERSEN_TAG = b"pedersen-H"


class SharingError(ValueError):
    """门限参数或分片集合非法"""


@dataclass(frozen=True)
class Polynomial:
    """t-1 次多项式，coefficients[0] 为秘密"""

    coefficients: Tuple[Scalar, ...]

    @property
    def threshold(self) -> int:
        return len(self.coefficients)

    @property
    def secret(self) -> Scalar:
        return self.coefficients[0]

    @classmethod
    def random(cls, secret: Scalar, t: int, rng: random.Random) -> "Polynomial":
        return cls((secret,) + tuple(random_scalar(rng) for _ in range(t - 1)))

    def evaluate(self, x: int) -> Scalar:
        # Horner
        acc = Scalar(0)
        for coeff in reversed(self.coefficients):
            acc = acc * x + coeff
        return acc


@dataclass(frozen=True)
class Share:
    index: int
    value: Scalar


@dataclass(frozen=True)
class FeldmanCommitment:
    """A_k = a_k·G"""

    points: Tuple[PointG2, ...]

    def __len__(self) -> int:
        return len(self.points)

    def evaluate(self, index: int) -> PointG2:
        """Σ_k A_k · index^k"""
        return _eval_in_exponent(self.points, index)


@dataclass(frozen=True)
class PedersenCommitment:
    """C_k = a_k·G + b_k·H"""

    points: Tuple[PointG2, ...]

    def __len__(self) -> int:
        return len(self.points)

    def evaluate(self, index: int) -> PointG2:
        return _eval_in_exponent(self.points, index)


def _eval_in_exponent(points: Sequence[PointG2], index: int) -> PointG2:
    # Horner；index^k 都是小整数，乘法很便宜
    acc = PointG2.identity()
    for pt in reversed(points):
        acc = acc * index + pt
    return acc


def _check_params(t: int, n: int):
    if t < 1 or n < 1 or t > n:
        raise SharingError(f"门限参数非法: t={t}, n={n}（要求 1 ≤ t ≤ n）")


# ═══════════════════════════════════════════════════════
# Shamir
# ═══════════════════════════════════════════════════════


def deal(secret: Scalar, t: int, n: int, rng: random.Random) -> Tuple[Polynomial, List[Share]]:
    """在位置 1..n 上分发秘密"""
    _check_params(t, n)
    poly = Polynomial.random(secret, t, rng)
    return poly, [Share(i, poly.evaluate(i)) for i in range(1, n + 1)]


def lagrange_coefficients(indices: Iterable[int]) -> Dict[int, Scalar]:
    """x=0 处的 Lagrange 系数 λᵢ = Π_{j≠i} j / (j - i)"""
    idx = list(indices)
    if len(set(idx)) != len(idx):
        raise SharingError("分片序号重复")
    if any(i <= 0 for i in idx):
        raise SharingError("分片序号必须为正整数")
    coeffs: Dict[int, Scalar] = {}
    for i in idx:
        num = Scalar(1)
        den = Scalar(1)
        for j in idx:
            if j == i:
                continue
            num = num * j
            den = den * (j - i)
        coeffs[i] = num * den.inverse()
    return coeffs


def select_threshold_subset(indices: Iterable[int], t: int) -> List[int]:
    """按序号排序后取最小的 t 个（多于 t 个时的确定性选择）"""
    idx = sorted(indices)
    if len(set(idx)) != len(idx):
        raise SharingError("分片序号重复")
    if len(idx) < t:
        raise SharingError(f"分片不足: 需要 {t} 个，只有 {len(idx)} 个")
    return idx[:t]


def recover_secret(shares: Sequence[Share], t: int) -> Scalar:
    by_index = {s.index: s for s in shares}
    if len(by_index) != len(shares):
        raise SharingError("分片序号重复")
    chosen = select_threshold_subset(by_index, t)
    lam = lagrange_coefficients(chosen)
    return sum((lam[i] * by_index[i].value for i in chosen), Scalar(0))


# ═══════════════════════════════════════════════════════
# Feldman VSS
# ═══════════════════════════════════════════════════════


def feldman_commit(poly: Polynomial) -> FeldmanCommitment:
    g = PointG2.generator()
    return FeldmanCommitment(tuple(g * a for a in poly.coefficients))


def feldman_verify(share: Share, com: FeldmanCommitment) -> bool:
    """value·G == Σ_k A_k · index^k"""
    if share.index <= 0 or len(com) == 0:
        return False
    return PointG2.generator() * share.value == com.evaluate(share.index)


# ═══════════════════════════════════════════════════════
# Pedersen VSS
# ═══════════════════════════════════════════════════════


_PEDERSEN_H = None


def pedersen_generator() -> PointG2:
    """第二生成元 H = SHA-256("pedersen-H")·G（固定值）"""
    global _PEDERSEN_H
    if _PEDERSEN_H is None:
        k = Scalar.from_int(int.from_bytes(hashlib.sha256(PEDERSEN_TAG).digest(), "big"))
        _PEDERSEN_H = PointG2.generator() * k
    return _PEDERSEN_H


def pedersen_commit(poly: Polynomial, blinding: Polynomial) -> PedersenCommitment:
    if poly.threshold != blinding.threshold:
        raise SharingError("秘密多项式与盲化多项式长度不一致")
    g, h = PointG2.generator(), pedersen_generator()
    return PedersenCommitment(tuple(
        g * a + h * b for a, b in zip(poly.coefficients, blinding.coefficients)
    ))


def pedersen_verify(share: Share, blind_share: Share, com: PedersenCommitment) -> bool:
    if share.index != blind_share.index or share.index <= 0 or len(com) == 0:
        return False
    lhs = PointG2.generator() * share.value + pedersen_generator() * blind_share.value
    return lhs == com.evaluate(share.index)


def commitment_public_key(com: FeldmanCommitment) -> PointG2:
    """A_0 = secret·G"""
    return com.points[0]


def aggregate_commitments(commitments: Sequence[FeldmanCommitment]) -> FeldmanCommitment:
    """逐系数求和 C_k = Σ_j A_{j,k}（所有承诺长度必须一致）"""
    if not commitments:
        raise SharingError("没有可聚合的承诺")
    width = len(commitments[0])
    if any(len(c) != width for c in commitments):
        raise SharingError("承诺长度不一致")
    return FeldmanCommitment(tuple(
        sum_points((c.points[k] for c in commitments), PointG2.identity())
        for k in range(width)
    ))
