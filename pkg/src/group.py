"""
双线性群抽象模块
基于 py_ecc 的 alt_bn128 (BN254) 实现标量/点运算、try-and-increment 哈希上曲线以及配对校验
"""
from __future__ import annotations

import hashlib
import logging
import random
from typing import Iterable, Sequence, Tuple, Union

from py_ecc import optimized_bn128 as bn

logger = logging.getLogger("vote-oracle.group")

# alt_bn128 曲线参数（与以太坊预编译合约一致，属于常量而非配置）
P = bn.field_modulus
R = bn.curve_order
B = 3

# try-and-increment 最大递增次数，超过即视为哈希输入异常
MAX_INCREMENTS = 1 << 16

G1_ENCODED_SIZE = 64
G2_ENCODED_SIZE = 128


class GroupError(ValueError):
    """群运算参数错误"""


class InvalidPointError(GroupError):
    """点编码非法（不在曲线上 / 不在 r 阶子群 / 坐标越界）"""


class HashToCurveError(GroupError):
    """try-and-increment 超出递增上限（内部故障）"""


# ═══════════════════════════════════════════════════════
# 标量
# ═══════════════════════════════════════════════════════


class Scalar:
    """模 r 的整数，不可变"""

    __slots__ = ("_value",)

    def __init__(self, value: int):
        if not 0 <= value < R:
            raise GroupError(f"标量越界: {value}")
        object.__setattr__(self, "_value", value)

    def __setattr__(self, name, value):
        raise AttributeError("Scalar 是不可变对象")

    def __reduce__(self):
        return (Scalar, (self._value,))

    @classmethod
    def from_int(cls, value: int) -> "Scalar":
        """任意整数取模后构造"""
        return cls(value % R)

    @classmethod
    def from_bytes(cls, data: bytes) -> "Scalar":
        if len(data) != 32:
            raise GroupError(f"标量编码长度应为 32 字节，实际 {len(data)}")
        return cls(int.from_bytes(data, "big"))

    @property
    def value(self) -> int:
        return self._value

    def to_bytes(self) -> bytes:
        return self._value.to_bytes(32, "big")

    def is_zero(self) -> bool:
        return self._value == 0

    def inverse(self) -> "Scalar":
        if self._value == 0:
            raise GroupError("零元没有逆元")
        return Scalar(pow(self._value, R - 2, R))

    @staticmethod
    def _coerce(other) -> int:
        if isinstance(other, Scalar):
            return other._value
        if isinstance(other, int):
            return other % R
        raise TypeError(f"无法与 Scalar 运算: {type(other).__name__}")

    def __add__(self, other) -> "Scalar":
        return Scalar((self._value + self._coerce(other)) % R)

    __radd__ = __add__

    def __sub__(self, other) -> "Scalar":
        return Scalar((self._value - self._coerce(other)) % R)

    def __rsub__(self, other) -> "Scalar":
        return Scalar((self._coerce(other) - self._value) % R)

    def __mul__(self, other):
        if isinstance(other, (PointG1, PointG2)):
            return NotImplemented
        return Scalar((self._value * self._coerce(other)) % R)

    __rmul__ = __mul__

    def __neg__(self) -> "Scalar":
        return Scalar((-self._value) % R)

    def __pow__(self, exponent: int) -> "Scalar":
        return Scalar(pow(self._value, exponent, R))

    def __int__(self) -> int:
        return self._value

    def __eq__(self, other) -> bool:
        if isinstance(other, Scalar):
            return self._value == other._value
        if isinstance(other, int):
            return self._value == other
        return NotImplemented

    def __hash__(self) -> int:
        return hash(self._value)

    def __repr__(self) -> str:
        return f"Scalar(0x{self._value:064x})"


def random_scalar(rng: random.Random) -> Scalar:
    """从带种子的随机源抽取非零标量（种子相同则序列相同）"""
    return Scalar(rng.randrange(1, R))


ScalarLike = Union[Scalar, int]


def _scalar_int(k: ScalarLike) -> int:
    if isinstance(k, Scalar):
        return k.value
    if isinstance(k, int):
        return k % R
    raise TypeError(f"标量类型错误: {type(k).__name__}")


# ═══════════════════════════════════════════════════════
# 群元素
# ═══════════════════════════════════════════════════════


class _Point:
    """py_ecc 射影坐标点的不可变包装"""

    __slots__ = ("_pt", "_encoded")

    _ZERO = None
    _GEN = None
    _SIZE = 0

    def __init__(self, pt):
        object.__setattr__(self, "_pt", pt)
        object.__setattr__(self, "_encoded", None)

    def __setattr__(self, name, value):
        raise AttributeError(f"{type(self).__name__} 是不可变对象")

    def __reduce__(self):
        return (type(self), (self._pt,))

    @classmethod
    def identity(cls):
        return cls(cls._ZERO)

    @classmethod
    def generator(cls):
        return cls(cls._GEN)

    @property
    def raw(self):
        """底层 py_ecc 点（仅供本模块与配对使用）"""
        return self._pt

    def is_identity(self) -> bool:
        return bn.is_inf(self._pt)

    def __add__(self, other):
        if type(other) is not type(self):
            return NotImplemented
        return type(self)(bn.add(self._pt, other._pt))

    def __sub__(self, other):
        if type(other) is not type(self):
            return NotImplemented
        return type(self)(bn.add(self._pt, bn.neg(other._pt)))

    def __neg__(self):
        return type(self)(bn.neg(self._pt))

    def __mul__(self, k: ScalarLike):
        n = _scalar_int(k)
        if n == 0:
            return type(self).identity()
        return type(self)(bn.multiply(self._pt, n))

    __rmul__ = __mul__

    def __eq__(self, other) -> bool:
        if type(other) is not type(self):
            return NotImplemented
        return bn.eq(self._pt, other._pt)

    def __hash__(self) -> int:
        return hash((type(self).__name__, self.to_bytes()))

    def to_bytes(self) -> bytes:
        if self._encoded is None:
            object.__setattr__(self, "_encoded", self._encode())
        return self._encoded

    def hex(self) -> str:
        return self.to_bytes().hex()

    def _encode(self) -> bytes:
        raise NotImplementedError

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.hex()[:16]}…)"


class PointG1(_Point):
    """G1 元素：H(m) 与签名 σ 所在的群（余因子为 1）"""

    __slots__ = ()
    _ZERO = bn.Z1
    _GEN = bn.G1
    _SIZE = G1_ENCODED_SIZE

    def affine(self) -> Tuple[int, int]:
        if self.is_identity():
            return 0, 0
        x, y = bn.normalize(self._pt)
        return int(x), int(y)

    def _encode(self) -> bytes:
        # 32 字节大端 x ‖ 32 字节大端 y；单位元编码为 64 个零字节
        x, y = self.affine()
        return x.to_bytes(32, "big") + y.to_bytes(32, "big")

    @classmethod
    def from_affine(cls, x: int, y: int) -> "PointG1":
        if x == 0 and y == 0:
            return cls.identity()
        if not (0 <= x < P and 0 <= y < P):
            raise InvalidPointError("G1 坐标超出基域")
        pt = (bn.FQ(x), bn.FQ(y), bn.FQ.one())
        if not bn.is_on_curve(pt, bn.b):
            raise InvalidPointError("G1 点不在曲线 y² = x³ + 3 上")
        return cls(pt)

    @classmethod
    def from_bytes(cls, data: bytes) -> "PointG1":
        if len(data) != G1_ENCODED_SIZE:
            raise InvalidPointError(f"G1 编码长度应为 64 字节，实际 {len(data)}")
        return cls.from_affine(
            int.from_bytes(data[:32], "big"), int.from_bytes(data[32:], "big")
        )


class PointG2(_Point):
    """G2 元素：生成元 G 与公钥 PK 所在的扭曲线群"""

    __slots__ = ()
    _ZERO = bn.Z2
    _GEN = bn.G2
    _SIZE = G2_ENCODED_SIZE

    def affine(self) -> Tuple[Tuple[int, int], Tuple[int, int]]:
        if self.is_identity():
            return (0, 0), (0, 0)
        x, y = bn.normalize(self._pt)
        return (
            (int(x.coeffs[0]), int(x.coeffs[1])),
            (int(y.coeffs[0]), int(y.coeffs[1])),
        )

    def _encode(self) -> bytes:
        # EIP-197 顺序：x_im ‖ x_re ‖ y_im ‖ y_re，各 32 字节大端
        (x_re, x_im), (y_re, y_im) = self.affine()
        return b"".join(v.to_bytes(32, "big") for v in (x_im, x_re, y_im, y_re))

    @classmethod
    def from_bytes(cls, data: bytes) -> "PointG2":
        if len(data) != G2_ENCODED_SIZE:
            raise InvalidPointError(f"G2 编码长度应为 128 字节，实际 {len(data)}")
        x_im, x_re, y_im, y_re = (
            int.from_bytes(data[i:i + 32], "big") for i in range(0, 128, 32)
        )
        if not any((x_im, x_re, y_im, y_re)):
            return cls.identity()
        if not all(0 <= v < P for v in (x_im, x_re, y_im, y_re)):
            raise InvalidPointError("G2 坐标超出基域")
        pt = (bn.FQ2([x_re, x_im]), bn.FQ2([y_re, y_im]), bn.FQ2.one())
        if not bn.is_on_curve(pt, bn.b2):
            raise InvalidPointError("G2 点不在扭曲线上")
        # 子群检查：(r-1)·P + P 必须为无穷远点（直接乘 r 会被库内取模短路）
        if not bn.is_inf(bn.add(bn.multiply(pt, R - 1), pt)):
            raise InvalidPointError("G2 点不在 r 阶子群中")
        return cls(pt)


Point = Union[PointG1, PointG2]


# ═══════════════════════════════════════════════════════
# 哈希上曲线 & 配对
# ═══════════════════════════════════════════════════════


def hash_to_g1(message: bytes) -> PointG1:
    """
    try-and-increment 哈希上曲线。

    x ← SHA-256(message) mod p；若 x³+3 不是二次剩余则 x ← x+1；
    y 取两个平方根中整数值较小的那个。
    """
    if not message:
        raise GroupError("待哈希的消息不能为空")

    x = int.from_bytes(hashlib.sha256(message).digest(), "big") % P
    for _ in range(MAX_INCREMENTS):
        rhs = (pow(x, 3, P) + B) % P
        # p ≡ 3 (mod 4)，平方根可直接幂运算求得
        y = pow(rhs, (P + 1) // 4, P)
        if y * y % P == rhs:
            return PointG1.from_affine(x, min(y, P - y))
        x = (x + 1) % P

    logger.error(f"❌ try-and-increment 超过 {MAX_INCREMENTS} 次递增")
    raise HashToCurveError("哈希上曲线失败，输入异常")


def pairing_check(pairs: Sequence[Tuple[PointG1, PointG2]]) -> bool:
    """
    判断 ∏ e(aᵢ, bᵢ) 是否等于目标群单位元。

    先逐对做 Miller loop，最后只做一次最终幂运算。
    """
    if not pairs:
        raise GroupError("配对列表不能为空")

    acc = bn.FQ12.one()
    for a, b in pairs:
        if not isinstance(a, PointG1) or not isinstance(b, PointG2):
            raise InvalidPointError("配对输入必须是 (PointG1, PointG2)")
        if a.is_identity() or b.is_identity():
            continue
        acc = acc * bn.pairing(b.raw, a.raw, final_exponentiate=False)
    return bn.final_exponentiate(acc) == bn.FQ12.one()


def sum_points(points: Iterable[Point], identity: Point) -> Point:
    """群元素求和（空序列返回单位元）"""
    total = identity
    for pt in points:
        total = total + pt
    return total
