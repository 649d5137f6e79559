"""双线性群：哈希上曲线向量、编码、配对"""
import pytest

from src.group import (
    P,
    R,
    GroupError,
    HashToCurveError,
    InvalidPointError,
    PointG1,
    PointG2,
    Scalar,
    hash_to_g1,
    pairing_check,
    random_scalar,
    sum_points,
)

from .conftest import FIXTURES


def _vectors():
    rows = []
    for line in (FIXTURES / "hash_to_g1.txt").read_text().splitlines():
        if line.strip():
            msg, x, y = line.split()
            rows.append((bytes.fromhex(msg), int(x, 16), int(y, 16)))
    return rows


@pytest.mark.parametrize("message,x,y", _vectors())
def test_hash_to_g1_vectors(message, x, y):
    assert hash_to_g1(message).affine() == (x, y)


def test_hash_to_g1_picks_smaller_root():
    x, y = hash_to_g1(b"abc").affine()
    assert y <= P - y


def test_hash_to_g1_rejects_empty_message():
    with pytest.raises(GroupError):
        hash_to_g1(b"")


def test_scalar_arithmetic(rng):
    a = random_scalar(rng)
    assert a + (-a) == Scalar(0)
    assert a * a.inverse() == Scalar(1)
    assert Scalar.from_bytes(a.to_bytes()) == a
    with pytest.raises(GroupError):
        Scalar(R)
    with pytest.raises(GroupError):
        Scalar(0).inverse()


def test_scalar_is_immutable():
    s = Scalar(5)
    with pytest.raises(AttributeError):
        s.foo = 1


def test_point_encoding(rng):
    k = random_scalar(rng)
    g1 = PointG1.generator() * k
    g2 = PointG2.generator() * k
    assert len(g1.to_bytes()) == 64
    assert len(g2.to_bytes()) == 128
    assert PointG1.from_bytes(g1.to_bytes()) == g1
    assert PointG2.from_bytes(g2.to_bytes()) == g2


def test_identity_encoding():
    assert PointG1.identity().to_bytes() == b"\x00" * 64
    assert PointG1.from_bytes(b"\x00" * 64).is_identity()
    assert PointG2.from_bytes(b"\x00" * 128).is_identity()
    assert (PointG1.generator() * 0).is_identity()


def test_invalid_points_rejected():
    with pytest.raises(InvalidPointError):
        PointG1.from_affine(1, 1)
    with pytest.raises(InvalidPointError):
        PointG1.from_affine(P, 2)
    with pytest.raises(InvalidPointError):
        PointG1.from_bytes(b"\x01" * 63)
    with pytest.raises(InvalidPointError):
        PointG2.from_bytes(b"\x01" * 128)


def test_group_laws(rng):
    a, b = random_scalar(rng), random_scalar(rng)
    g = PointG1.generator()
    assert g * a + g * b == g * (a + b)
    assert g * a - g * a == PointG1.identity()
    assert sum_points([g, g, g], PointG1.identity()) == g * 3


def test_pairing_bilinearity(rng):
    a, b = random_scalar(rng), random_scalar(rng)
    g1, g2 = PointG1.generator(), PointG2.generator()
    # e(aP, bQ) · e(-abP, Q) == 1
    assert pairing_check([(g1 * a, g2 * b), (-(g1 * (a * b)), g2)])
    assert not pairing_check([(g1 * a, g2 * b), (-(g1 * a), g2)])


def test_pairing_check_requires_pairs():
    with pytest.raises(GroupError):
        pairing_check([])


def test_hash_to_curve_error_is_group_error():
    assert issubclass(HashToCurveError, GroupError)


def test_scalar_eq_and_hash_agree_with_int():
    assert Scalar(5) == 5
    assert hash(Scalar(5)) == hash(5)
    assert {Scalar(5): "x"}[5] == "x"
    assert Scalar(5) != 5 + R


def _round_trip(cls, rng, count):
    for _ in range(count):
        point = cls.generator() * random_scalar(rng)
        encoded = point.to_bytes()
        assert cls.from_bytes(encoded) == point
        assert cls.from_bytes(encoded).to_bytes() == encoded


def test_g1_encoding_round_trips(rng):
    _round_trip(PointG1, rng, 1000)


def test_g2_encoding_round_trips(rng):
    _round_trip(PointG2, rng, 20)


@pytest.mark.slow
def test_g2_encoding_round_trips_sweep(rng):
    _round_trip(PointG2, rng, 1000)


def _sigma_accepted(encoded, message, pk):
    try:
        sigma = PointG1.from_bytes(encoded)
    except InvalidPointError:
        return False
    return pairing_check([(sigma, -PointG2.generator()), (hash_to_g1(message), pk)])


def test_flipped_sigma_bit_fails_pairing(rng):
    sk = random_scalar(rng)
    pk = PointG2.generator() * sk
    message = b"oracle result"
    encoded = (hash_to_g1(message) * sk).to_bytes()
    assert _sigma_accepted(encoded, message, pk)
    for bit in (0, 1, 7, 200, 255, 256, 300, 511):
        mutated = bytearray(encoded)
        mutated[bit // 8] ^= 1 << (7 - bit % 8)
        assert not _sigma_accepted(bytes(mutated), message, pk)
