"""
门限 BLS：任意 t 个诚实分片恢复出可验证签名，t-1 个不行

BLS 签名唯一：同一 (PK, m) 只有 H(m)·sk 一个合法签名，因此每轮只做一次配对验证，
其余子集与它做点比较即可。
"""
import itertools
import random

import pytest

from src.dkg import DkgConfig, run_local_dkg
from src.group import PointG1, PointG2, random_scalar
from src.tbls import (
    Signature,
    SignatureShare,
    ThresholdError,
    keygen,
    recover,
    share_indices,
    sign,
    sign_share,
    verify,
    verify_share,
)

PARAMS = [(1, 1), (2, 3), (3, 5), (4, 7)]
MESSAGE = b"oracle result"


def _dkg(t, n, seed):
    config = DkgConfig(tuple(f"node{i}" for i in range(n)), t, session=1)
    key_shares, _ = run_local_dkg(config, random.Random(seed))
    return key_shares


def _check_threshold(t, n, seed):
    key_shares = _dkg(t, n, seed)
    pk = next(iter(key_shares.values())).public_key
    shares = [sign_share(ks, MESSAGE) for ks in key_shares.values()]

    reference = recover(shares[:t], t)
    assert verify(reference, MESSAGE, pk)

    for subset in itertools.combinations(shares, t):
        assert recover(list(subset), t) == reference

    if t > 1:
        for subset in itertools.combinations(shares, t - 1):
            assert recover(list(subset), t - 1) != reference
        assert not verify(recover(shares[:t - 1], t - 1), MESSAGE, pk)


@pytest.mark.parametrize("t,n", PARAMS)
@pytest.mark.parametrize("seed", [0, 1])
def test_threshold_signatures(t, n, seed):
    _check_threshold(t, n, seed)


@pytest.mark.slow
@pytest.mark.parametrize("t,n", PARAMS)
def test_threshold_signatures_sweep(t, n):
    for seed in range(50):
        _check_threshold(t, n, seed)


def test_single_signature(rng):
    kp = keygen(rng)
    sig = sign(kp.secret, MESSAGE)
    assert verify(sig, MESSAGE, kp.public)
    assert not verify(sig, b"other message", kp.public)
    assert Signature.from_bytes(sig.to_bytes()) == sig


def test_identity_signature_rejected(rng):
    kp = keygen(rng)
    assert not verify(Signature(PointG1.identity()), MESSAGE, kp.public)


def test_random_point_signature_rejected(rng):
    kp = keygen(rng)
    forged = Signature(PointG1.generator() * random_scalar(rng))
    assert not verify(forged, MESSAGE, kp.public)


def test_verify_share():
    key_shares = _dkg(2, 3, seed=5)
    ks = key_shares["node1"]
    share = sign_share(ks, MESSAGE)
    assert verify_share(share, MESSAGE, ks.verification_keys[ks.index])
    other = key_shares["node2"]
    assert not verify_share(share, MESSAGE, other.verification_keys[other.index])


def test_recover_requires_t_distinct_shares():
    p = PointG1.generator()
    with pytest.raises(ThresholdError):
        recover([SignatureShare(1, p), SignatureShare(1, p)], 2)
    with pytest.raises(ThresholdError):
        recover([SignatureShare(1, p)], 2)


def test_recover_uses_lowest_indices():
    key_shares = _dkg(2, 3, seed=3)
    shares = [sign_share(ks, MESSAGE) for ks in key_shares.values()]
    assert share_indices(shares) == (1, 2, 3)
    assert recover(list(reversed(shares)), 2) == recover(shares[:2], 2)


def test_keypair_public_matches_secret(rng):
    kp = keygen(rng)
    assert kp.public == PointG2.generator() * kp.secret


def test_stale_public_key_rejected_after_new_session():
    participants = tuple(f"node{i}" for i in range(5))
    old_shares, _ = run_local_dkg(DkgConfig(participants, 3, session=1), random.Random(11))
    new_shares, _ = run_local_dkg(DkgConfig(participants, 3, session=2), random.Random(12))
    old_pk = next(iter(old_shares.values())).public_key
    new_pk = next(iter(new_shares.values())).public_key
    assert old_pk != new_pk
    sig = recover([sign_share(ks, MESSAGE) for ks in new_shares.values()], 3)
    assert verify(sig, MESSAGE, new_pk)
    assert not verify(sig, MESSAGE, old_pk)


def _random_shares_rejected(count):
    key_shares = _dkg(2, 3, seed=9)
    ks = key_shares["node1"]
    vk = ks.verification_keys[ks.index]
    rng = random.Random(99)
    accepted = sum(
        verify_share(SignatureShare(ks.index, PointG1.generator() * random_scalar(rng)), MESSAGE, vk)
        for _ in range(count)
    )
    assert accepted == 0


def test_random_share_points_rejected():
    _random_shares_rejected(10)


@pytest.mark.slow
def test_random_share_points_rejected_sweep():
    _random_shares_rejected(1000)
