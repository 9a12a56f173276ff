import random

import pytest
from hypothesis import given, settings, strategies as st

from porkit.algebra import (DEFAULT_PRIME, PrimeField, TransparentPairing, hash_to_field,
                            keyed_hash)

F101 = PrimeField(101)
elems = st.integers(min_value=0, max_value=100)
nonzero = st.integers(min_value=1, max_value=100)


def test_inverse_known_value():
    # 7 * 29 = 203 = 2 * 101 + 1
    assert F101.inv(7) == 29
    assert F101.mul(7, 29) == 1


def test_inverse_of_zero_raises():
    with pytest.raises(ZeroDivisionError):
        F101.inv(0)


def test_composite_modulus_rejected():
    with pytest.raises(ValueError):
        PrimeField(91)


def test_default_prime_is_secp256k1():
    assert DEFAULT_PRIME == 2**256 - 2**32 - 977
    assert PrimeField().p == DEFAULT_PRIME


@given(elems, elems, elems)
def test_field_axioms(a, b, c):
    f = F101
    assert f.add(a, f.add(b, c)) == f.add(f.add(a, b), c)
    assert f.mul(a, f.add(b, c)) == f.add(f.mul(a, b), f.mul(a, c))
    assert f.add(a, f.neg(a)) == 0
    assert f.sub(a, b) == f.add(a, f.neg(b))


@given(nonzero)
def test_inverse_matches_fermat(a):
    assert F101.inv(a) == pow(a, 99, 101)


@given(st.integers(min_value=0, max_value=2**256))
def test_bytes_roundtrip(a):
    f = PrimeField()
    a %= f.p
    assert f.from_bytes(f.to_bytes(a)) == a


def test_from_bytes_rejects_out_of_range():
    with pytest.raises(ValueError):
        F101.from_bytes((101).to_bytes(1, "big"))


def test_field_element_operators():
    a, b = F101(5), F101(9)
    assert a + b == 14
    assert a - b == 97
    assert a * b == 45
    assert (a / b) * b == a
    assert -a == 96
    assert a ** 100 == 1


def test_keyed_hash_domain_separation():
    assert keyed_hash(b"x", tag=b"a") != keyed_hash(b"x", tag=b"b")
    assert keyed_hash(b"x", key=b"k1") != keyed_hash(b"x", key=b"k2")
    assert len(keyed_hash(b"x", size=16)) == 16


def test_hash_to_field_in_range():
    f = PrimeField(101)
    values = {hash_to_field(bytes([i]), b"t", f) for i in range(200)}
    assert all(0 <= v < 101 for v in values)
    assert len(values) > 50


@settings(max_examples=200)
@given(nonzero, nonzero, nonzero, nonzero)
def test_pairing_bilinear(a, b, u, v):
    group = TransparentPairing(F101)
    g = group.g
    left = group.pair(g ** (a * u), g ** (b * v))
    assert left == group.pair(g ** u, g ** v) ** (a * b)


def test_pairing_non_degenerate():
    group = TransparentPairing(F101)
    assert group.pair(group.g, group.g) != group.gt_identity


def test_group_elements_do_not_mix():
    g1 = TransparentPairing(PrimeField(101)).g
    g2 = TransparentPairing(PrimeField(103)).g
    with pytest.raises(ValueError):
        g1 * g2


def test_group_element_bytes_roundtrip():
    group = TransparentPairing(F101)
    x = group.random_element(random.Random(3))
    assert group.element_from_bytes(x.to_bytes()) == x
