import random

import pytest

from porkit.adversary import CorruptFraction, EraseFraction, apply_behavior, as_stored, erase_positions
from porkit.algebra import PrimeField
from porkit.erasure import CodeParams
from porkit.por.extract import ExtractionError, ExtractionPolicy, extract, extract_sentinel
from porkit.por.schemes import Scheme, keygen, por_setup
from porkit.por.sentinel import (BudgetExhausted, sentinel_audit, sentinel_challenge, sentinel_check,
                                 sentinel_meta, sentinel_setup)

FIELD = PrimeField()
CODE = CodeParams(16, 8, FIELD)


def sentinel_store(s=30, size=3000, seed=0):
    rng = random.Random(seed)
    keys = keygen(Scheme.SENTINEL, FIELD, rng)
    data = rng.randbytes(size)
    tf, ledger = sentinel_setup(data, keys, s, CODE)
    return data, tf, ledger, rng


def test_sentinels_hidden_among_blocks():
    _, tf, ledger, _ = sentinel_store()
    positions = ledger.positions()
    assert len(set(positions)) == ledger.sentinels
    assert set(positions).isdisjoint(ledger.data_positions())
    assert sorted(positions + ledger.data_positions()) == list(range(1, ledger.total + 1))
    # Encrypted data and sentinel values are all full-range field elements.
    assert max(tf.blocks) > 2**250


def test_sentinel_budget_counts_down():
    _, tf, ledger, rng = sentinel_store(s=30)
    for _ in range(3):
        assert sentinel_audit(ledger, 10, tf, rng)
    assert ledger.remaining == 0
    with pytest.raises(BudgetExhausted):
        sentinel_challenge(ledger, 10, rng)


def test_sentinel_detects_erasure_of_sentinel():
    _, tf, ledger, rng = sentinel_store()
    ch, chosen = sentinel_challenge(ledger, 5, rng)
    store = as_stored(tf)
    erase_positions(store, [ch.indices[0] - 1])
    assert not sentinel_check(ledger, chosen, store.prove(ch))
    assert set(chosen) <= ledger.spent


def test_sentinel_extract_roundtrip():
    data, tf, ledger, rng = sentinel_store()
    meta = sentinel_meta(tf, ledger)
    damaged = apply_behavior(tf, EraseFraction(0.3), rng)
    assert extract_sentinel(damaged, ledger, meta) == data


def test_sentinel_capacity_checked():
    keys = keygen(Scheme.SENTINEL, FIELD, random.Random(0))
    with pytest.raises(ValueError):
        sentinel_setup(b"x" * 10, keys, 0, CODE)
    with pytest.raises(ValueError):
        sentinel_setup(b"x" * 10, keys, 2**32, CODE)


@pytest.mark.parametrize("scheme", [Scheme.JK_MAC, Scheme.JK_SIG, Scheme.SW_PRIVATE, Scheme.SW_PUBLIC])
def test_extract_ignores_corrupt_blocks(scheme):
    rng = random.Random(3)
    keys = keygen(scheme, FIELD, rng)
    data = rng.randbytes(4000)
    tf = por_setup(data, keys, CODE)
    damaged = apply_behavior(tf, CorruptFraction(0.2), rng)
    assert extract(damaged, keys, tf.meta, ExtractionPolicy(batch_size=32), rng) == data


def test_extract_names_deficient_stripe():
    rng = random.Random(4)
    keys = keygen(Scheme.SW_PRIVATE, FIELD, rng)
    data = rng.randbytes(4000)
    tf = por_setup(data, keys, CODE)
    store = as_stored(tf)
    erase_positions(store, range(2 * 16, 2 * 16 + 9))
    with pytest.raises(ExtractionError) as info:
        extract(store, keys, tf.meta, rng=rng)
    assert [s for s, _, _ in info.value.report.deficient] == [2]
    assert "stripe 2: 7 valid symbols, 8 needed" in str(info.value)


def test_extract_rho_threshold():
    rng = random.Random(5)
    keys = keygen(Scheme.JK_MAC, FIELD, rng)
    data = rng.randbytes(1000)
    tf = por_setup(data, keys, CODE)
    store = as_stored(tf)
    erase_positions(store, range(4))
    assert extract(store, keys, tf.meta, ExtractionPolicy(rho=0.75), rng) == data
    with pytest.raises(ExtractionError):
        extract(store, keys, tf.meta, ExtractionPolicy(rho=0.8), rng)
    with pytest.raises(ValueError):
        extract(store, keys, tf.meta, ExtractionPolicy(rho=0.4), rng)


def test_extract_parallel_workers():
    rng = random.Random(6)
    keys = keygen(Scheme.SW_PUBLIC, FIELD, rng)
    data = rng.randbytes(3000)
    tf = por_setup(data, keys, CODE)
    damaged = apply_behavior(tf, EraseFraction(0.25), rng)
    assert extract(damaged, keys, tf.meta, ExtractionPolicy(batch_size=16, workers=4), rng) == data
