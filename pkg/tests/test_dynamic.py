import math
import random

import pytest
from hypothesis import given, settings, strategies as st

from porkit.adversary import EraseFraction, apply_dynamic_behavior
from porkit.algebra import PrimeField
from porkit.dynamic import (DynClient, DynServer, IntegrityError, container_symbols, dyn_init, dyn_setup,
                            level_count, symbols_container)

SMALL = PrimeField(2**31 - 1)


def bits(w, levels):
    return [bool(w >> l & 1) for l in range(levels)]


def test_level_count():
    assert level_count(1) == 2
    assert level_count(256) == 10
    assert level_count(257) == 11


def test_occupancy_exhaustive_to_4096():
    n = 4097
    client, server = dyn_setup([(i,) for i in range(n)], SMALL)
    rng = random.Random(0)
    for w in range(1, 4097):
        client.write(server, rng.randrange(1, n + 1), rng.randrange(SMALL.p))
        assert client.w == w
        assert client.occupancy() == bits(w, client.levels)
        assert server.occupancy() == client.occupancy()


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 40), st.lists(st.tuples(st.integers(0, 10**6), st.integers(0, 10**6)), max_size=90))
def test_read_after_write_model(n, ops):
    client, server = dyn_setup([(i,) for i in range(n)], SMALL)
    ref = {i + 1: i for i in range(n)}
    for a, b in ops:
        i = a % n + 1
        client.write(server, i, b)
        ref[i] = b
        assert client.read(server, i) == b
        assert client.occupancy() == bits(client.w, client.levels)
    assert [client.read(server, i) for i in range(1, n + 1)] == [ref[i] for i in range(1, n + 1)]
    assert client.extract(server) == [ref[i] for i in range(1, n + 1)]
    assert client.audit(server, 5, random.Random(1))


def test_c_rebuilt_every_n_writes():
    n = 16
    client, server = dyn_setup([(0,)] * n, SMALL)
    for k in range(1, 5 * n + 1):
        client.write(server, k % n + 1, k)
        assert client.c_rebuilds == k // n
        if k % n == 0:
            assert not any(client.occupancy())
            assert not any(server.occupancy())


def test_rebuild_cost_bound():
    n = 64
    client, server = dyn_setup([(0,)] * n, SMALL)
    rng = random.Random(2)
    for w in range(1, 1001):
        client.write(server, rng.randrange(1, n + 1), w)
        assert client.rebuild_symbols <= 4 * w * (math.log2(n) + 2)


def test_extract_survives_level_and_c_erasures():
    n = 32
    client, server = dyn_setup([(i, i + 1) for i in range(n)], SMALL)
    rng = random.Random(3)
    live = {i + 1: (i, i + 1) for i in range(n)}
    for _ in range(27):
        i = rng.randrange(1, n + 1)
        live[i] = (rng.randrange(SMALL.p), rng.randrange(SMALL.p))
        client.write(server, i, live[i])
    for level, full in enumerate(server.occupancy()):
        if full:
            server.erase_level(level, rng.sample(range(2 << level), 1 << level))
    server.erase_c(rng.sample(range(2 * n), n))
    assert client.extract(server) == [live[i] for i in range(1, n + 1)]
    assert not client.audit(server, 30, rng)


def test_extract_fails_past_threshold():
    client, server = dyn_setup([(i,) for i in range(8)], SMALL)
    server.erase_c(range(9))
    with pytest.raises(IntegrityError):
        client.extract(server)


@pytest.mark.parametrize("position", range(64))
def test_tampered_u_symbol_rejected(position):
    client, server = dyn_setup([(i,) for i in range(64)], SMALL)
    server.u[position] = (server.u[position][0] + 1,)
    with pytest.raises(IntegrityError):
        client.read(server, position + 1)
    with pytest.raises(IntegrityError):
        client.write(server, position + 1, 5)


def test_swapped_u_symbols_rejected():
    client, server = dyn_setup([(i,) for i in range(8)], SMALL)
    server.u[0], server.u[1] = server.u[1], server.u[0]
    with pytest.raises(IntegrityError):
        client.read(server, 1)


def test_tampered_level_blocks_merge():
    client, server = dyn_setup([(i,) for i in range(16)], SMALL)
    client.write(server, 1, 100)
    server.h[0][0] = (1, 1, 999)
    with pytest.raises(IntegrityError):
        client.write(server, 2, 200)


def test_audit_honest_and_damaged():
    data = random.Random(4).randbytes(250 * 31)
    client, server = dyn_init(data, 250)
    rng = random.Random(5)
    assert all(client.audit(server, 20, rng) for _ in range(20))
    damaged = apply_dynamic_behavior(server, EraseFraction(0.5), rng)
    assert sum(not client.audit(damaged, 20, rng) for _ in range(20)) == 20


def test_value_validation():
    client, server = dyn_setup([(0, 0)] * 4, SMALL)
    with pytest.raises(ValueError):
        client.write(server, 1, 5)
    with pytest.raises(ValueError):
        client.write(server, 1, (0, SMALL.p))
    with pytest.raises(IndexError):
        client.write(server, 5, (1, 2))
    with pytest.raises(IndexError):
        client.read(server, 0)


def test_persistence_roundtrip(tmp_path):
    client, server = dyn_setup([(i,) for i in range(16)], SMALL)
    for k in range(7):
        client.write(server, k + 1, 1000 + k)
    server.save(tmp_path / "s")
    loaded = DynServer.load(tmp_path / "s")
    restored = DynClient.from_dict(client.to_dict())
    assert restored.to_dict() == client.to_dict()
    assert restored.level_rebuilds == client.level_rebuilds
    assert restored.read(loaded, 3) == 1002
    assert restored.extract(loaded) == client.extract(server)
    restored.write(loaded, 9, 7)
    assert restored.read(loaded, 9) == 7


def test_symbols_container_roundtrip():
    symbols = [(1, 2), (3, 4), (5, 6)]
    blob = symbols_container(SMALL, 3, 3, symbols, 2)
    out, field, f = container_symbols(blob)
    assert (out, field, f) == (symbols, SMALL, 3)


def test_init_rejects_oversized_file():
    with pytest.raises(ValueError):
        dyn_init(b"x" * 100, 2)
    with pytest.raises(ValueError):
        dyn_init(b"", 2)
