import random

import pytest
from hypothesis import given, settings, strategies as st

from porkit.algebra import PrimeField
from porkit.erasure import CodeParams
from porkit.por.container import decode_tagged_file, encode_stored_file, encode_tagged_file
from porkit.por.schemes import (BlockListProof, Challenge, Scheme, SwPrivateProof, SwPublicProof,
                                challenge_for, gen_challenge, keygen, por_prove, por_setup,
                                por_verify, public_keys)
from porkit.adversary import as_stored
from porkit.vectors import run_all, sw_private_example, sw_public_example

TAG_SCHEMES = [Scheme.JK_MAC, Scheme.JK_SIG, Scheme.SW_PRIVATE, Scheme.SW_PUBLIC]


def setup(scheme, size=2000, seed=0, code=None):
    rng = random.Random(seed)
    field = PrimeField()
    keys = keygen(scheme, field, rng)
    tf = por_setup(rng.randbytes(size), keys, code or CodeParams(16, 8, field))
    return keys, tf, rng


@pytest.mark.parametrize("scheme", TAG_SCHEMES)
def test_honest_audit_passes(scheme):
    keys, tf, rng = setup(scheme)
    for _ in range(20):
        ch = challenge_for(tf.meta, 10, rng)
        assert por_verify(keys, ch, por_prove(tf, ch))


@pytest.mark.parametrize("scheme", TAG_SCHEMES)
def test_modified_block_fails(scheme):
    keys, tf, rng = setup(scheme)
    ch = challenge_for(tf.meta, 10, rng)
    tf.blocks[ch.indices[0] - 1] ^= 1
    assert not por_verify(keys, ch, por_prove(tf, ch))


@pytest.mark.parametrize("scheme", [Scheme.JK_MAC, Scheme.JK_SIG])
def test_jk_tags_bound_to_index(scheme):
    keys, tf, _ = setup(scheme)
    ch = Challenge((1,))
    swapped = BlockListProof(((tf.blocks[1], tf.tags[1]),))
    assert not por_verify(keys, ch, swapped)


def test_public_verification_needs_no_secret():
    keys, tf, rng = setup(Scheme.SW_PUBLIC)
    public = public_keys(keys)
    assert not hasattr(public, "x")
    ch = challenge_for(tf.meta, 12, rng)
    assert por_verify(public, ch, por_prove(tf, ch))


def test_jk_sig_public_half_verifies():
    keys, tf, rng = setup(Scheme.JK_SIG)
    ch = challenge_for(tf.meta, 5, rng)
    assert por_verify(public_keys(keys), ch, por_prove(tf, ch))


def test_sw_private_wrong_mu_fails():
    keys, tf, rng = setup(Scheme.SW_PRIVATE)
    ch = challenge_for(tf.meta, 8, rng)
    proof = por_prove(tf, ch)
    assert not por_verify(keys, ch, SwPrivateProof(proof.sigma, (proof.mu + 1) % keys.field.p))


def test_sw_public_wrong_sigma_fails():
    keys, tf, rng = setup(Scheme.SW_PUBLIC)
    ch = challenge_for(tf.meta, 8, rng)
    proof = por_prove(tf, ch)
    assert not por_verify(keys, ch, SwPublicProof(proof.sigma * keys.group.g, proof.mu))


def test_proof_type_mismatch_fails():
    keys, tf, rng = setup(Scheme.SW_PRIVATE)
    ch = challenge_for(tf.meta, 4, rng)
    assert not por_verify(keys, ch, BlockListProof(()))


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 200), st.integers(1, 200), st.randoms(use_true_random=False))
def test_challenge_indices_distinct_in_range(n, l, rnd):
    if l > n:
        with pytest.raises(ValueError):
            gen_challenge(n, l, rnd)
        return
    ch = gen_challenge(n, l, rnd, PrimeField(101))
    assert len(set(ch.indices)) == l
    assert all(1 <= i <= n for i in ch.indices)
    assert all(0 <= c < 101 for c in ch.coefficients)


def test_duplicate_challenge_index_rejected():
    with pytest.raises(ValueError):
        Challenge((1, 1))


def test_worked_examples():
    keys, ch, tags, proof = sw_private_example()
    # tag_i = h(i) + alpha * m_i: 13 + 35 = 48, 21 + 63 = 84
    assert tags == {1: 48, 2: 84}
    # sigma = 2*48 + 3*84 = 348 = 45 mod 101, mu = 2*5 + 3*9 = 37
    assert proof == SwPrivateProof(45, 37)
    public, ch, tag, proof = sw_public_example()
    # exponent of tag: 3 * (2 + 5*4) = 66; sigma = tag^2 -> 132 = 31 mod 101; mu = 2*4 = 8
    assert tag.exponent == 66
    assert (proof.sigma.exponent, proof.mu) == (31, 8)


def test_selftest_vectors_all_pass():
    assert all(ok for _, ok, _ in run_all())


@pytest.mark.parametrize("scheme", TAG_SCHEMES)
def test_tagged_file_container_roundtrip(scheme):
    keys, tf, rng = setup(scheme, size=500)
    blob = encode_tagged_file(tf)
    sf = decode_tagged_file(blob)
    assert sf.blocks == tf.blocks and sf.tags == tf.tags
    assert encode_stored_file(sf) == blob
    ch = challenge_for(tf.meta, 6, rng)
    assert por_verify(keys, ch, sf.prove(ch))


def test_truncated_container_answers_with_zeros():
    keys, tf, rng = setup(Scheme.SW_PRIVATE, size=500)
    blob = encode_tagged_file(tf)
    with pytest.raises(ValueError):
        decode_tagged_file(blob[:-40])
    sf = decode_tagged_file(blob[:-40], allow_truncated=True)
    assert sf.tags[-1] is None
    assert sf.fetch(sf.n) == (tf.blocks[-1], 0)
    short = decode_tagged_file(blob[:100], allow_truncated=True, scheme_hint=Scheme.SW_PRIVATE)
    assert short.blocks[-1] is None


def test_file_id_changes_with_content():
    _, tf1, _ = setup(Scheme.JK_MAC, seed=1)
    _, tf2, _ = setup(Scheme.JK_MAC, seed=2)
    assert tf1.file_id != tf2.file_id
    assert len(tf1.file_id) == 16


def test_setup_rejects_empty_and_public_keys():
    keys, _, _ = setup(Scheme.SW_PUBLIC, size=10)
    with pytest.raises(ValueError):
        por_setup(b"", keys)
    with pytest.raises(ValueError):
        por_setup(b"x", public_keys(keys))


def test_stored_copy_is_independent():
    _, tf, _ = setup(Scheme.JK_MAC, size=300)
    sf = as_stored(tf)
    sf.blocks[0] = None
    assert tf.blocks[0] is not None
