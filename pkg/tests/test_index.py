import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dcwh.codec import CodeSet, pack, pack_rows, unpack_rows
from dcwh.errors import DimensionError, DuplicateIdError
from dcwh.index import build_index, hamming
from oracles import brute_force_topk, naive_hamming


def random_codes(rng, n, bits):
    return rng.choice([-1, 1], size=(n, bits))


def test_empty_index():
    index = build_index(CodeSet(np.zeros((0, 4), np.uint8), 32), [])
    assert len(index) == 0
    assert index.query_topk(pack(np.ones(32, int)), 5) == []


def test_duplicate_id_named():
    codes = pack_rows(np.ones((3, 8), int))
    with pytest.raises(DuplicateIdError, match="4"):
        build_index(codes, [4, 1, 4])


def test_mixed_lengths_rejected():
    with pytest.raises(DimensionError):
        build_index([pack(np.ones(8, int)), pack(np.ones(9, int))], [0, 1])


def test_dump_round_trip():
    rng = np.random.default_rng(0)
    m = random_codes(rng, 30, 48)
    ids = rng.permutation(1000)[:30]
    codes, got_ids = build_index(pack_rows(m), ids).dump()
    order = np.argsort(ids)
    np.testing.assert_array_equal(got_ids, ids[order])
    np.testing.assert_array_equal(unpack_rows(codes), m[order])


def test_stride_is_word_count():
    assert build_index(pack_rows(np.ones((2, 65), int)), [0, 1]).stride == 2


def test_hamming_basics():
    a = pack(np.random.default_rng(1).choice([-1, 1], size=48))
    assert hamming(a, a) == 0
    comp = pack(-np.asarray(np.unpackbits(a.data, count=48, bitorder="little"), int) * 2 + 1)
    assert hamming(a, comp) == 48
    with pytest.raises(DimensionError):
        hamming(a, pack(np.ones(32, int)))


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**31), bits=st.sampled_from([1, 12, 32, 63, 64, 100]))
def test_metric_axioms(seed, bits):
    m = random_codes(np.random.default_rng(seed), 3, bits)
    a, b, c = (pack(v) for v in m)
    assert hamming(a, a) == 0
    assert hamming(a, b) == hamming(b, a) == naive_hamming(m[0], m[1])
    assert hamming(a, c) <= hamming(a, b) + hamming(b, c)


def test_query_exact_match_first():
    rng = np.random.default_rng(2)
    m = random_codes(rng, 50, 32)
    index = build_index(pack_rows(m), np.arange(50) + 10)
    top = index.query_topk(pack(m[17]), 3)
    assert top[0] == (27, 0)


def test_k_larger_than_database_gives_full_ranking():
    rng = np.random.default_rng(3)
    index = build_index(pack_rows(random_codes(rng, 20, 16)), np.arange(20))
    top = index.query_topk(pack(random_codes(rng, 1, 16)[0]), 50)
    assert sorted(i for i, _ in top) == list(range(20))
    d = [dist for _, dist in top]
    assert d == sorted(d)


def test_matches_brute_force_with_ties():
    rng = np.random.default_rng(4)
    m = random_codes(rng, 200, 32)
    ids = rng.permutation(10_000)[:200]
    index = build_index(pack_rows(m), ids)
    for _ in range(20):
        q = random_codes(rng, 1, 32)[0]
        assert index.query_topk(pack(q), 25) == brute_force_topk(m, ids, q, 25)


def test_small_alphabet_forces_ties():
    rng = np.random.default_rng(5)
    m = random_codes(rng, 100, 3)  # only 8 distinct codes
    ids = rng.permutation(100)
    index = build_index(pack_rows(m), ids)
    for k in (1, 7, 40, 100):
        q = random_codes(rng, 1, 3)[0]
        assert index.query_topk(pack(q), k) == brute_force_topk(m, ids, q, k)


def test_insertion_order_does_not_matter():
    rng = np.random.default_rng(6)
    m, ids = random_codes(rng, 80, 12), np.arange(80)
    perm = rng.permutation(80)
    a = build_index(pack_rows(m), ids)
    b = build_index(pack_rows(m[perm]), ids[perm])
    q = pack(random_codes(rng, 1, 12)[0])
    assert a.query_topk(q, 30) == b.query_topk(q, 30)


def test_distance_matrix_matches_per_query():
    rng = np.random.default_rng(7)
    index = build_index(pack_rows(random_codes(rng, 40, 70)), np.arange(40))
    qs = pack_rows(random_codes(rng, 5, 70))
    mat = index.distance_matrix(qs)
    for i, q in enumerate(qs):
        np.testing.assert_array_equal(mat[i], index.distances(q))


def test_query_validation():
    index = build_index(pack_rows(np.ones((2, 8), int)), [0, 1])
    with pytest.raises(DimensionError):
        index.query_topk(pack(np.ones(9, int)), 1)
    with pytest.raises(ValueError):
        index.query_topk(pack(np.ones(8, int)), 0)
