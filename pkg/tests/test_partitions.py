import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from compembed import partitions as parts


class TestEnumeration:
    def test_first_occurrence_order(self):
        e = parts.Enumeration.from_tokens(["dog", "cat", "mouse"])
        assert e.index_of("dog") == 0
        assert e.index_of("cat") == 1
        assert e.index_of("mouse") == 2
        assert e.size == 3

    def test_singleton(self):
        e = parts.Enumeration.from_tokens(["a"])
        assert e.index_of("a") == 0
        assert e.size == 1

    def test_duplicates_collapse(self):
        e = parts.Enumeration.from_tokens(["a", "b", "a", "c"])
        assert [e.index_of(t) for t in "abc"] == [0, 1, 2]
        assert e.size == 3

    def test_empty_stream_errors(self):
        with pytest.raises(parts.PartitionError, match="empty category set"):
            parts.Enumeration.from_tokens([])

    def test_round_trip(self):
        e = parts.Enumeration.from_tokens(["x", "y", "z"])
        for t in ["x", "y", "z"]:
            assert e.token_of(e.index_of(t)) == t

    def test_save_load_stable(self, tmp_path):
        e = parts.Enumeration.from_tokens(["dog", "cat", "mouse"])
        p = tmp_path / "vocab.tsv"
        e.save(p)
        e2 = parts.Enumeration.load(p)
        assert e2.tokens == e.tokens
        assert e2.index == e.index


class TestNaive:
    def test_singleton_classes(self):
        ps = parts.make_naive(5)
        assert ps.k == 1
        assert ps.sizes == (5,)
        assert [ps.class_index(1, i) for i in range(5)] == list(range(5))

    def test_domain_one(self):
        ps = parts.make_naive(1)
        assert ps.class_index(1, 0) == 0

    def test_identity_map(self):
        ps = parts.make_naive(3)
        np.testing.assert_array_equal(ps.class_indices(1, np.arange(3)), np.arange(3))

    def test_zero_domain_errors(self):
        with pytest.raises(parts.PartitionError):
            parts.make_naive(0)


class TestQuotientRemainder:
    def test_classes_s5_m3(self):
        ps = parts.make_quotient_remainder(5, 3)
        assert ps.sizes == (2, 3)  # ceil(5/3) quotient classes, 3 remainder classes
        quotient = [ps.class_index(1, i) for i in range(5)]
        remainder = [ps.class_index(2, i) for i in range(5)]
        assert quotient == [0, 0, 0, 1, 1]
        assert remainder == [0, 1, 2, 0, 1]

    def test_m_one_degenerates(self):
        ps = parts.make_quotient_remainder(6, 1)
        assert ps.sizes == (6, 1)
        assert [ps.class_index(1, i) for i in range(6)] == list(range(6))
        assert all(ps.class_index(2, i) == 0 for i in range(6))

    def test_large_sizes(self):
        ps = parts.make_quotient_remainder(10**6, 1000)
        assert ps.sizes == (1000, 1000)

    def test_zero_modulus(self):
        with pytest.raises(parts.PartitionError, match="zero modulus"):
            parts.make_quotient_remainder(5, 0)

    def test_oversized_modulus_warns(self):
        with pytest.warns(UserWarning):
            parts.make_quotient_remainder(5, 10)


class TestGeneralizedQR:
    def test_mixed_radix_digits(self):
        ps = parts.make_generalized_qr(12, (2, 3, 2))
        assert [ps.class_index(j, 7) for j in (1, 2, 3)] == [1, 0, 1]

    def test_k1_is_naive(self):
        ps = parts.make_generalized_qr(5, (5,))
        assert [ps.class_index(1, i) for i in range(5)] == list(range(5))

    def test_binary_digits(self):
        ps = parts.make_generalized_qr(8, (2, 2, 2))
        for x in range(8):
            bits = [(x >> b) & 1 for b in range(3)]
            assert [ps.class_index(j, x) for j in (1, 2, 3)] == bits

    def test_too_small_product(self):
        with pytest.raises(parts.PartitionError, match="factorization too small"):
            parts.make_generalized_qr(12, (2, 3))

    def test_overflow(self):
        with pytest.raises(parts.PartitionError, match="overflow"):
            parts.make_generalized_qr(10, (2**40, 2**40))


class TestCRT:
    def test_bijection_2_3(self):
        ps = parts.make_crt(6, (2, 3))
        pairs = {(ps.class_index(1, x), ps.class_index(2, x)) for x in range(6)}
        assert len(pairs) == 6

    def test_non_coprime_names_pair(self):
        with pytest.raises(parts.PartitionError, match="4 and 6"):
            parts.make_crt(24, (4, 6))

    def test_residues_5_7(self):
        ps = parts.make_crt(35, (5, 7))
        assert ps.class_index(1, 12) == 2
        assert ps.class_index(2, 12) == 5

    def test_product_too_small(self):
        with pytest.raises(parts.PartitionError, match="too small"):
            parts.make_crt(36, (5, 7))


class TestClassIndex:
    def test_qr_remainder(self):
        ps = parts.make_quotient_remainder(5, 3)
        assert ps.class_index(2, 4) == 1

    def test_generalized_third(self):
        ps = parts.make_generalized_qr(12, (2, 3, 2))
        assert ps.class_index(3, 11) == 1

    def test_out_of_range(self):
        ps = parts.make_naive(5)
        with pytest.raises(parts.PartitionError):
            ps.class_index(1, 5)
        with pytest.raises(parts.PartitionError):
            ps.class_index(2, 0)
        with pytest.raises(parts.PartitionError):
            ps.class_index(1, -1)


HAND_EXAMPLE = [
    [[0], [1, 3, 4], [2]],
    [[0, 1, 3], [2, 4]],
    [[0, 3], [1, 2, 4]],
]


class TestVerify:
    def test_hand_example_complementary(self):
        maps = [parts.classes_to_map(p, 5) for p in HAND_EXAMPLE]
        ps = parts.make_explicit(5, maps)
        result = parts.verify_complementary(ps)
        assert result.complementary
        assert result.mode == "exhaustive"

    def test_single_partition_fails_with_witness(self):
        maps = [parts.classes_to_map([[0, 1, 3], [2, 4]], 5)]
        ps = parts.make_explicit(5, maps)
        result = parts.verify_complementary(ps)
        assert not result.complementary
        a, b = result.witness
        assert a != b
        assert ps.class_index(1, a) == ps.class_index(1, b)

    def test_naive_always_complementary(self):
        assert parts.verify_complementary(parts.make_naive(100)).complementary

    def test_hash_below_domain_fails(self):
        ps = parts.make_hash(10, 4)
        result = parts.verify_complementary(ps)
        assert not result.complementary
        a, b = result.witness
        assert a % 4 == b % 4

    def test_sampled_mode_above_cap(self):
        ps = parts.make_quotient_remainder(50_000, 100)
        result = parts.verify_complementary(ps, cap=1000, sampled_pairs=10_000)
        assert result.complementary
        assert result.mode == "sampled"

    def test_sampled_mode_finds_hash_collision(self):
        ps = parts.make_hash(50_000, 7)
        result = parts.verify_complementary(ps, cap=1000, sampled_pairs=10_000)
        assert not result.complementary


@settings(max_examples=50, deadline=None)
@given(
    n=st.integers(1, 2000),
    data=st.data(),
)
def test_generalized_qr_always_complementary(n, data):
    k = data.draw(st.integers(1, 4))
    moduli = []
    remaining = n
    for _ in range(k - 1):
        m = data.draw(st.integers(1, max(2, int(remaining ** (1 / 2)) + 1)))
        moduli.append(m)
        remaining = math.ceil(remaining / m)
    moduli.append(remaining)
    ps = parts.make_generalized_qr(n, moduli)
    assert parts.verify_complementary(ps).complementary
    tuples = ps.class_tuples()
    assert np.unique(tuples, axis=0).shape[0] == n


@settings(max_examples=50, deadline=None)
@given(n=st.integers(1, 2000), m=st.integers(1, 200))
def test_qr_always_complementary(n, m):
    ps = parts.make_quotient_remainder(n, min(m, n))
    assert parts.verify_complementary(ps).complementary


def test_param_size_identities():
    ps = parts.make_generalized_qr(1000, (10, 10, 10))
    assert sum(ps.sizes) == sum(ps.moduli)
    ps = parts.make_quotient_remainder(1000, 30)
    assert sum(ps.sizes) == 30 + math.ceil(1000 / 30)


def test_config_round_trip():
    for ps in [
        parts.make_naive(7),
        parts.make_quotient_remainder(10, 3),
        parts.make_generalized_qr(12, (2, 3, 2)),
        parts.make_crt(35, (5, 7)),
        parts.make_hash(10, 4),
        parts.make_explicit(5, [parts.classes_to_map(p, 5) for p in HAND_EXAMPLE]),
    ]:
        ps2 = parts.PartitionSet.from_config(ps.to_config())
        np.testing.assert_array_equal(ps.class_tuples(), ps2.class_tuples())
