from hypothesis import given, strategies as st

from oracles import partitions_oracle
from stackmarket.partitions import (
    bell_number, blocks_from_choices, canonical_choices, normalize, partition_key, set_partitions,
)


def test_bell_numbers():
    assert [bell_number(n) for n in range(9)] == [1, 1, 2, 5, 15, 52, 203, 877, 4140]


def test_enumeration_matches_sympy():
    for n in range(1, 7):
        items = [f"a{i}" for i in range(n)]
        ours = [frozenset(p) for p in set_partitions(items)]
        assert len(ours) == len(set(ours)) == bell_number(n)
        assert set(ours) == partitions_oracle(items)


@given(st.integers(1, 6), st.randoms(use_true_random=False))
def test_canonical_round_trip(n, rnd):
    items = list(range(n))
    parts = list(set_partitions(items))
    part = parts[rnd.randrange(len(parts))]
    back = blocks_from_choices(canonical_choices(part), items)
    assert normalize(back, items) == normalize(part, items)
    assert partition_key(back, items) == partition_key(part, items)
