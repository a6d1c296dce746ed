"""Set partition enumeration and the canonical strategy profile of a partition."""

from __future__ import annotations

from typing import Hashable, Iterator, Mapping, Sequence

Partition = tuple[frozenset, ...]


def set_partitions(items: Sequence[Hashable]) -> Iterator[Partition]:
    """Yield every set partition of ``items`` exactly once.

    Uses restricted growth strings, so blocks come out ordered by their
    smallest item position and no partition is produced twice.
    """
    items = list(items)
    n = len(items)
    if n == 0:
        yield ()
        return
    labels = [0] * n

    def emit():
        blocks: list[list] = []
        for item, lab in zip(items, labels):
            if lab == len(blocks):
                blocks.append([])
            blocks[lab].append(item)
        return tuple(frozenset(b) for b in blocks)

    def rec(i: int, top: int):
        if i == n:
            yield emit()
            return
        for lab in range(top + 2):
            labels[i] = lab
            yield from rec(i + 1, max(top, lab))

    labels[0] = 0
    yield from rec(1, 0)


def bell_number(n: int) -> int:
    row = [1]
    for _ in range(n):
        nxt = [row[-1]]
        for v in row:
            nxt.append(nxt[-1] + v)
        row = nxt
    return row[0]


def canonical_choices(partition: Sequence[frozenset]) -> dict:
    """Profile in which every agent chooses exactly its own block."""
    return {a: frozenset(block) for block in partition for a in block}


def blocks_from_choices(choice: Mapping[Hashable, frozenset], order: Sequence[Hashable]) -> Partition:
    """Group agents with identical choice sets, blocks ordered by first appearance in ``order``."""
    groups: dict[frozenset, list] = {}
    for a in order:
        groups.setdefault(frozenset(choice[a]), []).append(a)
    return tuple(frozenset(g) for g in groups.values())


def normalize(partition: Sequence[frozenset], order: Sequence[Hashable]) -> Partition:
    """Order blocks by the position of their earliest member in ``order``."""
    pos = {a: i for i, a in enumerate(order)}
    return tuple(sorted((frozenset(b) for b in partition), key=lambda b: min(pos[a] for a in b)))


def partition_key(partition: Sequence[frozenset], order: Sequence[Hashable]) -> tuple:
    """Hashable, label-free key: the restricted growth string over ``order``."""
    owner = {}
    for i, block in enumerate(normalize(partition, order)):
        for a in block:
            owner[a] = i
    return tuple(owner[a] for a in order)
