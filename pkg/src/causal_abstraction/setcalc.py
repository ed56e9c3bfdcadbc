"""Finite set calculus: atoms of a generated sigma-algebra and the
brute-force algebra enumeration used to cross-check them."""
from __future__ import annotations

from collections.abc import Iterable
from itertools import combinations

from .errors import RangeError, SizeError, UniverseMismatch
from .graph import Partition, VertexSet, vset

MAX_ATOMS = 20


def set_family(n: int, sets: Iterable[Iterable[int]]) -> list[VertexSet]:
    """Canonical, deduplicated family of subsets of 1..n (empty set allowed)."""
    fam = {vset(s) for s in sets}
    for s in fam:
        for v in s:
            if not 1 <= v <= n:
                raise RangeError(f"node {v} outside 1..{n}")
    return sorted(fam, key=lambda s: (len(s), s))


def sigma_atoms(n: int, family: Iterable[Iterable[int]]) -> Partition:
    """Atoms of the sigma-algebra on 1..n generated by ``family``.

    Two elements share an atom iff every generator contains both or neither,
    so grouping by membership signature yields the atoms in O(n * |family|).
    """
    if n < 1:
        raise RangeError("universe must be nonempty")
    fam = [frozenset(s) for s in set_family(n, family)]
    groups: dict[tuple[bool, ...], list[int]] = {}
    for v in range(1, n + 1):
        groups.setdefault(tuple(v in s for s in fam), []).append(v)
    return Partition(n, tuple(tuple(g) for g in groups.values()))


def generated_algebra(n: int, family: Iterable[Iterable[int]]) -> list[VertexSet]:
    """Every member of the generated (sigma-)algebra, by closure iteration.

    Deliberately independent of :func:`sigma_atoms`: starts from the
    generators plus the empty set and the universe and closes under
    complement and pairwise union until nothing new appears.
    """
    fam = set_family(n, family)
    # An algebra with k atoms has 2**k members; refuse before enumerating.
    n_atoms = len({tuple(v in s for s in fam) for v in range(1, n + 1)})
    if n_atoms > MAX_ATOMS:
        raise SizeError(f"{n_atoms} atoms exceeds the enumeration guard of {MAX_ATOMS}")
    universe = frozenset(range(1, n + 1))
    algebra = {frozenset(), universe}
    algebra.update(frozenset(s) for s in fam)
    while True:
        new = {universe - a for a in algebra}
        new.update(a | b for a, b in combinations(algebra, 2))
        new -= algebra
        if not new:
            break
        algebra |= new
    return sorted((vset(a) for a in algebra), key=lambda s: (len(s), s))


def minimal_sets(algebra: Iterable[VertexSet]) -> list[VertexSet]:
    """Inclusion-minimal nonempty members of a set system."""
    members = [frozenset(a) for a in algebra if a]
    return sorted(vset(a) for a in members if not any(b < a for b in members))


def is_refinement(fine: Partition, coarse: Partition) -> bool:
    """True iff every block of ``fine`` lies inside some block of ``coarse``."""
    if fine.n != coarse.n:
        raise UniverseMismatch(f"universes differ: {fine.n} vs {coarse.n}")
    where = coarse.block_of()
    return all(len({where[v] for v in b}) == 1 for b in fine.blocks)
