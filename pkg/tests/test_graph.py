import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from causal_abstraction.errors import CycleError, DuplicateEdge, EmptyTarget, PartitionMismatch, RangeError
from causal_abstraction.graph import (
    Digraph,
    Partition,
    descendants,
    is_acyclic,
    nd_family,
    non_descendants,
    quotient_graph,
    scc_condensation,
    strongly_connected_components,
    to_dot,
    validate_dag,
)

from conftest import dags, dags_with_targets


class TestValidateDag:
    def test_chain_order(self):
        assert validate_dag(3, [(1, 2), (2, 3)]).order == (1, 2, 3)

    def test_two_cycle(self):
        with pytest.raises(CycleError):
            validate_dag(2, [(1, 2), (2, 1)])

    def test_reference_graph(self, ref_dag):
        assert ref_dag.n == 5
        pos = {v: i for i, v in enumerate(ref_dag.order)}
        assert all(pos[u] < pos[v] for u, v in ref_dag.edges)

    def test_self_loop(self):
        with pytest.raises(CycleError):
            validate_dag(2, [(1, 1)])

    def test_range(self):
        with pytest.raises(RangeError):
            validate_dag(2, [(1, 3)])

    def test_duplicate(self):
        with pytest.raises(DuplicateEdge):
            validate_dag(2, [(1, 2), (1, 2)])

    def test_errors_are_value_errors(self):
        with pytest.raises(ValueError):
            validate_dag(2, [(2, 1), (1, 2)])


class TestReachability:
    def test_descendants_chain(self, chain3):
        assert descendants(chain3, 1) == (1, 2, 3)

    def test_descendants_reference(self, ref_dag):
        assert descendants(ref_dag, 3) == (3, 4, 5)
        assert descendants(ref_dag, 4) == (4,)

    def test_descendants_range(self, chain3):
        with pytest.raises(RangeError):
            descendants(chain3, 4)

    def test_non_descendants(self, chain3, ref_dag):
        assert non_descendants(chain3, [2]) == (1,)
        assert non_descendants(ref_dag, [3]) == (1, 2)
        assert non_descendants(ref_dag, [4, 5]) == (1, 2, 3)

    def test_non_descendants_empty_target(self, chain3):
        with pytest.raises(EmptyTarget):
            non_descendants(chain3, [])

    def test_nd_family(self, ref_dag, chain3):
        assert nd_family(ref_dag, [[3], [3, 4], [4, 5]]) == [(1, 2), (1, 2, 3)]
        assert nd_family(chain3, [[1], [2], [3]]) == [(), (1,), (1, 2)]
        assert nd_family(ref_dag, [[1, 2, 3, 4, 5]]) == [()]


class TestQuotient:
    def test_singletons_identity(self, ref_dag):
        q = quotient_graph(ref_dag, Partition.singletons(5))
        assert q.edges == ref_dag.edges

    def test_reference_partition(self, ref_dag):
        q = quotient_graph(ref_dag, Partition(5, ((1, 2), (3,), (4, 5))))
        assert q.sorted_edges() == [(1, 2), (2, 3)]

    def test_quotient_creates_cycle(self):
        g = validate_dag(3, [(1, 2), (2, 3)])
        p = Partition(3, ((1, 3), (2,)))
        q = quotient_graph(g, p)
        assert q.sorted_edges() == [(1, 2), (2, 1)]
        assert not is_acyclic(q)
        part, cond = scc_condensation(q)
        assert cond.n == 1 and not cond.edges
        assert part.blocks == ((1, 2),)

    def test_partition_mismatch(self, ref_dag):
        with pytest.raises(PartitionMismatch):
            Partition(5, ((1, 2), (3, 4)))
        with pytest.raises(PartitionMismatch):
            Partition(3, ((1, 2), (2, 3)))
        with pytest.raises(PartitionMismatch):
            quotient_graph(ref_dag, Partition(4, ((1, 2), (3, 4))))

    def test_partition_canonical(self):
        assert Partition(4, ((4, 3), (2,), (1,))).blocks == ((1,), (2,), (3, 4))


class TestScc:
    def test_acyclic_singletons(self, ref_dag):
        part, cond = scc_condensation(ref_dag)
        assert part == Partition.singletons(5)
        assert cond.edges == ref_dag.edges

    def test_two_cycle(self):
        part, cond = scc_condensation(Digraph(2, frozenset({(1, 2), (2, 1)})))
        assert len(part) == 1 and cond.n == 1

    def test_mixed(self):
        g = Digraph(5, frozenset({(1, 2), (2, 1), (2, 3), (3, 4), (4, 3), (4, 5)}))
        assert strongly_connected_components(g) == [(1, 2), (3, 4), (5,)]
        _, cond = scc_condensation(g)
        assert cond.sorted_edges() == [(1, 2), (2, 3)]

    def test_long_chain_no_recursion_limit(self):
        n = 5000
        g = Digraph(n, frozenset((i, i + 1) for i in range(1, n)) | {(n, 1)})
        assert strongly_connected_components(g) == [tuple(range(1, n + 1))]


def test_to_dot(ref_dag):
    dot = to_dot(ref_dag, name="ref")
    assert dot.startswith("digraph ref {")
    assert "1 -> 3;" in dot and dot.rstrip().endswith("}")


# properties over random DAGs


@given(dags())
@settings(max_examples=150, deadline=None)
def test_descendants_transitive(dag):
    for i in dag.nodes:
        di = set(descendants(dag, i))
        assert i in di
        for j in di:
            assert set(descendants(dag, j)) <= di


@given(dags(), st.data())
@settings(max_examples=150, deadline=None)
def test_nd_is_intersection_of_singletons(dag, data):
    S = data.draw(st.sets(st.integers(1, dag.n), min_size=1))
    expected = set(dag.nodes)
    for i in S:
        expected &= set(non_descendants(dag, [i]))
    assert set(non_descendants(dag, S)) == expected


@given(dags(), st.data())
@settings(max_examples=150, deadline=None)
def test_complement_descendant_closed(dag, data):
    S = data.draw(st.sets(st.integers(1, dag.n), min_size=1))
    nd = set(non_descendants(dag, S))
    for u, v in dag.edges:
        if u not in nd:
            assert v not in nd


@given(dags(), st.data())
@settings(max_examples=150, deadline=None)
def test_quotient_then_condense_acyclic(dag, data):
    labels = data.draw(st.lists(st.integers(1, 3), min_size=dag.n, max_size=dag.n))
    groups = {}
    for v, lab in enumerate(labels, start=1):
        groups.setdefault(lab, []).append(v)
    p = Partition(dag.n, tuple(tuple(g) for g in groups.values()))
    q = quotient_graph(dag, p)
    assert not any(u == v for u, v in q.edges)
    _, cond = scc_condensation(q)
    assert is_acyclic(cond)


@given(dags())
@settings(max_examples=100, deadline=None)
def test_singleton_quotient_identity(dag):
    assert quotient_graph(dag, Partition.singletons(dag.n)).edges == dag.edges


@given(dags_with_targets())
@settings(max_examples=100, deadline=None)
def test_nd_family_sorted_unique(pair):
    dag, targets = pair
    fam = nd_family(dag, targets)
    assert fam == sorted(set(fam), key=lambda s: (len(s), s))
