"""Directed-graph core: DAG validation, reachability, non-descendants,
quotient graphs and strongly-connected-component condensation.

Nodes are 1-based integers. Vertex sets are canonical sorted tuples so that
anything derived from them serializes identically across runs.
"""
from __future__ import annotations

from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from functools import cached_property

from .errors import CycleError, DuplicateEdge, EmptyTarget, PartitionMismatch, RangeError

VertexSet = tuple[int, ...]
Edge = tuple[int, int]


def vset(nodes: Iterable[int]) -> VertexSet:
    """Canonical form of a vertex set: sorted, deduplicated tuple."""
    return tuple(sorted(set(int(v) for v in nodes)))


def _check_node(n: int, v: int) -> None:
    if not 1 <= v <= n:
        raise RangeError(f"node {v} outside 1..{n}")


@dataclass(frozen=True)
class Digraph:
    """Directed graph on nodes 1..n, possibly cyclic, without self-loops."""

    n: int
    edges: frozenset[Edge] = field(default_factory=frozenset)

    def __post_init__(self) -> None:
        if self.n < 1:
            raise RangeError(f"node count must be >= 1, got {self.n}")
        for u, v in self.edges:
            _check_node(self.n, u)
            _check_node(self.n, v)
            if u == v:
                raise RangeError(f"self-loop at node {u}")

    @property
    def nodes(self) -> range:
        return range(1, self.n + 1)

    @cached_property
    def children(self) -> dict[int, VertexSet]:
        out: dict[int, list[int]] = {v: [] for v in self.nodes}
        for u, v in self.edges:
            out[u].append(v)
        return {u: vset(vs) for u, vs in out.items()}

    @cached_property
    def parents(self) -> dict[int, VertexSet]:
        out: dict[int, list[int]] = {v: [] for v in self.nodes}
        for u, v in self.edges:
            out[v].append(u)
        return {v: vset(us) for v, us in out.items()}

    def sorted_edges(self) -> list[Edge]:
        return sorted(self.edges)

    def to_json(self) -> dict:
        return {"nodes": self.n, "edges": [list(e) for e in self.sorted_edges()]}


@dataclass(frozen=True)
class Dag(Digraph):
    """Acyclic digraph with a cached topological order.

    Build through :func:`validate_dag`, which rejects cycles and duplicate edges.
    """

    order: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        super().__post_init__()
        order = _topological_order(self.n, self.edges)
        if order is None:
            raise CycleError("edge set contains a directed cycle")
        object.__setattr__(self, "order", order)


def _topological_order(n: int, edges: Iterable[Edge]) -> tuple[int, ...] | None:
    # Kahn's algorithm; smallest ready node first so the order is canonical.
    import heapq

    indeg = [0] * (n + 1)
    succ: dict[int, list[int]] = {v: [] for v in range(1, n + 1)}
    for u, v in edges:
        succ[u].append(v)
        indeg[v] += 1
    ready = [v for v in range(1, n + 1) if indeg[v] == 0]
    heapq.heapify(ready)
    order = []
    while ready:
        u = heapq.heappop(ready)
        order.append(u)
        for v in succ[u]:
            indeg[v] -= 1
            if indeg[v] == 0:
                heapq.heappush(ready, v)
    return tuple(order) if len(order) == n else None


def validate_dag(n: int, edges: Iterable[Sequence[int]]) -> Dag:
    """Build a :class:`Dag`, raising on cycles, bad endpoints or repeated edges."""
    if n < 1:
        raise RangeError(f"node count must be >= 1, got {n}")
    seen: set[Edge] = set()
    for e in edges:
        u, v = (int(x) for x in e)
        _check_node(n, u)
        _check_node(n, v)
        if u == v:
            raise CycleError(f"self-loop at node {u}")
        if (u, v) in seen:
            raise DuplicateEdge(f"edge ({u}, {v}) listed twice")
        seen.add((u, v))
    return Dag(n, frozenset(seen))


@dataclass(frozen=True)
class Partition:
    """Disjoint nonempty blocks covering 1..n, sorted by smallest element."""

    n: int
    blocks: tuple[VertexSet, ...]

    def __post_init__(self) -> None:
        blocks = tuple(sorted((vset(b) for b in self.blocks), key=lambda b: b[0] if b else 0))
        seen: set[int] = set()
        for b in blocks:
            if not b:
                raise PartitionMismatch("empty block")
            for v in b:
                if not 1 <= v <= self.n:
                    raise PartitionMismatch(f"node {v} outside 1..{self.n}")
                if v in seen:
                    raise PartitionMismatch(f"node {v} appears in two blocks")
                seen.add(v)
        if len(seen) != self.n:
            missing = sorted(set(range(1, self.n + 1)) - seen)
            raise PartitionMismatch(f"blocks do not cover nodes {missing}")
        object.__setattr__(self, "blocks", blocks)

    @classmethod
    def singletons(cls, n: int) -> Partition:
        return cls(n, tuple((v,) for v in range(1, n + 1)))

    def block_of(self) -> dict[int, int]:
        """Map node -> 1-based index of its block."""
        return {v: k for k, b in enumerate(self.blocks, start=1) for v in b}

    def __len__(self) -> int:
        return len(self.blocks)

    def __iter__(self):
        return iter(self.blocks)

    def to_json(self) -> list[list[int]]:
        return [list(b) for b in self.blocks]


def descendants(dag: Digraph, i: int) -> VertexSet:
    """Nodes reachable from ``i`` by a directed path, including ``i`` itself."""
    _check_node(dag.n, i)
    seen = {i}
    stack = [i]
    children = dag.children
    while stack:
        u = stack.pop()
        for v in children[u]:
            if v not in seen:
                seen.add(v)
                stack.append(v)
    return vset(seen)


def non_descendants(dag: Digraph, targets: Iterable[int]) -> VertexSet:
    """Nodes that are descendants of no member of ``targets``."""
    targets = vset(targets)
    if not targets:
        raise EmptyTarget("target set is empty")
    hit: set[int] = set()
    for i in targets:
        hit.update(descendants(dag, i))
    return vset(v for v in dag.nodes if v not in hit)


def nd_family(dag: Digraph, targets: Iterable[Iterable[int]]) -> list[VertexSet]:
    """Distinct non-descendant sets of a target family, canonically ordered."""
    fam = {non_descendants(dag, s) for s in targets}
    return sorted(fam, key=lambda s: (len(s), s))


def quotient_graph(g: Digraph, p: Partition) -> Digraph:
    """Graph on the blocks of ``p`` (labelled 1..k in block order).

    Block ``a -> b`` whenever some edge of ``g`` goes from a node of ``a`` to a
    node of ``b``; edges inside a block are dropped.
    """
    if p.n != g.n:
        raise PartitionMismatch(f"partition over {p.n} nodes, graph has {g.n}")
    where = p.block_of()
    edges = {(where[u], where[v]) for u, v in g.edges if where[u] != where[v]}
    return Digraph(len(p), frozenset(edges))


def strongly_connected_components(g: Digraph) -> list[VertexSet]:
    """Tarjan's algorithm, iterative. Components are returned in canonical order."""
    index: dict[int, int] = {}
    low: dict[int, int] = {}
    on_stack: set[int] = set()
    stack: list[int] = []
    comps: list[VertexSet] = []
    counter = 0
    children = g.children

    for root in g.nodes:
        if root in index:
            continue
        work = [(root, iter(children[root]))]
        index[root] = low[root] = counter
        counter += 1
        stack.append(root)
        on_stack.add(root)
        while work:
            u, it = work[-1]
            advanced = False
            for v in it:
                if v not in index:
                    index[v] = low[v] = counter
                    counter += 1
                    stack.append(v)
                    on_stack.add(v)
                    work.append((v, iter(children[v])))
                    advanced = True
                    break
                if v in on_stack:
                    low[u] = min(low[u], index[v])
            if advanced:
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[u])
            if low[u] == index[u]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack.discard(w)
                    comp.append(w)
                    if w == u:
                        break
                comps.append(vset(comp))
    return sorted(comps)


def scc_condensation(g: Digraph) -> tuple[Partition, Dag]:
    """Partition ``g`` into strongly connected components and quotient by it."""
    p = Partition(g.n, tuple(strongly_connected_components(g)))
    q = quotient_graph(g, p)
    return p, Dag(q.n, q.edges)


def is_acyclic(g: Digraph) -> bool:
    return _topological_order(g.n, g.edges) is not None


def to_dot(g: Digraph, labels: Sequence[str] | None = None, name: str = "G") -> str:
    """Graphviz DOT text. ``labels[k-1]`` names node ``k`` when given."""
    lines = [f"digraph {name} {{"]
    for v in g.nodes:
        label = labels[v - 1] if labels else str(v)
        lines.append(f'  {v} [label="{label}"];')
    for u, v in g.sorted_edges():
        lines.append(f"  {u} -> {v};")
    lines.append("}")
    return "\n".join(lines) + "\n"
