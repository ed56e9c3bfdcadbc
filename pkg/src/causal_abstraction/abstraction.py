"""Identifiability calculus for latent causal models.

Given a DAG and the family of intervention targets, the model is identifiable
up to the quotient of the graph by the atoms of the sigma-algebra generated by
the targets' non-descendant sets. This module computes that abstraction, the
per-class target intersections that single out additional disentangled
latents, and checks homomorphism / abstraction / isomorphism relations between
linear Gaussian SCMs.
"""
from __future__ import annotations

from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, InternalError, NotBijective, NotSurjective, RangeError, ValidationError
from .graph import (
    Dag,
    Digraph,
    Partition,
    VertexSet,
    is_acyclic,
    nd_family,
    non_descendants,
    quotient_graph,
    to_dot,
    vset,
)
from .scm import InterventionModel, LinearGaussianScm, latent_covariance
from .setcalc import sigma_atoms

TargetFamily = InterventionModel


def _target_list(targets: TargetFamily | Iterable[Iterable[int]], n: int) -> list[VertexSet]:
    if isinstance(targets, InterventionModel):
        family = targets
    else:
        family = InterventionModel.build(targets, n=n)
    return list(family.targets)


@dataclass(frozen=True)
class PiEntry:
    nd: VertexSet
    pi: VertexSet
    singleton: bool

    def to_json(self) -> dict:
        return {"nd": list(self.nd), "pi": list(self.pi), "singleton": self.singleton}


@dataclass(frozen=True)
class AbstractionReport:
    nd_family: list[VertexSet]
    partition: Partition
    quotient: Dag
    pi_map: list[PiEntry]
    acyclic: bool

    def to_json(self) -> dict:
        return {
            "nd_family": [list(s) for s in self.nd_family],
            "partition": self.partition.to_json(),
            "quotient": {
                "nodes": self.partition.to_json(),
                "edges": [list(e) for e in self.quotient.sorted_edges()],
            },
            "pi": [e.to_json() for e in self.pi_map],
            "acyclic": self.acyclic,
        }

    def to_dot(self) -> str:
        labels = ["{" + ",".join(map(str, b)) + "}" for b in self.partition.blocks]
        return to_dot(self.quotient, labels, name="abstraction")


def pi_sets(dag: Digraph, targets: TargetFamily | Iterable[Iterable[int]]) -> list[PiEntry]:
    """Intersection of all targets sharing each non-descendant set.

    The intersection is returned as is, even when empty; ``singleton`` marks
    the classes whose intersection is a single node.
    """
    groups: dict[VertexSet, set[int]] = {}
    for t in _target_list(targets, dag.n):
        nd = non_descendants(dag, t)
        groups[nd] = groups[nd] & set(t) if nd in groups else set(t)
    order = sorted(groups, key=lambda s: (len(s), s))
    return [PiEntry(nd, vset(groups[nd]), len(groups[nd]) == 1) for nd in order]


def identifiable_abstraction(dag: Dag, targets: TargetFamily | Iterable[Iterable[int]]) -> AbstractionReport:
    """Partition, quotient graph and intersection classes identifiable from ``targets``.

    Raises :class:`InternalError` if the quotient comes out cyclic: the
    quotient by non-descendant atoms is always acyclic, so a cycle is a bug.
    """
    tlist = _target_list(targets, dag.n)
    fam = nd_family(dag, tlist)
    partition = sigma_atoms(dag.n, fam)
    q = quotient_graph(dag, partition)
    if not is_acyclic(q):
        raise InternalError(f"quotient by {partition.to_json()} is cyclic")
    return AbstractionReport(
        nd_family=fam,
        partition=partition,
        quotient=Dag(q.n, q.edges),
        pi_map=pi_sets(dag, tlist),
        acyclic=True,
    )


@dataclass(frozen=True)
class GraphHom:
    """Vertex map ``phi`` from ``source`` to ``target`` (both 1-based)."""

    source: Digraph
    target: Digraph
    phi: Mapping[int, int]

    @classmethod
    def from_sequence(cls, source: Digraph, target: Digraph, images: Sequence[int]) -> GraphHom:
        """``images[i - 1]`` is the image of source node ``i``."""
        return cls(source, target, {i: int(v) for i, v in enumerate(images, start=1)})

    @classmethod
    def quotient_map(cls, g: Digraph, partition: Partition, target: Digraph | None = None) -> GraphHom:
        """Canonical map sending each node to its block."""
        return cls(g, target if target is not None else quotient_graph(g, partition), partition.block_of())


@dataclass(frozen=True)
class HomCheck:
    is_hom: bool
    surjective: bool
    violations: tuple[tuple[int, int], ...] = ()

    def __bool__(self) -> bool:
        return self.is_hom


def check_graph_hom(hom: GraphHom) -> HomCheck:
    """Every source edge must collapse (``phi(u) == phi(v)``) or land on a target edge."""
    phi = hom.phi
    missing = [v for v in hom.source.nodes if v not in phi]
    if missing:
        raise RangeError(f"phi undefined on source nodes {missing}")
    for v, img in phi.items():
        if not 1 <= img <= hom.target.n:
            raise RangeError(f"phi({v}) = {img} outside 1..{hom.target.n}")
    bad = tuple(sorted(
        (u, v) for u, v in hom.source.edges
        if phi[u] != phi[v] and (phi[u], phi[v]) not in hom.target.edges
    ))
    surjective = {phi[v] for v in hom.source.nodes} == set(hom.target.nodes)
    return HomCheck(not bad, surjective, bad)


@dataclass(frozen=True)
class AbstractionCheck:
    passed: bool
    max_deviation: float
    aggregated_cov: np.ndarray
    target_cov: np.ndarray

    def __bool__(self) -> bool:
        return self.passed


def aggregation_matrix(hom: GraphHom, maps: Sequence[float]) -> np.ndarray:
    """Row ``j`` sums ``h_i z_i`` over the fibre of target node ``j``."""
    maps = np.asarray(maps, dtype=float)
    if maps.shape != (hom.source.n,):
        raise DimensionMismatch(f"{maps.shape[0] if maps.ndim else 0} maps for {hom.source.n} source nodes")
    if not np.all(np.isfinite(maps)):
        raise ValidationError("linear maps must be finite")
    W = np.zeros((hom.target.n, hom.source.n))
    for i, j in hom.phi.items():
        W[j - 1, i - 1] = maps[i - 1]
    return W


def check_scm_abstraction(source: LinearGaussianScm, target: LinearGaussianScm, hom: GraphHom,
                          maps: Sequence[float], tol: float = 1e-8) -> AbstractionCheck:
    """Does aggregating the source latents through ``(phi, h)`` reproduce the target?

    Both sides are zero-mean Gaussian, so equality in distribution of the
    whole vector of aggregates is equality of covariances; the joint is
    compared, not only the per-node marginals.
    """
    if hom.source.n != source.n or hom.target.n != target.n:
        raise DimensionMismatch("homomorphism does not match the SCM node counts")
    check = check_graph_hom(hom)
    if not check.is_hom:
        raise ValidationError(f"phi is not a graph homomorphism; offending edges {list(check.violations)}")
    if not check.surjective:
        raise NotSurjective("an abstraction map must hit every target node")
    W = aggregation_matrix(hom, maps)
    agg = W @ latent_covariance(source) @ W.T
    tgt = latent_covariance(target)
    dev = float(np.max(np.abs(agg - tgt)))
    return AbstractionCheck(dev <= tol, dev, agg, tgt)


def check_scm_isomorphism(a: LinearGaussianScm, b: LinearGaussianScm, iso: GraphHom,
                          maps: Sequence[float], tol: float = 1e-8) -> bool:
    """Abstraction in both directions through a bijective, edge-bijective ``phi``."""
    if a.n != b.n or iso.source.n != a.n or iso.target.n != b.n:
        raise NotBijective(f"node counts differ: {a.n} vs {b.n}")
    images = [iso.phi.get(v) for v in a.dag.nodes]
    if sorted(i for i in images if i is not None) != list(b.dag.nodes):
        raise NotBijective("phi is not a bijection on vertices")
    if {(iso.phi[u], iso.phi[v]) for u, v in a.dag.edges} != set(b.dag.edges):
        return False
    maps = np.asarray(maps, dtype=float)
    if np.any(maps == 0):
        return False
    forward = check_scm_abstraction(a, b, iso, maps, tol)
    inverse_phi = {j: i for i, j in iso.phi.items()}
    inverse_maps = np.array([1.0 / maps[inverse_phi[j] - 1] for j in b.dag.nodes])
    backward = check_scm_abstraction(b, a, GraphHom(b.dag, a.dag, inverse_phi), inverse_maps, tol)
    return forward.passed and backward.passed


def quotient_scm(scm: LinearGaussianScm, partition: Partition, weights: Sequence[float] | None = None,
                 zero_tol: float = 1e-12) -> tuple[LinearGaussianScm, GraphHom, np.ndarray]:
    """Coarse linear Gaussian SCM on the blocks of ``partition`` that the
    block sums of ``scm`` abstract exactly.

    Block ``k`` aggregates ``sum_i c_k w_i z_i`` over its members (``w`` defaults
    to ones). The aggregated covariance ``C`` is factored as ``L D L^T`` along a
    topological order of the quotient; scaling block ``k`` by ``c_k = D_k^{-1/2}``
    gives unit exogenous variances, and the coarse coefficients are
    ``I - L'^{-1}``. Coefficients above ``zero_tol`` between blocks that the
    quotient does not connect (block sums need not screen off non-parent
    blocks) become extra edges; they always point forward in the order, so
    the result stays acyclic and the block map stays a homomorphism.

    Returns the coarse SCM, the block map and the per-node linear maps.
    """
    q = quotient_graph(scm.dag, partition)
    if not is_acyclic(q):
        raise ValidationError("quotient by this partition is cyclic; condense it first")
    order = Dag(q.n, q.edges).order
    w = np.ones(scm.n) if weights is None else np.asarray(weights, dtype=float)
    hom0 = GraphHom.quotient_map(scm.dag, partition, q)
    W = aggregation_matrix(hom0, w)
    perm = [k - 1 for k in order]
    C = (W @ latent_covariance(scm) @ W.T)[np.ix_(perm, perm)]

    chol = np.linalg.cholesky(C)
    d = np.diag(chol)
    # covariance of the rescaled aggregates is L' L'^T with L' unit lower
    unit_lower = chol / d[:, None]
    coef_perm = np.eye(len(C)) - np.linalg.inv(unit_lower)
    scale_perm = 1.0 / d

    k = len(C)
    coef = np.zeros((k, k))
    scale = np.zeros(k)
    coef[np.ix_(perm, perm)] = coef_perm
    scale[perm] = scale_perm
    coef[np.abs(coef) <= zero_tol] = 0.0
    np.fill_diagonal(coef, 0.0)

    edges = set(q.edges) | {(j + 1, i + 1) for i, j in zip(*np.nonzero(coef))}
    coarse_dag = Dag(k, frozenset(edges))
    coarse = LinearGaussianScm(coarse_dag, coef)
    where = partition.block_of()
    maps = np.array([w[i - 1] * scale[where[i] - 1] for i in scm.dag.nodes])
    return coarse, GraphHom(scm.dag, coarse_dag, where), maps
