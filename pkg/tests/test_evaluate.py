import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from causal_abstraction.errors import DimensionMismatch, EmptyInput, RangeError
from causal_abstraction.graph import Partition, nd_family, validate_dag
from causal_abstraction.abstraction import identifiable_abstraction
from causal_abstraction.evaluate import (
    block_score,
    delta_support_oracle,
    evaluate_fit,
    match_blocks,
    pi_coordinate_check,
)
from causal_abstraction.scm import InterventionModel, sample_pairs, sample_rotation, sample_scm
from causal_abstraction.setcalc import sigma_atoms

from conftest import REF_EDGES, REF_TARGETS, random_dag, random_targets

P5 = Partition(5, ((1, 2), (3, 4), (5,)))


def givens(n, i, j, theta):
    G = np.eye(n)
    c, s = np.cos(theta), np.sin(theta)
    G[i - 1, i - 1] = G[j - 1, j - 1] = c
    G[i - 1, j - 1], G[j - 1, i - 1] = -s, s
    return G


def brute_force_match(M, partition):
    """Best in-block mass over every assignment of rows to block slots."""
    sq = M * M
    slots = [k for k, b in enumerate(partition.blocks) for _ in b]
    cols = [[v - 1 for v in b] for b in partition.blocks]
    best = 0.0
    for perm in set(itertools.permutations(slots)):
        best = max(best, sum(sq[r, cols[k]].sum() for r, k in enumerate(perm)))
    return best / sq.sum()


def simulate(dag, targets, count=10_000, seed=0):
    return sample_pairs(sample_scm(dag, seed), InterventionModel.build(targets), sample_rotation(dag.n, seed + 1),
                        count, seed + 2)


class TestOracle:
    def test_reference(self):
        ds = simulate(validate_dag(5, REF_EDGES), REF_TARGETS)
        assert delta_support_oracle(ds.z, ds.zt, tol=1e-9) == [(1, 2), (1, 2, 3)]

    def test_single_full_target(self):
        ds = simulate(validate_dag(3, [(1, 2)]), [[1, 2, 3]], 2000)
        assert delta_support_oracle(ds.z, ds.zt) == [()]

    def test_chain_atomic(self):
        dag = validate_dag(3, [(1, 2), (2, 3)])
        ds = simulate(dag, [[1], [2], [3]], 5000)
        assert delta_support_oracle(ds.z, ds.zt) == nd_family(dag, [[1], [2], [3]]) == [(), (1,), (1, 2)]

    def test_random_configs_and_composition(self):
        rng = np.random.default_rng(4)
        for _ in range(8):
            n = int(rng.integers(1, 7))
            dag = random_dag(rng, n)
            targets = random_targets(rng, n)
            ds = simulate(dag, targets, 5000, int(rng.integers(10_000)))
            recovered = delta_support_oracle(ds.z, ds.zt)
            assert recovered == nd_family(dag, targets)
            assert sigma_atoms(n, recovered) == identifiable_abstraction(dag, targets).partition

    def test_rare_coincidence_suppressed(self):
        z = np.random.default_rng(0).standard_normal((1000, 3))
        zt = z + 1.0
        zt[0] = z[0]
        assert delta_support_oracle(z, zt) == [()]

    def test_errors(self):
        with pytest.raises(EmptyInput):
            delta_support_oracle(np.zeros((0, 2)), np.zeros((0, 2)))
        with pytest.raises(DimensionMismatch):
            delta_support_oracle(np.zeros((3, 2)), np.zeros((3, 3)))


class TestBlockScore:
    def test_identity(self):
        assert block_score(np.eye(5), P5).score == 1.0

    def test_within_block_permutation(self):
        M = np.eye(5)[[1, 0, 3, 2, 4]]
        assert block_score(M, P5).score == 1.0

    def test_cross_block_rotation(self):
        M = givens(5, 2, 3, np.pi / 4)
        assert block_score(M, P5).score == pytest.approx(0.8, abs=1e-12)

    def test_dimension(self):
        with pytest.raises(DimensionMismatch):
            block_score(np.eye(4), P5)

    def test_haar_expectation(self):
        rng = np.random.default_rng(0)
        scores = [block_score(sample_rotation(5, rng).Q, P5).score for _ in range(1000)]
        assert np.mean(scores) == pytest.approx((4 + 4 + 1) / 25, abs=0.05)

    def test_within_block_invariance(self):
        rng = np.random.default_rng(1)
        M = sample_rotation(5, rng).Q
        W = np.zeros((5, 5))
        W[:2, :2] = sample_rotation(2, rng).Q
        W[2:4, 2:4] = sample_rotation(2, rng).Q
        W[4, 4] = -1.0
        base = block_score(M, P5).score
        assert block_score(W @ M, P5).score == pytest.approx(base, abs=1e-12)
        assert block_score(M @ W, P5).score == pytest.approx(base, abs=1e-12)


@given(st.integers(0, 10_000))
@settings(max_examples=100, deadline=None)
def test_score_bounds(seed):
    rng = np.random.default_rng(seed)
    M = rng.normal(size=(5, 5)) * (rng.random((5, 5)) < 0.6)
    s = block_score(M, P5).score
    assert 0.0 <= s <= 1.0 + 1e-12
    off = np.ones((5, 5), dtype=bool)
    for b in P5.blocks:
        off[np.ix_([v - 1 for v in b], [v - 1 for v in b])] = False
    if M.any():
        assert (abs(s - 1.0) < 1e-12) == (not np.any(M[off]))


class TestMatchBlocks:
    def test_block_swap(self):
        P4 = Partition(4, ((1, 2), (3, 4)))
        M = np.eye(4)[[2, 3, 0, 1]]
        groups, score = match_blocks(M, P4)
        assert score.score == 1.0
        assert groups == [(3, 4), (1, 2)]
        assert block_score(M, P4).score == 0.0

    def test_identity(self):
        groups, score = match_blocks(np.eye(5), P5)
        assert groups == [(1, 2), (3, 4), (5,)] and score.score == 1.0

    def test_haar_reported(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            M = sample_rotation(5, rng).Q
            _, matched = match_blocks(M, P5)
            assert matched.score >= block_score(M, P5).score - 1e-12

    def test_agrees_with_exhaustive_search(self):
        rng = np.random.default_rng(3)
        parts = [P5, Partition(5, ((1,), (2, 3, 4), (5,))), Partition(6, ((1, 2, 3), (4, 5), (6,)))]
        for part in parts:
            for _ in range(15):
                M = sample_rotation(part.n, rng).Q
                _, s = match_blocks(M, part)
                assert s.score == pytest.approx(brute_force_match(M, part), abs=1e-12)


class TestPiCheck:
    def test_identity(self):
        assert pi_coordinate_check(np.eye(5), (3, 4), 3, 1e-6)

    def test_rotated_block(self):
        assert not pi_coordinate_check(givens(5, 3, 4, np.pi / 4), (3, 4), 3, 0.1)

    def test_reflection(self):
        M = np.eye(5)
        M[2, 2] = -1.0
        assert pi_coordinate_check(M, (3, 4), 3, 1e-6)

    def test_range(self):
        with pytest.raises(RangeError):
            pi_coordinate_check(np.eye(5), (3, 4), 5, 0.1)


class TestEvaluateFit:
    def test_truth_scores_one(self):
        dag = validate_dag(5, REF_EDGES)
        ds = simulate(dag, REF_TARGETS, 3000)
        rep = evaluate_fit(ds.mixing.Q, ds.mixing.Q, dag, ds.interventions, ds.z, ds.zt)
        assert rep["block_score"] == pytest.approx(1.0)
        assert rep["block_verdict"] == "PASS"
        assert rep["oracle_verdict"] == "MATCH" and rep["partition_verdict"] == "MATCH"
        assert rep["pi_checks"] == [{"nd": [1, 2], "pi": 3, "learned": [3], "aligned": True}]

    def test_dimension_mismatch(self):
        dag = validate_dag(5, REF_EDGES)
        with pytest.raises(DimensionMismatch):
            evaluate_fit(np.eye(4), np.eye(5), dag, REF_TARGETS)
