"""Verification oracles for simulated data and fitted models.

* ``delta_support_oracle`` reads the non-descendant family straight off the
  zero patterns of ``z - z_tilde`` in ground-truth latent coordinates. It is a
  theory check for simulations; applied to observations without unmixing it is
  meaningless.
* ``block_score`` / ``match_blocks`` measure how block diagonal
  ``M = Q_learned^T Q_true`` is with respect to the identifiable partition.
* ``pi_coordinate_check`` tests whether a learned axis is aligned (up to sign)
  with a singly-identified latent.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import DimensionMismatch, EmptyInput, RangeError
from .graph import Partition, VertexSet, vset


def delta_support_oracle(z: np.ndarray, zt: np.ndarray, tol: float = 1e-9,
                         min_count: int = 10) -> list[VertexSet]:
    """Non-descendant family recovered from the zero patterns of ``z - zt``.

    A pattern is kept when it occurs in at least
    ``max(min_count, 0.5 * rows / 2**n)`` rows, i.e. half of what it would get
    if every possible pattern were equally likely; isolated coincidental
    zeros at floating-point scale fall below that floor.
    """
    z = np.asarray(z, dtype=float)
    zt = np.asarray(zt, dtype=float)
    if z.ndim != 2 or len(z) == 0:
        raise EmptyInput("no latent pairs")
    if z.shape != zt.shape:
        raise DimensionMismatch(f"shapes differ: {z.shape} vs {zt.shape}")
    if tol <= 0:
        raise RangeError("tol must be positive")
    rows, n = z.shape
    zero = np.abs(z - zt) <= tol
    counts = Counter(map(bytes, np.packbits(zero, axis=1)))
    floor = max(min_count, 0.5 * rows / 2.0**n)
    family = []
    for key, c in counts.items():
        if c >= floor:
            bits = np.unpackbits(np.frombuffer(key, dtype=np.uint8))[:n]
            family.append(vset(np.flatnonzero(bits) + 1))
    return sorted(family, key=lambda s: (len(s), s))


@dataclass(frozen=True)
class BlockScore:
    """In-block share of the squared Frobenius mass of ``M``.

    ``rows`` lists, per block, the learned coordinates (rows of ``M``) assigned
    to it; ``block_mass`` is the squared mass captured by each block.
    """

    score: float
    block_mass: tuple[float, ...]
    total_mass: float
    rows: tuple[VertexSet, ...]

    def to_json(self) -> dict:
        return {
            "score": self.score,
            "block_mass": list(self.block_mass),
            "total_mass": self.total_mass,
            "rows": [list(r) for r in self.rows],
        }


def _check_square(M: np.ndarray, partition: Partition) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1] or M.shape[0] != partition.n:
        raise DimensionMismatch(f"matrix {M.shape} vs partition over {partition.n} nodes")
    return M


def block_score(M: np.ndarray, partition: Partition, rows: Partition | None = None) -> BlockScore:
    """Squared mass of ``M[rows_B, B]`` summed over blocks, over the total.

    Rows default to the same partition as the columns (identity matching).
    """
    M = _check_square(M, partition)
    rows = rows or partition
    if rows.n != partition.n or len(rows) != len(partition):
        raise DimensionMismatch("row partition does not match the column partition")
    sq = M * M
    masses = tuple(
        float(sq[np.ix_([v - 1 for v in r], [v - 1 for v in c])].sum())
        for r, c in zip(rows.blocks, partition.blocks)
    )
    total = float(sq.sum())
    score = sum(masses) / total if total > 0 else 0.0
    return BlockScore(score, masses, total, rows.blocks)


def _row_block_mass(M: np.ndarray, partition: Partition) -> np.ndarray:
    sq = M * M
    return np.stack([sq[:, [v - 1 for v in b]].sum(axis=1) for b in partition.blocks], axis=1)


def match_blocks(M: np.ndarray, partition: Partition) -> tuple[list[VertexSet], BlockScore]:
    """Assign learned coordinates (rows) to ground-truth blocks (columns).

    Maximizes the in-block squared mass subject to block ``B`` receiving
    exactly ``|B|`` rows. The objective is a sum of per-row terms, so giving
    each block ``|B|`` slots turns this into a linear assignment problem
    that is solved exactly at any size.

    Returns the learned coordinates per block, in block order, and the score.
    The row groups are not in canonical block order, so they are returned as
    a plain list rather than a :class:`Partition`.
    """
    M = _check_square(M, partition)
    mass = _row_block_mass(M, partition)
    slots = np.concatenate([[k] * len(b) for k, b in enumerate(partition.blocks)])
    row_idx, slot_idx = linear_sum_assignment(mass[:, slots], maximize=True)
    groups: list[list[int]] = [[] for _ in partition.blocks]
    for r, s in zip(row_idx, slot_idx):
        groups[slots[s]].append(int(r) + 1)
    groups_v = [vset(g) for g in groups]
    masses = tuple(float(mass[[v - 1 for v in g], k].sum()) for k, g in enumerate(groups_v))
    total = float((M * M).sum())
    score = sum(masses) / total if total > 0 else 0.0
    return groups_v, BlockScore(score, masses, total, tuple(groups_v))


def pi_coordinate_check(M: np.ndarray, block: VertexSet, pi_coord: int, tol: float,
                        rows: VertexSet | None = None) -> bool:
    """Is some learned row assigned to ``block`` a signed unit vector on ``pi_coord``?

    ``rows`` are the learned coordinates matched to the block; they default to
    the block itself.
    """
    M = np.asarray(M, dtype=float)
    n = len(M)
    block = vset(block)
    if pi_coord not in block:
        raise RangeError(f"coordinate {pi_coord} is not in block {list(block)}")
    rows = vset(rows) if rows is not None else block
    if not all(1 <= v <= n for v in (*block, *rows)):
        raise RangeError(f"indices outside 1..{n}")
    for r in rows:
        row = np.abs(M[r - 1])
        others = np.delete(row, pi_coord - 1)
        if row[pi_coord - 1] >= 1.0 - tol and np.all(others <= tol):
            return True
    return False


def evaluate_fit(Q_learned: np.ndarray, Q_true: np.ndarray, dag, targets, z: np.ndarray | None = None,
                 zt: np.ndarray | None = None, threshold: float = 0.9, pi_tol: float = 0.1,
                 oracle_tol: float = 1e-9) -> dict:
    """Full verification report for a fitted rotation against the ground truth.

    Block structure is checked on ``M = Q_learned^T Q_true`` against the
    identifiable partition; when ground-truth latent pairs are supplied the
    Delta-support oracle is run on them as well. The singleton-coordinate
    checks are informational and do not enter the verdict.
    """
    from .abstraction import identifiable_abstraction
    from .setcalc import sigma_atoms

    Q_learned = np.asarray(Q_learned, dtype=float)
    Q_true = np.asarray(Q_true, dtype=float)
    if Q_learned.shape != Q_true.shape or Q_true.shape != (dag.n, dag.n):
        raise DimensionMismatch(f"learned {Q_learned.shape}, true {Q_true.shape}, graph has {dag.n} nodes")
    report = identifiable_abstraction(dag, targets)
    M = Q_learned.T @ Q_true
    groups, matched = match_blocks(M, report.partition)
    unmatched = block_score(M, report.partition)
    out = {
        "partition": report.partition.to_json(),
        "nd_family": [list(s) for s in report.nd_family],
        "M": M.tolist(),
        "matched_blocks": [{"block": list(b), "learned": list(g)}
                           for b, g in zip(report.partition.blocks, groups)],
        "block_score": matched.score,
        "block_score_unmatched": unmatched.score,
        "block_mass": list(matched.block_mass),
        "threshold": threshold,
        "block_verdict": "PASS" if matched.score >= threshold else "FAIL",
    }
    where = report.partition.block_of()
    pis = []
    for entry in report.pi_map:
        if not entry.singleton:
            continue
        (coord,) = entry.pi
        k = where[coord] - 1
        pis.append({
            "nd": list(entry.nd),
            "pi": coord,
            "learned": list(groups[k]),
            "aligned": pi_coordinate_check(M, report.partition.blocks[k], coord, pi_tol, groups[k]),
        })
    out["pi_checks"] = pis
    if z is not None and zt is not None:
        recovered = delta_support_oracle(z, zt, oracle_tol)
        out["recovered_family"] = [list(s) for s in recovered]
        out["oracle_verdict"] = "MATCH" if recovered == report.nd_family else "MISMATCH"
        same = sigma_atoms(dag.n, recovered) == report.partition
        out["partition_verdict"] = "MATCH" if same else "MISMATCH"
    return out
