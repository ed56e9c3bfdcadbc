"""Linear Gaussian SCM simulation with perfect interventions and rotation
mixing, producing counterfactual observation pairs ``(x, x_tilde)``.

Coefficient convention: ``A[i-1, j-1]`` is the weight of edge ``j -> i``, so
``z = A z + eps`` and ``z = (I - A)^{-1} eps``.
"""
from __future__ import annotations

from collections.abc import Iterable, Sequence
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, EmptyInput, EmptyTarget, RangeError, SingularMatrix, ValidationError
from .graph import Dag, VertexSet, vset

COEF_MEANS = (-1.0, 1.0)
COEF_STD = 0.25

# stream ids for counter-based seeding
_STREAM_NOISE = 0
_STREAM_TARGET = 1
_STREAM_FRESH = 2


@dataclass(frozen=True, eq=False)
class LinearGaussianScm:
    dag: Dag
    A: np.ndarray

    def __post_init__(self) -> None:
        A = np.array(self.A, dtype=float)
        n = self.dag.n
        if A.shape != (n, n):
            raise DimensionMismatch(f"coefficient matrix has shape {A.shape}, expected {(n, n)}")
        if not np.all(np.isfinite(A)):
            raise ValidationError("coefficient matrix has non-finite entries")
        support = np.zeros((n, n), dtype=bool)
        for j, i in self.dag.edges:
            support[i - 1, j - 1] = True
        stray = np.argwhere((A != 0) & ~support)
        if len(stray):
            i, j = stray[0] + 1
            raise ValidationError(f"A[{i},{j}] is nonzero but {j}->{i} is not an edge")
        A.setflags(write=False)
        object.__setattr__(self, "A", A)

    @property
    def n(self) -> int:
        return self.dag.n


@dataclass(frozen=True, eq=False)
class InterventionModel:
    """Target family with selection probabilities.

    Intervened nodes get fresh standard normal values (identity mechanism).
    """

    targets: tuple[VertexSet, ...]
    weights: np.ndarray

    @classmethod
    def build(cls, targets: Iterable[Iterable[int]], weights: Sequence[float] | None = None,
              n: int | None = None) -> InterventionModel:
        ts: list[VertexSet] = []
        for t in targets:
            t = vset(t)
            if not t:
                raise EmptyTarget("intervention targets must be nonempty")
            if n is not None and not all(1 <= v <= n for v in t):
                raise RangeError(f"target {list(t)} outside 1..{n}")
            if t in ts:
                raise ValidationError(f"target {list(t)} listed twice")
            ts.append(t)
        if not ts:
            raise EmptyTarget("target family is empty")
        if weights is None:
            w = np.full(len(ts), 1.0 / len(ts))
        else:
            w = np.asarray(weights, dtype=float)
            if w.shape != (len(ts),):
                raise DimensionMismatch(f"{len(w)} weights for {len(ts)} targets")
            if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-9:
                raise ValidationError("weights must be positive and sum to 1")
        return cls(tuple(ts), w)


@dataclass(frozen=True, eq=False)
class MixingModel:
    Q: np.ndarray


@dataclass(eq=False)
class CounterfactualDataset:
    """Observed pairs plus the ground truth that generated them.

    ``z``/``zt`` hold the exact simulated latents when the dataset comes from
    :func:`sample_pairs`; they are never written to the observation CSV.
    """

    x: np.ndarray
    xt: np.ndarray
    seed: int | None = None
    scm: LinearGaussianScm | None = None
    mixing: MixingModel | None = None
    interventions: InterventionModel | None = None
    labels: np.ndarray | None = None
    z: np.ndarray | None = None
    zt: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.x)

    @property
    def n(self) -> int:
        return self.x.shape[1]


def sample_scm(dag: Dag, seed: int | np.random.Generator | None = None) -> LinearGaussianScm:
    """Draw edge weights from an equal mixture of N(-1, 0.25^2) and N(+1, 0.25^2)."""
    rng = np.random.default_rng(seed)
    A = np.zeros((dag.n, dag.n))
    for j, i in dag.sorted_edges():
        A[i - 1, j - 1] = rng.choice(COEF_MEANS) + COEF_STD * rng.standard_normal()
    return LinearGaussianScm(dag, A)


def latent_covariance(scm: LinearGaussianScm) -> np.ndarray:
    """Covariance ``(I - A)^{-1} (I - A)^{-T}`` of the unintervened latents."""
    B = np.eye(scm.n) - scm.A
    try:
        L = np.linalg.inv(B)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrix("I - A is singular") from exc
    return L @ L.T


def sample_rotation(n: int, seed: int | np.random.Generator | None = None) -> MixingModel:
    """Haar-uniform element of SO(n) from the QR factorization of a Gaussian matrix."""
    if n < 1:
        raise RangeError("dimension must be >= 1")
    rng = np.random.default_rng(seed)
    Q, R = np.linalg.qr(rng.standard_normal((n, n)))
    Q = Q * np.where(np.diag(R) < 0, -1.0, 1.0)
    if np.linalg.det(Q) < 0:
        Q[:, 0] = -Q[:, 0]
    return MixingModel(Q)


class _CounterStream:
    """Philox stream keyed by ``(seed, stream)``; row ``r`` starts at counter block ``r``.

    Repositioning one bit generator is equivalent to, and much cheaper than,
    constructing ``Philox(key=key, counter=[0, 0, r, 0])`` per row.
    """

    def __init__(self, seed: int, stream: int) -> None:
        self.key = np.random.SeedSequence([seed, stream]).generate_state(2, np.uint64)
        self.bitgen = np.random.Philox(key=self.key)
        self.gen = np.random.Generator(self.bitgen)
        self._state = self.bitgen.state

    def at(self, row: int) -> np.random.Generator:
        st = self._state
        st["state"]["counter"] = np.array([0, 0, row, 0], dtype=np.uint64)
        st["buffer_pos"] = 4
        st["has_uint32"] = 0
        st["uinteger"] = 0
        self.bitgen.state = st
        return self.gen


def draw_rows(seed: int, n: int, rows: range, weights: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Exogenous noise, target indices and fresh noise for the given rows.

    Each row's draws depend only on ``(seed, row, stream)``, so any split of
    the row range across workers reproduces the same values.
    """
    noise, target, fresh_s = (_CounterStream(seed, s) for s in (_STREAM_NOISE, _STREAM_TARGET, _STREAM_FRESH))
    cum = np.cumsum(weights)
    cum[-1] = 1.0
    m = len(rows)
    eps = np.empty((m, n))
    fresh = np.empty((m, n))
    u = np.empty(m)
    for k, r in enumerate(rows):
        eps[k] = noise.at(r).standard_normal(n)
        u[k] = target.at(r).random()
        fresh[k] = fresh_s.at(r).standard_normal(n)
    iota = np.searchsorted(cum, u, side="right").astype(np.int64)
    return eps, iota, fresh


def _propagate(scm: LinearGaussianScm, eps: np.ndarray, fresh: np.ndarray | None = None,
               mask: np.ndarray | None = None) -> np.ndarray:
    """Apply mechanisms in topological order.

    Where ``mask`` is set, the node takes its ``fresh`` value instead of its
    mechanism output. Sums run over parents only and in a fixed order, so
    nodes whose ancestry is unaffected come out bitwise identical.
    """
    z = np.zeros_like(eps)
    parents = scm.dag.parents
    for v in scm.dag.order:
        i = v - 1
        acc = np.zeros(len(eps))
        for p in parents[v]:
            acc = acc + scm.A[i, p - 1] * z[:, p - 1]
        val = acc + eps[:, i]
        if mask is not None:
            val = np.where(mask[:, i], fresh[:, i], val)
        z[:, i] = val
    return z


def sample_pairs(scm: LinearGaussianScm, interventions: InterventionModel, mixing: MixingModel,
                 count: int, seed: int, keep_labels: bool = False) -> CounterfactualDataset:
    """Simulate ``count`` counterfactual pairs.

    Per row: ``z`` from the SCM; a target ``S`` drawn by weight; nodes in ``S``
    reset to fresh N(0, 1) noise, every other node re-runs its mechanism with
    its original exogenous noise; both latents are mixed by ``Q``.
    """
    n = scm.n
    if count < 1:
        raise EmptyInput("EmptyDataset: sample count must be >= 1")
    if mixing.Q.shape != (n, n):
        raise DimensionMismatch(f"mixing is {mixing.Q.shape}, SCM has {n} nodes")
    for t in interventions.targets:
        if not all(1 <= v <= n for v in t):
            raise RangeError(f"target {list(t)} outside 1..{n}")

    eps, iota, fresh = draw_rows(seed, n, range(count), interventions.weights)
    masks = np.zeros((len(interventions.targets), n), dtype=bool)
    for k, t in enumerate(interventions.targets):
        masks[k, [v - 1 for v in t]] = True

    z = _propagate(scm, eps)
    zt = _propagate(scm, eps, fresh, masks[iota])
    return CounterfactualDataset(
        x=z @ mixing.Q.T,
        xt=zt @ mixing.Q.T,
        seed=seed,
        scm=scm,
        mixing=mixing,
        interventions=interventions,
        labels=iota if keep_labels else None,
        z=z,
        zt=zt,
    )


def latents(dataset: CounterfactualDataset, Q: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Unmix observations with ``Q^T`` (ground truth unless ``Q`` is given)."""
    if Q is None:
        if dataset.mixing is None:
            raise ValidationError("dataset carries no mixing matrix")
        Q = dataset.mixing.Q
    return dataset.x @ Q, dataset.xt @ Q
