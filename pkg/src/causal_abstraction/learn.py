"""Relaxed maximum-likelihood fitting of ``(Q, A, target weights)`` from
counterfactual pairs.

Under target ``S`` the exact pair density is supported on the manifold
``((I - A) z_tilde)_j = ((I - A) z)_j`` for ``j`` outside ``S``. The relaxation
replaces that constraint with a N(0, sigma^2) slack on the residual and anneals
sigma towards zero. Rotations are parametrized through the Cayley transform of
a skew-symmetric matrix.
"""
from __future__ import annotations

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from itertools import combinations

import numpy as np
from scipy.linalg import expm
from scipy.optimize import minimize
from scipy.special import logsumexp

from .errors import ConfigError, EmptyInput, OptimizationError
from .graph import VertexSet

log = logging.getLogger(__name__)

LOG_2PI = np.log(2.0 * np.pi)
MAX_CANDIDATE_NODES = 10


def cayley(K: np.ndarray) -> np.ndarray:
    """Rotation ``(I - K)(I + K)^{-1}`` for skew-symmetric ``K``."""
    eye = np.eye(len(K))
    return np.linalg.solve((eye + K).T, (eye - K).T).T


def acyclicity_penalty(A: np.ndarray) -> float:
    """``trace(exp(A * A)) - n``; zero iff the weighted graph of ``A`` has no cycle."""
    A = np.asarray(A, dtype=float)
    return float(np.trace(expm(A * A)) - len(A))


def acyclicity_grad(A: np.ndarray) -> np.ndarray:
    return expm(A * A).T * 2.0 * A


def all_targets(n: int) -> list[VertexSet]:
    """Every nonempty subset of 1..n, by size then lexicographically."""
    if n > MAX_CANDIDATE_NODES:
        raise ConfigError(f"all-subsets candidate family refused for n={n} > {MAX_CANDIDATE_NODES}")
    return [c for k in range(1, n + 1) for c in combinations(range(1, n + 1), k)]


def target_masks(n: int, targets: list[VertexSet]) -> np.ndarray:
    masks = np.zeros((len(targets), n))
    for k, t in enumerate(targets):
        masks[k, [v - 1 for v in t]] = 1.0
    return masks


@dataclass
class FitParams:
    """Unconstrained optimization state.

    ``K`` is skew-symmetric (only its strict upper triangle is free), ``A``
    has a zero diagonal, one logit per candidate target.
    """

    K: np.ndarray
    A: np.ndarray
    logits: np.ndarray

    @property
    def n(self) -> int:
        return len(self.A)

    @property
    def Q(self) -> np.ndarray:
        return cayley(self.K)

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.logits - logsumexp(self.logits))

    def to_vector(self) -> np.ndarray:
        n = self.n
        iu = np.triu_indices(n, 1)
        off = ~np.eye(n, dtype=bool)
        return np.concatenate([self.K[iu], self.A[off], self.logits])

    @classmethod
    def from_vector(cls, v: np.ndarray, n: int) -> FitParams:
        iu = np.triu_indices(n, 1)
        off = ~np.eye(n, dtype=bool)
        nk, na = len(iu[0]), n * (n - 1)
        K = np.zeros((n, n))
        K[iu] = v[:nk]
        K = K - K.T
        A = np.zeros((n, n))
        A[off] = v[nk:nk + na]
        return cls(K, A, np.array(v[nk + na:], dtype=float))

    @staticmethod
    def grad_to_vector(gK: np.ndarray, gA: np.ndarray, glogits: np.ndarray) -> np.ndarray:
        n = len(gA)
        iu = np.triu_indices(n, 1)
        off = ~np.eye(n, dtype=bool)
        # K = U - U^T with U strictly upper
        return np.concatenate([(gK - gK.T)[iu], gA[off], glogits])


def relaxed_loglik(params: FitParams, x: np.ndarray, xt: np.ndarray, sigma: float,
                   masks: np.ndarray, grad: bool = False):
    """Mean relaxed log-likelihood of pairs ``(x, xt)``.

    Per row, log-sum-exp over candidates ``S`` of::

        log w_S + log N(eps; 0, I) + log|det(I - A)|
                + log N(zt_S; 0, I) + sum_{j not in S} log N(r_j; 0, sigma^2)

    with ``z = Q^T x``, ``zt = Q^T xt``, ``eps = (I - A) z`` and
    ``r = (I - A)(zt - z)``. With ``grad=True`` returns ``(value, (dK, dA, dlogits))``
    where ``dK`` is the gradient with respect to the full matrix ``K``.
    """
    if sigma <= 0:
        raise ConfigError("slack sigma must be positive")
    if len(x) == 0:
        raise EmptyInput("empty batch")
    n = params.n
    m = len(x)
    eye = np.eye(n)
    Q = params.Q
    B = eye - params.A
    Z = x @ Q
    Zt = xt @ Q
    E = Z @ B.T
    D = Zt - Z
    R = D @ B.T
    sign, logdet = np.linalg.slogdet(B)

    logw = params.logits - logsumexp(params.logits)
    base = -0.5 * np.sum(E * E, axis=1) - 0.5 * n * LOG_2PI + logdet
    inside = -0.5 * Zt * Zt
    outside = -0.5 * (R * R) / sigma**2 - np.log(sigma)
    # every node contributes -log(2 pi)/2 whichever side of S it falls on
    base += outside.sum(axis=1) - 0.5 * n * LOG_2PI
    # candidates along axis 0 keeps the reductions contiguous
    L = masks @ (inside - outside).T
    L += (base[None, :] + logw[:, None])
    top = L.max(axis=0)
    L -= top
    np.exp(L, out=L)
    total = L.sum(axis=0)
    ll = top + np.log(total)
    value = float(np.mean(ll))
    if not grad:
        return value

    gamma = L
    gamma /= total
    P = (gamma.T @ masks)
    g_logits = gamma.mean(axis=1) - np.exp(logw)

    gR = -(1.0 - P) * R / sigma**2
    gD = gR @ B
    gZ = -E @ B - gD
    gZt = gD - P * Zt
    gB = (-E.T @ Z + gR.T @ D) / m + np.linalg.inv(B).T
    gA = -gB
    np.fill_diagonal(gA, 0.0)

    gQ = (x.T @ gZ + xt.T @ gZt) / m
    Minv = np.linalg.inv(eye + params.K)
    gK = -(eye + Q).T @ gQ @ Minv.T
    return value, (gK, gA, g_logits)


@dataclass
class FitConfig:
    candidates: list[VertexSet] | None = None
    stages: int = 10
    steps: int = 100
    optimizer: str = "lbfgs"
    step_size: float = 0.05
    sigma_start: float = 0.5
    sigma_end: float = 0.01
    lam_start: float = 0.0
    lam_end: float = 10.0
    restarts: int = 10
    batch_size: int = 0
    seed: int = 0
    tol: float = 1e-7
    init_scale: float = 0.1
    workers: int = 1

    def validate(self) -> None:
        for name in ("stages", "steps", "restarts"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        for name in ("step_size", "sigma_start", "sigma_end", "tol", "init_scale"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be > 0")
        if self.sigma_end > self.sigma_start:
            raise ConfigError("slack schedule must be non-increasing")
        if self.lam_start < 0 or self.lam_end < self.lam_start:
            raise ConfigError("penalty schedule must be nonnegative and non-decreasing")
        if self.batch_size < 0 or self.workers < 1:
            raise ConfigError("batch_size must be >= 0 and workers >= 1")
        if self.optimizer not in ("lbfgs", "gd"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}; use 'lbfgs' or 'gd'")
        if self.optimizer == "lbfgs" and self.batch_size:
            raise ConfigError("mini-batches need optimizer='gd'")
        if self.candidates is not None and not self.candidates:
            raise ConfigError("candidate family is empty")

    def sigmas(self) -> np.ndarray:
        return np.geomspace(self.sigma_start, self.sigma_end, self.stages)

    def lambdas(self) -> np.ndarray:
        return np.linspace(self.lam_start, self.lam_end, self.stages)

    def to_json(self) -> dict:
        d = asdict(self)
        if self.candidates is not None:
            d["candidates"] = [list(c) for c in self.candidates]
        return d

    @classmethod
    def from_json(cls, d: dict) -> FitConfig:
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        d = dict(d)
        if d.get("candidates") is not None:
            d["candidates"] = [tuple(sorted(c)) for c in d["candidates"]]
        return cls(**d)


@dataclass
class RestartResult:
    restart: int
    params: FitParams | None
    objective: float
    stage_objectives: list[float] = field(default_factory=list)
    traces: list[list[float]] = field(default_factory=list)
    status: str = "ok"


@dataclass
class FitResult:
    Q: np.ndarray
    A: np.ndarray
    candidates: list[VertexSet]
    weights: np.ndarray
    objective: float
    stage_objectives: list[float]
    traces: list[list[float]]
    best_restart: int
    restart_objectives: list[float]
    restart_status: list[str]
    wall_clock: float
    config: FitConfig

    def sparse_weights(self, floor: float = 1e-4) -> list[dict]:
        return [{"target": list(t), "weight": float(w)}
                for t, w in zip(self.candidates, self.weights) if w > floor]


def _objective(v: np.ndarray, n: int, x, xt, sigma, lam, masks, grad: bool):
    params = FitParams.from_vector(v, n)
    if not grad:
        return relaxed_loglik(params, x, xt, sigma, masks) - lam * acyclicity_penalty(params.A)
    val, (gK, gA, gl) = relaxed_loglik(params, x, xt, sigma, masks, grad=True)
    val -= lam * acyclicity_penalty(params.A)
    gA = gA - lam * acyclicity_grad(params.A)
    np.fill_diagonal(gA, 0.0)
    return val, FitParams.grad_to_vector(gK, gA, gl)


def _ascend_gd(v, n, x, xt, sigma, lam, masks, config: FitConfig, rng, trace):
    """Gradient ascent with halving backtracking and mild step growth."""
    step = config.step_size
    full = config.batch_size == 0 or config.batch_size >= len(x)
    val = None
    for _ in range(config.steps):
        if full:
            bx, bxt = x, xt
        else:
            idx = rng.choice(len(x), config.batch_size, replace=False)
            bx, bxt = x[idx], xt[idx]
        val, g = _objective(v, n, bx, bxt, sigma, lam, masks, grad=True)
        if not np.isfinite(val):
            raise FloatingPointError("non-finite objective")
        if not np.any(g):
            break
        while True:
            cand = v + step * g
            new = _objective(cand, n, bx, bxt, sigma, lam, masks, grad=False)
            if np.isfinite(new) and new >= val:
                break
            step *= 0.5
            if step < 1e-14:
                return v, val
        change = abs(new - val) / max(1.0, abs(val))
        v, val = cand, new
        trace.append(float(val))
        step *= 1.5
        if change < config.tol:
            break
    return v, val


def _ascend_lbfgs(v, n, x, xt, sigma, lam, masks, config: FitConfig, trace):
    """Limited-memory BFGS; its line search only accepts improving iterates."""

    def negated(w):
        val, g = _objective(w, n, x, xt, sigma, lam, masks, grad=True)
        if not np.isfinite(val):
            raise FloatingPointError("non-finite objective")
        return -val, -g

    def record(intermediate_result):
        trace.append(-float(intermediate_result.fun))

    res = minimize(negated, v, jac=True, method="L-BFGS-B", callback=record,
                   options={"maxiter": config.steps, "ftol": config.tol, "gtol": 1e-9})
    return res.x, -float(res.fun)


def _run_restart(args) -> RestartResult:
    restart, x, xt, masks, config = args
    n = x.shape[1]
    rng = np.random.default_rng([config.seed, restart])
    U = np.triu(rng.normal(0.0, config.init_scale, (n, n)), 1)
    params = FitParams(U - U.T, np.zeros((n, n)), np.zeros(len(masks)))
    v = params.to_vector()
    stage_objs: list[float] = []
    traces: list[list[float]] = []
    try:
        for sigma, lam in zip(config.sigmas(), config.lambdas()):
            trace: list[float] = []
            if config.optimizer == "lbfgs":
                v, val = _ascend_lbfgs(v, n, x, xt, sigma, lam, masks, config, trace)
            else:
                v, val = _ascend_gd(v, n, x, xt, sigma, lam, masks, config, rng, trace)
            stage_objs.append(float(val))
            traces.append(trace)
        final = _objective(v, n, x, xt, config.sigmas()[-1], config.lambdas()[-1], masks, grad=False)
        if not np.isfinite(final):
            raise FloatingPointError("non-finite objective")
    except (FloatingPointError, np.linalg.LinAlgError) as exc:
        log.warning("restart %d aborted: %s", restart, exc)
        return RestartResult(restart, None, float("-inf"), stage_objs, traces, status=f"aborted: {exc}")
    return RestartResult(restart, FitParams.from_vector(v, n), float(final), stage_objs, traces)


def fit(x: np.ndarray, xt: np.ndarray, config: FitConfig | None = None) -> FitResult:
    """Best-of-restarts relaxed maximum likelihood. Intervention labels are never used."""
    config = config or FitConfig()
    config.validate()
    x = np.asarray(x, dtype=float)
    xt = np.asarray(xt, dtype=float)
    if x.ndim != 2 or len(x) == 0 or x.shape != xt.shape:
        raise EmptyInput("dataset must be a nonempty (rows, n) pair of equal shape")
    n = x.shape[1]
    candidates = list(config.candidates) if config.candidates is not None else all_targets(n)
    masks = target_masks(n, candidates)

    t0 = time.perf_counter()
    jobs = [(r, x, xt, masks, config) for r in range(config.restarts)]
    if config.workers > 1:
        with ProcessPoolExecutor(config.workers) as pool:
            results = list(pool.map(_run_restart, jobs))
    else:
        results = [_run_restart(j) for j in jobs]
    # ties go to the lowest restart index
    best = max(results, key=lambda r: (r.objective, -r.restart))
    if best.params is None:
        raise OptimizationError("all restarts diverged: " + "; ".join(r.status for r in results))
    return FitResult(
        Q=best.params.Q,
        A=best.params.A,
        candidates=candidates,
        weights=best.params.weights,
        objective=best.objective,
        stage_objectives=best.stage_objectives,
        traces=best.traces,
        best_restart=best.restart,
        restart_objectives=[r.objective for r in results],
        restart_status=[r.status for r in results],
        wall_clock=time.perf_counter() - t0,
        config=config,
    )
