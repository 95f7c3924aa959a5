"""Communication matrices: learners replace ``f`` by ``A f`` before a step.

``A`` minimizes ``sum_z ||A f(z) - f*(z)||^2 + ridge * ||A - I||_F^2`` over
the shared grid.  The ridge term pulls toward the identity, so ``A = I``
whenever the learners already match the target.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CommSolveError, InputError
from .kernels import VectorValuedFunction, _check_matching

MODES = ("never", "at-start-only", "every-k", "while-far")
SOLVERS = ("closed-form", "iterative")


@dataclass(frozen=True, eq=False)
class CommMatrix:
    entries: np.ndarray

    def __post_init__(self):
        a = np.array(self.entries, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise InputError("communication matrix must be square")
        if not np.all(np.isfinite(a)):
            raise InputError("communication matrix entries must be finite")
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)

    @classmethod
    def identity(cls, d: int) -> "CommMatrix":
        return cls(np.eye(d))

    @property
    def d(self) -> int:
        return self.entries.shape[0]

    @property
    def identity_distance(self) -> float:
        return float(np.max(np.abs(self.entries - np.eye(self.d))))

    def is_identity(self) -> bool:
        return self.identity_distance == 0.0


@dataclass(frozen=True)
class CommPolicy:
    """When and how the teacher solves for ``A``.

    ``far_threshold`` is the disagreement above which the while-far mode
    communicates; ``solver_tol`` and ``max_steps`` bound the iterative
    solver.
    """

    mode: str = "while-far"
    k: int = 1
    far_threshold: float = 1e-2
    solver: str = "closed-form"
    max_steps: int = 500
    solver_tol: float = 1e-3
    ridge: float = 1e-8
    row_sum_one: bool = False

    def __post_init__(self):
        if self.mode not in MODES:
            raise InputError(f"unknown communication mode {self.mode!r}; expected one of {MODES}")
        if self.solver not in SOLVERS:
            raise InputError(f"unknown solver {self.solver!r}; expected one of {SOLVERS}")
        if self.k < 1 or self.max_steps < 1:
            raise InputError("k and max_steps must be positive")
        if self.far_threshold <= 0 or self.solver_tol <= 0:
            raise InputError("thresholds must be positive")
        if self.ridge < 0:
            raise InputError("ridge must be non-negative")


NEVER = CommPolicy(mode="never")


def should_communicate(t: int, disagreement: float, policy: CommPolicy) -> bool:
    if policy.mode == "never":
        return False
    if policy.mode == "at-start-only":
        return t == 0
    if policy.mode == "every-k":
        return t % policy.k == 0
    return disagreement > policy.far_threshold


def solve_rows(F: np.ndarray, T: np.ndarray, policy: CommPolicy) -> np.ndarray:
    """Array form of :func:`solve_comm_matrix`: F and T are (d, n)."""
    d, n = F.shape
    if T.shape != F.shape:
        raise InputError(f"shape mismatch {F.shape} vs {T.shape}")
    eye = np.eye(d)
    if policy.solver == "iterative":
        return _solve_iterative(F, T, policy)
    if np.array_equal(F, T):
        return eye
    return _closed_form(F, T, policy.ridge, policy.row_sum_one)


def _closed_form(F, T, ridge, row_sum_one):
    d, n = F.shape
    eye = np.eye(d)
    if ridge == 0.0 and np.linalg.matrix_rank(F) < d:
        raise CommSolveError(
            "sample matrix is rank deficient; use ridge > 0 to select a unique matrix"
        )
    if not row_sum_one:
        s = np.sqrt(ridge)
        X = np.vstack([F.T, s * eye])
        Y = np.vstack([T.T, s * eye])
        sol, *_ = np.linalg.lstsq(X, Y, rcond=None)
        return sol.T
    # rows constrained to sum to one: KKT system per row, shared left side
    H = F @ F.T + ridge * eye
    kkt = np.zeros((d + 1, d + 1))
    kkt[:d, :d] = H
    kkt[:d, d] = 1.0
    kkt[d, :d] = 1.0
    rhs = np.vstack([F @ T.T + ridge * eye, np.ones((1, d))])
    try:
        sol = np.linalg.solve(kkt, rhs)
    except np.linalg.LinAlgError as exc:
        raise CommSolveError(f"constrained solve failed: {exc}; use ridge > 0") from exc
    return sol[:d].T


def _solve_iterative(F, T, policy):
    d, n = F.shape
    A = np.eye(d)
    total = d * n

    def metric(A):
        r = A @ F - T
        return np.sqrt(np.sum(r * r)) / total

    # accept the identity outright when learners are already close enough
    if metric(A) < policy.solver_tol:
        return A
    lip = 2.0 * (np.linalg.eigvalsh(F @ F.T)[-1] + policy.ridge)
    if lip == 0.0:
        return A
    step = 1.0 / lip
    eye = np.eye(d)
    for _ in range(policy.max_steps):
        grad = 2.0 * (A @ F - T) @ F.T + 2.0 * policy.ridge * (A - eye)
        if policy.row_sum_one:
            grad = grad - grad.mean(axis=1, keepdims=True)
        A = A - step * grad
        if metric(A) < policy.solver_tol:
            break
    return A


def solve_comm_matrix(
    vf: VectorValuedFunction, target: VectorValuedFunction, policy: CommPolicy = CommPolicy()
) -> CommMatrix:
    _check_matching(vf, target)
    return CommMatrix(solve_rows(vf.stack(), target.stack(), policy))


def apply_comm(vf: VectorValuedFunction, A) -> VectorValuedFunction:
    a = A.entries if isinstance(A, CommMatrix) else np.asarray(A, dtype=np.float64)
    if a.shape != (vf.d, vf.d):
        raise InputError(f"matrix shape {a.shape} does not match d={vf.d}")
    grid = vf.shared_grid()
    return VectorValuedFunction.on_grid(grid, a @ vf.stack())


def grid_loss(F: np.ndarray, T: np.ndarray, weights=None) -> float:
    """Weighted square loss averaged over every grid sample of every learner."""
    r = F - T
    per = np.sum(r * r, axis=1)
    if weights is not None:
        per = per * np.asarray(weights, dtype=np.float64)
    return float(np.sum(per)) / r.size


def comm_gain(
    vf: VectorValuedFunction, target: VectorValuedFunction, A, lipschitz: float = 2.0
) -> tuple[float, float]:
    """Loss reduction from communicating and its upper bound.

    The loss is the per-sample mean square loss over the full grid and the
    distance is the root-mean-square residual ``M * sqrt(d n)``, so
    ``gain <= rms**2 <= 2 * lipschitz * rms`` whenever ``rms <= 2 * lipschitz``.
    """
    _check_matching(vf, target)
    a = A.entries if isinstance(A, CommMatrix) else np.asarray(A, dtype=np.float64)
    F, T = vf.stack(), target.stack()
    return gain_and_bound(F, a @ F, T, lipschitz)


def gain_and_bound(F, AF, T, lipschitz=2.0):
    r, ra = F - T, AF - T
    gain = float(np.sum((r - ra) * (r + ra))) / r.size
    rms = float(np.sqrt(np.sum(r * r) / r.size))
    return gain, 2.0 * lipschitz * rms


def ridge_slack(A, ridge: float, total: int) -> float:
    """How far below zero a ridge-regularized gain may fall.

    The ridge penalty ``ridge * ||A - I||^2`` expressed per sample, plus a
    floating-point floor for gains that are zero in exact arithmetic.
    """
    a = A.entries if isinstance(A, CommMatrix) else np.asarray(A, dtype=np.float64)
    dist = float(np.sum((a - np.eye(a.shape[0])) ** 2))
    return ridge * dist / total + 1e-12
