"""Multi-learner functional teaching: loss, example selection and the loop.

Each learner ``i`` holds ``f_i`` on its own grid.  Per iteration the teacher
(optionally) hands out a communication matrix, picks one example per
learner (greedily or at random), and every learner takes one functional
gradient step ``f_i <- g_i - eta_i * dL_i/df|_(g_i(x_i), y_i) * K(x_i, .)``
where ``g = A f``.
"""
from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import _backend
from .communication import NEVER, CommPolicy, grid_loss, should_communicate, solve_rows
from .errors import InputError
from .kernels import (
    Grid,
    KernelAtom,
    KernelSpec,
    SampledFunction,
    VectorValuedFunction,
    _check_matching,
    apply_atom,
)
from .metrics import psnr_from_mse

STRATEGIES = ("gft", "rft")
STOP_RULES = ("joint", "every")


@dataclass(frozen=True)
class LossSpec:
    """Per-learner square loss ``(y - f(x))^2`` with optional learner weights."""

    kind: str = "square"
    lipschitz: float = 2.0
    weights: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.kind != "square":
            raise InputError(f"unsupported loss {self.kind!r}")
        if not self.lipschitz > 0:
            raise InputError("lipschitz constant must be positive")
        if self.weights is not None:
            w = tuple(float(x) for x in self.weights)
            if any(not math.isfinite(x) or x < 0 for x in w):
                raise InputError("weights must be finite and non-negative")
            object.__setattr__(self, "weights", w)

    def weight(self, i: int) -> float:
        return 1.0 if self.weights is None else self.weights[i]


SQUARE = LossSpec()


def loss_value_and_grad(prediction: float, y: float) -> tuple[float, float]:
    r = prediction - y
    return r * r, 2.0 * r


@dataclass(frozen=True)
class TeachingExample:
    learner_index: int
    x: tuple[float, ...]
    y: float

    def __post_init__(self):
        object.__setattr__(self, "x", tuple(float(c) for c in np.asarray(self.x).reshape(-1)))


@dataclass(frozen=True)
class StepSizes:
    etas: tuple[float, ...]

    def __post_init__(self):
        etas = tuple(float(e) for e in self.etas)
        if not etas or any(not math.isfinite(e) or e < 0 for e in etas):
            raise InputError("step sizes must be finite and non-negative")
        object.__setattr__(self, "etas", etas)

    @classmethod
    def uniform(cls, eta: float, d: int) -> "StepSizes":
        return cls((eta,) * d)

    def descent_limit(self, loss: LossSpec = SQUARE, kernel: KernelSpec = KernelSpec()) -> float:
        return 1.0 / (2.0 * loss.lipschitz * kernel.kernel_bound)

    def check_descent(self, loss: LossSpec = SQUARE, kernel: KernelSpec = KernelSpec()) -> bool:
        """Warn and return False if any step exceeds ``1 / (2 L M_K)``."""
        limit = self.descent_limit(loss, kernel)
        bad = [e for e in self.etas if e > limit]
        if bad:
            warnings.warn(
                f"step sizes {bad} exceed {limit:g}; per-iteration descent is not guaranteed",
                stacklevel=2,
            )
            return False
        return True


@dataclass(frozen=True)
class SamplingDistribution:
    """Where a random teacher draws examples from, per learner.

    ``kind='gaussian'`` draws around ``means[i]`` with ``stds[i]``; draws
    outside the grid's bounding box are redrawn (then clipped after 100
    attempts) and snapped to the nearest grid point.
    """

    kind: str = "uniform"
    means: tuple[float, ...] = ()
    stds: tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind not in ("uniform", "gaussian"):
            raise InputError(f"unknown sampling kind {self.kind!r}")
        if self.kind == "gaussian":
            if not self.means or len(self.means) != len(self.stds):
                raise InputError("gaussian sampling needs one mean and std per learner")
            if any(s <= 0 for s in self.stds):
                raise InputError("sampling stds must be positive")

    @classmethod
    def gaussian(cls, mean: float, std: float, d: int = 1) -> "SamplingDistribution":
        return cls("gaussian", (float(mean),) * d, (float(std),) * d)

    def draw_index(self, grid: Grid, i: int, rng: np.random.Generator) -> int:
        n = grid.size
        if self.kind == "uniform":
            return int(rng.integers(n))
        mu, sd = self.means[i % len(self.means)], self.stds[i % len(self.stds)]
        lo, hi = grid.coords.min(axis=0), grid.coords.max(axis=0)
        for _ in range(100):
            x = rng.normal(mu, sd, size=grid.dim)
            if np.all(x >= lo) and np.all(x <= hi):
                break
        else:
            x = np.clip(x, lo, hi)
        return _nearest(grid, x)


def _nearest(grid: Grid, x) -> int:
    d2 = np.sum((grid.coords - x) ** 2, axis=1)
    return int(np.argmin(d2))


@dataclass(frozen=True)
class TeachingRound:
    examples: tuple[TeachingExample, ...]
    step_sizes: StepSizes
    comm_matrix: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "examples", tuple(self.examples))
        if len(self.step_sizes.etas) != len(self.examples):
            raise InputError("need one step size per example")
        for i, ex in enumerate(self.examples):
            if ex.learner_index != i:
                raise InputError("exactly one example per learner, in learner order")


@dataclass(frozen=True)
class TraceRecord:
    """State ``f^t`` before update ``t`` and what the teacher did with it.

    ``loss`` is the per-sample mean square loss over the full grid.  The
    ``ex_loss_*`` fields evaluate the round's examples at ``f^t``, ``A f^t``
    and ``f^{t+1}``; ``loss_comm``/``loss_next`` are full-grid losses of
    ``A f^t`` and ``f^{t+1}``.  ``selected`` holds grid indices (-1 for an
    idle learner).
    """

    iteration: int
    loss: float
    disagreement: float
    psnr: float
    selected: tuple[int, ...]
    comm_applied: bool = False
    residuals: tuple[float, ...] = ()
    component_sq: tuple[float, ...] = ()
    loss_comm: float | None = None
    loss_next: float | None = None
    ex_loss_pre: float | None = None
    ex_loss_comm: float | None = None
    ex_loss_post: float | None = None
    comm_bound: float | None = None
    comm_slack: float | None = None
    mu_distance: float | None = None
    wall_time: float = 0.0
    status: str = "ok"


@dataclass
class TeachingRun:
    trace: list[TraceRecord]
    final: VectorValuedFunction
    final_loss: float
    final_disagreement: float
    final_psnr: float
    final_component_sq: tuple[float, ...]
    converged: bool
    aborted: bool = False
    matrices: dict[int, np.ndarray] = field(default_factory=dict)
    snapshots: dict[int, VectorValuedFunction] = field(default_factory=dict)

    @property
    def iterations(self) -> int:
        return len(self.trace)

    def at(self, t: int, attr: str) -> float:
        """``attr`` of the state after ``t`` updates (final state past the end)."""
        if t < len(self.trace):
            return getattr(self.trace[t], attr)
        return getattr(self, "final_" + attr)


@dataclass(frozen=True)
class TeachingConfig:
    max_iter: int = 1000
    epsilon: float = 1e-3
    etas: float | tuple[float, ...] = 0.1
    seed: int = 0
    kernel: KernelSpec = KernelSpec()
    loss: LossSpec = SQUARE
    sampling: SamplingDistribution = SamplingDistribution()
    stop_rule: str = "joint"
    max_signal: float = 1.0
    reference_means: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.max_iter < 0:
            raise InputError("max_iter must be non-negative")
        if not self.epsilon > 0:
            raise InputError("epsilon must be positive")
        if self.stop_rule not in STOP_RULES:
            raise InputError(f"stop_rule must be one of {STOP_RULES}")

    def step_sizes(self, d: int) -> StepSizes:
        if isinstance(self.etas, (int, float)):
            return StepSizes.uniform(float(self.etas), d)
        if len(self.etas) != d:
            raise InputError(f"{len(self.etas)} step sizes for {d} learners")
        return StepSizes(tuple(self.etas))


def learner_rng(seed: int, learner: int) -> np.random.Generator:
    """Independent stream for one learner; does not depend on how many learners exist."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(learner,)))


# --- single-round operations -------------------------------------------------


def _check_round(vf: VectorValuedFunction, examples: Sequence[TeachingExample]):
    if len(examples) != vf.d:
        raise InputError(f"expected {vf.d} examples, got {len(examples)}")


def multi_loss(vf: VectorValuedFunction, examples: Sequence[TeachingExample], weights=None) -> float:
    _check_round(vf, examples)
    total = 0.0
    for i, (f, ex) in enumerate(zip(vf, examples)):
        w = 1.0 if weights is None else float(weights[i])
        total += w * loss_value_and_grad(f(ex.x), ex.y)[0]
    return total


def functional_gradient(
    vf: VectorValuedFunction, examples: Sequence[TeachingExample], loss: LossSpec = SQUARE
) -> list[KernelAtom]:
    _check_round(vf, examples)
    atoms = []
    for i, (f, ex) in enumerate(zip(vf, examples)):
        g = loss_value_and_grad(f(ex.x), ex.y)[1]
        atoms.append(KernelAtom(i, ex.x, loss.weight(i) * g))
    return atoms


def select_gft_indices(vf: VectorValuedFunction, target: VectorValuedFunction) -> list[int]:
    _check_matching(vf, target)
    return [int(np.argmax(np.abs(f.values - g.values))) for f, g in zip(vf, target)]


def select_gft(vf: VectorValuedFunction, target: VectorValuedFunction) -> list[tuple[float, ...]]:
    """Per learner, the grid point of largest ``|f_i - f*_i|`` (lowest index on ties)."""
    idx = select_gft_indices(vf, target)
    return [tuple(f.grid.point(j)) for f, j in zip(vf, idx)]


def select_rft_indices(
    dist: SamplingDistribution, grids: Sequence[Grid], rngs: Sequence[np.random.Generator]
) -> list[int]:
    return [dist.draw_index(g, i, rng) for i, (g, rng) in enumerate(zip(grids, rngs))]


def select_rft(
    dist: SamplingDistribution, grids: Sequence[Grid], seed_or_rngs
) -> list[tuple[float, ...]]:
    """One random grid point per learner.

    ``seed_or_rngs`` is either an int seed or one Generator per learner
    (advanced in place, so successive calls continue the stream).
    """
    if isinstance(seed_or_rngs, (int, np.integer)):
        rngs = [learner_rng(int(seed_or_rngs), i) for i in range(len(grids))]
    else:
        rngs = list(seed_or_rngs)
    idx = select_rft_indices(dist, grids, rngs)
    return [tuple(g.point(j)) for g, j in zip(grids, idx)]


def teacher_examples(target: VectorValuedFunction, points) -> tuple[TeachingExample, ...]:
    """Query the target only at the chosen points."""
    return tuple(TeachingExample(i, x, f(x)) for i, (f, x) in enumerate(zip(target, points)))


def learner_update(
    vf: VectorValuedFunction,
    rnd: TeachingRound,
    spec: KernelSpec = KernelSpec(),
    loss: LossSpec = SQUARE,
) -> VectorValuedFunction:
    _check_round(vf, rnd.examples)
    g = vf
    if rnd.comm_matrix is not None:
        A = np.asarray(rnd.comm_matrix, dtype=np.float64)
        if A.shape != (vf.d, vf.d):
            raise InputError(f"matrix shape {A.shape} does not match d={vf.d}")
        grid = vf.shared_grid()
        g = VectorValuedFunction.on_grid(grid, A @ vf.stack())
    atoms = functional_gradient(g, rnd.examples, loss)
    return VectorValuedFunction(
        tuple(apply_atom(f, a, spec, eta) for f, a, eta in zip(g, atoms, rnd.step_sizes.etas))
    )


def descent_diagnostic(vf: VectorValuedFunction, target: VectorValuedFunction, x, i: int) -> float:
    """Squared loss gradient of learner ``i`` at ``x``: ``(2 (f_i(x) - f*_i(x)))^2``."""
    g = 2.0 * (vf[i](x) - target[i](x))
    return g * g


def iteration_bound(initial_loss: float, d: int, eta_min: float, epsilon: float) -> float:
    """Iterations to a stationary point: ``2 L(f^0) / (d * eta_min * epsilon)``."""
    if initial_loss < 0 or d <= 0 or eta_min <= 0 or epsilon <= 0:
        raise InputError("iteration_bound arguments must be positive")
    return 2.0 * initial_loss / (d * eta_min * epsilon)


# --- the teaching loop -------------------------------------------------------


def _grids_shared(grids) -> bool:
    return all(g == grids[0] for g in grids[1:])


def run_teaching(
    config: TeachingConfig,
    target: VectorValuedFunction,
    init: VectorValuedFunction,
    strategy: str = "gft",
    comm_policy: CommPolicy = NEVER,
    backend=None,
    learner_ids: Sequence[int] | None = None,
    snapshots: Sequence[int] = (),
) -> TeachingRun:
    """Teach ``init`` toward ``target`` until ``M < epsilon`` or ``t > max_iter``.

    ``learner_ids`` names the random stream of each component (defaults to
    ``0..d-1``) so a component taught alone reproduces its multi-learner
    trace exactly.  ``snapshots`` lists iterations whose state ``f^t`` is
    kept in ``run.snapshots``; iterations past the end get the final state.
    """
    if strategy not in STRATEGIES:
        raise InputError(f"strategy must be one of {STRATEGIES}")
    _check_matching(init, target)
    kern = backend or _backend
    d = target.d
    grids = target.grids
    communicating = comm_policy.mode != "never"
    if communicating and not _grids_shared(grids):
        raise InputError("communication requires every learner on one shared grid")
    steps = config.step_sizes(d).etas
    weights = np.array([config.loss.weight(i) for i in range(d)])
    ids = list(range(d)) if learner_ids is None else list(learner_ids)
    rngs = [learner_rng(config.seed, j) for j in ids]
    inv_b2 = config.kernel.inv_b2
    sizes = np.array([g.size for g in grids])
    total = int(sizes.sum())

    F = [np.array(c.values, dtype=np.float64) for c in init]
    T = [np.ascontiguousarray(c.values) for c in target]
    coords = [g.coords for g in grids]
    Tm = np.vstack(T) if communicating else None
    stats = [kern.residual_stats(F[i], T[i]) for i in range(d)]
    means = config.reference_means

    def wloss(ss):
        return float(np.dot(weights, ss)) / total

    trace: list[TraceRecord] = []
    matrices: dict[int, np.ndarray] = {}
    wanted = set(snapshots)
    kept: dict[int, list[np.ndarray]] = {}
    converged = aborted = False
    t = 0
    clock = time.perf_counter()
    while True:
        if t in wanted:
            kept[t] = [f.copy() for f in F]
        ss = np.array([s[1] for s in stats])
        sum_ss = float(ss.sum())
        M = math.sqrt(sum_ss) / total
        if not math.isfinite(M):
            aborted = True
            break
        if config.stop_rule == "joint":
            done = M < config.epsilon
        else:
            done = bool(np.all(np.sqrt(ss) / sizes < config.epsilon))
        if done:
            converged = True
            break
        if t > config.max_iter:
            break

        loss_t = wloss(ss)
        pre = None
        comm = communicating and should_communicate(t, M, comm_policy)
        loss_comm = bound = slack = None
        if comm:
            Fm = np.vstack(F)
            A = solve_rows(Fm, Tm, comm_policy)
            matrices[t] = A
            AF = A @ Fm
            pre = Fm
            F = [np.ascontiguousarray(row) for row in AF]
            stats = [kern.residual_stats(F[i], T[i]) for i in range(d)]
            loss_comm = wloss(np.array([s[1] for s in stats]))
            rms = math.sqrt(sum_ss / total)
            bound = 2.0 * config.loss.lipschitz * rms
            slack = comm_policy.ridge * float(np.sum((A - np.eye(d)) ** 2)) / total + 1e-12

        if strategy == "gft":
            idx = [s[0] for s in stats]
        else:
            idx = select_rft_indices(config.sampling, grids, rngs)

        ys = [float(T[i][j]) for i, j in enumerate(idx)]
        res = [float(F[i][j]) - ys[i] for i, j in enumerate(idx)]
        ex_comm = float(sum(w * r * r for w, r in zip(weights, res)))
        if pre is not None:
            ex_pre = float(sum(w * (pre[i, j] - ys[i]) ** 2 for i, (w, j) in enumerate(zip(weights, idx))))
        else:
            ex_pre = ex_comm
        new_stats = []
        for i, j in enumerate(idx):
            scale = steps[i] * weights[i] * 2.0 * res[i]
            if scale == 0.0:
                new_stats.append(stats[i])
                continue
            new_stats.append(kern.kernel_step(F[i], T[i], coords[i], j, scale, inv_b2))
        stats = new_stats
        with np.errstate(over="ignore", invalid="ignore"):  # divergence is reported via status
            ex_post = float(sum(w * (F[i][j] - ys[i]) ** 2 for i, (w, j) in enumerate(zip(weights, idx))))
        ss_next = np.array([s[1] for s in stats])
        mu_dist = None
        if means is not None:
            mu_dist = float(sum(np.linalg.norm(grids[i].coords[j] - means[i]) for i, j in enumerate(idx)))
        status = "ok" if np.all(np.isfinite(ss_next)) else "nonfinite"
        trace.append(
            TraceRecord(
                iteration=t,
                loss=loss_t,
                disagreement=M,
                psnr=psnr_from_mse(sum_ss / total, config.max_signal),
                selected=tuple(int(j) for j in idx),
                comm_applied=comm,
                residuals=tuple(abs(r) for r in res),
                component_sq=tuple(float(x) for x in ss),
                loss_comm=loss_comm,
                loss_next=wloss(ss_next),
                ex_loss_pre=ex_pre,
                ex_loss_comm=ex_comm,
                ex_loss_post=ex_post,
                comm_bound=bound,
                comm_slack=slack,
                mu_distance=mu_dist,
                wall_time=time.perf_counter() - clock,
                status=status,
            )
        )
        t += 1
        if status != "ok":
            aborted = True
            break

    ss = np.array([s[1] for s in stats], dtype=np.float64)
    final = VectorValuedFunction(
        tuple(
            SampledFunction(g, f) if np.all(np.isfinite(f)) else _nonfinite(g, f)
            for g, f in zip(grids, F)
        )
    )
    sum_ss = float(ss.sum())
    shots = {
        k: VectorValuedFunction(tuple(SampledFunction(g, f) for g, f in zip(grids, v)))
        for k, v in kept.items()
    }
    shots.update({k: final for k in wanted if k >= t})
    return TeachingRun(
        trace=trace,
        final=final,
        final_loss=wloss(ss),
        final_disagreement=math.sqrt(sum_ss) / total,
        final_psnr=psnr_from_mse(sum_ss / total, config.max_signal),
        final_component_sq=tuple(float(x) for x in ss),
        converged=converged,
        aborted=aborted,
        matrices=matrices,
        snapshots=shots,
    )


def _nonfinite(grid, values):
    # keep the aborted state inspectable; validation would reject it
    f = object.__new__(SampledFunction)
    object.__setattr__(f, "grid", grid)
    object.__setattr__(f, "values", np.array(values))
    return f


def run_sequential(
    config: TeachingConfig,
    target: VectorValuedFunction,
    init: VectorValuedFunction,
    strategy: str = "gft",
    backend=None,
    snapshots: Sequence[int] = (),
) -> TeachingRun:
    """Teach the components one after another with a single learner each.

    Every component gets its own run (up to ``max_iter`` and to its own
    ``M < epsilon``); the returned trace numbers iterations globally and
    reports metrics of the whole vector, with untaught components still at
    their initial values.
    """
    _check_matching(init, target)
    d = target.d
    steps = config.step_sizes(d).etas
    sizes = [g.size for g in target.grids]
    total = sum(sizes)
    weights = [config.loss.weight(i) for i in range(d)]
    current = [float(np.sum((a.values - b.values) ** 2)) for a, b in zip(init, target)]
    trace: list[TraceRecord] = []
    finals = []
    converged = True
    aborted = False
    shots: dict[int, list] = {}
    for k in range(d):
        offset = len(trace)
        local = [t - offset for t in snapshots if t >= offset and t not in shots]
        sub = replace(
            config,
            etas=(steps[k],),
            loss=replace(config.loss, weights=(weights[k],)),
            sampling=_sub_sampling(config.sampling, k),
            reference_means=None if config.reference_means is None else (config.reference_means[k],),
            stop_rule="joint",
        )
        run = run_teaching(
            sub,
            VectorValuedFunction((target[k],)),
            VectorValuedFunction((init[k],)),
            strategy,
            NEVER,
            backend,
            learner_ids=[k],
            snapshots=local,
        )
        for lt, vf in run.snapshots.items():
            if lt < len(run.trace) or k == d - 1:
                shots[lt + offset] = finals + [vf[0]] + list(init[k + 1 :])
        for rec in run.trace:
            sq = list(current)
            sq[k] = rec.component_sq[0]
            sel = [-1] * d
            sel[k] = rec.selected[0]
            ss = float(sum(sq))
            trace.append(
                replace(
                    rec,
                    iteration=offset + rec.iteration,
                    loss=float(np.dot(weights, sq)) / total,
                    disagreement=math.sqrt(ss) / total,
                    psnr=psnr_from_mse(ss / total, config.max_signal),
                    selected=tuple(sel),
                    component_sq=tuple(sq),
                    loss_next=None,
                )
            )
        current[k] = run.final_component_sq[0]
        finals.append(run.final[0])
        converged = converged and run.converged
        if run.aborted:
            aborted = True
            finals.extend(init[k + 1 :])
            break
    ss = float(sum(current))
    final = VectorValuedFunction(tuple(finals))
    done = {t: VectorValuedFunction(tuple(v)) for t, v in shots.items()}
    done.update({t: final for t in snapshots if t not in done})
    return TeachingRun(
        trace=trace,
        final=final,
        final_loss=float(np.dot(weights, current)) / total,
        final_disagreement=math.sqrt(ss) / total,
        final_psnr=psnr_from_mse(ss / total, config.max_signal),
        final_component_sq=tuple(current),
        converged=converged and not aborted,
        aborted=aborted,
        snapshots=done,
    )


def _sub_sampling(dist: SamplingDistribution, k: int) -> SamplingDistribution:
    if dist.kind == "uniform":
        return dist
    return SamplingDistribution(
        "gaussian", (dist.means[k % len(dist.means)],), (dist.stds[k % len(dist.stds)],)
    )


def iterations_to_threshold(run: TeachingRun, epsilon: float) -> int | None:
    """First wall iteration whose state has ``M <= epsilon`` (None if never)."""
    for rec in run.trace:
        if rec.disagreement <= epsilon:
            return rec.iteration
    if run.final_disagreement <= epsilon:
        return len(run.trace)
    return None
