"""Grid-sampled functions, the RBF kernel and the evaluation functional.

Every function lives on a fixed coordinate grid; kernel updates are
materialized onto that grid so memory does not grow with the number of
teaching iterations.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InputError


def _frozen(a, dtype=np.float64):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class KernelSpec:
    """RBF kernel ``K(x, x') = exp(-||(x - x') / bandwidth_divisor||^2)``."""

    bandwidth_divisor: float = 2.0
    kernel_bound: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.bandwidth_divisor) and self.bandwidth_divisor > 0):
            raise InputError("bandwidth_divisor must be positive")
        if self.kernel_bound < 1.0:
            raise InputError("kernel_bound must be >= 1 for the RBF kernel")

    @property
    def inv_b2(self) -> float:
        return 1.0 / (self.bandwidth_divisor * self.bandwidth_divisor)

    @classmethod
    def in_pixels(cls, pixels: float, grid: "Grid") -> "KernelSpec":
        """Kernel whose divisor is ``pixels`` lattice steps of an image grid."""
        if grid.shape is None:
            raise InputError("pixel-scaled kernels need an image grid")
        return cls(bandwidth_divisor=pixels * grid.spacing)

    def column(self, grid: "Grid", center) -> np.ndarray:
        """``K(center, z)`` for every grid point z."""
        c = np.asarray(center, dtype=np.float64).reshape(-1)
        if c.shape[0] != grid.dim:
            raise InputError(f"point has dimension {c.shape[0]}, grid has {grid.dim}")
        d2 = np.sum((grid.coords - c) ** 2, axis=1)
        return np.exp(-d2 * self.inv_b2)


@dataclass(frozen=True, eq=False)
class Grid:
    """Ordered, distinct sample points; ``coords`` has shape (n, dim).

    Image grids carry ``shape = (height, width)`` and are stored row-major
    with coordinates ``(row, col) / (max(height, width) - 1)``.
    """

    coords: np.ndarray
    shape: tuple[int, int] | None = None

    def __post_init__(self):
        c = np.asarray(self.coords, dtype=np.float64)
        if c.ndim == 1:
            c = c[:, None]
        if c.ndim != 2 or c.shape[0] == 0:
            raise InputError("grid needs at least one point")
        if not np.all(np.isfinite(c)):
            raise InputError("grid coordinates must be finite")
        if np.unique(c, axis=0).shape[0] != c.shape[0]:
            raise InputError("grid coordinates must be distinct")
        object.__setattr__(self, "coords", _frozen(np.ascontiguousarray(c)))

    @classmethod
    def linspace(cls, start: float, stop: float, n: int) -> "Grid":
        return cls(np.linspace(start, stop, n))

    @classmethod
    def image(cls, height: int, width: int) -> "Grid":
        scale = max(height, width) - 1 or 1
        rows, cols = np.mgrid[0:height, 0:width]
        coords = np.column_stack([rows.ravel(), cols.ravel()]) / scale
        return cls(coords, shape=(height, width))

    @property
    def size(self) -> int:
        return self.coords.shape[0]

    @property
    def dim(self) -> int:
        return self.coords.shape[1]

    @property
    def spacing(self) -> float:
        """Lattice step of an image grid in normalized units."""
        if self.shape is None:
            raise InputError("spacing is defined for image grids only")
        return 1.0 / (max(self.shape) - 1 or 1)

    def index_of(self, point) -> int:
        p = np.asarray(point, dtype=np.float64).reshape(-1)
        if p.shape[0] != self.dim:
            raise InputError(f"point has dimension {p.shape[0]}, grid has {self.dim}")
        hits = np.flatnonzero(np.all(self.coords == p, axis=1))
        if hits.size == 0:
            raise InputError(f"point {p.tolist()} is not on the grid")
        return int(hits[0])

    def point(self, index: int) -> np.ndarray:
        return self.coords[index]

    def __eq__(self, other):
        if not isinstance(other, Grid):
            return NotImplemented
        return self is other or (
            self.shape == other.shape and np.array_equal(self.coords, other.coords)
        )

    __hash__ = object.__hash__

    def check_distinct(self) -> bool:
        return np.unique(self.coords, axis=0).shape[0] == self.size


@dataclass(frozen=True, eq=False)
class SampledFunction:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if v.shape[0] != self.grid.size:
            raise InputError(f"{v.shape[0]} values for a grid of {self.grid.size} points")
        if not np.all(np.isfinite(v)):
            raise InputError("function values must be finite")
        object.__setattr__(self, "values", _frozen(v))

    def __call__(self, point) -> float:
        return float(self.values[self.grid.index_of(point)])

    def __add__(self, other: "SampledFunction") -> "SampledFunction":
        _same_grid(self.grid, other.grid)
        return SampledFunction(self.grid, self.values + other.values)


@dataclass(frozen=True, eq=False)
class VectorValuedFunction:
    """``d`` scalar functions; component ``i`` belongs to learner ``i``."""

    components: tuple[SampledFunction, ...]

    def __post_init__(self):
        comps = tuple(self.components)
        if not comps:
            raise InputError("need at least one component")
        object.__setattr__(self, "components", comps)

    @classmethod
    def on_grid(cls, grid: Grid, rows) -> "VectorValuedFunction":
        """Build from a (d, n) array of values sharing one grid."""
        rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
        return cls(tuple(SampledFunction(grid, r) for r in rows))

    @property
    def d(self) -> int:
        return len(self.components)

    def __len__(self):
        return self.d

    def __getitem__(self, i) -> SampledFunction:
        return self.components[i]

    def __iter__(self):
        return iter(self.components)

    def __add__(self, other: "VectorValuedFunction") -> "VectorValuedFunction":
        _check_matching(self, other)
        return VectorValuedFunction(tuple(a + b for a, b in zip(self, other)))

    @property
    def grids(self) -> tuple[Grid, ...]:
        return tuple(c.grid for c in self.components)

    def shared_grid(self) -> Grid:
        """The single grid all components live on, or InputError."""
        g = self.components[0].grid
        for c in self.components[1:]:
            if c.grid != g:
                raise InputError("components do not share a grid")
        return g

    def stack(self) -> np.ndarray:
        """(d, n) copy of the values; components must share a grid."""
        self.shared_grid()
        return np.vstack([c.values for c in self.components])


@dataclass(frozen=True)
class KernelAtom:
    """``coefficient * K(center, .)`` placed on learner ``learner_index``."""

    learner_index: int
    center: tuple[float, ...]
    coefficient: float

    def __post_init__(self):
        if self.learner_index < 0:
            raise InputError("learner_index must be non-negative")
        if not np.isfinite(self.coefficient):
            raise InputError("atom coefficient must be finite")
        object.__setattr__(
            self, "center", tuple(float(c) for c in np.asarray(self.center).reshape(-1))
        )


def _same_grid(a: Grid, b: Grid):
    if a != b:
        raise InputError("functions live on different grids")


def _check_matching(vf: VectorValuedFunction, other: VectorValuedFunction):
    if vf.d != other.d:
        raise InputError(f"component counts differ: {vf.d} vs {other.d}")
    for a, b in zip(vf.grids, other.grids):
        _same_grid(a, b)


def kernel_eval(spec: KernelSpec, x, x2) -> float:
    a = np.asarray(x, dtype=np.float64).reshape(-1)
    b = np.asarray(x2, dtype=np.float64).reshape(-1)
    if a.shape != b.shape:
        raise InputError(f"dimension mismatch: {a.shape[0]} vs {b.shape[0]}")
    z = (a - b) / spec.bandwidth_divisor
    return float(np.exp(-np.dot(z, z)))


def eval_functional(vf: VectorValuedFunction, xs: Sequence) -> float:
    """Sum over learners of ``f_i(x_i)``; every ``x_i`` must be a grid point."""
    if len(xs) != vf.d:
        raise InputError(f"expected {vf.d} points, got {len(xs)}")
    return float(sum(f(x) for f, x in zip(vf, xs)))


def eval_functional_gradient(xs: Sequence) -> list[KernelAtom]:
    return [KernelAtom(i, x, 1.0) for i, x in enumerate(xs)]


def apply_atom(f: SampledFunction, atom: KernelAtom, spec: KernelSpec, step: float) -> SampledFunction:
    if not np.isfinite(step):
        raise InputError("step must be finite")
    if step == 0.0 or atom.coefficient == 0.0:
        return f
    k = spec.column(f.grid, atom.center)
    return SampledFunction(f.grid, f.values - step * atom.coefficient * k)


def disagreement(vf: VectorValuedFunction, target: VectorValuedFunction) -> float:
    """Empirical metric ``sqrt(sum_i sum_j (f_i - f*_i)^2) / (d n)``.

    Components may have different sizes; ``d n`` is then the total number
    of samples.
    """
    _check_matching(vf, target)
    ss = sum(float(np.dot(r, r)) for r in (a.values - b.values for a, b in zip(vf, target)))
    return float(np.sqrt(ss)) / total_samples(vf)


def total_samples(vf: VectorValuedFunction) -> int:
    return sum(c.grid.size for c in vf)


def metric_from_sumsq(sumsq: float, total: int) -> float:
    return float(np.sqrt(sumsq)) / total
