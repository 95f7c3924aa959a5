"""Target and initial functions: images, image partitions, synthetic families."""
from __future__ import annotations

import math
from dataclasses import dataclass
from importlib import resources

import numpy as np

from . import netpbm
from .errors import InputError
from .kernels import Grid, SampledFunction, VectorValuedFunction


@dataclass(frozen=True, eq=False)
class ImageFunction:
    """Pixel values in [0, 1], array shape (height, width, channels)."""

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        if v.ndim == 2:
            v = v[:, :, None]
        if v.ndim != 3 or v.shape[2] not in (1, 3):
            raise InputError("image values must be (h, w, 1) or (h, w, 3)")
        if np.any(v < 0) or np.any(v > 1):
            raise InputError("image values must lie in [0, 1]")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def channels(self) -> int:
        return self.values.shape[2]

    @property
    def grid(self) -> Grid:
        return Grid.image(self.height, self.width)

    def to_vector(self) -> VectorValuedFunction:
        """One component per channel on the shared pixel grid."""
        g = self.grid
        return VectorValuedFunction(
            tuple(SampledFunction(g, self.values[:, :, c].ravel()) for c in range(self.channels))
        )

    def gray(self) -> SampledFunction:
        if self.channels != 1:
            raise InputError("image has more than one channel")
        return SampledFunction(self.grid, self.values[:, :, 0].ravel())


def load_image(path, expect_channels: int | None = None) -> ImageFunction:
    samples, maxval = netpbm.read(path)
    if expect_channels is not None and samples.shape[2] != expect_channels:
        raise InputError(f"{path}: expected {expect_channels} channels, found {samples.shape[2]}")
    return ImageFunction(samples / maxval)


def bundled_image(name: str) -> ImageFunction:
    """Small test images shipped in ``multiteach/data``."""
    with resources.as_file(resources.files("multiteach") / "data" / name) as p:
        return load_image(p)


BUNDLED = ("rgb32.ppm", "gray_a32.pgm", "gray_b32.pgm")


# --- partitioning ------------------------------------------------------------


def partition(f: SampledFunction, rows: int, cols: int) -> VectorValuedFunction:
    """Split an image function into ``rows x cols`` blocks (row-major order).

    Each block gets its own local image grid so every learner sees the same
    kernel geometry.
    """
    shape = f.grid.shape
    if shape is None:
        raise InputError("partition needs a function on an image grid")
    h, w = shape
    if rows < 1 or cols < 1 or h % rows or w % cols:
        raise InputError(f"{rows}x{cols} does not divide a {h}x{w} image")
    if rows == cols == 1:
        return VectorValuedFunction((f,))
    bh, bw = h // rows, w // cols
    img = f.values.reshape(h, w)
    grid = Grid.image(bh, bw)
    blocks = []
    for r in range(rows):
        for c in range(cols):
            blocks.append(SampledFunction(grid, img[r * bh : (r + 1) * bh, c * bw : (c + 1) * bw].ravel()))
    return VectorValuedFunction(tuple(blocks))


def stitch(vf: VectorValuedFunction, rows: int, cols: int) -> SampledFunction:
    if vf.d != rows * cols:
        raise InputError(f"{vf.d} blocks cannot form a {rows}x{cols} layout")
    shapes = {c.grid.shape for c in vf}
    if len(shapes) != 1 or None in shapes:
        raise InputError("blocks must share one image shape")
    if rows == cols == 1:
        return vf[0]
    bh, bw = shapes.pop()
    img = np.empty((rows * bh, cols * bw))
    for k, comp in enumerate(vf):
        r, c = divmod(k, cols)
        img[r * bh : (r + 1) * bh, c * bw : (c + 1) * bw] = comp.values.reshape(bh, bw)
    return SampledFunction(Grid.image(rows * bh, cols * bw), img.ravel())


# --- synthetic families ------------------------------------------------------


def gaussian_pdf(x, mean: float, std: float):
    x = np.asarray(x, dtype=np.float64)
    z = (x - mean) / std
    return np.exp(-0.5 * z * z) / (std * math.sqrt(2.0 * math.pi))


ANALYTIC = {
    "exp": np.exp,
    "sin": np.sin,
    "identity": lambda x: np.asarray(x, dtype=np.float64),
    "square": lambda x: np.asarray(x, dtype=np.float64) ** 2,
}


@dataclass(frozen=True)
class SyntheticSpec:
    """A closed-form target family.

    family: ``gaussian-pdf`` (mean, std), ``gaussian-mixture`` (weights,
    means, stds), ``analytic`` (names, e.g. ("exp", "sin", "identity") or
    "cos-k"/"poly" via ``params``), ``gamma-interp`` (gamma).
    """

    family: str
    params: tuple = ()

    def __post_init__(self):
        fam, p = self.family, self.params
        if fam == "gaussian-pdf":
            mean, std = p
            if std <= 0:
                raise InputError("std must be positive")
        elif fam == "gaussian-mixture":
            weights, means, stds = p
            if len(weights) != len(means) or len(means) != len(stds):
                raise InputError("mixture needs matching weights, means and stds")
            if any(w < 0 for w in weights) or not math.isclose(sum(weights), 1.0, abs_tol=1e-12):
                raise InputError("mixture weights must be non-negative and sum to 1")
            if any(s <= 0 for s in stds):
                raise InputError("std must be positive")
        elif fam == "analytic":
            for name in p:
                _analytic(name)
        elif fam == "gamma-interp":
            (gamma,) = p
            if not math.isfinite(gamma):
                raise InputError("gamma must be finite")
        else:
            raise InputError(f"unknown synthetic family {fam!r}")


def _analytic(name):
    """Resolve names like ``exp``, ``sin``, ``cos-2pi``, ``sqrt2cos-4pi``, ``poly:1,0,2``."""
    if name in ANALYTIC:
        return ANALYTIC[name]
    if name.startswith("poly:"):
        coeffs = [float(c) for c in name[5:].split(",")]
        return lambda x: np.polynomial.polynomial.polyval(np.asarray(x, dtype=np.float64), coeffs)
    for prefix, amp in (("sqrt2cos-", math.sqrt(2.0)), ("cos-", 1.0)):
        if name.startswith(prefix):
            tok = name[len(prefix) :]
            k = float(tok[:-2]) * math.pi if tok.endswith("pi") else float(tok)
            return lambda x, k=k, amp=amp: amp * np.cos(k * np.asarray(x, dtype=np.float64))
    raise InputError(f"unknown analytic function {name!r}")


def synth_target(spec: SyntheticSpec, grid: Grid):
    """Sample the family on ``grid``; multi-component families return a vector."""
    x = grid.coords[:, 0]
    if spec.family == "gaussian-pdf":
        mean, std = spec.params
        return SampledFunction(grid, gaussian_pdf(x, mean, std))
    if spec.family == "gaussian-mixture":
        weights, means, stds = spec.params
        v = sum(w * gaussian_pdf(x, m, s) for w, m, s in zip(weights, means, stds))
        return SampledFunction(grid, v)
    if spec.family == "analytic":
        return VectorValuedFunction(tuple(SampledFunction(grid, _analytic(n)(x)) for n in spec.params))
    (g,) = spec.params
    return VectorValuedFunction.on_grid(
        grid,
        [
            g * x / 2 + g * x**2 / 2 + (1 - g) * np.cos(x),
            g * x / 3 + 2 * g * x**2 / 3 + (1 - g) * np.sin(x),
        ],
    )


# --- the studies' closed-form pairs --------------------------------------------

ONE_SHOT_EXP = np.array([[2.0, -1.0, -1.0], [0.0, 1.0, 2.0], [-1.0, 1.0, 1.0]])
ONE_SHOT_COS = np.array([[1.0, -1.0], [-1.0 / math.sqrt(2.0), 1.0]])
MIXTURE_WEIGHTS = np.array([[1.0 / 3.0, 2.0 / 3.0], [3.0 / 4.0, 1.0 / 4.0]])
PARTICULAR_MIX = np.array([[1.26, 2.22, 3.60], [2.47, -0.53, 2.36], [2.40, 1.68, 0.40]])


def default_grid(kind: str, n: int = 256) -> Grid:
    """256 evenly spaced points: [-10, 10] for gaussian studies, [-2, 2] otherwise."""
    return Grid.linspace(-10.0, 10.0, n) if kind == "gaussian" else Grid.linspace(-2.0, 2.0, n)


def one_shot_exp(grid: Grid):
    """``f0 = (e^x, sin x, x)`` and ``f* = A f0`` with the integer mixing matrix."""
    f0 = synth_target(SyntheticSpec("analytic", ("exp", "sin", "identity")), grid)
    x = grid.coords[:, 0]
    fs = VectorValuedFunction.on_grid(
        grid,
        [2 * np.exp(x) - np.sin(x) - x, np.sin(x) + 2 * x, -np.exp(x) + np.sin(x) + x],
    )
    return f0, fs


def one_shot_cos(grid: Grid):
    f0 = synth_target(SyntheticSpec("analytic", ("sqrt2cos-2pi", "sqrt2cos-4pi")), grid)
    x = grid.coords[:, 0]
    c2, c4 = np.cos(2 * np.pi * x), np.cos(4 * np.pi * x)
    fs = VectorValuedFunction.on_grid(
        grid, [math.sqrt(2) * c2 - math.sqrt(2) * c4, -c2 + math.sqrt(2) * c4]
    )
    return f0, fs


def bivariate_mixture(grid: Grid):
    """Initial and target marginals of the uncorrelated bivariate study."""
    x = grid.coords[:, 0]
    n1, n2 = gaussian_pdf(x, -2.0, 1.5), gaussian_pdf(x, 2.0, 1.0)
    f0 = VectorValuedFunction.on_grid(grid, [n1, n2])
    fs = VectorValuedFunction.on_grid(grid, [n1 / 3 + 2 * n2 / 3, 3 * n1 / 4 + n2 / 4])
    return f0, fs


def product_surface(vf: VectorValuedFunction) -> np.ndarray:
    """``f1(x1) * f2(x2)`` on the tensor grid, shape (n1, n2)."""
    return np.outer(vf[0].values, vf[1].values)


def gamma_pair(gamma: float, grid: Grid):
    f0 = synth_target(SyntheticSpec("analytic", ("identity", "square")), grid)
    return f0, synth_target(SyntheticSpec("gamma-interp", (gamma,)), grid)


def particular_init(target: VectorValuedFunction, mix=PARTICULAR_MIX) -> VectorValuedFunction:
    """``f0 = mix^{-1} f*`` so that communicating ``mix`` recovers the target."""
    grid = target.shared_grid()
    return VectorValuedFunction.on_grid(grid, np.linalg.solve(mix, target.stack()))


def random_init(grids, seed: int, low: float = 0.0, high: float = 1.0) -> VectorValuedFunction:
    rng = np.random.default_rng(seed)
    return VectorValuedFunction(tuple(SampledFunction(g, rng.uniform(low, high, g.size)) for g in grids))


def zero_init(grids) -> VectorValuedFunction:
    return VectorValuedFunction(tuple(SampledFunction(g, np.zeros(g.size)) for g in grids))
