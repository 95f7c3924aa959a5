"""Experiment presets and the runner behind ``multiteach teach``.

A preset fixes the target, initial functions and defaults for one study;
running it produces one or more *variants* (a mode/strategy combination),
each written as ``trace_<variant>.csv`` plus optional image snapshots.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from .communication import NEVER, CommPolicy, solve_rows
from .engine import (
    SamplingDistribution,
    TeachingConfig,
    iterations_to_threshold,
    run_sequential,
    run_teaching,
)
from .errors import InputError, UsageError
from .kernels import KernelSpec, VectorValuedFunction
from .metrics import write_snapshot, write_trace
from . import targets as tg

MODES = ("single-sequential", "vanilla", "communicated")
PRESETS = (
    "one-shot-comm",
    "mean-shift",
    "bivariate-mixture",
    "gamma-sweep",
    "image-gray",
    "image-partition",
    "image-rgb",
)


@dataclass(frozen=True)
class ExperimentConfig:
    """Every key accepted by config files and ``teach`` flags."""

    preset: str = "image-rgb"
    mode: str = "all"
    strategy: str = "gft"
    image: str = ""
    partition: str = "1x1"
    init: str = "zero"
    case: str = "exp"
    eta: str = "0.1"
    max_iter: int = 4000
    epsilon: float = 5e-4
    stop_rule: str = "joint"
    comm_mode: str = "while-far"
    comm_k: int = 1
    comm_eps0: float = 0.0
    comm_solver: str = "closed-form"
    comm_max_steps: int = 500
    comm_tol: float = 1e-3
    ridge: float = 1e-8
    row_sum: str = "off"
    sampling: str = "uniform"
    sample_mean: str = "0"
    sample_std: float = 5.0
    kernel_pixels: float = 2.0
    bandwidth: float = 2.0
    grid_points: int = 256
    gammas: str = "0:1:0.1"
    seed: int = 0
    output: str = "runs/out"
    snapshots: int = 6

    def __post_init__(self):
        if self.preset not in PRESETS:
            raise UsageError(f"unknown preset {self.preset!r}; valid presets: {', '.join(PRESETS)}")
        if self.mode not in MODES + ("all",):
            raise UsageError(f"mode must be one of {', '.join(MODES + ('all',))}")
        if self.strategy not in ("gft", "rft"):
            raise UsageError("strategy must be gft or rft")
        if self.max_iter < 1:
            raise UsageError("max_iter must be >= 1")
        if not self.epsilon > 0:
            raise UsageError("epsilon must be > 0")
        if self.init not in ("zero", "random", "particular", "constant"):
            raise UsageError("init must be zero, random, particular or constant")
        if self.sampling not in ("uniform", "gaussian"):
            raise UsageError("sampling must be uniform or gaussian")
        if self.row_sum not in ("off", "one"):
            raise UsageError("row_sum must be off or one")
        if self.snapshots < 0:
            raise UsageError("snapshots must be >= 0")
        if self.stop_rule not in ("joint", "every"):
            raise UsageError("stop_rule must be joint or every")
        try:
            self.comm_policy()
            etas = self.etas
        except (InputError, ValueError) as exc:
            raise UsageError(str(exc)) from None
        if any(not e > 0 for e in etas):
            raise UsageError("eta values must be positive")

    @property
    def etas(self) -> tuple[float, ...]:
        return tuple(float(x) for x in self.eta.split(","))

    def comm_policy(self) -> CommPolicy:
        eps0 = self.comm_eps0 if self.comm_eps0 > 0 else 10.0 * self.epsilon
        return CommPolicy(
            mode=self.comm_mode,
            k=self.comm_k,
            far_threshold=eps0,
            solver=self.comm_solver,
            max_steps=self.comm_max_steps,
            solver_tol=self.comm_tol,
            ridge=self.ridge,
            row_sum_one=self.row_sum == "one",
        )

    def to_text(self) -> str:
        return "".join(f"{f.name} = {getattr(self, f.name)}\n" for f in fields(self))


KEYS = {f.name: f for f in fields(ExperimentConfig)}
COMM_FIELDS = frozenset(
    ("comm_mode", "comm_k", "comm_eps0", "comm_solver", "comm_max_steps", "comm_tol", "ridge", "row_sum")
)

PRESET_DEFAULTS = {
    "one-shot-comm": dict(
        mode="communicated", comm_mode="at-start-only", grid_points=64, epsilon=1e-9,
        max_iter=10, init="zero", snapshots=0,
    ),
    "mean-shift": dict(
        mode="vanilla", epsilon=1e-4, max_iter=20000, sample_mean="0,-4,-7", sample_std=5.0,
        snapshots=0,
    ),
    "bivariate-mixture": dict(epsilon=1e-5, max_iter=5000, comm_mode="at-start-only", snapshots=0),
    "gamma-sweep": dict(mode="communicated", grid_points=256, snapshots=0),
    "image-gray": dict(image="gray_a32.pgm,gray_b32.pgm"),
    "image-partition": dict(image="gray_a32.pgm", partition="4x4"),
    "image-rgb": dict(image="rgb32.ppm"),
}


def preset_config(preset: str, **overrides) -> ExperimentConfig:
    """Config with the preset's defaults, then ``overrides`` on top."""
    if preset not in PRESETS:
        raise UsageError(f"unknown preset {preset!r}; valid presets: {', '.join(PRESETS)}")
    kw = dict(PRESET_DEFAULTS[preset])
    kw.update(overrides)
    return ExperimentConfig(preset=preset, **kw)


@dataclass
class Variant:
    name: str
    mode: str
    strategy: str
    target: VectorValuedFunction
    init: VectorValuedFunction
    config: TeachingConfig
    policy: CommPolicy
    layout: tuple[int, int] | None = None
    image_kind: str | None = None


def _load(name: str):
    p = Path(name)
    if p.exists():
        return tg.load_image(p)
    if name in tg.BUNDLED:
        return tg.bundled_image(name)
    raise UsageError(f"image {name!r} not found (bundled images: {', '.join(tg.BUNDLED)})")


def _layout(text: str) -> tuple[int, int]:
    try:
        r, c = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise UsageError(f"partition must look like RxC, got {text!r}") from None
    return r, c


def _init_for(cfg: ExperimentConfig, target: VectorValuedFunction) -> VectorValuedFunction:
    if cfg.init == "zero":
        return tg.zero_init(target.grids)
    if cfg.init == "constant":
        return VectorValuedFunction(
            tuple(tg.SampledFunction(g, np.full(g.size, -1.0)) for g in target.grids)
        )
    if cfg.init == "random":
        return tg.random_init(target.grids, cfg.seed)
    if target.d != 3:
        raise UsageError("particular initialization needs exactly three components")
    return tg.particular_init(target)


def _teaching_config(cfg: ExperimentConfig, kernel: KernelSpec, d: int, sampling=None) -> TeachingConfig:
    etas = cfg.etas
    if len(etas) not in (1, d):
        raise UsageError(f"eta needs 1 or {d} values, got {len(etas)}")
    return TeachingConfig(
        max_iter=cfg.max_iter,
        epsilon=cfg.epsilon,
        etas=etas[0] if len(etas) == 1 else etas,
        seed=cfg.seed,
        kernel=kernel,
        sampling=sampling or _sampling(cfg, d),
        stop_rule=cfg.stop_rule,
    )


def _sampling(cfg: ExperimentConfig, d: int) -> SamplingDistribution:
    if cfg.sampling == "uniform":
        return SamplingDistribution()
    means = [float(m) for m in cfg.sample_mean.split(",")]
    if len(means) == 1:
        means = means * d
    return SamplingDistribution("gaussian", tuple(means[:d]), (cfg.sample_std,) * d)


def _modes(cfg: ExperimentConfig) -> tuple[str, ...]:
    return MODES if cfg.mode == "all" else (cfg.mode,)


def _policy(cfg: ExperimentConfig, mode: str) -> CommPolicy:
    return cfg.comm_policy() if mode == "communicated" else NEVER


def build_variants(cfg: ExperimentConfig) -> list[Variant]:
    p = cfg.preset
    if p == "gamma-sweep":
        raise UsageError("gamma-sweep is a sweep; run it with `multiteach sweep gamma`")
    if p == "one-shot-comm":
        grid = tg.Grid.linspace(-2.0, 2.0, cfg.grid_points)
        cases = {"exp": tg.one_shot_exp, "cosine": tg.one_shot_cos}
        if cfg.case not in cases:
            raise UsageError("case must be exp or cosine")
        f0, fs = cases[cfg.case](grid)
        tc = _teaching_config(cfg, KernelSpec(cfg.bandwidth), fs.d)
        return [
            Variant(f"{m}_{cfg.strategy}", m, cfg.strategy, fs, f0, tc, _policy(cfg, m))
            for m in _modes(cfg)
        ]
    if p == "mean-shift":
        grid = tg.default_grid("gaussian", cfg.grid_points)
        fs = VectorValuedFunction((tg.synth_target(tg.SyntheticSpec("gaussian-pdf", (0.0, 5.0)), grid),))
        f0 = tg.zero_init(fs.grids)
        kern = KernelSpec(cfg.bandwidth)
        out = [Variant("gft", "vanilla", "gft", fs, f0, _teaching_config(cfg, kern, 1), NEVER)]
        for mu in (float(m) for m in cfg.sample_mean.split(",")):
            dist = SamplingDistribution.gaussian(mu, cfg.sample_std)
            tc = replace(_teaching_config(cfg, kern, 1, dist), reference_means=(mu,))
            out.append(Variant(f"rft_mu{mu:g}", "vanilla", "rft", fs, f0, tc, NEVER))
        return out
    if p == "bivariate-mixture":
        grid = tg.default_grid("gaussian", cfg.grid_points)
        f0, fs = tg.bivariate_mixture(grid)
        tc = _teaching_config(cfg, KernelSpec(cfg.bandwidth), 2)
        return [
            Variant(f"{m}_{cfg.strategy}", m, cfg.strategy, fs, f0, tc, _policy(cfg, m))
            for m in _modes(cfg)
        ]
    return _image_variants(cfg)


def _image_variants(cfg: ExperimentConfig) -> list[Variant]:
    names = [n for n in cfg.image.split(",") if n]
    if not names:
        raise UsageError("image presets need an image")
    images = [_load(n) for n in names]
    layout = _layout(cfg.partition)
    out = []
    if len(images) == 1 and images[0].channels == 3:
        target, kind = images[0].to_vector(), "rgb"
    else:
        if any(im.channels != 1 for im in images):
            raise UsageError("mixing grayscale and RGB images is not supported")
        whole = [im.gray() for im in images]
        if layout != (1, 1):
            if len(whole) != 1:
                raise UsageError("partitioning needs exactly one grayscale image")
            target, kind = tg.partition(whole[0], *layout), "partition"
        else:
            target, kind = VectorValuedFunction(tuple(whole)), "gray"
    for m in _modes(cfg):
        tgt, lay = target, layout if kind == "partition" else None
        if kind == "partition" and m == "single-sequential":
            # the single-learner baseline teaches the unpartitioned image
            tgt, lay = VectorValuedFunction((tg.stitch(target, *layout),)), None
        kern = KernelSpec.in_pixels(cfg.kernel_pixels, tgt[0].grid)
        init = _init_for(cfg, tgt)
        tc = _teaching_config(cfg, kern, tgt.d)
        out.append(
            Variant(f"{m}_{cfg.strategy}", m, cfg.strategy, tgt, init, tc, _policy(cfg, m), lay, kind)
        )
    return out


def run_variant(v: Variant, snapshots=()):
    if v.mode == "single-sequential":
        return run_sequential(v.config, v.target, v.init, v.strategy, snapshots=snapshots)
    return run_teaching(v.config, v.target, v.init, v.strategy, v.policy, snapshots=snapshots)


def snapshot_times(max_iter: int, count: int) -> list[int]:
    if count <= 0:
        return []
    if count == 1:
        return [max_iter]
    return sorted({round(i * max_iter / (count - 1)) for i in range(count)})


def _write_snapshots(v: Variant, run, outdir: Path):
    if v.image_kind is None:
        return
    snapdir = outdir / "snapshots"
    snapdir.mkdir(parents=True, exist_ok=True)
    for t, vf in sorted(run.snapshots.items()):
        stem = f"{v.name}_t{t:07d}"
        if v.layout is not None:
            write_snapshot(tg.stitch(vf, *v.layout), snapdir / f"{stem}.pgm")
        elif vf.d == 3:
            write_snapshot(vf, snapdir / f"{stem}.ppm")
        else:
            for i, comp in enumerate(vf):
                suffix = f"_c{i}" if vf.d > 1 else ""
                write_snapshot(comp, snapdir / f"{stem}{suffix}.pgm")


def run_experiment(cfg: ExperimentConfig) -> dict:
    """Run every variant of the preset, writing traces, snapshots and a summary."""
    outdir = Path(cfg.output)
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "config.txt").write_text(cfg.to_text(), encoding="ascii")
    if cfg.preset == "gamma-sweep":
        rows = gamma_sweep(cfg)
        write_gamma_csv(rows, outdir / "gamma_sweep.csv")
        summary = {"gamma_sweep": [{"gamma": g, "distance": dist} for g, dist in rows]}
        _dump(summary, outdir / "summary.json")
        return summary
    times = snapshot_times(cfg.max_iter, cfg.snapshots)
    summary = {}
    for v in build_variants(cfg):
        run = run_variant(v, times)
        write_trace(run.trace, outdir / f"trace_{v.name}.csv")
        _write_snapshots(v, run, outdir)
        summary[v.name] = {
            "iterations": run.iterations,
            "converged": run.converged,
            "aborted": run.aborted,
            "final_loss": run.final_loss,
            "final_disagreement": run.final_disagreement,
            "final_psnr": _json_num(run.final_psnr),
            "iterations_to_threshold": iterations_to_threshold(run, cfg.epsilon),
            "communicated_iterations": sum(r.comm_applied for r in run.trace),
        }
    _dump(summary, outdir / "summary.json")
    return summary


def _json_num(x: float):
    return "inf" if math.isinf(x) else x


def _dump(obj, path: Path):
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="ascii")


# --- sweeps ------------------------------------------------------------------


def parse_range(text: str) -> list[float]:
    """``start:stop:step`` (stop inclusive) or a comma list."""
    if ":" in text:
        start, stop, step = (float(v) for v in text.split(":"))
        if step <= 0:
            raise UsageError("range step must be positive")
        n = int(math.floor((stop - start) / step + 1e-9)) + 1
        return [round(start + i * step, 12) for i in range(n)]
    return [float(v) for v in text.split(",") if v]


def gamma_sweep(cfg: ExperimentConfig) -> list[tuple[float, float]]:
    """Distance ``M(A_g f0, f*_g)`` after one optimal communication, per gamma."""
    grid = tg.Grid.linspace(-2.0, 2.0, cfg.grid_points)
    policy = replace(cfg.comm_policy(), solver="closed-form")
    rows = []
    for g in parse_range(cfg.gammas):
        f0, fs = tg.gamma_pair(g, grid)
        F, T = f0.stack(), fs.stack()
        A = solve_rows(F, T, policy)
        r = A @ F - T
        rows.append((g, float(np.sqrt(np.sum(r * r))) / r.size))
    return rows


def write_gamma_csv(rows, path):
    text = "gamma,distance\n" + "".join(f"{g:.6g},{dist:.12e}\n" for g, dist in rows)
    Path(path).write_text(text, encoding="ascii")


def mu_sweep(cfg: ExperimentConfig, seeds: int) -> list[tuple[str, int, int | None]]:
    """Iterations to ``epsilon`` for GFT and each RFT sampling mean, per seed."""
    rows = []
    for s in range(seeds):
        for v in build_variants(replace(cfg, preset="mean-shift", seed=s)):
            if v.strategy == "gft" and s > 0:
                continue
            run = run_variant(v)
            rows.append((v.name, s, iterations_to_threshold(run, cfg.epsilon)))
    return rows
