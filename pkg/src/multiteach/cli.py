"""Command line entry point: ``multiteach teach|sweep|solve-comm``.

Exit codes: 0 on success, 2 on usage errors, 1 on runtime failures.
"""
from __future__ import annotations

import argparse
import sys
from dataclasses import MISSING, replace
from pathlib import Path

import numpy as np

from . import experiments as ex
from . import targets as tg
from .communication import solve_comm_matrix
from .errors import UsageError

COMM_KEYS = ex.COMM_FIELDS


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _convert(name: str, text: str):
    f = ex.KEYS[name]
    kind = f.type if isinstance(f.type, type) else {"int": int, "float": float, "str": str}[f.type]
    try:
        return kind(text)
    except ValueError:
        raise UsageError(f"{name}: expected {kind.__name__}, got {text!r}") from None


def read_config_file(path) -> dict[str, str]:
    """``key = value`` lines; ``#`` starts a comment."""
    out = {}
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read config file: {exc}") from None
    for no, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{no}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = value
    return out


def parse_config(flags: dict[str, str], file=None) -> ex.ExperimentConfig:
    """Merge preset defaults, a config file and flags (flags win)."""
    raw = read_config_file(file) if file else {}
    raw.update({k: v for k, v in flags.items() if v is not None})
    unknown = sorted(set(raw) - set(ex.KEYS))
    if unknown:
        raise UsageError(
            f"unknown config key(s): {', '.join(unknown)}; valid keys: {', '.join(ex.KEYS)}"
        )
    preset = raw.get("preset", ex.KEYS["preset"].default)
    if preset not in ex.PRESETS:
        raise UsageError(f"unknown preset {preset!r}; valid presets: {', '.join(ex.PRESETS)}")
    values = {k: _convert(k, v) for k, v in raw.items() if k != "preset"}
    mode = values.get("mode", ex.PRESET_DEFAULTS[preset].get("mode", "all"))
    # echoed configs carry every key, so only non-default comm settings conflict
    comm = sorted(k for k in COMM_KEYS & set(values) if values[k] != ex.KEYS[k].default)
    if mode in ("vanilla", "single-sequential") and comm:
        raise UsageError(f"communication keys ({', '.join(comm)}) conflict with mode {mode}")
    if values.get("strategy") == "gft" and values.get("sampling") == "gaussian":
        raise UsageError("sampling = gaussian only applies to strategy rft")
    return ex.preset_config(preset, **values)


def _add_config_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", help="key = value file; flags override it")
    for name, f in ex.KEYS.items():
        default = f.default if f.default is not MISSING else None
        p.add_argument(
            "--" + name.replace("_", "-"), dest=name, default=None, metavar=name.upper(),
            help=f"(default {default})",
        )


def _flags(ns) -> dict[str, str]:
    return {k: getattr(ns, k, None) for k in ex.KEYS}


def _print_matrix(A: np.ndarray):
    for row in A:
        print(" ".join(f"{v: .10f}" for v in row))


def cmd_teach(ns) -> int:
    cfg = parse_config(_flags(ns), ns.config)
    summary = ex.run_experiment(cfg)
    for name, s in summary.items():
        if isinstance(s, dict):
            print(
                f"{name}: iterations={s['iterations']} loss={s['final_loss']:.6e} "
                f"M={s['final_disagreement']:.6e} psnr={s['final_psnr']}"
            )
    print(f"artifacts written to {cfg.output}")
    return 0


def cmd_sweep(ns) -> int:
    flags = _flags(ns)
    flags["preset"] = "gamma-sweep" if ns.kind == "gamma" else "mean-shift"
    cfg = parse_config(flags, ns.config)
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(cfg.to_text(), encoding="ascii")
    if ns.kind == "gamma":
        rows = ex.gamma_sweep(cfg)
        ex.write_gamma_csv(rows, out / "gamma_sweep.csv")
        for g, dist in rows:
            print(f"gamma={g:.6g} distance={dist:.6e}")
        return 0
    rows = ex.mu_sweep(cfg, ns.seeds)
    lines = ["variant,seed,iterations\n"]
    lines += [f"{name},{s},{'' if it is None else it}\n" for name, s, it in rows]
    (out / "mu_sweep.csv").write_text("".join(lines), encoding="ascii")
    for name in dict.fromkeys(r[0] for r in rows):
        its = [it for n, _, it in rows if n == name]
        done = [it for it in its if it is not None]
        med = float(np.median(done)) if len(done) == len(its) else float("nan")
        print(f"{name}: runs={len(its)} converged={len(done)} median_iterations={med:g}")
    return 0


def _solve_case(case: str, n: int):
    grid = tg.Grid.linspace(-2.0, 2.0, n)
    if case == "exp":
        return tg.one_shot_exp(grid)
    if case == "cosine":
        return tg.one_shot_cos(grid)
    if case == "bivariate":
        return tg.bivariate_mixture(tg.default_grid("gaussian", n))
    if case == "gamma":
        return tg.gamma_pair(1.0, grid)
    raise UsageError(f"unknown case {case!r}")


def cmd_solve_comm(ns) -> int:
    cfg = parse_config({k: v for k, v in _flags(ns).items() if k in ex.COMM_FIELDS or k == "grid_points"}, None)
    if ns.target or ns.init:
        if not (ns.target and ns.init):
            raise UsageError("--init and --target must be given together")
        f0 = ex._load(ns.init).to_vector()
        fs = ex._load(ns.target).to_vector()
    elif ns.case == "particular":
        fs = tg.bundled_image("rgb32.ppm").to_vector()
        f0 = tg.particular_init(fs)
    else:
        f0, fs = _solve_case(ns.case, cfg.grid_points)
    if f0.d != fs.d:
        raise UsageError(f"init has {f0.d} components, target has {fs.d}")
    A = solve_comm_matrix(f0, fs, replace(cfg.comm_policy(), mode="every-k"))
    _print_matrix(A.entries)
    r = A.entries @ f0.stack() - fs.stack()
    print(f"M = {np.sqrt(np.sum(r * r)) / r.size:.6e}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="multiteach", description="Multi-learner nonparametric teaching experiments.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    teach = sub.add_parser("teach", help="run one experiment preset")
    _add_config_flags(teach)
    teach.set_defaults(func=cmd_teach)

    sweep = sub.add_parser("sweep", help="gamma or mu sweep")
    sweep.add_argument("kind", choices=("gamma", "mu"))
    sweep.add_argument("--seeds", type=int, default=32, help="seeds per sampling mean (mu sweep)")
    _add_config_flags(sweep)
    sweep.set_defaults(func=cmd_sweep)

    solve = sub.add_parser("solve-comm", help="solve one communication matrix and print it")
    solve.add_argument("--case", default="exp", choices=("exp", "cosine", "bivariate", "gamma", "particular"))
    solve.add_argument("--init", help="image holding the initial functions")
    solve.add_argument("--target", help="image holding the target functions")
    solve.add_argument("--grid-points", dest="grid_points", default="64")
    for name in sorted(ex.COMM_FIELDS):
        solve.add_argument("--" + name.replace("_", "-"), dest=name, default=None)
    solve.set_defaults(func=cmd_solve_comm)
    return p


def main(argv=None) -> int:
    try:
        ns = build_parser().parse_args(argv)
        if getattr(ns, "seeds", 1) < 1:
            raise UsageError("--seeds must be >= 1")
        return ns.func(ns)
    except UsageError as exc:
        print(f"multiteach: usage error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except Exception as exc:  # noqa: BLE001 - report any runtime failure as exit 1
        print(f"multiteach: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
