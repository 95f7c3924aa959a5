"""PSNR, trace CSV files and image snapshots."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import netpbm
from .errors import InputError

TRACE_HEADER = ("iteration", "loss", "disagreement", "psnr", "comm_applied", "selected_xs")


@dataclass(frozen=True)
class PsnrResult:
    value: float
    saturated: bool = False

    def __str__(self):
        return "inf" if self.saturated else f"{self.value:.4f}"

    def __float__(self):
        return math.inf if self.saturated else self.value


def psnr_from_mse(mse: float, max_signal: float = 1.0) -> float:
    if mse == 0.0:
        return math.inf
    if not math.isfinite(mse):
        return -math.inf if mse > 0 else math.nan
    return 10.0 * math.log10(max_signal * max_signal / mse)


def psnr(f, g, max_signal: float = 1.0) -> PsnrResult:
    """PSNR pooled over every grid point of every component.

    ``f`` and ``g`` are SampledFunctions or VectorValuedFunctions on
    matching grids.
    """
    if max_signal <= 0:
        raise InputError("max_signal must be positive")
    fs, gs = _components(f), _components(g)
    if len(fs) != len(gs):
        raise InputError("component counts differ")
    ss, n = 0.0, 0
    for a, b in zip(fs, gs):
        if a.grid != b.grid:
            raise InputError("functions live on different grids")
        r = a.values - b.values
        ss += float(np.dot(r, r))
        n += r.size
    mse = ss / n
    if mse == 0.0:
        return PsnrResult(math.inf, saturated=True)
    return PsnrResult(psnr_from_mse(mse, max_signal))


def _components(f):
    return list(f.components) if hasattr(f, "components") else [f]


# --- traces ------------------------------------------------------------------


def _num(x: float) -> str:
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if math.isnan(x):
        return "nan"
    return f"{x:.12e}"


def format_trace(trace) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_HEADER)
    for rec in trace:
        w.writerow(
            (
                rec.iteration,
                _num(rec.loss),
                _num(rec.disagreement),
                _num(rec.psnr),
                int(bool(rec.comm_applied)),
                ";".join(str(j) for j in rec.selected),
            )
        )
    return buf.getvalue()


def write_trace(trace, path) -> None:
    """CSV with one row per record; byte output depends only on the trace."""
    path = Path(path)
    try:
        path.write_text(format_trace(trace), encoding="ascii")
    except OSError as exc:
        raise OSError(f"cannot write trace to {path}: {exc}") from exc


def read_trace(path) -> list:
    from .engine import TraceRecord

    with open(path, newline="", encoding="ascii") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != TRACE_HEADER:
        raise InputError(f"{path}: not a trace file")
    out = []
    for row in rows[1:]:
        it, loss, dis, ps, comm, sel = row
        out.append(
            TraceRecord(
                iteration=int(it),
                loss=float(loss),
                disagreement=float(dis),
                psnr=float(ps),
                selected=tuple(int(s) for s in sel.split(";")) if sel else (),
                comm_applied=comm == "1",
            )
        )
    return out


# --- snapshots ---------------------------------------------------------------


def quantize(values, maxval: int = 255) -> np.ndarray:
    """Clamp to [0, 1] and round half up onto 0..maxval."""
    v = np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0)
    return np.floor(v * maxval + 0.5).astype(np.int64)


def write_snapshot(f, path) -> None:
    """Write a grayscale (P5) or 3-component RGB (P6) function on an image grid."""
    comps = _components(f)
    if len(comps) not in (1, 3):
        raise InputError("snapshots need 1 or 3 components")
    shape = comps[0].grid.shape
    if shape is None or any(c.grid.shape != shape for c in comps):
        raise InputError("snapshots need functions on a 2-D image grid")
    h, w = shape
    planes = [quantize(c.values).reshape(h, w) for c in comps]
    netpbm.write(path, np.stack(planes, axis=-1))
