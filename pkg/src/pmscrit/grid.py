"""Tabulated quantile curves ``gamma -> c_gamma(v)`` and interval suprema."""
from __future__ import annotations

import hashlib
import io
import json
import math
import os
import threading
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicSpline

from . import distribution
from .distribution import ModelParams
from .errors import DomainError, RangeError

__all__ = [
    "SparseTable",
    "QuantileGrid",
    "build_quantile_grid",
    "interval_sup",
    "GridCache",
    "CACHE_ENV_VAR",
    "GRID_FORMAT_VERSION",
]

CACHE_ENV_VAR = "PMSCRIT_CACHE_DIR"
GRID_FORMAT_VERSION = 1
DEFAULT_STEP = 0.01
# Quantiles are solved to |H(x) - (1 - v)| <= 1e-13, far inside the 1e-8 contract.
DEFAULT_QUANTILE_TOL = 1e-13


class SparseTable:
    """Range-maximum queries in O(1) after O(N log N) preprocessing.

    ``argmax[d][i]`` is the index of the largest value in
    ``values[i : i + 2**d]``; ties resolve to the leftmost index.
    """

    def __init__(self, values):
        values = np.asarray(values, dtype=float)
        self.values = values
        n = values.size
        if n == 0:
            raise DomainError("cannot build a sparse table over no values")
        levels = [np.arange(n)]
        width = 1
        while 2 * width <= n:
            prev = levels[-1]
            left, right = prev[: n - 2 * width + 1], prev[width : n - width + 1]
            levels.append(np.where(values[right] > values[left], right, left))
            width *= 2
        self._levels = levels

    def argmax(self, start, stop):
        """Index of the maximum on the inclusive index range ``[start, stop]``.

        Works elementwise on integer arrays; every range must be non-empty.
        """
        start = np.asarray(start, dtype=np.int64)
        stop = np.asarray(stop, dtype=np.int64)
        length = stop - start + 1
        if np.any(length < 1):
            raise RangeError("empty index range")
        depth = np.floor(np.log2(length)).astype(np.int64)
        # log2 can round down at exact powers of two; fix up so 2**depth <= length < 2**(depth+1).
        depth = np.where((1 << (depth + 1)) <= length, depth + 1, depth)
        depth = np.where((1 << depth) > length, depth - 1, depth)
        if depth.ndim == 0:
            lvl = self._levels[int(depth)]
            a, b = lvl[int(start)], lvl[int(stop) - (1 << int(depth)) + 1]
            return int(b) if self.values[b] > self.values[a] else int(a)
        out = np.empty(start.shape, dtype=np.int64)
        for d in np.unique(depth):
            sel = depth == d
            lvl = self._levels[int(d)]
            a = lvl[start[sel]]
            b = lvl[stop[sel] - (1 << int(d)) + 1]
            out[sel] = np.where(self.values[b] > self.values[a], b, a)
        return out

    def max(self, start, stop):
        return self.values[self.argmax(start, stop)]


@dataclass(frozen=True, eq=False)
class QuantileGrid:
    """Values ``c_gamma(v)`` on ``gamma_i = gamma_lo + i * step``.

    A cubic spline through the nodes supplies off-node values; with the
    default step its interpolation error is below 1e-9.
    """

    params: ModelParams
    v: float
    gamma_lo: float
    step: float
    values: np.ndarray
    tol: float = DEFAULT_QUANTILE_TOL
    _table: SparseTable = field(init=False, repr=False)
    _spline: CubicSpline = field(init=False, repr=False)

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 1 or values.size < 4:
            raise DomainError("a quantile grid needs at least 4 nodes")
        if not self.step > 0:
            raise DomainError("grid step must be positive")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "_table", SparseTable(values))
        object.__setattr__(self, "_spline", CubicSpline(self.gammas, values))

    @property
    def gammas(self) -> np.ndarray:
        return self.gamma_lo + self.step * np.arange(self.values.size)

    @property
    def gamma_hi(self) -> float:
        return self.gamma_lo + self.step * (self.values.size - 1)

    @property
    def range_max_index(self) -> SparseTable:
        return self._table

    def covers(self, lo, hi) -> bool:
        slack = 1e-9 * self.step
        return bool(np.all(np.asarray(lo) >= self.gamma_lo - slack) and np.all(np.asarray(hi) <= self.gamma_hi + slack))

    def value_at(self, gamma):
        """Interpolated ``c_gamma(v)``; raises :class:`RangeError` off-grid."""
        gamma = np.asarray(gamma, dtype=float)
        if not self.covers(gamma, gamma):
            raise RangeError(
                f"gamma outside grid [{self.gamma_lo:g}, {self.gamma_hi:g}]"
            )
        out = self._spline(gamma)
        return float(out) if out.ndim == 0 else out

    def cache_key(self) -> dict:
        return grid_key(self.params, self.v, self.gamma_lo, self.gamma_hi, self.step, self.tol)


def grid_key(params, v, gamma_lo, gamma_hi, step, tol) -> dict:
    return {
        "version": GRID_FORMAT_VERSION,
        "rho": float(params.rho).hex(),
        "cutoff": float(params.cutoff).hex(),
        "v": float(v).hex(),
        "gamma_lo": float(gamma_lo).hex(),
        "gamma_hi": float(gamma_hi).hex(),
        "step": float(step).hex(),
        "tol": float(tol).hex(),
    }


def _node_count(gamma_lo, gamma_hi, step) -> int:
    return int(math.ceil((gamma_hi - gamma_lo) / step - 1e-9)) + 1


def build_quantile_grid(
    params: ModelParams,
    v: float,
    gamma_lo: float,
    gamma_hi: float,
    step: float = DEFAULT_STEP,
    tol: float = DEFAULT_QUANTILE_TOL,
) -> QuantileGrid:
    """Tabulate ``c_gamma(v)`` from ``gamma_lo`` to ``gamma_hi`` (inclusive,
    rounded outward to a whole number of steps)."""
    if not (math.isfinite(gamma_lo) and math.isfinite(gamma_hi)):
        raise DomainError("grid bounds must be finite")
    if not step > 0:
        raise DomainError("grid step must be positive")
    if not gamma_lo < gamma_hi:
        raise DomainError("grid needs gamma_lo < gamma_hi")
    count = _node_count(gamma_lo, gamma_hi, step)
    gammas = gamma_lo + step * np.arange(count)
    values = distribution.quantiles(params, gammas, v, tol=tol)
    return QuantileGrid(params, float(v), float(gamma_lo), float(step), values, tol)


def interval_sup(grid: QuantileGrid, lo, hi):
    """``sup { c_gamma(v) : lo <= gamma <= hi }`` from the tabulated curve.

    Combines the range maximum over grid nodes inside the interval, the
    spline values at both endpoints, and a parabolic refinement around the
    best interior node (the vertex through its two neighbours, evaluated
    on the spline).  Vectorised over ``lo`` and ``hi``.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    scalar = lo.ndim == 0 and hi.ndim == 0
    lo, hi = np.broadcast_arrays(np.atleast_1d(lo), np.atleast_1d(hi))
    if np.any(hi < lo):
        raise DomainError("interval needs lo <= hi")
    if not grid.covers(lo, hi):
        raise RangeError(
            f"interval outside grid [{grid.gamma_lo:g}, {grid.gamma_hi:g}]"
        )
    g0, h, last = grid.gamma_lo, grid.step, grid.values.size - 1
    values = grid.values
    best = np.maximum(grid._spline(lo), grid._spline(hi))

    i0 = np.clip(np.ceil((lo - g0) / h - 1e-9).astype(np.int64), 0, last)
    i1 = np.clip(np.floor((hi - g0) / h + 1e-9).astype(np.int64), 0, last)
    has_nodes = i0 <= i1
    if has_nodes.any():
        j = grid._table.argmax(i0[has_nodes], i1[has_nodes])
        node_best = values[j]
        jl, jr = np.clip(j - 1, 0, last), np.clip(j + 1, 0, last)
        fl, fm, fr = values[jl], values[j], values[jr]
        curv = fl - 2.0 * fm + fr
        interior = (j > 0) & (j < last) & (curv < 0)
        with np.errstate(divide="ignore", invalid="ignore"):
            offset = np.where(interior, 0.5 * (fl - fr) / curv, 0.0)
        x = np.clip(g0 + h * (j + offset), lo[has_nodes], hi[has_nodes])
        refined = np.where(interior, grid._spline(x), node_best)
        best[has_nodes] = np.maximum(best[has_nodes], np.maximum(node_best, refined))
    return float(best[0]) if scalar else best


class GridCache:
    """Grids held in memory and, when a directory is set, persisted to disk.

    Files are ``.npz`` archives holding the node values and a JSON header
    with the full key (all numbers stored as exact hex floats) and the
    SHA-256 of the value bytes, so a load either reproduces the grid
    bit-for-bit or is rejected and rebuilt.
    """

    def __init__(self, directory: str | os.PathLike | None = None):
        if directory is None:
            directory = os.environ.get(CACHE_ENV_VAR) or None
        self.directory = Path(directory) if directory else None
        self._memory: dict[str, QuantileGrid] = {}
        self._lock = threading.Lock()
        self.events: list[tuple[str, str]] = []

    @staticmethod
    def _name(key: dict) -> str:
        blob = json.dumps(key, sort_keys=True).encode()
        return "grid-" + hashlib.sha256(blob).hexdigest()[:24]

    def get(self, params, v, gamma_lo, gamma_hi, step=DEFAULT_STEP, tol=DEFAULT_QUANTILE_TOL) -> QuantileGrid:
        # Key on the realised upper node so saved and requested keys agree.
        gamma_hi = gamma_lo + step * (_node_count(gamma_lo, gamma_hi, step) - 1)
        key = grid_key(params, v, gamma_lo, gamma_hi, step, tol)
        name = self._name(key)
        with self._lock:
            grid = self._memory.get(name)
            if grid is not None:
                return grid
            status = "miss"
            if self.directory is not None:
                path = self.directory / f"{name}.npz"
                if path.exists():
                    grid = load_grid(path, expected_key=key)
                    status = "hit" if grid is not None else "corrupt"
            if grid is None:
                grid = build_quantile_grid(params, v, gamma_lo, gamma_hi, step, tol)
                if self.directory is not None:
                    self.directory.mkdir(parents=True, exist_ok=True)
                    save_grid(grid, self.directory / f"{name}.npz")
            self._memory[name] = grid
            self.events.append((name, status))
            return grid


def _checksum(values: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(values, dtype="<f8").tobytes()).hexdigest()


def save_grid(grid: QuantileGrid, path) -> None:
    header = dict(grid.cache_key(), count=int(grid.values.size), sha256=_checksum(grid.values))
    buf = io.BytesIO()
    np.savez(buf, values=np.asarray(grid.values, dtype="<f8"), header=np.array(json.dumps(header, sort_keys=True)))
    tmp = Path(str(path) + ".tmp")
    tmp.write_bytes(buf.getvalue())
    os.replace(tmp, path)


def load_grid(path, expected_key: dict | None = None) -> QuantileGrid | None:
    """Read a grid file; ``None`` if it is unreadable, stale or fails its checksum."""
    try:
        with np.load(path, allow_pickle=False) as data:
            header = json.loads(str(data["header"]))
            values = np.array(data["values"], dtype=float)
    except Exception:  # any decoding failure means the file is unusable
        return None
    if header.get("version") != GRID_FORMAT_VERSION or header.get("sha256") != _checksum(values):
        return None
    if header.get("count") != values.size:
        return None
    key = {k: header.get(k) for k in grid_key(ModelParams(0.0, 1.0), 0.5, 0.0, 1.0, 1.0, 1.0)}
    if expected_key is not None and key != expected_key:
        return None
    try:
        params = ModelParams(float.fromhex(key["rho"]), float.fromhex(key["cutoff"]))
        return QuantileGrid(
            params, float.fromhex(key["v"]), float.fromhex(key["gamma_lo"]),
            float.fromhex(key["step"]), values, float.fromhex(key["tol"]),
        )
    except (DomainError, TypeError, ValueError):
        return None
