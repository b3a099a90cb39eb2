"""Uniform 1D / radial grids and the discrete operators built on them.

Fields are plain float64 arrays with one value per cell; the grid that gives
them meaning is passed alongside. Radial grids (``dim == 2``) store a
radially symmetric planar field on ``[0, r_max]`` with annulus volumes
``2*pi*r*h``.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import EmptySupport, HslabError

SUPPORT_FLOOR = 1e-30


@dataclass(frozen=True)
class Grid:
    dim: int
    n_cells: int
    x_lo: float
    x_hi: float

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError("dim must be 1 or 2 (radial)")
        if self.n_cells < 8:
            raise ValueError("n_cells must be >= 8")
        if not self.x_hi > self.x_lo:
            raise ValueError("empty extent")
        if self.dim == 2 and self.x_lo != 0.0:
            raise ValueError("radial grids start at r = 0")

    @property
    def radial(self) -> bool:
        return self.dim == 2

    @property
    def h(self) -> float:
        return (self.x_hi - self.x_lo) / self.n_cells

    @cached_property
    def x(self) -> np.ndarray:
        return self.x_lo + (np.arange(self.n_cells) + 0.5) * self.h

    @cached_property
    def faces(self) -> np.ndarray:
        return self.x_lo + np.arange(self.n_cells + 1) * self.h

    @cached_property
    def vol(self) -> np.ndarray:
        if self.radial:
            return 2.0 * np.pi * self.x * self.h
        return np.full(self.n_cells, self.h)

    @cached_property
    def area(self) -> np.ndarray:
        """Face measures, boundary faces included."""
        if self.radial:
            return 2.0 * np.pi * self.faces
        return np.ones(self.n_cells + 1)

    def zeros(self) -> np.ndarray:
        return np.zeros(self.n_cells)

    def locate(self, x):
        """Index of the cell containing each point (clipped to the grid)."""
        idx = np.floor((np.asarray(x, dtype=float) - self.x_lo) / self.h).astype(int)
        return np.clip(idx, 0, self.n_cells - 1)

    def interp(self, u, x):
        """Linear interpolation between cell centers, constant beyond the end centers."""
        xq = np.asarray(x, dtype=float)
        if self.radial:
            xq = np.abs(xq)
        return np.interp(xq, self.x, u)


def face_mean(u: np.ndarray) -> np.ndarray:
    """Arithmetic face averages with boundary faces copied from the adjacent cell."""
    out = np.empty(u.size + 1)
    out[1:-1] = 0.5 * (u[1:] + u[:-1])
    out[0] = u[0]
    out[-1] = u[-1]
    return out


def grad(grid: Grid, u: np.ndarray) -> np.ndarray:
    h = grid.h
    g = np.empty_like(u, dtype=float)
    g[1:-1] = (u[2:] - u[:-2]) / (2.0 * h)
    g[0] = (u[1] - u[0]) / h
    g[-1] = (u[-1] - u[-2]) / h
    return g


def div_m_grad(grid: Grid, m: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Conservative ``div(m grad u)`` with zero-flux boundary faces."""
    h = grid.h
    flux = np.zeros(grid.n_cells + 1)
    mf = 0.5 * (m[1:] + m[:-1])
    flux[1:-1] = grid.area[1:-1] * mf * (u[1:] - u[:-1]) / h
    return (flux[1:] - flux[:-1]) / grid.vol


def inner(grid: Grid, u: np.ndarray, w: np.ndarray) -> float:
    return float(np.sum(grid.vol * u * w))


def norms(grid: Grid, u: np.ndarray) -> dict:
    a = np.abs(u)
    return {
        "L1": float(np.sum(grid.vol * a)),
        "L2": float(np.sqrt(np.sum(grid.vol * a**2))),
        "L4": float(np.sum(grid.vol * a**4) ** 0.25),
        "Linf": float(a.max()) if a.size else 0.0,
    }


def bv_seminorm(grid: Grid, u: np.ndarray) -> float:
    return float(np.sum(grid.vol * np.abs(grad(grid, u))))


def support(grid: Grid, u: np.ndarray, theta: float):
    """Cells with ``u > theta * max(u, floor)`` and the hull of their centers.

    Raises EmptySupport when no cell clears the threshold.
    """
    if theta <= 0:
        raise ValueError("theta must be positive")
    level = theta * max(float(np.max(u)), SUPPORT_FLOOR)
    mask = u > level
    if not mask.any():
        raise EmptySupport("no cell exceeds the support threshold")
    idx = np.flatnonzero(mask)
    return mask, (float(grid.x[idx[0]]), float(grid.x[idx[-1]]))


def support_mask(grid: Grid, u: np.ndarray, theta: float) -> np.ndarray:
    """Like :func:`support` but returns an all-False mask instead of raising."""
    level = theta * max(float(np.max(u)), SUPPORT_FLOOR)
    return u > level


def erode(grid: Grid, mask: np.ndarray, n: int) -> np.ndarray:
    """Keep cells whose ``n`` neighbours on each side are all in the mask.

    Cells beyond the outer edge count as outside; on radial grids the axis is
    a symmetry line, so the reflected cells stand in for the missing ones.
    """
    if n <= 0:
        return mask.copy()
    m = mask.astype(bool)
    if grid.radial:
        padded = np.concatenate([m[:n][::-1], m, np.zeros(n, bool)])
    else:
        padded = np.concatenate([np.zeros(n, bool), m, np.zeros(n, bool)])
    out = m.copy()
    for s in range(1, n + 1):
        out &= padded[n - s : n - s + m.size]
        out &= padded[n + s : n + s + m.size]
    return out


def edge_band(grid: Grid, mask: np.ndarray, n: int) -> np.ndarray:
    """Cells within ``n`` cells of a transition of ``mask``."""
    m = mask.astype(bool)
    trans = np.flatnonzero(m[1:] != m[:-1])
    band = np.zeros(m.size, bool)
    for j in trans:
        # transition lies between cells j and j+1
        band[max(j + 1 - n, 0) : min(j + 1 + n, m.size)] = True
    return band


# -- serialization --------------------------------------------------------

SNAPSHOT_MAGIC = b"HSLB"
SNAPSHOT_VERSION = 1
_HEADER = struct.Struct("<4sIIIIddd")


def write_field_csv(path, grid: Grid, columns: dict) -> None:
    """CSV with an ``x`` column followed by the given named fields."""
    names = list(columns)
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(["x"] + names) + "\n")
        data = [grid.x] + [np.asarray(columns[k], dtype=float) for k in names]
        for row in zip(*data):
            fh.write(",".join(fmt(v) for v in row) + "\n")


def read_field_csv(path):
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    arr = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return {name: arr[:, i] for i, name in enumerate(header)}


def fmt(v: float) -> str:
    """Fixed 17-significant-digit float formatting used by every CSV writer."""
    return f"{float(v):.17g}"


def write_snapshot(path, grid: Grid, t: float, fields) -> None:
    fields = [np.ascontiguousarray(f, dtype="<f8") for f in fields]
    for f in fields:
        if f.shape != (grid.n_cells,):
            raise HslabError("field length does not match grid")
    with open(path, "wb") as fh:
        fh.write(
            _HEADER.pack(
                SNAPSHOT_MAGIC, SNAPSHOT_VERSION, grid.dim, grid.n_cells,
                len(fields), grid.x_lo, grid.x_hi, float(t),
            )
        )
        for f in fields:
            fh.write(f.tobytes())


def read_snapshot(path):
    """Return ``(grid, t, fields)`` from a binary snapshot."""
    with open(path, "rb") as fh:
        raw = fh.read()
    magic, version, dim, n, nf, lo, hi, t = _HEADER.unpack_from(raw, 0)
    if magic != SNAPSHOT_MAGIC:
        raise HslabError(f"{path}: not an hslab snapshot")
    if version != SNAPSHOT_VERSION:
        raise HslabError(f"{path}: unsupported snapshot version {version}")
    payload = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    if payload.size != n * nf:
        raise HslabError(f"{path}: truncated payload")
    grid = Grid(dim, n, lo, hi)
    return grid, t, [payload[i * n : (i + 1) * n].astype(float) for i in range(nf)]
