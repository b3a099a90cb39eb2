"""Problem data m, b, f: a small registry of analytic families and the frames
sampled from them.

Every family evaluates ``value(x, t)`` and, when it can, the analytic
derivatives ``dx``, ``dxx`` and ``dt``. On radial grids ``x`` is the radius
and ``b`` is the radial component of the drift.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EvalDomain
from .grid import Grid, face_mean, support_mask
from .report import DiagnosticsReport

FAMILIES = {}


def register(cls):
    FAMILIES[cls.name] = cls
    return cls


class Family:
    name = ""
    params = ()
    analytic = True

    def __init__(self, **kw):
        unknown = set(kw) - set(self.params)
        if unknown:
            raise ValueError(f"{self.name}: unknown parameters {sorted(unknown)}")
        self.p = {k: kw.get(k, self.defaults().get(k)) for k in self.params}
        missing = [k for k, v in self.p.items() if v is None]
        if missing:
            raise ValueError(f"{self.name}: missing parameters {missing}")

    @classmethod
    def defaults(cls):
        return {}

    def __call__(self, x, t):
        return self.value(np.asarray(x, dtype=float), float(t))

    def to_dict(self):
        return {"family": self.name, **self.p}

    def __eq__(self, other):
        return isinstance(other, Family) and self.to_dict() == other.to_dict()

    def __repr__(self):
        args = ", ".join(f"{k}={v!r}" for k, v in self.p.items())
        return f"{self.name}({args})"

    @property
    def time_independent(self) -> bool:
        return False

    def smooth_at_axis(self) -> bool:
        """Whether the profile is an even, smooth function of r at r = 0."""
        return False


@register
class Constant(Family):
    name = "constant"
    params = ("value",)

    def value(self, x, t):
        return np.full_like(x, self.p["value"], dtype=float)

    def dx(self, x, t):
        return np.zeros_like(x, dtype=float)

    dxx = dt = dx

    @property
    def time_independent(self):
        return True

    def smooth_at_axis(self):
        return True


@register
class GaussDecay(Family):
    """``amp * exp(-at*t - ax*(x - center)**2)``; the Figure-1 bound uses ax=0.1, at=1/6."""

    name = "gauss_decay"
    params = ("amp", "ax", "at", "center")

    @classmethod
    def defaults(cls):
        return {"amp": 1.0, "center": 0.0}

    def value(self, x, t):
        p = self.p
        return p["amp"] * np.exp(-p["at"] * t - p["ax"] * (x - p["center"]) ** 2)

    def dx(self, x, t):
        return -2.0 * self.p["ax"] * (x - self.p["center"]) * self.value(x, t)

    def dxx(self, x, t):
        ax = self.p["ax"]
        y = x - self.p["center"]
        return (4.0 * ax**2 * y**2 - 2.0 * ax) * self.value(x, t)

    def dt(self, x, t):
        return -self.p["at"] * self.value(x, t)

    @property
    def time_independent(self):
        return self.p["at"] == 0

    def smooth_at_axis(self):
        return self.p["center"] == 0


@register
class Linear(Family):
    """``c0 + c1*x + ct*t``."""

    name = "linear"
    params = ("c0", "c1", "ct")

    @classmethod
    def defaults(cls):
        return {"c0": 0.0, "c1": 0.0, "ct": 0.0}

    def value(self, x, t):
        p = self.p
        return p["c0"] + p["c1"] * x + p["ct"] * t

    def dx(self, x, t):
        return np.full_like(x, self.p["c1"], dtype=float)

    def dxx(self, x, t):
        return np.zeros_like(x, dtype=float)

    def dt(self, x, t):
        return np.full_like(x, self.p["ct"], dtype=float)

    @property
    def time_independent(self):
        return self.p["ct"] == 0

    def smooth_at_axis(self):
        return self.p["c1"] == 0


@register
class Sine(Family):
    """``offset + amp*sin(freq*x + phase)``."""

    name = "sine"
    params = ("amp", "freq", "phase", "offset")

    @classmethod
    def defaults(cls):
        return {"freq": 1.0, "phase": 0.0, "offset": 0.0}

    def value(self, x, t):
        p = self.p
        return p["offset"] + p["amp"] * np.sin(p["freq"] * x + p["phase"])

    def dx(self, x, t):
        p = self.p
        return p["amp"] * p["freq"] * np.cos(p["freq"] * x + p["phase"])

    def dxx(self, x, t):
        p = self.p
        return -p["amp"] * p["freq"] ** 2 * np.sin(p["freq"] * x + p["phase"])

    def dt(self, x, t):
        return np.zeros_like(x, dtype=float)

    @property
    def time_independent(self):
        return True


@register
class Tabulated(Family):
    """Piecewise-linear table in space; derivatives come from finite differences."""

    name = "tabulated"
    params = ("xs", "values")
    analytic = False

    def __init__(self, **kw):
        super().__init__(**kw)
        self.p["xs"] = [float(v) for v in self.p["xs"]]
        self.p["values"] = [float(v) for v in self.p["values"]]
        if len(self.p["xs"]) != len(self.p["values"]) or len(self.p["xs"]) < 2:
            raise ValueError("tabulated: xs and values must have equal length >= 2")
        if np.any(np.diff(self.p["xs"]) <= 0):
            raise ValueError("tabulated: xs must be strictly increasing")

    def value(self, x, t):
        return np.interp(x, self.p["xs"], self.p["values"])

    @property
    def time_independent(self):
        return True

    def smooth_at_axis(self):
        return True


def make_family(desc) -> Family:
    """Build a family from ``{"family": name, **params}`` (or pass one through)."""
    if isinstance(desc, Family):
        return desc
    if isinstance(desc, (int, float)):
        return Constant(value=float(desc))
    desc = dict(desc)
    name = desc.pop("family")
    try:
        cls = FAMILIES[name]
    except KeyError:
        raise ValueError(f"unknown coefficient family {name!r}") from None
    return cls(**desc)


def _fd1(fun, x, t, h, axis):
    """4th-order central first derivative of ``fun`` in x (axis 0) or t (axis 1)."""
    if axis == 0:
        return (-fun(x + 2 * h, t) + 8 * fun(x + h, t) - 8 * fun(x - h, t) + fun(x - 2 * h, t)) / (12 * h)
    return (-fun(x, t + 2 * h) + 8 * fun(x, t + h) - 8 * fun(x, t - h) + fun(x, t - 2 * h)) / (12 * h)


@dataclass
class CoefficientSpec:
    m: Family
    b: Family
    f: Family
    delta: float
    domain: tuple
    dim: int = 1
    # third alternative of the hard-constraint restriction, accepted as a
    # declaration only: no barrier is built for it
    decay_at_infinity: bool = False

    def __post_init__(self):
        self.m = make_family(self.m)
        self.b = make_family(self.b)
        self.f = make_family(self.f)
        self.domain = (float(self.domain[0]), float(self.domain[1]))
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if self.dim not in (1, 2):
            raise ValueError("dim must be 1 or 2")
        if self.dim == 2 and not self.m.smooth_at_axis():
            raise ValueError("dim=2 requires m radial in space (smooth at the axis)")

    def to_dict(self):
        return {
            "m": self.m.to_dict(),
            "b": self.b.to_dict(),
            "f": self.f.to_dict(),
            "delta": self.delta,
            "domain": list(self.domain),
            "dim": self.dim,
            "decay_at_infinity": self.decay_at_infinity,
        }

    # point evaluations used by streamlines and barriers

    def divb(self, x, t, h=1e-3):
        x = np.asarray(x, dtype=float)
        bx = self.b.dx(x, t) if self.b.analytic else _fd1(self.b, x, t, h, 0)
        if self.dim == 2:
            r = np.where(np.abs(x) > 0, x, 1.0)
            # b_r/r -> b_r'(0) on the axis
            return bx + np.where(np.abs(x) > 0, self.b(x, t) / r, bx)
        return bx

    def m_t(self, x, t, h=1e-3):
        x = np.asarray(x, dtype=float)
        return self.m.dt(x, t) if self.m.analytic else _fd1(self.m, x, t, h, 1)

    def m_x(self, x, t, h=1e-3):
        x = np.asarray(x, dtype=float)
        return self.m.dx(x, t) if self.m.analytic else _fd1(self.m, x, t, h, 0)

    def forcing(self, x, t, h=1e-3):
        """Pointwise ``F = (div(m b) + m f - m_t) / m``."""
        x = np.asarray(x, dtype=float)
        m = self.m(x, t)
        div_mb = m * self.divb(x, t, h) + self.m_x(x, t, h) * self.b(x, t)
        return (div_mb + m * self.f(x, t) - self.m_t(x, t, h)) / m


@dataclass(frozen=True)
class CoefficientFrame:
    t: float
    x: np.ndarray
    m: np.ndarray
    m_x: np.ndarray
    dtm: np.ndarray
    b: np.ndarray
    divb: np.ndarray
    f: np.ndarray
    F: np.ndarray
    lam: np.ndarray
    div_mb: np.ndarray
    m_face: np.ndarray
    b_face: np.ndarray
    fd_fallback: bool = False
    lam_x: np.ndarray = field(default=None, repr=False)
    lam_xx: np.ndarray = field(default=None, repr=False)


def eval_frame(spec: CoefficientSpec, grid: Grid, t: float) -> CoefficientFrame:
    """Sample m, b, f and the derived fields on ``grid`` at time ``t``."""
    if t < 0:
        raise ValueError("t must be >= 0")
    if grid.dim != spec.dim or abs(grid.x_lo - spec.domain[0]) > 1e-12 or abs(grid.x_hi - spec.domain[1]) > 1e-12:
        raise ValueError("grid does not match the coefficient domain")
    x, h = grid.x, grid.h
    m = spec.m(x, t)
    m_faces = spec.m(grid.faces, t)
    lo = min(float(m.min()), float(m_faces.min()))
    if not lo >= spec.delta:
        raise EvalDomain(f"min m = {lo:.6g} < delta = {spec.delta:.6g} at t = {t:.6g}")
    fd = not (spec.m.analytic and spec.b.analytic)

    if spec.m.analytic:
        m_x = spec.m.dx(x, t)
        m_xx = spec.m.dxx(x, t)
        dtm = spec.m.dt(x, t)
    else:
        m_x = _fd1(spec.m, x, t, h, 0)
        m_xx = _fd1(lambda y, s: _fd1(spec.m, y, s, h, 0), x, t, h, 0)
        dtm = np.zeros_like(x) if spec.m.time_independent else _fd1(spec.m, x, t, h, 1)
    b = spec.b(x, t)
    if spec.b.analytic:
        b_x = spec.b.dx(x, t)
    else:
        b_x = _fd1(spec.b, x, t, h, 0)
    divb = b_x + b / x if grid.radial else b_x
    f = spec.f(x, t)
    div_mb = m * divb + m_x * b
    F = (div_mb + m * f - dtm) / m
    lam_x = m_x / m
    lam_xx = m_xx / m - lam_x**2
    return CoefficientFrame(
        t=float(t), x=x, m=m, m_x=m_x, dtm=dtm, b=b, divb=divb, f=f, F=F,
        lam=np.log(m), div_mb=div_mb, m_face=face_mean(m),
        b_face=spec.b(grid.faces, t), fd_fallback=fd, lam_x=lam_x, lam_xx=lam_xx,
    )


def congestion_margin(frame: CoefficientFrame, region=None) -> float:
    """``min(m f + div(m b) - m_t)`` over ``region``; congestion iff positive."""
    g = frame.m * frame.f + frame.div_mb - frame.dtm
    if region is not None:
        region = np.asarray(region, dtype=bool)
        if not region.any():
            raise ValueError("region is empty")
        g = g[region]
    return float(g.min())


def validate_assumptions(spec: CoefficientSpec, grid: Grid, rho0, k_list=(), *,
                         t_horizon=1.0, guard_cells=5) -> DiagnosticsReport:
    """Check the standing assumptions on the data and an initial density."""
    rep = DiagnosticsReport("assumptions")
    rho0 = np.asarray(rho0, dtype=float)

    times = np.linspace(0.0, t_horizon, 11)
    m_min = min(min(float(spec.m(grid.x, s).min()), float(spec.m(grid.faces, s).min())) for s in times)
    rep.add("m_min_vs_delta", m_min, spec.delta, upper=False)
    rep.add("rho0_finite", float(np.all(np.isfinite(rho0))), passed=bool(np.all(np.isfinite(rho0))))
    rep.add("rho0_min", float(rho0.min()), 0.0, upper=False)

    if grid.radial:
        inside = rho0[-guard_cells:]
    else:
        inside = np.concatenate([rho0[:guard_cells], rho0[-guard_cells:]])
    rep.add("rho0_support_inside", float(np.abs(inside).max()), 0.0)

    linf = float(np.abs(rho0).max())
    from .grid import bv_seminorm, norms

    rep.add("rho0_Linf", linf, passed=bool(np.isfinite(linf)))
    rep.add("rho0_L1", norms(grid, rho0)["L1"], passed=True)
    bv = bv_seminorm(grid, rho0)
    rep.add("rho0_BV", bv, passed=bool(np.isfinite(bv)))

    if len(k_list):
        m0 = spec.m(grid.x, 0.0)
        v0 = np.clip(rho0, 0.0, None) / m0
        with np.errstate(over="ignore"):
            pk = [float(np.max(k / (k - 1) * v0 ** (k - 1))) for k in k_list]
        p_sup = max(pk)
        rep.add("p0_Linf_over_k", p_sup, passed=bool(np.isfinite(p_sup)))
        if v0.max() > 1.0:
            rep.notes.append("initial normalized density exceeds 1: p_k(0) is not bounded uniformly in k")
    if spec.dim == 2:
        rep.add("m_radial", 1.0, passed=spec.m.smooth_at_axis())
    if spec.decay_at_infinity:
        rep.notes.append("decay-at-infinity restriction declared; no barrier is built for it")
    return rep


def congested_over_support(spec: CoefficientSpec, grid: Grid, times, fields, theta=1e-3) -> float:
    """Smallest congestion margin over the theta-support of each field at its time."""
    worst = math.inf
    for t, u in zip(times, fields):
        mask = support_mask(grid, u, theta)
        if mask.any():
            worst = min(worst, congestion_margin(eval_frame(spec, grid, t), mask))
    return worst
