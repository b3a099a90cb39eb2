"""Explicit barriers for the pressure equation

    d_t p = |grad p|^2 + grad p . b + (k-1) p ((1/m) div(m grad p) + F),

a compactly supported super-solution Z built from the radial profile phi and
a shrinking sub-solution Pi centred on a streamline, with stencil residuals
and comparisons against solver output.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.interpolate import CubicHermiteSpline

from .coefficients import congestion_margin, eval_frame
from .errors import InitialOrderingFails, NotCongested, RegionOutsidePositivity
from .grid import Grid, div_m_grad, erode, grad
from .report import _num
from .streamlines import DT_ODE, integrate_streamline

EROSION = 3


# -- radial profile ---------------------------------------------------------

@dataclass
class RadialPhi:
    """``phi(r, t) = (1/d) int_0^r r'/m(r', t) dr'`` sampled at nodes ``r``.

    In 1D the profile is built separately on each side of the origin
    (``phi_left`` uses m(-r)), which makes ``(m phi')' = 1`` hold for any m.
    """
    t: float
    dim: int
    r: np.ndarray  # slopes below are d/dr on both sides
    phi: np.ndarray
    dphi: np.ndarray
    phi_t: np.ndarray
    phi_left: np.ndarray | None = None
    dphi_left: np.ndarray | None = None
    phi_t_left: np.ndarray | None = None
    K_phi: float = 0.0
    M_phi: float = 0.0

    def _side(self, x, right, left):
        x = np.asarray(x, float)
        r = np.abs(x)
        if np.any(r > self.r[-1] * (1 + 1e-12)):
            raise ValueError("point beyond r_max of the radial profile")
        out = np.interp(r, self.r, right)
        if left is not None:
            out = np.where(x < 0, np.interp(r, self.r, left), out)
        return out

    def __call__(self, x):
        """phi at ``x`` by cubic Hermite interpolation with the exact slope."""
        x = np.asarray(x, float)
        r = np.abs(x)
        if np.any(r > self.r[-1] * (1 + 1e-12)):
            raise ValueError("point beyond r_max of the radial profile")
        out = CubicHermiteSpline(self.r, self.phi, self.dphi)(r)
        if self.phi_left is not None:
            left = CubicHermiteSpline(self.r, self.phi_left, self.dphi_left)(r)
            out = np.where(x < 0, left, out)
        return out

    def dt(self, x):
        return self._side(x, self.phi_t, self.phi_t_left)


def _half_profile(m, t, r, dim, sign):
    mr = np.asarray(m(sign * r, t), float)
    dphi = r / (dim * mr)
    phi = cumulative_trapezoid(dphi, r, initial=0.0)
    if getattr(m, "analytic", True) and hasattr(m, "dt"):
        mt = np.asarray(m.dt(sign * r, t), float) * np.ones_like(r)
    else:
        e = 1e-4
        mt = (np.asarray(m(sign * r, t + e), float) - np.asarray(m(sign * r, max(t - e, 0.0)), float)) / (
            t + e - max(t - e, 0.0))
    phi_t = cumulative_trapezoid(-r * mt / (dim * mr**2), r, initial=0.0)
    return phi, dphi, phi_t


def _constants(prof: RadialPhi):
    K = M = 0.0
    sides = [(prof.phi, prof.dphi, prof.phi_t)]
    if prof.phi_left is not None:
        sides.append((prof.phi_left, prof.dphi_left, prof.phi_t_left))
    for phi, dphi, phi_t in sides:
        pos = phi > 0
        if pos.any():
            K = max(K, float(np.max(dphi[pos] ** 2 / phi[pos])))
            M = max(M, float(np.max(np.abs(phi_t[pos]) / phi[pos])))
    return K, M


def build_radial_phi(m, t, r_max, n, dim=1, *, fit_times=None) -> RadialPhi:
    """Composite-trapezoid profile at ``n`` nodes on ``[0, r_max]``.

    ``K_phi`` and ``M_phi`` are maxima of ``|phi'|^2/phi`` and ``|phi_t|/phi``
    over the nodes (r > 0) and over ``fit_times`` (default: just ``t``).
    """
    if n < 3:
        raise ValueError("n must be >= 3")
    if not r_max > 0:
        raise ValueError("r_max must be positive")
    r = np.linspace(0.0, float(r_max), int(n))

    def at(s):
        phi, dphi, phi_t = _half_profile(m, s, r, dim, 1.0)
        prof = RadialPhi(float(s), dim, r, phi, dphi, phi_t)
        if dim == 1:
            prof.phi_left, prof.dphi_left, prof.phi_t_left = _half_profile(m, s, r, dim, -1.0)
        return prof

    prof = at(t)
    K, M = _constants(prof)
    for s in fit_times if fit_times is not None else []:
        k2, m2 = _constants(at(s))
        K, M = max(K, k2), max(M, m2)
    prof.K_phi, prof.M_phi = K, M
    prof._builder = (m, r_max, n, dim)
    return prof


def _profile_at(phi: RadialPhi, t):
    if abs(phi.t - t) < 1e-15:
        return phi
    m, r_max, n, dim = phi._builder
    out = build_radial_phi(m, t, r_max, n, dim)
    out.K_phi, out.M_phi = phi.K_phi, phi.M_phi
    return out


# -- barriers -------------------------------------------------------------

@dataclass
class SuperBarrierZ:
    """``Z = alpha (R(t) - phi)+`` with ``R(t) = (gamma + M) exp(c t) - M``,
    ``c = 3/2 alpha^2 K_phi + M_phi`` and ``M = sup|b|^2 / 2``."""
    alpha: float
    gamma: float
    M: float
    phi: RadialPhi
    kind: str = field(default="super", init=False)

    @property
    def rate(self) -> float:
        return 1.5 * self.alpha**2 * self.phi.K_phi + self.phi.M_phi

    def R(self, t):
        return (self.gamma + self.M) * math.exp(self.rate * t) - self.M

    def dR(self, t):
        return self.rate * (self.gamma + self.M) * math.exp(self.rate * t)

    def value(self, x, t):
        return self.alpha * np.maximum(self.R(t) - _profile_at(self.phi, t)(x), 0.0)

    def dt(self, x, t):
        prof = _profile_at(self.phi, t)
        inside = self.R(t) - prof(x) > 0
        return np.where(inside, self.alpha * (self.dR(t) - prof.dt(x)), 0.0)

    def to_dict(self):
        return {"kind": "Z", "alpha": self.alpha, "gamma": self.gamma, "M": self.M,
                "K_phi": self.phi.K_phi, "M_phi": self.phi.M_phi, "rate": self.rate}


def build_super_Z(phi: RadialPhi, gamma, b_sup, alpha=1.0) -> SuperBarrierZ:
    if not gamma > 1:
        raise ValueError("gamma must exceed 1")
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    return SuperBarrierZ(float(alpha), float(gamma), 0.5 * float(b_sup) ** 2, phi)


def lipschitz_estimate(b, grid: Grid, times, inflation=1.1) -> float:
    """Largest difference quotient of ``b`` over grid faces and sample times, inflated."""
    worst = 0.0
    for t in times:
        vals = np.asarray(b(grid.faces, t), float) * np.ones(grid.n_cells + 1)
        worst = max(worst, float(np.max(np.abs(np.diff(vals)) / grid.h)))
    return inflation * worst


@dataclass
class SubBarrierPi:
    """``Pi = gamma^2 - r_pi^2 exp(2 L t) |x - X(t, x0)|^2`` along the streamline from x0."""
    gamma: float
    r_pi: float
    L: float
    x0: float
    b: object
    dt_ode: float = DT_ODE
    kind: str = field(default="sub", init=False)
    _centres: dict = field(default_factory=dict, init=False, repr=False)

    def centre(self, t):
        t = float(t)
        if t not in self._centres:
            self._centres[t] = float(integrate_streamline(self.b, self.x0, 0.0, t, self.dt_ode).positions[-1][0])
        return self._centres[t]

    def radius(self, t):
        return self.gamma / self.r_pi * math.exp(-self.L * t)

    def value(self, x, t):
        y = np.asarray(x, float) - self.centre(t)
        return self.gamma**2 - self.r_pi**2 * math.exp(2 * self.L * t) * y**2

    def dt(self, x, t):
        xc = self.centre(t)
        y = np.asarray(x, float) - xc
        e = self.r_pi**2 * math.exp(2 * self.L * t)
        bx = float(np.asarray(self.b(np.array([xc]), t), float).ravel()[0])
        # dX/dt = -b(X, t)
        return -2 * self.L * e * y**2 - 2 * e * y * bx

    def to_dict(self):
        return {"kind": "Pi", "gamma": self.gamma, "r_pi": self.r_pi, "L": self.L, "x0": self.x0}


def build_sub_Pi(gamma, r_pi, spec, grid: Grid, x0=0.0, *, t_end=1.0, n_times=11,
                 require_congested=True) -> SubBarrierPi:
    """Sub-barrier with L from grid difference quotients of b (10% inflation)."""
    if not (0 < gamma <= r_pi / 10):
        raise ValueError("need 0 < gamma <= r_pi / 10")
    times = np.linspace(0.0, t_end, n_times)
    if require_congested:
        for t in times:
            if congestion_margin(eval_frame(spec, grid, t)) <= 0:
                raise NotCongested(f"congestion margin is not positive at t={t:g}")
    if grid.radial and x0 != 0.0:
        raise ValueError("on radial grids the sub-barrier must be centred on the axis")
    L = lipschitz_estimate(spec.b, grid, times)
    return SubBarrierPi(float(gamma), float(r_pi), L, float(x0), spec.b)


# -- residuals and comparison -----------------------------------------------

@dataclass
class ResidualStats:
    kind: str
    k: float
    tol: float
    min_res: float = math.inf
    max_res: float = -math.inf
    per_time: list = field(default_factory=list)  # (t, min, max, cells)

    @property
    def passed(self) -> bool:
        if self.kind == "super":
            return self.min_res >= -self.tol
        return self.max_res <= self.tol

    def to_dict(self):
        return {"schema_version": 1, "kind": self.kind, "k": self.k, "tol": _num(self.tol),
                "min_res": _num(self.min_res), "max_res": _num(self.max_res), "passed": self.passed,
                "per_time": [[_num(v) for v in row] for row in self.per_time]}


def barrier_residual(barrier, spec, grid: Grid, k, times, region=None, *, erosion=EROSION) -> ResidualStats:
    """Stencil residual ``d_t B - |grad B|^2 - grad B . b - (k-1) B (w_B + F)``.

    Evaluated on ``region`` (a mask, or a callable ``t -> mask``), default the
    positivity set of B eroded by ``erosion`` cells. Super barriers pass when
    ``min >= -tol``, sub barriers when ``max <= tol``; ``tol = h^2 * scale + 1e-8``
    with ``scale`` the largest term magnitude seen.
    """
    h = grid.h
    stats = ResidualStats(barrier.kind, float(k), 0.0)
    scale = 0.0
    rows = []
    for t in times:
        fr = eval_frame(spec, grid, t)
        B = barrier.value(grid.x, t)
        pos = B > 0
        if region is None:
            reg = erode(grid, pos, erosion)
            if not reg.any():
                raise RegionOutsidePositivity(f"eroded positivity set is empty at t={t:g}")
        else:
            reg = np.asarray(region(t) if callable(region) else region, bool)
            if not reg.any() or np.any(reg & ~pos):
                raise RegionOutsidePositivity(f"region leaves the positivity set at t={t:g}")
        gB = grad(grid, B)
        wB = div_m_grad(grid, fr.m, B) / fr.m
        terms = [barrier.dt(grid.x, t), gB**2, gB * fr.b, (k - 1) * B * (wB + fr.F)]
        res = terms[0] - terms[1] - terms[2] - terms[3]
        scale = max(scale, max(float(np.max(np.abs(tm[reg]))) for tm in terms))
        r = res[reg]
        rows.append((float(t), float(r.min()), float(r.max()), int(reg.sum())))
    stats.tol = h * h * scale + 1e-8
    stats.per_time = rows
    stats.min_res = min(r[1] for r in rows)
    stats.max_res = max(r[2] for r in rows)
    return stats


@dataclass
class ComparisonReport:
    sense: str
    violation: float
    tol: float
    per_time: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.violation <= self.tol

    def to_dict(self):
        return {"schema_version": 1, "sense": self.sense, "violation": _num(self.violation),
                "tol": _num(self.tol), "passed": self.passed,
                "per_time": [[_num(a), _num(b)] for a, b in self.per_time]}


def comparison_vs_solver(barrier, traj, sense, tol=None) -> ComparisonReport:
    """Max over snapshots of ``p - Z`` (upper) or ``Pi+ - p`` (lower).

    The ordering must already hold at the first snapshot, otherwise
    InitialOrderingFails. ``tol`` defaults to ``1e-8 * max(1, sup p)``.
    """
    if sense not in ("upper", "lower"):
        raise ValueError("sense must be 'upper' or 'lower'")
    grid = traj.grid
    P = traj.stack("p")
    tol = 1e-8 * max(1.0, float(P.max())) if tol is None else float(tol)
    rows = []
    for i, s in enumerate(traj.snapshots):
        B = np.maximum(barrier.value(grid.x, s.t), 0.0)
        gap = s.p - B if sense == "upper" else B - s.p
        v = float(gap.max())
        if i == 0 and v > tol:
            raise InitialOrderingFails(f"barrier does not order the initial pressure (gap {v:.3e})")
        rows.append((s.t, v))
    return ComparisonReport(sense, max(r[1] for r in rows), tol, rows)


def fit_alpha(spec, grid: Grid, k, gamma, times, *, r_max=None, n=2001, b_sup=None,
              powers=range(-4, 11)):
    """Smallest power-of-two alpha whose Z passes the residual check at ``k``.

    Returns ``(alpha, barrier, stats)``; alpha is None when no candidate passes.
    """
    r_max = r_max or max(abs(grid.x_lo), abs(grid.x_hi))
    times = list(times)
    phi = build_radial_phi(spec.m, times[0], r_max, n, spec.dim, fit_times=times)
    if b_sup is None:
        b_sup = max(float(np.max(np.abs(spec.b(grid.faces, t)))) for t in times)
    last = None
    for j in powers:
        Z = build_super_Z(phi, gamma, b_sup, 2.0**j)
        st = barrier_residual(Z, spec, grid, k, times)
        last = (Z, st)
        if st.passed:
            return 2.0**j, Z, st
    return None, last[0], last[1]
