"""Pressure-based diagnostics: w = (1/m) div(m grad p), Aronson-Benilan
lower bounds, complementarity and pressure-equation residuals, and the
k-uniform norm suite."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .coefficients import congestion_margin, eval_frame
from .errors import EmptySupport, NotCongested
from .grid import Grid, bv_seminorm, div_m_grad, erode, grad, support_mask
from .report import DiagnosticsReport, _num
from .solver import constitutive_pressure

THETA = 1e-3
EROSION = 3


def pressure_of(rho, m, k):
    if not k > 1:
        raise ValueError("k must be > 1")
    return constitutive_pressure(np.asarray(rho, float) / np.asarray(m, float), k)


def w_field(grid: Grid, p, m):
    return div_m_grad(grid, m, p) / m


def interior_support(grid: Grid, p, theta=THETA, erosion=EROSION):
    """The theta-support of ``p`` shrunk by ``erosion`` cells (may be empty)."""
    mask = support_mask(grid, p, theta)
    if not mask.any() or float(np.max(p)) <= 0:
        return np.zeros_like(mask)
    return erode(grid, mask, erosion)


# -- Aronson-Benilan ------------------------------------------------------

@dataclass
class AbReport:
    k: float
    mode: str
    times: list = field(default_factory=list)
    min_w: list = field(default_factory=list)
    needed: list = field(default_factory=list)
    margins: list = field(default_factory=list)
    fitted: float = 0.0
    constant: float = 0.0
    notes: list = field(default_factory=list)

    @property
    def worst_margin(self) -> float:
        return min(self.margins) if self.margins else 0.0

    @property
    def passed(self) -> bool:
        return self.worst_margin >= 0

    def to_dict(self):
        name = "K1" if self.mode == "generalized" else "beta"
        return {
            "schema_version": 1,
            "k": self.k,
            "mode": self.mode,
            "constant_name": name,
            "fitted": _num(self.fitted),
            "constant": _num(self.constant),
            "worst_margin": _num(self.worst_margin),
            "passed": self.passed,
            "times": [_num(t) for t in self.times],
            "min_w": [_num(v) for v in self.min_w],
            "needed": [_num(v) for v in self.needed],
            "margins": [_num(v) for v in self.margins],
            "notes": list(self.notes),
        }


def _ab_bound(mode, k, t, F, c):
    if mode == "generalized":
        return np.full_like(F, -2.0 / ((k - 1) * t) - c)
    return -F - c / (k - 1) - 1.0 / ((k - 1) * t)


def ab_check(traj, mode="generalized", constant=None, *, theta=THETA, erosion=EROSION,
             t_min=0.0, frame_provider=None) -> AbReport:
    """Check the semi-convexity lower bound on ``w`` at every snapshot with t > t_min.

    generalized: ``w >= -2/((k-1)t) - K1``; refined (congested data only):
    ``w >= -F - beta/(k-1) - 1/((k-1)t)``. The smallest non-negative constant
    making every margin non-negative is reported as ``fitted``; margins are
    taken against ``constant`` when given, otherwise against the fit.
    """
    if mode not in ("generalized", "refined"):
        raise ValueError("mode must be 'generalized' or 'refined'")
    grid, k = traj.grid, traj.k
    frames = frame_provider or traj.frame
    rep = AbReport(k=k, mode=mode)
    rows = []
    for snap in traj.snapshots:
        t = snap.t
        if t <= 0:
            rep.notes.append(f"skipped t={t:g}: the bound is undefined at t = 0")
            continue
        if t < t_min:
            continue
        fr = frames(t)
        if mode == "refined" and congestion_margin(fr) <= 0:
            raise NotCongested(f"congestion margin is not positive at t={t:g}")
        region = interior_support(grid, snap.p, theta, erosion)
        if not region.any():
            continue
        w = w_field(grid, snap.p, fr.m)[region]
        F = fr.F[region]
        if mode == "generalized":
            need = float(np.max(-w - 2.0 / ((k - 1) * t)))
        else:
            need = float(np.max((k - 1) * (-F - w) - 1.0 / t))
        rows.append((t, w, F, need))
    rep.fitted = max([0.0] + [r[3] for r in rows])
    rep.constant = rep.fitted if constant is None else float(constant)
    for t, w, F, need in rows:
        rep.times.append(t)
        rep.min_w.append(float(w.min()))
        rep.needed.append(need)
        rep.margins.append(float(np.min(w - _ab_bound(mode, k, t, F, rep.constant))))
    return rep


# -- complementarity -----------------------------------------------------

class Complementarity(NamedTuple):
    residual: float
    overshoot: float


def complementarity_residual(p, rho, m) -> Complementarity:
    """``sup p (m - rho)`` over cells with rho <= m, and ``sup (rho - m)+`` separately."""
    gap = np.asarray(m, float) - np.asarray(rho, float)
    res = float(np.max(np.asarray(p) * np.clip(gap, 0.0, None), initial=0.0))
    over = float(np.max(np.clip(-gap, 0.0, None), initial=0.0))
    return Complementarity(res, over)


def complementarity_bound(k, m_max=1.0):
    """``max over v in [0,1] of m p (1 - v)`` for the constitutive law."""
    return m_max * (1.0 - 1.0 / k) ** (k - 1) / (k - 1)


def pressure_equation_residual(grid: Grid, p, frame, theta=THETA, erosion=EROSION) -> float:
    """Mean of ``|div(m grad p) + m F|`` over the eroded theta-support of ``p``."""
    if float(np.max(p)) <= 0:
        raise EmptySupport("pressure vanishes identically")
    region = interior_support(grid, p, theta, erosion)
    if not region.any():
        raise EmptySupport("eroded pressure support is empty")
    r = np.abs(div_m_grad(grid, frame.m, p) + frame.m * frame.F)
    vol = grid.vol[region]
    return float(np.sum(vol * r[region]) / np.sum(vol))


# -- uniform estimates -----------------------------------------------------

def _trap(values, times):
    values = np.asarray(values, float)
    if len(times) < 2:
        return 0.0
    return float(np.trapezoid(values, times))


def support_radius(grid: Grid, u, theta=THETA):
    mask = support_mask(grid, u, theta)
    if not mask.any() or float(np.max(u)) <= 0:
        return 0.0
    xs = grid.x[mask]
    if grid.radial:
        return float(xs.max() + 0.5 * grid.h)
    return float(max(abs(xs.min() - 0.5 * grid.h), abs(xs.max() + 0.5 * grid.h)))


def estimate_suite(traj, tau) -> DiagnosticsReport:
    """Norms whose k-uniform boundedness underpins the limit."""
    grid = traj.grid
    times = traj.times
    if not (times[0] < tau < times[-1]):
        raise ValueError("tau must lie strictly inside the trajectory time range")
    P = traj.stack("p")
    V = traj.stack("v")
    vol = grid.vol
    g2, g4, radius = [], [], []
    for p in P:
        gp = grad(grid, p)
        g2.append(np.sum(vol * gp**2))
        g4.append(np.sum(vol * gp**4))
        radius.append(support_radius(grid, p))
    late = times >= tau
    bv = [bv_seminorm(grid, v) for v, keep in zip(V, late) if keep]
    dv = dp = 0.0
    idx = np.flatnonzero(late)
    for a, b in zip(idx[:-1], idx[1:]):
        dv += float(np.sum(vol * np.abs(V[b] - V[a])))
        dp += float(np.sum(vol * np.abs(P[b] - P[a])))

    rep = DiagnosticsReport("estimates")
    rep.add("sup_p", float(np.max(P)) if P.size else 0.0)
    rep.add("max_support_radius", max(radius) if radius else 0.0)
    rep.add("grad_p_L2sq_QT", _trap(g2, times))
    rep.add("grad_p_L4pow4_QT", _trap(g4, times))
    rep.add("sup_bv_v_after_tau", max(bv) if bv else 0.0)
    rep.add("dt_v_L1_Q_tau_T", dv)
    rep.add("dt_p_L1_Q_tau_T", dp)
    rep.notes.append(f"tau={tau:g}, snapshots={len(times)}")
    return rep


def complementarity_series(traj):
    """Per-snapshot complementarity residual and overshoot."""
    out = []
    for s in traj.snapshots:
        m = traj.frame(s.t).m
        out.append(complementarity_residual(s.p, s.rho, m))
    return out


def sup_ratio(values):
    vals = [float(v) for v in values]
    lo, hi = min(vals), max(vals)
    if hi == 0:
        return 1.0
    if lo <= 0:
        return math.inf
    return hi / lo
