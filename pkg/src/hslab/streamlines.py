"""Streamlines X' = -b(X, t), the external density carried along them, and
retention/monotonicity checks of the pressure along streamlines.

On radial grids positions are radii and ``b`` is the radial drift component.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .coefficients import congestion_margin
from .errors import LeftDomain, NotCongested
from .grid import support_mask
from .report import _num

DT_ODE = 1e-3


@dataclass
class Streamline:
    x0: np.ndarray
    times: np.ndarray
    positions: np.ndarray  # (len(times), len(x0))
    dt_ode: float

    def at(self, t):
        """Positions at time ``t`` (linear in time between stored steps)."""
        ts = self.times
        if ts[0] > ts[-1]:
            ts, pos = ts[::-1], self.positions[::-1]
        else:
            pos = self.positions
        return np.array([np.interp(t, ts, pos[:, j]) for j in range(pos.shape[1])])

    def csv_rows(self):
        for t, row in zip(self.times, self.positions):
            yield [float(t), *map(float, row)]


def _check_inside(x, domain, t):
    if domain is None:
        return
    lo, hi = domain
    if np.any(x < lo) or np.any(x > hi) or not np.all(np.isfinite(x)):
        raise LeftDomain(f"streamline left [{lo:g}, {hi:g}] near t={t:.6g}")


def integrate_streamline(b, x0, t0, t1, dt_ode=DT_ODE, *, domain=None) -> Streamline:
    """Classical RK4 for ``X' = -b(X, t)`` from ``t0`` to ``t1`` (either direction).

    ``x0`` may be a scalar or an array of seed points; the step is the
    largest value <= ``dt_ode`` that divides the interval evenly.
    """
    if not dt_ode > 0:
        raise ValueError("dt_ode must be positive")
    x = np.atleast_1d(np.asarray(x0, dtype=float)).copy()
    _check_inside(x, domain, t0)
    span = t1 - t0
    n = max(1, math.ceil(abs(span) / dt_ode - 1e-9)) if span != 0 else 0
    hs = span / n if n else 0.0
    times = [float(t0)]
    out = [x.copy()]

    def rhs(y, s):
        return -np.asarray(b(y, s), dtype=float) * np.ones_like(y)

    t = float(t0)
    for i in range(n):
        k1 = rhs(x, t)
        k2 = rhs(x + 0.5 * hs * k1, t + 0.5 * hs)
        k3 = rhs(x + 0.5 * hs * k2, t + 0.5 * hs)
        k4 = rhs(x + hs * k3, t + hs)
        x = x + hs / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        t = t0 + (i + 1) * hs
        _check_inside(x, domain, t)
        times.append(t)
        out.append(x.copy())
    return Streamline(np.atleast_1d(np.asarray(x0, float)), np.array(times), np.array(out), abs(hs) or dt_ode)


def inverse_point(b, x, t, dt_ode=DT_ODE, *, domain=None):
    """Foot at time 0 of the streamline through ``x`` at time ``t``."""
    sl = integrate_streamline(b, x, t, 0.0, dt_ode, domain=domain)
    pos = sl.positions[-1]
    return float(pos[0]) if np.ndim(x) == 0 else pos


def external_density(rho0_fn, b, f, divb_fn, x, t, dt_ode=DT_ODE, *, domain=None):
    """Characteristic solution of ``d_t rho = div(rho b) + f rho`` at ``(x, t)``.

    Follows the streamline back to its foot ``x0`` and multiplies ``rho0(x0)``
    by ``exp`` of the trapezoid integral of ``f + div b`` along the path.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    sl = integrate_streamline(b, x, t, 0.0, dt_ode, domain=domain)
    g = np.array([np.asarray(f(p, s), float) + np.asarray(divb_fn(p, s), float)
                  for s, p in zip(sl.times, sl.positions)])
    g = g.reshape(len(sl.times), -1) * np.ones((1, sl.positions.shape[1]))
    # path runs from t down to 0, so the integral over [0, t] is minus this
    expo = -np.trapezoid(g, sl.times, axis=0) if len(sl.times) > 1 else np.zeros(g.shape[1])
    rho = np.asarray(rho0_fn(sl.positions[-1]), float) * np.exp(expo)
    return float(rho[0]) if np.ndim(x) == 0 else rho


def external_density_spec(spec, rho0_fn, x, t, dt_ode=DT_ODE):
    """:func:`external_density` with b, f and div b taken from a coefficient spec."""
    domain = (0.0, spec.domain[1]) if spec.dim == 2 else spec.domain
    return external_density(rho0_fn, spec.b, spec.f, spec.divb, x, t, dt_ode, domain=domain)


# -- checks along streamlines --------------------------------------------

@dataclass
class RetentionReport:
    tau: float
    beta: float
    tol: float
    fitted_beta: float = 0.0
    worst_margin: float = 0.0
    margins: list = field(default_factory=list)  # rows (x0, t, margin)

    @property
    def passed(self) -> bool:
        return self.worst_margin >= -self.tol

    def to_dict(self):
        return {
            "schema_version": 1, "tau": self.tau, "beta": _num(self.beta), "tol": _num(self.tol),
            "fitted_beta": _num(self.fitted_beta), "worst_margin": _num(self.worst_margin),
            "passed": self.passed, "n_margins": len(self.margins),
        }


def _seed_paths(traj, x0s, dt_ode):
    spec, grid = traj.spec, traj.grid
    domain = (0.0, grid.x_hi) if grid.radial else (grid.x_lo, grid.x_hi)
    times = traj.times
    sl = integrate_streamline(spec.b, x0s, 0.0, float(times[-1]), dt_ode, domain=domain)
    return sl


def retention_check(traj, x0_list, tau, beta=None, *, tol=None, dt_ode=DT_ODE) -> RetentionReport:
    """Margins ``p(X(t),t) - p(X(tau),tau) exp(-(beta + 1/tau)(t - tau))`` for snapshots t >= tau.

    ``tol`` defaults to ``1e-3 * sup p``. ``fitted_beta`` is the smallest
    non-negative beta making every margin >= -tol; margins are reported
    against ``beta`` when given, otherwise against the fit.
    """
    if not tau > 0:
        raise ValueError("tau must be positive")
    times = traj.times
    if not (times[0] <= tau <= times[-1]):
        raise ValueError("tau outside the trajectory time range")
    P = traj.stack("p")
    psup = float(P.max()) if P.size else 0.0
    tol = 1e-3 * psup if tol is None else float(tol)
    x0s = np.atleast_1d(np.asarray(x0_list, float))
    sl = _seed_paths(traj, x0s, dt_ode)
    grid = traj.grid

    def p_along(i):
        return grid.interp(P[i], sl.at(times[i]))

    # tau may fall between snapshots: interpolate p linearly in time
    j = int(np.searchsorted(times, tau, side="right") - 1)
    j = min(j, len(times) - 2) if len(times) > 1 else 0
    if len(times) > 1 and times[j + 1] > times[j]:
        w = (tau - times[j]) / (times[j + 1] - times[j])
        Xtau = sl.at(tau)
        p_tau = (1 - w) * grid.interp(P[j], Xtau) + w * grid.interp(P[j + 1], Xtau)
    else:
        p_tau = p_along(j)

    rows = []
    need = 0.0
    for i, t in enumerate(times):
        if t <= tau:
            continue
        pt = p_along(i)
        dt = t - tau
        for x0, a, c in zip(x0s, p_tau, pt):
            rows.append((float(x0), float(t), float(a), float(c), dt))
            if a > 0 and a > c + tol:
                need = max(need, math.log(a / (c + tol)) / dt - 1.0 / tau)
    rep = RetentionReport(tau=tau, beta=need if beta is None else float(beta), tol=tol, fitted_beta=need)
    worst = math.inf
    for x0, t, a, c, dt in rows:
        mg = c - a * math.exp(-(rep.beta + 1.0 / tau) * dt)
        rep.margins.append((x0, t, mg))
        worst = min(worst, mg)
    rep.worst_margin = 0.0 if worst == math.inf else worst
    return rep


def normalized_retention_margins(traj, x0_list, beta, *, t_min=None, dt_ode=DT_ODE):
    """Worst ``v(X(t2),t2) - v(X(t1),t1) (t1/t2)^(1/(k-1)) exp(-beta (t2-t1)/(k-1))``
    over consecutive snapshot pairs with ``t1 > t_min``."""
    k = traj.k
    times = traj.times
    V = traj.stack("v")
    x0s = np.atleast_1d(np.asarray(x0_list, float))
    sl = _seed_paths(traj, x0s, dt_ode)
    grid = traj.grid
    t_min = times[0] if t_min is None else t_min
    worst = math.inf
    for i in range(len(times) - 1):
        t1, t2 = times[i], times[i + 1]
        if t1 <= max(t_min, 0.0):
            continue
        v1 = grid.interp(V[i], sl.at(t1))
        v2 = grid.interp(V[i + 1], sl.at(t2))
        fac = (t1 / t2) ** (1.0 / (k - 1)) * math.exp(-beta * (t2 - t1) / (k - 1))
        worst = min(worst, float(np.min(v2 - v1 * fac)))
    return 0.0 if worst == math.inf else worst


@dataclass
class MonotoneReport:
    max_fraction: float
    max_cells: int
    pairs: list  # (t1, t2, fraction, cells)

    def to_dict(self):
        return {"schema_version": 1, "max_fraction": _num(self.max_fraction),
                "max_cells": self.max_cells, "n_pairs": len(self.pairs)}


def monotone_support_check(traj, theta=1e-3, *, dt_ode=DT_ODE, require_congested=True) -> MonotoneReport:
    """Transport the theta-support of p(t1) along streamlines to t2 and report
    the largest fraction of transported cells landing outside supp p(t2)."""
    grid, spec = traj.grid, traj.spec
    snaps = traj.snapshots
    if require_congested:
        for s in snaps:
            if congestion_margin(traj.frame(s.t)) <= 0:
                raise NotCongested(f"congestion margin is not positive at t={s.t:g}")
    domain = (0.0, grid.x_hi) if grid.radial else (grid.x_lo, grid.x_hi)
    pairs = []
    best, best_cells = 0.0, 0
    for a, b in zip(snaps[:-1], snaps[1:]):
        m1 = support_mask(grid, a.p, theta) if a.p.max() > 0 else np.zeros(grid.n_cells, bool)
        if not m1.any():
            pairs.append((a.t, b.t, 0.0, 0))
            continue
        m2 = support_mask(grid, b.p, theta) if b.p.max() > 0 else np.zeros(grid.n_cells, bool)
        xs = grid.x[m1]
        if b.t > a.t:
            xs = integrate_streamline(spec.b, xs, a.t, b.t, dt_ode, domain=domain).positions[-1]
        land = m2[grid.locate(np.abs(xs) if grid.radial else xs)]
        cells = int(np.sum(~land))
        frac = cells / xs.size
        pairs.append((a.t, b.t, frac, cells))
        if frac > best:
            best, best_cells = frac, cells
    return MonotoneReport(best, best_cells, pairs)
