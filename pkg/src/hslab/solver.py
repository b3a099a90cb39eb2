"""Explicit conservative solver for the density equation

    d_t rho = div(m grad v^k + rho b) + f rho,    v = rho / m,

with upwinded drift flux and a CFL-limited forward-Euler step. Coefficients
are sampled at segment endpoints (at most ``frame_dt`` apart, and at every
output time) and interpolated linearly in time inside the kernel.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .coefficients import CoefficientFrame, CoefficientSpec, eval_frame
from .errors import CflViolation, MaxSteps, NonFinite, SupportNearBoundary, ValidationError
from .grid import Grid

V_CAP = 3.0


def constitutive_pressure(v, k):
    with np.errstate(over="ignore"):
        return k / (k - 1.0) * np.power(np.clip(v, 0.0, None), k - 1.0)


@dataclass
class SolverConfig:
    k: float
    t_end: float
    cfl_safety: float = 0.4
    output_times: list | None = None
    n_outputs: int = 50
    t_start: float = 0.0
    regularization_n: int | None = None
    max_steps: int = 200_000_000
    frame_dt: float = 5e-3
    guard_cells: int = 5
    support_theta: float = 1e-6
    backend: str | None = None

    def __post_init__(self):
        if not self.k > 1:
            raise ValueError("k must be > 1")
        if not 0 < self.cfl_safety <= 1:
            raise ValueError("cfl_safety must lie in (0, 1]")
        if not self.t_end > self.t_start:
            raise ValueError("t_end must exceed t_start")
        if self.regularization_n is not None and self.regularization_n < 1:
            raise ValueError("regularization_n must be >= 1")
        if self.output_times is None:
            self.output_times = list(np.linspace(self.t_start, self.t_end, self.n_outputs + 1))
        ts = [float(t) for t in self.output_times]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError("output_times must be strictly increasing")
        if ts[0] < self.t_start or ts[-1] > self.t_end + 1e-12:
            raise ValueError("output_times must lie in [t_start, t_end]")
        self.output_times = ts

    def to_dict(self):
        return {
            "k": self.k, "t_end": self.t_end, "cfl_safety": self.cfl_safety,
            "output_times": list(self.output_times), "t_start": self.t_start,
            "regularization_n": self.regularization_n, "max_steps": self.max_steps,
            "frame_dt": self.frame_dt, "guard_cells": self.guard_cells,
            "support_theta": self.support_theta,
        }


@dataclass
class SolverState:
    rho: np.ndarray
    v: np.ndarray
    p: np.ndarray
    t: float
    steps: int = 0

    @classmethod
    def from_rho(cls, rho, m, k, t, steps=0):
        rho = np.array(rho, dtype=float)
        v = rho / m
        return cls(rho, v, constitutive_pressure(v, k), float(t), int(steps))


@dataclass
class Trajectory:
    spec: CoefficientSpec
    grid: Grid
    config: SolverConfig
    snapshots: list = field(default_factory=list)
    ledger: list = field(default_factory=list)
    clamped_mass: float = 0.0
    source_integral: float = 0.0
    cap_events: int = 0

    @property
    def k(self):
        return self.config.k

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.snapshots])

    def stack(self, name) -> np.ndarray:
        return np.array([getattr(s, name) for s in self.snapshots])

    def frame(self, t) -> CoefficientFrame:
        return eval_frame(self.spec, self.grid, t)

    def mass(self, i=-1) -> float:
        return float(np.sum(self.grid.vol * self.snapshots[i].rho))

    def mass_balance(self):
        """``(residual, clamped)`` with residual = M(T) - M(0) - int int f rho - clamped."""
        m0, m1 = self.mass(0), self.mass(-1)
        return m1 - m0 - self.source_integral - self.clamped_mass, self.clamped_mass


def regularize_initial(rho0, m_at_0, n):
    """Lift the initial density by ``m(., 0) / n``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return np.asarray(rho0, dtype=float) + np.asarray(m_at_0, dtype=float) / n


def _flux_areas(grid: Grid):
    a = grid.area.copy()
    a[0] = a[-1] = 0.0
    return a


def _rates(grid: Grid, frame: CoefficientFrame, rho, k):
    """Per-cell diagonal rate of the explicit update (the CFL denominator / h^2)."""
    a = _flux_areas(grid)
    h, vol = grid.h, grid.vol
    v = np.minimum(np.asarray(rho, float) / frame.m, V_CAP)
    with np.errstate(over="ignore"):
        vk1 = np.where(v > 0, np.power(np.clip(v, 0, None), k - 1.0), 0.0)
    mf, bf = frame.m_face, frame.b_face
    rate = k * vk1 / frame.m * (a[:-1] * mf[:-1] + a[1:] * mf[1:]) / (h * vol)
    rate += (a[1:] * np.maximum(-bf[1:], 0.0) + a[:-1] * np.maximum(bf[:-1], 0.0)) / vol
    return rate + np.abs(frame.f)


def cfl_dt(state: SolverState, frame: CoefficientFrame, config: SolverConfig, grid: Grid) -> float:
    """Largest stable step: ``safety * h^2 / (h^2 * max rate + 1e-8)``.

    The rate is the diagonal coefficient of the update: diffusivity
    ``k v^(k-1)`` weighted by the face/cell m ratio, plus upwind outflow and |f|.
    In 1D with m = 1 this is ``safety * h^2 / (2 k v^(k-1) + h|b| + h^2|f|)``.
    """
    h2 = grid.h**2
    r = float(_rates(grid, frame, state.rho, config.k).max())
    return config.cfl_safety * h2 / (h2 * r + kernels._pykernels.RATE_FLOOR)


def _frame_args(frame):
    return frame.m, frame.m_face, frame.b_face, frame.f


def step(state: SolverState, frame: CoefficientFrame, config: SolverConfig, grid: Grid, dt: float) -> SolverState:
    """Advance one forward-Euler step of size ``dt`` with coefficients frozen at ``frame``."""
    if abs(frame.t - state.t) > 1e-12 * max(1.0, abs(state.t)):
        raise ValueError("frame time does not match state time")
    limit = cfl_dt(state, frame, config, grid)
    if dt > limit * (1 + 1e-12):
        raise CflViolation(f"dt={dt:.3e} exceeds CFL limit {limit:.3e}")
    advance = kernels.get_advance(config.backend)
    rho = np.ascontiguousarray(state.rho, dtype=float)[None, :].copy()
    m, mf, bf, f = _frame_args(frame)
    reg = float(config.regularization_n or 0)
    t, steps, status, _, _, _, _ = advance(
        rho, state.t, state.t + dt, m, m, mf, mf, bf, bf, f, f,
        grid.vol, _flux_areas(grid), grid.h, float(config.k), config.cfl_safety,
        reg, V_CAP, 1, float(dt),
    )
    if status == kernels.ST_NONFINITE:
        raise NonFinite("non-finite density after step")
    return SolverState.from_rho(rho[0], frame.m, config.k, state.t + dt, state.steps + 1)


def _near_boundary(grid, rho, floor, config):
    excess = rho - floor
    top = float(excess.max())
    if top <= 0:
        return False
    hot = excess > config.support_theta * top
    g = config.guard_cells
    if hot[-g:].any():
        return True
    return (not grid.radial) and bool(hot[:g].any())


def integrate(spec: CoefficientSpec, grid: Grid, rho0_batch, config: SolverConfig):
    """Advance a batch of initial densities in lockstep (shared time steps).

    Lockstep stepping keeps the discrete map identical across members, which
    is what the ordering (comparison) test needs.
    """
    rho = np.array(np.atleast_2d(rho0_batch), dtype=float, order="C")
    nb = rho.shape[0]
    advance = kernels.get_advance(config.backend)
    aflux = _flux_areas(grid)
    reg = float(config.regularization_n or 0)
    k = float(config.k)

    t = float(config.t_start)
    frame_a = eval_frame(spec, grid, t)
    trajs = [Trajectory(spec, grid, config) for _ in range(nb)]
    floor = frame_a.m / reg if reg else np.zeros(grid.n_cells)
    total_steps = 0

    outputs = list(config.output_times)
    oi = 0
    if abs(outputs[0] - t) <= 1e-14 * max(1.0, abs(t)):
        for b in range(nb):
            trajs[b].snapshots.append(SolverState.from_rho(rho[b], frame_a.m, k, t, 0))
        oi = 1
    mass_prev = [float(np.sum(grid.vol * rho[b])) for b in range(nb)]
    for b in range(nb):
        trajs[b].ledger.append({"step": 0, "t": t, "dt": 0.0, "mass": mass_prev[b],
                                "source_integral": 0.0, "clamped_mass": 0.0})

    while oi < len(outputs):
        target = outputs[oi]
        t_next = min(target, t + config.frame_dt)
        if target - t_next < 1e-9 * config.frame_dt:
            t_next = target
        frame_b = eval_frame(spec, grid, t_next)
        t_new, steps, status, last_dt, src, clamp, caps = advance(
            rho, t, t_next,
            frame_a.m, frame_b.m, frame_a.m_face, frame_b.m_face,
            frame_a.b_face, frame_b.b_face, frame_a.f, frame_b.f,
            grid.vol, aflux, grid.h, k, config.cfl_safety, reg, V_CAP,
            int(config.max_steps - total_steps),
        )
        total_steps += steps
        for b in range(nb):
            tr = trajs[b]
            tr.source_integral += float(src[b])
            tr.clamped_mass += float(clamp[b])
            tr.cap_events += int(caps[b])
            tr.ledger.append({
                "step": total_steps, "t": float(t_new), "dt": float(last_dt),
                "mass": float(np.sum(grid.vol * rho[b])),
                "source_integral": float(src[b]), "clamped_mass": float(clamp[b]),
            })
        if status == kernels.ST_NONFINITE:
            err = NonFinite(f"non-finite density near t={t_new:.6g}")
            err.trajectories = trajs
            raise err
        if status == kernels.ST_MAXSTEPS:
            err = MaxSteps(f"max_steps={config.max_steps} reached at t={t_new:.6g}")
            err.trajectories = trajs
            raise err
        t = t_next
        frame_a = frame_b
        if reg:
            floor = frame_a.m / reg
        for b in range(nb):
            if _near_boundary(grid, rho[b], floor, config):
                trajs[b].snapshots.append(SolverState.from_rho(rho[b], frame_a.m, k, t, total_steps))
                err = SupportNearBoundary(
                    f"support within {config.guard_cells} cells of the domain edge at t={t:.6g}")
                err.trajectories = trajs
                raise err
        if t == target:
            for b in range(nb):
                trajs[b].snapshots.append(SolverState.from_rho(rho[b], frame_a.m, k, t, total_steps))
            oi += 1
    return trajs


def run(spec: CoefficientSpec, grid: Grid, rho0, config: SolverConfig, *, validate=True) -> Trajectory:
    """Simulate from ``rho0`` and return the trajectory at ``config.output_times``."""
    if validate:
        from .coefficients import validate_assumptions

        rep = validate_assumptions(spec, grid, rho0, [config.k], t_horizon=config.t_end)
        if not rep.passed:
            raise ValidationError(f"initial data rejected: {rep.failures}", rep)
    return integrate(spec, grid, np.asarray(rho0, dtype=float)[None, :], config)[0]
