"""Command-line entry point: ``hslab <command> ...``.

Exit codes: 0 success, 1 a check failed or the run broke down, 2 usage error.
"""
from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import barriers, limit, pressure, streamlines
from .errors import HslabError, ParseError, ValidationError
from .grid import support_mask
from .io import CsvTable, IoError, JsonDoc, load_run, run_config, run_results, write_outputs
from .scenarios import load_scenario
from .solver import run

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _say(msg):
    print(msg, file=sys.stderr)


def _parse_ks(text):
    try:
        ks = [float(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise UsageError(f"--ks: cannot parse {text!r}") from None
    if any(b < a for a, b in zip(ks, ks[1:])):
        raise UsageError("--ks must be sorted ascending")
    if any(k <= 1 for k in ks):
        raise UsageError("--ks values must exceed 1")
    return ks


def _mass_ok(traj):
    resid, clamped = traj.mass_balance()
    m0 = traj.mass(0)
    return abs(resid) <= 1e-8 * m0 + clamped and clamped <= 1e-8 * m0


# -- commands ----------------------------------------------------------------

def cmd_simulate(a):
    sc = load_scenario(a.scenario)
    cfg = sc.config(a.k, t_end=a.t_end, n_outputs=a.n_outputs, backend=a.backend)
    traj = run(sc.spec, sc.grid(), sc.initial(), cfg)
    out = a.out or f"run-{sc.name}-k{cfg.k:g}"
    write_outputs(run_results(sc, traj), out, run_config(sc, cfg))
    resid, clamped = traj.mass_balance()
    print(f"{sc.name}: k={cfg.k:g} t_end={cfg.t_end:g} steps={traj.snapshots[-1].steps} "
          f"mass residual={resid:.3e} clamped={clamped:.3e} -> {out}")
    if not _mass_ok(traj):
        _say("mass balance check failed")
        return EXIT_FAIL
    return EXIT_OK


def cmd_sweep(a):
    ks = _parse_ks(a.ks)
    if len(ks) < 3:
        raise UsageError("--ks needs at least three values")
    sc = load_scenario(a.scenario)
    sw = limit.k_sweep(sc, ks, t_end=a.t_end, n_outputs=a.n_outputs, backend=a.backend)
    out = a.out or f"sweep-{sc.name}"
    results = {}
    for k, tr in zip(ks, sw.trajectories):
        results.update(run_results(sc, tr, prefix=f"k_{k:g}/"))
    results["distances.csv"] = CsvTable(["k_i", "k_j", "d_rho", "d_p"], sw.distance_rows(), "distances")
    rows = []
    for k, tr, series in zip(ks, sw.trajectories, sw.complementarity):
        for s, c in zip(tr.snapshots, series):
            rows.append([k, s.t, c.residual, c.overshoot])
    results["residuals.csv"] = CsvTable(["k", "t", "residual", "overshoot"], rows, "residuals")
    rep = sw.report()
    doc = rep.to_dict()
    doc["estimates"] = {f"{k:g}": e.to_dict() for k, e in zip(ks, sw.estimates)}
    results["report.json"] = JsonDoc(doc, "sweep-report")
    write_outputs(results, out, {"scenario": sc.name, "ks": ks, "t_end": a.t_end, "n_outputs": a.n_outputs})
    for r in sw.cauchy_ratios():
        print(f"cauchy ratio {r:.4f}")
    print(f"-> {out}")
    return EXIT_OK if rep.passed else EXIT_FAIL


def cmd_diagnose(a):
    try:
        sc, traj = load_run(a.run_dir)
    except (IoError, OSError) as e:
        raise UsageError(str(e)) from None
    wanted = [n for n in ("ab", "estimates", "complementarity", "retention", "front") if getattr(a, n)]
    if not wanted:
        wanted = ["ab", "estimates", "complementarity"]
    results, ok = {}, True
    T = float(traj.times[-1])
    tau = a.tau if a.tau is not None else 0.1 * T
    if "ab" in wanted:
        mode = a.ab_mode or ("refined" if sc.congested else "generalized")
        rep = pressure.ab_check(traj, mode, a.constant)
        for note in rep.notes:
            _say(f"notice: {note}")
        print(f"ab[{mode}]: fitted={rep.fitted:.4g} worst margin={rep.worst_margin:.3e}")
        ok &= rep.passed
        results["ab.json"] = JsonDoc(rep.to_dict(), "ab-report")
    if "estimates" in wanted:
        rep = pressure.estimate_suite(traj, tau)
        results["estimates.json"] = JsonDoc(rep.to_dict(), "diagnostics-report")
        print(f"estimates: sup p={rep['sup_p'].value:.4g}")
    if "complementarity" in wanted:
        rows, worst = [], -np.inf
        bound = pressure.complementarity_bound(traj.k)
        for s, c in zip(traj.snapshots, pressure.complementarity_series(traj)):
            m = traj.frame(s.t).m
            allowed = float(m.max()) * bound + c.overshoot * float(s.p.max())
            rows.append([s.t, c.residual, c.overshoot, allowed])
            worst = max(worst, c.residual - allowed)
        ok &= worst <= 0
        results["complementarity.csv"] = CsvTable(["t", "residual", "overshoot", "allowed"], rows, "complementarity")
        print(f"complementarity: sup residual={max(r[1] for r in rows):.4g} scalar bound={bound:.4g}")
    if "retention" in wanted:
        beta = a.beta
        if beta is None:
            beta = pressure.ab_check(traj, "refined" if sc.congested else "generalized").fitted
        s0 = traj.snapshots[0]
        idx = np.flatnonzero(support_mask(traj.grid, s0.rho, 1e-3)) if s0.rho.max() > 0 else []
        if len(idx) == 0:
            raise UsageError("initial density is empty: no seed points")
        x = traj.grid.x[idx]
        seeds = np.linspace(x[0], x[-1], a.seeds + 2)[1:-1]
        rep = streamlines.retention_check(traj, seeds, tau, beta)
        ok &= rep.passed
        results["retention.json"] = JsonDoc(rep.to_dict(), "retention-report")
        print(f"retention: worst margin={rep.worst_margin:.3e} tol={rep.tol:.3e} fitted beta={rep.fitted_beta:.4g}")
    if "front" in wanted:
        rep = limit.front_velocity_check(traj, t_range=(a.t_from, a.t_to))
        ok &= rep.worst <= 0.15
        results["front.json"] = JsonDoc(rep.to_dict(), "front-report")
        print(f"front: worst relative error={rep.worst:.3f}")
    out = a.out or os.path.join(a.run_dir, "diagnostics")
    write_outputs(results, out, {"run": os.path.abspath(a.run_dir), "checks": wanted, "tau": tau})
    return EXIT_OK if ok else EXIT_FAIL


def cmd_barriers(a):
    sc = load_scenario(a.scenario)
    ks = _parse_ks(a.ks) if a.ks else [sc.k]
    do_z = a.z or not a.pi
    do_pi = a.pi or not a.z
    grid = sc.grid()
    T = a.t_end if a.t_end is not None else sc.t_end
    times = list(np.linspace(0.0, T, 11))
    results, ok = {}, True
    trajs = {k: run(sc.spec, grid, sc.initial(grid), sc.config(k, t_end=T)) for k in ks}
    if do_z:
        alpha = None
        for j in range(-4, 11):
            phi = barriers.build_radial_phi(sc.spec.m, 0.0, max(abs(grid.x_lo), abs(grid.x_hi)), 2001,
                                            sc.spec.dim, fit_times=times)
            b_sup = max(float(np.max(np.abs(sc.spec.b(grid.faces, t)))) for t in times)
            Z = barriers.build_super_Z(phi, a.gamma_z, b_sup, 2.0**j)
            stats = [barriers.barrier_residual(Z, sc.spec, grid, k, times) for k in ks]
            if all(s.passed for s in stats):
                alpha = 2.0**j
                break
        if alpha is None:
            _say("no power-of-two alpha makes Z a super-solution")
            ok = False
        for k, st in zip(ks, stats):
            cmp_ = barriers.comparison_vs_solver(Z, trajs[k], "upper")
            ok &= st.passed and cmp_.passed
            results[f"z_k{k:g}.json"] = JsonDoc({"barrier": Z.to_dict(), "residual": st.to_dict(),
                                                 "comparison": cmp_.to_dict()}, "barrier-report")
            print(f"Z k={k:g}: alpha={Z.alpha:g} min residual={st.min_res:.3e} tol={st.tol:.3e} "
                  f"comparison violation={cmp_.violation:.3e}")
        results["z_profile.csv"] = CsvTable(
            ["x", "t", "Z"], [[x, t, z] for t in times for x, z in zip(grid.x, Z.value(grid.x, t))], "barrier-profile")
    if do_pi:
        Pi = barriers.build_sub_Pi(a.gamma_pi, a.r_pi, sc.spec, grid, a.x0, t_end=T)
        for k in ks:
            st = barriers.barrier_residual(Pi, sc.spec, grid, k, times)
            cmp_ = barriers.comparison_vs_solver(Pi, trajs[k], "lower")
            ok &= st.passed and cmp_.passed
            results[f"pi_k{k:g}.json"] = JsonDoc({"barrier": Pi.to_dict(), "residual": st.to_dict(),
                                                  "comparison": cmp_.to_dict()}, "barrier-report")
            print(f"Pi k={k:g}: max residual={st.max_res:.3e} tol={st.tol:.3e} "
                  f"comparison violation={cmp_.violation:.3e}")
        results["pi_profile.csv"] = CsvTable(
            ["x", "t", "Pi"], [[x, t, v] for t in times for x, v in zip(grid.x, Pi.value(grid.x, t))], "barrier-profile")
    out = a.out or f"barriers-{sc.name}"
    write_outputs(results, out, {"scenario": sc.name, "ks": ks, "t_end": T, "gamma_z": a.gamma_z,
                                 "gamma_pi": a.gamma_pi, "r_pi": a.r_pi, "x0": a.x0})
    return EXIT_OK if ok else EXIT_FAIL


def cmd_reproduce_fig1(a):
    sc = load_scenario("fig1")
    cfg = sc.config(a.k, t_end=a.t_end, backend=a.backend)
    traj = run(sc.spec, sc.grid(), sc.initial(), cfg)
    s = traj.snapshots[-1]
    m = traj.frame(s.t).m
    sat = limit.plateau_saturation(traj.grid, s.rho, m, s.p)
    results = run_results(sc, traj)
    results["saturation.json"] = JsonDoc({"schema_version": 1, "k": cfg.k, "t": s.t, "theta": 1e-3,
                                          "erosion": 5, "max_rel_gap": sat, "bound": 0.05,
                                          "passed": sat <= 0.05}, "saturation")
    write_outputs(results, a.out, run_config(sc, cfg))
    print(f"fig1 k={cfg.k:g} t={s.t:g}: plateau max|rho-m|/m = {sat:.4f} (bound 0.05) -> {a.out}")
    return EXIT_OK if sat <= 0.05 else EXIT_FAIL


# -- parser ------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser():
    p = _Parser(prog="hslab", description="Hele-Shaw limit laboratory for the modified porous medium equation.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(q):
        q.add_argument("--t-end", type=float, default=None)
        q.add_argument("--n-outputs", type=int, default=None)
        q.add_argument("--backend", choices=["cython", "python"], default=None)
        q.add_argument("--out", default=None)

    q = sub.add_parser("simulate", help="run one scenario")
    q.add_argument("scenario")
    q.add_argument("--k", type=float, default=None)
    common(q)
    q.set_defaults(func=cmd_simulate)

    q = sub.add_parser("sweep", help="run a scenario for several k")
    q.add_argument("scenario")
    q.add_argument("--ks", default="10,20,40,80")
    common(q)
    q.set_defaults(func=cmd_sweep)

    q = sub.add_parser("diagnose", help="pressure and limit checks on a run directory")
    q.add_argument("run_dir")
    for flag in ("ab", "estimates", "complementarity", "retention", "front"):
        q.add_argument(f"--{flag}", action="store_true")
    q.add_argument("--ab-mode", choices=["generalized", "refined"], default=None)
    q.add_argument("--constant", type=float, default=None, help="K1 or beta to test against")
    q.add_argument("--beta", type=float, default=None, help="beta for the retention check")
    q.add_argument("--tau", type=float, default=None)
    q.add_argument("--seeds", type=int, default=20)
    q.add_argument("--t-from", type=float, default=0.2)
    q.add_argument("--t-to", type=float, default=0.5)
    q.add_argument("--out", default=None)
    q.set_defaults(func=cmd_diagnose)

    q = sub.add_parser("barriers", help="check the Z and Pi barriers")
    q.add_argument("scenario")
    q.add_argument("--z", action="store_true")
    q.add_argument("--pi", action="store_true")
    q.add_argument("--ks", default=None)
    q.add_argument("--gamma-z", type=float, default=2.0)
    q.add_argument("--gamma-pi", type=float, default=0.02)
    q.add_argument("--r-pi", type=float, default=0.2)
    q.add_argument("--x0", type=float, default=0.0)
    q.add_argument("--t-end", type=float, default=None)
    q.add_argument("--out", default=None)
    q.set_defaults(func=cmd_barriers)

    q = sub.add_parser("reproduce-fig1", help="run the congested Gaussian-decay example")
    q.add_argument("--k", type=float, default=None)
    q.add_argument("--t-end", type=float, default=None)
    q.add_argument("--backend", choices=["cython", "python"], default=None)
    q.add_argument("--out", default="fig1")
    q.set_defaults(func=cmd_reproduce_fig1)
    return p


def main(argv=None) -> int:
    try:
        a = build_parser().parse_args(argv)
        return a.func(a)
    except UsageError as e:
        _say(f"usage error: {e}")
        return EXIT_USAGE
    except (ParseError, ValidationError) as e:
        _say(f"error: {e}")
        return EXIT_USAGE
    except (HslabError, IoError) as e:
        _say(f"error: {type(e).__name__}: {e}")
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
