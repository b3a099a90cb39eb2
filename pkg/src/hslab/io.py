"""Deterministic result files: CSV tables, JSON documents and binary
snapshots, indexed by a manifest.json carrying schema versions and the hash
of the configuration that produced them."""
from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .grid import Grid, fmt, read_snapshot, write_snapshot
from .solver import SolverConfig, SolverState, Trajectory

MANIFEST_SCHEMA = 1
SNAPSHOT_FIELDS = ("rho", "v", "p", "m")


class IoError(OSError):
    """Raised when an output directory cannot be written or read back."""


def canonical_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def config_hash(obj) -> str:
    text = json.dumps(obj, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


@dataclass
class CsvTable:
    header: list
    rows: list
    schema: str
    schema_version: int = 1


@dataclass
class JsonDoc:
    obj: object
    schema: str
    schema_version: int = 1


@dataclass
class TextDoc:
    text: str
    schema: str
    schema_version: int = 1


@dataclass
class SnapshotData:
    grid: Grid
    t: float
    fields: dict
    schema: str = "snapshot"
    schema_version: int = 1


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return fmt(v)
    return str(v)


def csv_text(header, rows) -> str:
    lines = [",".join(header)]
    lines += [",".join(_cell(v) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


@dataclass
class OutputWriter:
    root: str
    entries: list = field(default_factory=list)

    def __post_init__(self):
        try:
            os.makedirs(self.root, exist_ok=True)
        except OSError as e:
            raise IoError(f"cannot create {self.root}: {e}") from None

    def _record(self, rel, kind, schema, version):
        path = os.path.join(self.root, rel)
        with open(path, "rb") as fh:
            data = fh.read()
        self.entries.append({
            "path": rel.replace(os.sep, "/"), "kind": kind, "schema": schema,
            "schema_version": version, "bytes": len(data),
            "sha256": hashlib.sha256(data).hexdigest(),
        })

    def _open(self, rel, mode):
        path = os.path.join(self.root, rel)
        try:
            os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
            return open(path, mode, **({"newline": "\n", "encoding": "utf-8"} if "b" not in mode else {}))
        except OSError as e:
            raise IoError(f"cannot write {path}: {e}") from None

    def add(self, rel, payload):
        if isinstance(payload, CsvTable):
            with self._open(rel, "w") as fh:
                fh.write(csv_text(payload.header, payload.rows))
            self._record(rel, "csv", payload.schema, payload.schema_version)
        elif isinstance(payload, JsonDoc):
            with self._open(rel, "w") as fh:
                fh.write(canonical_json(payload.obj))
            self._record(rel, "json", payload.schema, payload.schema_version)
        elif isinstance(payload, TextDoc):
            with self._open(rel, "w") as fh:
                fh.write(payload.text)
            self._record(rel, "text", payload.schema, payload.schema_version)
        elif isinstance(payload, SnapshotData):
            self._open(rel, "wb").close()
            write_snapshot(os.path.join(self.root, rel), payload.grid, payload.t,
                           [payload.fields[k] for k in SNAPSHOT_FIELDS])
            self._record(rel, "snapshot", payload.schema, payload.schema_version)
        else:
            raise TypeError(f"unsupported payload for {rel}: {type(payload).__name__}")

    def finalize(self, config=None) -> dict:
        manifest = {
            "schema_version": MANIFEST_SCHEMA,
            "tool": "hslab",
            "tool_version": __version__,
            "config_hash": config_hash(config) if config is not None else None,
            "artifacts": sorted(self.entries, key=lambda e: e["path"]),
        }
        with self._open("manifest.json", "w") as fh:
            fh.write(canonical_json(manifest))
        return manifest


def write_outputs(results: dict, root, config=None) -> dict:
    """Write ``{relative path: payload}`` under ``root`` and return the manifest."""
    w = OutputWriter(root)
    for rel in sorted(results):
        w.add(rel, results[rel])
    return w.finalize(config)


# -- runs --------------------------------------------------------------------

def run_config(scenario, config: SolverConfig) -> dict:
    cfg = config.to_dict()
    return {"scenario": scenario_dict(scenario), "solver": cfg}


def scenario_dict(scenario) -> dict:
    return {"name": scenario.name, "spec": scenario.spec.to_dict(), "initial": dict(scenario.initial_desc),
            "n_cells": scenario.n_cells}


def run_results(scenario, traj: Trajectory, prefix="") -> dict:
    """Payloads describing one trajectory (snapshots as CSV and binary)."""
    from .scenarios import scenario_to_text

    grid = traj.grid
    out = {}
    sc = scenario.replace(k=traj.k, t_end=traj.config.t_end)
    out[prefix + "scenario.txt"] = TextDoc(scenario_to_text(sc), "scenario")
    out[prefix + "config.json"] = JsonDoc(run_config(scenario, traj.config), "run-config")
    times = []
    for i, s in enumerate(traj.snapshots):
        m = traj.frame(s.t).m
        fields = {"rho": s.rho, "v": s.v, "p": s.p, "m": m}
        rows = [[x, *(fields[k][j] for k in SNAPSHOT_FIELDS)] for j, x in enumerate(grid.x)]
        out[f"{prefix}snapshots/snap_{i:04d}.csv"] = CsvTable(["x", *SNAPSHOT_FIELDS], rows, "snapshot-csv")
        out[f"{prefix}snapshots/snap_{i:04d}.hslb"] = SnapshotData(grid, s.t, fields)
        times.append([i, s.t, s.steps, traj.mass(i)])
    out[prefix + "times.csv"] = CsvTable(["index", "t", "steps", "mass"], times, "times")
    keys = ["step", "t", "dt", "mass", "source_integral", "clamped_mass"]
    out[prefix + "ledger.csv"] = CsvTable(keys, [[r[k] for k in keys] for r in traj.ledger], "ledger")
    resid, clamped = traj.mass_balance()
    out[prefix + "summary.json"] = JsonDoc({
        "schema_version": 1, "k": traj.k, "t_end": traj.config.t_end,
        "steps": traj.snapshots[-1].steps if traj.snapshots else 0,
        "mass_initial": traj.mass(0), "mass_final": traj.mass(-1),
        "source_integral": traj.source_integral, "clamped_mass": clamped,
        "mass_residual": resid, "cap_events": traj.cap_events,
    }, "run-summary")
    return out


def load_run(root):
    """Rebuild ``(scenario, trajectory)`` from a run directory written by :func:`run_results`."""
    from .scenarios import load_scenario

    try:
        with open(os.path.join(root, "config.json"), encoding="utf-8") as fh:
            cfg = json.load(fh)["solver"]
    except (OSError, KeyError, ValueError) as e:
        raise IoError(f"{root}: not a run directory ({e})") from None
    scenario = load_scenario(os.path.join(root, "scenario.txt"), validate=False)
    config = SolverConfig(
        k=cfg["k"], t_end=cfg["t_end"], cfl_safety=cfg["cfl_safety"], output_times=cfg["output_times"],
        t_start=cfg["t_start"], regularization_n=cfg["regularization_n"], max_steps=cfg["max_steps"],
        frame_dt=cfg["frame_dt"], guard_cells=cfg["guard_cells"], support_theta=cfg["support_theta"],
    )
    snapdir = os.path.join(root, "snapshots")
    names = sorted(n for n in os.listdir(snapdir) if n.endswith(".hslb"))
    traj = Trajectory(scenario.spec, scenario.grid(), config)
    for n in names:
        grid, t, fields = read_snapshot(os.path.join(snapdir, n))
        rho, _, _, m = fields
        traj.snapshots.append(SolverState.from_rho(rho, m, config.k, t))
    return scenario, traj
