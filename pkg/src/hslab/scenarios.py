"""Scenarios: coefficients, initial data, grid and solver defaults, with a
flat sectioned key-value text format and a small built-in library."""
from __future__ import annotations

import copy
import math
import os
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .coefficients import CoefficientSpec, validate_assumptions
from .errors import ParseError, ValidationError
from .grid import Grid, read_field_csv
from .solver import SolverConfig

FORMAT_VERSION = 1


# -- initial data ------------------------------------------------------------

def barenblatt(x, t, k, C, dim=1):
    """Self-similar solution of ``u_t = Lap(u^k)``."""
    beta = 1.0 / (dim * (k - 1) + 2)
    alpha = dim * beta
    kappa = beta * (k - 1) / (2 * k)
    r2 = np.asarray(x, float) ** 2
    core = np.clip(C - kappa * r2 * t ** (-2 * beta), 0.0, None)
    return t ** (-alpha) * core ** (1.0 / (k - 1))


def barenblatt_laplacian_p(t, k, dim=1):
    """Constant ``Lap p`` inside the support of the Barenblatt pressure."""
    return -1.0 / ((k - 1 + 2.0 / dim) * t)


INITIAL_KINDS = {
    "patch": {"level": 1.0, "lo": -1.0, "hi": 1.0},
    "barenblatt": {"k": 2.0, "C": 0.25, "t0": 0.1},
    "gaussian": {"amp": 1.0, "width": 0.5, "center": 0.0, "cutoff": 1.0},
    "file": {"path": None},
}


def make_initial(desc: dict, spec: CoefficientSpec, grid: Grid, base_dir=None) -> np.ndarray:
    kind = desc.get("kind")
    if kind not in INITIAL_KINDS:
        raise ValueError(f"unknown initial data kind {kind!r}")
    prm = {**INITIAL_KINDS[kind], **{k: v for k, v in desc.items() if k != "kind"}}
    unknown = set(prm) - set(INITIAL_KINDS[kind])
    if unknown:
        raise ValueError(f"initial {kind}: unknown parameters {sorted(unknown)}")
    x = grid.x
    if kind == "patch":
        m0 = spec.m(x, 0.0)
        inside = (x >= prm["lo"]) & (x <= prm["hi"])
        return np.where(inside, prm["level"] * m0, 0.0)
    if kind == "barenblatt":
        return barenblatt(x, prm["t0"], prm["k"], prm["C"], grid.dim)
    if kind == "gaussian":
        d = x - prm["center"]
        return np.where(np.abs(d) <= prm["cutoff"], prm["amp"] * np.exp(-(d / prm["width"]) ** 2), 0.0)
    path = prm["path"]
    if path is None:
        raise ValueError("initial file: missing path")
    if base_dir and not os.path.isabs(path):
        path = os.path.join(base_dir, path)
    cols = read_field_csv(path)
    if "x" not in cols or "rho" not in cols:
        raise ValueError("initial file needs x and rho columns")
    if cols["x"].size != grid.n_cells or np.max(np.abs(cols["x"] - x)) > 1e-9 * max(1.0, grid.h):
        raise ValueError("initial file grid does not match the scenario grid")
    return cols["rho"]


# -- scenario ----------------------------------------------------------------

@dataclass
class Scenario:
    name: str
    spec: CoefficientSpec
    initial_desc: dict
    n_cells: int
    k: float
    t_end: float
    n_outputs: int = 50
    cfl_safety: float = 0.4
    regularization_n: int | None = None
    congested: bool = False
    description: str = ""
    base_dir: str | None = field(default=None, compare=False, repr=False)

    def grid(self) -> Grid:
        return Grid(self.spec.dim, self.n_cells, *self.spec.domain)

    def initial(self, grid=None) -> np.ndarray:
        return make_initial(self.initial_desc, self.spec, grid or self.grid(), self.base_dir)

    def config(self, k=None, *, t_end=None, n_outputs=None, backend=None) -> SolverConfig:
        return SolverConfig(
            k=float(self.k if k is None else k),
            t_end=float(self.t_end if t_end is None else t_end),
            n_outputs=int(self.n_outputs if n_outputs is None else n_outputs),
            cfl_safety=self.cfl_safety, regularization_n=self.regularization_n, backend=backend,
        )

    def replace(self, **kw) -> "Scenario":
        out = copy.deepcopy(self)
        for k, v in kw.items():
            setattr(out, k, v)
        return out

    def validate(self, k_list=None):
        grid = self.grid()
        rep = validate_assumptions(self.spec, grid, self.initial(grid), k_list or [self.k], t_horizon=self.t_end)
        if not rep.passed:
            raise ValidationError(f"scenario {self.name!r} rejected: {rep.failures}", rep)
        return rep


def _gauss(ax, at):
    return {"family": "gauss_decay", "ax": ax, "at": at}


def _builtin(name) -> Scenario:
    if name in ("fig1", "fig1-saturated"):
        level = 0.9 if name == "fig1" else 1.0
        return Scenario(
            name=name,
            spec=CoefficientSpec(m=_gauss(0.1, 1 / 6), b=0.0, f=0.0, delta=0.05, domain=(-3.0, 3.0)),
            initial_desc={"kind": "patch", "level": level, "lo": -1.0, "hi": 1.0},
            n_cells=400, k=40.0, t_end=1.0, congested=True,
            description="m = exp(-t/6 - x^2/10), no drift or source, patch data",
        )
    if name == "pme-barenblatt":
        return Scenario(
            name=name,
            spec=CoefficientSpec(m=1.0, b=0.0, f=0.0, delta=0.5, domain=(-2.0, 2.0)),
            initial_desc={"kind": "barenblatt", "k": 2.0, "C": 0.25, "t0": 0.1},
            n_cells=400, k=2.0, t_end=0.25,
            description="plain porous medium equation from a Barenblatt profile",
        )
    if name == "drift-source":
        return Scenario(
            name=name,
            spec=CoefficientSpec(m=1.0, b={"family": "sine", "amp": 0.8}, f=0.5, delta=0.5, domain=(-4.0, 4.0)),
            initial_desc={"kind": "patch", "level": 0.9, "lo": -1.0, "hi": 1.0},
            n_cells=400, k=40.0, t_end=1.0,
            description="m = 1 with growth f = 0.5 and drift b = 0.8 sin x; not congested",
        )
    if name == "radial-source":
        return Scenario(
            name=name,
            spec=CoefficientSpec(m=1.0, b=0.0, f=0.5, delta=0.5, domain=(0.0, 1.6), dim=2),
            initial_desc={"kind": "patch", "level": 1.0, "lo": 0.0, "hi": 1.0},
            n_cells=400, k=80.0, t_end=0.5, congested=True,
            description="saturated disk growing under f = 0.5; limit radius exp(t/4)",
        )
    raise KeyError(name)


BUILTINS = ("fig1", "fig1-saturated", "pme-barenblatt", "drift-source", "radial-source")


def builtin(name) -> Scenario:
    try:
        return _builtin(name)
    except KeyError:
        raise ParseError(f"unknown built-in scenario {name!r}") from None


# -- text format -------------------------------------------------------------

_TOP = ("name", "description", "congested", "format_version")
_SECTIONS = {
    "coefficients": ("dim", "domain", "delta", "decay_at_infinity"),
    "m": None, "b": None, "f": None, "initial": None,
    "grid": ("n_cells",),
    "solver": ("k", "t_end", "n_outputs", "cfl_safety", "regularization_n"),
}


def _parse_scalar(text, line, key):
    s = text.strip()
    if not s:
        raise ParseError("empty value", line, key)
    if s[0] == '"':
        if len(s) < 2 or s[-1] != '"':
            raise ParseError("unterminated string", line, key)
        return s[1:-1]
    low = s.lower()
    if low in ("true", "false"):
        return low == "true"
    if low in ("none", "null"):
        return None
    try:
        if "/" in s:
            return float(Fraction(s))
        v = float(s)
    except (ValueError, ZeroDivisionError):
        if any(c in s for c in " =[]"):
            raise ParseError(f"cannot parse value {s!r}", line, key) from None
        return s
    if math.isfinite(v) and v == int(v) and all(c in "+-0123456789" for c in s):
        return int(v)
    return v


def _parse_value(text, line, key):
    parts = _split_commas(text)
    if len(parts) > 1:
        return [_parse_scalar(p, line, key) for p in parts]
    return _parse_scalar(text, line, key)


def _split_commas(text):
    out, cur, quoted = [], "", False
    for ch in text:
        if ch == '"':
            quoted = not quoted
        if ch == "," and not quoted:
            out.append(cur)
            cur = ""
        else:
            cur += ch
    out.append(cur)
    return out


def parse_scenario_text(text, base_dir=None) -> Scenario:
    top, sections = {}, {}
    current = None
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip() if '"' not in raw else _strip_comment(raw)
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ParseError("malformed section header", n)
            current = line[1:-1].strip()
            if current not in _SECTIONS:
                raise ParseError(f"unknown section [{current}]", n)
            if current in sections:
                raise ParseError(f"duplicate section [{current}]", n)
            sections[current] = {}
            continue
        if "=" not in line:
            raise ParseError("expected key = value", n)
        key, val = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ParseError("missing key", n)
        target = top if current is None else sections[current]
        allowed = _TOP if current is None else _SECTIONS[current]
        if allowed is not None and key not in allowed:
            raise ParseError(f"unknown key {key!r}", n, key)
        if key in target:
            raise ParseError(f"duplicate key {key!r}", n, key)
        target[key] = _parse_value(val, n, key)
    return _build(top, sections, base_dir)


def _strip_comment(raw):
    out, quoted = "", False
    for ch in raw:
        if ch == '"':
            quoted = not quoted
        if ch == "#" and not quoted:
            break
        out += ch
    return out.strip()


def _need(d, key, where):
    if key not in d:
        raise ParseError(f"missing key {key!r} in {where}", None, key)
    return d[key]


def _build(top, sec, base_dir):
    for s in ("coefficients", "m", "b", "f", "initial", "grid", "solver"):
        if s not in sec:
            raise ParseError(f"missing section [{s}]")
    fv = top.get("format_version", FORMAT_VERSION)
    if fv != FORMAT_VERSION:
        raise ParseError(f"unsupported format_version {fv}", None, "format_version")
    co = sec["coefficients"]
    fams = {}
    for s in ("m", "b", "f"):
        d = dict(sec[s])
        _need(d, "family", f"[{s}]")
        fams[s] = d
    domain = _need(co, "domain", "[coefficients]")
    if not isinstance(domain, list) or len(domain) != 2:
        raise ParseError("domain must be two numbers", None, "domain")
    try:
        spec = CoefficientSpec(
            m=fams["m"], b=fams["b"], f=fams["f"], delta=float(_need(co, "delta", "[coefficients]")),
            domain=tuple(domain), dim=int(co.get("dim", 1)),
            decay_at_infinity=bool(co.get("decay_at_infinity", False)),
        )
    except (ValueError, TypeError) as e:
        raise ParseError(str(e)) from None
    init = dict(sec["initial"])
    _need(init, "kind", "[initial]")
    if init["kind"] not in INITIAL_KINDS:
        raise ParseError(f"unknown initial kind {init['kind']!r}", None, "kind")
    bad = set(init) - set(INITIAL_KINDS[init["kind"]]) - {"kind"}
    if bad:
        raise ParseError(f"unknown initial parameter {sorted(bad)[0]!r}", None, sorted(bad)[0])
    so = sec["solver"]
    return Scenario(
        name=str(_need(top, "name", "header")),
        spec=spec,
        initial_desc=init,
        n_cells=int(_need(sec["grid"], "n_cells", "[grid]")),
        k=float(_need(so, "k", "[solver]")),
        t_end=float(_need(so, "t_end", "[solver]")),
        n_outputs=int(so.get("n_outputs", 50)),
        cfl_safety=float(so.get("cfl_safety", 0.4)),
        regularization_n=so.get("regularization_n"),
        congested=bool(top.get("congested", False)),
        description=str(top.get("description", "")),
        base_dir=base_dir,
    )


def _fmt_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if v is None:
        return "none"
    if isinstance(v, (list, tuple)):
        return ", ".join(_fmt_value(u) for u in v)
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return '"' + str(v) + '"'


def scenario_to_text(sc: Scenario) -> str:
    lines = [f"format_version = {FORMAT_VERSION}", f"name = {_fmt_value(sc.name)}"]
    if sc.description:
        lines.append(f"description = {_fmt_value(sc.description)}")
    lines.append(f"congested = {_fmt_value(sc.congested)}")

    def section(name, items):
        lines.append("")
        lines.append(f"[{name}]")
        for k, v in items:
            lines.append(f"{k} = {_fmt_value(v)}")

    sp = sc.spec
    section("coefficients", [("dim", sp.dim), ("domain", list(sp.domain)), ("delta", float(sp.delta)),
                             ("decay_at_infinity", sp.decay_at_infinity)])
    for s in ("m", "b", "f"):
        d = getattr(sp, s).to_dict()
        section(s, [("family", d.pop("family"))] + list(d.items()))
    d = dict(sc.initial_desc)
    section("initial", [("kind", d.pop("kind"))] + list(d.items()))
    section("grid", [("n_cells", sc.n_cells)])
    section("solver", [("k", float(sc.k)), ("t_end", float(sc.t_end)), ("n_outputs", sc.n_outputs),
                       ("cfl_safety", float(sc.cfl_safety)), ("regularization_n", sc.regularization_n)])
    return "\n".join(lines) + "\n"


def write_scenario(sc: Scenario, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(scenario_to_text(sc))


def load_scenario(source, *, validate=True) -> Scenario:
    """Load a built-in by name or a scenario file by path."""
    if source in BUILTINS:
        sc = builtin(source)
    else:
        if not os.path.isfile(source):
            raise ParseError(f"no such scenario file or built-in: {source!r}")
        with open(source, encoding="utf-8") as fh:
            sc = parse_scenario_text(fh.read(), base_dir=os.path.dirname(os.path.abspath(source)))
    if validate:
        try:
            sc.validate()
        except ValueError as e:
            raise ValidationError(str(e)) from None
    return sc
