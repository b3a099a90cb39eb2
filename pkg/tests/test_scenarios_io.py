import json
import os

import numpy as np
import pytest

from hslab.errors import ParseError, ValidationError
from hslab.io import (
    CsvTable, IoError, JsonDoc, SnapshotData, canonical_json, config_hash, load_run, run_config, run_results,
    write_outputs,
)
from hslab.scenarios import (
    BUILTINS, builtin, load_scenario, make_initial, parse_scenario_text, scenario_to_text, write_scenario,
)
from hslab.solver import run


def test_fig1_builtin_matches_the_example():
    sc = load_scenario("fig1")
    assert sc.k == 40 and sc.congested
    m = sc.spec.m.to_dict()
    assert m["family"] == "gauss_decay" and m["ax"] == 0.1 and m["at"] == 1 / 6
    assert sc.spec.b.to_dict() == {"family": "constant", "value": 0.0}
    assert sc.spec.f.to_dict() == {"family": "constant", "value": 0.0}


def test_barenblatt_builtin():
    sc = load_scenario("pme-barenblatt")
    assert sc.spec.m.to_dict()["value"] == 1.0 and sc.initial_desc["kind"] == "barenblatt"


@pytest.mark.parametrize("name", BUILTINS)
def test_round_trip(name, tmp_path):
    sc = builtin(name)
    path = tmp_path / "s.txt"
    write_scenario(sc, path)
    back = load_scenario(str(path))
    assert back == sc
    assert scenario_to_text(back) == scenario_to_text(sc)


def test_missing_file_and_unknown_builtin():
    with pytest.raises(ParseError):
        load_scenario("/nonexistent/scenario.txt")
    with pytest.raises(ParseError):
        builtin("nope")


GOOD = """\
name = "demo"
congested = true

[coefficients]
domain = -3, 3
delta = 0.05

[m]
family = "gauss_decay"
ax = 0.1
at = 1/6

[b]
family = "constant"
value = 0

[f]
family = "constant"
value = 0

[initial]
kind = "patch"   # comment after a value
level = 0.9

[grid]
n_cells = 200

[solver]
k = 40
t_end = 1
"""


def test_parse_good_text():
    sc = parse_scenario_text(GOOD)
    assert sc.spec.m.p["at"] == 1 / 6 and sc.spec.domain == (-3.0, 3.0)
    assert sc.n_cells == 200 and sc.initial_desc["level"] == 0.9


@pytest.mark.parametrize("text,line,key", [
    (GOOD.replace("ax = 0.1", "ax = [0.1"), 10, "ax"),
    (GOOD.replace("n_cells = 200", "cells = 200"), 26, "cells"),
    (GOOD.replace("[grid]", "[grd]"), 25, None),
    (GOOD.replace('name = "demo"', 'name = "demo'), 1, "name"),
    (GOOD.replace("k = 40", "k 40"), 29, None),
])
def test_parse_errors_carry_context(text, line, key):
    with pytest.raises(ParseError) as ei:
        parse_scenario_text(text)
    assert ei.value.line == line
    assert ei.value.key == key


def test_parse_missing_section_and_key():
    with pytest.raises(ParseError):
        parse_scenario_text(GOOD.replace("[grid]\nn_cells = 200\n", ""))
    with pytest.raises(ParseError) as ei:
        parse_scenario_text(GOOD.replace("t_end = 1\n", ""))
    assert ei.value.key == "t_end"


def test_validation_error(tmp_path):
    p = tmp_path / "bad.txt"
    p.write_text(GOOD.replace("delta = 0.05", "delta = 0.9"))
    with pytest.raises(ValidationError):
        load_scenario(str(p))


def test_file_initial_data(tmp_path):
    from hslab.grid import write_field_csv

    sc = builtin("fig1").replace(n_cells=50)
    g = sc.grid()
    write_field_csv(tmp_path / "rho0.csv", g, {"rho": 0.5 * sc.initial(g)})
    sc2 = sc.replace(initial_desc={"kind": "file", "path": "rho0.csv"}, base_dir=str(tmp_path))
    np.testing.assert_array_equal(sc2.initial(g), 0.5 * sc.initial(g))
    with pytest.raises(ValueError):
        make_initial({"kind": "blob"}, sc.spec, g)


def test_empty_results_manifest(tmp_path):
    man = write_outputs({}, tmp_path / "out")
    assert man["artifacts"] == [] and man["schema_version"] == 1
    on_disk = json.loads((tmp_path / "out" / "manifest.json").read_text())
    assert on_disk == man


def test_manifest_entries_and_hash(tmp_path):
    from hslab.grid import Grid

    g = Grid(1, 8, 0.0, 1.0)
    z = np.zeros(8)
    res = {
        "b.csv": CsvTable(["a", "b"], [[1, 0.1], [2, True]], "demo"),
        "a.json": JsonDoc({"x": 1}, "demo-json"),
        "s.hslb": SnapshotData(g, 0.5, {"rho": z, "v": z, "p": z, "m": z + 1}),
    }
    man = write_outputs(res, tmp_path, {"cfg": 1})
    assert [e["path"] for e in man["artifacts"]] == ["a.json", "b.csv", "s.hslb"]
    assert man["config_hash"] == config_hash({"cfg": 1})
    assert (tmp_path / "b.csv").read_text() == "a,b\n1,0.10000000000000001\n2,1\n"
    assert canonical_json({"b": 1, "a": 2}).index('"a"') < canonical_json({"b": 1, "a": 2}).index('"b"')
    with pytest.raises(TypeError):
        write_outputs({"x": object()}, tmp_path / "bad")


def test_unwritable_root(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(IoError):
        write_outputs({}, blocker / "sub")


def _tree(root):
    out = {}
    for d, _, files in os.walk(root):
        for f in files:
            p = os.path.join(d, f)
            with open(p, "rb") as fh:
                out[os.path.relpath(p, root)] = fh.read()
    return out


def test_runs_are_byte_identical_and_reload(tmp_path):
    sc = builtin("fig1").replace(n_cells=80)
    g = sc.grid()
    cfg = sc.config(20, t_end=0.05, n_outputs=3)
    for name in ("a", "b"):
        tr = run(sc.spec, g, sc.initial(g), cfg)
        write_outputs(run_results(sc, tr), tmp_path / name, run_config(sc, cfg))
    a, b = _tree(tmp_path / "a"), _tree(tmp_path / "b")
    assert a == b and "manifest.json" in a and "snapshots/snap_0003.hslb" in a
    sc2, tr2 = load_run(str(tmp_path / "a"))
    assert sc2.name == sc.name and sc2.n_cells == 80 and tr2.k == 20
    np.testing.assert_array_equal(tr2.snapshots[-1].rho, tr.snapshots[-1].rho)
    with pytest.raises(IoError):
        load_run(str(tmp_path / "missing"))
