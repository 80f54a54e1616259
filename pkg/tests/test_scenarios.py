import json

import pytest

from angledroop.errors import ScenarioError
from angledroop.scenarios import (
    BUILTINS,
    apply_overrides,
    build_graph,
    builtin_names,
    load_scenario,
    validate_scenario,
)


def test_builtin_names():
    names = builtin_names()
    for expected in ("testcase1", "testcase1_smoke", "testcase2", "ring3_reduced"):
        assert expected in names


def test_all_builtins_validate():
    for name in builtin_names():
        validate_scenario(load_scenario(name))


def test_load_returns_independent_copy():
    scn = load_scenario("testcase1")
    scn["graph"]["n"] = 99
    scn["events"][0]["delta_g"] = 123.0
    again = load_scenario("testcase1")
    assert again["graph"]["n"] == 3
    assert again["events"][0]["delta_g"] == 0.03
    assert BUILTINS["testcase1"]["graph"]["n"] == 3


def test_load_unknown_name_lists_builtins():
    with pytest.raises(ScenarioError, match="testcase1"):
        load_scenario("nonexistent_scenario")


def test_load_from_json_file(tmp_path):
    scn = load_scenario("ring3_reduced")
    path = tmp_path / "custom.json"
    path.write_text(json.dumps(scn))
    loaded = load_scenario(str(path))
    assert loaded == scn


def test_load_malformed_json_reports_position(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text('{\n  "model": oops\n}\n')
    with pytest.raises(ScenarioError, match=rf"{path.name}|:2:"):
        load_scenario(str(path))
    path2 = tmp_path / "toplevel.json"
    path2.write_text("[1, 2, 3]\n")
    with pytest.raises(ScenarioError, match="top level"):
        load_scenario(str(path2))


def test_apply_overrides_paths_and_values():
    scn = load_scenario("testcase1")
    apply_overrides(scn, [
        "dt=2e-6",
        "graph.kind=path",
        "events.0.delta_g=0.05",
        "record_stride=10",
        "converter.alpha=0.25",
        "extra.note=hello",
    ])
    assert scn["dt"] == 2e-6 and isinstance(scn["dt"], float)
    assert scn["graph"]["kind"] == "path"
    assert scn["events"][0]["delta_g"] == 0.05
    assert scn["record_stride"] == 10 and isinstance(scn["record_stride"], int)
    assert scn["converter"]["alpha"] == 0.25
    # unquoted non-JSON text falls back to a plain string, and missing
    # intermediate objects are created on the way
    assert scn["extra"]["note"] == "hello"


def test_apply_overrides_json_values():
    scn = load_scenario("ring3_reduced")
    apply_overrides(scn, ['p_disturbance=[0.2, 0.0, -0.2]', "controller=frequency"])
    assert scn["p_disturbance"] == [0.2, 0.0, -0.2]
    assert scn["controller"] == "frequency"


@pytest.mark.parametrize("bad", [
    "no_equals_sign",
    "a..b=1",
    "=5",
    "dt.x=1",
    "events.notanum.delta_g=1",
    "events.5.delta_g=1",
])
def test_apply_overrides_malformed(bad):
    scn = load_scenario("testcase1")
    with pytest.raises(ScenarioError):
        apply_overrides(scn, [bad])


def test_build_graph_from_kind():
    g = build_graph({"kind": "ring", "n": 4, "susceptance": 2.0})
    assert g.n == 4 and g.m == 4
    assert set(g.susceptances) == {2.0}
    g2 = build_graph({"kind": "complete", "n": 4})
    assert g2.m == 6


def test_build_graph_from_edges():
    g = build_graph({"n": 3, "edges": [[0, 1, 1.0], [1, 2, 2.5]]})
    assert g.n == 3 and g.m == 2
    assert sorted(g.susceptances) == [1.0, 2.5]


@pytest.mark.parametrize("spec,frag", [
    ({}, "kind"),
    ({"kind": "torus", "n": 3}, "graph.kind"),
    ({"kind": "path", "n": 0}, "graph.n"),
    ({"kind": "path", "n": 3, "susceptance": -1.0}, "graph.susceptance"),
    ({"n": 3, "edges": [[0, 1]]}, "edges"),
    ({"n": 4, "edges": [[0, 1, 1.0], [2, 3, 1.0]]}, "connected"),
    ({"kind": "ring", "n": 2}, "graph"),
])
def test_build_graph_rejects(spec, frag):
    with pytest.raises(ScenarioError, match=frag):
        build_graph(spec)


def test_validate_names_offending_field():
    scn = load_scenario("testcase1")
    scn["converter"]["alpha"] = -0.5
    with pytest.raises(ScenarioError, match="converter.alpha"):
        validate_scenario(scn)

    scn = load_scenario("testcase1")
    scn["events"][0]["node"] = 5
    with pytest.raises(ScenarioError, match=r"events\[0\].node"):
        validate_scenario(scn)

    scn = load_scenario("testcase2")
    scn["sizes"] = [10, 2]
    scn["graph_family"]["kind"] = "ring"
    with pytest.raises(ScenarioError, match=r"sizes\[1\]"):
        validate_scenario(scn)

    scn = load_scenario("testcase1")
    scn["model"] = "quantum"
    with pytest.raises(ScenarioError, match="model"):
        validate_scenario(scn)

    scn = load_scenario("testcase1")
    scn["converter"]["theta_nom"] = [0.1, 0.2]
    with pytest.raises(ScenarioError, match="converter.theta_nom"):
        validate_scenario(scn)

    scn = load_scenario("testcase1")
    scn["converter"]["resistance"] = 1.0
    with pytest.raises(ScenarioError, match="converter.resistance"):
        validate_scenario(scn)

    scn = load_scenario("ring3_reduced")
    del scn["gamma"]
    with pytest.raises(ScenarioError, match="gamma"):
        validate_scenario(scn)

    scn = load_scenario("ring3_reduced")
    scn["controller"] = "bang_bang"
    with pytest.raises(ScenarioError, match="controller"):
        validate_scenario(scn)


def test_validate_linearized_requires_kind_gains():
    scn = {
        "model": "linearized", "kind": "frequency",
        "graph": {"kind": "path", "n": 3, "susceptance": 1.0},
        "inertia": 1.0, "dt": 1e-2, "horizon": 1.0,
    }
    with pytest.raises(ScenarioError, match="damping"):
        validate_scenario(scn)
    scn["damping"] = 0.5
    validate_scenario(scn)
