import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from surflin.config import ConfigError, config_from_dict, parse_affine, parse_config, render_affine
from surflin.gamma import DEFAULT_EPS


def test_minimal_config_defaults():
    cfg = config_from_dict({"material": {"lambda": 1}, "grid": {}})
    s = cfg.sweep
    assert (s.grid.nx, s.grid.ny, s.grid.quad_order) == (12, 12, 4)
    assert s.material.p == 2 and s.material.q == 2
    assert s.eps == DEFAULT_EPS
    assert s.grid.dirichlet_edges == ("left",)
    assert cfg.output.formats == ("csv", "json")


def test_p_bound_violation_named():
    with pytest.raises(ConfigError, match=r"p >= d\*q/\(q\+1\) = 1\.33333"):
        config_from_dict({"material": {"p": 1.2, "q": 2}})


@pytest.mark.parametrize("raw,field", [
    ({"material": {"nu": 0.3}}, "nu"),
    ({"solver": {"tolerance": 1}}, "tolerance"),
    ({"extra": {}}, "extra"),
    ({"load": {"traction": {"middle": ["0", "0"]}}}, "middle"),
])
def test_unknown_field_named(raw, field):
    with pytest.raises(ConfigError, match=field):
        config_from_dict(raw)


def test_traction_kind_defaults_to_free_edges():
    cfg = config_from_dict({"problem": {"kind": "traction"}})
    assert cfg.sweep.grid.dirichlet_edges == ()


def test_eps_range_form():
    cfg = config_from_dict({"problem": {"eps": {"j_min": 3, "j_max": 5}}})
    assert cfg.sweep.eps == (0.125, 0.0625, 0.03125)
    with pytest.raises(ConfigError):
        config_from_dict({"problem": {"eps": [0.1, 0.2]}})


def test_other_validation_errors():
    for raw in ({"material": {"dim": 3, "p": 3}}, {"output": {"formats": ["xml"]}},
                {"assembly": {"threads": 0}}, {"grid": {"nx": 2}}, {"load": {"body": ["1"]}},
                {"load": {"body": ["1 +", "0"]}}):
        with pytest.raises(ConfigError):
            config_from_dict(raw)


def test_parse_affine():
    assert parse_affine("0.05") == (0.05, 0.0, 0.0)
    assert parse_affine("0.02*x1") == (0.0, 0.02, 0.0)
    assert parse_affine("1 - x2 + 2.5e-1*x1 - 3") == (-2.0, 0.25, -1.0)
    assert parse_affine(-4) == (-4.0, 0.0, 0.0)
    for bad in ("", "x3", "2x1", "1 2", "*x1", True, None):
        with pytest.raises(ConfigError):
            parse_affine(bad)


@given(st.tuples(*[st.floats(-1e6, 1e6, allow_nan=False)] * 3))
def test_render_parse_round_trip(c):
    assert parse_affine(render_affine(c)) == tuple(float(x) for x in c)


def test_parse_error_reports_position(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{\n  "material": {"p": 2,}\n}')
    with pytest.raises(ConfigError, match=r"bad\.json:2:"):
        parse_config(p)
    with pytest.raises(ConfigError, match="missing"):
        parse_config(tmp_path / "missing.json")


coef = st.floats(-10, 10, allow_nan=False).map(lambda x: round(x, 6))
affine = st.tuples(coef, coef, coef).map(render_affine)
pair = st.lists(affine, min_size=2, max_size=2)


@st.composite
def raw_configs(draw):
    q = draw(st.sampled_from([1.0, 1.5, 2.0, 3.0]))
    kind = draw(st.sampled_from(["dirichlet", "traction"]))
    edges = [] if kind == "traction" else draw(
        st.lists(st.sampled_from(["left", "right", "bottom", "top"]), min_size=1, max_size=4, unique=True))
    j0 = draw(st.integers(1, 4))
    return {
        "material": {"lambda": draw(st.floats(0, 5)), "mu": draw(st.floats(0.1, 5)),
                     "kappa": draw(st.floats(0.1, 5)), "gamma": draw(st.floats(0, 5)),
                     "p": draw(st.floats(max(2 * q / (q + 1), 1.05), 4)), "q": q, "dim": 2},
        "grid": {"lx": draw(st.floats(0.5, 2)), "nx": draw(st.integers(4, 20)), "quad_order": draw(st.integers(4, 6))},
        "load": {"body": draw(pair), "traction": draw(st.dictionaries(
                     st.sampled_from(["left", "right", "bottom", "top"]), pair, max_size=4)),
                 "equilibrate": draw(st.booleans())},
        "problem": {"family": draw(st.sampled_from("GFI")), "kind": kind, "dirichlet_edges": edges,
                    "eps": {"j_min": j0, "j_max": j0 + draw(st.integers(0, 5))}},
        "solver": {"max_iter": draw(st.integers(1, 5000)), "tol_grad": draw(st.floats(1e-12, 1e-3))},
        "assembly": {"threads": draw(st.integers(1, 8))},
        "output": {"directory": draw(st.text("abc/_", min_size=1, max_size=8)),
                   "formats": draw(st.sampled_from([["csv"], ["json"], ["csv", "json"]]))},
        "check": {"tolerances": {"gradient_fd": draw(st.floats(1e-9, 1e-3))}},
    }


@settings(max_examples=60, deadline=None)
@given(raw_configs())
def test_config_round_trip(raw):
    cfg = config_from_dict(raw)
    again = config_from_dict(json.loads(cfg.to_json()))
    assert again == cfg
