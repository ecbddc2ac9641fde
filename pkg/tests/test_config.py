import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from radcurv.config import ConfigError, RunConfig, load_config, parse_config, serialize_config
from radcurv.continuation import SolverConfig
from radcurv.sphere_chart import DomainSpec
from radcurv.symfun import CurvatureSpec

ROOT = Path(__file__).resolve().parents[1]

BASE = """\
[domain]
kind = cap
theta0 = 1.0471975511965976

[curvature]
n = 2
r = 2
mode = scalar
R = {R}

[boundary]
phi = 1.0
subsolution = unit-sphere

[grid]
ns = 33
nt = 64
"""


def test_scalar_mode_conversion():
    assert parse_config(BASE.format(R=1.0)).psi_tilde == pytest.approx(1 / math.sqrt(2), rel=1e-15)
    cfg = parse_config(BASE.format(R=1.5))
    assert cfg.psi_tilde == pytest.approx(math.sqrt(0.75), rel=1e-15)
    assert (cfg.ns, cfg.nt) == (33, 64)


@pytest.mark.parametrize("R", [2.0, 0.0, -1.0, 3.5])
def test_scalar_range_rejected_with_bound(R):
    with pytest.raises(ConfigError) as err:
        parse_config(BASE.format(R=R))
    assert "0 < R < n(n-1) = 2" in str(err.value)
    assert err.value.line == 9


def test_unknown_key_line_number():
    text = BASE.format(R=1.0).replace("ns = 33", "ns = 33\nresolution = 4")
    with pytest.raises(ConfigError) as err:
        parse_config(text)
    assert err.value.line == 17 and "resolution" in str(err.value)


def test_unknown_section_and_missing_key():
    with pytest.raises(ConfigError, match="unknown section"):
        parse_config(BASE.format(R=1.0) + "\n[extra]\nx = 1\n")
    with pytest.raises(ConfigError, match="missing required key 'R'"):
        parse_config(BASE.format(R=1.0).replace("R = 1.0\n", ""))


def test_invariants():
    text = BASE.format(R=1.0).replace("phi = 1.0", "phi = 1.2")
    with pytest.raises(ConfigError, match="unit-sphere subsolution requires phi = 1"):
        parse_config(text)
    with pytest.raises(ConfigError, match="only n = 2"):
        parse_config(BASE.format(R=1.0).replace("n = 2\nr = 2", "n = 3\nr = 3"))
    with pytest.raises(ConfigError, match="grid"):
        parse_config(BASE.format(R=1.0).replace("nt = 64", "nt = 63"))


def test_expression_target():
    text = BASE.format(R=1.0).replace("mode = scalar\nR = 1.0", "mode = f\npsi_tilde = 0.6 + 0.05*x*y")
    cfg = parse_config(text)
    assert cfg.psi_tilde is None
    pts = np.array([[0.0, 0.0, 1.0], [0.5, 0.5, 0.7]])
    assert np.allclose(cfg.psi_tilde_field(pts), [0.6, 0.6125])


def test_shipped_configs_parse():
    for path in sorted((ROOT / "configs").glob("*.ini")):
        cfg = load_config(path)
        assert parse_config(serialize_config(cfg)) == cfg


domains = st.one_of(
    st.builds(lambda t: DomainSpec("cap", theta0=t), st.floats(0.05, 1.5)),
    st.builds(lambda a0, a2: DomainSpec("star", coefficients=(a0, 0.0, 0.0, a2, 0.0)),
              st.floats(0.3, 1.5), st.floats(-0.1, 0.1)),
)


@st.composite
def configs(draw):
    nt = draw(st.sampled_from([16, 32, 64]))
    mode = draw(st.sampled_from(["scalar", "f"]))
    R = draw(st.floats(0.01, 1.99)) if mode == "scalar" else None
    expr = None if mode == "scalar" else repr(draw(st.floats(0.05, 0.99)))
    samples = draw(st.booleans())
    solver = SolverConfig(initial_step=draw(st.floats(1e-3, 0.5)), max_newton=draw(st.integers(5, 50)),
                          rtol=draw(st.floats(1e-13, 1e-6)),
                          fail_at=draw(st.one_of(st.none(), st.floats(0, 1))))
    return RunConfig(domain=draw(domains), spec=CurvatureSpec(2, 2), mode=mode, R=R, psi_expr=expr,
                     phi=None if samples else 1.0,
                     phi_samples=tuple(draw(st.floats(0.5, 2.0)) for _ in range(nt)) if samples else None,
                     subsolution="file" if samples else "unit-sphere",
                     subsolution_file="sub.csv" if samples else None,
                     ns=draw(st.integers(9, 80)), nt=nt, accuracy=draw(st.sampled_from([2, 4])),
                     solver=solver, output_dir="out/x")


@given(configs())
def test_round_trip(cfg):
    once = parse_config(serialize_config(cfg))
    assert once == cfg
    assert serialize_config(once) == serialize_config(cfg)
