import math

import pytest

from optosync.config import (
    PRESETS,
    apply_overrides,
    format_kv,
    parse_kv,
    plan_from_mapping,
    plan_to_mapping,
    preset,
    setup_from_mapping,
    setup_to_mapping,
    thresholds_from_mapping,
)
from optosync.dynamics import SimPlan
from optosync.model import ConfigError


def test_parse_kv_comments_and_blanks():
    m = parse_kv("# header\n\nJ = 0.11  # inline\ntheta_pi=0.5\n")
    assert m == {"J": "0.11", "theta_pi": "0.5"}


@pytest.mark.parametrize("text", ["J 0.1", "= 3", "J = 1\nJ = 2"])
def test_parse_kv_errors(text):
    with pytest.raises(ConfigError):
        parse_kv(text)


def test_pi_units():
    s = setup_from_mapping({"J": "0.11", "theta_pi": "0.5", "phi": "1.0"})
    assert s.env.theta == pytest.approx(0.5 * math.pi)
    assert s.env.phi == 1.0
    with pytest.raises(ConfigError) as exc:
        setup_from_mapping({"theta": "1", "theta_pi": "0.5"})
    assert exc.value.key == "theta"


def test_unknown_and_bad_values_name_key():
    with pytest.raises(ConfigError) as exc:
        setup_from_mapping({"Jx": "1"})
    assert exc.value.key == "Jx"
    with pytest.raises(ConfigError) as exc:
        setup_from_mapping({"gamma": "abc"})
    assert exc.value.key == "gamma"
    with pytest.raises(ConfigError) as exc:
        setup_from_mapping({"gamma": "0"})
    assert exc.value.key == "gamma"
    with pytest.raises(ConfigError) as exc:
        setup_from_mapping({"preset": "fig9"})
    assert exc.value.key == "preset"


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_preset_round_trip(name):
    s = preset(name)
    text = format_kv(setup_to_mapping(s, pi_units=True))
    back = setup_from_mapping(parse_kv(text))
    assert back == s
    assert back.coupling() == s.coupling()


def test_base_values():
    s = preset("fig2b")
    c = s.config
    assert (c.delta, c.Delta, c.G, c.epsilon, c.gamma, c.Gamma) == (0.05, 5e-3, 4e-5, 800.0, 0.1, 8e-5)
    assert s.env.J == 0.11
    assert s.env.theta == pytest.approx(0.5 * math.pi)
    assert preset("fig3c_pointC").env.phi == pytest.approx(0.2 * math.pi)
    with pytest.raises(ConfigError):
        preset("nope")


def test_with_values():
    s = preset("fig2b").with_values(J=0.0)
    assert s.env.J == 0.0 and s.coupling().is_zero


def test_overrides_win():
    base = {"J": "0.1", "theta_pi": "0.2"}
    out = apply_overrides(base, ["J=0.2", "theta=1.0"])
    assert out == {"J": "0.2", "theta": "1.0"}
    out = apply_overrides({"theta": "1"}, ["theta_pi = 0.5"])
    assert out == {"theta_pi": "0.5"}
    with pytest.raises(ConfigError):
        apply_overrides({}, ["J"])


def test_plan_mapping():
    plan = plan_from_mapping({"t_total": "1000", "dt": "2e-3", "sample_stride": "25", "adaptive": "yes"})
    assert plan.t_total == 1000 and plan.dt == 2e-3 and plan.sample_stride == 25 and plan.adaptive
    assert plan_from_mapping(plan_to_mapping(plan)) == plan
    with pytest.raises(ConfigError):
        plan_from_mapping({"sample_stride": "2.5"})
    with pytest.raises(ConfigError):
        plan_from_mapping({"dt": "-1"})
    with pytest.raises(ConfigError):
        plan_from_mapping({"adaptive": "maybe"})
    assert plan_from_mapping({}) == SimPlan()


def test_thresholds_mapping():
    th = thresholds_from_mapping({"tol_bins": "3", "secondary": "0.1", "max_harmonic": "8"})
    assert th.tol_bins == 3 and th.secondary == 0.1 and th.max_harmonic == 8
    with pytest.raises(ConfigError) as exc:
        thresholds_from_mapping({"secondary": "1.5"})
    assert exc.value.key == "secondary"
