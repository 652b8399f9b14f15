import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from optosync.model import (
    CircuitConfig,
    CoherentCoupling,
    ConfigError,
    CouplingMatrix,
    EnvCoupling,
    LinearGainWarning,
    build_coupling_matrix,
    circuit_matrix,
    input_port_circuit,
    linear_stability,
    nonreciprocity,
    normalize_angle,
    output_port_circuit,
    unidirectional_circuit,
)

angles = st.floats(-4 * math.pi, 4 * math.pi, allow_nan=False)
strengths = st.floats(0.0, 1.0, allow_nan=False)


def literal_K(J, th, ph, g, p):
    # direct transcription of the pairwise coupling terms
    e = np.exp
    K = np.zeros((3, 3), complex)
    K[0, 1] = g[0] * e(1j * p[0]) - 1j * J * e(1j * th)
    K[1, 0] = g[0] * e(-1j * p[0]) - 1j * J * e(1j * th)
    K[1, 2] = g[1] * e(1j * p[1]) - 1j * J * e(1j * ph)
    K[2, 1] = g[1] * e(-1j * p[1]) - 1j * J * e(1j * ph)
    K[2, 0] = g[2] * e(1j * p[2]) - 1j * J * e(1j * (th + ph))
    K[0, 2] = g[2] * e(-1j * p[2]) - 1j * J * e(1j * (th + ph))
    return K


def test_config_defaults_and_frequencies():
    c = CircuitConfig()
    assert np.allclose(c.microwave_detunings, [0.05, 0, -0.05])
    assert np.allclose(c.mechanical_frequencies, [0.995, 1.0, 1.005])
    assert np.allclose(c.optomech, [4e-5] * 3)
    assert np.allclose(CircuitConfig(G_site=(1, 2, 3)).optomech, [1, 2, 3])


@pytest.mark.parametrize("key,kw", [
    ("gamma", dict(gamma=0.0)),
    ("gamma", dict(gamma=-1.0)),
    ("Gamma", dict(Gamma=0.0)),
    ("epsilon", dict(epsilon=-1.0)),
    ("G", dict(G=-1e-5)),
    ("delta", dict(delta=float("nan"))),
])
def test_config_rejects_invalid(key, kw):
    with pytest.raises(ConfigError) as exc:
        CircuitConfig(**kw)
    assert exc.value.key == key
    assert key in str(exc.value)


def test_env_rejects_negative_J():
    with pytest.raises(ConfigError) as exc:
        EnvCoupling(J=-0.1)
    assert exc.value.key == "J"


def test_coherent_rejects_negative_g():
    with pytest.raises(ConfigError) as exc:
        CoherentCoupling(g=(0.1, -0.2, 0.0))
    assert exc.value.key == "g2"


@given(angles)
def test_normalize_angle_range(x):
    y = normalize_angle(x)
    assert -math.pi < y <= math.pi
    assert math.isclose(math.cos(y), math.cos(x), abs_tol=1e-9)
    assert math.isclose(math.sin(y), math.sin(x), abs_tol=1e-9)


@settings(max_examples=50)
@given(strengths, angles, angles, st.tuples(strengths, strengths, strengths), st.tuples(angles, angles, angles))
def test_coupling_matrix_matches_transcription(J, th, ph, g, p):
    K = build_coupling_matrix(EnvCoupling(J, th, ph), CoherentCoupling(g, p))
    assert np.allclose(K.K, literal_K(J, th, ph, g, p), atol=1e-12)
    assert np.all(np.diag(K.K) == 0)


@settings(max_examples=50)
@given(st.tuples(strengths, strengths, strengths), st.tuples(angles, angles, angles))
def test_hermitian_without_line(g, p):
    K = build_coupling_matrix(EnvCoupling(0.0), CoherentCoupling(g, p)).K
    assert np.max(np.abs(K - K.conj().T)) < 1e-15


@settings(max_examples=50)
@given(strengths, angles, angles)
def test_complex_symmetric_without_couplers(J, th, ph):
    K = build_coupling_matrix(EnvCoupling(J, th, ph), CoherentCoupling()).K
    assert np.max(np.abs(K - K.T)) < 1e-15


def test_zero_coupling():
    assert build_coupling_matrix(EnvCoupling(), CoherentCoupling()).is_zero
    assert not build_coupling_matrix(EnvCoupling(0.1), CoherentCoupling()).is_zero


def test_coupling_matrix_validation():
    with pytest.raises(ValueError):
        CouplingMatrix(np.eye(3))
    with pytest.raises(ValueError):
        CouplingMatrix(np.zeros((2, 2)))
    K = CouplingMatrix(np.zeros((3, 3)))
    with pytest.raises(ValueError):
        K.K[0, 1] = 1.0


def test_unidirectional_identity_example():
    J, th = 0.2, 0.3
    K = build_coupling_matrix(EnvCoupling(J, th, 0.0), CoherentCoupling((J, 0, 0), (th + 0.5 * math.pi, 0, 0)))
    r = nonreciprocity(K, (1, 2))
    assert r.forward < 1e-12
    assert math.isclose(r.backward, 2 * J * abs(math.cos(th)), abs_tol=1e-12)
    assert r.unidirectional and r.nonreciprocal


def test_nonreciprocity_bad_pair():
    K = build_coupling_matrix(EnvCoupling(0.1), CoherentCoupling())
    for pair in [(1, 1), (0, 1), (1, 4)]:
        with pytest.raises(ValueError):
            nonreciprocity(K, pair)


def test_reciprocal_line_only():
    K = build_coupling_matrix(EnvCoupling(0.1, 0.3, 0.7), CoherentCoupling())
    for pair in [(1, 2), (2, 3), (3, 1)]:
        r = nonreciprocity(K, pair)
        assert not r.nonreciprocal
        f, b = r
        assert math.isclose(f, 0.1)


ZEROS = {
    "output": [(2, 0), (2, 1)],       # K31, K32
    "input": [(0, 1), (2, 1)],        # K12, K32
    "unidirectional": [(0, 1), (2, 1), (2, 0)],
}


@settings(max_examples=100)
@given(st.floats(0.01, 1.0), angles, angles, strengths, angles)
def test_special_circuit_zeros(J, th, ph, g, pg):
    env = EnvCoupling(J, th, ph)
    mats = {
        "output": output_port_circuit(env, g, pg).K,
        "input": input_port_circuit(env, g, pg).K,
        "unidirectional": unidirectional_circuit(env).K,
    }
    for name, K in mats.items():
        for idx in ZEROS[name]:
            assert abs(K[idx]) < 1e-12, (name, idx)
    # the cancelled links survive in the other direction as 2 J |cos p|
    U = mats["unidirectional"]
    assert abs(U[1, 0]) == pytest.approx(2 * J * abs(math.cos(th)), abs=1e-12)
    assert abs(U[1, 2]) == pytest.approx(2 * J * abs(math.cos(ph)), abs=1e-12)
    assert abs(U[0, 2]) == pytest.approx(2 * J * abs(math.cos(th + ph)), abs=1e-12)


def test_circuit_names():
    env = EnvCoupling(0.2, 0.1, 0.3)
    coh = CoherentCoupling((0.1, 0.2, 0.3), (0.4, 0.5, 0.6))
    assert circuit_matrix("general", env, coh) == build_coupling_matrix(env, coh)
    assert circuit_matrix("fig4a", env, coh) == build_coupling_matrix(env, coh)
    assert circuit_matrix("fig4b", env, coh) == output_port_circuit(env, 0.1, 0.4)
    assert circuit_matrix("fig4c", env, coh) == input_port_circuit(env, 0.3, 0.6)
    assert circuit_matrix("fig4d", env, coh) == unidirectional_circuit(env)
    with pytest.raises(ConfigError):
        circuit_matrix("fig9", env, coh)


def test_linear_stability():
    c = CircuitConfig()
    ev = linear_stability(c, build_coupling_matrix(EnvCoupling(0.05), CoherentCoupling()))
    assert np.all(ev.real < 0)
    gain = CouplingMatrix(np.array([[0, 1j, 0], [1j, 0, 0], [0, 0, 0]]))
    with pytest.warns(LinearGainWarning):
        ev = linear_stability(c, gain)
    assert ev.real.max() > 0
