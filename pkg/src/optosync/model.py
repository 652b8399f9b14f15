"""Circuit parameters and the inter-resonator coupling matrix.

All rates and frequencies are dimensionless, in units of the central
mechanical frequency Omega_0.  Resonator indices are 1-based in the public
API (``pair=(1, 2)``) and 0-based inside arrays.

Coupling-matrix convention: ``K[j, k]`` multiplies ``a_k`` in the equation
of motion of ``a_j`` (row = receiving mode, column = source mode), i.e. the
effective interaction Hamiltonian is ``sum_jk K[j, k] a_j^dag a_k`` and

    da_j/dtau = ... - i * sum_k K[j, k] a_k
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

__all__ = [
    "CircuitConfig",
    "EnvCoupling",
    "CoherentCoupling",
    "CouplingMatrix",
    "ConfigError",
    "LinearGainWarning",
    "normalize_angle",
    "build_coupling_matrix",
    "output_port_circuit",
    "input_port_circuit",
    "unidirectional_circuit",
    "circuit_matrix",
    "nonreciprocity",
    "Reciprocity",
    "linear_stability",
    "CIRCUITS",
    "ZERO_TOL",
]

#: absolute tolerance for "this coupling entry vanishes"
ZERO_TOL = 1e-12

#: circuit topologies: generic coupling plus the three engineered circuits
CIRCUITS = ("general", "fig4a", "fig4b", "fig4c", "fig4d")

_PAIRS = {(1, 2), (2, 3), (3, 1)}


class ConfigError(ValueError):
    """Invalid parameter value or configuration key.

    ``key`` names the offending parameter when one can be identified.
    """

    def __init__(self, message: str, key: Optional[str] = None):
        super().__init__(message)
        self.key = key


class LinearGainWarning(RuntimeWarning):
    """The linearised microwave subsystem has a growing eigenmode."""


def normalize_angle(x: float) -> float:
    """Map an angle in radians onto (-pi, pi]."""
    y = math.remainder(float(x), 2.0 * math.pi)
    if y <= -math.pi:
        y += 2.0 * math.pi
    return y


def _require(cond: bool, key: str, message: str) -> None:
    if not cond:
        raise ConfigError(f"{key}: {message}", key=key)


@dataclass(frozen=True)
class CircuitConfig:
    """Physical parameters of the three driven optomechanical resonators.

    Microwave detunings in the frame rotating at the drive are ``+delta``,
    ``0``, ``-delta`` for resonators 1, 2, 3 (bare frequencies
    ``omega_0 - delta``, ``omega_0``, ``omega_0 + delta``); mechanical
    frequencies are ``1 - Delta``, ``1``, ``1 + Delta``.

    ``gamma`` is the total microwave damping (intrinsic plus the on-site
    part induced by the shared line).  ``G_site`` optionally overrides the
    optomechanical coupling per resonator; it defaults to ``(G, G, G)``.
    """

    delta: float = 0.05
    Delta: float = 5e-3
    G: float = 4e-5
    epsilon: float = 800.0
    gamma: float = 0.1
    Gamma: float = 8e-5
    G_site: Optional[Tuple[float, float, float]] = None

    def __post_init__(self):
        for name in ("delta", "Delta", "G", "epsilon", "gamma", "Gamma"):
            _require(math.isfinite(getattr(self, name)), name, "must be finite")
        _require(self.gamma > 0, "gamma", "must be > 0")
        _require(self.Gamma > 0, "Gamma", "must be > 0")
        _require(self.G >= 0, "G", "must be >= 0")
        _require(self.epsilon >= 0, "epsilon", "must be >= 0")
        _require(self.Delta < 1, "Delta", "must be < 1 (mechanical frequencies stay positive)")
        if self.G_site is not None:
            gs = tuple(float(x) for x in self.G_site)
            _require(len(gs) == 3 and all(x >= 0 for x in gs), "G_site", "needs three values >= 0")
            object.__setattr__(self, "G_site", gs)

    @property
    def optomech(self) -> np.ndarray:
        """Per-resonator optomechanical coupling."""
        if self.G_site is None:
            return np.full(3, float(self.G))
        return np.asarray(self.G_site, dtype=float)

    @property
    def microwave_detunings(self) -> np.ndarray:
        return np.array([self.delta, 0.0, -self.delta])

    @property
    def mechanical_frequencies(self) -> np.ndarray:
        return np.array([1.0 - self.Delta, 1.0, 1.0 + self.Delta])


@dataclass(frozen=True)
class EnvCoupling:
    """Dissipative coupling through the shared transmission line.

    ``J`` is the common pair strength (2*pi*J_i*J_j*omega_0 in units of
    Omega_0); ``theta`` and ``phi`` are the propagation phases between
    resonators 1-2 and 2-3.  Angles are stored on (-pi, pi].
    """

    J: float = 0.0
    theta: float = 0.0
    phi: float = 0.0

    def __post_init__(self):
        _require(math.isfinite(self.J) and self.J >= 0, "J", "must be finite and >= 0")
        for name in ("theta", "phi"):
            _require(math.isfinite(getattr(self, name)), name, "must be finite")
            object.__setattr__(self, name, normalize_angle(getattr(self, name)))


@dataclass(frozen=True)
class CoherentCoupling:
    """Direct coupler strengths ``g = (g1, g2, g3)`` and phases.

    ``g1`` links 1-2, ``g2`` links 2-3 and ``g3`` links 3-1.
    """

    g: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    phase: Tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        g = tuple(float(x) for x in self.g)
        ph = tuple(float(x) for x in self.phase)
        _require(len(g) == 3, "g", "needs three values")
        _require(len(ph) == 3, "phase", "needs three values")
        for i, x in enumerate(g):
            _require(math.isfinite(x) and x >= 0, f"g{i + 1}", "must be finite and >= 0")
        for i, x in enumerate(ph):
            _require(math.isfinite(x), f"phi{i + 1}", "must be finite")
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "phase", tuple(normalize_angle(x) for x in ph))


@dataclass(frozen=True, eq=False)
class CouplingMatrix:
    """3x3 complex coupling matrix, row = receiver, column = source."""

    K: np.ndarray = field(default_factory=lambda: np.zeros((3, 3), complex))

    def __post_init__(self):
        K = np.array(self.K, dtype=np.complex128)
        if K.shape != (3, 3):
            raise ValueError(f"coupling matrix must be 3x3, got {K.shape}")
        if np.any(np.diag(K) != 0):
            raise ValueError("coupling matrix diagonal must be zero")
        K.setflags(write=False)
        object.__setattr__(self, "K", K)

    def __getitem__(self, idx):
        return self.K[idx]

    def entry(self, receiver: int, source: int) -> complex:
        """1-based entry ``K_{receiver, source}``."""
        return complex(self.K[receiver - 1, source - 1])

    @property
    def is_zero(self) -> bool:
        return bool(np.all(np.abs(self.K) < ZERO_TOL))

    def __eq__(self, other):
        if not isinstance(other, CouplingMatrix):
            return NotImplemented
        return bool(np.array_equal(self.K, other.K))

    def __repr__(self):
        return f"CouplingMatrix({np.array2string(self.K, precision=4)})"


def build_coupling_matrix(env: EnvCoupling, coh: CoherentCoupling) -> CouplingMatrix:
    """Combine coherent coupler terms with the line-mediated couplings.

    Each pair picks up ``g e^{+-i phi_c}`` from the coupler and the same
    dissipative term ``-i J e^{i p}`` in both directions, where ``p`` is the
    accumulated propagation phase between the two resonators.
    """
    J = env.J
    g1, g2, g3 = coh.g
    p1, p2, p3 = coh.phase
    d12 = -1j * J * np.exp(1j * env.theta)
    d23 = -1j * J * np.exp(1j * env.phi)
    d13 = -1j * J * np.exp(1j * (env.theta + env.phi))
    K = np.zeros((3, 3), dtype=np.complex128)
    K[0, 1] = g1 * np.exp(1j * p1) + d12
    K[1, 0] = g1 * np.exp(-1j * p1) + d12
    K[1, 2] = g2 * np.exp(1j * p2) + d23
    K[2, 1] = g2 * np.exp(-1j * p2) + d23
    K[2, 0] = g3 * np.exp(1j * p3) + d13
    K[0, 2] = g3 * np.exp(-1j * p3) + d13
    return CouplingMatrix(K)


# Coupler settings that cancel one direction of each link: with g = J the
# coupler term equals the dissipative term in that direction.
def _cancel_12(env):  # kills K12 (2 -> 1)
    return env.J, env.theta + 0.5 * math.pi


def _cancel_32(env):  # kills K32 (2 -> 3)
    return env.J, -env.phi - 0.5 * math.pi


def _cancel_31(env):  # kills K31 (1 -> 3)
    return env.J, env.theta + env.phi + 0.5 * math.pi


def output_port_circuit(env: EnvCoupling, g1: float, phi1: float) -> CouplingMatrix:
    """Resonator 3 drives 1 and 2 but receives nothing back.

    The 1-2 link stays generic (``g1``, ``phi1``); the 2-3 and 3-1 couplers
    are set to ``g = J`` with phases ``-phi - pi/2`` and
    ``theta + phi + pi/2``.
    """
    g2, phi2 = _cancel_32(env)
    g3, phi3 = _cancel_31(env)
    return build_coupling_matrix(env, CoherentCoupling((g1, g2, g3), (phi1, phi2, phi3)))


def input_port_circuit(env: EnvCoupling, g3: float, phi3: float) -> CouplingMatrix:
    """Resonator 2 listens to 1 and 3 without acting back on them."""
    g1, phi1 = _cancel_12(env)
    g2, phi2 = _cancel_32(env)
    return build_coupling_matrix(env, CoherentCoupling((g1, g2, g3), (phi1, phi2, phi3)))


def unidirectional_circuit(env: EnvCoupling) -> CouplingMatrix:
    """Every link one-way: 3 -> 1, 1 -> 2 and 3 -> 2."""
    g1, phi1 = _cancel_12(env)
    g2, phi2 = _cancel_32(env)
    g3, phi3 = _cancel_31(env)
    return build_coupling_matrix(env, CoherentCoupling((g1, g2, g3), (phi1, phi2, phi3)))


def circuit_matrix(circuit: str, env: EnvCoupling, coh: CoherentCoupling) -> CouplingMatrix:
    """Coupling matrix for a named circuit topology.

    ``general`` and ``fig4a`` use the couplers as given; ``fig4b`` keeps
    only ``g1``/``phi1``, ``fig4c`` only ``g3``/``phi3`` and ``fig4d``
    ignores the couplers entirely (they are fixed by the env phases).
    """
    if circuit in ("general", "fig4a"):
        return build_coupling_matrix(env, coh)
    if circuit == "fig4b":
        return output_port_circuit(env, coh.g[0], coh.phase[0])
    if circuit == "fig4c":
        return input_port_circuit(env, coh.g[2], coh.phase[2])
    if circuit == "fig4d":
        return unidirectional_circuit(env)
    raise ConfigError(f"preset: unknown circuit {circuit!r}; expected one of {CIRCUITS}", key="preset")


@dataclass(frozen=True)
class Reciprocity:
    forward: float
    backward: float

    @property
    def nonreciprocal(self) -> bool:
        return abs(self.forward - self.backward) > ZERO_TOL

    @property
    def unidirectional(self) -> bool:
        return (self.forward < ZERO_TOL) != (self.backward < ZERO_TOL)

    def __iter__(self):
        return iter((self.forward, self.backward))


def nonreciprocity(K: CouplingMatrix, pair: Sequence[int]) -> Reciprocity:
    """Coupling magnitudes in both directions of an adjacent pair.

    ``pair=(j, k)`` returns ``(|K_jk|, |K_kj|)``: forward is the
    ``a_j^dag a_k`` term, matching the ordering of the coupler Hamiltonian
    (``g1 e^{i phi1} a_1^dag a_2`` etc).  The result unpacks as a tuple.
    """
    pair = tuple(int(p) for p in pair)
    if pair not in _PAIRS:
        raise ValueError(f"pair must be one of {sorted(_PAIRS)}, got {pair}")
    j, k = pair
    return Reciprocity(abs(K.entry(j, k)), abs(K.entry(k, j)))


def linear_stability(config: CircuitConfig, K: CouplingMatrix, warn: bool = True) -> np.ndarray:
    """Eigenvalues of the undriven, G = 0 microwave subsystem.

    A positive real part means the linear problem has gain; growth is then
    limited only by the optomechanical nonlinearity, so this warns rather
    than raises.
    """
    M = np.diag(1j * config.microwave_detunings - config.gamma) - 1j * K.K
    ev = np.linalg.eigvals(M)
    if warn and np.any(ev.real > 0):
        warnings.warn(
            f"linear gain: max Re(eigenvalue) = {ev.real.max():.3g} > 0",
            LinearGainWarning,
            stacklevel=2,
        )
    return ev
