"""Check the elimination of the shared line against an explicit bath.

The linear part of the circuit (no optomechanics, no drive) is coupled to
a discretized line of left- and right-moving modes, with detunings ``nu``
on a uniform grid in ``[-B, B]`` around the carrier ``omega0``.  Resonator
``j`` sits at accumulated phase ``p_j``; mode ``m`` of the left movers
couples to it with

    kappa_jm = J_j * sqrt(omega0 * dnu) * exp(+i p_j (1 + nu_m / omega0))

and the right movers carry the conjugate phase.  The ``nu``-dependent part
of the phase is the travel time ``p_j / omega0`` between resonators: it is
what makes the line causal, so that a wave emitted by one resonator
reaches the others only downstream.  Eliminating the line in the limit of
short travel times gives on-site damping ``2 pi J_j^2 omega0`` and the
cross terms ``K_jk = -2i pi J_j J_k omega0 exp(i |p_j - p_k|)`` of the
effective model.

Everything here works in the frame rotating at ``omega0``, with the bath in
vacuum (all mode amplitudes start at zero).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.linalg import logm

from .dynamics import CircuitState, SimPlan, integrate
from .model import CircuitConfig, CouplingMatrix

__all__ = [
    "BathSpec",
    "DiscreteBath",
    "OracleReport",
    "BathMismatch",
    "discretize_bath",
    "golden_rule_rates",
    "simulate_full",
    "effective_generator",
    "effective_config",
    "effective_coupling",
    "compare_models",
    "fit_generator",
    "phase_sign_check",
    "fitted_decay_rate",
    "run_oracle",
]


class BathMismatch(ValueError):
    """The effective-model configuration does not match the bath spec."""


@dataclass(frozen=True)
class BathSpec:
    """Discretized line.

    ``positions`` are accumulated phases ``x_j omega0 / v`` (so
    ``(0, theta, theta + phi)`` for the standard arrangement).  ``taper``
    is the fraction of each band edge rolled off with a raised cosine; it
    suppresses the ringing of the band-limited delta function and leaves
    the spectral density at ``nu = 0`` untouched.
    """

    J_site: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    positions: Tuple[float, float, float] = (0.0, 0.5 * math.pi, math.pi)
    band_halfwidth: float = 10.0
    n_modes: int = 4001
    omega0: float = math.pi
    taper: float = 0.2

    def __post_init__(self):
        J = tuple(float(x) for x in self.J_site)
        if len(J) != 3 or not all(x >= 0 and math.isfinite(x) for x in J):
            raise ValueError("J_site needs three finite values >= 0")
        p = tuple(float(x) for x in self.positions)
        if len(p) != 3 or not all(math.isfinite(x) for x in p):
            raise ValueError("positions needs three finite values")
        object.__setattr__(self, "J_site", J)
        object.__setattr__(self, "positions", p)
        if not (self.band_halfwidth > 0 and math.isfinite(self.band_halfwidth)):
            raise ValueError("band_halfwidth must be > 0")
        if int(self.n_modes) != self.n_modes or self.n_modes < 101 or self.n_modes % 2 == 0:
            raise ValueError("n_modes must be an odd integer >= 101")
        object.__setattr__(self, "n_modes", int(self.n_modes))
        if not (self.omega0 > 0 and math.isfinite(self.omega0)):
            raise ValueError("omega0 must be > 0")
        if not 0.0 <= self.taper < 0.5:
            raise ValueError("taper must be in [0, 0.5)")
        gmax = max(golden_rule_expected(self))
        if gmax > 0 and self.band_halfwidth < 20.0 * gmax:
            raise ValueError(
                f"band_halfwidth {self.band_halfwidth:g} < 20 x largest on-site rate {gmax:g}: not Markovian"
            )

    @property
    def spacing(self) -> float:
        return 2.0 * self.band_halfwidth / (self.n_modes - 1)

    @property
    def revival_time(self) -> float:
        """Time after which the discrete bath returns what it absorbed."""
        return 2.0 * math.pi / self.spacing

    def with_positions(self, positions: Sequence[float]) -> "BathSpec":
        from dataclasses import replace

        return replace(self, positions=tuple(positions))


def golden_rule_expected(spec: BathSpec) -> Tuple[float, float, float]:
    """On-site amplitude damping ``2 pi J_j^2 omega0`` of the effective model."""
    return tuple(2.0 * math.pi * J * J * spec.omega0 for J in spec.J_site)


@dataclass(frozen=True, eq=False)
class DiscreteBath:
    """Mode detunings and coupling vectors, shape ``(3, n_modes)`` per direction."""

    nu: np.ndarray
    left: np.ndarray
    right: np.ndarray
    spacing: float


def _taper_weights(nu: np.ndarray, B: float, frac: float) -> np.ndarray:
    if frac == 0.0:
        return np.ones_like(nu)
    edge = (1.0 - frac) * B
    x = np.clip((np.abs(nu) - edge) / (frac * B), 0.0, 1.0)
    return 0.5 * (1.0 + np.cos(math.pi * x))


def discretize_bath(spec: BathSpec) -> DiscreteBath:
    """Uniform mode grid and per-resonator couplings for both directions."""
    nu = np.linspace(-spec.band_halfwidth, spec.band_halfwidth, spec.n_modes)
    dnu = spec.spacing
    amp = np.sqrt(spec.omega0 * dnu * _taper_weights(nu, spec.band_halfwidth, spec.taper))
    J = np.asarray(spec.J_site)[:, None]
    phase = np.asarray(spec.positions)[:, None] * (1.0 + nu[None, :] / spec.omega0)
    left = J * amp[None, :] * np.exp(1j * phase)
    return DiscreteBath(nu, left, np.conj(left), dnu)


def golden_rule_rates(bath: DiscreteBath) -> np.ndarray:
    """Summed on-site rate ``pi |kappa(nu=0)|^2 / dnu`` over both directions."""
    m0 = bath.nu.size // 2
    return math.pi * (np.abs(bath.left[:, m0]) ** 2 + np.abs(bath.right[:, m0]) ** 2) / bath.spacing


def simulate_full(
    spec: BathSpec,
    detunings: Sequence[float],
    horizon: float,
    dt: float,
    a0: Sequence[complex],
    stride: int = 1,
    bath: Optional[DiscreteBath] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """Integrate resonators plus line with fixed-step RK4.

    Returns ``(tau, a)`` with ``a`` of shape ``(n_samples, 3)``, sampled
    every ``stride`` steps including ``tau = 0``.  The line starts empty.
    """
    B = spec.band_halfwidth
    if not dt > 0:
        raise ValueError("dt must be > 0")
    if dt * B > 0.1:
        raise ValueError(f"dt too coarse for the band: dt*B = {dt * B:g} > 0.1")
    if not horizon > 0:
        raise ValueError("horizon must be > 0")
    bath = discretize_bath(spec) if bath is None else bath
    det = np.asarray(detunings, dtype=float)
    L, R = bath.left, bath.right
    Lh, Rh = np.conj(L.T), np.conj(R.T)
    nu = bath.nu
    n = nu.size

    def f(y):
        a, cl, cr = y[:3], y[3:3 + n], y[3 + n:]
        out = np.empty_like(y)
        out[:3] = 1j * det * a - 1j * (L @ cl + R @ cr)
        out[3:3 + n] = -1j * nu * cl - 1j * (Lh @ a)
        out[3 + n:] = -1j * nu * cr - 1j * (Rh @ a)
        return out

    steps = int(math.floor(horizon / dt + 1e-9))
    stride = int(stride)
    y = np.zeros(3 + 2 * n, np.complex128)
    y[:3] = np.asarray(a0, dtype=np.complex128)
    limit = 1e6 * max(1.0, float(np.max(np.abs(y[:3]))))
    rec = [y[:3].copy()]
    h = dt
    for k in range(1, steps + 1):
        k1 = f(y)
        k2 = f(y + 0.5 * h * k1)
        k3 = f(y + 0.5 * h * k2)
        k4 = f(y + h * k3)
        y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if k % stride == 0:
            if not np.all(np.isfinite(y[:3])) or np.max(np.abs(y[:3])) > limit:
                raise ArithmeticError(f"full model diverged at tau={k * h:g}")
            rec.append(y[:3].copy())
    tau = np.arange(len(rec)) * stride * h
    return tau, np.array(rec)


def effective_generator(spec: BathSpec, detunings: Sequence[float]) -> np.ndarray:
    """Linear generator ``M`` of the eliminated model, ``da/dtau = M a``."""
    J = np.asarray(spec.J_site)
    p = np.asarray(spec.positions)
    w0 = spec.omega0
    M = np.diag(1j * np.asarray(detunings, dtype=float) - 2 * math.pi * J**2 * w0).astype(complex)
    for j in range(3):
        for k in range(3):
            if j != k:
                M[j, k] = -2 * math.pi * J[j] * J[k] * w0 * np.exp(1j * abs(p[j] - p[k]))
    return M


def effective_coupling(spec: BathSpec) -> CouplingMatrix:
    """Cross terms as a :class:`CouplingMatrix` (``M = ... - i K``)."""
    M = effective_generator(spec, (0.0, 0.0, 0.0))
    K = 1j * (M - np.diag(np.diag(M)))
    return CouplingMatrix(K)


def _active_rate(spec: BathSpec) -> float:
    rates = [r for r in golden_rule_expected(spec) if r > 0]
    if not rates:
        return 0.0
    if max(rates) - min(rates) > 1e-12 * max(rates):
        raise BathMismatch("the effective model has one damping rate; coupled J_site values must be equal")
    return rates[0]


def effective_config(spec: BathSpec, delta: float = 0.0) -> CircuitConfig:
    """Linear circuit (``G = 0``, ``epsilon = 0``) matching the bath spec."""
    gamma = _active_rate(spec)
    if gamma <= 0:
        raise BathMismatch("J_site are all zero: there is no damping to put into a CircuitConfig")
    return CircuitConfig(delta=delta, G=0.0, epsilon=0.0, gamma=gamma)


def _check_config(spec: BathSpec, config: CircuitConfig) -> None:
    if config.epsilon != 0:
        raise BathMismatch("config.epsilon must be 0 for the oracle")
    if np.any(config.optomech != 0):
        raise BathMismatch("config.G must be 0 for the oracle")
    gamma = _active_rate(spec)
    if abs(config.gamma - gamma) > 1e-9 * max(gamma, 1e-300):
        raise BathMismatch(f"config.gamma = {config.gamma:g} but the line induces {gamma:g}")


@dataclass(frozen=True, eq=False)
class OracleReport:
    n_modes: int
    band_halfwidth: float
    horizon: float
    dt: float
    tau: np.ndarray
    error: np.ndarray
    golden_rule: Dict[str, object] = field(default_factory=dict)
    phase_sign: Optional[Dict[str, object]] = None

    @property
    def max_error(self) -> float:
        return float(np.max(self.error))

    def to_record(self, per_tau_error_csv_path: Optional[str] = None) -> Dict[str, object]:
        return {
            "n_modes": self.n_modes,
            "B": self.band_halfwidth,
            "horizon": self.horizon,
            "dt": self.dt,
            "max_error": self.max_error,
            "per_tau_error_csv_path": per_tau_error_csv_path,
            "golden_rule_check": self.golden_rule,
            "phase_sign_check": self.phase_sign,
        }


def _default_dt(spec: BathSpec) -> float:
    return 0.05 / spec.band_halfwidth


def _default_horizon(spec: BathSpec) -> float:
    g = _active_rate(spec)
    return 5.0 / g if g > 0 else 100.0


def compare_models(
    spec: BathSpec,
    config: Optional[CircuitConfig] = None,
    a0: Sequence[complex] = (1.0, 0.0, 0.0),
    horizon: Optional[float] = None,
    dt: Optional[float] = None,
    stride: int = 10,
) -> OracleReport:
    """Run full and effective models from the same start and compare.

    ``e(tau) = max_j |a_j^full - a_j^eff| / max_j |a_j(0)|``.  The
    effective model is integrated by :func:`optosync.dynamics.integrate`
    with the eliminated coupling matrix; when the line is switched off
    (all ``J_site`` zero) it is the exact free rotation instead.
    """
    if config is None:
        config = effective_config(spec) if _active_rate(spec) > 0 else None
    if config is not None:
        _check_config(spec, config)
    det = config.microwave_detunings if config is not None else np.zeros(3)
    horizon = _default_horizon(spec) if horizon is None else float(horizon)
    dt = _default_dt(spec) if dt is None else float(dt)
    a0 = np.asarray(a0, dtype=np.complex128)
    scale = float(np.max(np.abs(a0)))
    if scale == 0:
        raise ValueError("initial amplitudes must not all be zero")

    tau, a_full = simulate_full(spec, det, horizon, dt, a0, stride=stride)
    if config is not None:
        plan = SimPlan(t_total=horizon, dt=dt, sample_stride=stride, initial=CircuitState(a=a0))
        traj = integrate(plan, config, effective_coupling(spec))
        a_eff = traj.a
    else:
        a_eff = np.array([np.exp(1j * det * t) * a0 for t in tau])
    n = min(len(tau), len(a_eff))
    err = np.max(np.abs(a_full[:n] - a_eff[:n]), axis=1) / scale
    expected = golden_rule_expected(spec)
    discrete = golden_rule_rates(discretize_bath(spec))
    gr = {
        "expected": list(expected),
        "discrete": [float(x) for x in discrete],
        "max_rel_error": float(max((abs(d - e) / e for d, e in zip(discrete, expected) if e > 0), default=0.0)),
    }
    return OracleReport(spec.n_modes, spec.band_halfwidth, horizon, dt, tau[:n], err, gr)


def fit_generator(tau: np.ndarray, a: np.ndarray, lag: int = 1) -> np.ndarray:
    """Least-squares linear generator from sampled amplitudes.

    Fits the one-step propagator ``P`` with ``a(t + h) = P a(t)`` over all
    samples and returns ``log(P) / h``.  Columns of ``a`` that stay zero are
    dropped; the result is square in the remaining ones.
    """
    keep = np.max(np.abs(a), axis=0) > 0
    x = a[:, keep]
    X, Y = x[:-lag].T, x[lag:].T
    P = Y @ np.linalg.pinv(X)
    h = float(tau[lag] - tau[0])
    return logm(P) / h


def phase_sign_check(
    spec: BathSpec,
    pair: Tuple[int, int] = (1, 2),
    horizon: Optional[float] = None,
    dt: Optional[float] = None,
    stride: int = 10,
) -> Dict[str, object]:
    """Fit the cross term from full dynamics at ``theta`` and ``theta + pi``.

    Shifting every position downstream of resonator ``pair[0]`` by pi
    flips ``exp(i |p_j - p_k|)``; the extracted ``K_jk`` must change sign.
    """
    j, k = pair
    p = np.asarray(spec.positions, dtype=float)
    shifted = p.copy()
    shifted[p > p[j - 1]] += math.pi
    horizon = _default_horizon(spec) if horizon is None else float(horizon)
    dt = _default_dt(spec) if dt is None else float(dt)
    out = {}
    for label, pos in (("theta", p), ("theta_plus_pi", shifted)):
        s = spec.with_positions(pos)
        M = []
        for start in ((1.0, 0.0, 0.0), (0.0, 1.0, 0.0)):
            a0 = np.zeros(3, complex)
            a0[j - 1], a0[k - 1] = start[0], start[1]
            tau, a = simulate_full(s, np.zeros(3), horizon, dt, a0, stride=stride)
            M.append((tau, a))
        # stack both runs, skipping the first travel times of the line
        skip = np.searchsorted(M[0][0], 4.0 * abs(pos[k - 1] - pos[j - 1]) / s.omega0 + 1.0)
        tau = M[0][0]
        stacked = [a[skip:][:, [j - 1, k - 1]] for _, a in M]
        X = np.concatenate([z[:-1] for z in stacked]).T
        Y = np.concatenate([z[1:] for z in stacked]).T
        G = logm(Y @ np.linalg.pinv(X)) / float(tau[1] - tau[0])
        K_fit = complex(1j * G[0, 1])
        K_eff = complex(effective_coupling(s).entry(j, k))
        out[label] = {"K_fit": [K_fit.real, K_fit.imag], "K_effective": [K_eff.real, K_eff.imag]}
    a = complex(*out["theta"]["K_fit"])
    b = complex(*out["theta_plus_pi"]["K_fit"])
    flipped = (a.conjugate() * b).real < 0
    out["flipped"] = bool(flipped)
    out["pair"] = [j, k]
    return out


def fitted_decay_rate(spec: BathSpec, resonator: int = 1, horizon: Optional[float] = None,
                      dt: Optional[float] = None) -> float:
    """Decay rate of ``|a_j|`` from the full model with only resonator ``j`` coupled."""
    J = [0.0, 0.0, 0.0]
    J[resonator - 1] = spec.J_site[resonator - 1]
    from dataclasses import replace

    single = replace(spec, J_site=tuple(J))
    rate = golden_rule_expected(single)[resonator - 1]
    if rate <= 0:
        raise ValueError("resonator is not coupled to the line")
    horizon = 4.0 / rate if horizon is None else float(horizon)
    dt = _default_dt(spec) if dt is None else float(dt)
    a0 = np.zeros(3, complex)
    a0[resonator - 1] = 1.0
    tau, a = simulate_full(single, np.zeros(3), horizon, dt, a0, stride=10)
    y = np.log(np.abs(a[:, resonator - 1]))
    keep = tau >= 20.0 / spec.band_halfwidth
    slope = np.polyfit(tau[keep], y[keep], 1)[0]
    return float(-slope)


def run_oracle(
    spec: BathSpec,
    config: Optional[CircuitConfig] = None,
    a0: Sequence[complex] = (1.0, 0.0, 0.0),
    out_dir: Optional[Union[str, Path]] = None,
    sign_check: bool = True,
    horizon: Optional[float] = None,
    dt: Optional[float] = None,
) -> Tuple[OracleReport, Dict[str, object]]:
    """Comparison, golden-rule fit and phase-sign check in one report.

    With ``out_dir`` writes ``oracle.json`` and ``oracle_error.csv``.
    """
    rep = compare_models(spec, config, a0, horizon, dt)
    gr = dict(rep.golden_rule)
    coupled = [j for j in range(3) if spec.J_site[j] > 0]
    if coupled:
        j = coupled[0]
        fit = fitted_decay_rate(spec, j + 1)
        exp_rate = golden_rule_expected(spec)[j]
        gr.update(fitted_resonator=j + 1, fitted_rate=fit, fitted_rel_error=abs(fit - exp_rate) / exp_rate)
    sign = None
    if sign_check and len(coupled) >= 2:
        sign = phase_sign_check(spec, tuple(c + 1 for c in coupled[:2]), horizon, dt)
    rep = OracleReport(rep.n_modes, rep.band_halfwidth, rep.horizon, rep.dt, rep.tau, rep.error, gr, sign)
    csv_path = None
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        csv_path = str(out / "oracle_error.csv")
        np.savetxt(csv_path, np.column_stack([rep.tau, rep.error]), delimiter=",",
                   header="tau,error", comments="", fmt="%.17g")
    record = rep.to_record(csv_path)
    if out_dir is not None:
        (Path(out_dir) / "oracle.json").write_text(json.dumps(record, indent=2) + "\n", encoding="utf-8")
    return rep, record
