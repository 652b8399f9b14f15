"""Mean-field equations of motion and their time integration.

Time is dimensionless, ``tau = Omega_0 t``.  Microwave amplitudes ``a_j``
live in the frame rotating at the drive frequency, mechanical amplitudes
``b_j`` in the lab frame:

    da_j/dtau = [i d_j - gamma + i G_j (b_j + b_j*)] a_j + epsilon
                - i sum_k K[j, k] a_k
    db_j/dtau = [-i Omega_j - Gamma] b_j + i G_j |a_j|^2

with ``d = (delta, 0, -delta)`` and ``Omega = (1 - Delta, 1, 1 + Delta)``.

The hot loops are compiled with numba; integration runs in chunks so that a
wall-clock deadline can be honoured between chunks.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numba
import numpy as np

from .model import CircuitConfig, CouplingMatrix

__all__ = [
    "CircuitState",
    "SimPlan",
    "Trajectory",
    "DivergenceError",
    "StepSizeError",
    "IntegrationTimeout",
    "WindowTooShort",
    "MIN_SAMPLES",
    "rhs",
    "initial_state",
    "integrate",
    "steady_window",
    "write_trajectory_csv",
    "read_trajectory_csv",
    "TRAJECTORY_COLUMNS",
]

#: minimum steady-window length for spectral analysis
MIN_SAMPLES = 4096

#: amplitudes beyond this multiple of the drive scale count as divergence
DIVERGENCE_FACTOR = 1e6

TRAJECTORY_COLUMNS = (
    "tau",
    "re_a1", "im_a1", "re_a2", "im_a2", "re_a3", "im_a3",
    "re_b1", "im_b1", "re_b2", "im_b2", "re_b3", "im_b3",
    "I1", "I2", "I3", "q1", "q2", "q3",
)


class DivergenceError(ArithmeticError):
    """State became non-finite or left the physically plausible range."""

    def __init__(self, message: str, tau: float):
        super().__init__(message)
        self.tau = tau


class StepSizeError(ArithmeticError):
    """Adaptive step size underflowed."""

    def __init__(self, message: str, tau: float):
        super().__init__(message)
        self.tau = tau


class IntegrationTimeout(TimeoutError):
    def __init__(self, message: str, tau: float):
        super().__init__(message)
        self.tau = tau


class WindowTooShort(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class CircuitState:
    """Microwave amplitudes ``a`` and mechanical amplitudes ``b`` (3 each)."""

    a: np.ndarray = field(default_factory=lambda: np.zeros(3, complex))
    b: np.ndarray = field(default_factory=lambda: np.zeros(3, complex))

    def __post_init__(self):
        a = np.array(self.a, dtype=np.complex128).reshape(3)
        b = np.array(self.b, dtype=np.complex128).reshape(3)
        a.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @classmethod
    def from_vector(cls, y) -> "CircuitState":
        y = np.asarray(y)
        return cls(y[:3], y[3:6])

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.a, self.b])

    @property
    def finite(self) -> bool:
        return bool(np.all(np.isfinite(self.a)) and np.all(np.isfinite(self.b)))

    def __eq__(self, other):
        if not isinstance(other, CircuitState):
            return NotImplemented
        return bool(np.array_equal(self.a, other.a) and np.array_equal(self.b, other.b))


@dataclass(frozen=True)
class SimPlan:
    """Integration settings.

    Samples are recorded at ``tau = k * sample_stride * dt`` for
    ``k = 0 .. floor(t_total / dt) // sample_stride``; the transient is cut
    later by :func:`steady_window`.
    """

    t_total: float = 2.0e4
    dt: float = 1e-3
    sample_stride: int = 50
    discard_fraction: float = 0.5
    adaptive: bool = False
    rel_tol: float = 1e-9
    abs_tol: float = 1e-12
    initial: CircuitState = field(default_factory=CircuitState)

    def __post_init__(self):
        if not (self.t_total > 0 and math.isfinite(self.t_total)):
            raise ValueError("t_total must be > 0")
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValueError("dt must be > 0")
        if int(self.sample_stride) != self.sample_stride or self.sample_stride < 1:
            raise ValueError("sample_stride must be an integer >= 1")
        object.__setattr__(self, "sample_stride", int(self.sample_stride))
        for name in ("t_total", "dt", "discard_fraction", "rel_tol", "abs_tol"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not 0.0 <= self.discard_fraction < 1.0:
            raise ValueError("discard_fraction must be in [0, 1)")
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ValueError("tolerances must be > 0")
        if not self.initial.finite:
            raise ValueError("initial state must be finite")
        if self.n_steps < self.sample_stride:
            raise ValueError("t_total must cover at least one sample interval")

    @property
    def n_steps(self) -> int:
        # tolerate t_total/dt landing a hair below an integer
        return int(math.floor(self.t_total / self.dt + 1e-9))

    @property
    def n_samples(self) -> int:
        return self.n_steps // self.sample_stride + 1

    @property
    def sample_spacing(self) -> float:
        return self.sample_stride * self.dt

    @property
    def steady_samples(self) -> int:
        return self.n_samples - int(math.floor(self.discard_fraction * self.n_samples))


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Uniformly sampled solution.

    ``a`` and ``b`` have shape ``(n, 3)``; ``intensity`` (``|a_j|^2``) and
    ``q`` (``Re b_j``) are derived on construction.  ``coupling`` records
    the matrix used, when known.
    """

    tau: np.ndarray
    a: np.ndarray
    b: np.ndarray
    coupling: Optional[CouplingMatrix] = None
    intensity: np.ndarray = field(init=False, repr=False)
    q: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        tau = np.asarray(self.tau, dtype=float)
        a = np.asarray(self.a, dtype=np.complex128)
        b = np.asarray(self.b, dtype=np.complex128)
        if tau.ndim != 1 or a.shape != (tau.size, 3) or b.shape != (tau.size, 3):
            raise ValueError("tau must be (n,), a and b (n, 3)")
        inten = a.real**2 + a.imag**2
        q = b.real.copy()
        for arr in (tau, a, b, inten, q):
            arr.setflags(write=False)
        object.__setattr__(self, "tau", tau)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "intensity", inten)
        object.__setattr__(self, "q", q)

    def __len__(self):
        return self.tau.size

    @property
    def spacing(self) -> float:
        return float(self.tau[1] - self.tau[0])

    def is_uniform(self, rtol: float = 1e-9) -> bool:
        if self.tau.size < 2:
            return True
        d = np.diff(self.tau)
        return bool(d.min() > 0 and np.all(np.abs(d - self.spacing) <= rtol * abs(self.spacing)))

    def state(self, i: int) -> CircuitState:
        return CircuitState(self.a[i], self.b[i])

    def signal(self, name: str) -> np.ndarray:
        """``"I1".."I3"`` or ``"q1".."q3"``."""
        kind, idx = name[0], int(name[1:]) - 1
        if kind == "I" and 0 <= idx < 3:
            return self.intensity[:, idx]
        if kind == "q" and 0 <= idx < 3:
            return self.q[:, idx]
        raise KeyError(f"unknown signal {name!r}")

    def slice(self, start: int, stop: Optional[int] = None) -> "Trajectory":
        return Trajectory(self.tau[start:stop], self.a[start:stop], self.b[start:stop], self.coupling)


# ---------------------------------------------------------------------------
# compiled kernels

@numba.njit(cache=True, fastmath=False)
def _deriv(y, out, det, mech, gamma, Gamma, Gs, eps, K):
    for j in range(3):
        a = y[j]
        b = y[3 + j]
        c = K[j, 0] * y[0] + K[j, 1] * y[1] + K[j, 2] * y[2]
        out[j] = (1j * (det[j] + 2.0 * Gs[j] * b.real) - gamma) * a + eps - 1j * c
        out[3 + j] = (-1j * mech[j] - Gamma) * b + 1j * Gs[j] * (a.real * a.real + a.imag * a.imag)


@numba.njit(cache=True)
def _bad(y, limit):
    for m in range(3):
        v = y[m]
        if not (math.isfinite(v.real) and math.isfinite(v.imag)):
            return True
        if abs(v) > limit:
            return True
    for m in range(3, 6):
        v = y[m]
        if not (math.isfinite(v.real) and math.isfinite(v.imag)):
            return True
    return False


@numba.njit(cache=True)
def _rk4_samples(y, rec, start, count, dt, stride, det, mech, gamma, Gamma, Gs, eps, K, limit):
    """Advance ``count`` sample intervals; returns index of a bad sample or -1."""
    k1 = np.empty(6, np.complex128)
    k2 = np.empty(6, np.complex128)
    k3 = np.empty(6, np.complex128)
    k4 = np.empty(6, np.complex128)
    t = np.empty(6, np.complex128)
    h2 = 0.5 * dt
    h6 = dt / 6.0
    for s in range(count):
        for _ in range(stride):
            _deriv(y, k1, det, mech, gamma, Gamma, Gs, eps, K)
            for m in range(6):
                t[m] = y[m] + h2 * k1[m]
            _deriv(t, k2, det, mech, gamma, Gamma, Gs, eps, K)
            for m in range(6):
                t[m] = y[m] + h2 * k2[m]
            _deriv(t, k3, det, mech, gamma, Gamma, Gs, eps, K)
            for m in range(6):
                t[m] = y[m] + dt * k3[m]
            _deriv(t, k4, det, mech, gamma, Gamma, Gs, eps, K)
            for m in range(6):
                y[m] = y[m] + h6 * (k1[m] + 2.0 * k2[m] + 2.0 * k3[m] + k4[m])
        for m in range(6):
            rec[start + s, m] = y[m]
        if _bad(y, limit):
            return start + s
    return -1


# Dormand-Prince 5(4) tableau
_C2, _C3, _C4, _C5 = 1 / 5, 3 / 10, 4 / 5, 8 / 9
_A21 = 1 / 5
_A31, _A32 = 3 / 40, 9 / 40
_A41, _A42, _A43 = 44 / 45, -56 / 15, 32 / 9
_A51, _A52, _A53, _A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
_A61, _A62, _A63, _A64, _A65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
_B1, _B3, _B4, _B5, _B6 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
_E1, _E3, _E4, _E5, _E6, _E7 = (
    71 / 57600, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40,
)


@numba.njit(cache=True)
def _dp45_samples(y, rec, start, count, interval, h0, det, mech, gamma, Gamma, Gs, eps, K,
                  limit, rtol, atol, hmin):
    """Adaptive stepping that lands exactly on every sample time.

    Returns (status, index, h): status 0 ok, 1 divergence, 2 step underflow.
    """
    k1 = np.empty(6, np.complex128)
    k2 = np.empty(6, np.complex128)
    k3 = np.empty(6, np.complex128)
    k4 = np.empty(6, np.complex128)
    k5 = np.empty(6, np.complex128)
    k6 = np.empty(6, np.complex128)
    k7 = np.empty(6, np.complex128)
    t = np.empty(6, np.complex128)
    y5 = np.empty(6, np.complex128)
    h = h0
    for s in range(count):
        left = interval
        while left > 0.0:
            last = h >= left
            hh = left if last else h
            _deriv(y, k1, det, mech, gamma, Gamma, Gs, eps, K)
            for m in range(6):
                t[m] = y[m] + hh * _A21 * k1[m]
            _deriv(t, k2, det, mech, gamma, Gamma, Gs, eps, K)
            for m in range(6):
                t[m] = y[m] + hh * (_A31 * k1[m] + _A32 * k2[m])
            _deriv(t, k3, det, mech, gamma, Gamma, Gs, eps, K)
            for m in range(6):
                t[m] = y[m] + hh * (_A41 * k1[m] + _A42 * k2[m] + _A43 * k3[m])
            _deriv(t, k4, det, mech, gamma, Gamma, Gs, eps, K)
            for m in range(6):
                t[m] = y[m] + hh * (_A51 * k1[m] + _A52 * k2[m] + _A53 * k3[m] + _A54 * k4[m])
            _deriv(t, k5, det, mech, gamma, Gamma, Gs, eps, K)
            for m in range(6):
                t[m] = y[m] + hh * (_A61 * k1[m] + _A62 * k2[m] + _A63 * k3[m] + _A64 * k4[m]
                                    + _A65 * k5[m])
            _deriv(t, k6, det, mech, gamma, Gamma, Gs, eps, K)
            for m in range(6):
                y5[m] = y[m] + hh * (_B1 * k1[m] + _B3 * k3[m] + _B4 * k4[m] + _B5 * k5[m]
                                     + _B6 * k6[m])
            _deriv(y5, k7, det, mech, gamma, Gamma, Gs, eps, K)
            err = 0.0
            for m in range(6):
                e = hh * (_E1 * k1[m] + _E3 * k3[m] + _E4 * k4[m] + _E5 * k5[m] + _E6 * k6[m]
                          + _E7 * k7[m])
                sc = atol + rtol * max(abs(y[m]), abs(y5[m]))
                r = abs(e) / sc
                err += r * r
            err = math.sqrt(err / 6.0)
            if not math.isfinite(err):
                err = 1e10
            if err <= 1.0:
                for m in range(6):
                    y[m] = y5[m]
                left -= hh
                if last:
                    left = 0.0
                fac = 5.0 if err == 0.0 else min(5.0, max(0.2, 0.9 * err ** -0.2))
                if not last or fac < 1.0:
                    h = hh * fac
            else:
                h = hh * max(0.2, 0.9 * err ** -0.2)
                if h < hmin:
                    for m in range(6):
                        rec[start + s, m] = y[m]
                    return 2, start + s, h
        for m in range(6):
            rec[start + s, m] = y[m]
        if _bad(y, limit):
            return 1, start + s, h
    return 0, -1, h


# ---------------------------------------------------------------------------

def _coeffs(config: CircuitConfig, K: CouplingMatrix):
    return (
        config.microwave_detunings,
        config.mechanical_frequencies,
        float(config.gamma),
        float(config.Gamma),
        np.ascontiguousarray(config.optomech, dtype=float),
        complex(config.epsilon),
        np.ascontiguousarray(K.K, dtype=np.complex128),
    )


def rhs(state: CircuitState, config: CircuitConfig, K: CouplingMatrix) -> CircuitState:
    """Time derivative of ``state`` (same compiled kernel the integrator uses)."""
    y = state.to_vector()
    if not np.all(np.isfinite(y)):
        raise DivergenceError("non-finite state passed to rhs", tau=float("nan"))
    out = np.empty(6, np.complex128)
    det, mech, gamma, Gamma, Gs, eps, Km = _coeffs(config, K)
    _deriv(y, out, det, mech, gamma, Gamma, Gs, eps, Km)
    return CircuitState.from_vector(out)


def initial_state(config: CircuitConfig, seed: Optional[int] = None) -> CircuitState:
    """All-zero start, optionally with a seeded perturbation of size 1e-6*eps/gamma."""
    if seed is None:
        return CircuitState()
    rng = np.random.default_rng(seed)
    scale = 1e-6 * config.epsilon / config.gamma
    v = (rng.standard_normal(6) + 1j * rng.standard_normal(6)) * (scale / math.sqrt(2))
    return CircuitState.from_vector(v)


def _divergence_limit(config: CircuitConfig, y0: np.ndarray) -> float:
    scale = max(config.epsilon / config.gamma, float(np.max(np.abs(y0[:3]))), 1.0)
    return DIVERGENCE_FACTOR * scale


def integrate(
    plan: SimPlan,
    config: CircuitConfig,
    K: CouplingMatrix,
    deadline: Optional[float] = None,
    chunk_samples: int = 2000,
) -> Trajectory:
    """Integrate from ``plan.initial`` and return every recorded sample.

    Fixed-step classical RK4 by default, Dormand-Prince 5(4) when
    ``plan.adaptive``.  ``deadline`` is an absolute ``time.monotonic()``
    value; exceeding it raises :class:`IntegrationTimeout`.
    """
    y = plan.initial.to_vector().astype(np.complex128)
    n = plan.n_samples
    rec = np.empty((n, 6), np.complex128)
    rec[0] = y
    det, mech, gamma, Gamma, Gs, eps, Km = _coeffs(config, K)
    limit = _divergence_limit(config, y)
    spacing = plan.sample_spacing
    h = plan.dt
    i = 1
    while i < n:
        count = min(chunk_samples, n - i)
        if plan.adaptive:
            status, bad, h = _dp45_samples(
                y, rec, i, count, spacing, h, det, mech, gamma, Gamma, Gs, eps, Km,
                limit, plan.rel_tol, plan.abs_tol, 1e-14 * max(1.0, spacing),
            )
            if status == 2:
                raise StepSizeError(f"step size underflow at tau={bad * spacing:.6g}", tau=bad * spacing)
        else:
            bad = _rk4_samples(y, rec, i, count, plan.dt, plan.sample_stride,
                               det, mech, gamma, Gamma, Gs, eps, Km, limit)
            status = 1 if bad >= 0 else 0
        if status == 1:
            tau = bad * spacing
            raise DivergenceError(
                f"integration diverged at tau={tau:.6g} (|a| > {limit:.3g} or non-finite)", tau=tau
            )
        i += count
        if deadline is not None and i < n and time.monotonic() > deadline:
            tau = (i - 1) * spacing
            raise IntegrationTimeout(f"wall-clock budget exceeded at tau={tau:.6g}", tau=tau)
    tau = np.arange(n) * spacing
    return Trajectory(tau, rec[:, :3], rec[:, 3:], K)


def steady_window(traj: Trajectory, discard_fraction: float, min_samples: int = MIN_SAMPLES) -> Trajectory:
    """Drop the leading ``discard_fraction`` of samples (the transient)."""
    if not 0.0 <= discard_fraction < 1.0:
        raise ValueError("discard_fraction must be in [0, 1)")
    start = int(math.floor(discard_fraction * len(traj)))
    if len(traj) - start < min_samples:
        raise WindowTooShort(
            f"steady window has {len(traj) - start} samples, need at least {min_samples}"
        )
    return traj.slice(start)


def write_trajectory_csv(traj: Trajectory, path: Union[str, Path]) -> None:
    cols = [traj.tau]
    for j in range(3):
        cols += [traj.a[:, j].real, traj.a[:, j].imag]
    for j in range(3):
        cols += [traj.b[:, j].real, traj.b[:, j].imag]
    cols += [traj.intensity[:, j] for j in range(3)]
    cols += [traj.q[:, j] for j in range(3)]
    data = np.column_stack(cols)
    np.savetxt(path, data, delimiter=",", header=",".join(TRAJECTORY_COLUMNS), comments="", fmt="%.17g")


def read_trajectory_csv(path: Union[str, Path], coupling: Optional[CouplingMatrix] = None) -> Trajectory:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
    if tuple(header) != TRAJECTORY_COLUMNS:
        raise ValueError(f"{path}: unexpected trajectory header")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    a = data[:, 1:7:2] + 1j * data[:, 2:7:2]
    b = data[:, 7:13:2] + 1j * data[:, 8:13:2]
    return Trajectory(data[:, 0], a, b, coupling)
