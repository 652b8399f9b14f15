"""Flat ``key = value`` configuration files and built-in parameter presets.

Dialect: UTF-8 text, one ``key = value`` per line, ``#`` starts a comment,
blank lines ignored.  Angles may be given in radians (``theta = 1.5708``)
or in units of pi with a ``_pi`` suffix (``theta_pi = 0.5``).

Circuit keys: delta, Delta, G, epsilon, gamma, Gamma, J, theta, phi,
g1..g3, phi1..phi3, G1..G3 (optional per-resonator G), preset (circuit
topology: general, fig4a, fig4b, fig4c, fig4d).

Simulation keys: t_total, dt, sample_stride, discard_fraction, adaptive,
rel_tol, abs_tol, seed.

Classifier keys: tol_bins, secondary, noise_floor, death_rel_std,
min_prominence, max_harmonic.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, Iterable, Mapping, Optional, Union

from .model import (
    CIRCUITS,
    CircuitConfig,
    CoherentCoupling,
    ConfigError,
    CouplingMatrix,
    EnvCoupling,
    circuit_matrix,
)

__all__ = [
    "CircuitSetup",
    "PRESETS",
    "ANGLE_KEYS",
    "CIRCUIT_KEYS",
    "PLAN_KEYS",
    "parse_kv",
    "read_kv",
    "format_kv",
    "setup_from_mapping",
    "setup_to_mapping",
    "plan_from_mapping",
    "plan_to_mapping",
    "THRESHOLD_KEYS",
    "thresholds_from_mapping",
    "thresholds_to_mapping",
    "preset",
    "apply_overrides",
]

ANGLE_KEYS = ("theta", "phi", "phi1", "phi2", "phi3")
_FLOAT_CIRCUIT_KEYS = ("delta", "Delta", "G", "epsilon", "gamma", "Gamma", "J", "g1", "g2", "g3")
CIRCUIT_KEYS = _FLOAT_CIRCUIT_KEYS + ANGLE_KEYS + ("G1", "G2", "G3", "preset")
PLAN_KEYS = ("t_total", "dt", "sample_stride", "discard_fraction", "adaptive", "rel_tol", "abs_tol", "seed")
THRESHOLD_KEYS = ("tol_bins", "secondary", "noise_floor", "death_rel_std", "min_prominence", "max_harmonic")


@dataclass(frozen=True)
class CircuitSetup:
    """Everything needed to build the equations of motion for one point."""

    config: CircuitConfig = field(default_factory=CircuitConfig)
    env: EnvCoupling = field(default_factory=EnvCoupling)
    coh: CoherentCoupling = field(default_factory=CoherentCoupling)
    circuit: str = "general"

    def __post_init__(self):
        if self.circuit not in CIRCUITS:
            raise ConfigError(f"preset: unknown circuit {self.circuit!r}; expected one of {CIRCUITS}", key="preset")

    def coupling(self) -> CouplingMatrix:
        return circuit_matrix(self.circuit, self.env, self.coh)

    def with_values(self, **values) -> "CircuitSetup":
        """Copy with flat-key overrides, e.g. ``with_values(J=0.1, theta=0)``."""
        m = setup_to_mapping(self)
        m.update(values)
        return setup_from_mapping(m)


def parse_kv(text: str, source: str = "<string>") -> Dict[str, str]:
    out: Dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}", key=key)
        out[key] = value
    return out


def read_kv(path: Union[str, Path]) -> Dict[str, str]:
    path = Path(path)
    return parse_kv(path.read_text(encoding="utf-8"), source=str(path))


def _fmt_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def format_kv(mapping: Mapping[str, object], header: Optional[str] = None) -> str:
    lines = []
    if header:
        lines.extend(f"# {h}" for h in header.splitlines())
    lines.extend(f"{k} = {_fmt_value(v)}" for k, v in mapping.items())
    return "\n".join(lines) + "\n"


def _to_float(key: str, value) -> float:
    try:
        x = float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: expected a number, got {value!r}", key=key) from None
    if not math.isfinite(x):
        raise ConfigError(f"{key}: must be finite, got {value!r}", key=key)
    return x


def _to_bool(key: str, value) -> bool:
    if isinstance(value, bool):
        return value
    s = str(value).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{key}: expected a boolean, got {value!r}", key=key)


def _to_int(key: str, value) -> int:
    try:
        f = float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: expected an integer, got {value!r}", key=key) from None
    if not f.is_integer():
        raise ConfigError(f"{key}: expected an integer, got {value!r}", key=key)
    return int(f)


def _resolve_angles(mapping: Mapping[str, object]) -> Dict[str, object]:
    """Fold ``<angle>_pi`` keys into radians under the bare key."""
    out: Dict[str, object] = {}
    for key, value in mapping.items():
        if key.endswith("_pi") and key[:-3] in ANGLE_KEYS:
            base = key[:-3]
            if base in mapping:
                raise ConfigError(f"{base}: given both as {base} and {key}", key=base)
            out[base] = _to_float(key, value) * math.pi
        else:
            out[key] = value
    return out


def setup_from_mapping(mapping: Mapping[str, object], allow_extra: Iterable[str] = ()) -> CircuitSetup:
    """Build a :class:`CircuitSetup` from flat keys; missing keys take defaults."""
    m = _resolve_angles(mapping)
    allowed = set(CIRCUIT_KEYS) | set(allow_extra)
    for key in m:
        if key not in allowed:
            raise ConfigError(f"{key}: unknown configuration key", key=key)
    f = {k: _to_float(k, m[k]) for k in _FLOAT_CIRCUIT_KEYS + ANGLE_KEYS if k in m}
    G_site = None
    if any(k in m for k in ("G1", "G2", "G3")):
        G = f.get("G", CircuitConfig.G)
        G_site = tuple(_to_float(k, m[k]) if k in m else G for k in ("G1", "G2", "G3"))
    cfg_kw = {k: f[k] for k in ("delta", "Delta", "G", "epsilon", "gamma", "Gamma") if k in f}
    config = CircuitConfig(G_site=G_site, **cfg_kw)
    env = EnvCoupling(J=f.get("J", 0.0), theta=f.get("theta", 0.0), phi=f.get("phi", 0.0))
    coh = CoherentCoupling(
        g=tuple(f.get(f"g{i}", 0.0) for i in (1, 2, 3)),
        phase=tuple(f.get(f"phi{i}", 0.0) for i in (1, 2, 3)),
    )
    return CircuitSetup(config, env, coh, str(m.get("preset", "general")).strip())


def _angle_item(key: str, x: float):
    # pi-multiples with a short decimal form are written as <key>_pi, which
    # parses back to the identical float
    r = round(x / math.pi, 10)
    if r * math.pi == x:
        return f"{key}_pi", r
    return key, x


def setup_to_mapping(setup: CircuitSetup, pi_units: bool = False) -> Dict[str, object]:
    c, e, h = setup.config, setup.env, setup.coh
    m: Dict[str, object] = {
        "preset": setup.circuit,
        "delta": c.delta,
        "Delta": c.Delta,
        "G": c.G,
        "epsilon": c.epsilon,
        "gamma": c.gamma,
        "Gamma": c.Gamma,
        "J": e.J,
        "theta": e.theta,
        "phi": e.phi,
        "g1": h.g[0],
        "g2": h.g[1],
        "g3": h.g[2],
        "phi1": h.phase[0],
        "phi2": h.phase[1],
        "phi3": h.phase[2],
    }
    if c.G_site is not None:
        m.update(G1=c.G_site[0], G2=c.G_site[1], G3=c.G_site[2])
    if pi_units:
        m = dict(_angle_item(k, v) if k in ANGLE_KEYS else (k, v) for k, v in m.items())
    return m


def plan_from_mapping(mapping: Mapping[str, object], base=None):
    """Build a :class:`~optosync.dynamics.SimPlan`; unknown keys are ignored."""
    from .dynamics import SimPlan, initial_state

    plan = base if base is not None else SimPlan()
    kw = {}
    for key in ("t_total", "dt", "discard_fraction", "rel_tol", "abs_tol"):
        if key in mapping:
            kw[key] = _to_float(key, mapping[key])
    if "sample_stride" in mapping:
        kw["sample_stride"] = _to_int("sample_stride", mapping["sample_stride"])
    if "adaptive" in mapping:
        kw["adaptive"] = _to_bool("adaptive", mapping["adaptive"])
    try:
        plan = replace(plan, **kw)
    except ValueError as exc:
        raise ConfigError(str(exc), key=getattr(exc, "key", None)) from None
    return plan


def plan_to_mapping(plan) -> Dict[str, object]:
    return {
        "t_total": plan.t_total,
        "dt": plan.dt,
        "sample_stride": plan.sample_stride,
        "discard_fraction": plan.discard_fraction,
        "adaptive": plan.adaptive,
        "rel_tol": plan.rel_tol,
        "abs_tol": plan.abs_tol,
    }


def thresholds_from_mapping(mapping: Mapping[str, object]):
    """Classifier :class:`~optosync.analysis.Thresholds`; unknown keys are ignored."""
    from .analysis import Thresholds

    kw: Dict[str, object] = {}
    for key in THRESHOLD_KEYS:
        if key not in mapping:
            continue
        if key == "max_harmonic":
            kw[key] = _to_int(key, mapping[key])
            ok = kw[key] >= 1
        else:
            kw[key] = _to_float(key, mapping[key])
            ok = kw[key] > 0 and (key not in ("secondary", "min_prominence", "noise_floor") or kw[key] < 1)
        if not ok:
            raise ConfigError(f"{key}: out of range, got {mapping[key]!r}", key=key)
    return Thresholds(**kw)


def thresholds_to_mapping(thresholds) -> Dict[str, object]:
    return {k: getattr(thresholds, k) for k in THRESHOLD_KEYS}


def apply_overrides(mapping: Mapping[str, str], overrides: Iterable[str]) -> Dict[str, str]:
    """Apply ``key=value`` strings on top of a file mapping (overrides win).

    An override of ``theta`` replaces a file ``theta_pi`` and vice versa.
    """
    out = dict(mapping)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r}: expected key=value")
        key, value = (s.strip() for s in item.split("=", 1))
        base = key[:-3] if key.endswith("_pi") and key[:-3] in ANGLE_KEYS else key
        if base in ANGLE_KEYS:
            out.pop(base, None)
            out.pop(base + "_pi", None)
        out[key] = value
    return out


_PI = math.pi

# Base parameters shared by every preset.
_BASE = dict(delta=0.05, Delta=5e-3, G=4e-5, epsilon=800.0, gamma=0.1, Gamma=8e-5)


def _p(circuit="general", **kw) -> Dict[str, object]:
    d: Dict[str, object] = {"preset": circuit, **_BASE}
    for k, v in kw.items():
        if k.endswith("_pi"):
            d[k[:-3]] = v * _PI
        else:
            d[k] = v
    return d


#: named parameter sets, one per reference configuration
PRESETS: Dict[str, Dict[str, object]] = {
    "fig2a": _p(J=0.0),
    "fig2b": _p(J=0.11, theta_pi=0.5, phi_pi=0.5),
    "fig2c": _p(J=0.11, theta_pi=0.6, phi_pi=0.8),
    "fig3a": _p(J=0.1, theta_pi=0.2, phi_pi=-0.8),
    "fig3b": _p(J=0.18, theta_pi=0.2, phi_pi=-0.8),
    "fig3c_pointC": _p(J=0.11, theta_pi=0.0, phi_pi=0.2),
    "fig5a": _p("fig4a", J=0.15, theta_pi=0.5, phi_pi=0.9, g1=0.15, g2=0.15, g3=0.15,
                phi1_pi=0.8, phi2_pi=0.8, phi3_pi=0.8),
    "fig5b": _p("fig4a", J=0.15, theta_pi=0.5, phi_pi=-0.7, g1=0.15, g2=0.15, g3=0.15,
                phi1_pi=1.0, phi2_pi=1.0, phi3_pi=1.0),
    "fig6a": _p("fig4b", J=0.19, theta_pi=0.5, phi_pi=-0.8, g1=0.18, phi1_pi=0.7),
    "fig6d_pointC": _p("fig4b", J=0.2, theta_pi=-0.835, phi_pi=0.3, g1=0.1, phi1_pi=0.6),
    "fig6d_pointD": _p("fig4b", J=0.2, theta_pi=-0.77, phi_pi=0.3, g1=0.1, phi1_pi=0.6),
    "fig7a": _p("fig4c", J=0.2, theta_pi=0.2, phi_pi=-0.7, g3=0.2, phi3_pi=0.7),
    "fig7c_pointA": _p("fig4c", J=0.16, theta_pi=-0.05, phi_pi=0.2, g3=0.16, phi3_pi=0.2),
    "fig7d_pointB": _p("fig4c", J=0.16, theta_pi=0.1, phi_pi=0.2, g3=0.16, phi3_pi=0.2),
    "fig8a": _p("fig4d", J=0.57, theta_pi=0.9, phi_pi=1.0),
    "fig8b_pointA": _p("fig4d", J=0.2, theta_pi=0.9, phi_pi=1.0),
}


def preset(name: str) -> CircuitSetup:
    try:
        values = PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(PRESETS)}") from None
    return setup_from_mapping(values)
