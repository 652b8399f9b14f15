"""Spectra, peak detection and classification of the oscillation state.

Frequencies are reported as ``f / f0`` with ``f0 = Omega_0 / 2 pi``: a
signal ``cos(tau)`` sits exactly at 1.

The classifier works on the intensity spectra.  Each resonator's rhythm is
the fundamental ``f`` of its own spectrum: every strong line (prominence >=
``secondary``) is a harmonic ``n f`` with ``n <= max_harmonic``, within
``tol_bins`` frequency bins.  Weaker non-harmonic lines are tolerated as
long as they lie within reach of the ``max_harmonic``-th harmonic.
Resonators whose fundamentals agree within ``tol_bins`` are synchronized.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.signal import find_peaks
from scipy.signal.windows import hann

from .dynamics import MIN_SAMPLES, Trajectory

__all__ = [
    "Spectrum",
    "Peak",
    "PeakList",
    "Thresholds",
    "SyncClassification",
    "SYNC_STATES",
    "INTENSITY",
    "DISPLACEMENT",
    "SCHEMA_VERSION",
    "power_spectrum",
    "dominant_peaks",
    "classify",
    "common_fundamental",
    "sideband_spacing",
    "lissajous",
    "closure_gap",
    "write_spectrum_csv",
    "classification_to_json",
]

SCHEMA_VERSION = 1

SYNC_STATES = ("Independent", "Unsynchronized", "Synchronized", "PartialSync", "OscillationDeath")

INTENSITY = ("I1", "I2", "I3")
DISPLACEMENT = ("q1", "q2", "q3")


@dataclass(frozen=True)
class Thresholds:
    """Classifier constants (all overridable)."""

    tol_bins: float = 2.0
    secondary: float = 0.20
    noise_floor: float = 1e-6
    death_rel_std: float = 1e-4
    min_prominence: float = 0.05
    max_harmonic: int = 16


DEFAULT_THRESHOLDS = Thresholds()


@dataclass(frozen=True, eq=False)
class Spectrum:
    """One-sided power spectra, one column per signal.

    ``power`` is normalised so that each column sums to the mean square of
    the windowed, mean-removed signal.
    """

    f_over_f0: np.ndarray
    power: np.ndarray
    signals: Tuple[str, ...]

    @property
    def bin_width(self) -> float:
        return float(self.f_over_f0[1] - self.f_over_f0[0])

    def column(self, signal: Union[int, str]) -> np.ndarray:
        idx = self.signals.index(signal) if isinstance(signal, str) else int(signal)
        return self.power[:, idx]


def power_spectrum(traj: Trajectory, signals: Sequence[str] = INTENSITY) -> Spectrum:
    """Hann-windowed periodogram of each selected signal.

    ``signals`` picks from ``I1..I3`` and ``q1..q3``; pass
    ``INTENSITY + DISPLACEMENT`` for all six.
    """
    n = len(traj)
    if n < MIN_SAMPLES:
        raise ValueError(f"need at least {MIN_SAMPLES} samples, got {n}")
    if not traj.is_uniform():
        raise ValueError("trajectory is not uniformly sampled")
    signals = tuple(signals)
    w = hann(n, sym=False)
    x = np.column_stack([traj.signal(s) for s in signals])
    x = (x - x.mean(axis=0)) * w[:, None]
    X = np.fft.rfft(x, axis=0)
    p = (X.real**2 + X.imag**2) / n**2
    # fold negative frequencies; DC and (even n) Nyquist appear once
    p[1:] *= 2.0
    if n % 2 == 0:
        p[-1] /= 2.0
    f = 2.0 * math.pi * np.fft.rfftfreq(n, traj.spacing)
    return Spectrum(f, p, signals)


@dataclass(frozen=True)
class Peak:
    frequency: float
    power: float
    prominence: float  # topographic prominence as a fraction of the global max


@dataclass(frozen=True)
class PeakList:
    peaks: Tuple[Peak, ...] = ()
    bin_width: float = float("nan")

    def __len__(self):
        return len(self.peaks)

    def __iter__(self):
        return iter(self.peaks)

    def __getitem__(self, i):
        return self.peaks[i]

    @property
    def frequencies(self) -> np.ndarray:
        return np.array([p.frequency for p in self.peaks])

    @property
    def top(self) -> Optional[Peak]:
        return self.peaks[0] if self.peaks else None

    def within(self, lo: float, hi: float) -> "PeakList":
        return PeakList(tuple(p for p in self.peaks if lo <= p.frequency <= hi), self.bin_width)


def _refine(p: np.ndarray, k: int) -> float:
    """Fractional bin offset from a parabola through the log-power triple."""
    if k <= 0 or k >= p.size - 1:
        return 0.0
    a, b, c = p[k - 1], p[k], p[k + 1]
    if a <= 0 or c <= 0:
        den = a - 2 * b + c
        return 0.0 if den == 0 else 0.5 * (a - c) / den
    la, lb, lc = math.log(a), math.log(b), math.log(c)
    den = la - 2 * lb + lc
    return 0.0 if den == 0 else 0.5 * (la - lc) / den


def dominant_peaks(spec: Spectrum, signal: Union[int, str], thresholds: Thresholds = DEFAULT_THRESHOLDS) -> PeakList:
    """Significant local maxima of one spectrum column, strongest first.

    DC is excluded.  A peak needs power above ``noise_floor`` x max and a
    topographic prominence of at least ``min_prominence`` x max; its
    frequency is refined by 3-point parabolic interpolation.
    """
    p = np.asarray(spec.column(signal), dtype=float)
    if p.size < 3:
        raise ValueError("empty spectrum")
    body = p.copy()
    body[0] = 0.0
    top = body.max()
    bw = spec.bin_width
    if not top > 0:
        return PeakList((), bw)
    idx, props = find_peaks(
        body, height=thresholds.noise_floor * top, prominence=thresholds.min_prominence * top
    )
    peaks = []
    for k, prom in zip(idx, props["prominences"]):
        f = spec.f_over_f0[k] + _refine(body, int(k)) * bw
        peaks.append(Peak(float(f), float(body[k]), float(prom / top)))
    peaks.sort(key=lambda pk: (-pk.power, pk.frequency))
    return PeakList(tuple(peaks), bw)


def _harmonic(f: float, base: float, tol: float, max_n: int) -> bool:
    n = round(f / base)
    return 1 <= n <= max_n and abs(f - n * base) <= tol


def common_fundamental(
    peak_lists: Sequence[PeakList], thresholds: Thresholds = DEFAULT_THRESHOLDS
) -> Optional[float]:
    """Frequency of which all strong lines of all lists are harmonics.

    Candidates are the listed peak frequencies.  A candidate is rejected
    when any listed line lies beyond its ``max_harmonic``-th harmonic: a
    slow comb that cannot reach the carrier lines is a sideband envelope,
    not a shared rhythm.  Among the admissible ones
    the candidate explaining the most lines wins; ties go to the higher
    frequency.  ``None`` when no candidate is admissible.
    """
    if not peak_lists or any(len(pl) == 0 for pl in peak_lists):
        return None
    bw = max(pl.bin_width for pl in peak_lists)
    tol = thresholds.tol_bins * bw
    cands = sorted({p.frequency for pl in peak_lists for p in pl if p.frequency > tol}, reverse=True)
    best, best_score = None, -1
    for f in cands:
        reach = thresholds.max_harmonic * f + tol
        ok = all(
            _harmonic(p.frequency, f, tol, thresholds.max_harmonic)
            for pl in peak_lists
            for p in pl
            if p.prominence >= thresholds.secondary or p is pl.top
        ) and all(p.frequency <= reach for pl in peak_lists for p in pl)
        if not ok:
            continue
        score = sum(_harmonic(p.frequency, f, tol, thresholds.max_harmonic) for pl in peak_lists for p in pl)
        if score > best_score:
            best, best_score = f, score
    return best


@dataclass(frozen=True)
class SyncClassification:
    state: str
    sync_frequency: Optional[float] = None
    members: Tuple[int, ...] = ()
    subharmonic_order: Optional[int] = None
    reference: Optional[int] = None
    dead: Tuple[int, ...] = ()
    fundamentals: Tuple[Optional[float], ...] = (None, None, None)
    evidence: Tuple[PeakList, ...] = ()
    thresholds: Thresholds = DEFAULT_THRESHOLDS

    def to_record(self) -> Dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "state": self.state,
            "sync_frequency": self.sync_frequency,
            "members": list(self.members),
            "subharmonic_order": self.subharmonic_order,
            "reference": self.reference,
            "dead": list(self.dead),
            "fundamentals": list(self.fundamentals),
            "peaks": [
                [{"frequency": p.frequency, "power": p.power, "prominence": p.prominence} for p in pl]
                for pl in self.evidence
            ],
            "thresholds": asdict(self.thresholds),
        }


def _rel_std(x: np.ndarray) -> float:
    m = abs(float(np.mean(x)))
    s = float(np.std(x))
    if m == 0.0:
        return 0.0 if s == 0.0 else math.inf
    return s / m



def _agreeing_groups(freqs, tol):
    """Sets of two or more resonators whose fundamentals agree within ``tol``.

    Largest set first, then the higher frequency.  Each entry is
    ``(members, mean frequency)``.
    """
    known = [(j, f) for j, f in freqs if f is not None]
    out = []
    for size in range(len(known), 1, -1):
        for combo in combinations(known, size):
            fs = [f for _, f in combo]
            if max(fs) - min(fs) <= tol:
                out.append((tuple(j for j, _ in combo), float(np.mean(fs))))
        if out:
            break
    out.sort(key=lambda g: -g[1])
    return out


def _subharmonic(f, others, tol, max_n):
    """Integer ratio between ``f`` and the rhythm of a non-member, if any."""
    for j, g in others:
        if g is None:
            continue
        hi, lo = max(f, g), min(f, g)
        n = round(hi / lo)
        if 2 <= n <= max_n and abs(hi / n - lo) <= tol:
            return int(n), j
    return None, None


def classify(
    spectra: Spectrum,
    traj: Trajectory,
    thresholds: Thresholds = DEFAULT_THRESHOLDS,
    coupling_is_zero: Optional[bool] = None,
) -> SyncClassification:
    """Decide the oscillation state from intensity spectra of a steady window.

    Resonators whose intensity barely moves (relative std below
    ``death_rel_std``) are dead.  The live ones are grouped by their
    fundamentals: all agreeing gives ``Synchronized`` (``PartialSync`` when
    some are dead), a strict subset gives ``PartialSync`` together with the
    integer ratio to a non-member's rhythm when there is one.

    ``coupling_is_zero`` defaults to inspecting ``traj.coupling``; it only
    separates ``Independent`` from ``Unsynchronized``.
    """
    th = thresholds
    evidence = tuple(dominant_peaks(spectra, s, th) for s in INTENSITY)
    own = tuple(common_fundamental([pl], th) for pl in evidence)
    dead = tuple(j + 1 for j in range(3) if _rel_std(traj.intensity[:, j]) < th.death_rel_std)
    live = [j for j in (1, 2, 3) if j not in dead]
    base = dict(dead=dead, fundamentals=own, evidence=evidence, thresholds=th)

    if not live:
        return SyncClassification("OscillationDeath", **base)

    tol = th.tol_bins * spectra.bin_width
    groups = _agreeing_groups([(j, own[j - 1]) for j in live], tol)
    if groups:
        members, f = groups[0]
        if len(members) == len(live):
            state = "Synchronized" if len(live) == 3 else "PartialSync"
            return SyncClassification(state, f, members, **base)
        if len(members) < len(live):
            order, ref = _subharmonic(f, [(j, own[j - 1]) for j in live if j not in members], tol, th.max_harmonic)
            return SyncClassification("PartialSync", f, members, order, ref, **base)

    if coupling_is_zero is None:
        coupling_is_zero = traj.coupling is not None and traj.coupling.is_zero
    return SyncClassification("Independent" if coupling_is_zero else "Unsynchronized", **base)


def sideband_spacing(peaks: PeakList, rel_tol: float = 0.10) -> Optional[float]:
    """Common spacing of an equally spaced comb of lines, or ``None``.

    The smallest gap sets the trial spacing ``d``; every gap must be an
    integer multiple of ``d`` within ``rel_tol``, and at least half of the
    comb slots between the outermost lines must be occupied (weak teeth
    often drop below the prominence cut).  The returned spacing is the
    span divided by the slot count.  Needs at least three peaks.
    """
    f = np.sort(np.asarray([p.frequency for p in peaks], dtype=float))
    if f.size < 3:
        return None
    gaps = np.diff(f)
    d = float(gaps.min())
    if d <= 0:
        return None
    k = np.rint(gaps / d)
    if np.any(np.abs(gaps - k * d) > rel_tol * d * k):
        return None
    slots = int(k.sum())
    if gaps.size < 0.5 * slots:
        return None
    return float((f[-1] - f[0]) / slots)


def lissajous(traj: Trajectory, pair: Tuple[str, str] = ("I1", "I2")) -> np.ndarray:
    """``(n, 2)`` array of the two signals, in sample order, unsmoothed."""
    return np.column_stack([traj.signal(pair[0]), traj.signal(pair[1])])


def closure_gap(traj: Trajectory, pair: Tuple[str, str], period: float, n_periods: int = 1) -> float:
    """How far the Lissajous curve is from closing after ``n_periods``.

    Maximum over the window of the distance between the point at ``tau``
    and the point at ``tau + n_periods * period``, per axis normalised by
    that signal's range.  Zero for an exactly periodic orbit.
    """
    pts = lissajous(traj, pair)
    shift = n_periods * period
    t = traj.tau
    keep = t + shift <= t[-1]
    if not np.any(keep):
        raise ValueError("window shorter than the requested shift")
    rng = pts.max(axis=0) - pts.min(axis=0)
    rng[rng == 0] = 1.0
    later = np.column_stack([np.interp(t[keep] + shift, t, pts[:, i]) for i in range(2)])
    d = np.abs(later - pts[keep]) / rng
    return float(d.max())


def write_spectrum_csv(spec: Spectrum, path: Union[str, Path]) -> None:
    header = ",".join(("f_over_f0",) + tuple(f"S_{s}" for s in spec.signals))
    np.savetxt(path, np.column_stack([spec.f_over_f0, spec.power]), delimiter=",",
               header=header, comments="", fmt="%.17g")


def classification_to_json(cls: SyncClassification, path: Optional[Union[str, Path]] = None, **extra) -> str:
    rec = cls.to_record()
    rec.update(extra)
    text = json.dumps(rec, indent=2)
    if path is not None:
        Path(path).write_text(text + "\n", encoding="utf-8")
    return text
