"""Parameter sweeps: 1-D spectrogram scans and 2-D phase diagrams.

Every grid point is integrated and classified independently, so the result
does not depend on the number of worker processes.  With an output
directory the sweep is checkpointed one point at a time and an interrupted
run resumes where it stopped.

Results directory layout::

    manifest.json      spec hash, axes, resolved parameters, schema_version
    checkpoint.log     "spec <hash>" then one completed grid index per line
    points.jsonl       one full record per completed point (completion order)
    points.csv         grid coordinates + classification summary (row-major)
    spectra.csv        optional down-sampled intensity spectra
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Dict, List, Mapping, Optional, Tuple, Union

import numpy as np

from . import __version__
from .analysis import (
    DEFAULT_THRESHOLDS,
    INTENSITY,
    SCHEMA_VERSION,
    Thresholds,
    classify,
    power_spectrum,
)
from .config import (
    ANGLE_KEYS,
    PLAN_KEYS,
    THRESHOLD_KEYS,
    CircuitSetup,
    format_kv,
    plan_from_mapping,
    plan_to_mapping,
    setup_from_mapping,
    setup_to_mapping,
    thresholds_from_mapping,
    thresholds_to_mapping,
)
from .dynamics import (
    DivergenceError,
    IntegrationTimeout,
    MIN_SAMPLES,
    SimPlan,
    StepSizeError,
    initial_state,
    integrate,
    steady_window,
)
from .model import ConfigError

__all__ = [
    "AXIS_KEYS",
    "OUTPUT_FLAGS",
    "PHASE_LABELS",
    "Axis",
    "SweepSpec",
    "SweepResult",
    "PhaseDiagram",
    "CheckpointMismatch",
    "evaluate_point",
    "run_sweep",
    "load_result",
    "completed_points",
    "phase_diagram",
    "sweep_spec_from_mapping",
    "sweep_spec_to_mapping",
]

AXIS_KEYS = ("J", "theta", "phi", "g1", "g2", "g3", "phi1", "phi2", "phi3", "delta", "Delta", "epsilon", "gamma")
OUTPUT_FLAGS = ("classification", "peaks", "spectrogram")
PHASE_LABELS = ("sync", "unsync", "death", "diverged", "timeout")

SPECTRUM_MAX_BINS = 4096
SPECTRUM_F_MAX = 2.5
TOP_PEAKS = 5


class CheckpointMismatch(RuntimeError):
    """The results directory belongs to a different sweep spec."""


@dataclass(frozen=True)
class Axis:
    """One swept parameter; ``pi_units`` scales start/stop by pi."""

    name: str
    start: float
    stop: float
    count: int
    pi_units: bool = False

    def __post_init__(self):
        if self.name not in AXIS_KEYS:
            raise ConfigError(f"axis: cannot sweep {self.name!r}; expected one of {AXIS_KEYS}", key=self.name)
        if self.pi_units and self.name not in ANGLE_KEYS:
            raise ConfigError(f"axis: {self.name} is not an angle, '_pi' not allowed", key=self.name)
        if int(self.count) != self.count or self.count < 2:
            raise ConfigError(f"axis {self.name}: count must be an integer >= 2", key=self.name)
        if not (math.isfinite(self.start) and math.isfinite(self.stop)):
            raise ConfigError(f"axis {self.name}: bounds must be finite", key=self.name)
        object.__setattr__(self, "count", int(self.count))
        object.__setattr__(self, "start", float(self.start))
        object.__setattr__(self, "stop", float(self.stop))

    @property
    def label(self) -> str:
        return self.name + ("_pi" if self.pi_units else "")

    def values(self) -> np.ndarray:
        """Grid values in the axis' own units (pi units stay in pi units)."""
        return np.linspace(self.start, self.stop, self.count)

    def physical(self) -> np.ndarray:
        v = self.values()
        return v * math.pi if self.pi_units else v

    @classmethod
    def parse(cls, text: str, key: str = "axis") -> "Axis":
        parts = [p.strip() for p in str(text).split(",")]
        if len(parts) != 4:
            raise ConfigError(f"{key}: expected 'name, start, stop, count', got {text!r}", key=key)
        name, start, stop, count = parts
        pi = name.endswith("_pi")
        try:
            start_f, stop_f, count_f = float(start), float(stop), float(count)
        except ValueError:
            raise ConfigError(f"{key}: non-numeric bound in {text!r}", key=key) from None
        if not count_f.is_integer():
            raise ConfigError(f"{key}: count must be an integer, got {count!r}", key=key)
        return cls(name[:-3] if pi else name, start_f, stop_f, int(count_f), pi)

    def format(self) -> str:
        return f"{self.label}, {self.start!r}, {self.stop!r}, {self.count}"


@dataclass(frozen=True)
class SweepSpec:
    """Base point, 1 or 2 axes, integration plan and output flags."""

    base: CircuitSetup
    axes: Tuple[Axis, ...]
    plan: SimPlan = field(default_factory=SimPlan)
    outputs: Tuple[str, ...] = ("classification", "peaks")
    thresholds: Thresholds = DEFAULT_THRESHOLDS
    seed: Optional[int] = None
    point_budget: float = 120.0

    def __post_init__(self):
        axes = tuple(self.axes)
        if not 1 <= len(axes) <= 2:
            raise ConfigError("axes: need 1 or 2 swept parameters", key="axis1")
        if len({a.name for a in axes}) != len(axes):
            raise ConfigError("axes: swept parameter names must be distinct", key="axis2")
        object.__setattr__(self, "axes", axes)
        outs = tuple(sorted(set(self.outputs), key=OUTPUT_FLAGS.index)) if all(
            o in OUTPUT_FLAGS for o in self.outputs) else None
        if outs is None:
            bad = [o for o in self.outputs if o not in OUTPUT_FLAGS]
            raise ConfigError(f"outputs: unknown flag(s) {bad}; expected {OUTPUT_FLAGS}", key="outputs")
        object.__setattr__(self, "outputs", outs)
        if not self.point_budget > 0:
            raise ConfigError("point_budget must be > 0", key="point_budget")
        object.__setattr__(self, "point_budget", float(self.point_budget))
        if self.plan.steady_samples < MIN_SAMPLES:
            raise ConfigError(
                f"t_total: steady window would hold {self.plan.steady_samples} samples, "
                f"need at least {MIN_SAMPLES}", key="t_total")

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(a.count for a in self.axes)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def grid_index(self, index: int) -> Tuple[int, ...]:
        """Row-major unravel: the last axis varies fastest."""
        return tuple(int(i) for i in np.unravel_index(index, self.shape))

    def coords(self, index: int) -> Dict[str, float]:
        return {a.label: float(a.values()[i]) for a, i in zip(self.axes, self.grid_index(index))}

    def setup_at(self, index: int) -> CircuitSetup:
        vals = {a.name: float(a.physical()[i]) for a, i in zip(self.axes, self.grid_index(index))}
        return self.base.with_values(**vals)

    def spec_hash(self) -> str:
        text = json.dumps(sweep_spec_to_mapping(self), sort_keys=True, default=repr)
        return hashlib.sha256(text.encode("utf-8")).hexdigest()


SWEEP_KEYS = ("axis1", "axis2", "outputs", "point_budget")


def sweep_spec_from_mapping(mapping: Mapping[str, object]) -> SweepSpec:
    """Build a spec from the flat config dialect.

    ``axis1 = J, 0, 0.11, 12`` and ``axis2 = theta_pi, -1, 1, 21`` name the
    axes; ``outputs`` is a comma list of flags; everything else is a
    circuit, plan or classifier key.
    """
    allowed = set(SWEEP_KEYS) | set(PLAN_KEYS) | set(THRESHOLD_KEYS)
    circuit = {k: v for k, v in mapping.items() if k not in allowed}
    base = setup_from_mapping(circuit)
    if "axis1" not in mapping:
        raise ConfigError("axis1: a sweep needs at least one axis", key="axis1")
    axes = [Axis.parse(mapping["axis1"], "axis1")]
    if "axis2" in mapping:
        axes.append(Axis.parse(mapping["axis2"], "axis2"))
    plan = plan_from_mapping(mapping)
    seed = None
    if "seed" in mapping and str(mapping["seed"]).strip().lower() not in ("", "none"):
        try:
            seed = int(mapping["seed"])
        except ValueError:
            raise ConfigError(f"seed: expected an integer, got {mapping['seed']!r}", key="seed") from None
    outputs = ("classification", "peaks")
    if "outputs" in mapping:
        outputs = tuple(s.strip() for s in str(mapping["outputs"]).split(",") if s.strip())
    budget = 120.0
    if "point_budget" in mapping:
        try:
            budget = float(mapping["point_budget"])
        except ValueError:
            raise ConfigError("point_budget: expected a number", key="point_budget") from None
    return SweepSpec(base, tuple(axes), plan, outputs, thresholds_from_mapping(mapping), seed, budget)


def sweep_spec_to_mapping(spec: SweepSpec) -> Dict[str, object]:
    m: Dict[str, object] = setup_to_mapping(spec.base, pi_units=True)
    for i, a in enumerate(spec.axes, 1):
        m[f"axis{i}"] = a.format()
    m.update(plan_to_mapping(spec.plan))
    m.update(thresholds_to_mapping(spec.thresholds))
    m["outputs"] = ", ".join(spec.outputs)
    m["point_budget"] = spec.point_budget
    m["seed"] = "none" if spec.seed is None else spec.seed
    return m


# -- one grid point ---------------------------------------------------------


def _downsample(f: np.ndarray, p: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Keep ``f <= SPECTRUM_F_MAX`` and block-sum to at most 4096 bins."""
    keep = f <= SPECTRUM_F_MAX
    f, p = f[keep], p[keep]
    block = max(1, math.ceil(f.size / SPECTRUM_MAX_BINS))
    if block > 1:
        n = f.size // block * block
        f = f[:n].reshape(-1, block).mean(axis=1)
        p = p[:n].reshape(-1, block, p.shape[1]).sum(axis=1)
    return f, p


def evaluate_point(spec: SweepSpec, index: int) -> Dict[str, object]:
    """Integrate, analyze and classify one grid point.

    Never raises for numerical trouble: divergence and time-outs become the
    states ``Diverged`` and ``TimedOut`` in the returned record.
    """
    setup = spec.setup_at(index)
    rec: Dict[str, object] = {"index": index, "grid": list(spec.grid_index(index)), "coords": spec.coords(index)}
    plan = spec.plan
    if spec.seed is not None:
        plan = replace(plan, initial=initial_state(setup.config, spec.seed))
    try:
        traj = integrate(plan, setup.config, setup.coupling(), deadline=time.monotonic() + spec.point_budget)
    except (DivergenceError, StepSizeError) as exc:
        rec.update(state="Diverged", error=str(exc))
        return rec
    except IntegrationTimeout as exc:
        rec.update(state="TimedOut", error=str(exc))
        return rec
    window = steady_window(traj, plan.discard_fraction)
    spectra = power_spectrum(window)
    cls = classify(spectra, window, spec.thresholds)
    full = cls.to_record()
    rec.update(
        state=cls.state,
        sync_frequency=cls.sync_frequency,
        members=list(cls.members),
        subharmonic_order=cls.subharmonic_order,
        reference=cls.reference,
        dead=list(cls.dead),
        fundamentals=list(cls.fundamentals),
        error=None,
    )
    if "peaks" in spec.outputs:
        rec["peaks"] = [pl[:TOP_PEAKS] for pl in full["peaks"]]
    if "spectrogram" in spec.outputs:
        f, p = _downsample(spectra.f_over_f0, spectra.power)
        rec["spectrum"] = {"f_over_f0": f.tolist(), **{s: p[:, k].tolist() for k, s in enumerate(INTENSITY)}}
    return rec


# -- result container -------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SweepResult:
    """One record per grid point, in row-major order."""

    spec: SweepSpec
    records: Tuple[Dict[str, object], ...]

    def __post_init__(self):
        idx = [r["index"] for r in self.records]
        if idx != list(range(self.spec.size)):
            raise ValueError("records must cover every grid point exactly once, in row-major order")

    def __len__(self):
        return len(self.records)

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.spec.shape

    def axis_values(self) -> List[np.ndarray]:
        return [a.values() for a in self.spec.axes]

    def states(self) -> np.ndarray:
        return np.array([r["state"] for r in self.records], dtype=object).reshape(self.shape)

    def field(self, name: str) -> np.ndarray:
        return np.array([r.get(name) for r in self.records], dtype=object).reshape(self.shape)

    def spectrogram(self) -> Tuple[np.ndarray, np.ndarray]:
        """``(f_over_f0, power)`` with power shaped ``grid + (bins, 3)``."""
        if "spectrogram" not in self.spec.outputs:
            raise ValueError("sweep was run without the spectrogram output")
        f = None
        cols = []
        for r in self.records:
            s = r.get("spectrum")
            if s is None:
                cols.append(None)
                continue
            f = np.asarray(s["f_over_f0"]) if f is None else f
            cols.append(np.column_stack([s[k] for k in INTENSITY]))
        if f is None:
            raise ValueError("no point produced a spectrum")
        blank = np.full((f.size, 3), np.nan)
        p = np.stack([blank if c is None else c for c in cols])
        return f, p.reshape(self.shape + p.shape[1:])


# -- persistence ------------------------------------------------------------

MANIFEST = "manifest.json"
CHECKPOINT = "checkpoint.log"
POINTS_JSONL = "points.jsonl"
POINTS_CSV = "points.csv"
SPECTRA_CSV = "spectra.csv"


def _fsync_append(path: Path, text: str) -> None:
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(text)
        fh.flush()
        os.fsync(fh.fileno())


def _read_checkpoint(path: Path) -> Tuple[Optional[str], List[int]]:
    if not path.exists():
        return None, []
    digest, done = None, []
    for line in path.read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("spec "):
            digest = line.split(None, 1)[1]
        elif line.isdigit():
            done.append(int(line))
    return digest, done


def completed_points(out_dir: Union[str, Path], spec: Optional[SweepSpec] = None) -> int:
    """Number of grid points already checkpointed in ``out_dir``.

    With ``spec``, raises :class:`CheckpointMismatch` when the checkpoint
    belongs to a different sweep.
    """
    digest, done = _read_checkpoint(Path(out_dir) / CHECKPOINT)
    if spec is not None and digest is not None and digest != spec.spec_hash():
        raise CheckpointMismatch(f"{out_dir}: checkpoint belongs to a different sweep spec")
    return len(set(done))


def _read_jsonl(path: Path) -> Dict[int, Dict[str, object]]:
    out: Dict[int, Dict[str, object]] = {}
    if not path.exists():
        return out
    for line in path.read_text(encoding="utf-8").splitlines():
        try:
            rec = json.loads(line)
        except json.JSONDecodeError:
            continue  # torn last line after a crash; that point is not checkpointed
        out[int(rec["index"])] = rec
    return out


def _write_manifest(out: Path, spec: SweepSpec, digest: str) -> None:
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "tool": "optosync",
        "version": __version__,
        "spec_hash": digest,
        "axes": [
            {"name": a.name, "label": a.label, "start": a.start, "stop": a.stop, "count": a.count,
             "pi_units": a.pi_units}
            for a in spec.axes
        ],
        "shape": list(spec.shape),
        "parameters": sweep_spec_to_mapping(spec),
    }
    (out / MANIFEST).write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    (out / "sweep.cfg").write_text(format_kv(sweep_spec_to_mapping(spec), header="resolved sweep spec"),
                                   encoding="utf-8")


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    if isinstance(x, (list, tuple)):
        return ";".join(_fmt(v) for v in x)
    return str(x)


def _write_points_csv(path: Path, result: SweepResult) -> None:
    labels = [a.label for a in result.spec.axes]
    head = ["index"] + [f"i{k + 1}" for k in range(len(labels))] + labels + [
        "state", "phase", "sync_frequency", "members", "subharmonic_order", "reference", "dead",
        "f1", "f2", "f3", "error"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(head)
        for r in result.records:
            fund = r.get("fundamentals") or [None, None, None]
            w.writerow([r["index"], *r["grid"], *(_fmt(r["coords"][k]) for k in labels), r["state"],
                        _phase_label(r["state"]), _fmt(r.get("sync_frequency")), _fmt(r.get("members")),
                        _fmt(r.get("subharmonic_order")), _fmt(r.get("reference")), _fmt(r.get("dead")),
                        *(_fmt(v) for v in fund), r.get("error") or ""])


def _write_spectra_csv(path: Path, result: SweepResult) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "f_over_f0", *(f"S_{s}" for s in INTENSITY)])
        for r in result.records:
            s = r.get("spectrum")
            if s is None:
                continue
            for k, f in enumerate(s["f_over_f0"]):
                w.writerow([r["index"], repr(f), *(repr(s[c][k]) for c in INTENSITY)])


def run_sweep(
    spec: SweepSpec,
    workers: int = 1,
    out_dir: Optional[Union[str, Path]] = None,
    progress: Optional[Callable[[int, int], None]] = None,
    max_points: Optional[int] = None,
) -> SweepResult:
    """Evaluate every grid point, resuming from ``out_dir`` if it has a checkpoint.

    ``progress(done, total)`` is called after each completed point.
    ``max_points`` stops after that many new points (the sweep is then
    incomplete and a :class:`RuntimeError` is raised after checkpointing);
    it exists to exercise interruption and resume.
    """
    if int(workers) != workers or workers < 1:
        raise ValueError("workers must be an integer >= 1")
    digest = spec.spec_hash()
    done: Dict[int, Dict[str, object]] = {}
    out = None
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        ck = out / CHECKPOINT
        old, indices = _read_checkpoint(ck)
        if old is not None and old != digest:
            raise CheckpointMismatch(f"{out}: checkpoint belongs to a different sweep spec")
        if old is None:
            _write_manifest(out, spec, digest)
            _fsync_append(ck, f"spec {digest}\n")
        saved = _read_jsonl(out / POINTS_JSONL)
        done = {i: saved[i] for i in indices if i in saved}

    pending = [i for i in range(spec.size) if i not in done]
    if max_points is not None:
        pending = pending[:max_points]
    total = spec.size

    def commit(rec):
        done[rec["index"]] = rec
        if out is not None:
            _fsync_append(out / POINTS_JSONL, json.dumps(rec) + "\n")
            _fsync_append(out / CHECKPOINT, f"{rec['index']}\n")
        if progress is not None:
            progress(len(done), total)

    if workers == 1 or len(pending) <= 1:
        for i in pending:
            commit(evaluate_point(spec, i))
    else:
        with ProcessPoolExecutor(max_workers=int(workers)) as pool:
            futs = [pool.submit(evaluate_point, spec, i) for i in pending]
            for fut in as_completed(futs):
                commit(fut.result())

    if len(done) < total:
        raise RuntimeError(f"sweep incomplete: {len(done)} of {total} points done")
    result = SweepResult(spec, tuple(done[i] for i in range(total)))
    if out is not None:
        _write_points_csv(out / POINTS_CSV, result)
        if "spectrogram" in spec.outputs:
            _write_spectra_csv(out / SPECTRA_CSV, result)
    return result


def load_result(out_dir: Union[str, Path]) -> SweepResult:
    """Rebuild a finished sweep from its results directory."""
    from .config import read_kv

    out = Path(out_dir)
    spec = sweep_spec_from_mapping(read_kv(out / "sweep.cfg"))
    digest, indices = _read_checkpoint(out / CHECKPOINT)
    if digest != spec.spec_hash():
        raise CheckpointMismatch(f"{out}: checkpoint does not match the stored spec")
    saved = _read_jsonl(out / POINTS_JSONL)
    missing = [i for i in range(spec.size) if i not in saved or i not in set(indices)]
    if missing:
        raise RuntimeError(f"{out}: sweep incomplete, {len(missing)} points missing")
    return SweepResult(spec, tuple(saved[i] for i in range(spec.size)))


# -- phase diagram ----------------------------------------------------------

_PHASE = {
    "Synchronized": "sync",
    "OscillationDeath": "death",
    "Diverged": "diverged",
    "TimedOut": "timeout",
}


def _phase_label(state: str) -> str:
    # two-region convention: everything that is not full synchronization is
    # "unsync", apart from the diagnostic categories
    return _PHASE.get(state, "unsync")


@dataclass(frozen=True, eq=False)
class PhaseDiagram:
    axes: Tuple[Axis, Axis]
    labels: np.ndarray  # (count1, count2) strings

    def cell(self, x: float, y: float) -> str:
        """Label of the grid cell nearest to ``(x, y)`` in axis units."""
        i = int(np.argmin(np.abs(self.axes[0].values() - x)))
        j = int(np.argmin(np.abs(self.axes[1].values() - y)))
        return str(self.labels[i, j])

    def counts(self) -> Dict[str, int]:
        return {k: int(np.sum(self.labels == k)) for k in PHASE_LABELS}

    def write_csv(self, path: Union[str, Path]) -> None:
        """Grid CSV: first row holds axis-2 values, first column axis-1 values."""
        a1, a2 = self.axes
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow([f"{a1.label}\\{a2.label}", *(repr(float(v)) for v in a2.values())])
            for v, row in zip(a1.values(), self.labels):
                w.writerow([repr(float(v)), *row])


def phase_diagram(result: SweepResult) -> PhaseDiagram:
    """Collapse a 2-D sweep to sync / unsync plus death, diverged, timeout."""
    if len(result.spec.axes) != 2:
        raise ValueError("phase_diagram needs a 2-D sweep")
    labels = np.array([_phase_label(r["state"]) for r in result.records], dtype=object).reshape(result.shape)
    return PhaseDiagram(result.spec.axes, labels)
