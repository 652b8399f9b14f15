#!/usr/bin/env python3
"""Spectrogram of the circuit versus the line coupling J.

At weak coupling the three rhythms barely move.  As J grows they mix into
sidebands spaced by the mechanical detuning Delta, and beyond a threshold
a single common line survives.  The scan is a resumable sweep: interrupt
it and run again to pick up where it stopped.

    $ python3 demos/02_coupling_scan.py

Sweep records keep only the five strongest lines per signal, so the
reported spacing can come out as a multiple of Delta (= 0.005 f0).

About a minute on one core.  Results land in ./demo_out/j_scan/.
"""

from optosync.analysis import PeakList, Peak, sideband_spacing
from optosync.config import preset
from optosync.dynamics import SimPlan
from optosync.sweep import Axis, SweepSpec, run_sweep

spec = SweepSpec(
    preset("fig3a"),
    (Axis("J", 0.0, 0.11, 12),),
    SimPlan(),
    outputs=("classification", "peaks", "spectrogram"),
)
result = run_sweep(spec, out_dir="demo_out/j_scan", progress=lambda d, t: print(f"  {d}/{t}", end="\r"))
print()

for rec in result.records:
    peaks = rec["peaks"][0]
    near = PeakList(tuple(Peak(p["frequency"], p["power"], p["prominence"]) for p in peaks
                          if 0.9 < p["frequency"] < 1.1), float("nan"))
    d = sideband_spacing(near)
    extra = f", sideband spacing {d:.4f}" if d else ""
    f = rec["sync_frequency"]
    f = f" at {f:.4f} f0" if f else ""
    print(f"J={rec['coords']['J']:.3f}: {rec['state']}{f}{extra}")

f, power = result.spectrogram()
print(f"spectrogram: {power.shape[0]} J values x {f.size} frequency bins (demo_out/j_scan/spectra.csv)")
