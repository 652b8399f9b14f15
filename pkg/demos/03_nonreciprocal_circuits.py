#!/usr/bin/env python3
"""One-way couplings from interfering coherent and line-mediated paths.

Adding a direct coupler g e^{i phi_c} next to the line's -iJ e^{i theta}
makes the two directions of a link unequal.  Choosing g = J and
phi_c = theta + pi/2 cancels one direction exactly, leaving 2J|cos theta|
in the other.  The special circuits use this to build output-port,
input-port and fully unidirectional rings.  With resonator 3 acting as an
output port, resonators 1 and 2 can lock to each other at a subharmonic of
resonator 3's rhythm.

    $ python3 demos/03_nonreciprocal_circuits.py

About 10 s.
"""

import math

import numpy as np

from optosync.analysis import classify, power_spectrum
from optosync.config import preset
from optosync.dynamics import SimPlan, integrate, steady_window
from optosync.model import (
    CoherentCoupling,
    EnvCoupling,
    build_coupling_matrix,
    input_port_circuit,
    nonreciprocity,
    output_port_circuit,
    unidirectional_circuit,
)

np.set_printoptions(precision=3, suppress=True)

J, theta = 0.2, 0.3 * math.pi
K = build_coupling_matrix(EnvCoupling(J, theta, 0.0), CoherentCoupling((J, 0, 0), (theta + 0.5 * math.pi, 0, 0)))
fwd, back = nonreciprocity(K, (1, 2))
print(f"g1 = J, phi1 = theta + pi/2: |K12| = {fwd:.2e}, |K21| = {back:.4f} (2J|cos theta| = {2 * J * abs(math.cos(theta)):.4f})")

env = EnvCoupling(0.2, -0.77 * math.pi, 0.3 * math.pi)
for name, K in (("output port", output_port_circuit(env, 0.1, 0.6 * math.pi)),
                ("input port", input_port_circuit(env, 0.1, 0.6 * math.pi)),
                ("unidirectional", unidirectional_circuit(env))):
    print(f"\n{name}: |K| (row receives from column)\n{np.abs(K.K)}")

setup = preset("fig6d_pointD")
plan = SimPlan()
window = steady_window(integrate(plan, setup.config, setup.coupling()), plan.discard_fraction)
cls = classify(power_spectrum(window), window)
print(f"\noutput-port circuit at theta = -0.77 pi: {cls.state}, members {cls.members}, "
      f"f = {cls.sync_frequency:.4f} f0 = resonator {cls.reference} / {cls.subharmonic_order}")
