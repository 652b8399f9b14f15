#!/usr/bin/env python3
"""Checking the eliminated environment against an explicit line.

The effective model replaces the transmission line by on-site damping
2 pi J^2 omega0 and cross couplings whose phase is the propagation phase
between resonators.  Here the line is kept as two bands of discrete modes
(left and right movers), the linear resonators are integrated together
with it, and the result is compared with the effective model.

    $ python3 demos/04_bath_oracle.py          # small line, a few seconds
    $ python3 demos/04_bath_oracle.py --full   # 4001 modes per direction, ~2 min
"""

import math
import sys

from optosync.bath import BathSpec, compare_models, fitted_decay_rate, phase_sign_check

full = "--full" in sys.argv
rate = 0.05
J = math.sqrt(rate / (2 * math.pi * math.pi))  # omega0 = pi
spec = BathSpec((J, J, 0.0), (0.0, 0.5 * math.pi, math.pi),
                band_halfwidth=200 * rate if full else 4.0, n_modes=4001 if full else 401)
print(f"{spec.n_modes} modes per direction over +-{spec.band_halfwidth:g}, revival after tau = {spec.revival_time:.0f}")

rep = compare_models(spec, horizon=5 / rate)
print(f"full vs effective: max discrepancy {rep.max_error:.2%} over gamma tau <= 5")

fit = fitted_decay_rate(spec, 1)
print(f"single-resonator decay rate {fit:.5f} (effective model: {rate})")

sign = phase_sign_check(spec, (1, 2), horizon=60.0)
k0 = complex(*sign["theta"]["K_fit"])
k1 = complex(*sign["theta_plus_pi"]["K_fit"])
print(f"fitted K12 at theta: {k0:.4f}, at theta + pi: {k1:.4f} -> sign flipped: {sign['flipped']}")
