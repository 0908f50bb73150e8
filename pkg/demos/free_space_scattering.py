"""Free-space scattering off the square well, and why the test depth matters.

Prints the phase shifts and energy-dependent scattering lengths of the
square well used throughout the package, checks them against a Numerov
integration, and lists bound states for two nearby depths.

    python demos/free_space_scattering.py
"""

import math

import numpy as np

from deltashell.freespace import (SquareWell, bound_states, ode_oracle_phase_shift, phase_shift,
                                  scattering_length, scattering_length_poles)

well = SquareWell(489.9, 0.1)

# Phase shifts from the closed-form matching, with the Numerov value alongside.
# The Numerov value is only defined modulo pi; it is moved to the same branch.
print("l    E      delta (analytic)   delta (Numerov)    beta(E)")
for l in (0, 1):
    for E in (0.5, 2.0, 6.0, 14.0):
        d = phase_shift(well, l, E)
        d_num, _ = ode_oracle_phase_shift(well, l, E)
        d_num += math.pi * round((d - d_num) / math.pi)
        print(f"{l}  {E:5.1f}   {d: .12f}   {d_num: .12f}   {scattering_length(well, l, E): .6f}")

# The p-wave scattering length has a shape-resonance pole just above threshold.
poles = scattering_length_poles(well, 1, -5.0, 5.0)
print("\np-wave beta poles in [-5, 5]:", [round(0.5 * (a + b), 5) for a, b in poles])

# Near threshold tan(delta_l) ~ k^(2l+1).
k = np.geomspace(1e-3, 1e-2, 6)
for l in (0, 1):
    td = [abs(math.tan(phase_shift(well, l, 0.5 * kk * kk))) for kk in k]
    print(f"threshold slope l={l}: {np.polyfit(np.log(k), np.log(td), 1)[0]:.5f}")

# Bound states: the p-wave level near E = -2 needs the slightly deeper well.
for V0 in (489.9, 498.9):
    w = SquareWell(V0, 0.1)
    print(f"\nV0={V0}: s bound states {np.round(bound_states(w, 0), 3).tolist()}, "
          f"p bound states {np.round(bound_states(w, 1), 4).tolist()}")
