"""The shell pseudopotential basis: energy dependence, biorthogonality, a toy model.

1. The dressed scattering length and its pole near the reference energy.
2. A trap basis with shell interactions in s and p waves: <P_m|F_n> is the
   identity while <F_m|F_n> is not, markedly so for p waves.
3. The one-dimensional box toy, where everything is elementary.

    python demos/biorthogonal_basis.py
"""

import numpy as np

from deltashell.exactref import box_toy, exact_trap_spectrum
from deltashell.freespace import SquareWell, scattering_length_fn
from deltashell.trapbasis import (build_basis, dressed_beta, dressed_beta_poles,
                                  make_pseudopotential)

well = SquareWell(489.9, 0.1)
betas = {l: scattering_length_fn(well, l, -30.0, 100.0) for l in (0, 1)}

# 1. Fixing beta at E0 = 1 makes the p-wave pseudopotential strongly energy dependent.
for b0 in (-5.0, 1.0, 10.0):
    spec = make_pseudopotential(1, 0.05, 1.0, b0)
    poles = [round(float(0.5 * (a + b)), 5) for a, b in dressed_beta_poles(spec, -4.0, 8.0)]
    vals = dressed_beta(spec, np.array([0.0, 1.0, 2.0]))
    print(f"beta0={b0:5.1f}: dressed beta at E=0,1,2 -> {np.round(vals, 4)}, poles {poles}")

# 2. Basis at the working shell radius.
basis = build_basis(4, 0.05, 2.0, betas, E_cut=16.0)
S = basis.overlap_matrix()
G = basis.gram_matrix()
off = G - np.diag(np.diag(G))
print(f"\n{len(basis.states)} states; max |<P|F> - I| = {np.abs(S - np.eye(len(S))).max():.1e}")
for l in (0, 1):
    sel = basis.ls == l
    print(f"l={l}: energies {np.round(basis.energies[sel][:4], 4)}, "
          f"max |<F_m|F_n>| off-diagonal {np.abs(off[np.ix_(sel, sel)]).max():.1e}")
for l in (0, 1):
    print(f"exact square-well levels l={l}: {np.round(exact_trap_spectrum(well, l, 6.0, -20.0), 4)}")

# The s-wave non-orthogonality is a finite-shell effect and shrinks with r_s.
for r_s in (0.05, 0.01, 1e-3):
    G0 = build_basis(0, r_s, 2.0, {0: betas[0]}, E_cut=16.0).gram_matrix()
    print(f"r_s={r_s:g}: s-wave max off-diagonal {np.abs(G0 - np.diag(np.diag(G0))).max():.1e}")

# A function that vanishes smoothly at the shell is reconstructed from the basis.
h = basis.r ** 7 * np.exp(-0.5 * basis.r ** 2)
print(f"p-wave reconstruction error of r^7 exp(-r^2/2): {basis.completeness_error(1, h):.1e}")

# 3. Box toy: F keeps its value across the shell, P jumps by (1 + u).
toy = box_toy(u=1.0, r_s=0.3, L=1.0, n_states=5)
F, P = toy.evaluate([0.3 - 1e-12, 0.3])
print(f"\nbox toy energies {np.round(toy.energies, 4)}")
print(f"P(r_s+)/P(r_s-) = {np.round(P[:, 1] / P[:, 0], 10)}")
