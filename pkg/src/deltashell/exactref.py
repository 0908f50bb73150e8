"""Exact reference solutions: square well inside a harmonic trap, and a box toy.

The square well is solved by matching, at R0, the trap solution regular at
the origin (energy shifted by the well depth) to the trap solution that
decays at infinity.  Both sides are confluent hypergeometric functions, so
no pseudopotential approximation enters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize, special

from .specfun import _u_connection, kummer_m, kummer_u_log
from .trapbasis import (BasisState, BiorthogonalBasis, _oscillator_values, energy_to_nu,
                        nu_to_energy, radial_quadrature)


# ---------------------------------------------------------------------------
# Square well in the trap


def _inside(well, l, E, r):
    """Regular solution inside the well and its r-derivative."""
    nu = energy_to_nu(np.asarray(E, dtype=float) + well.V0, l)
    b = l + 1.5
    z = r * r
    m = kummer_m(-nu, b, z).value
    mp = kummer_m(1.0 - nu, b + 1.0, z).value * (-nu / b)
    pre = r ** l * math.exp(-0.5 * z)
    return pre * m, pre * ((l / r - r) * m + 2.0 * r * mp)


def _outside_scaled(l, E, r):
    """Decaying trap solution and derivative at r, times a positive E-dependent factor.

    The factor is continuous in E, so the matching function built from these
    values changes sign only at eigenvalues.
    """
    a = -energy_to_nu(np.asarray(E, dtype=float), l)
    b = l + 1.5
    z = r * r
    u_m, u_l, _ = _u_connection(a, b, z)
    v_m, v_l, _ = _u_connection(a + 1.0, b + 1.0, z)
    pre = r ** l * math.exp(-0.5 * z)
    with np.errstate(over="ignore", invalid="ignore"):
        ratio = np.exp(v_l - u_l)
    val = pre * u_m
    der = pre * ((l / r - r) * u_m + 2.0 * r * (-a) * v_m * ratio)
    return val, der


def _mismatch(well, l, E):
    fi, fpi = _inside(well, l, E, well.R0)
    fo, fpo = _outside_scaled(l, E, well.R0)
    # normalise so neither side dominates through its overall size
    return (fpi * fo - fpo * fi) / (np.abs(fi * fo) + np.abs(fpi * fo) / 10 + 1e-300)


def exact_trap_spectrum(well, l, E_max, E_min=None, step=0.01):
    """Eigenvalues of trap plus square well in channel l on [E_min, E_max], ascending.

    ``E_min`` defaults to -V0, the bottom of the well.
    """
    E_min = -well.V0 + 1e-9 if E_min is None else max(E_min, -well.V0 + 1e-9)
    n = max(int(math.ceil((E_max - E_min) / step)), 2) + 1
    grid = np.linspace(E_min, E_max, n)
    m = _mismatch(well, l, grid)
    roots = []
    for i in np.flatnonzero(np.sign(m[:-1]) * np.sign(m[1:]) < 0):
        fn = lambda e: float(_mismatch(well, l, e))
        roots.append(optimize.brentq(fn, grid[i], grid[i + 1], xtol=1e-13, rtol=1e-15))
    return np.array(roots)


@dataclass
class ExactTrapState:
    """One eigenstate of trap plus square well, normalised to unit L2 norm."""

    l: int
    E: float
    R0: float
    V0: float
    inner_amp: float
    outer_amp: float

    def evaluate(self, r):
        r = np.atleast_1d(np.asarray(r, dtype=float))
        out = np.empty_like(r)
        ins = r < self.R0
        if np.any(ins):
            nu = energy_to_nu(self.E + self.V0, self.l)
            rr = r[ins]
            out[ins] = self.inner_amp * rr ** self.l * np.exp(-0.5 * rr * rr) * \
                kummer_m(-nu, self.l + 1.5, rr * rr).value
        if np.any(~ins):
            rr = r[~ins]
            lu, su = kummer_u_log(-energy_to_nu(self.E, self.l), self.l + 1.5, rr * rr)
            lu0, su0 = kummer_u_log(-energy_to_nu(self.E, self.l), self.l + 1.5, self.R0 ** 2)
            shape = su * su0[0] * np.exp(lu - lu0[0]) * (rr / self.R0) ** self.l * \
                np.exp(-0.5 * (rr * rr - self.R0 ** 2))
            out[~ins] = self.outer_amp * shape
        return out


def exact_state(well, l, E, quadrature):
    """Normalised :class:`ExactTrapState` at eigenvalue E."""
    fi, _ = _inside(well, l, E, well.R0)
    st = ExactTrapState(l, float(E), well.R0, well.V0, 1.0, float(fi))
    r, w = quadrature
    vals = st.evaluate(r)
    nrm = math.sqrt(np.sum(w * r * r * vals * vals))
    st.inner_amp /= nrm
    st.outer_amp /= nrm
    return st


def exact_basis(well, l_max, E_cut, *, m=0, interacting_l=(0, 1), E_min=-20.0,
                n_per_l=None, quadrature=None):
    """Orthonormal basis of the trap with the square well in ``interacting_l``.

    Channels outside ``interacting_l`` are left as pure oscillator states.
    The result has the same layout as a pseudopotential basis (with P = F),
    so the same matrix builders apply.
    """
    r_max = math.sqrt(2.0 * max(E_cut, 1.0)) + 6.0
    if quadrature is None:
        quadrature = radial_quadrature([well.R0], r_max)
    r, w = quadrature
    wt = w * r * r
    states, Fs = [], []
    for l in range(abs(m), l_max + 1):
        want = None
        if isinstance(n_per_l, dict):
            want = n_per_l.get(l)
        elif n_per_l is not None:
            want = int(n_per_l)
        if l in interacting_l:
            e_hi = E_cut if want is None else max(E_cut, float(nu_to_energy(want + 2, l)))
            Es = exact_trap_spectrum(well, l, e_hi, E_min=E_min)
            Es = Es[Es <= E_cut] if want is None else Es[:want]
            for k, E in enumerate(Es):
                st = exact_state(well, l, E, quadrature)
                F = st.evaluate(r)
                nu = float(energy_to_nu(E, l))
                states.append(BasisState(l, m, k, nu, float(E), st.outer_amp, st.inner_amp,
                                         1.0, True, st))
                Fs.append(F)
        else:
            n_max = int(math.floor((E_cut - l - 1.5) / 2.0 + 1e-12)) if want is None else want - 1
            for n in range(n_max + 1):
                F = _oscillator_values(l, n, r)
                nF = math.sqrt(np.sum(wt * F * F))
                states.append(BasisState(l, m, n, float(n), float(nu_to_energy(n, l)),
                                         1.0 / nF, 1.0 / nF, 1.0 / nF, False, None))
                Fs.append(F / nF)
    from .trapbasis import _sort_key
    order = sorted(range(len(states)), key=lambda i: _sort_key(states[i]))
    states = [states[i] for i in order]
    F = np.array([Fs[i] for i in order])
    return BiorthogonalBasis(math.nan, int(l_max), float(well.R0), int(m), states, r, w,
                             F, F.copy(), E_cut=float(E_cut), meta={"kind": "exact"})


# ---------------------------------------------------------------------------
# Box toy


@dataclass
class BoxToyResult:
    """Eigenpairs of -1/2 d^2/dr^2 in [0, L] with a shell u delta(r - r_s) d/dr.

    F is continuous with (1+u) F'(r_s+) = F'(r_s-); P has a continuous
    derivative with P(r_s+) = (1+u) P(r_s-).  Both vanish at 0 and L.
    Amplitudes are biorthonormal: int P_m F_n dr = delta_mn, |F_n| = 1.
    """

    u: float
    r_s: float
    L: float
    k: np.ndarray
    a_in: np.ndarray       # F = a_in sin(k r) inside
    b_out: np.ndarray      # F = b_out sin(k (L - r)) outside
    p_in: np.ndarray       # P = p_in sin(k r) inside
    p_out: np.ndarray      # P = p_out sin(k (L - r)) outside

    @property
    def energies(self):
        return 0.5 * self.k ** 2

    def evaluate(self, r):
        """F and P for all states, shapes (n_states, len(r))."""
        r = np.atleast_1d(np.asarray(r, dtype=float))
        k = self.k[:, None]
        ins = r[None, :] < self.r_s
        s_out = np.sin(k * (self.L - r[None, :]))
        F = np.where(ins, self.a_in[:, None] * np.sin(k * r[None, :]), self.b_out[:, None] * s_out)
        P = np.where(ins, self.p_in[:, None] * np.sin(k * r[None, :]), self.p_out[:, None] * s_out)
        return F, P

    def derivatives(self, r):
        r = np.atleast_1d(np.asarray(r, dtype=float))
        k = self.k[:, None]
        ins = r[None, :] < self.r_s
        c_out = -k * np.cos(k * (self.L - r[None, :]))
        dF = np.where(ins, k * self.a_in[:, None] * np.cos(k * r[None, :]), self.b_out[:, None] * c_out)
        dP = np.where(ins, k * self.p_in[:, None] * np.cos(k * r[None, :]), self.p_out[:, None] * c_out)
        return dF, dP

    def quadrature(self, nodes=64):
        """Gauss-Legendre nodes and weights on [0, L] split at r_s."""
        panels = max(4, int(self.k.max() * self.L / 2.0) + 4)
        return radial_quadrature([self.r_s], self.L, panel_width=self.L / panels, nodes=nodes)

    def overlap(self):
        r, w = self.quadrature()
        F, P = self.evaluate(r)
        return (P * w) @ F.T


def box_determinant(k, u, r_s, L):
    """Matching determinant whose positive zeros are the box-toy wave numbers."""
    k = np.asarray(k)
    return (1.0 + u) * np.sin(k * r_s) * np.cos(k * (L - r_s)) + np.cos(k * r_s) * np.sin(k * (L - r_s))


def box_toy(u, r_s, L, n_states):
    """Lowest ``n_states`` biorthonormal eigenpairs of the box toy.

    Parameters
    ----------
    u : float
        Shell strength, must exceed -1.
    """
    if not u > -1.0:
        raise ValueError("u must exceed -1")
    if not 0 < r_s < L:
        raise ValueError("need 0 < r_s < L")
    ks = []
    k_hi = (n_states + 2) * math.pi / L
    while len(ks) < n_states:
        grid = np.linspace(1e-9, k_hi, 200 * (n_states + 2) + 1)
        d = box_determinant(grid, u, r_s, L)
        ks = []
        for i in np.flatnonzero(np.sign(d[:-1]) * np.sign(d[1:]) < 0):
            ks.append(optimize.brentq(box_determinant, grid[i], grid[i + 1],
                                      args=(u, r_s, L), xtol=1e-15, rtol=1e-15))
        k_hi *= 2
    k = np.array(ks[:n_states])
    s_in = np.sin(k * r_s)
    s_out = np.sin(k * (L - r_s))
    # continuity of F fixes a_in / b_out; when sin(k r_s) = 0 use the derivative condition
    small = np.abs(s_in) < 1e-8
    a_in = np.where(small, -(1.0 + u) * np.cos(k * (L - r_s)) / np.where(small, np.cos(k * r_s), 1.0),
                    s_out / np.where(small, 1.0, s_in))
    b_out = np.ones_like(k)
    # adjoint: same outside, value divided by (1 + u) inside
    p_in = a_in / (1.0 + u)
    res = BoxToyResult(float(u), float(r_s), float(L), k, a_in, b_out, p_in, b_out.copy())
    r, w = res.quadrature()
    F, _ = res.evaluate(r)
    nF = np.sqrt((F * F) @ w)
    for arr in (res.a_in, res.b_out, res.p_in, res.p_out):
        arr /= nF
    F, P = res.evaluate(r)
    ov = np.sum(P * F * w, axis=1)
    res.p_in /= ov
    res.p_out /= ov
    return res
