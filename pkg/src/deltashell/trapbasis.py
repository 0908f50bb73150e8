"""Delta-shell pseudopotential in an isotropic harmonic trap.

Trap units (hbar = mu = omega = 1).  In channel l the two canonical trap
solutions at energy E = 2 nu + l + 3/2 are

    f(r) = r^l e^(-r^2/2) M(-nu, l+3/2, r^2)                    ~  r^l
    g(r) = -D r^-(l+1) e^(-r^2/2) M(-nu-l-1/2, 1/2-l, r^2)     ~ -D / r^(l+1)

with D = (2l+1)!! (2l-1)!!, so that f + beta g reproduces the free-space
combination j_l + beta k^(2l+1) n_l up to a common factor.

A shell at radius ``r_s`` tuned to the scattering length ``beta0`` at the
reference energy ``E0`` imposes a continuous right eigenfunction F with the
derivative jump

    F'(r_s+) - F'(r_s-) = kappa (c2 F(r_s) + F'(r_s+)),
    kappa = -beta0 g(r_s)/f(r_s),   c2 = -g'(r_s)/g(r_s)

(both evaluated at E0).  The adjoint eigenfunction P obeys
P(r_s+) = (1 - kappa) P(r_s-) with continuous derivative.  Outside the shell
F = P, which makes {F_n, P_n} biorthogonal.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, special

from .specfun import (double_factorial, kummer_m, kummer_u_log, log_abs_gamma)

#: Acceptance threshold of the scale-free eigenvalue residual.
RESIDUAL_TOL = 1e-8
#: Acceptance threshold of the shell jump condition at an eigenpair.
JUMP_TOL = 1e-8


class ConsistencyError(ArithmeticError):
    """An eigenpair fails its defining equations beyond tolerance."""


class IndeterminateError(ArithmeticError):
    """A quantity is evaluated exactly at one of its poles."""


# ---------------------------------------------------------------------------
# Trap solutions


def trap_d_factor(l):
    return double_factorial(2 * l + 1) * double_factorial(2 * l - 1)


def energy_to_nu(E, l):
    return 0.5 * (np.asarray(E, dtype=float) - l - 1.5)


def nu_to_energy(nu, l):
    return 2.0 * np.asarray(nu, dtype=float) + l + 1.5


def regular_trap(l, nu, r):
    """f and f' at radius r (arrays broadcast over nu and r)."""
    nu = np.asarray(nu, dtype=float)
    r = np.asarray(r, dtype=float)
    b = l + 1.5
    z = r * r
    m = kummer_m(-nu, b, z).value
    mp = kummer_m(1.0 - nu, b + 1.0, z).value * (-nu / b)
    pre = r ** l * np.exp(-0.5 * z)
    f = pre * m
    fp = pre * ((l / r - r) * m + 2.0 * r * mp) if l > 0 else pre * (-r * m + 2.0 * r * mp)
    return f, fp


def irregular_trap(l, nu, r):
    """g and g' at radius r > 0."""
    nu = np.asarray(nu, dtype=float)
    r = np.asarray(r, dtype=float)
    a2 = -nu - l - 0.5
    b2 = 0.5 - l
    z = r * r
    m = kummer_m(a2, b2, z).value
    mp = kummer_m(a2 + 1.0, b2 + 1.0, z).value * (a2 / b2)
    pre = -trap_d_factor(l) * r ** (-(l + 1)) * np.exp(-0.5 * z)
    g = pre * m
    gp = pre * ((-(l + 1) / r - r) * m + 2.0 * r * mp)
    return g, gp


def trap_wronskian(l, r):
    """f g' - f' g, which equals D (2l+1) / r^2 for every energy."""
    return trap_d_factor(l) * (2 * l + 1) / np.asarray(r, dtype=float) ** 2


def decaying_trap_log(l, nu, r):
    """log|phi| and sign of phi(r) = r^l e^(-r^2/2) U(-nu, l+3/2, r^2).

    Also returns phi'/phi.  phi is the solution that decays at infinity.
    """
    r = np.atleast_1d(np.asarray(r, dtype=float))
    a = -float(nu)
    b = l + 1.5
    z = r * r
    lu, su = kummer_u_log(a, b, z)
    lu1, su1 = kummer_u_log(a + 1.0, b + 1.0, z)
    logphi = l * np.log(r) - 0.5 * z + lu
    # U'(z) = -a U(a+1, b+1, z)
    ratio = -a * su * su1 * np.exp(lu1 - lu)
    dlog = l / r - r + 2.0 * r * ratio
    return logphi, su, dlog


def busch_prefactor(l):
    """(-1)^l (2/pi) [Gamma(l+3/2)/(2l+1)!!]^2."""
    return (-1) ** l * (2.0 / math.pi) * (math.gamma(l + 1.5) / double_factorial(2 * l + 1)) ** 2


def busch_rhs(nu, l):
    """Scattering length implied by the decaying trap solution at energy index nu.

    Equals busch_prefactor(l) * Gamma(-nu-l-1/2) / Gamma(-nu).  The decaying
    solution r^l e^(-r^2/2) U(-nu, l+3/2, r^2) is proportional to
    f + busch_rhs(nu, l) g.
    """
    from .specfun import gamma_ratio
    return busch_prefactor(l) * gamma_ratio(nu, l + 0.5)


# ---------------------------------------------------------------------------
# Pseudopotential


@dataclass(frozen=True)
class PseudopotentialSpec:
    """Shell pseudopotential for one partial wave, tuned at energy ``E0``."""

    l: int
    r_s: float
    E0: float
    beta0: float
    inv_beta0: float
    f0: float
    f0p: float
    g0: float
    g0p: float

    @property
    def c1(self):
        """-g/f at the shell, at E0."""
        return -self.g0 / self.f0

    @property
    def c2(self):
        """-g'/g at the shell, at E0."""
        return -self.g0p / self.g0

    @property
    def kappa(self):
        """Coefficient of the derivative jump; equals beta0 * c1."""
        if self.beta0 == 0.0:
            return 0.0
        return self.c1 / self.inv_beta0 if self.inv_beta0 != 0 else math.copysign(math.inf, self.c1)

    @property
    def adjoint_inside_factor(self):
        """P(r_s-) / P(r_s+) = 1 / (1 - kappa), finite also when beta0 is infinite."""
        if self.beta0 == 0.0:
            return 1.0
        d = self.inv_beta0 - self.c1
        if d == 0.0:
            raise ConsistencyError("adjoint is singular: kappa = 1")
        return self.inv_beta0 / d


def make_pseudopotential(l, r_s, E0, beta):
    """Build a :class:`PseudopotentialSpec`.

    ``beta`` is a number (the scattering length at E0) or an object with
    ``__call__(E)`` and ``inverse(E)`` such as
    :class:`~deltashell.freespace.ScatteringLengthFn`; the inverse keeps the
    construction finite at poles of the scattering length.
    """
    if l < 0 or int(l) != l:
        raise ValueError("l must be a non-negative integer")
    if not r_s > 0:
        raise ValueError("r_s must be positive")
    if r_s > 0.3:
        warnings.warn("shell radius is large; energy-independent limit is poor", stacklevel=2)
    if callable(beta):
        inv = float(beta.inverse(E0))
        beta0 = 1.0 / inv if inv != 0 else math.inf
    else:
        beta0 = float(beta)
        inv = 1.0 / beta0 if beta0 != 0 else math.inf
        if math.isinf(beta0):
            inv = 0.0
    nu0 = energy_to_nu(E0, l)
    f0, f0p = (float(v) for v in regular_trap(l, nu0, r_s))
    g0, g0p = (float(v) for v in irregular_trap(l, nu0, r_s))
    if f0 == 0.0 or g0 == 0.0:
        raise ValueError("shell radius sits on a node of the trap solutions at E0")
    return PseudopotentialSpec(l, float(r_s), float(E0), beta0, inv, f0, f0p, g0, g0p)


def _dressed_parts(spec, nu):
    """Numerator and denominator of the dressed scattering length, times f(r_s).

    Both are entire in nu; beta_tilde = num / den.
    """
    f, fp = regular_trap(spec.l, nu, spec.r_s)
    g, gp = irregular_trap(spec.l, nu, spec.r_s)
    num = f * (f * spec.g0p - fp * spec.g0)
    if spec.beta0 == 0.0:
        return np.zeros_like(num), np.ones_like(num)
    den = spec.inv_beta0 * spec.f0 * (f * gp - fp * g) + f * (spec.g0 * gp - g * spec.g0p)
    return num, den


def dressed_beta(spec, E):
    """Scattering length seen by the trap solutions at energy E.

    Equals ``beta0`` at E = E0.  Raises :class:`IndeterminateError` exactly at
    a pole; near one the result is large and finite.
    """
    num, den = _dressed_parts(spec, energy_to_nu(E, spec.l))
    if np.any(den == 0):
        raise IndeterminateError("dressed scattering length evaluated at its pole")
    out = num / den
    return float(out) if np.ndim(out) == 0 else out


def dressed_beta_poles(spec, E_min, E_max, n=4000):
    """Brackets [lo, hi] (width < 1e-10) of the poles of the dressed scattering length."""
    grid = np.linspace(E_min, E_max, n)
    _, den = _dressed_parts(spec, energy_to_nu(grid, spec.l))
    out = []
    for i in np.flatnonzero(np.sign(den[:-1]) * np.sign(den[1:]) < 0):
        fn = lambda e: float(_dressed_parts(spec, energy_to_nu(e, spec.l))[1])
        lo, hi = grid[i], grid[i + 1]
        flo = fn(lo)
        while hi - lo > 1e-10:
            mid = 0.5 * (lo + hi)
            fm = fn(mid)
            if fm == 0:
                lo = hi = mid
                break
            if np.sign(fm) == np.sign(flo):
                lo, flo = mid, fm
            else:
                hi = mid
        out.append((lo, hi))
    return out


def free_space_coefficients(l, E0, r_s):
    """Shell coefficients with free spherical waves in place of trap solutions.

    Returns ``(c1, c2)`` with c1 = -n_l(k r_s)/j_l(k r_s) and
    c2 = -k n_l'(k r_s)/n_l(k r_s).
    """
    k = math.sqrt(2.0 * E0)
    x = k * r_s
    j, n, jp, npr = (float(special.spherical_jn(l, x)), float(special.spherical_yn(l, x)),
                     float(special.spherical_jn(l, x, True)), float(special.spherical_yn(l, x, True)))
    return -n / j, -k * npr / n


def dressed_beta_free(l, r_s, E0, beta0, E):
    """Dressed scattering length in free space (no trap), for E, E0 > 0.

    Same construction as :func:`dressed_beta` with f = j_l(kr) and
    g = n_l(kr), so the result multiplies n_l and is not rescaled by
    k^(2l+1).
    """
    k0 = math.sqrt(2.0 * E0)
    k = np.sqrt(2.0 * np.asarray(E, dtype=float))

    def pair(kk):
        x = kk * r_s
        return (special.spherical_jn(l, x), kk * special.spherical_jn(l, x, True),
                special.spherical_yn(l, x), kk * special.spherical_yn(l, x, True))

    f0, f0p, g0, g0p = pair(k0)
    f, fp, g, gp = pair(k)
    num = f * g0p - fp * g0
    den = (1.0 / beta0) * (f0 / f) * (f * gp - fp * g) + (g0 * gp - g * g0p)
    out = num / den
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# Eigenvalues


def _busch_residual(spec, nu):
    """Pole-free residual of beta_tilde(E(nu)) = busch_rhs(nu).

    h = num / Gamma(-nu-l-1/2) - C den / Gamma(-nu), with both reciprocal
    gammas scaled by a common positive factor so that neither overflows.
    Returns ``(h, magnitude)`` where magnitude sums the absolute terms.
    """
    nu = np.asarray(nu, dtype=float)
    num, den = _dressed_parts(spec, nu)
    l1, s1 = log_abs_gamma(-nu - spec.l - 0.5)
    l2, s2 = log_abs_gamma(-nu)
    scale = np.minimum(l1, l2)
    with np.errstate(over="ignore", invalid="ignore"):
        r1 = np.where(s1 == 0, 0.0, s1 * np.exp(scale - l1))
        r2 = np.where(s2 == 0, 0.0, s2 * np.exp(scale - l2))
    C = busch_prefactor(spec.l)
    t1 = num * r1
    t2 = C * den * r2
    return t1 - t2, np.abs(t1) + np.abs(t2)


def busch_eigenvalues(spec, nu_window, *, points_per_unit=2000, coarse_per_unit=50,
                      tol=1e-14, return_diagnostics=False):
    """Energy indices nu solving the trap quantisation condition, ascending.

    The window is scanned densely where the right-hand side has poles
    (nu > -l - 3) and coarsely below, with dense patches around poles of the
    dressed scattering length.  Sign changes of a pole-free residual are then
    bisected to a relative width ``tol`` (well below 1e-10).
    """
    lo, hi = map(float, nu_window)
    if not hi > lo:
        raise ValueError("empty window")
    split = min(max(lo, -spec.l - 3.0), hi)
    parts = []
    if split > lo:
        parts.append(np.linspace(lo, split, max(int((split - lo) * coarse_per_unit), 2) + 1))
    parts.append(np.linspace(split, hi, max(int((hi - split) * points_per_unit), 2) + 1))
    grid = np.unique(np.concatenate(parts))
    diagnostics = []
    if split > lo:
        coarse = grid[grid <= split]
        _, den = _dressed_parts(spec, coarse)
        for i in np.flatnonzero(np.sign(den[:-1]) * np.sign(den[1:]) <= 0):
            a, b = coarse[i] - 0.5, coarse[i + 1] + 0.5
            grid = np.union1d(grid, np.linspace(max(a, lo), min(b, hi), int(points_per_unit) + 1))
    h, _ = _busch_residual(spec, grid)
    sg = np.sign(h)
    idx = np.flatnonzero(sg[:-1] * sg[1:] < 0)
    lo_b, hi_b = grid[idx].copy(), grid[idx + 1].copy()
    f_lo = h[idx].copy()
    # all brackets are bisected together
    for _ in range(200):
        width = hi_b - lo_b
        if not idx.size or np.all(width <= tol * np.maximum(1.0, np.abs(lo_b))):
            break
        mid = 0.5 * (lo_b + hi_b)
        if np.all((mid == lo_b) | (mid == hi_b)):
            break
        fm, _ = _busch_residual(spec, mid)
        same = np.sign(fm) == np.sign(f_lo)
        lo_b = np.where(same, mid, lo_b)
        f_lo = np.where(same, fm, f_lo)
        hi_b = np.where(same, hi_b, mid)
        exact = fm == 0.0
        lo_b[exact] = hi_b[exact] = mid[exact]
    roots = list(0.5 * (lo_b + hi_b))
    if idx.size:
        _, d1 = _dressed_parts(spec, grid[idx])
        _, d2 = _dressed_parts(spec, grid[idx + 1])
        for root, flip in zip(roots, np.sign(d1) != np.sign(d2)):
            if flip:
                diagnostics.append({"nu": float(root),
                                    "note": "bracket straddles a pole of the dressed scattering length"})
    for i in np.flatnonzero(h == 0.0):
        roots.append(float(grid[i]))
    roots = np.array(sorted(roots))
    if return_diagnostics:
        return roots, diagnostics
    return roots


# ---------------------------------------------------------------------------
# Quadrature


def radial_quadrature(breaks, r_max, panel_width=0.5, nodes=24):
    """Composite Gauss-Legendre rule on [0, r_max] with panels split at ``breaks``.

    Returns nodes and weights for the measure dr.
    """
    x, w = np.polynomial.legendre.leggauss(nodes)
    edges = sorted({0.0, float(r_max), *(float(b) for b in breaks if 0 < b < r_max)})
    rs, ws = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        npan = max(1, int(math.ceil((b - a) / panel_width)))
        pe = np.linspace(a, b, npan + 1)
        for p, q in zip(pe[:-1], pe[1:]):
            rs.append(0.5 * (q - p) * x + 0.5 * (q + p))
            ws.append(0.5 * (q - p) * w)
    return np.concatenate(rs), np.concatenate(ws)


def graded_breaks(r_s, upto=1.0):
    """Panel edges r_s, 2 r_s, 4 r_s, ... below ``upto``.

    Outside the shell the functions vary on the scale r_s, so panels grow
    geometrically away from it.
    """
    out = [float(r_s)]
    while out[-1] * 2 < upto:
        out.append(out[-1] * 2)
    return out


# ---------------------------------------------------------------------------
# Eigenpairs


@dataclass
class TrapEigenpair:
    """Right (F) and adjoint (P) eigenfunctions of one pseudopotential state.

    Inside the shell F = B f and P = B_adj f; outside both equal
    A (f + beta_tilde g), evaluated through the decaying solution.  After
    normalisation F has unit norm and <P|F> = 1.
    """

    l: int
    nu: float
    E: float
    r_s: float
    beta_tilde: float
    A: float
    B: float
    B_adj: float
    outside_at_shell: float      # F(r_s) before normalisation
    norm: float = 1.0            # factor applied to F to reach unit norm
    adjoint_scale: float = 1.0   # extra factor applied to P
    residual: float = 0.0
    jump_residual: float = 0.0

    def _outside_shape(self, r):
        lphi, sphi, _ = decaying_trap_log(self.l, self.nu, r)
        lphi0, sphi0, _ = decaying_trap_log(self.l, self.nu, self.r_s)
        return sphi * sphi0[0] * np.exp(lphi - lphi0[0])

    def evaluate(self, r):
        """Normalised (F(r), P(r))."""
        r = np.atleast_1d(np.asarray(r, dtype=float))
        F = np.empty_like(r)
        P = np.empty_like(r)
        ins = r < self.r_s
        if np.any(ins):
            f, _ = regular_trap(self.l, self.nu, r[ins])
            F[ins] = self.B * f
            P[ins] = self.B_adj * f
        out = ~ins
        if np.any(out):
            F[out] = self.outside_at_shell * self._outside_shape(r[out])
            P[out] = F[out]
        F *= self.norm
        P *= self.norm * self.adjoint_scale
        return F, P

    def evaluate_derivative(self, r):
        """Normalised (F'(r), P'(r))."""
        r = np.atleast_1d(np.asarray(r, dtype=float))
        dF = np.empty_like(r)
        dP = np.empty_like(r)
        ins = r < self.r_s
        if np.any(ins):
            _, fp = regular_trap(self.l, self.nu, r[ins])
            dF[ins] = self.B * fp
            dP[ins] = self.B_adj * fp
        out = ~ins
        if np.any(out):
            _, _, dlog = decaying_trap_log(self.l, self.nu, r[out])
            dF[out] = self.outside_at_shell * self._outside_shape(r[out]) * dlog
            dP[out] = dF[out]
        dF *= self.norm
        dP *= self.norm * self.adjoint_scale
        return dF, dP


def eigenpair(spec, nu):
    """Construct the (unnormalised) eigenpair at an eigenvalue index ``nu``.

    Raises
    ------
    ConsistencyError
        If ``nu`` does not satisfy the quantisation condition to
        ``RESIDUAL_TOL`` or the constructed F violates the shell jump
        condition by more than ``JUMP_TOL``.
    """
    l, r_s = spec.l, spec.r_s
    h, mag = _busch_residual(spec, nu)
    residual = float(abs(h) / mag) if mag > 0 else 0.0
    if residual > RESIDUAL_TOL:
        raise ConsistencyError(f"nu={nu} is not an eigenvalue (residual {residual:.2e})")
    f, fp = (float(v) for v in regular_trap(l, nu, r_s))
    g, gp = (float(v) for v in irregular_trap(l, nu, r_s))
    E = float(nu_to_energy(nu, l))
    num, den = _dressed_parts(spec, nu)
    bt = float(num / den) if den != 0 else math.inf
    if math.isfinite(bt):
        A = 1.0 / (1.0 + abs(bt))
        Fs = A * (f + bt * g)
        Fps_pair = A * (fp + bt * gp)
    else:
        A = 0.0
        Fs, Fps_pair = g, gp
    _, sphi, dlog = decaying_trap_log(l, nu, r_s)
    # sign convention: F is a positive multiple of the decaying solution
    if Fs * sphi[0] < 0:
        A, Fs, Fps_pair = -A, -Fs, -Fps_pair
    Fps = Fs * float(dlog[0])          # F'(r_s+) from the decaying solution
    B = Fs / f
    B_adj = B * spec.adjoint_inside_factor
    Fpm = B * fp
    # jump condition multiplied through by 1/beta0 so it stays finite at its poles
    if spec.beta0 == 0.0:
        lhs, rhs, wl, wr = Fps - Fpm, 0.0, 1.0, 0.0
    else:
        lhs, rhs, wl, wr = spec.inv_beta0 * (Fps - Fpm), spec.c1 * (spec.c2 * Fs + Fps), \
            abs(spec.inv_beta0), abs(spec.c1)
    jump_scale = wl * (abs(Fps) + abs(Fpm)) + wr * (abs(spec.c2 * Fs) + abs(Fps))
    jump_res = abs(lhs - rhs) / jump_scale if jump_scale > 0 else 0.0
    pair_res = abs(Fps - Fps_pair) / (abs(Fps) + abs(Fps_pair) + 1e-300)
    if jump_res > JUMP_TOL or pair_res > 1e-7:
        raise ConsistencyError(
            f"eigenpair at nu={nu} violates the shell conditions "
            f"(jump {jump_res:.2e}, decaying-solution mismatch {pair_res:.2e})")
    return TrapEigenpair(l, float(nu), E, r_s, bt, A, B, B_adj, Fs,
                         residual=residual, jump_residual=jump_res)


def oscillator_state(l, n, r_s=0.0):
    """Unperturbed trap eigenstate as a degenerate eigenpair (F = P)."""
    nu = float(n)
    E = float(nu_to_energy(nu, l))
    return TrapEigenpair(l, nu, E, r_s=0.0, beta_tilde=0.0, A=1.0, B=1.0, B_adj=1.0,
                         outside_at_shell=1.0)


def _oscillator_values(l, n, r):
    """r^l e^(-r^2/2) L_n^(l+1/2)(r^2), unnormalised."""
    return r ** l * np.exp(-0.5 * r * r) * special.eval_genlaguerre(n, l + 0.5, r * r)


# ---------------------------------------------------------------------------
# Bases


@dataclass
class BasisState:
    l: int
    m: int
    index: int          # rank within its l channel
    nu: float
    E: float
    A: float
    B: float
    norm: float
    interacting: bool
    pair: TrapEigenpair | None = None

    @property
    def label(self):
        return (self.l, self.m, self.index)


@dataclass
class BiorthogonalBasis:
    """Truncated basis of right/adjoint eigenfunctions at one reference energy.

    ``F`` and ``P`` hold the normalised radial functions (without the angular
    part) sampled on the quadrature nodes ``r`` with weights ``w``.
    """

    E0: float
    l_max: int
    r_s: float
    m: int
    states: list
    r: np.ndarray
    w: np.ndarray
    F: np.ndarray
    P: np.ndarray
    E_cut: float = 16.0
    meta: dict = field(default_factory=dict)

    @property
    def energies(self):
        return np.array([s.E for s in self.states])

    @property
    def ls(self):
        return np.array([s.l for s in self.states])

    @property
    def labels(self):
        return [s.label for s in self.states]

    def overlap_matrix(self):
        """<P_m|F_n>, zero between different l by angular orthogonality."""
        S = (self.P * (self.w * self.r ** 2)) @ self.F.T
        return S * (self.ls[:, None] == self.ls[None, :])

    def gram_matrix(self):
        """<F_m|F_n> within each l channel."""
        S = (self.F * (self.w * self.r ** 2)) @ self.F.T
        return S * (self.ls[:, None] == self.ls[None, :])

    def radial_matrix(self):
        """Radial integrals int P_m r F_n r^2 dr for all pairs."""
        return (self.P * (self.w * self.r ** 3)) @ self.F.T

    def to_dict(self):
        return {
            "E0": self.E0, "l_max": self.l_max, "r_s": self.r_s,
            "states": [{"l": s.l, "nu": s.nu, "E": s.E, "A": s.A, "B": s.B, "norm": s.norm}
                       for s in self.states],
        }

    def to_json(self, path=None):
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text

    def expand(self, l, h):
        """Coefficients <P_n|h> of a function sampled on ``self.r``, channel l only."""
        idx = np.flatnonzero(self.ls == l)
        return idx, (self.P[idx] * (self.w * self.r ** 2)) @ h

    def completeness_error(self, l, h):
        """Relative L2 error of sum_n F_n <P_n|h> as an approximation of h."""
        idx, c = self.expand(l, h)
        rec = c @ self.F[idx]
        wt = self.w * self.r ** 2
        return math.sqrt(np.sum(wt * (rec - h) ** 2) / np.sum(wt * h * h))


def _sort_key(state):
    if state.nu > -0.5:
        manifold = 2 * int(round(state.nu)) + state.l
    else:
        manifold = -10 ** 6 + state.nu
    return (manifold, state.l, state.E)


def build_basis(l_max, r_s, E0, beta_fns, *, E_cut=16.0, E_min=-20.0, m=0,
                n_per_l=None, quadrature=None, points_per_unit=2000):
    """Biorthogonal trap basis with shell pseudopotentials in selected channels.

    Parameters
    ----------
    beta_fns : dict
        Maps l to a scattering-length object or number; channels not listed
        are taken as non-interacting oscillator states.
    n_per_l : dict or int, optional
        Fixed number of states per channel (lowest first).  Keeps the matrix
        dimension constant when the reference energy is varied.
    """
    if l_max < abs(m):
        raise ValueError("l_max must be at least |m|")
    r_max = math.sqrt(2.0 * max(E_cut, 1.0)) + 6.0
    if quadrature is None:
        quadrature = radial_quadrature(graded_breaks(r_s), r_max)
    r, w = quadrature
    states, Fs, Ps = [], [], []
    wt = w * r * r
    for l in range(abs(m), l_max + 1):
        want = None
        if isinstance(n_per_l, dict):
            want = n_per_l.get(l)
        elif n_per_l is not None:
            want = int(n_per_l)
        if l in beta_fns:
            spec = make_pseudopotential(l, r_s, E0, beta_fns[l])
            e_hi = E_cut if want is None else max(E_cut, nu_to_energy(want + 2, l))
            window = (float(energy_to_nu(E_min, l)), float(energy_to_nu(e_hi, l)))
            nus = busch_eigenvalues(spec, window, points_per_unit=points_per_unit)
            if want is None:
                nus = nus[nu_to_energy(nus, l) <= E_cut]
            else:
                if nus.size < want:
                    raise ConsistencyError(f"only {nus.size} states found in channel {l}")
                nus = nus[:want]
            for k, nu in enumerate(nus):
                p = eigenpair(spec, nu)
                F, P = p.evaluate(r)
                nF = math.sqrt(np.sum(wt * F * F))
                F /= nF
                P /= nF
                ov = np.sum(wt * P * F)
                P /= ov
                p.norm = 1.0 / nF
                p.adjoint_scale = 1.0 / ov
                states.append(BasisState(l, m, k, p.nu, p.E, p.A * p.norm, p.B * p.norm,
                                         p.norm, True, p))
                Fs.append(F)
                Ps.append(P)
        else:
            n_max = int(math.floor((E_cut - l - 1.5) / 2.0 + 1e-12)) if want is None else want - 1
            for n in range(n_max + 1):
                F = _oscillator_values(l, n, r)
                nF = math.sqrt(np.sum(wt * F * F))
                F = F / nF
                states.append(BasisState(l, m, n, float(n), float(nu_to_energy(n, l)),
                                         1.0 / nF, 1.0 / nF, 1.0 / nF, False, None))
                Fs.append(F)
                Ps.append(F.copy())
    order = sorted(range(len(states)), key=lambda i: _sort_key(states[i]))
    states = [states[i] for i in order]
    F = np.array([Fs[i] for i in order])
    P = np.array([Ps[i] for i in order])
    return BiorthogonalBasis(float(E0), int(l_max), float(r_s), int(m), states, r, w, F, P,
                             E_cut=float(E_cut))


# ---------------------------------------------------------------------------
# Diagnostics


def adjoint_residual(pair, r, h=1e-4):
    """Relative L2 residual of the radial equation for F, by finite differences.

    Evaluates (-1/2 d^2/dr^2 (rF) / r + [l(l+1)/(2r^2) + r^2/2] F - E F) on
    points ``r`` away from the shell.
    """
    r = np.asarray(r, dtype=float)
    u = lambda x: x * pair.evaluate(x)[0]
    up, u0, um = u(r + h), u(r), u(r - h)
    d2 = (up - 2 * u0 + um) / (h * h)
    F = u0 / r
    res = -0.5 * d2 / r + (pair.l * (pair.l + 1) / (2 * r * r) + 0.5 * r * r - pair.E) * F
    return float(np.sqrt(np.sum(res ** 2) / np.sum((pair.E * F) ** 2 + F ** 2)))
