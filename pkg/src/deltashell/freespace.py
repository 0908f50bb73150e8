"""Free-space scattering by a spherical square well.

Units are hbar = mu = 1, so k = sqrt(2E).  The energy-dependent scattering
length is defined through tan(delta_l) = -beta_l k^(2l+1); beta_0 is the
usual s-wave scattering length and beta_1 a scattering volume.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import interpolate, optimize, special

from .specfun import double_factorial, sph_bessel


class PoleError(ArithmeticError):
    """The scattering length is infinite (delta_l = pi/2 mod pi) inside ``bracket``."""

    def __init__(self, message, bracket):
        super().__init__(message)
        self.bracket = bracket


@dataclass(frozen=True)
class SquareWell:
    """Attractive square well V(r) = -V0 for r < R0, zero outside."""

    V0: float
    R0: float

    def __post_init__(self):
        if not (self.V0 > 0 and self.R0 > 0):
            raise ValueError("V0 and R0 must be positive")
        if self.R0 >= 1.0:
            warnings.warn("R0 is not small compared with the trap length; "
                          "the pseudopotential picture will be poor", stacklevel=3)

    def potential(self, r):
        r = np.asarray(r, dtype=float)
        return np.where(r < self.R0, -self.V0, 0.0)


# ---------------------------------------------------------------------------
# Energy-analytic free solutions


_SERIES_LIMIT = 60.0


def regular_free(l, E, r, nterms=None):
    """j_l(kr)/k^l and its r-derivative, as an entire function of E.

    Uses the power series r^l sum_n (-E r^2)^n / (n! (2l+2n+1)!!), valid for
    either sign of E.  Intended for |E| r^2 up to a few tens.
    """
    E = np.asarray(E, dtype=float)
    r = np.asarray(r, dtype=float)
    x = -E * r * r
    if np.any(np.abs(x) > _SERIES_LIMIT):
        raise ValueError("|E| r^2 too large for the power series")
    nterms = nterms or 80
    term = np.ones(np.broadcast(x, r).shape) / double_factorial(2 * l + 1)
    s = term.copy()
    ds = np.zeros_like(s)   # d/dx of the sum
    for n in range(1, nterms):
        term = term * x / (n * (2 * l + 2 * n + 1))
        s = s + term
        ds = ds + n * term / np.where(x == 0, 1.0, x)
        if np.all(np.abs(term) < 1e-17 * np.abs(s)):
            break
    ds = np.where(x == 0, -1.0 / double_factorial(2 * l + 3), ds)
    val = r ** l * s
    # d/dr [r^l S(x)] with x = -E r^2
    der = l * r ** (l - 1) * s + r ** l * ds * (-2.0 * E * r) if l > 0 else ds * (-2.0 * E * r)
    return val, der


def irregular_free(l, E, r, nterms=None):
    """k^(l+1) n_l(kr) and its r-derivative, as an entire function of E.

    Series -(2l-1)!!/r^(l+1) sum_m (-E r^2)^m / (m! prod_{j<=m}(2j-1-2l)).
    """
    E = np.asarray(E, dtype=float)
    r = np.asarray(r, dtype=float)
    x = -E * r * r
    if np.any(np.abs(x) > _SERIES_LIMIT):
        raise ValueError("|E| r^2 too large for the power series")
    nterms = nterms or 80
    pref = -double_factorial(2 * l - 1)
    term = np.ones(np.broadcast(x, r).shape)
    s = term.copy()
    ds = np.zeros_like(s)
    for m in range(1, nterms):
        term = term * x / (m * (2 * m - 1 - 2 * l))
        s = s + term
        ds = ds + m * term / np.where(x == 0, 1.0, x)
        if m > l + 1 and np.all(np.abs(term) < 1e-17 * np.abs(s)):
            break
    ds = np.where(x == 0, 1.0 / (1 - 2 * l), ds)
    val = pref * s / r ** (l + 1)
    der = pref * (-(l + 1) * s / r ** (l + 2) + ds * (-2.0 * E * r) / r ** (l + 1))
    return val, der


def _interior(well, l, E):
    return regular_free(l, np.asarray(E, dtype=float) + well.V0, well.R0)


def _beta_parts(well, l, E):
    u, up = _interior(well, l, E)
    J, Jp = regular_free(l, E, well.R0)
    N, Np = irregular_free(l, E, well.R0)
    num = -(Jp * u - J * up)
    den = Np * u - N * up
    return num, den


def scattering_length(well, l, E):
    """Energy-dependent scattering length beta_l(E) of the square well.

    Defined by analytic continuation for E <= 0 as well, where it has no
    spurious poles.  Near a genuine pole (delta_l = pi/2) the value is large;
    exactly at one a :class:`PoleError` is raised.
    """
    num, den = _beta_parts(well, l, E)
    if np.any(den == 0):
        Ef = float(np.atleast_1d(E)[np.flatnonzero(np.atleast_1d(den) == 0)[0]])
        raise PoleError("scattering length pole", (Ef, Ef))
    out = num / den
    return float(out) if np.ndim(out) == 0 else out


def inverse_scattering_length(well, l, E):
    """1/beta_l(E), finite at the poles of beta_l."""
    num, den = _beta_parts(well, l, E)
    out = den / num
    return float(out) if np.ndim(out) == 0 else out


def scattering_length_poles(well, l, E_min, E_max, n=4000):
    """Bracket the poles of beta_l on [E_min, E_max] to ~1e-12."""
    grid = np.linspace(E_min, E_max, n)
    _, den = _beta_parts(well, l, grid)
    out = []
    for i in np.flatnonzero(np.sign(den[:-1]) * np.sign(den[1:]) < 0):
        f = lambda e: float(_beta_parts(well, l, e)[1])
        root = optimize.brentq(f, grid[i], grid[i + 1], xtol=1e-13, rtol=1e-15)
        out.append((root - 1e-12, root + 1e-12))
    return out


# ---------------------------------------------------------------------------
# Phase shifts


def _phase_vector(well, l, k):
    """Complex number whose argument is delta_l mod 2 pi (up to a fixed offset)."""
    kin = np.sqrt(k * k + 2.0 * well.V0)
    j, n, jp, npr = sph_bessel(l, k * well.R0)
    ji, _, jip, _ = sph_bessel(l, kin * well.R0)
    u, up = ji, kin * jip
    num = k * jp * u - j * up
    den = k * npr * u - n * up
    return den + 1j * num


def phase_shift(well, l, E, *, k_min=1e-6, max_refine=60):
    """Phase shift delta_l(E) in radians, continuous from delta_l(0+) = 0.

    The phase is followed on an adaptively refined k-grid so that narrow
    resonances are traced through rather than folded back into
    (-pi/2, pi/2].
    """
    E_arr = np.atleast_1d(np.asarray(E, dtype=float))
    if np.any(E_arr <= 0):
        raise ValueError("phase shifts need E > 0")
    k_t = np.sqrt(2.0 * E_arr)
    grid = np.union1d(np.linspace(k_min, k_t.max(), 400), k_t)
    for _ in range(max_refine):
        z = _phase_vector(well, l, grid)
        d = np.angle(z[1:] / z[:-1])
        coarse = np.abs(d) > 0.3
        if not coarse.any():
            break
        grid = np.union1d(grid, 0.5 * (grid[:-1] + grid[1:])[coarse])
    else:
        raise RuntimeError("phase-shift grid refinement did not settle")
    theta = np.angle(z[0]) + np.concatenate(([0.0], np.cumsum(np.angle(z[1:] / z[:-1]))))
    theta -= math.pi * round(theta[0] / math.pi)
    out = np.interp(k_t, grid, theta)
    return float(out[0]) if np.ndim(E) == 0 else out


def bound_states(well, l, E_min=None, E_max=0.0, n=20000):
    """Bound-state energies of channel l in [E_min, E_max), ascending."""
    E_min = -well.V0 if E_min is None else E_min
    E_max = min(E_max, 0.0)
    lo = max(E_min, -well.V0) + 1e-12
    hi = E_max - 1e-12

    def mismatch(E):
        E = np.asarray(E, dtype=float)
        kap = np.sqrt(-2.0 * E)
        x = kap * well.R0
        # scale k_l by e^x so the comparison does not underflow
        K = special.spherical_kn(l, x) * np.exp(x)
        Kp = kap * special.spherical_kn(l, x, derivative=True) * np.exp(x)
        u, up = _interior(well, l, E)
        return up * K - u * Kp

    grid = np.linspace(lo, hi, n)
    m = mismatch(grid)
    roots = []
    for i in np.flatnonzero(np.sign(m[:-1]) * np.sign(m[1:]) < 0):
        roots.append(optimize.brentq(lambda e: float(mismatch(e)), grid[i], grid[i + 1],
                                     xtol=1e-13, rtol=1e-15))
    return np.array(roots)


# ---------------------------------------------------------------------------
# Tabulated scattering-length functions


@dataclass
class ScatteringLengthFn:
    """Scattering length beta_l(E) of one partial wave.

    Either an exact evaluator (``exact`` and ``exact_inverse``) or samples with
    an interpolation rule.  ``poles`` lists exclusion intervals around the
    energies where beta_l is infinite; evaluating inside one raises
    :class:`PoleError`.
    """

    l: int
    energies: np.ndarray
    values: np.ndarray
    poles: list = field(default_factory=list)
    interpolation: str = "cubic"
    exact: Callable | None = None
    exact_inverse: Callable | None = None
    V0: float | None = None
    R0: float | None = None

    def __post_init__(self):
        self.energies = np.asarray(self.energies, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.interpolation not in ("cubic", "linear", "exact"):
            raise ValueError("interpolation must be 'cubic', 'linear' or 'exact'")
        if self.interpolation == "exact" and self.exact is None:
            raise ValueError("exact interpolation needs an evaluator")
        self._segments = None

    def _check_pole(self, E):
        for lo, hi in self.poles:
            if lo <= E <= hi:
                raise PoleError(f"E={E} lies inside a pole exclusion interval", (lo, hi))

    def _segment_interp(self, E):
        if self._segments is None:
            cuts = sorted(0.5 * (lo + hi) for lo, hi in self.poles)
            edges = [-np.inf, *cuts, np.inf]
            segs = []
            for a, b in zip(edges[:-1], edges[1:]):
                mask = (self.energies > a) & (self.energies < b)
                x, y = self.energies[mask], self.values[mask]
                if x.size >= 4 and self.interpolation == "cubic":
                    fn = interpolate.CubicSpline(x, y, extrapolate=True)
                elif x.size >= 2:
                    fn = interpolate.interp1d(x, y, fill_value="extrapolate")
                else:
                    fn = None
                segs.append((a, b, fn))
            self._segments = segs
        for a, b, fn in self._segments:
            if a < E < b:
                if fn is None:
                    raise ValueError("too few samples to interpolate")
                return float(fn(E))
        raise ValueError("energy outside tabulated range")

    def __call__(self, E):
        E = float(E)
        self._check_pole(E)
        if self.interpolation == "exact":
            return float(self.exact(E))
        if not (self.energies[0] <= E <= self.energies[-1]):
            raise ValueError(f"E={E} outside tabulated range")
        return self._segment_interp(E)

    def inverse(self, E):
        """1/beta_l(E); finite at the poles when an exact inverse is available."""
        E = float(E)
        if self.exact_inverse is not None and self.interpolation == "exact":
            return float(self.exact_inverse(E))
        return 1.0 / self(E)

    # -- serialisation -----------------------------------------------------

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            fh.write(f"# l={self.l} V0={self.V0!r} R0={self.R0!r}\n")
            for lo, hi in self.poles:
                fh.write(f"# pole={lo!r},{hi!r}\n")
            w = csv.writer(fh)
            w.writerow(["E", "beta"])
            for e, b in zip(self.energies, self.values):
                w.writerow([repr(float(e)), repr(float(b))])

    @classmethod
    def from_csv(cls, path, interpolation="cubic"):
        meta, poles, rows = {}, [], []
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                if line.startswith("#"):
                    body = line[1:].strip()
                    if body.startswith("pole="):
                        lo, hi = body[5:].split(",")
                        poles.append((float(lo), float(hi)))
                    else:
                        for tok in body.split():
                            key, _, val = tok.partition("=")
                            meta[key] = val
                    continue
                if line.startswith("E,"):
                    continue
                e, b = line.split(",")
                rows.append((float(e), float(b)))
        if "l" not in meta:
            raise ValueError("missing '# l=' header")
        arr = np.array(rows)

        def num(key):
            v = meta.get(key)
            return None if v in (None, "None") else float(v)

        return cls(int(meta["l"]), arr[:, 0], arr[:, 1], poles, interpolation,
                   V0=num("V0"), R0=num("R0"))


def scattering_length_fn(well, l, E_min=-5.0, E_max=20.0, n=501, interpolation="exact"):
    """Tabulate beta_l of a square well, with pole exclusion intervals.

    With ``interpolation="exact"`` calls go straight to the analytic formula
    and the samples only serve export.
    """
    poles = scattering_length_poles(well, l, E_min, E_max)
    grid = np.linspace(E_min, E_max, n)
    keep = np.ones(grid.shape, dtype=bool)
    for lo, hi in poles:
        keep &= ~((grid >= lo) & (grid <= hi))
    grid = grid[keep]
    vals = scattering_length(well, l, grid)
    return ScatteringLengthFn(
        l, grid, vals, poles, interpolation,
        exact=lambda e: scattering_length(well, l, e),
        exact_inverse=lambda e: inverse_scattering_length(well, l, e),
        V0=well.V0, R0=well.R0)


# ---------------------------------------------------------------------------
# Independent oracle: direct integration of the radial equation


def _numerov_tan_delta(well, l, E, n_inside, match_factor=10.0):
    h = well.R0 / n_inside
    n_total = int(round(match_factor * n_inside))
    k = math.sqrt(2.0 * E)
    V0, R0 = well.V0, well.R0
    ll = l * (l + 1)
    hh = h * h / 12.0

    def f(n):
        r = n * h
        if n < n_inside:
            v = -V0
        elif n == n_inside:
            v = -0.5 * V0   # potential step sits on this node
        else:
            v = 0.0
        return ll / (r * r) + 2.0 * (v - E)

    # start from the Frobenius expansion r^(l+1) (1 + c r^2)
    c = (-V0 - E) / (2 * l + 3)
    u_prev = 0.0
    fu_prev = 2.0 if l == 1 else 0.0   # limit of f u at r = 0
    w_prev = u_prev - hh * fu_prev
    u = h ** (l + 1) * (1.0 + c * h * h)
    fn = f(1)
    w = (1.0 - hh * fn) * u
    us = [u_prev, u]
    for n in range(1, n_total):
        w_next = 2.0 * w - w_prev + 12.0 * hh * fn * u
        fn = f(n + 1)
        u_next = w_next / (1.0 - hh * fn)
        w_prev, w, u = w, w_next, u_next
        us.append(u)
    n1 = n_total
    n2 = n_total - n_inside // 2
    r1, r2 = n1 * h, n2 * h
    u1, u2 = us[n1], us[n2]
    j1, nn1, _, _ = sph_bessel(l, k * r1)
    j2, nn2, _, _ = sph_bessel(l, k * r2)
    a1, b1 = r1 * j1, r1 * nn1
    a2, b2 = r2 * j2, r2 * nn2
    # u = C (rj - t rn)  =>  t = (u1 a2 - u2 a1)/(u1 b2 - u2 b1)
    return (u1 * a2 - u2 * a1) / (u1 * b2 - u2 * b1)


def ode_oracle_phase_shift(well, l, E, n_inside=800, levels=3):
    """Phase shift from Numerov integration with Richardson extrapolation.

    The potential step lies on a grid node, where the average potential is
    used, so the leading error is O(h^2).  The result is in (-pi/2, pi/2];
    compare with :func:`phase_shift` modulo pi.

    Returns
    -------
    delta : float
    err : float
        Difference between the last two extrapolated estimates.
    """
    if E <= 0:
        raise ValueError("E must be positive")
    ests = [math.atan(_numerov_tan_delta(well, l, E, n_inside * 2 ** i)) for i in range(levels)]
    ests = np.unwrap(np.array(ests) * 2.0) / 2.0
    rich = [(4.0 * ests[i + 1] - ests[i]) / 3.0 for i in range(levels - 1)]
    delta = rich[-1]
    err = abs(rich[-1] - rich[-2]) if len(rich) > 1 else abs(ests[-1] - ests[-2])
    delta = (delta + math.pi / 2) % math.pi - math.pi / 2
    return delta, err
