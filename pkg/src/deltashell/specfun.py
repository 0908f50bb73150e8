"""Real special functions used throughout the package.

Everything here works in double precision on real arguments.  The confluent
hypergeometric functions accept array-valued ``z`` (and ``a`` for the
series) so that radial functions can be tabulated on a quadrature grid in
one call.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np
from scipy import special

EPS = np.finfo(float).eps

#: Default truncation of every power series in this module.
MAX_TERMS = 500
#: Absolute error target of the series, relative to the size of the sum.
SERIES_TOL = 1e-13
#: Above this |z| the Kummer-transformed series is tried as well.
KUMMER_TRANSFORM_THRESHOLD = 1.0
#: Relative error budget of the connection formula for U.
U_PRECISION_BUDGET = 1e-12


class SpecfunError(ArithmeticError):
    """Base class for failures in this module."""


class ConvergenceError(SpecfunError):
    """A series did not reach its error target within the term budget."""


class PrecisionLossError(SpecfunError):
    """Cancellation destroyed more precision than the error budget allows."""


@dataclass(frozen=True)
class EvalResult:
    """A function value together with an absolute error estimate."""

    value: float | np.ndarray
    abs_error_estimate: float | np.ndarray

    def __post_init__(self):
        err = np.asarray(self.abs_error_estimate)
        val = np.asarray(self.value)
        if np.any(err < 0) or np.any(~np.isfinite(err) & np.isfinite(val)):
            raise ValueError("error estimate must be finite and non-negative")

    def __float__(self):
        return float(self.value)


# ---------------------------------------------------------------------------
# Gamma function helpers


def _is_nonpositive_integer(x):
    x = np.asarray(x, dtype=float)
    return (x <= 0) & (x == np.round(x))


def log_abs_gamma(x):
    """Return ``(log|Gamma(x)|, sign(Gamma(x)))`` elementwise.

    Negative arguments go through the reflection formula so that the sign is
    exact.  At the poles (non-positive integers) the log is ``+inf`` and the
    sign is 0, which makes ``sign * exp(-log)`` an exact zero of the
    reciprocal gamma function.
    """
    x = np.asarray(x, dtype=float)
    logg = np.empty_like(x)
    sign = np.empty_like(x)
    pos = x > 0
    logg[pos] = special.gammaln(x[pos])
    sign[pos] = 1.0
    neg = ~pos
    if np.any(neg):
        xn = x[neg]
        pole = xn == np.round(xn)
        # reduce first: x - round(x) is exact, so sin keeps full relative accuracy near poles
        nearest = np.round(xn)
        s = np.sin(np.pi * (xn - nearest)) * np.where(nearest % 2 == 0, 1.0, -1.0)
        with np.errstate(divide="ignore"):
            ln = math.log(math.pi) - np.log(np.abs(s)) - special.gammaln(1.0 - xn)
        # Gamma(x) = pi / (sin(pi x) Gamma(1 - x)), and Gamma(1 - x) > 0 here
        sg = np.sign(s)
        ln[pole] = np.inf
        sg[pole] = 0.0
        logg[neg] = ln
        sign[neg] = sg
    return logg, sign


def rgamma_scaled(x, log_scale):
    """Reciprocal gamma ``1/Gamma(x)`` multiplied by ``exp(log_scale)``."""
    logg, sign = log_abs_gamma(x)
    with np.errstate(over="ignore", invalid="ignore"):
        out = sign * np.exp(log_scale - logg)
    return np.where(sign == 0, 0.0, out)


def _check_half_integer(value, name):
    twice = 2.0 * value
    if twice != round(twice) or int(round(twice)) % 2 == 0:
        raise ValueError(f"{name} must be a half-integer, got {value!r}")


def gamma_ratio(nu, offset):
    """Gamma(-nu - offset) / Gamma(-nu) for a positive half-integer offset.

    Poles of the denominator (``nu`` a non-negative integer) give an exact
    zero.  A pole of the numerator is a domain error.  Works elementwise on
    arrays.
    """
    _check_half_integer(offset, "offset")
    if offset <= 0:
        raise ValueError("offset must be positive")
    nu_arr = np.asarray(nu, dtype=float)
    num = -nu_arr - offset
    if np.any(_is_nonpositive_integer(num)):
        raise ValueError("numerator Gamma(-nu - offset) is at a pole")
    ln_num, s_num = log_abs_gamma(num)
    ln_den, s_den = log_abs_gamma(-nu_arr)
    with np.errstate(over="ignore", invalid="ignore"):
        out = s_num * s_den * np.exp(ln_num - ln_den)
    out = np.where(s_den == 0, 0.0, out)
    return float(out) if np.ndim(nu) == 0 else out


def double_factorial(n):
    """n!! for integer n >= -1."""
    if n < -1:
        raise ValueError("double factorial defined here for n >= -1")
    out = 1
    while n > 1:
        out *= n
        n -= 2
    return out


# ---------------------------------------------------------------------------
# Spherical Bessel functions


def sph_bessel(l, x):
    """Spherical Bessel j_l, Neumann n_l and their x-derivatives.

    ``n_l`` follows the convention n_0(x) = -cos(x)/x.
    """
    if l < 0 or int(l) != l:
        raise ValueError("l must be a non-negative integer")
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise ValueError("spherical Bessel functions need x > 0")
    j = special.spherical_jn(l, x)
    n = special.spherical_yn(l, x)
    jp = special.spherical_jn(l, x, derivative=True)
    npr = special.spherical_yn(l, x, derivative=True)
    if x.ndim == 0:
        return float(j), float(n), float(jp), float(npr)
    return j, n, jp, npr


# ---------------------------------------------------------------------------
# Kummer M


def _m_series(a, b, z, max_terms=MAX_TERMS, tol=SERIES_TOL):
    """Direct Taylor series of M(a, b, z), vectorised over broadcast a, z.

    Returns ``(value, abs_sum, converged)``.  ``abs_sum`` is the sum of the
    absolute values of the terms, which bounds the rounding error.
    """
    a, z = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(z, dtype=float))
    term = np.ones(a.shape)
    total = np.ones(a.shape)
    abs_total = np.ones(a.shape)
    done = np.zeros(a.shape, dtype=bool)
    for n in range(max_terms):
        ratio = (a + n) * z / ((b + n) * (n + 1.0))
        term = np.where(done, 0.0, term * ratio)
        total = total + term
        abs_total = abs_total + np.abs(term)
        # (max(|a|,1)+m)|z|/((b+m)(m+1)) bounds every later |ratio| and decreases
        # with m, so once it is below 1/2 the tail is smaller than the last term
        m1 = n + 1.0
        bound = (np.maximum(np.abs(a), 1.0) + m1) * np.abs(z) / ((b + m1) * (m1 + 1.0))
        past = (b + m1 > 0) & (bound < 0.5)
        small = np.abs(term) <= tol * np.abs(total)
        done = done | (past & small) | (term == 0.0)
        if done.all():
            break
    return total, abs_total, done


def kummer_m(a, b, z, *, max_terms=MAX_TERMS, tol=SERIES_TOL,
             transform_threshold=KUMMER_TRANSFORM_THRESHOLD):
    """Confluent hypergeometric function M(a, b, z) by its Taylor series.

    For ``|z|`` above ``transform_threshold`` Kummer's transformation
    M(a, b, z) = exp(z) M(b - a, b, -z) is evaluated too, and whichever
    form has the smaller rounding bound is kept.

    Raises
    ------
    ConvergenceError
        If the series misses ``tol`` within ``max_terms`` terms.
    """
    if b <= 0 and b == round(b):
        raise ValueError("b must not be a non-positive integer")
    scalar = np.ndim(a) == 0 and np.ndim(z) == 0
    a_arr = np.asarray(a, dtype=float)
    z_arr = np.asarray(z, dtype=float)
    val, abs_sum, ok = _m_series(a_arr, b, z_arr, max_terms, tol)
    err = EPS * abs_sum * 4 + tol * np.abs(val)
    big = np.abs(np.broadcast_to(z_arr, val.shape)) > transform_threshold
    if np.any(big):
        a_b, z_b = np.broadcast_arrays(a_arr, z_arr)
        v2, s2, ok2 = _m_series(b - a_b[big], b, -z_b[big], max_terms, tol)
        ez = np.exp(z_b[big])
        v2 = v2 * ez
        e2 = (EPS * s2 * 4) * ez + tol * np.abs(v2)
        better = ok2 & ((e2 < err[big]) | ~ok[big])
        idx = np.flatnonzero(big)[better]
        val.flat[idx] = v2[better]
        err.flat[idx] = e2[better]
        ok.flat[idx] = True
    if not np.all(ok):
        raise ConvergenceError(f"M series for a={a}, b={b} did not converge")
    if scalar:
        return EvalResult(float(val), float(err))
    return EvalResult(val, err)


def kummer_m_prime(a, b, z, **kw):
    """dM/dz = (a/b) M(a+1, b+1, z)."""
    r = kummer_m(np.asarray(a) + 1.0, b + 1.0, z, **kw)
    fac = np.asarray(a, dtype=float) / b
    return EvalResult(fac * r.value, np.abs(fac) * r.abs_error_estimate)


# ---------------------------------------------------------------------------
# Kummer U


def _u_connection(a, b, z):
    """Connection formula for U with log-scaled bookkeeping.

    U = Gamma(1-b)/Gamma(a-b+1) M(a,b,z) + Gamma(b-1)/Gamma(a) z^(1-b) M(a-b+1,2-b,z)

    Returns ``(mantissa, log_scale, rel_err)`` with U = mantissa * exp(log_scale).
    """
    z = np.asarray(z, dtype=float)
    l1, s1 = log_abs_gamma(a - b + 1.0)
    l2, s2 = log_abs_gamma(a)
    g1 = special.gammaln(1.0 - b) if 1.0 - b > 0 else float(log_abs_gamma(1.0 - b)[0])
    sg1 = 1.0 if 1.0 - b > 0 else float(log_abs_gamma(1.0 - b)[1])
    g2 = special.gammaln(b - 1.0) if b - 1.0 > 0 else float(log_abs_gamma(b - 1.0)[0])
    sg2 = 1.0 if b - 1.0 > 0 else float(log_abs_gamma(b - 1.0)[1])
    la = g1 - l1 + np.zeros_like(z)       # log|coefficient| of first term
    lb = g2 - l2 + (1.0 - b) * np.log(z)   # of second term
    sa = sg1 * s1
    sb = sg2 * s2
    m1, ab1, ok1 = _m_series(a, b, z)
    m2, ab2, ok2 = _m_series(a - b + 1.0, 2.0 - b, z)
    lm = np.maximum(np.where(sa == 0, -np.inf, la), np.where(sb == 0, -np.inf, lb))
    with np.errstate(invalid="ignore", over="ignore"):
        wa = np.where(sa == 0, 0.0, sa * np.exp(la - lm))
        wb = np.where(sb == 0, 0.0, sb * np.exp(lb - lm))
    t1 = wa * m1
    t2 = wb * m2
    mant = t1 + t2
    bound = np.abs(wa) * ab1 + np.abs(wb) * ab2
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(mant != 0, 8 * EPS * bound / np.abs(mant), np.inf)
    # unconverged series count as total precision loss, so callers fall back
    rel = np.where(ok1 & ok2, rel, np.inf)
    return mant, lm, rel


def _u_gauss_laguerre(a, b, z, n=80):
    """U(a,b,z) for a >= 1 from the Laplace integral with Gauss-Laguerre nodes.

    U = z^-a / Gamma(a) * int_0^inf e^-u u^(a-1) (1 + u/z)^(b-a-1) du
    Accurate to ~1e-14 for z >= 6 and 1 <= a <= 10.  Returns log|U|.
    """
    # the weight includes u^(a-1) e^-u; normalised so the weights sum to one
    x, w = _laguerre_rule(n, float(a - 1.0))
    z = np.asarray(z, dtype=float)
    s = np.sum(w * (1.0 + x / z[..., None]) ** (b - a - 1.0), axis=-1)
    return -a * np.log(z) + np.log(s)


def _u_log_trapezoid(a, b, z, npts=500):
    """U(a,b,z) for a > 0 by the trapezoid rule in s = log t.

    The integrand exp(-z e^s + a s + (b-a-1) log(1+e^s)) is smooth and
    unimodal, so the trapezoid rule converges geometrically.  Returns
    log|U|.
    """
    z = np.atleast_1d(np.asarray(z, dtype=float))[:, None]

    def psi(s):
        return -z * np.exp(s) + a * s + (b - a - 1.0) * np.logaddexp(0.0, s)

    coarse = np.linspace(-60.0, 12.0, 1441)[None, :]
    vals = psi(coarse)
    top = vals.max(axis=1, keepdims=True)
    inside = vals > top - 60.0
    first = np.maximum(np.argmax(inside, axis=1) - 1, 0)
    last = np.minimum(inside.shape[1] - 1 - np.argmax(inside[:, ::-1], axis=1) + 1,
                      inside.shape[1] - 1)
    lo = coarse[0, first][:, None]
    hi = coarse[0, last][:, None]
    t = np.linspace(0.0, 1.0, npts)[None, :]
    s = lo + (hi - lo) * t
    h = (hi - lo)[:, 0] / (npts - 1)
    return special.logsumexp(psi(s), axis=1) + np.log(h) - special.gammaln(a)


@functools.lru_cache(maxsize=256)
def _laguerre_rule(n, alpha):
    x, w = special.roots_genlaguerre(n, alpha)
    return x, w / np.sum(w)


def _u_integral_log(a, b, z):
    """log U(a,b,z) for z > 0 via the integral representation.

    For a < 1 the integral is taken at a0 = a + N in [1, 2) and at a0 + 1,
    followed by backward recurrence in a, which is the stable direction for U.
    Returns ``(log|U|, sign)``.
    """
    z = np.atleast_1d(np.asarray(z, dtype=float))
    nshift = int(math.ceil(1.0 - a)) if a < 1.0 else 0
    a0 = a + nshift
    gl = (z >= 6.0) if a0 + 1.0 <= 10.0 else np.zeros(z.shape, dtype=bool)

    def base(aa):
        out = np.empty(z.shape)
        if np.any(gl):
            out[gl] = _u_gauss_laguerre(aa, b, z[gl])
        if np.any(~gl):
            out[~gl] = _u_log_trapezoid(aa, b, z[~gl])
        return out

    if nshift == 0:
        return base(a0), np.ones(z.shape)
    lu0 = base(a0)
    lu1 = base(a0 + 1.0)
    # keep the recurrence in scaled form: values relative to exp(lu0)
    ref = lu0.copy()
    u0 = np.ones(z.shape)
    u1 = np.exp(lu1 - ref)
    c = a0
    for _ in range(nshift):
        um = (2.0 * c - b + z) * u0 - c * (c - b + 1.0) * u1
        u1, u0 = u0, um
        c -= 1.0
        # rescale to avoid overflow over long recurrences
        mag = np.abs(u0)
        mag = np.where(mag > 0, mag, 1.0)
        u1 = u1 / mag
        u0 = u0 / mag
        ref = ref + np.log(mag)
    sign = np.sign(u0)
    with np.errstate(divide="ignore"):
        return ref + np.log(np.abs(u0)), sign


def kummer_u_log(a, b, z, *, budget=U_PRECISION_BUDGET):
    """log|U(a, b, z)| and its sign, choosing the evaluation route per point.

    The connection formula is used wherever its cancellation stays inside
    ``budget``; the integral representation covers the rest.
    """
    _check_half_integer(b, "b")
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if np.any(z <= 0):
        raise ValueError("U needs z > 0")
    logu = np.empty(z.shape)
    sign = np.empty(z.shape)
    bad = np.ones(z.shape, dtype=bool)
    # large z with moderate a is cheaper and safer through the integral
    a0 = a + (math.ceil(1.0 - a) if a < 1.0 else 0)
    conn = (z < 6.0) | (a0 + 1.0 > 10.0)
    if np.any(conn):
        mant, lscale, rel = _u_connection(a, b, z[conn])
        with np.errstate(divide="ignore"):
            logu[conn] = lscale + np.log(np.abs(mant))
        sign[conn] = np.sign(mant)
        bad[conn] = ~(rel <= budget)
    if np.any(bad):
        lu, sg = _u_integral_log(a, b, z[bad])
        logu[bad] = lu
        sign[bad] = sg
    return logu, sign


def kummer_u(a, b, z, *, method="auto", budget=U_PRECISION_BUDGET):
    """Tricomi's confluent hypergeometric function U(a, b, z) for half-integer b.

    Parameters
    ----------
    method : {"auto", "connection", "integral"}
        ``"connection"`` uses only the M-series connection formula and raises
        :class:`PrecisionLossError` when cancellation exceeds ``budget``.
        ``"auto"`` falls back to the integral representation for those
        points instead.
    """
    _check_half_integer(b, "b")
    scalar = np.ndim(z) == 0
    z_arr = np.atleast_1d(np.asarray(z, dtype=float))
    if np.any(z_arr <= 0):
        raise ValueError("U needs z > 0")
    if method == "connection":
        mant, lscale, rel = _u_connection(a, b, z_arr)
        if np.any(~(rel <= budget)):
            worst = float(np.nanmax(np.where(np.isfinite(rel), rel, np.inf)))
            raise PrecisionLossError(
                f"connection formula for U({a}, {b}, z) loses too much precision "
                f"(relative error ~{worst:.1e})")
        with np.errstate(over="ignore"):
            val = mant * np.exp(lscale)
        err = np.abs(val) * rel
    elif method == "integral":
        lu, sg = _u_integral_log(a, b, z_arr)
        val = sg * np.exp(lu)
        err = np.abs(val) * 1e-13
    elif method == "auto":
        mant, lscale, rel = _u_connection(a, b, z_arr)
        with np.errstate(over="ignore"):
            val = mant * np.exp(lscale)
        err = np.abs(val) * rel
        bad = ~(rel <= budget)
        if np.any(bad):
            lu, sg = _u_integral_log(a, b, z_arr[bad])
            val[bad] = sg * np.exp(lu)
            err[bad] = np.abs(val[bad]) * 1e-13
    else:
        raise ValueError(f"unknown method {method!r}")
    if scalar:
        return EvalResult(float(val[0]), float(err[0]))
    return EvalResult(val, err)


def kummer_u_prime(a, b, z, **kw):
    """dU/dz = -a U(a+1, b+1, z)."""
    r = kummer_u(a + 1.0, b + 1.0, z, **kw)
    return EvalResult(-a * np.asarray(r.value), abs(a) * np.asarray(r.abs_error_estimate))


def kummer_wronskian(a, b, z):
    """Closed form of M(a,b,z) U'(a,b,z) - M'(a,b,z) U(a,b,z).

    Equals -Gamma(b) z^-b e^z / Gamma(a).
    """
    z = np.asarray(z, dtype=float)
    lg, sg = log_abs_gamma(a)
    return -sg * np.exp(special.gammaln(b) - b * np.log(z) + z - lg)
