"""Regenerate the frozen reference values used by the test suite (needs mpmath).

Run: python3 tests/oracles/generate.py > tests/oracles/values.json
"""
import json

import mpmath as mp

mp.mp.dps = 40

M_CASES = [(-0.5, 1.5, 0.3), (-2.3, 1.5, 4.0), (-7.7, 2.5, 12.0), (0.4, 0.5, 30.0),
           (-3.25, -0.5, 2.0), (1.75, 3.5, 60.0), (-10.1, 4.5, 0.01), (-0.999, 1.5, 9.0)]
U_CASES = [(0.5, 1.5, 0.01), (-0.3, 1.5, 2.0), (1.3, 1.5, 19.75), (-4.6, 2.5, 7.0),
           (3.0, 0.5, 40.0), (-2.5, 3.5, 0.5), (12.0, 1.5, 25.0), (0.75, 5.5, 100.0)]


def m_values():
    return [[a, b, z, float(mp.hyp1f1(a, b, z))] for a, b, z in M_CASES]


def u_values():
    return [[a, b, z, float(mp.hyperu(a, b, z))] for a, b, z in U_CASES]


def sph_values():
    out = []
    for l in range(4):
        for x in (0.05, 1.0, 7.3):
            j = mp.sqrt(mp.pi / (2 * x)) * mp.besselj(l + mp.mpf(1) / 2, x)
            y = mp.sqrt(mp.pi / (2 * x)) * mp.bessely(l + mp.mpf(1) / 2, x)
            out.append([l, x, float(j), float(y)])
    return out


def sph_j(l, x):
    return mp.sqrt(mp.pi / (2 * x)) * mp.besselj(l + mp.mpf(1) / 2, x)


def sph_y(l, x):
    return mp.sqrt(mp.pi / (2 * x)) * mp.bessely(l + mp.mpf(1) / 2, x)


def well_tan_delta(V0, R0, l, E):
    k = mp.sqrt(2 * mp.mpf(E))
    q = mp.sqrt(2 * (mp.mpf(E) + V0))
    x, y = k * R0, q * R0
    d = lambda f, t: mp.diff(lambda s: f(l, s), t)
    L = q * d(sph_j, y) / sph_j(l, y)
    num = k * d(sph_j, x) - L * sph_j(l, x)
    den = k * d(sph_y, x) - L * sph_y(l, x)
    return num / den


def well_values():
    out = []
    for V0 in (489.9, 498.9):
        for l in (0, 1):
            for E in (0.5, 1.0, 3.0, 9.0):
                t = well_tan_delta(mp.mpf(V0), mp.mpf("0.1"), l, E)
                k = mp.sqrt(2 * mp.mpf(E))
                out.append([V0, l, E, float(t), float(-t / k ** (2 * l + 1))])
    return out


def trap_level(V0, R0, l, guess):
    def mismatch(E):
        nu_in = (E + V0 - l - mp.mpf(3) / 2) / 2
        nu_out = (E - l - mp.mpf(3) / 2) / 2
        b = l + mp.mpf(3) / 2
        fin = lambda r: r ** l * mp.exp(-r * r / 2) * mp.hyp1f1(-nu_in, b, r * r)
        fout = lambda r: r ** l * mp.exp(-r * r / 2) * mp.hyperu(-nu_out, b, r * r)
        return mp.diff(fin, R0) * fout(R0) - mp.diff(fout, R0) * fin(R0)
    return float(mp.findroot(mismatch, guess))


def trap_values():
    R0 = mp.mpf("0.1")
    cases = [(489.9, 0, 1.61701), (489.9, 1, 1.25203), (489.9, 1, 2.66976),
             (498.9, 0, 1.61592), (498.9, 1, -2.01945), (498.9, 1, 2.55366)]
    return [[V0, l, trap_level(mp.mpf(V0), R0, l, g)] for V0, l, g in cases]


def free_bound_p(V0, R0, guess):
    def mismatch(E):
        kap = mp.sqrt(-2 * E)
        q = mp.sqrt(2 * (E + V0))
        # modified spherical Bessel k_1 up to a constant: e^{-x}(1 + 1/x)/x
        kout = lambda r: mp.exp(-kap * r) * (1 + 1 / (kap * r)) / (kap * r)
        fin = lambda r: sph_j(1, q * r)
        return mp.diff(fin, R0) * kout(R0) - mp.diff(kout, R0) * fin(R0)
    return float(mp.findroot(mismatch, guess))


def busch_wigner_values():
    # l = 0 roots of a = Gamma(-nu - 1/2) / (2 Gamma(-nu))
    out = []
    for a in (-0.3, 0.05, 0.1, 0.7):
        for guess in (-0.2, 0.6, 1.6):
            f = lambda nu: mp.gamma(-nu - mp.mpf(1) / 2) / (2 * mp.gamma(-nu)) - a
            try:
                out.append([a, float(mp.findroot(f, guess))])
            except ValueError:
                pass
    return out


if __name__ == "__main__":
    print(json.dumps({
        "kummer_m": m_values(), "kummer_u": u_values(), "sph_bessel": sph_values(),
        "square_well": well_values(), "trap_levels": trap_values(),
        "free_p_bound_498_9": free_bound_p(mp.mpf("498.9"), mp.mpf("0.1"), -2.04),
        "busch_l0": busch_wigner_values(),
    }, indent=1))
