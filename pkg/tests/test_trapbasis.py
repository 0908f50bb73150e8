import json
import math
import warnings

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import ORACLES
from deltashell import schema
from deltashell.freespace import SquareWell, scattering_length_fn
from deltashell.trapbasis import (ConsistencyError, IndeterminateError, adjoint_residual,
                                  build_basis, busch_eigenvalues, busch_prefactor, busch_rhs,
                                  decaying_trap_log, dressed_beta, dressed_beta_free,
                                  dressed_beta_poles, eigenpair, energy_to_nu, free_space_coefficients,
                                  graded_breaks, irregular_trap, make_pseudopotential, nu_to_energy,
                                  radial_quadrature, regular_trap, trap_wronskian)

WELL = SquareWell(489.9, 0.1)
DEEP = SquareWell(498.9, 0.1)


@pytest.fixture(scope="module")
def betas():
    return {l: scattering_length_fn(WELL, l, -30, 60) for l in (0, 1)}


@pytest.fixture(scope="module")
def deep_betas():
    return {l: scattering_length_fn(DEEP, l, -30, 60) for l in (0, 1)}


@settings(max_examples=60, deadline=None)
@given(l=st.integers(0, 4), nu=st.floats(-6.0, 8.0), r=st.floats(0.01, 3.0))
def test_wronskian_is_energy_independent(l, nu, r):
    f, fp = regular_trap(l, nu, r)
    g, gp = irregular_trap(l, nu, r)
    w = trap_wronskian(l, r)
    scale = abs(f * gp) + abs(fp * g)
    assert abs(f * gp - fp * g - w) <= 1e-11 * scale


@settings(max_examples=40, deadline=None)
@given(l=st.integers(0, 3), nu=st.floats(-5.0, 6.0), r=st.floats(0.05, 1.5))
def test_decaying_solution_matches_busch_combination(l, nu, r):
    if min(abs(nu - round(nu)), abs(nu + l + 0.5 - round(nu + l + 0.5))) < 1e-3:
        return
    f, _ = regular_trap(l, nu, r)
    g, _ = irregular_trap(l, nu, r)
    lphi, s, _ = decaying_trap_log(l, nu, r)
    phi = s[0] * math.exp(lphi[0])
    K1 = float(mp.gamma(-l - 0.5) * mp.rgamma(-nu - l - 0.5))
    comb = K1 * (f + busch_rhs(nu, l) * g)
    assert comb == pytest.approx(phi, rel=1e-9, abs=1e-10 * (abs(K1 * f) + abs(K1 * busch_rhs(nu, l) * g)))


@pytest.mark.parametrize("l", [0, 1, 2])
def test_busch_rhs_against_mpmath(l):
    for nu in (-2.3, -0.7, 0.2, 1.45):
        ref = busch_prefactor(l) * mp.gamma(-nu - l - 0.5) * mp.rgamma(-nu)
        assert busch_rhs(nu, l) == pytest.approx(float(ref), rel=1e-12)
    assert busch_prefactor(0) == pytest.approx(0.5, rel=1e-15)


def test_decaying_derivative_matches_finite_difference():
    l, nu, r, h = 1, 0.37, 0.8, 1e-5
    lp, sp, _ = decaying_trap_log(l, nu, r + h)
    lm, sm, _ = decaying_trap_log(l, nu, r - h)
    l0, s0, d0 = decaying_trap_log(l, nu, r)
    fd = (sp[0] * math.exp(lp[0]) - sm[0] * math.exp(lm[0])) / (2 * h) / (s0[0] * math.exp(l0[0]))
    assert d0[0] == pytest.approx(fd, rel=1e-8)


@settings(max_examples=100, deadline=None)
@given(l=st.integers(0, 3), r_s=st.floats(0.005, 0.3), E0=st.floats(-6.0, 12.0),
       beta=st.floats(-20.0, 20.0).filter(lambda b: abs(b) > 1e-6))
def test_dressed_length_equals_beta_at_reference_energy(l, r_s, E0, beta):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        try:
            spec = make_pseudopotential(l, r_s, E0, beta)
        except ValueError:
            return
    assert dressed_beta(spec, E0) == pytest.approx(beta, rel=1e-10)


def test_dressed_length_with_zero_beta_vanishes():
    spec = make_pseudopotential(1, 0.05, 1.0, 0.0)
    assert np.all(dressed_beta(spec, np.linspace(-2, 5, 11)) == 0.0)


def test_dressed_length_pole_near_small_shell_prediction():
    # small-shell p-wave pole at E = E0 - r_s / (2 beta)
    for beta in (-5.0, 1.0, 10.0):
        spec = make_pseudopotential(1, 0.05, 1.0, beta)
        poles = dressed_beta_poles(spec, -4.0, 8.0)
        assert len(poles) == 1
        lo, hi = poles[0]
        assert hi - lo < 1e-9
        assert 0.5 * (lo + hi) == pytest.approx(1.0 - 0.05 / (2 * beta), abs=2e-3)


def test_dressed_length_raises_exactly_at_pole():
    from deltashell.trapbasis import _dressed_parts
    spec = make_pseudopotential(1, 0.05, 1.0, 1.0)
    lo, hi = dressed_beta_poles(spec, 0.0, 2.0)[0]
    grid = np.linspace(lo, hi, 50)
    den = _dressed_parts(spec, energy_to_nu(grid, 1))[1]
    assert np.min(np.abs(den)) < 1e-8
    # an exact zero of the denominator is reported rather than returning inf
    spec0 = make_pseudopotential(0, 0.05, 1.0, 0.3)
    import deltashell.trapbasis as tb
    orig = tb._dressed_parts
    try:
        tb._dressed_parts = lambda s, nu: (np.ones_like(nu), np.zeros_like(nu))
        with pytest.raises(IndeterminateError):
            tb.dressed_beta(spec0, 1.3)
    finally:
        tb._dressed_parts = orig


def test_free_space_coefficients_small_shell_limit():
    k, r_s = 1.3, 1e-5
    c1, c2 = free_space_coefficients(0, 0.5 * k * k, r_s)
    assert c1 == pytest.approx(1.0 / (k * r_s), rel=1e-6)
    assert c2 == pytest.approx(1.0 / r_s, rel=1e-6)


def test_free_space_s_wave_small_shell_form():
    # k beta0 / (k0 + r_s (k0^2 - k^2) beta0), whose r_s -> 0 limit is (k/k0) beta0
    E0, beta0 = 1.0, 0.4
    k0 = math.sqrt(2 * E0)
    for E in (0.3, 2.0, 5.0):
        k = math.sqrt(2 * E)
        first_order = [dressed_beta_free(0, rs, E0, beta0, E)
                       / (k * beta0 / (k0 + rs * (k0 ** 2 - k ** 2) * beta0)) - 1
                       for rs in (1e-3, 1e-4)]
        assert abs(first_order[1]) < 1e-7
        assert first_order[0] / first_order[1] == pytest.approx(100.0, rel=1e-2)
        lim = [dressed_beta_free(0, rs, E0, beta0, E) / (k / k0 * beta0) - 1 for rs in (1e-4, 1e-5)]
        assert lim[0] / lim[1] == pytest.approx(10.0, rel=1e-3)


def test_make_pseudopotential_validation():
    with pytest.raises(ValueError):
        make_pseudopotential(-1, 0.05, 1.0, 1.0)
    with pytest.raises(ValueError):
        make_pseudopotential(0, 0.0, 1.0, 1.0)
    with pytest.warns(UserWarning):
        make_pseudopotential(0, 0.5, 1.0, 1.0)
    spec = make_pseudopotential(1, 0.05, 1.0, math.inf)
    assert spec.inv_beta0 == 0.0 and math.isinf(spec.kappa)
    assert spec.adjoint_inside_factor == 0.0


def test_unperturbed_busch_spectrum():
    for l in (0, 1, 3):
        spec = make_pseudopotential(l, 0.05, 2.0, 0.0)
        nus = busch_eigenvalues(spec, (-0.9, 6.5))
        assert np.max(np.abs(nus - np.arange(7))) < 1e-10


@pytest.mark.parametrize("a,nu_ref", ORACLES["busch_l0"])
def test_l0_busch_roots_match_frozen_oracle(a, nu_ref):
    spec = make_pseudopotential(0, 1e-6, float(nu_to_energy(nu_ref, 0)), a)
    nus = busch_eigenvalues(spec, (nu_ref - 0.3, nu_ref + 0.3))
    assert np.min(np.abs(nus - nu_ref)) < 1e-8


def test_busch_diagnostics_flag_pole_straddling_brackets():
    spec = make_pseudopotential(1, 0.05, 1.0, 1.0)
    nus, diag = busch_eigenvalues(spec, (-3.0, 3.0), return_diagnostics=True)
    assert np.all(np.diff(nus) > 0)
    assert all("nu" in d for d in diag)


def test_busch_window_validation():
    spec = make_pseudopotential(0, 0.05, 1.0, 0.1)
    with pytest.raises(ValueError):
        busch_eigenvalues(spec, (2.0, 1.0))


def test_eigenpair_boundary_conditions(betas):
    spec = make_pseudopotential(1, 0.05, 2.0, betas[1])
    nu = busch_eigenvalues(spec, (-2.0, 2.0))[1]
    p = eigenpair(spec, nu)
    # kappa is large here, so sample at the shell itself and the float just inside
    r = np.array([np.nextafter(0.05, 0.0), 0.05])
    F, P = p.evaluate(r)
    dF, dP = p.evaluate_derivative(r)
    # F continuous, derivative jump fixed by kappa and c2
    assert F[0] == pytest.approx(F[1], rel=1e-7)
    jump = dF[1] - dF[0]
    assert jump == pytest.approx(spec.kappa * (spec.c2 * F[1] + dF[1]), rel=1e-6)
    # P jumps in value by the factor 1 - kappa and in slope by kappa c2 P(r_s-)
    assert P[1] == pytest.approx((1 - spec.kappa) * P[0], rel=1e-6)
    assert dP[1] - dP[0] == pytest.approx(spec.kappa * spec.c2 * P[0], rel=1e-6)
    assert adjoint_residual(p, np.linspace(0.3, 3.0, 40)) < 1e-6
    assert adjoint_residual(p, np.linspace(0.005, 0.045, 10), h=1e-5) < 1e-4


def test_eigenpair_rejects_non_eigenvalue(betas):
    spec = make_pseudopotential(0, 0.05, 2.0, betas[0])
    with pytest.raises(ConsistencyError):
        eigenpair(spec, 0.123)


def test_eigenpair_at_infinite_reference_length(deep_betas):
    # deep well: beta_1 has a pole at E ~ -1.7706; building there stays finite
    from deltashell.freespace import scattering_length_poles
    lo, hi = scattering_length_poles(DEEP, 1, -3.0, 0.0)[0]
    E0 = 0.5 * (lo + hi)
    b = build_basis(1, 0.05, E0, {1: deep_betas[1]}, E_cut=10.0, m=1)
    S = b.overlap_matrix()
    assert np.max(np.abs(S - np.eye(len(S)))) < 1e-8


def test_radial_quadrature_integrates_gaussian_moment():
    r, w = radial_quadrature(graded_breaks(0.05), 12.0)
    assert np.sum(w * r * r * np.exp(-r * r)) == pytest.approx(math.sqrt(math.pi) / 4, rel=1e-13)
    assert graded_breaks(0.05) == [0.05, 0.1, 0.2, 0.4, 0.8]


def test_basis_biorthonormal_and_layout(betas):
    b = build_basis(4, 0.05, 2.0, betas, E_cut=16.0)
    S = b.overlap_matrix()
    assert np.max(np.abs(S - np.eye(len(S)))) < 1e-8
    assert set(b.ls) == {0, 1, 2, 3, 4}
    E = b.energies
    assert np.all(E <= 16.0)
    # non-interacting channels are plain oscillator energies
    assert np.allclose(np.sort(E[b.ls == 2]), 2 * np.arange(np.sum(b.ls == 2)) + 3.5)
    doc = json.loads(b.to_json())
    schema.validate_basis(doc)
    assert doc["E0"] == 2.0 and doc["l_max"] == 4


def test_basis_fixed_state_counts(betas):
    b = build_basis(2, 0.05, 0.7, betas, E_cut=10.0, n_per_l={0: 3, 1: 4, 2: 2})
    assert [int(np.sum(b.ls == l)) for l in range(3)] == [3, 4, 2]
    # a fixed count above the cutoff widens the search window
    b = build_basis(0, 0.05, 0.7, {0: betas[0]}, E_cut=6.0, n_per_l=6)
    assert np.sum(b.ls == 0) == 6 and b.energies.max() > 6.0


def test_basis_quadrature_converged(betas):
    b1 = build_basis(1, 0.05, 2.0, betas, E_cut=12.0)
    r_max = math.sqrt(24.0) + 6.0
    b2 = build_basis(1, 0.05, 2.0, betas, E_cut=12.0,
                     quadrature=radial_quadrature(graded_breaks(0.05), r_max, panel_width=0.25))
    assert np.max(np.abs(b1.radial_matrix() - b2.radial_matrix())) < 1e-10


@pytest.mark.parametrize("l", [0, 1])
def test_completeness_of_band_limited_function(betas, l):
    # finite oscillator combination, vanishing to high order at the shell
    b = build_basis(1, 0.05, 2.0, betas, E_cut=24.0)
    h = b.r ** (l + 6) * np.exp(-0.5 * b.r ** 2)
    assert b.completeness_error(l, h) < 1e-3


def test_l0_orthogonality_vanishes_linearly_with_shell_radius(betas):
    offs = []
    for r_s in (1e-3, 1e-4):
        b = build_basis(0, r_s, 2.0, {0: betas[0]}, E_cut=12.0)
        G = b.gram_matrix()
        offs.append(np.max(np.abs(G - np.diag(np.diag(G)))))
    assert offs[0] / offs[1] == pytest.approx(10.0, rel=0.1)


def test_p_wave_basis_not_orthogonal(betas):
    b = build_basis(1, 0.05, 2.0, {1: betas[1]}, E_cut=12.0, m=1)
    G = b.gram_matrix()
    assert np.max(np.abs(G - np.diag(np.diag(G)))) > 1e-2
