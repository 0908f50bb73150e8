import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import ORACLES
from deltashell.freespace import (PoleError, ScatteringLengthFn, SquareWell, bound_states,
                                  irregular_free, ode_oracle_phase_shift, phase_shift,
                                  regular_free, scattering_length, scattering_length_fn,
                                  scattering_length_poles)
from deltashell.specfun import sph_bessel

WELL = SquareWell(489.9, 0.1)
DEEP = SquareWell(498.9, 0.1)


@pytest.mark.parametrize("V0,l,E,tan_ref,beta_ref", ORACLES["square_well"])
def test_scattering_length_matches_frozen_oracle(V0, l, E, tan_ref, beta_ref):
    well = SquareWell(V0, 0.1)
    assert scattering_length(well, l, E) == pytest.approx(beta_ref, rel=1e-11)
    assert math.tan(phase_shift(well, l, E)) == pytest.approx(tan_ref, rel=1e-10)


@settings(max_examples=50, deadline=None)
@given(l=st.integers(0, 3), E=st.floats(0.01, 60.0), r=st.floats(0.01, 1.0))
def test_series_solutions_match_spherical_bessels(l, E, r):
    k = math.sqrt(2 * E)
    j, n, jp, npr = sph_bessel(l, k * r)
    J, Jp = regular_free(l, E, r)
    N, Np = irregular_free(l, E, r)
    # tolerances relative to each function's envelope, so zeros are not an issue
    envJ = 1.0 / (k ** (l + 1) * r) + r ** l
    envN = k ** l / r + 1.0 / r ** (l + 1)
    assert J == pytest.approx(j / k ** l, rel=1e-10, abs=1e-11 * envJ)
    assert Jp == pytest.approx(k * jp / k ** l, rel=1e-10, abs=1e-11 * k * envJ / min(k * r, 1.0))
    assert N == pytest.approx(k ** (l + 1) * n, rel=1e-10, abs=1e-11 * envN)
    assert Np == pytest.approx(k ** (l + 2) * npr, rel=1e-10, abs=1e-11 * k * envN / min(k * r, 1.0))


def test_series_continue_to_negative_energy():
    # J for l=0 at E<0 is sinh(kappa r)/(kappa r)
    kap, r = 2.0, 0.3
    J, _ = regular_free(0, -0.5 * kap * kap, r)
    assert J == pytest.approx(math.sinh(kap * r) / (kap * r), rel=1e-14)


def test_tan_delta_relation_and_sign():
    # repulsive hard-core-like behaviour: beta0 > 0 gives delta0 < 0
    E = 2.0
    k = math.sqrt(2 * E)
    assert math.tan(phase_shift(WELL, 0, E)) == pytest.approx(-k * scattering_length(WELL, 0, E), rel=1e-10)


def test_p_wave_pole_of_shallow_well():
    poles = scattering_length_poles(WELL, 1, 0.5, 2.0)
    assert len(poles) == 1
    lo, hi = poles[0]
    assert hi - lo < 1e-11
    assert 0.5 * (lo + hi) == pytest.approx(1.20978, abs=1e-4)
    assert abs(scattering_length(WELL, 1, hi + 1e-9)) > 1e3


def test_series_refuses_arguments_beyond_its_range():
    with pytest.raises(ValueError):
        regular_free(0, 100.0, 1.0)


def test_tabulated_function_excludes_pole_bracket():
    fn = scattering_length_fn(WELL, 1, 0.0, 3.0)
    lo, hi = fn.poles[0]
    with pytest.raises(PoleError):
        fn(0.5 * (lo + hi))
    # the inverse stays finite through the pole
    assert abs(fn.inverse(0.5 * (lo + hi))) < 1e-6


@pytest.mark.parametrize("interp", ["cubic", "linear"])
def test_interpolated_function_and_csv_roundtrip(tmp_path, interp):
    fn = scattering_length_fn(WELL, 1, -3.0, 5.0, n=2001)
    path = tmp_path / "beta.csv"
    fn.to_csv(path)
    head = path.read_text().splitlines()[0]
    assert head == "# l=1 V0=489.9 R0=0.1"
    back = ScatteringLengthFn.from_csv(path, interpolation=interp)
    assert back.poles == fn.poles
    for E in (-2.5, 0.3, 2.0, 4.4):
        tol = 1e-7 if interp == "cubic" else 1e-4
        assert back(E) == pytest.approx(scattering_length(WELL, 1, E), rel=tol)


def test_from_csv_requires_header(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("E,beta\n1.0,2.0\n")
    with pytest.raises(ValueError):
        ScatteringLengthFn.from_csv(p)


def test_square_well_rejects_bad_parameters():
    with pytest.raises(ValueError):
        SquareWell(-1.0, 0.1)
    with pytest.raises(ValueError):
        SquareWell(10.0, 0.0)
    with pytest.warns(UserWarning):
        SquareWell(10.0, 1.5)


def test_bound_states_of_both_depths():
    s = bound_states(WELL, 0)
    assert s.size == 1 and s[0] == pytest.approx(-222.856, abs=1e-3)
    assert bound_states(WELL, 1).size == 0
    p = bound_states(DEEP, 1)
    assert p.size == 1 and p[0] == pytest.approx(ORACLES["free_p_bound_498_9"], abs=1e-9)


def test_negative_energy_pole_differs_from_bound_state():
    # beta_l continued below threshold has its own pole, distinct from the bound state
    poles = scattering_length_poles(DEEP, 1, -5.0, 0.0)
    assert len(poles) == 1
    assert poles[0][0] == pytest.approx(-1.7706, abs=1e-3)


def test_phase_shift_continuous_through_p_wave_resonance():
    E = np.linspace(0.9, 1.6, 300)
    d = phase_shift(WELL, 1, E)
    assert np.max(np.abs(np.diff(d))) < 0.2
    assert d[-1] - d[0] > 2.0   # rises by about pi across the narrow resonance


def test_phase_shift_rejects_nonpositive_energy():
    with pytest.raises(ValueError):
        phase_shift(WELL, 0, 0.0)


def test_numerov_oracle_agrees_with_analytic_phase():
    for l, E in ((0, 2.0), (1, 1.2), (1, 7.0)):
        d_or, err = ode_oracle_phase_shift(WELL, l, E)
        diff = (phase_shift(WELL, l, E) - d_or + 0.5 * math.pi) % math.pi - 0.5 * math.pi
        assert abs(diff) < 1e-6
        assert err < 1e-5
