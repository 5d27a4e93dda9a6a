import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rollwave import equilibria as eq
from rollwave.errors import NoHopfPointError
from rollwave.model import ModelParams
from rollwave.profile import equilibrium_q, profile_rhs, WaveParams


def test_hopf_point_closed_forms():
    p = ModelParams(6.0, 0.1)
    hp = eq.hopf_point(1.0, p)
    assert abs(hp.c_s - 6.0**-0.5) < 1e-12
    assert abs(hp.omega - 2.12012) < 1e-4
    assert abs(hp.X - 2 * np.pi / hp.omega) < 1e-12


@settings(max_examples=25, deadline=None)
@given(F=st.floats(4.5, 20.0), nu=st.floats(0.01, 1.0), tau0=st.floats(0.2, 3.0))
def test_frequency_equals_sqrt_gamma_over_alpha(F, nu, tau0):
    p = ModelParams(F, nu)
    c_s = eq.speed_at_hopf(tau0, p)
    alpha, beta, gamma = eq.linearized_profile_coefficients(tau0, c_s, p)
    assert abs(beta) < 1e-12 * c_s**2
    omega = eq.hopf_frequency(tau0, p)
    assert abs(omega**2 / (gamma / alpha) - 1.0) < 1e-10


@settings(max_examples=25, deadline=None)
@given(F=st.floats(4.5, 20.0), nu=st.floats(0.01, 1.0), X=st.floats(0.5, 50.0))
def test_tau0_for_period_inverts_the_frequency(F, nu, X):
    p = ModelParams(F, nu)
    tau0 = eq.tau0_for_period(p, X)
    assert abs(eq.hopf_point(tau0, p).X / X - 1.0) < 1e-12


def test_no_hopf_point_when_subcharacteristic():
    with pytest.raises(NoHopfPointError, match="subcharacteristic"):
        eq.hopf_point(1.0, ModelParams(3.0, 0.1))
    assert eq.subcharacteristic(ModelParams(3.9, 0.1))
    assert not eq.subcharacteristic(ModelParams(4.1, 0.1))


@pytest.mark.parametrize("c_factor", [0.9, 1.0, 1.2])
def test_quadratic_roots_match_profile_jacobian(c_factor):
    # eigenvalues of the finite-difference Jacobian of the profile ODE at the equilibrium
    p = ModelParams(6.0, 0.1)
    tau0 = 0.7
    c = c_factor * eq.speed_at_hopf(tau0, p)
    wp = WaveParams(X=1.0, c=c, q=equilibrium_q(tau0, c), b1=tau0)
    h = 1e-6
    J = np.zeros((2, 2))
    for k in range(2):
        d = np.zeros(2)
        d[k] = h
        J[:, k] = (profile_rhs(np.array([tau0, 0.0]) + d, wp, p)
                   - profile_rhs(np.array([tau0, 0.0]) - d, wp, p)) / (2 * h)
    ref = np.sort_complex(np.linalg.eigvals(J))
    got = np.sort_complex(eq.hopf_quadratic_roots(tau0, c, p))
    assert np.allclose(got, ref, atol=1e-6)


def test_roots_are_imaginary_at_the_hopf_speed():
    p = ModelParams(6.0, 0.1)
    hp = eq.hopf_point(0.8, p)
    r = eq.hopf_quadratic_roots(hp.tau0, hp.c_s, p)
    assert np.allclose(r.real, 0.0, atol=1e-12)
    assert np.allclose(np.sort(np.abs(r.imag)), hp.omega, rtol=1e-12)


def test_constant_state_spectrum_matches_symbol_eigenvalues():
    p = ModelParams(6.0, 0.1)
    for xi in (0.0, 0.3, -1.7):
        lam = eq.constant_state_spectrum(0.7, 1.1, p, xi)
        M = eq.symbol(0.7, 1.1, p, xi)
        assert np.allclose(np.sort_complex(lam), np.sort_complex(np.linalg.eigvals(M)))
        assert lam[0].real >= lam[1].real


def test_growth_band_edge_is_the_hopf_frequency():
    # at the Hopf speed the mode with wavenumber omega is neutral
    p = ModelParams(6.0, 0.1)
    hp = eq.hopf_point(0.55, p)
    lam = eq.constant_state_spectrum(hp.tau0, hp.c_s, p, hp.omega)[0]
    assert abs(lam) < 1e-12
    assert eq.constant_state_spectrum(hp.tau0, hp.c_s, p, 0.5 * hp.omega)[0].real > 0
    assert eq.constant_state_spectrum(hp.tau0, hp.c_s, p, 1.5 * hp.omega)[0].real < 0
