import json

import numpy as np
import pytest
from scipy.optimize import linear_sum_assignment

from conftest import X_HOPF
from rollwave import bloch as bl
from rollwave import equilibria as eq
from rollwave.errors import TrackingError
from rollwave.grid import wavenumbers
from rollwave.model import ModelParams, constant_coefficients
from rollwave.profile import constant_profile


def _symbol_modes(tau0, c, p, X, L, xi, scheme):
    """Eigenvalues of the constant-coefficient operator mode by mode."""
    A, B, C = constant_coefficients(tau0, p, c)
    h = X / L
    out = []
    for n in range(L):
        k = 2 * np.pi * n / X
        if scheme == "forward":
            dp = (np.exp(1j * k * h) - 1) / h + 1j * xi
            dm = (1 - np.exp(-1j * k * h)) / h + 1j * xi
        else:
            kk = wavenumbers(X, L)[n]
            dp = dm = 1j * (kk + xi)
        out.extend(np.linalg.eigvals(dm * dp * B - dp * A + C))
    return np.sort_complex(np.array(out))


def _matched_distance(a, b):
    cost = np.abs(a[:, None] - b[None, :])
    r, k = linear_sum_assignment(cost)
    return cost[r, k].max()


@pytest.mark.parametrize("scheme", ["forward", "fourier"])
@pytest.mark.parametrize("xi", [0.0, 0.37])
def test_constant_state_matches_fourier_mode_oracle(scheme, xi):
    p = ModelParams(6.0, 0.1)
    tau0, c, X = 0.6, 1.05, 5.0
    prof = constant_profile(tau0, c, p, X, 64)
    op = bl.assemble_bloch(prof, p, xi, scheme, 32)
    got = np.linalg.eigvals(op.matrix)
    ref = _symbol_modes(tau0, c, p, X, op.L, xi, scheme)
    assert _matched_distance(got, ref) < 1e-8 * max(1.0, np.abs(ref).max())


@pytest.mark.parametrize("scheme", ["forward", "fourier"])
def test_trace_identity(near_hopf, params, scheme):
    xi = 0.23
    op = bl.assemble_bloch(near_hopf, params, xi, scheme, 64)
    prof = bl._resampled(near_hopf, 64, scheme)
    L, X, c = op.L, op.X, prof.wave.c
    h = X / L
    Bd = params.nu / prof.tau**2
    C22 = -2.0 * prof.u * prof.tau
    if scheme == "forward":
        conv = 2 * c * (-1.0 / h + 1j * xi)
        diff = Bd * (-2.0 / h**2 - xi**2)
    else:
        conv = 2j * c * xi
        diff = Bd * (-np.sum(wavenumbers(X, L) ** 2) / L - xi**2)
    expected = np.sum(conv + C22 + diff)
    assert abs(np.trace(op.matrix) - expected) < 1e-9 * abs(expected)


@pytest.mark.parametrize("scheme", ["forward", "fourier"])
def test_conjugate_symmetry_of_spectrum(near_hopf, params, scheme):
    a = bl.spectrum(bl.assemble_bloch(near_hopf, params, 0.31, scheme, 64))
    b = np.conj(bl.spectrum(bl.assemble_bloch(near_hopf, params, -0.31, scheme, 64)))
    assert _matched_distance(a, b) < 1e-9


def test_fourier_grid_is_odd():
    assert bl.grid_size(128, "fourier") == 129
    assert bl.grid_size(128, "forward") == 128
    assert bl.grid_size(65, "fourier") == 65


def test_subcharacteristic_constant_state_is_stable():
    p = ModelParams(3.0, 0.1)
    prof = constant_profile(1.0, 1.0, p, 2 * np.pi, 64)
    xis = bl.xi_grid(2 * np.pi, 21)
    curve = bl.r_curve(prof, p, xis, "forward", 64)
    nz = np.abs(xis) > 1e-12
    assert np.all(curve.R[nz] < 0)
    assert abs(curve.R[~nz][0]) < 1e-12


def test_r_curve_symmetric_and_unstable_near_hopf(near_hopf, params):
    xis = bl.xi_grid(X_HOPF, 11)
    curve = bl.r_curve(near_hopf, params, xis, "forward", 128)
    assert np.max(np.abs(curve.R - curve.R[::-1])) < 1e-10
    assert curve.R.max() > 0
    assert curve.leading.shape == (11, bl.N_LEADING)


def test_parallel_r_curve_matches_serial(near_hopf, params, monkeypatch):
    xis = np.linspace(-0.5, 0.5, 6)
    serial = bl.r_curve(near_hopf, params, xis, "forward", 64)
    monkeypatch.setenv(bl.THREADS_ENV, "3")
    par = bl.r_curve(near_hopf, params, xis, "forward", 64)
    assert np.array_equal(serial.leading, par.leading)


def test_leading_eigenvalue_grid_convergence(near_hopf, params):
    xi = 0.3
    fwd = [bl.spectrum(bl.assemble_bloch(near_hopf, params, xi, "forward", L))[0] for L in (64, 128, 256)]
    ref = bl.spectrum(bl.assemble_bloch(near_hopf, params, xi, "fourier", 128))[0]
    errs = np.abs(np.array(fwd) - ref)
    assert np.all(np.log2(errs[:-1] / errs[1:]) > 0.9)
    four64 = bl.spectrum(bl.assemble_bloch(near_hopf, params, xi, "fourier", 64))[0]
    assert abs(four64 - ref) < 1e-9


def test_zero_structure_fourier(near_hopf, params):
    zs = bl.zero_structure(near_hopf, params, "fourier", 128)
    assert zs.multiplicity == 2 and zs.kernel_dim == 1
    assert zs.right_kernel_residual < 1e-6
    assert zs.left_kernel_residual < 1e-12


def test_forward_right_kernel_residual_is_first_order(near_hopf, params):
    res = [bl.zero_structure(near_hopf, params, "forward", L).right_kernel_residual for L in (64, 128)]
    assert np.log2(res[0] / res[1]) > 0.9


def test_critical_expansion_constant_state_control():
    p = ModelParams(6.0, 0.1)
    tau0, c = 0.6, 1.3
    prof = constant_profile(tau0, c, p, 7.0, 32)
    ce = bl.critical_expansion(prof, p, "fourier", 32, n_modes=1)
    h = 1e-4
    lp = eq.constant_state_spectrum(tau0, c, p, h)[0]
    lm = eq.constant_state_spectrum(tau0, c, p, -h)[0]
    l0 = eq.constant_state_spectrum(tau0, c, p, 0.0)[0]
    a_ref = 1j * (lp - lm) / (2 * h)
    b_ref = -(lp + lm - 2 * l0) / (2 * h * h)
    assert abs(ce.a[0] - a_ref) < 1e-4
    assert abs(ce.b[0] - b_ref) < 1e-2 * abs(b_ref)


def test_critical_expansion_pair_is_ambiguous_near_hopf(near_hopf, params):
    # a third eigenvalue sits O(c_s - c) from the origin and mixes with the pair
    with pytest.raises(TrackingError, match="reduce xi_max"):
        bl.critical_expansion(near_hopf, params, "fourier", 64)


def test_critical_expansion_of_the_zero_cluster(near_hopf, params, tau0):
    ce = bl.critical_expansion(near_hopf, params, "fourier", 64, xi_max=0.5 / X_HOPF,
                               n_modes=3, n_samples=16)
    h = 1e-5
    c = near_hopf.wave.c
    a_const = 1j * (eq.constant_state_spectrum(tau0, c, params, h)[0]
                    - eq.constant_state_spectrum(tau0, c, params, -h)[0]) / (2 * h)
    j = int(np.argmin(np.abs(ce.a.real - a_const.real)))
    assert abs(ce.a[j].real - a_const.real) < 0.01
    assert ce.tracks.shape[1] == 3


def test_assess_stability_near_hopf_and_round_trip(near_hopf, params):
    timings = {}
    rep = bl.assess_stability(near_hopf, params, "fourier", 64, n_xi=21, timings=timings)
    assert not rep.D1.holds and rep.D1.value > 0
    assert rep.D3prime.holds and rep.H4.holds
    assert rep.amplitude.holds and rep.coercivity.holds
    assert not rep.spectrally_stable
    assert set(timings) == {"r_curve", "zero_structure", "critical_expansion", "structural"}
    back = bl.StabilityReport.from_dict(json.loads(json.dumps(rep.to_dict())))
    assert json.dumps(back.to_dict()) == json.dumps(rep.to_dict())
