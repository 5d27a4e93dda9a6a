import numpy as np
import pytest

from conftest import X_HOPF
from rollwave import profile as pr
from rollwave.errors import DomainError, H1ViolationError, SolverError
from rollwave.model import ModelParams


def test_wave_params_validation():
    with pytest.raises(DomainError):
        pr.WaveParams(X=1.0, c=0.0, q=1.0, b1=1.0)
    with pytest.raises(DomainError):
        pr.WaveParams(X=-1.0, c=1.0, q=1.0, b1=1.0)
    with pytest.raises(DomainError):
        pr.WaveParams(X=1.0, c=1.0, q=1.0, b1=-0.2)


def test_equilibrium_is_a_fixed_point_of_the_shooting_map(params):
    tau_e, c = 0.6, 1.0
    wp = pr.WaveParams(X=X_HOPF, c=c, q=pr.equilibrium_q(tau_e, c), b1=tau_e)
    assert np.max(np.abs(pr.shoot(wp, params))) < 1e-12


def test_jacobian_matches_finite_differences(params, near_hopf):
    wp = near_hopf.wave
    H, J = pr.shoot_with_jacobian(wp, params, rtol=1e-12, atol=1e-14)
    h = 1e-6
    Jfd = np.zeros((2, 2))
    for k, name in enumerate(("b1", "q")):
        plus = pr.shoot(pr.replace(wp, **{name: getattr(wp, name) + h}), params, 1e-12, 1e-14)
        minus = pr.shoot(pr.replace(wp, **{name: getattr(wp, name) - h}), params, 1e-12, 1e-14)
        Jfd[:, k] = (plus - minus) / (2 * h)
    assert np.allclose(J, Jfd, rtol=1e-5, atol=1e-7)


def test_near_hopf_wave_certificates(near_hopf, branch):
    c_s, _ = branch
    assert near_hopf.residual < 1e-8
    assert near_hopf.mismatch < 1e-8
    assert near_hopf.tau.min() > 0
    assert near_hopf.wave.c < c_s
    assert near_hopf.wave.b2 == 0.0
    # the anchored extremum is a maximum of tau
    assert abs(near_hopf.tau[0] - near_hopf.tau.max()) < 1e-12


def test_branch_lies_below_the_hopf_speed(params, branch):
    c_s, k = branch
    assert k < 0
    with pytest.raises(SolverError, match="below"):
        pr.hopf_seed(params, X_HOPF, c_s * (1 + 1e-3))


def test_amplitude_scales_like_square_root(params, branch):
    c_s, k = branch
    ratios = []
    for eps in (1e-4, 1e-3):
        c = c_s * (1 - eps)
        w = pr.solve_profile(params, X_HOPF, c, pr.hopf_seed(params, X_HOPF, c), L=128)
        ratios.append(w.amplitude / np.sqrt(c_s - c))
    assert abs(ratios[0] / ratios[1] - 1) < 0.05
    # the peak-to-trough amplitude is twice the first harmonic amplitude a with c - c_s = k a^2
    assert abs(ratios[0] / (2 / np.sqrt(-k)) - 1) < 0.05


def test_newton_from_the_constant_state_is_rejected(params, branch):
    c_s, _ = branch
    c = c_s * (1 - 1e-3)
    tau_e = pr.tau0_for_period(params, X_HOPF)
    guess = pr.WaveParams(X=X_HOPF, c=c, q=pr.equilibrium_q(tau_e, c), b1=tau_e)
    with pytest.raises(SolverError, match="constant state"):
        pr.solve_profile(params, X_HOPF, c, guess, L=64)


def test_continuation_follows_the_branch(params, branch):
    c_s, _ = branch
    cs = [c_s * (1 - e) for e in (2e-3, 5e-3, 1e-2)]
    waves = pr.continue_in_c(params, X_HOPF, cs, L=128)
    amps = [w.amplitude for w in waves]
    assert all(w.residual < 1e-8 for w in waves)
    assert amps[0] < amps[1] < amps[2]
    with pytest.raises(DomainError):
        pr.continue_in_c(params, X_HOPF, [cs[0], cs[2], cs[1]])


def test_profile_at_speed_uses_continuation_far_from_hopf(params, branch):
    c_s, _ = branch
    w = pr.profile_at_speed(params, X_HOPF, c_s * 0.95, L=128)
    assert w.residual < 1e-8 and w.mismatch < 1e-8
    assert w.amplitude > 0.05


def test_transversality(params, near_hopf, tau0):
    rank, smin = pr.transversality_check(near_hopf.wave, params)
    assert rank == 2 and smin > 1e-3


def test_vacuum_is_reported_with_location(params):
    wp = pr.WaveParams(X=10.0, c=1.0, q=2.0, b1=0.5)
    with pytest.raises(H1ViolationError) as info:
        pr.shoot(wp, params)
    assert info.value.x is not None and 0 < info.value.x < 10.0


def test_save_load_round_trip(tmp_path, near_hopf):
    path = tmp_path / "wave.txt"
    pr.save_profile(near_hopf, path, {"config_hash": "feed"})
    back = pr.load_profile(path)
    assert back.wave == near_hopf.wave and back.model == near_hopf.model
    for name in ("tau", "tau_x", "u", "u_x"):
        assert np.array_equal(getattr(back, name), getattr(near_hopf, name))
    assert back.meta["config_hash"] == "feed"


def test_constant_profile_residual(params):
    w = pr.constant_profile(0.6, 1.0, params, 3.0, 16)
    assert w.residual < 1e-14 and w.amplitude == 0.0
