"""Periodic roll-wave profiles by shooting on the scalar profile ODE.

Eliminating ``u = q - c tau`` from the traveling-wave equations leaves::

    c^2 tau' + ((2F)^-1 tau^-2)' = 1 - tau (q - c tau)^2 - c nu (tau^-2 tau')'

A periodic wave is a zero of the boundary mismatch
``H(X, c, q, b) = (tau, tau')(X) - b``.  Translation invariance is removed
by anchoring an extremum at the origin (``b2 = tau'(0) = 0``) so that, at
fixed ``(X, c)``, Newton's method acts on ``(b1, q)``.

Equilibria are zeros of ``H`` for every ``q``, so near the Hopf point
Newton on ``(b1, q)`` easily slides onto the constant state.  The first
solve on a branch is therefore seeded from the amplitude-scaled map
``H / a`` (see :func:`hopf_seed`), which has no trivial zeros.
"""

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import fsolve

from .equilibria import speed_at_hopf, tau0_for_period
from .errors import DomainError, H1ViolationError, SolverError
from .grid import periodic_grid, spectral_derivative
from .io import read_table, write_table
from .model import ModelParams

RTOL = 1e-10
ATOL = 1e-12
NEWTON_TOL = 1e-10
CERTIFICATE_TOL = 1e-8
MAX_HALVINGS = 20
DEFAULT_L = 256


@dataclass(frozen=True)
class WaveParams:
    X: float
    c: float
    q: float
    b1: float
    b2: float = 0.0

    def __post_init__(self):
        if self.c == 0:
            raise DomainError("c = 0: no nontrivial periodic profiles exist")
        if not self.X > 0:
            raise DomainError("period X must be positive")
        if not self.b1 > 0:
            raise DomainError("b1 = tau(0) must be positive")

    @property
    def b(self):
        return np.array([self.b1, self.b2])


@dataclass(frozen=True, eq=False)
class Profile:
    wave: WaveParams
    model: ModelParams
    tau: np.ndarray
    tau_x: np.ndarray
    u: np.ndarray
    u_x: np.ndarray
    residual: float
    mismatch: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def L(self):
        return self.tau.size

    @property
    def x(self):
        return periodic_grid(self.wave.X, self.L)

    @property
    def amplitude(self):
        return float(self.tau.max() - self.tau.min())


def equilibrium_q(tau_e, c):
    """Integration constant for which ``tau_e`` is an equilibrium."""
    return c * tau_e + tau_e**-0.5


def _second_derivative(tau, tp, q, c, F, nu):
    u = q - c * tau
    N = 1.0 - tau * u * u - c * c * tp + tp / (F * tau**3) + 2.0 * c * nu * tp * tp / tau**3
    return N * tau * tau / (c * nu)


def profile_rhs(state, wp, p):
    """Return ``(tau', tau'')`` for the profile ODE at ``state = (tau, tau')``."""
    tau, tp = state
    if not tau > 0:
        raise DomainError("tau must be positive")
    if wp.c == 0 or p.nu == 0:
        raise DomainError("profile ODE is singular for c = 0 or nu = 0")
    return np.array([tp, _second_derivative(tau, tp, wp.q, wp.c, p.F, p.nu)])


def _rhs_sens(x, y, q, c, F, nu):
    # y = (tau, tau', S11, S21, S12, S22); S = d(tau, tau')/d(b1, q)
    tau, tp = y[0], y[1]
    u = q - c * tau
    t3 = tau**-3
    N = 1.0 - tau * u * u - c * c * tp + tp * t3 / F + 2.0 * c * nu * tp * tp * t3
    k = tau * tau / (c * nu)
    g = N * k
    dN_dtau = -u * u + 2.0 * c * tau * u - 3.0 * tp * t3 / (F * tau) - 6.0 * c * nu * tp * tp * t3 / tau
    dN_dp = -c * c + t3 / F + 4.0 * c * nu * tp * t3
    dN_dq = -2.0 * tau * u
    g_tau = dN_dtau * k + 2.0 * N * tau / (c * nu)
    g_p = dN_dp * k
    g_q = dN_dq * k
    s11, s21, s12, s22 = y[2], y[3], y[4], y[5]
    return np.array([
        tp, g,
        s21, g_tau * s11 + g_p * s21,
        s22, g_tau * s12 + g_p * s22 + g_q,
    ])


def _tau_zero(x, y, *args):
    return y[0]


_tau_zero.terminal = True
_tau_zero.direction = -1


def _integrate(fun, X, y0, args, rtol, atol, t_eval=None):
    sol = solve_ivp(fun, (0.0, X), y0, method="DOP853", rtol=rtol, atol=atol,
                    args=args, events=_tau_zero, t_eval=t_eval)
    if sol.status == 1:
        xz = float(sol.t_events[0][0])
        raise H1ViolationError(f"tau reached 0 at x = {xz:.6g} (H1 violated)", x=xz)
    if sol.status != 0:
        raise SolverError(f"profile integration failed: {sol.message}")
    return sol


def _rhs(x, y, q, c, F, nu):
    return np.array([y[1], _second_derivative(y[0], y[1], q, c, F, nu)])


def shoot(wp, p, rtol=RTOL, atol=ATOL):
    """Boundary mismatch ``(tau, tau')(X) - b`` of the solution started at ``b``."""
    p.require_viscous()
    sol = _integrate(_rhs, wp.X, [wp.b1, wp.b2], (wp.q, wp.c, p.F, p.nu), rtol, atol)
    return sol.y[:, -1] - wp.b


def shoot_with_jacobian(wp, p, rtol=RTOL, atol=ATOL):
    """Mismatch and its exact Jacobian with respect to ``(b1, q)``."""
    p.require_viscous()
    y0 = [wp.b1, wp.b2, 1.0, 0.0, 0.0, 0.0]
    sol = _integrate(_rhs_sens, wp.X, y0, (wp.q, wp.c, p.F, p.nu), rtol, atol)
    yX = sol.y[:, -1]
    H = yX[:2] - wp.b
    J = np.array([[yX[2] - 1.0, yX[4]], [yX[3], yX[5]]])
    return H, J


def profile_residual(tau, wp, p):
    """Sup norm of the profile ODE residual, derivatives taken spectrally."""
    tau = np.asarray(tau, dtype=float)
    t1 = spectral_derivative(tau, wp.X)
    t2 = spectral_derivative(tau, wp.X, order=2)
    c = wp.c
    u = wp.q - c * tau
    res = (c * c * t1 - t1 / (p.F * tau**3) - 1.0 + tau * u * u
           + c * p.nu * (t2 / tau**2 - 2.0 * t1 * t1 / tau**3))
    return float(np.max(np.abs(res)))


def sample_profile(wp, p, L=DEFAULT_L, rtol=1e-12, atol=1e-14):
    """Integrate one period from ``b`` and sample it on the uniform grid.

    Sampling uses a tighter tolerance than the Newton loop because the
    residual certificate differentiates the samples twice.
    """
    x = periodic_grid(wp.X, L)
    sol = _integrate(_rhs, wp.X, [wp.b1, wp.b2], (wp.q, wp.c, p.F, p.nu),
                     rtol, atol, t_eval=np.append(x, wp.X))
    tau = sol.y[0, :L].copy()
    tau_x = sol.y[1, :L].copy()
    mismatch = float(np.max(np.abs(sol.y[:, -1] - wp.b)))
    return Profile(
        wave=wp, model=p, tau=tau, tau_x=tau_x,
        u=wp.q - wp.c * tau, u_x=-wp.c * tau_x,
        residual=profile_residual(tau, wp, p), mismatch=mismatch,
    )


def solve_profile(p, X, c, guess, L=DEFAULT_L, tol=NEWTON_TOL, max_iter=50,
                  allow_trivial=False):
    """Newton shooting for a periodic profile at fixed ``(X, c)``.

    Unknowns are ``(b1, q)`` with ``b2 = 0``.  Steps are halved (up to 20
    times) whenever the mismatch fails to decrease.
    """
    p.require_viscous()
    if c == 0:
        raise DomainError("c = 0: no nontrivial periodic profiles exist")
    wp = WaveParams(X=X, c=c, q=guess.q, b1=guess.b1, b2=0.0)
    H, J = shoot_with_jacobian(wp, p)
    r = np.linalg.norm(H)
    for it in range(max_iter):
        if r < tol:
            break
        if not np.all(np.isfinite(J)) or np.linalg.cond(J) > 1e14:
            raise SolverError(f"singular Newton Jacobian at c = {c:.12g}")
        step = np.linalg.solve(J, -H)
        lam = 1.0
        for _ in range(MAX_HALVINGS + 1):
            try:
                trial = replace(wp, b1=wp.b1 + lam * step[0], q=wp.q + lam * step[1])
                Ht, Jt = shoot_with_jacobian(trial, p)
                rt = np.linalg.norm(Ht)
            except (H1ViolationError, DomainError):
                rt = np.inf
            if rt < r:
                break
            lam *= 0.5
        else:
            if r < CERTIFICATE_TOL:
                break  # at the integrator noise floor
            raise SolverError(f"Newton stalled at c = {c:.12g} with |H| = {r:.3e}")
        wp, H, J, r = trial, Ht, Jt, rt
    else:
        if r >= CERTIFICATE_TOL:
            raise SolverError(
                f"Newton did not converge in {max_iter} iterations at c = {c:.12g} (|H| = {r:.3e})"
            )
    prof = sample_profile(wp, p, L)
    if not allow_trivial and prof.amplitude < 1e-9 * prof.tau.mean():
        raise SolverError(f"Newton converged to the constant state at c = {c:.12g}")
    return prof


def _scaled_mismatch(tau_e, c, a, X, p):
    wp = WaveParams(X=X, c=c, q=equilibrium_q(tau_e, c), b1=tau_e + a)
    return shoot(wp, p, rtol=1e-12, atol=1e-14) / a


def _fsolve(fun, x0, what):
    sol, info, ier, msg = fsolve(fun, x0, full_output=True, xtol=1e-11)
    if ier != 1 and not np.max(np.abs(info["fvec"])) < 1e-7:
        raise SolverError(f"{what} failed: {msg}")
    return sol


def hopf_branch_slope(p, X, a_probe=3e-3):
    """Fit ``c - c_s ~ k a^2`` for the small-amplitude branch at period ``X``.

    Returns ``(c_s, k)``; the branch exists on the side ``sign(c - c_s) = sign(k)``.
    """
    tau0 = tau0_for_period(p, X)
    c_s = speed_at_hopf(tau0, p)
    a = a_probe * tau0
    sol = _fsolve(lambda z: _scaled_mismatch(z[0], z[1], a, X, p), [tau0, c_s],
                  "Hopf branch probe")
    return c_s, (sol[1] - c_s) / a**2


def hopf_seed(p, X, c):
    """Initial guess on the Hopf branch at fixed period ``X`` and speed ``c``."""
    c_s, k = hopf_branch_slope(p, X)
    if (c - c_s) * k <= 0:
        side = "below" if k < 0 else "above"
        raise SolverError(
            f"no small-amplitude periodic wave at c = {c:.12g}: "
            f"the branch at X = {X:.6g} lies {side} c_s = {c_s:.12g}"
        )
    tau0 = tau0_for_period(p, X)
    a0 = np.sqrt((c - c_s) / k)
    sol = _fsolve(lambda z: _scaled_mismatch(z[0], c, z[1], X, p), [tau0, a0],
                  f"Hopf seed at c = {c:.12g}")
    tau_e, a = sol
    return WaveParams(X=X, c=c, q=equilibrium_q(tau_e, c), b1=tau_e + abs(a))


def continue_in_c(p, X, c_targets, L=DEFAULT_L, guess=None):
    """Natural-parameter continuation along ``c``, seeded from the Hopf point."""
    c_targets = [float(c) for c in c_targets]
    d = np.diff(c_targets)
    if len(d) and not (np.all(d > 0) or np.all(d < 0)):
        raise DomainError("c_targets must be strictly monotone")
    profiles = []
    for i, c in enumerate(c_targets):
        if i == 0:
            g = guess if guess is not None else hopf_seed(p, X, c)
        elif i == 1:
            g = profiles[-1].wave
        else:
            w1, w0 = profiles[-1].wave, profiles[-2].wave
            s = (c - w1.c) / (w1.c - w0.c)
            g = replace(w1, c=c, b1=w1.b1 + s * (w1.b1 - w0.b1), q=w1.q + s * (w1.q - w0.q))
        try:
            try:
                profiles.append(solve_profile(p, X, c, g, L))
            except SolverError:
                if i == 0:
                    raise
                # the predictor slid onto the constant state; reseed on the branch
                profiles.append(solve_profile(p, X, c, hopf_seed(p, X, c), L))
        except SolverError as exc:
            raise SolverError(f"continuation failed at c = {c:.12g}: {exc}") from exc
    return profiles


def profile_at_speed(p, X, c, L=DEFAULT_L, step=0.01):
    """Wave of period ``X`` and speed ``c`` on the Hopf branch.

    Close to the bifurcation the amplitude-scaled seed is used directly;
    farther out the branch is followed in relative steps of ``step``.
    """
    c_s, _ = hopf_branch_slope(p, X)
    rel = abs(c - c_s) / c_s
    if rel <= 2.0 * step:
        return solve_profile(p, X, c, hopf_seed(p, X, c), L)
    n = int(np.ceil(rel / step))
    targets = c_s + (c - c_s) * np.linspace(step / rel, 1.0, n)
    return continue_in_c(p, X, targets, L)[-1]


def transversality_check(wp, p, rel_step=1e-5, rank_tol=1e-5):
    """Rank and smallest singular value of ``dH/d(X, c, q, b1, b2)``.

    The 2x5 Jacobian is formed by central differences.
    """
    base = np.array([wp.X, wp.c, wp.q, wp.b1, wp.b2])
    J = np.zeros((2, 5))
    for k in range(5):
        h = rel_step * max(1.0, abs(base[k]))
        cols = []
        for sgn in (1.0, -1.0):
            v = base.copy()
            v[k] += sgn * h
            w = WaveParams(*v)
            cols.append(shoot(w, p, rtol=1e-12, atol=1e-14))
        J[:, k] = (cols[0] - cols[1]) / (2.0 * h)
    s = np.linalg.svd(J, compute_uv=False)
    return int(np.sum(s > rank_tol)), float(s[-1])


PROFILE_COLUMNS = ("x", "tau", "tau_x", "u", "u_x")


def save_profile(profile, path, extra=None):
    header = {
        "F": profile.model.F, "nu": profile.model.nu,
        "X": profile.wave.X, "c": profile.wave.c, "q": profile.wave.q,
        "b1": profile.wave.b1, "b2": profile.wave.b2,
        "L": profile.L, "residual": profile.residual, "mismatch": profile.mismatch,
    }
    header.update(extra or {})
    cols = np.column_stack([profile.x, profile.tau, profile.tau_x, profile.u, profile.u_x])
    write_table(path, header, PROFILE_COLUMNS, cols)


def load_profile(path):
    header, names, data = read_table(path)
    if tuple(names) != PROFILE_COLUMNS:
        raise ValueError(f"{path}: not a profile file (columns {names})")
    p = ModelParams(F=float(header["F"]), nu=float(header["nu"]))
    wp = WaveParams(X=float(header["X"]), c=float(header["c"]), q=float(header["q"]),
                    b1=float(header["b1"]), b2=float(header["b2"]))
    known = {"F", "nu", "X", "c", "q", "b1", "b2", "L", "residual", "mismatch"}
    return Profile(
        wave=wp, model=p,
        tau=data[:, 1].copy(), tau_x=data[:, 2].copy(), u=data[:, 3].copy(), u_x=data[:, 4].copy(),
        residual=float(header["residual"]), mismatch=float(header.get("mismatch", 0.0)),
        meta={k: v for k, v in header.items() if k not in known},
    )


def constant_profile(tau0, c, p, X, L=DEFAULT_L, u0=None):
    """A constant state dressed as a Profile (degenerate control case)."""
    if u0 is None:
        u0 = tau0**-0.5
    wp = WaveParams(X=X, c=c, q=u0 + c * tau0, b1=tau0)
    z = np.zeros(L)
    tau = np.full(L, float(tau0))
    return Profile(wave=wp, model=p, tau=tau, tau_x=z, u=np.full(L, float(u0)),
                   u_x=z.copy(), residual=profile_residual(tau, wp, p))
