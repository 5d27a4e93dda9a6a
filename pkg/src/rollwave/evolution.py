"""Time evolution: linearized Bloch systems and the full nonlinear problem.

The linearized stepper advances ``w_t = T(xi) w`` with the same spatial
discretization as :func:`rollwave.bloch.assemble_bloch`.  One step is a
Strang splitting: a trapezoidal half step on the diffusion block, an
explicit midpoint step on convection and source, and another trapezoidal
half step.

The nonlinear solver integrates the comoving conservation law::

    tau_t + (-c tau - u)_x = 0
    u_t + (-c u + (2F)^-1 tau^-2)_x = 1 - tau u^2 + nu (tau^-2 u_x)_x

on ``[-N X, N X)`` with central flux differencing and SSP-RK3.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .bloch import bloch_parts, interleave
from .errors import DomainError, SolverError
from .grid import resample
from .io import write_csv

HISTORY_COLUMNS = ("t", "L2_dev", "Linf_dev")
TIME_SAFETY = 0.5


@dataclass
class EvolutionState:
    t: float
    grid: dict
    fields: np.ndarray  # (2, L): tau and u components
    norms: list = field(default_factory=list)  # (t, L2, Linf) rows

    def l2(self):
        h = self.grid["h"]
        return float(np.sqrt(h * np.sum(np.abs(self.fields) ** 2)))


def _flat(fields):
    return interleave(fields[0], fields[1])


def _unflat(w):
    return np.vstack([w[0::2], w[1::2]])


class LinearizedStepper:
    """Prefactored IMEX stepper for ``w_t = T(xi) w`` at a fixed ``dt``."""

    def __init__(self, profile, p, xi, dt, scheme="forward", L=None):
        if not dt > 0:
            raise DomainError("dt must be positive")
        E, V, L, X = bloch_parts(profile, p, xi, scheme, L)
        self.xi, self.dt, self.scheme, self.L, self.X = float(xi), float(dt), scheme, L, X
        self.h = X / L
        self.E = sp.csr_matrix(E)
        V = sp.csc_matrix(V)
        I = sp.identity(2 * L, dtype=complex, format="csc")
        self._rhs = (I + 0.25 * dt * V).tocsr()
        try:
            self._lu = spla.splu((I - 0.25 * dt * V).tocsc())
        except RuntimeError as exc:
            raise SolverError(f"diffusion solve factorization failed: {exc}") from exc

    def _half_diffusion(self, w):
        return self._lu.solve(self._rhs @ w)

    def step_vector(self, w):
        w = self._half_diffusion(w)
        w = w + self.dt * (self.E @ (w + 0.5 * self.dt * (self.E @ w)))
        return self._half_diffusion(w)

    def state(self, fields, t=0.0):
        grid = {"kind": "bloch", "X": self.X, "L": self.L, "h": self.h, "xi": self.xi}
        return EvolutionState(t=float(t), grid=grid, fields=np.asarray(fields, dtype=complex))

    def step(self, state):
        w = self.step_vector(_flat(np.asarray(state.fields, dtype=complex)))
        new = EvolutionState(t=state.t + self.dt, grid=state.grid, fields=_unflat(w),
                             norms=list(state.norms))
        if not np.all(np.isfinite(w)):
            raise SolverError(f"linearized evolution blew up at t = {new.t:.6g}")
        return new


def linearized_step(state, profile, p, xi, dt, scheme="forward"):
    """Advance ``state`` by one IMEX step of the Bloch system at ``xi``."""
    L = np.asarray(state.fields).shape[1]
    return LinearizedStepper(profile, p, xi, dt, scheme, L).step(state)


def default_dt(profile, scheme, L, cfl=0.5):
    """Advective step limit ``cfl h / max |speed|`` on the comoving frame."""
    tau = resample(profile.tau, L) if L != profile.L else profile.tau
    delta = np.sqrt(np.max(tau**-3) / profile.model.F)
    speed = abs(profile.wave.c) + delta
    h = profile.wave.X / L
    if scheme == "fourier":
        h = h / np.pi
    return cfl * h / speed


def square_pulse(X, L):
    """Indicator of ``[X/4, 3X/4]`` on the periodic grid."""
    x = np.arange(L) * (X / L)
    return ((x >= 0.25 * X) & (x <= 0.75 * X)).astype(float)


@dataclass(frozen=True)
class PowerEstimate:
    value: float
    floor_time: float | None
    log_norms: tuple  # log L2 norm at (0, T, 2T)

    def __float__(self):
        return float(self.value)


def power_estimate(profile, p, xi, T_horizon, scheme="forward", L=None, dt=None):
    """``T^-1 log(|e^{2T T(xi)} f| / |e^{T T(xi)} f|)`` for the square pulse ``f``.

    The vector is renormalized every step and the logarithm of the norm is
    accumulated, so only an exactly vanishing solution counts as underflow;
    then the value is ``-inf`` and ``floor_time`` records when it happened.
    """
    if not T_horizon > 0:
        raise DomainError("T_horizon must be positive")
    L = profile.L if L is None else L
    if dt is None:
        dt = default_dt(profile, scheme, L)
    n = int(np.ceil(T_horizon / dt))
    dt = T_horizon / n
    st = LinearizedStepper(profile, p, xi, dt, scheme, L)
    f = square_pulse(profile.wave.X, st.L)
    w = _flat(np.vstack([f, f]).astype(complex))
    lognorm = 0.0
    h = st.h
    logs = [0.5 * np.log(h * np.vdot(w, w).real)]
    lognorm = logs[0]
    nrm = np.linalg.norm(w)
    w = w / nrm
    for k in range(1, 2 * n + 1):
        w = st.step_vector(w)
        nrm = np.linalg.norm(w)
        if not np.isfinite(nrm):
            raise SolverError(f"power iteration overflowed at t = {k * dt:.6g}")
        if nrm == 0.0:
            return PowerEstimate(-np.inf, k * dt, tuple(logs))
        lognorm += np.log(nrm)
        w = w / nrm
        if k == n or k == 2 * n:
            logs.append(lognorm)
    return PowerEstimate((logs[2] - logs[1]) / T_horizon, None, tuple(logs))


# nonlinear problem


def _tile(profile, N, L_per_period):
    tau = resample(profile.tau, L_per_period) if L_per_period != profile.L else profile.tau
    u = resample(profile.u, L_per_period) if L_per_period != profile.L else profile.u
    return np.vstack([np.tile(tau, 2 * N), np.tile(u, 2 * N)])


def nonlinear_rhs(U, c, p, h):
    """Method-of-lines right-hand side of the comoving system on a periodic grid."""
    tau, u = U
    if np.any(~(tau > 0)):
        j = int(np.argmin(tau))
        raise DomainError(f"tau <= 0 (vacuum) at grid index {j}")
    f1 = -c * tau - u
    f2 = -c * u + 0.5 / (p.F * tau**2)
    g1 = 0.5 * (f1 + np.roll(f1, -1))  # interface j+1/2
    g2 = 0.5 * (f2 + np.roll(f2, -1))
    m = tau**-2.0
    m_half = 0.5 * (m + np.roll(m, -1))
    visc = p.nu * m_half * (np.roll(u, -1) - u) / h
    g2 = g2 - visc
    r1 = -(g1 - np.roll(g1, 1)) / h
    r2 = -(g2 - np.roll(g2, 1)) / h + 1.0 - tau * u * u
    return np.vstack([r1, r2])


def _stable_dt(U, c, p, h, cfl):
    tau = U[0]
    speed = abs(c) + np.sqrt(np.max(tau**-3) / p.F)
    diff = p.nu * np.max(tau**-2.0)
    dt_adv = cfl * h / speed
    dt_diff = cfl * h * h / (2.0 * diff) if diff > 0 else np.inf
    return min(dt_adv, dt_diff)


@dataclass
class NonlinearRun:
    final: EvolutionState
    history: np.ndarray  # columns t, L2_dev, Linf_dev
    mass_drift: float  # relative change of sum(tau) h
    truncation_estimate: float  # T_end * |R_h(profile)|_inf
    peak_shift: int  # cells between initial and final argmax of tau
    dt: float

    def growth_factor(self):
        d = self.history[:, 2]
        return float(d[-1] / d[0]) if d[0] > 0 else np.inf

    def save_history(self, path, config_hash=None):
        write_csv(path, HISTORY_COLUMNS, self.history, config_hash)


def nonlinear_evolve(profile, p, N=32, perturbation=0.0, T_end=None, L_per_period=128,
                     cfl=0.4, record_every=1.0, max_steps=10_000_000):
    """Evolve the tiled profile plus a centered square pulse on ``[-N X, N X)``.

    ``perturbation`` is the pulse amplitude (both components, support
    ``[-X/2, X/2]``).  ``T_end`` defaults to ``0.5 N X`` and may not exceed it.
    """
    X = profile.wave.X
    c = profile.wave.c
    if N < 1:
        raise DomainError("N must be a positive integer")
    T_max = TIME_SAFETY * N * X
    if T_end is None:
        T_end = T_max
    if not 0 < T_end <= T_max:
        raise DomainError(f"T_end = {T_end} outside (0, {T_max:.6g}] = (0, 0.5 N X]")
    M = 2 * N * L_per_period
    h = X / L_per_period
    x = -N * X + h * np.arange(M)
    base = _tile(profile, N, L_per_period)
    U = base.copy()
    if perturbation:
        U += perturbation * (np.abs(x) <= 0.5 * X)[None, :]
    trunc = float(np.max(np.abs(nonlinear_rhs(base, c, p, h)))) * T_end
    mass0 = float(np.sum(U[0]) * h)
    dt = _stable_dt(U, c, p, h, cfl)
    n = int(np.ceil(T_end / dt))
    if n > max_steps:
        raise SolverError(f"{n} time steps exceed max_steps = {max_steps}")
    dt = T_end / n

    def dev_row(t, U):
        d = U - base
        return (t, float(np.sqrt(h * np.sum(d * d))), float(np.max(np.abs(d))))

    hist = [dev_row(0.0, U)]
    next_rec = record_every
    peak0 = int(np.argmax(base[0]))
    for k in range(1, n + 1):
        if dt > _stable_dt(U, c, p, h, 1.0):
            raise SolverError(f"CFL violated at t = {(k - 1) * dt:.6g}")
        U1 = U + dt * nonlinear_rhs(U, c, p, h)
        U2 = 0.75 * U + 0.25 * (U1 + dt * nonlinear_rhs(U1, c, p, h))
        U = U / 3.0 + 2.0 / 3.0 * (U2 + dt * nonlinear_rhs(U2, c, p, h))
        if not np.all(np.isfinite(U)):
            raise SolverError(f"nonlinear evolution blew up at t = {k * dt:.6g}")
        t = k * dt
        if t >= next_rec - 1e-12 or k == n:
            hist.append(dev_row(t, U))
            next_rec += record_every
    mass = float(np.sum(U[0]) * h)
    # compare peaks within the central period only
    j0 = N * L_per_period
    peak1 = int(np.argmax(U[0, j0:j0 + L_per_period])) + j0
    peak0 = int(np.argmax(base[0, j0:j0 + L_per_period])) + j0
    grid = {"kind": "line", "N": N, "X": X, "L": M, "h": h, "x0": -N * X}
    final = EvolutionState(t=T_end, grid=grid, fields=U, norms=hist)
    return NonlinearRun(
        final=final, history=np.array(hist), mass_drift=abs(mass - mass0) / abs(mass0),
        truncation_estimate=trunc, peak_shift=abs(peak1 - peak0), dt=dt,
    )
