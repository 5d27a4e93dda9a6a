"""Lagrangian St. Venant system and its linearization about a periodic wave.

In Lagrangian coordinates with ``tau = 1/h`` the equations read::

    tau_t - u_x = 0
    u_t + ((2F)^-1 tau^-2)_x = 1 - tau u^2 + nu (tau^-2 u_x)_x

Linearizing the comoving form about a stationary profile gives
``v_t = (B v_x)_x - (A v)_x + C v`` with 2x2 periodic coefficient fields
built by :func:`coefficients`.  The symmetrizer/compensator diagnostics
(:func:`symmetrizer`, :func:`coercivity_check`) certify the structural
conditions behind the energy estimates.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .grid import periodic_grid, spectral_derivative

DEFAULT_ETA = 0.01


@dataclass(frozen=True)
class ModelParams:
    F: float
    nu: float

    def __post_init__(self):
        if not self.F > 0:
            raise DomainError(f"Froude number must be positive, got F={self.F}")
        if not self.nu >= 0:
            raise DomainError(f"viscosity must be non-negative, got nu={self.nu}")

    def require_viscous(self):
        if not self.nu > 0:
            raise DomainError("operation requires nu > 0")


@dataclass(frozen=True)
class StateVec:
    tau: float
    u: float


@dataclass(frozen=True)
class CoefficientFields:
    """Pointwise linearization coefficients, each of shape ``(L, 2, 2)``."""

    grid: np.ndarray
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    c: float

    @property
    def L(self):
        return self.grid.size


@dataclass(frozen=True)
class SymmetrizerFields:
    Sigma: np.ndarray  # (L, 2, 2), diagonal
    delta_sq: np.ndarray  # (L,)
    K: np.ndarray  # (2, 2)
    eta: float


def _check_tau(tau):
    tau = np.asarray(tau, dtype=float)
    if np.any(~(tau > 0)):
        raise DomainError("specific volume tau must be positive (H1)")
    return tau


def flux(U, p):
    """Lagrangian flux ``f(U) = (-u, (2F)^-1 tau^-2)``."""
    tau = _check_tau(U.tau)
    return np.array([-U.u, 1.0 / (2.0 * p.F * tau**2)])


def source(U):
    """Relaxation source ``(0, 1 - tau u^2)``."""
    return np.array([0.0, 1.0 - U.tau * U.u**2])


def equilibrium_velocity(tau0):
    """Velocity that balances gravity and friction at specific volume ``tau0``."""
    return _check_tau(tau0) ** -0.5


def _fields(tau, u, u_x, p, c):
    tau = _check_tau(tau)
    u = np.asarray(u, dtype=float)
    u_x = np.asarray(u_x, dtype=float)
    L = tau.size
    A = np.zeros((L, 2, 2))
    A[:, 0, 0] = -c
    A[:, 0, 1] = -1.0
    A[:, 1, 0] = -(tau**-3) * (1.0 / p.F - 2.0 * p.nu * u_x)
    A[:, 1, 1] = -c
    B = np.zeros((L, 2, 2))
    B[:, 1, 1] = p.nu * tau**-2
    C = np.zeros((L, 2, 2))
    C[:, 1, 0] = -(u**2)
    C[:, 1, 1] = -2.0 * u * tau
    return A, B, C


def coefficients(profile, p, c):
    """Sample ``A``, ``B``, ``C`` on the profile grid.

    ``u_x`` is recomputed as the spectral derivative of the sampled
    velocity so the coefficients depend only on the stored samples.
    """
    X = profile.wave.X
    u_x = spectral_derivative(np.asarray(profile.u, dtype=float), X)
    A, B, C = _fields(profile.tau, profile.u, u_x, p, c)
    return CoefficientFields(periodic_grid(X, len(profile.tau)), A, B, C, c)


def constant_coefficients(tau0, p, c, u0=None):
    """Coefficients at a constant state (``u0`` defaults to the equilibrium)."""
    if u0 is None:
        u0 = equilibrium_velocity(tau0)
    A, B, C = _fields(np.array([tau0]), np.array([u0]), np.array([0.0]), p, c)
    return A[0], B[0], C[0]


def symmetrizer(cf, eta=DEFAULT_ETA):
    """Friedrichs symmetrizer ``Sigma = diag(1, delta^-2)`` and compensator ``K``.

    ``delta^2 = -A_21`` pointwise, which makes ``Sigma A`` exactly symmetric.
    """
    delta_sq = -cf.A[:, 1, 0]
    if np.any(delta_sq <= 0):
        j = int(np.argmin(delta_sq))
        raise DomainError(
            f"delta^2 = {delta_sq[j]:.3e} <= 0 at x = {cf.grid[j]:.6g}: "
            "amplitude condition fails, Sigma is not positive definite"
        )
    Sigma = np.zeros_like(cf.A)
    Sigma[:, 0, 0] = 1.0
    Sigma[:, 1, 1] = 1.0 / delta_sq
    K = eta * np.array([[0.0, -1.0], [1.0, 0.0]])
    return SymmetrizerFields(Sigma, delta_sq, K, eta)


def coercivity_check(sf, cf):
    """Smallest eigenvalue of the symmetric part of ``Sigma B + K A`` over the grid."""
    M = sf.Sigma @ cf.B + sf.K[None, :, :] @ cf.A
    S = 0.5 * (M + np.swapaxes(M, 1, 2))
    return float(np.linalg.eigvalsh(S)[:, 0].min())


@dataclass(frozen=True)
class AmplitudeCondition:
    holds: bool
    margin: float  # min(F^-1 - nu u_x)
    strict_margin: float  # min(F^-1 - 2 nu u_x), the symmetrizability margin
    strict_holds: bool


def amplitude_condition(profile, p):
    """Evaluate the derivative bound ``nu u_x < F^-1`` on the sampled wave.

    Both the stated bound and the variant ``2 nu u_x < F^-1`` (positivity of
    ``-A_21``) are reported.
    """
    u_x = spectral_derivative(np.asarray(profile.u, dtype=float), profile.wave.X)
    margin = float(np.min(1.0 / p.F - p.nu * u_x))
    strict = float(np.min(1.0 / p.F - 2.0 * p.nu * u_x))
    return AmplitudeCondition(margin > 0, margin, strict, strict > 0)


def eulerian_threshold(c, p):
    """Bound ``(c nu F)^-1`` on ``h_x / h`` equivalent to the amplitude condition."""
    if not (c > 0 and p.nu > 0 and p.F > 0):
        raise DomainError("eulerian_threshold requires c, nu, F > 0")
    return 1.0 / (c * p.nu * p.F)
