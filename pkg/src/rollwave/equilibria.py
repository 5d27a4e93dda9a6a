"""Constant states: subcharacteristic test, dispersion relation, Hopf point.

The profile ODE linearized about ``tau = tau0`` is
``alpha tau'' + beta tau' + gamma tau = 0`` with ``alpha = c nu tau0^-2``,
``beta = c^2 - c_s^2`` and ``gamma = (u0^3/2 - c) / (u0/2)``.  Periodic
orbits branch off where ``beta = 0`` and ``gamma > 0``, i.e. at
``c = c_s = u0^3 / sqrt(F)`` with ``F > 4``.

The bifurcation frequency is ``omega = sqrt(gamma/alpha)``, which
simplifies to ``tau0^(5/4) nu^(-1/2) sqrt(sqrt(F) - 2)``; inverting
``omega = 2 pi / X`` gives ``tau0 = (nu omega^2 / (sqrt(F) - 2))^(2/5)``.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, NoHopfPointError
from .model import constant_coefficients, equilibrium_velocity

SUBCHARACTERISTIC_F = 4.0


@dataclass(frozen=True)
class HopfPoint:
    tau0: float
    u0: float
    c_s: float
    omega: float
    X: float


def subcharacteristic(p):
    """True iff the equilibrium speed lies strictly inside the frozen ones (F < 4)."""
    return p.F < SUBCHARACTERISTIC_F


def speed_at_hopf(tau0, p):
    """``c_s = u0^3 / sqrt(F) = (F tau0^3)^(-1/2)``."""
    if not tau0 > 0:
        raise DomainError("tau0 must be positive")
    return 1.0 / np.sqrt(p.F * tau0**3)


def symbol(tau0, c, p, xi):
    """Constant-coefficient symbol ``-i xi A - xi^2 B + C`` at the equilibrium."""
    A, B, C = constant_coefficients(tau0, p, c)
    return -1j * xi * A - xi**2 * B + C


def constant_state_spectrum(tau0, c, p, xi):
    """The two eigenvalues of the symbol, sorted by descending real part."""
    ev = np.linalg.eigvals(symbol(tau0, c, p, xi))
    return ev[np.argsort(-ev.real, kind="stable")]


def max_growth(tau0, c, p, xis):
    """``max Re lambda`` of the constant state over the sampled frequencies."""
    return max(constant_state_spectrum(tau0, c, p, xi)[0].real for xi in xis)


def linearized_profile_coefficients(tau0, c, p):
    """Return ``(alpha, beta, gamma)`` of the linearized profile equation."""
    p.require_viscous()
    u0 = equilibrium_velocity(tau0)
    c_s = speed_at_hopf(tau0, p)
    alpha = c * p.nu / tau0**2
    beta = c**2 - c_s**2
    gamma = (u0**3 / 2.0 - c) / (u0 / 2.0)
    return alpha, beta, gamma


def hopf_quadratic_roots(tau0, c, p):
    """Roots of ``alpha mu^2 + beta mu + gamma = 0``."""
    if not c > 0:
        raise DomainError("wave speed must be positive")
    alpha, beta, gamma = linearized_profile_coefficients(tau0, c, p)
    disc = np.sqrt(complex(beta * beta - 4.0 * alpha * gamma))
    # numerically stable pairing of the two roots
    s = -0.5 * (beta + (disc if beta >= 0 else -disc))
    if s == 0:
        r = np.sqrt(complex(-gamma / alpha))
        return np.array([r, -r])
    r1 = s / alpha
    r2 = gamma / s
    return np.array([r1, r2])


def _require_supercharacteristic(p):
    if p.F <= SUBCHARACTERISTIC_F:
        raise NoHopfPointError(
            f"subcharacteristic regime, no Hopf point (F={p.F} <= 4)"
        )
    p.require_viscous()


def hopf_frequency(tau0, p):
    _require_supercharacteristic(p)
    return tau0**1.25 / np.sqrt(p.nu) * np.sqrt(np.sqrt(p.F) - 2.0)


def hopf_point(tau0, p):
    _require_supercharacteristic(p)
    if not tau0 > 0:
        raise DomainError("tau0 must be positive")
    omega = hopf_frequency(tau0, p)
    return HopfPoint(
        tau0=float(tau0),
        u0=float(equilibrium_velocity(tau0)),
        c_s=float(speed_at_hopf(tau0, p)),
        omega=float(omega),
        X=float(2.0 * np.pi / omega),
    )


def tau0_for_period(p, X):
    """Equilibrium whose Hopf bifurcation has period ``X``."""
    _require_supercharacteristic(p)
    if not X > 0:
        raise DomainError("period must be positive")
    omega = 2.0 * np.pi / X
    return float((p.nu * omega**2 / (np.sqrt(p.F) - 2.0)) ** 0.4)
