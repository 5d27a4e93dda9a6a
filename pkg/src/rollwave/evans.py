"""Periodic Evans function of the linearized operator.

With ``W = (tau, u, u')`` the eigenvalue problem ``L v = lambda v`` becomes
the first-order system ``W' = G(x; lambda) W``.  The first row comes from
``lambda tau = c tau' + u'``, the third from solving the momentum row for
``u''``.  The profile ODE is integrated alongside so every coefficient,
including ``tau''`` and ``u''`` of the wave, is exact at any ``x``.

``D(xi, lambda) = det(M(lambda) - e^{i xi X} I)`` with ``M`` the
monodromy over one period.  Fundamental matrices are rescaled by powers of
two at segment ends; ``D = D_hat * 2**normalization``.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .bloch import _n_workers
from .errors import ContourError, DomainError, SolverError
from .io import write_csv
from .profile import _second_derivative

RTOL = 1e-12
ATOL = 1e-14
N_SEGMENTS = 8
RESCALE_THRESHOLD = 2.0**16
BATCH = 64
MAX_REFINE = 14
CONTOUR_COLUMNS = ("Re_lambda", "Im_lambda", "Re_D", "Im_D", "norm_exponent")


@dataclass(frozen=True)
class EvansSample:
    xi: float
    lam: complex
    value: complex  # D_hat
    normalization: int  # D = value * 2**normalization

    def full(self):
        return complex(math.ldexp(self.value.real, self.normalization),
                       math.ldexp(self.value.imag, self.normalization))

    def log_modulus(self):
        return math.log(abs(self.value)) + self.normalization * math.log(2.0) if self.value else -math.inf


@dataclass(frozen=True)
class Rectangle:
    lo: complex  # lower-left corner
    hi: complex  # upper-right corner

    def __post_init__(self):
        if not (self.hi.real > self.lo.real and self.hi.imag > self.lo.imag):
            raise DomainError("rectangle needs lo < hi in both real and imaginary parts")

    def vertices(self):
        a, b = self.lo, self.hi
        return [a, complex(b.real, a.imag), b, complex(a.real, b.imag)]

    def perimeter(self):
        return 2.0 * ((self.hi.real - self.lo.real) + (self.hi.imag - self.lo.imag))

    def contains(self, z):
        z = np.asarray(z)
        return (z.real > self.lo.real) & (z.real < self.hi.real) & \
               (z.imag > self.lo.imag) & (z.imag < self.hi.imag)

    def point(self, s):
        """Boundary point at parameter ``s`` in ``[0, 4)``, one unit per edge."""
        s = np.asarray(s, dtype=float) % 4.0
        v = self.vertices()
        k = np.minimum(np.floor(s).astype(int), 3)
        t = s - k
        start = np.array(v)[k]
        end = np.array(v[1:] + v[:1])[k]
        return start + t * (end - start)

    def samples(self, n):
        m = max(2, n // 4)
        t = 0.5 * (1.0 - np.cos(np.pi * np.arange(m) / m))  # clustered at both corners
        return np.concatenate([k + t for k in range(4)]), 4.0


@dataclass(frozen=True)
class Circle:
    center: complex
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise DomainError("circle radius must be positive")

    def vertices(self):
        return [self.center + self.radius * 1j**k for k in range(4)]

    def perimeter(self):
        return 2.0 * np.pi * self.radius

    def contains(self, z):
        return np.abs(np.asarray(z) - self.center) < self.radius

    def point(self, s):
        return self.center + self.radius * np.exp(2j * np.pi * np.asarray(s, dtype=float))

    def samples(self, n):
        return np.arange(n) / n, 1.0


@dataclass(frozen=True)
class ContourResult:
    contour: object
    xi: float
    winding: int
    min_modulus_on_contour: float  # min |D_hat| / max |D_hat| over the samples
    n_samples: int
    samples: tuple  # EvansSample per boundary point, in order


def _coeffs(tau, tp, q, c, F, nu):
    tpp = _second_derivative(tau, tp, q, c, F, nu)
    u = q - c * tau
    ux = -c * tp
    uxx = -c * tpp
    t3 = tau**-3
    B = nu * tau**-2
    Bx = -2.0 * nu * t3 * tp
    g = 1.0 / F - 2.0 * nu * ux
    A21 = -t3 * g
    A21x = 3.0 * t3 / tau * tp * g + t3 * 2.0 * nu * uxx
    C21 = -u * u
    C22 = -2.0 * u * tau
    return B, Bx, A21, A21x, C21, C22, tpp


def system_matrix(tau, tp, lam, wp, p):
    """``G(x; lambda)`` from the wave state ``(tau, tau')`` at ``x``."""
    c = wp.c
    B, Bx, A21, A21x, C21, C22, _ = _coeffs(tau, tp, wp.q, c, p.F, p.nu)
    return np.array([
        [lam / c, 0.0, -1.0 / c],
        [0.0, 0.0, 1.0],
        [(A21x + A21 * lam / c - C21) / B, (lam - C22) / B, (-Bx - A21 / c - c) / B],
    ], dtype=complex)


class EigenSystem:
    """``W' = G(x; lambda) W`` along a profile; ``G`` is evaluated from the wave ODE."""

    def __init__(self, profile, p, lam):
        wp = profile.wave
        if wp.c == 0:
            raise DomainError("c = 0: the first row cannot be solved for tau'")
        p.require_viscous()
        self.wave, self.model, self.lam = wp, p, complex(lam)
        sol = solve_ivp(_wave_rhs, (0.0, wp.X), [wp.b1, wp.b2], method="DOP853",
                        rtol=RTOL, atol=ATOL, dense_output=True, args=(wp.q, wp.c, p.F, p.nu))
        if sol.status != 0:
            raise SolverError(f"profile integration failed: {sol.message}")
        self._wave = sol.sol

    def wave_state(self, x):
        x = np.asarray(x, dtype=float) % self.wave.X
        return self._wave(x)

    def G(self, x):
        tau, tp = self.wave_state(x)
        return system_matrix(tau, tp, self.lam, self.wave, self.model)

    def translation_mode(self, x):
        """``(tau', u', u'')`` of the wave, which solves the system at ``lambda = 0``."""
        tau, tp = self.wave_state(x)
        c = self.wave.c
        tpp = _second_derivative(tau, tp, self.wave.q, c, self.model.F, self.model.nu)
        return np.array([tp, -c * tp, -c * tpp])


def eigen_system(profile, p, lam):
    return EigenSystem(profile, p, lam)


def _wave_rhs(x, y, q, c, F, nu):
    return np.array([y[1], _second_derivative(y[0], y[1], q, c, F, nu)])


def _batch_rhs(x, y, lams, q, c, F, nu):
    tau, tp = y[0].real, y[1].real
    B, Bx, A21, A21x, C21, C22, tpp = _coeffs(tau, tp, q, c, F, nu)
    n = lams.size
    Phi = y[2:].reshape(n, 3, 3)
    r0 = Phi[:, 0, :]
    r1 = Phi[:, 1, :]
    r2 = Phi[:, 2, :]
    lc = (lams / c)[:, None]
    d = np.empty_like(Phi)
    d[:, 0, :] = lc * r0 - r2 / c
    d[:, 1, :] = r2
    d[:, 2, :] = ((A21x - C21 + A21 * lc) * r0 + ((lams[:, None] - C22) * r1)
                  + (-Bx - A21 / c - c) * r2) / B
    out = np.empty_like(y)
    out[0] = tp
    out[1] = tpp
    out[2:] = d.ravel()
    return out


def _monodromy_batch(wp, p, lams, rtol, atol, n_segments):
    lams = np.asarray(lams, dtype=complex)
    n = lams.size
    Phi = np.tile(np.eye(3, dtype=complex), (n, 1, 1))
    expo = np.zeros(n, dtype=int)
    y = np.concatenate([[wp.b1, wp.b2], Phi.ravel()]).astype(complex)
    edges = np.linspace(0.0, wp.X, n_segments + 1)
    for a, b in zip(edges[:-1], edges[1:]):
        sol = solve_ivp(_batch_rhs, (a, b), y, method="DOP853", rtol=rtol, atol=atol,
                        args=(lams, wp.q, wp.c, p.F, p.nu))
        if sol.status != 0:
            raise SolverError(f"monodromy integration failed near x = {sol.t[-1]:.6g} "
                              f"for lambda in [{lams.min():.4g}, {lams.max():.4g}]: {sol.message}")
        y = sol.y[:, -1].copy()
        if not np.all(np.isfinite(y)):
            raise SolverError(f"monodromy overflow near x = {b:.6g}")
        Phi = y[2:].reshape(n, 3, 3)
        big = np.abs(Phi).reshape(n, -1).max(axis=1)
        s = np.where(big > RESCALE_THRESHOLD, np.frexp(big)[1], 0)
        Phi = np.ldexp(Phi.real, -s[:, None, None]) + 1j * np.ldexp(Phi.imag, -s[:, None, None])
        expo += s
        y[2:] = Phi.ravel()
    return Phi, expo


def monodromy(profile, p, lam, rtol=RTOL, atol=ATOL, n_segments=N_SEGMENTS):
    """``(M_hat, s)`` with ``M(lambda) = 2**s M_hat``."""
    if profile.wave.c == 0:
        raise DomainError("c = 0: the first row cannot be solved for tau'")
    p.require_viscous()
    Phi, expo = _monodromy_batch(profile.wave, p, [lam], rtol, atol, n_segments)
    return Phi[0], int(expo[0])


def _evans_batch(profile, p, xi, lams, rtol=RTOL, atol=ATOL, n_segments=N_SEGMENTS):
    wp = profile.wave
    if wp.c == 0:
        raise DomainError("c = 0: the first row cannot be solved for tau'")
    p.require_viscous()
    lams = np.atleast_1d(np.asarray(lams, dtype=complex))
    z = np.exp(1j * xi * wp.X)
    chunks = [lams[i:i + BATCH] for i in range(0, lams.size, BATCH)]

    def run(chunk):
        Phi, expo = _monodromy_batch(wp, p, chunk, rtol, atol, n_segments)
        zs = np.ldexp(1.0, -expo)
        Mz = Phi - (zs * z)[:, None, None] * np.eye(3)[None]
        return np.linalg.det(Mz), 3 * expo

    nw = _n_workers(len(chunks))
    if nw > 1:
        with ThreadPoolExecutor(nw) as pool:
            parts = list(pool.map(run, chunks))
    else:
        parts = [run(ch) for ch in chunks]
    vals = np.concatenate([v for v, _ in parts])
    expos = np.concatenate([e for _, e in parts])
    return [EvansSample(float(xi), complex(l), complex(v), int(e))
            for l, v, e in zip(lams, vals, expos)]


def evans_eval(profile, p, xi, lam, rtol=RTOL, atol=ATOL):
    """``D(xi, lambda)`` in scaled form; see :class:`EvansSample`."""
    return _evans_batch(profile, p, xi, [lam], rtol, atol)[0]


def _arg_steps(vals):
    ratio = np.roll(vals, -1) / vals
    return np.angle(ratio)


def phase_spacing(profile, p):
    """Contour step that keeps the phase of ``D`` from turning by more than ``pi/4``.

    ``G`` has the hyperbolic exponent ``lambda / c`` and two parabolic
    exponents ``~ sqrt(lambda / B)``; their ``lambda``-derivatives, summed
    over one period, bound how fast ``arg D`` rotates away from the origin.
    """
    B_min = p.nu / float(np.max(profile.tau)) ** 2
    rate = profile.wave.X * (1.0 / abs(profile.wave.c) + 1.0 / np.sqrt(B_min))
    return 0.25 * np.pi / rate


def winding_number(profile, p, xi, contour, n_points=64, rel_floor=1e-10, max_refine=MAX_REFINE):
    """Winding of ``D(xi, .)`` around ``contour`` by accumulated argument increments.

    The initial sampling is at least as dense as :func:`phase_spacing`.
    Every arc is then bisected until its increment is below ``pi/2`` and
    equals the sum of the increments over its two halves, which guards
    against phase wrapping between samples.  The contour is rejected when
    ``|D|`` on it drops below ``rel_floor`` times its maximum.
    """
    n0 = max(int(n_points), int(np.ceil(contour.perimeter() / phase_spacing(profile, p))))
    s, period = contour.samples(n0)
    s = list(s)
    samples = _evans_batch(profile, p, xi, contour.point(np.array(s)))
    verified = [False] * len(s)
    for _ in range(max_refine + 1):
        vals = np.array([e.value for e in samples])
        logmod = np.array([e.log_modulus() for e in samples])
        rel = np.exp(logmod - logmod.max())
        j = int(np.argmin(rel))
        if not rel[j] > rel_floor:
            raise ContourError(
                f"contour too close to a root: |D| ratio {rel[j]:.3e} at lambda = {samples[j].lam:.6g}",
                sample=samples[j],
            )
        steps = _arg_steps(vals)
        todo = [k for k in range(len(s)) if not verified[k] or abs(steps[k]) > 0.5 * np.pi]
        if not todo:
            total = steps.sum() / (2.0 * np.pi)
            w = int(round(total))
            if abs(total - w) > 1e-6:
                raise ContourError(f"non-integer winding {total:.6f}", sample=samples[j])
            return ContourResult(contour=contour, xi=float(xi), winding=w,
                                 min_modulus_on_contour=float(rel[j]), n_samples=len(s),
                                 samples=tuple(samples))
        mids = []
        for k in todo:
            a = s[k]
            b = s[(k + 1) % len(s)]
            if b <= a:
                b += period
            mids.append(0.5 * (a + b) % period)
        new = _evans_batch(profile, p, xi, contour.point(np.array(mids)))
        s_out, smp_out, ver_out = [], [], []
        mid_of = dict(zip(todo, zip(mids, new)))
        for k in range(len(s)):
            s_out.append(s[k])
            smp_out.append(samples[k])
            if k not in mid_of:
                ver_out.append(verified[k])
                continue
            m, e = mid_of[k]
            nxt = samples[(k + 1) % len(s)]
            d1 = np.angle(e.value / samples[k].value)
            d2 = np.angle(nxt.value / e.value)
            ok = abs(steps[k]) <= 0.5 * np.pi and abs(d1 + d2 - steps[k]) < 1e-9
            ver_out += [ok, ok]
            s_out.append(m)
            smp_out.append(e)
        s, samples, verified = s_out, smp_out, ver_out
    raise ContourError(f"argument increments unresolved after {max_refine} refinements",
                       sample=samples[0])


def save_contour(result, path, config_hash=None):
    rows = [(e.lam.real, e.lam.imag, e.value.real, e.value.imag, e.normalization)
            for e in result.samples]
    write_csv(path, CONTOUR_COLUMNS, rows, config_hash)
