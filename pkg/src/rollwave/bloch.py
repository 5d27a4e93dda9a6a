"""Discretized Bloch operators ``T(xi)`` and their spectra.

``T(xi) = (D_o + i xi) B (D_i + i xi) - (D_i + i xi) A + C`` acts on
interleaved grid vectors ``(tau_0, u_0, tau_1, u_1, ...)``.  Two schemes
are provided:

``forward``
    ``D_i`` is the periodic forward difference.  The diffusion term uses
    the backward difference ``D_o`` on the outside so that it is the usual
    conservative three-point Laplacian; two forward differences would put
    spurious eigenvalues of size ``4/h^2`` in the right half plane.
``fourier``
    ``D_i = D_o`` is the Fourier collocation derivative.  Even grids are
    bumped to ``L + 1`` points: on an even grid the Nyquist mode is
    annihilated by the derivative and contributes a spurious exact zero
    eigenvalue at ``xi = 0``.

Bloch frequencies keep the physical period: ``xi`` ranges over
``[-pi/X, pi/X]``.
"""

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np
import scipy.linalg as sla
from scipy.optimize import linear_sum_assignment

from .errors import SolverError, TrackingError
from .grid import (backward_diff_matrix, forward_diff_matrix, fourier_diff_matrix,
                   periodic_grid, resample, spectral_derivative)
from .model import DEFAULT_ETA, amplitude_condition, coefficients, coercivity_check, symmetrizer

SCHEMES = ("forward", "fourier")
N_LEADING = 6
THREADS_ENV = "ROLLWAVE_THREADS"


@dataclass(frozen=True, eq=False)
class BlochOperator:
    xi: float
    scheme: str
    L: int
    X: float
    matrix: np.ndarray


@dataclass(frozen=True, eq=False)
class SpectrumCurve:
    xis: np.ndarray
    R: np.ndarray
    leading: np.ndarray  # (n_xi, k)


@dataclass(frozen=True, eq=False)
class ZeroStructure:
    multiplicity: int
    kernel_dim: int
    right_kernel_residual: float
    left_kernel_residual: float
    tol: float
    near_zero: np.ndarray


@dataclass(frozen=True, eq=False)
class CriticalExpansion:
    a: np.ndarray
    b: np.ndarray
    fit_residual: float
    xis: np.ndarray
    tracks: np.ndarray  # (n_xi, n_modes), includes xi = 0


def grid_size(L, scheme):
    """Number of points actually used by ``scheme`` for a requested ``L``."""
    if scheme == "fourier" and L % 2 == 0:
        return L + 1
    return L


def _resampled(profile, L, scheme=None):
    L = profile.L if L is None else L
    L = grid_size(L, scheme)
    if L == profile.L:
        return profile
    from dataclasses import replace

    X = profile.wave.X
    tau = resample(profile.tau, L)
    u = resample(profile.u, L)
    return replace(profile, tau=tau, u=u,
                   tau_x=spectral_derivative(tau, X), u_x=spectral_derivative(u, X))


def _diff_pair(X, L, scheme):
    if scheme == "forward":
        return forward_diff_matrix(X, L), backward_diff_matrix(X, L)
    if scheme == "fourier":
        D = fourier_diff_matrix(X, L)
        return D, D
    raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")


def interleave(first, second):
    v = np.empty(2 * len(first), dtype=np.result_type(first, second))
    v[0::2] = first
    v[1::2] = second
    return v


def bloch_parts(profile, p, xi, scheme="forward", L=None):
    """Split ``T(xi)`` into its explicit part ``-(D + i xi) A + C`` and the diffusion part.

    Both are dense interleaved ``2L x 2L`` matrices; returns
    ``(explicit, diffusion, L, X)``.
    """
    prof = _resampled(profile, L, scheme)
    L = prof.L
    X = prof.wave.X
    cf = coefficients(prof, p, prof.wave.c)
    D_in, D_out = _diff_pair(X, L, scheme)
    I = np.eye(L)
    Dp = D_in + 1j * xi * I
    Dm = D_out + 1j * xi * I
    E = np.zeros((L, 2, L, 2), dtype=complex)
    V = np.zeros((L, 2, L, 2), dtype=complex)
    for k in range(2):
        for m in range(2):
            E[:, k, :, m] = -Dp * cf.A[:, k, m][None, :] + np.diag(cf.C[:, k, m])
            if np.any(cf.B[:, k, m]):
                V[:, k, :, m] = (Dm * cf.B[:, k, m][None, :]) @ Dp
    return E.reshape(2 * L, 2 * L), V.reshape(2 * L, 2 * L), L, X


def assemble_bloch(profile, p, xi, scheme="forward", L=None):
    """Dense ``2L x 2L`` discretization of the Bloch operator at frequency ``xi``."""
    E, V, L, X = bloch_parts(profile, p, xi, scheme, L)
    return BlochOperator(xi=float(xi), scheme=scheme, L=L, X=X, matrix=E + V)


def spectrum(op):
    """All eigenvalues of ``T(xi)``, sorted by descending real part."""
    try:
        ev = np.linalg.eigvals(op.matrix)
    except np.linalg.LinAlgError as exc:
        raise SolverError(f"eigensolver failed at xi = {op.xi}: {exc}") from exc
    return ev[np.argsort(-ev.real, kind="stable")]


def _n_workers(n_tasks):
    env = os.environ.get(THREADS_ENV)
    n = int(env) if env else 1
    return max(1, min(n, n_tasks))


def r_curve(profile, p, xi_grid, scheme="forward", L=None, k=N_LEADING):
    """``R(xi) = max Re spectrum(T(xi))`` with the ``k`` leading eigenvalues per ``xi``."""
    xis = np.asarray(xi_grid, dtype=float)
    prof = _resampled(profile, L, scheme)

    def one(xi):
        return spectrum(assemble_bloch(prof, p, xi, scheme))[:k]

    n = _n_workers(xis.size)
    if n > 1:
        with ThreadPoolExecutor(n) as pool:
            lead = list(pool.map(one, xis))
    else:
        lead = [one(xi) for xi in xis]
    lead = np.array(lead)
    return SpectrumCurve(xis=xis, R=lead[:, 0].real.copy(), leading=lead)


def xi_grid(X, n=51, extent=1.0):
    """Symmetric grid on ``[-extent pi/X, extent pi/X]``."""
    return np.linspace(-extent * np.pi / X, extent * np.pi / X, n)


def tol_zero(h, scheme="forward", matrix_norm=None):
    """Radius inside which an eigenvalue of ``T(0)`` counts as zero.

    ``forward`` resolves the zero pair only to ``O(h)``.  For ``fourier``
    the limit is the ``sqrt(eps ||T||)`` splitting of a Jordan pair.
    """
    if scheme == "forward":
        return max(10.0 * h, 1e-6)
    if matrix_norm is None:
        return 1e-6
    return max(1e-6, 10.0 * np.sqrt(np.finfo(float).eps * matrix_norm))


def zero_structure(profile, p, scheme="forward", L=None, tol=None):
    """Zero-eigenvalue multiplicity, kernel dimension and kernel residuals of ``T(0)``."""
    prof = _resampled(profile, L, scheme)
    op = assemble_bloch(prof, p, 0.0, scheme)
    T = op.matrix
    h = op.X / op.L
    if tol is None:
        tol = tol_zero(h, scheme, np.linalg.norm(T, 1))
    ev = np.linalg.eigvals(T)
    near = ev[np.abs(ev) < tol]
    s = np.linalg.svd(T, compute_uv=False)
    kernel_dim = int(np.sum(s < tol))
    X = op.X
    right = interleave(spectral_derivative(prof.tau, X), spectral_derivative(prof.u, X))
    left = interleave(np.ones(op.L), np.zeros(op.L))
    nr = np.linalg.norm(right)
    right_res = float(np.linalg.norm(T @ right) / nr) if nr > 0 else float("nan")
    left_res = float(np.linalg.norm(left @ T) / np.linalg.norm(left))
    return ZeroStructure(
        multiplicity=int(near.size), kernel_dim=kernel_dim,
        right_kernel_residual=right_res, left_kernel_residual=left_res,
        tol=float(tol), near_zero=near[np.argsort(np.abs(near))],
    )


def _invariant_basis(vecs):
    q, _ = np.linalg.qr(vecs)
    return q


def _select(T, Q, n_modes):
    ev, V = sla.eig(T)
    V = V / np.linalg.norm(V, axis=0)
    overlap = np.linalg.norm(Q.conj().T @ V, axis=0)
    order = np.argsort(-overlap)
    chosen = order[:n_modes]
    lo = overlap[chosen[-1]]
    hi = overlap[order[n_modes]] if order.size > n_modes else 0.0
    return ev[chosen], V[:, chosen], lo, hi


def critical_expansion(profile, p, scheme="fourier", L=None, xi_max=None, n_samples=8,
                       n_modes=2, min_overlap=0.6, max_refine=12):
    """Follow the eigenvalues leaving ``lambda = 0`` and fit their Taylor coefficients.

    The ``n_modes`` eigenvalues nearest the origin at ``xi = 0`` are
    continued to ``xi_max`` by maximal eigenvector overlap with the
    previously tracked invariant subspace, halving the step whenever the
    selection is ambiguous.  A least-squares fit of
    ``lambda_j = -i a_j xi - b_j xi^2 + d_j xi^3`` gives ``a_j`` and ``b_j``.
    """
    prof = _resampled(profile, L, scheme)
    X = prof.wave.X
    if xi_max is None:
        xi_max = 0.05 * np.pi / X
    T0 = assemble_bloch(prof, p, 0.0, scheme).matrix
    ev, V = sla.eig(T0)
    idx = np.argsort(np.abs(ev))[:n_modes]
    lam = ev[idx][np.argsort(ev[idx].imag)]
    Q = _invariant_basis(V[:, idx] / np.linalg.norm(V[:, idx], axis=0))
    xis = [0.0]
    tracks = [lam]
    targets = list(np.linspace(0.0, xi_max, n_samples + 1)[1:])
    step = xi_max / n_samples
    refinements = 0
    while targets:
        xi = targets[0]
        T = assemble_bloch(prof, p, xi, scheme).matrix
        ev_sel, V_sel, lo, hi = _select(T, Q, n_modes)
        if lo < min_overlap or hi > lo * 0.9:
            if refinements >= max_refine:
                raise TrackingError(
                    f"eigenvalue tracking ambiguous near xi = {xi:.3e} "
                    f"(overlaps {lo:.3f} vs {hi:.3f}); reduce xi_max or the step"
                )
            refinements += 1
            step *= 0.5
            targets.insert(0, xis[-1] + step)
            continue
        if len(tracks) >= 2:
            pred = 2 * tracks[-1] - tracks[-2]
        else:
            pred = tracks[-1]
        cost = np.abs(pred[:, None] - ev_sel[None, :])
        _, col = linear_sum_assignment(cost)
        tracks.append(ev_sel[col])
        xis.append(xi)
        targets.pop(0)
        Q = _invariant_basis(V_sel)
    xis = np.array(xis)
    tracks = np.array(tracks)
    s = xis[1:]
    M = np.column_stack([-1j * s, -(s**2), s**3])
    coef, *_ = np.linalg.lstsq(M, tracks[1:] - tracks[0], rcond=None)
    fit = M @ coef - (tracks[1:] - tracks[0])
    rms = float(np.sqrt(np.mean(np.abs(fit) ** 2)))
    return CriticalExpansion(a=coef[0], b=coef[1], fit_residual=rms, xis=xis, tracks=tracks)


@dataclass
class Verdict:
    holds: bool
    value: float
    tol: float
    note: str = ""


@dataclass
class StabilityReport:
    D1: Verdict
    D2: Verdict
    D3prime: Verdict
    H3: Verdict
    H4: Verdict
    amplitude: Verdict
    coercivity: Verdict

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: Verdict(**v) for k, v in d.items()})

    @property
    def spectrally_stable(self):
        return self.D1.holds and self.D2.holds and self.D3prime.holds


def _failed(name, exc):
    return Verdict(False, float("nan"), float("nan"), f"{name} failed: {exc}")


def assess_stability(profile, p, scheme="fourier", L=None, n_xi=41, d2_window=0.5,
                     d1_tol=1e-8, h3_tol=1e-6, eta=DEFAULT_ETA, expansion_kw=None, timings=None):
    """Evaluate every structural and spectral hypothesis on one wave.

    Stages that raise produce a failed verdict with the error recorded in
    its note instead of aborting the whole report.  Wall times per stage
    are written into ``timings`` when a dict is passed.
    """
    timings = {} if timings is None else timings
    clock = time.perf_counter
    t0 = clock()
    prof = _resampled(profile, L, scheme)
    X = prof.wave.X
    xis = xi_grid(X, n_xi)
    try:
        curve = r_curve(prof, p, xis, scheme)
        nz = np.abs(xis) * X > 1e-12
        r_max = float(curve.R[nz].max())
        D1 = Verdict(r_max < d1_tol, r_max, d1_tol, "max Re spectrum over xi != 0")
        win = nz & (np.abs(xis) * X <= d2_window)
        theta = float(np.min(-curve.R[win] / xis[win] ** 2))
        D2 = Verdict(theta > 0, theta, d2_window, "theta = min(-R/xi^2), |xi| X <= tol")
    except Exception as exc:  # noqa: BLE001 - partial report
        D1, D2 = _failed("D1", exc), _failed("D2", exc)
    timings["r_curve"] = clock() - t0
    t0 = clock()
    try:
        zs = zero_structure(prof, p, scheme)
        D3 = Verdict(zs.multiplicity == 2, zs.multiplicity, zs.tol, "eigenvalues of T(0) within tol")
        H4 = Verdict(zs.kernel_dim == 1, zs.kernel_dim, zs.tol, "singular values of T(0) within tol")
    except Exception as exc:  # noqa: BLE001
        D3, H4 = _failed("D3prime", exc), _failed("H4", exc)
    timings["zero_structure"] = clock() - t0
    t0 = clock()
    try:
        ce = critical_expansion(prof, p, scheme, **(expansion_kw or {}))
        real = bool(np.all(np.abs(ce.a.imag) < max(h3_tol, 10 * ce.fit_residual)))
        gap = float(abs(ce.a[0].real - ce.a[1].real)) if ce.a.size > 1 else 0.0
        H3 = Verdict(real and gap > h3_tol, gap, h3_tol,
                     f"a = {[complex(z) for z in ce.a]}, b = {[complex(z) for z in ce.b]}")
    except Exception as exc:  # noqa: BLE001
        H3 = _failed("H3", exc)
    timings["critical_expansion"] = clock() - t0
    t0 = clock()
    ac = amplitude_condition(prof, p)
    amp = Verdict(ac.holds, ac.margin, 0.0, f"strict margin (2 nu u_x) = {ac.strict_margin!r}")
    try:
        cf = coefficients(prof, p, prof.wave.c)
        m = coercivity_check(symmetrizer(cf, eta), cf)
        coer = Verdict(m > 0, m, eta, "min eig sym(Sigma B + K A); tol field holds eta")
    except Exception as exc:  # noqa: BLE001
        coer = _failed("coercivity", exc)
    timings["structural"] = clock() - t0
    return StabilityReport(D1=D1, D2=D2, D3prime=D3, H3=H3, H4=H4, amplitude=amp, coercivity=coer)
