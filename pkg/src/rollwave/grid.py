"""Uniform periodic grids and the difference operators used on them."""

import numpy as np


def periodic_grid(X, L):
    """Return the ``L`` sample points ``x_j = j X / L`` on ``[0, X)``."""
    return np.arange(L) * (X / L)


def wavenumbers(X, L):
    k = 2.0 * np.pi * np.fft.fftfreq(L, d=X / L)
    if L % 2 == 0:
        # Nyquist mode has no real derivative
        k[L // 2] = 0.0
    return k


def spectral_derivative(f, X, order=1):
    """Fourier spectral derivative of periodic samples ``f`` on ``[0, X)``."""
    f = np.asarray(f)
    k = wavenumbers(X, f.shape[-1])
    df = np.fft.ifft((1j * k) ** order * np.fft.fft(f, axis=-1), axis=-1)
    return df.real if np.isrealobj(f) else df


def fourier_diff_matrix(X, L):
    """Dense first-derivative collocation matrix on the periodic grid.

    Uses the cotangent form for even ``L`` and the cosecant form for odd
    ``L``; both equal differentiating the trigonometric interpolant.
    """
    if L == 1:
        return np.zeros((1, 1))
    h = 2.0 * np.pi / L
    j = np.arange(L)
    diff = j[:, None] - j[None, :]
    D = np.zeros((L, L))
    off = diff != 0
    sign = (-1.0) ** diff[off]
    if L % 2 == 0:
        D[off] = 0.5 * sign / np.tan(diff[off] * h / 2.0)
    else:
        D[off] = 0.5 * sign / np.sin(diff[off] * h / 2.0)
    return D * (2.0 * np.pi / X)


def forward_diff_matrix(X, L):
    """Periodic forward difference ``(U_{j+1} - U_j) / h``."""
    h = X / L
    return (np.roll(np.eye(L), 1, axis=1) - np.eye(L)) / h


def backward_diff_matrix(X, L):
    """Periodic backward difference ``(U_j - U_{j-1}) / h``."""
    h = X / L
    return (np.eye(L) - np.roll(np.eye(L), -1, axis=1)) / h


def resample(f, L_new):
    """Band-limited (Fourier) resampling of periodic samples to ``L_new`` points."""
    f = np.asarray(f, dtype=float)
    L = f.shape[-1]
    if L_new == L:
        return f.copy()
    F = np.fft.rfft(f)
    n_keep = min(L, L_new) // 2 + 1
    G = np.zeros(L_new // 2 + 1, dtype=complex)
    G[:n_keep] = F[:n_keep]
    # split or drop the shared Nyquist coefficient
    if L % 2 == 0 and L_new > L:
        G[L // 2] *= 0.5
    if L_new % 2 == 0 and L_new < L:
        G[L_new // 2] = G[L_new // 2].real * 2.0
    return np.fft.irfft(G, n=L_new) * (L_new / L)
