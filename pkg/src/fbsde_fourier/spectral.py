"""DFT conventions and the Fourier conditional-expectation kernel.

Forward transform carries the ``1/M`` factor and a negative exponent, the
inverse has no factor::

    dft(v)[k]  = (1/M) sum_j exp(-2 pi i jk/M) v_j
    idft(s)[k] =       sum_j exp(+2 pi i jk/M) s_j

Given samples ``theta`` of a (boundary-matched) function on layer ``i+1`` of
an :class:`~fbsde_fourier.grid.AlternativeGrid`, the kernel evaluates

    theta_i(x_ik) = F^-1[ F[theta](nu) psi(nu, x_ik) ](x_ik)

at every node of layer ``i`` using the trapezoidal rule in space and a lower
Riemann sum over the Fourier nodes ``nu_{i+1,0..M-1}`` (the last Fourier node
is dropped so that bins and nodes line up one to one).
"""

from __future__ import annotations

import logging
from typing import Callable

import numpy as np

from .grid import AlternativeGrid

log = logging.getLogger(__name__)

IMAG_RESIDUE_TOL = 1e-8

PsiFunction = Callable[[np.ndarray, np.ndarray], np.ndarray]


def dft(v) -> np.ndarray:
    v = np.asarray(v, dtype=complex)
    return np.fft.fft(v) / v.size


def idft(s) -> np.ndarray:
    s = np.asarray(s, dtype=complex)
    return np.fft.ifft(s) * s.size


def trapezoid_weights(M: int) -> np.ndarray:
    """``w_j = 1 - (delta_{j,0} + delta_{j,M})/2`` for ``j = 0..M``."""
    w = np.ones(M + 1)
    w[0] = w[-1] = 0.5
    return w


def folded_weights(M: int) -> np.ndarray:
    """Periodic weights ``w~_k = w_k + w_M delta_{k,0}`` for ``k = 0..M-1`` (all ones)."""
    w = trapezoid_weights(M)
    folded = w[:M].copy()
    folded[0] += w[M]
    return folded


def weighted_signed_dft(theta) -> np.ndarray:
    """Spectrum ``dft({(-1)^s w~_s theta_s})`` of a layer sampled on ``M + 1`` nodes.

    The endpoint sample ``theta[M]`` is not used: its trapezoidal weight is
    folded onto index 0, which is exact when ``theta[0] == theta[M]``.
    """
    theta = np.asarray(theta, dtype=float)
    M = theta.size - 1
    if M < 2 or M % 2:
        raise ValueError(f"theta: expected an odd number (>= 3) of samples, got {theta.size}")
    signs = 1.0 - 2.0 * (np.arange(M) % 2)
    return dft(signs * folded_weights(M) * theta[:M])


def _alternating(indices) -> np.ndarray:
    return 1.0 - 2.0 * (np.asarray(indices) % 2)


def cond_expect_node(spectrum, psi_values, k: int, N: int) -> float:
    """Kernel value at node ``k`` of layer ``i`` from the layer-``i+1`` spectrum.

    :param spectrum: output of :func:`weighted_signed_dft` on layer ``i+1``
    :param psi_values: ``psi(nu_{i+1,j}, x_ik)`` for ``j = 0..M-1``
    :param k: node index on layer ``i``
    :param N: space steps per increment
    """
    spectrum = np.asarray(spectrum, dtype=complex)
    psi_values = np.asarray(psi_values, dtype=complex)
    if psi_values.shape != spectrum.shape:
        raise ValueError(
            f"psi_values: length {psi_values.size} does not match spectrum length {spectrum.size}"
        )
    M = spectrum.size
    m = k + N // 2
    if not 0 <= m < M:
        raise IndexError(f"node {k} shifted by N/2 falls outside the {M}-bin spectrum")
    value = ((-1) ** m) * idft(psi_values * spectrum)[m]
    if abs(value.imag) > IMAG_RESIDUE_TOL:
        log.warning("imaginary residue %.3e at node %d", abs(value.imag), k)
    return float(value.real)


def kernel_matrix(psi_values: np.ndarray, N: int) -> np.ndarray:
    """Dense operator mapping a layer-``i+1`` spectrum to layer-``i`` values.

    ``psi_values`` has shape ``(K, M)`` with ``K = M - N + 1`` rows (one per
    layer-``i`` node); entry ``[k, j]`` of the result is
    ``(-1)^(k+N/2) exp(2 pi i j (k+N/2)/M) psi(nu_j, x_k)``.
    """
    psi_values = np.asarray(psi_values, dtype=complex)
    K, M = psi_values.shape
    if K != M - N + 1:
        raise ValueError(f"psi_values: expected {M - N + 1} rows for {M} bins, got {K}")
    m = np.arange(K) + N // 2
    j = np.arange(M)
    twiddle = np.exp(2j * np.pi * np.outer(m, j) / M)
    return _alternating(m)[:, None] * twiddle * psi_values


def apply_kernel(matrix: np.ndarray, spectrum: np.ndarray) -> tuple[np.ndarray, float]:
    """Real part of ``matrix @ spectrum`` and the largest discarded imaginary part."""
    values = matrix @ spectrum
    return values.real.copy(), float(np.max(np.abs(values.imag), initial=0.0))


def shift_kernel(psi_row: np.ndarray, spectrum: np.ndarray, N: int) -> tuple[np.ndarray, float]:
    """Fast path for an x-independent ``psi``: one inverse transform for the whole layer."""
    M = spectrum.size
    full = idft(np.asarray(psi_row, dtype=complex) * spectrum)
    m = np.arange(M - N + 1) + N // 2
    values = _alternating(m) * full[m]
    return values.real.copy(), float(np.max(np.abs(values.imag), initial=0.0))


def cond_expect_layer(
    theta_next,
    psi: PsiFunction,
    grid: AlternativeGrid,
    i: int,
    *,
    x_independent: bool = False,
) -> np.ndarray:
    """Conditional expectation of ``theta_next`` (layer ``i+1``) at every node of layer ``i``.

    ``psi(nu, x)`` must broadcast over array arguments. With
    ``x_independent=True`` it is evaluated once at the grid centre and a
    single inverse transform is used instead of the dense product.
    """
    theta_next = np.asarray(theta_next, dtype=float)
    if theta_next.size != grid.size(i + 1):
        raise ValueError(
            f"theta_next: expected {grid.size(i + 1)} samples on layer {i + 1}, got {theta_next.size}"
        )
    N = grid.params.N
    nu = grid.fourier_nodes(i + 1)[:-1]
    spectrum = weighted_signed_dft(theta_next)
    if x_independent:
        values, residue = shift_kernel(psi(nu, np.full_like(nu, grid.params.x0)), spectrum, N)
    else:
        x = grid.space_nodes(i)
        values, residue = apply_kernel(kernel_matrix(psi(nu[None, :], x[:, None]), N), spectrum)
    if residue > IMAG_RESIDUE_TOL:
        log.warning("layer %d: imaginary residue %.3e discarded", i, residue)
    return values
