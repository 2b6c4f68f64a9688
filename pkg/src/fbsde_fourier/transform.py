"""Quadratic boundary-matching transform ``eta(x) + alpha x^2 + beta x``.

The DFT treats a sampled layer as one period of a periodic function. Adding
the quadratic makes the end values and end slopes agree, and since the
conditional expectation of a quadratic of the next forward state is known in
closed form the shift is removed again after the kernel is applied.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np


@dataclass(frozen=True)
class TransformParams:
    alpha: float
    beta: float
    interval: tuple[float, float]

    @property
    def is_identity(self) -> bool:
        return self.alpha == 0.0 and self.beta == 0.0


IDENTITY = TransformParams(0.0, 0.0, (0.0, 0.0))


def fit_transform(eta_a: float, eta_b: float, deta_a: float, deta_b: float,
                  a: float, b: float) -> TransformParams:
    """Solve for ``alpha, beta`` giving equal end values and end derivatives on ``[a, b]``."""
    if not b > a:
        raise ValueError(f"degenerate interval [{a}, {b}]")
    alpha = (deta_a - deta_b) / (2.0 * (b - a))
    beta = (eta_a - eta_b) / (b - a) - alpha * (b + a)
    return TransformParams(alpha, beta, (a, b))


def boundary_derivative(values, dx: float, side: Literal["left", "right"]) -> float:
    """Second-order one-sided difference at one end of a uniform sample."""
    v = np.asarray(values, dtype=float)
    if v.size < 3:
        raise ValueError(f"need at least 3 samples, got {v.size}")
    if not dx > 0:
        raise ValueError(f"dx must be positive, got {dx}")
    if side == "left":
        return (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * dx)
    if side == "right":
        return (3.0 * v[-1] - 4.0 * v[-2] + v[-3]) / (2.0 * dx)
    raise ValueError(f"side must be 'left' or 'right', got {side!r}")


def fit_layer(values, nodes) -> TransformParams:
    """Fit the transform to samples on a uniform node array."""
    values = np.asarray(values, dtype=float)
    nodes = np.asarray(nodes, dtype=float)
    if values.shape != nodes.shape:
        raise ValueError(f"length mismatch: {values.size} values, {nodes.size} nodes")
    if values.size < 3:
        raise ValueError(f"need at least 3 samples, got {values.size}")
    dx = (nodes[-1] - nodes[0]) / (nodes.size - 1)
    return fit_transform(
        values[0], values[-1],
        boundary_derivative(values, dx, "left"), boundary_derivative(values, dx, "right"),
        nodes[0], nodes[-1],
    )


def apply_transform(values, nodes, p: TransformParams) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    nodes = np.asarray(nodes, dtype=float)
    if values.shape != nodes.shape:
        raise ValueError(f"length mismatch: {values.size} values, {nodes.size} nodes")
    return values + p.alpha * nodes**2 + p.beta * nodes


def remove_transform(values, nodes, p: TransformParams) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    nodes = np.asarray(nodes, dtype=float)
    return values - p.alpha * nodes**2 - p.beta * nodes


def euler_corrections(x, a_val, sig2_val, dt: float, p: TransformParams):
    """Conditional moments of the quadratic after one Euler step.

    Returns ``(value_corr, gradient_corr_factor)``; the gradient correction
    still has to be multiplied by ``sigma(t, x)``.
    """
    mean = x + dt * a_val
    value = p.alpha * (mean**2 + dt * sig2_val) + p.beta * mean
    return value, 2.0 * p.alpha * mean + p.beta


def milstein_corrections(x, a_val, sig2_val, dt: float, p: TransformParams):
    """Same as :func:`euler_corrections` for the first-order (Milstein) step.

    The variance picks up ``dt^2 sig2^2 / 2`` from the iterated integral and
    the gradient is evaluated at ``x + dt a + dt sig2``.
    """
    mean = x + dt * a_val
    value = p.alpha * (mean**2 + dt * sig2_val + 0.5 * dt**2 * sig2_val**2) + p.beta * mean
    return value, 2.0 * p.alpha * (mean + dt * sig2_val) + p.beta
