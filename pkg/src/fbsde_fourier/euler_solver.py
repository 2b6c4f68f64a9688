"""Explicit Euler backward induction on the alternative grid."""

from __future__ import annotations

import logging
import math

import numpy as np

from .grid import AlternativeGrid
from .model import CharacteristicProvider, EulerCharacteristics, FbsdeProblem
from .solution import (
    LayerKernel,
    Solution,
    SolutionLayer,
    StabilityEntry,
    check_finite,
    check_setup,
    report_diagnostics,
    terminal_gradient,
)
from .spectral import weighted_signed_dft
from .transform import apply_transform, fit_layer

log = logging.getLogger(__name__)


def stability_check_euler(grid: AlternativeGrid, problem: FbsdeProblem, i: int) -> StabilityEntry:
    """``max(sqrt(K4) dx / sqrt(2 pi dt), K4 dx / (pi dt)) <= 1`` with ``K4`` local to layer ``i``."""
    t = grid.partition.nodes[i]
    dt = grid.partition.deltas[i]
    dx = grid.params.dx
    k4 = float(np.max(1.0 / problem.sig2(t, grid.space_nodes(i))))
    first = math.sqrt(k4) * dx / math.sqrt(2.0 * math.pi * dt)
    second = k4 * dx / (math.pi * dt)
    value = max(first, second)
    return StabilityEntry(i, value, value <= 1.0, (first, second))


def solve_euler(problem: FbsdeProblem, grid: AlternativeGrid,
                provider: CharacteristicProvider | None = None) -> Solution:
    """Backward induction of the explicit Euler scheme.

    At each step the layer ``u_{i+1}`` is made boundary-periodic with the
    quadratic transform, pushed through the value kernel (``psi = phi``) and
    the gradient kernel (``psi = i nu sigma phi``), corrected for the
    transform, and combined through ``u = u~ + dt f(t, x, u~, u_dot)``.

    ``provider`` defaults to the Gaussian Euler increment; passing another
    provider swaps the forward step while keeping the backward scheme.
    """
    check_setup(problem, grid)
    provider = provider or EulerCharacteristics(problem)
    n = grid.n
    times = grid.partition.nodes
    deltas = grid.partition.deltas

    x = grid.space_nodes(n)
    u = np.asarray(problem.g(x), dtype=float) * np.ones_like(x)
    u_dot = terminal_gradient(problem, x)
    layers = [None] * (n + 1)
    layers[n] = SolutionLayer(n, float(times[n]), x, u, u_dot, u.copy())
    stability = []
    residue = 0.0

    for i in range(n - 1, -1, -1):
        t, dt = float(times[i]), float(deltas[i])
        x_next, u_next = x, u
        x = grid.space_nodes(i)

        params = fit_layer(u_next, x_next)
        spectrum = weighted_signed_dft(apply_transform(u_next, x_next, params))

        value_kernel = LayerKernel(lambda nu, xx: provider.phi(nu, xx, t, dt), grid, i, provider.x_independent)
        grad_kernel = LayerKernel(lambda nu, xx: provider.Phi(nu, xx, t, dt), grid, i, provider.x_independent)

        u_tilde = value_kernel(spectrum) - provider.value_correction(x, t, dt, params)
        u_dot = grad_kernel(spectrum) - provider.gradient_correction(x, t, dt, params)
        u = u_tilde + dt * np.asarray(problem.f(t, x, u_tilde, u_dot), dtype=float)
        check_finite(i, u=u, u_dot=u_dot)

        residue = max(residue, value_kernel.residue, grad_kernel.residue)
        layers[i] = SolutionLayer(i, t, x, u, u_dot, u_tilde)

        entry = stability_check_euler(grid, problem, i)
        stability.append(entry)
        log.debug("step %d: stability %.4g (%s)", i, entry.value, "ok" if entry.passed else "violated")

    solution = Solution(grid, layers, "euler", provider.name, stability[::-1], residue)
    report_diagnostics(solution)
    return solution
