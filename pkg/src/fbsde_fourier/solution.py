"""Per-layer solution arrays and the stability trace shared by both solvers."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .grid import AlternativeGrid
from .model import FbsdeProblem
from .spectral import IMAG_RESIDUE_TOL, apply_kernel, kernel_matrix, shift_kernel

log = logging.getLogger(__name__)


class NumericalError(RuntimeError):
    """A layer produced NaN or Inf; carries the offending time (and stage) index."""

    def __init__(self, message: str, i: int, stage: int | None = None):
        super().__init__(message)
        self.i = i
        self.stage = stage


@dataclass
class SolutionLayer:
    i: int
    t: float
    x: np.ndarray
    u: np.ndarray
    u_dot: np.ndarray
    u_tilde: np.ndarray


@dataclass(frozen=True)
class StabilityEntry:
    i: int
    value: float
    passed: bool
    terms: tuple[float, ...] = ()

    def as_dict(self) -> dict:
        return {"i": self.i, "value": self.value, "passed": self.passed, "terms": list(self.terms)}


@dataclass
class Solution:
    grid: AlternativeGrid
    layers: list[SolutionLayer]
    scheme: str
    provider: str
    stability: list[StabilityEntry] = field(default_factory=list)
    max_imag_residue: float = 0.0

    @property
    def n(self) -> int:
        return self.grid.n

    def layer(self, i: int) -> SolutionLayer:
        return self.layers[i]

    @property
    def stable(self) -> bool:
        return all(e.passed for e in self.stability)

    def center_values(self, i: int = 0) -> tuple[float, float]:
        """``(u, u_dot)`` at the node of layer ``i`` nearest ``x0``."""
        layer = self.layers[i]
        k = int(np.argmin(np.abs(layer.x - self.grid.params.x0)))
        return float(layer.u[k]), float(layer.u_dot[k])

    def interpolate(self, i: int, x) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Linear interpolation of ``u`` and ``u_dot`` on layer ``i``.

        Points outside the layer take the boundary value; the returned mask
        flags them.
        """
        layer = self.layers[i]
        x = np.asarray(x, dtype=float)
        outside = (x < layer.x[0]) | (x > layer.x[-1])
        return np.interp(x, layer.x, layer.u), np.interp(x, layer.x, layer.u_dot), outside


class LayerKernel:
    """Kernel for one backward step with ``psi`` already sampled on (x_i, nu_{i+1})."""

    def __init__(self, psi, grid: AlternativeGrid, i: int, x_independent: bool):
        self.N = grid.params.N
        nu = grid.fourier_nodes(i + 1)[:-1]
        self.x_independent = x_independent
        if x_independent:
            self.row = psi(nu, grid.params.x0)
        else:
            self.matrix = kernel_matrix(psi(nu[None, :], grid.space_nodes(i)[:, None]), self.N)
        self.residue = 0.0

    def __call__(self, spectrum: np.ndarray) -> np.ndarray:
        if self.x_independent:
            values, residue = shift_kernel(self.row, spectrum, self.N)
        else:
            values, residue = apply_kernel(self.matrix, spectrum)
        self.residue = max(self.residue, residue)
        return values


def check_finite(i: int, stage: int | None = None, **arrays) -> None:
    for name, arr in arrays.items():
        if not np.all(np.isfinite(arr)):
            where = f"time index {i}" + ("" if stage is None else f", stage {stage}")
            raise NumericalError(f"non-finite {name} at {where}", i, stage)


def terminal_gradient(problem: FbsdeProblem, x: np.ndarray) -> np.ndarray:
    """``sigma(T, x) * grad g(x)``; finite differences when ``grad_g`` is not given."""
    if problem.grad_g is not None:
        grad = np.broadcast_to(np.asarray(problem.grad_g(x), dtype=float), x.shape)
    else:
        grad = np.gradient(np.asarray(problem.g(x), dtype=float), x, edge_order=2)
    return np.asarray(problem.sigma(problem.T, x), dtype=float) * grad


def check_setup(problem: FbsdeProblem, grid: AlternativeGrid) -> None:
    T = grid.partition.T
    if not np.isclose(problem.T, T, rtol=1e-12, atol=0.0):
        raise ValueError(f"T: problem horizon {problem.T} differs from partition end {T}")
    if not np.isclose(problem.x0, grid.params.x0, rtol=0.0, atol=1e-14):
        raise ValueError(f"x0: problem start {problem.x0} differs from grid centre {grid.params.x0}")
    problem.check_diffusion(grid.partition.nodes, grid.space_nodes(grid.n))


def report_diagnostics(solution: Solution) -> None:
    violated = [e for e in solution.stability if not e.passed]
    if violated:
        worst = max(violated, key=lambda e: e.value)
        log.warning(
            "stability condition violated at %d of %d steps (worst %.4g at step %d)",
            len(violated), len(solution.stability), worst.value, worst.i,
        )
    if solution.max_imag_residue > IMAG_RESIDUE_TOL:
        log.warning("largest discarded imaginary part over the solve: %.3e", solution.max_imag_residue)
