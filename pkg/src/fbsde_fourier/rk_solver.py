"""Explicit q-stage Runge-Kutta backward induction on the alternative grid.

Because the forward state is frozen inside ``[t_i, t_{i+1})`` every stage
is ``F_{t_i}``-measurable, and only the first driver term of each stage
stays inside the conditional expectation::

    u_{i,j}  = E[u_{i+1} + dt a_{j1} f_{i+1}] + dt sum_{k=2..j} a_{jk} f(t_{i,k}, x, u_{i,k}, u_dot_{i,k})
    u'_{i,j} = E[H (u_{i+1} + dt b_{j1} f_{i+1})]

for ``j = 2..q+1``; stage ``q+1`` is the solution at ``t_i``.
"""

from __future__ import annotations

import configparser
import logging
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .grid import AlternativeGrid
from .model import CharacteristicProvider, FbsdeProblem
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

TOL = 1e-12


class TableauError(ValueError):
    """Malformed tableau."""


class UnsupportedSchemeError(TableauError):
    """A valid but implicit tableau handed to the explicit solver."""


@dataclass(frozen=True)
class ButcherTableau:
    """Coefficients of a q-stage scheme.

    ``A`` and ``B`` are ``q x q`` (rows ``j = 1..q``); ``bottom_alpha`` has
    ``q + 1`` entries and ``bottom_beta`` has ``q``.
    """

    gamma: tuple
    A: tuple
    bottom_alpha: tuple
    B: tuple
    bottom_beta: tuple
    name: str = "custom"

    def __post_init__(self):
        q = len(self.gamma) - 1
        shapes_ok = (
            q >= 1
            and len(self.A) == q and all(len(r) == q for r in self.A)
            and len(self.B) == q and all(len(r) == q for r in self.B)
            and len(self.bottom_alpha) == q + 1
            and len(self.bottom_beta) == q
        )
        if not shapes_ok:
            raise TableauError("tableau: inconsistent shapes (need gamma q+1, A qxq, bottom_alpha q+1, B qxq, bottom_beta q)")

    @property
    def q(self) -> int:
        return len(self.gamma) - 1

    def alpha(self, j: int, k: int) -> float:
        """``alpha_{jk}`` with 1-based indices; row ``q+1`` is the bottom row."""
        return float(self.bottom_alpha[k - 1] if j == self.q + 1 else self.A[j - 1][k - 1])

    def beta(self, j: int, k: int) -> float:
        return float(self.bottom_beta[k - 1] if j == self.q + 1 else self.B[j - 1][k - 1])

    @property
    def is_explicit(self) -> bool:
        return abs(self.bottom_alpha[self.q]) <= TOL and all(
            abs(self.A[j - 1][j - 1]) <= TOL for j in range(2, self.q + 1)
        )

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "gamma": [float(v) for v in self.gamma],
            "A": [[float(v) for v in r] for r in self.A],
            "bottom_alpha": [float(v) for v in self.bottom_alpha],
            "B": [[float(v) for v in r] for r in self.B],
            "bottom_beta": [float(v) for v in self.bottom_beta],
        }


def validate_tableau(t: ButcherTableau) -> list[str]:
    """Names of the violated constraints; empty when the tableau is consistent.

    Explicitness is not a consistency constraint and is checked separately
    through :attr:`ButcherTableau.is_explicit`.
    """
    q = t.q
    violations = []
    g = [float(v) for v in t.gamma]
    if abs(g[0]) > TOL:
        violations.append("γ_1 ≠ 0")
    if abs(g[-1] - 1.0) > TOL:
        violations.append("γ_{q+1} ≠ 1")
    if any(b <= a for a, b in zip(g, g[1:])):
        violations.append("γ not strictly increasing")
    if abs(sum(float(v) for v in t.bottom_alpha) - 1.0) > TOL:
        violations.append("sum of α_j ≠ 1")
    if any(abs(t.beta(j, j)) > TOL for j in range(1, q + 1)):
        violations.append("β_jj ≠ 0")
    for j in range(2, q + 1):
        if abs(sum(t.alpha(j, k) for k in range(1, j + 1)) - g[j - 1]) > TOL:
            violations.append(f"sum_k α_{j}k ≠ γ_{j}")
        if abs(sum(t.beta(j, k) for k in range(1, j)) - g[j - 1]) > TOL:
            violations.append(f"sum_k β_{j}k ≠ γ_{j}")
    for j in range(1, q + 1):
        if any(t.alpha(j, k) != 0 for k in range(j + 1, q + 1)) or any(
            t.beta(j, k) != 0 for k in range(j + 1, q + 1)
        ):
            violations.append(f"row {j} not lower triangular")
    coefficients = [*t.bottom_alpha, *t.bottom_beta, *(v for r in t.A for v in r), *(v for r in t.B for v in r)]
    if any(float(v) < 0 for v in coefficients):
        violations.append("negative coefficient")
    return violations


def explicit_one_stage() -> ButcherTableau:
    return ButcherTableau((0.0, 1.0), ((0.0,),), (1.0, 0.0), ((0.0,),), (1.0,), name="rk1")


def implicit_one_stage() -> ButcherTableau:
    return ButcherTableau((0.0, 1.0), ((0.0,),), (0.0, 1.0), ((0.0,),), (1.0,), name="implicit1")


def crank_nicolson() -> ButcherTableau:
    return ButcherTableau((0.0, 1.0), ((0.0,),), (0.5, 0.5), ((0.0,),), (1.0,), name="crank-nicolson")


def two_stage(gamma2: float, beta1: float, name: str | None = None) -> ButcherTableau:
    """First-order explicit 2-stage family.

    ``bottom_alpha[0] = 1 - 1/(2 gamma2)`` is negative below ``gamma2 = 1/2``
    and ``gamma2 = 1`` repeats the last node, so the admissible range is
    ``1/2 <= gamma2 < 1`` with ``0 <= beta1 <= 1``.
    """
    if not 0.5 <= gamma2 < 1 or not 0 <= beta1 <= 1:
        raise TableauError(f"two_stage: need 1/2 <= gamma2 < 1 and 0 <= beta1 <= 1, got {gamma2}, {beta1}")
    return ButcherTableau(
        (0.0, gamma2, 1.0),
        ((0.0, 0.0), (gamma2, 0.0)),
        (1.0 - 1.0 / (2.0 * gamma2), 1.0 / (2.0 * gamma2), 0.0),
        ((0.0, 0.0), (gamma2, 0.0)),
        (beta1, 1.0 - beta1),
        name=name or f"rk2(gamma2={gamma2:g}, beta1={beta1:g})",
    )


def rk2_benchmark() -> ButcherTableau:
    """The 2-stage tableau of the commodity benchmark: ``gamma2 = 2/3``, ``beta1 = 1``."""
    return two_stage(2.0 / 3.0, 1.0, name="rk2")


BUILTIN_TABLEAUS = {"rk1": explicit_one_stage, "rk2": rk2_benchmark}


def _numbers(text: str) -> tuple:
    return tuple(float(Fraction(v.strip())) for v in text.split(",") if v.strip())


def _rows(text: str, q: int) -> tuple:
    rows = [_numbers(r) for r in text.split(";")]
    return tuple(tuple(r) + (0.0,) * (q - len(r)) for r in rows)


def load_tableau(path) -> ButcherTableau:
    """Read a ``[tableau]`` INI section.

    Lists are comma separated, matrix rows are separated by ``;`` and may
    omit trailing zeros; fractions such as ``2/3`` are accepted::

        [tableau]
        gamma = 0, 2/3, 1
        alpha = 0; 2/3
        bottom_alpha = 1/4, 3/4, 0
        beta = 0; 2/3
        bottom_beta = 1, 0
    """
    parser = configparser.ConfigParser()
    if not parser.read(path):
        raise TableauError(f"tableau: cannot read {path}")
    if "tableau" not in parser:
        raise TableauError(f"tableau: {path} has no [tableau] section")
    sec = parser["tableau"]
    try:
        gamma = _numbers(sec["gamma"])
        q = len(gamma) - 1
        return ButcherTableau(
            gamma, _rows(sec["alpha"], q), _numbers(sec["bottom_alpha"]),
            _rows(sec["beta"], q), _numbers(sec["bottom_beta"]),
            name=sec.get("name", "custom"),
        )
    except (KeyError, ValueError, ZeroDivisionError) as exc:
        if isinstance(exc, TableauError):
            raise
        raise TableauError(f"tableau: malformed entry in {path}: {exc}") from None


def stability_check_rk(grid: AlternativeGrid, provider: CharacteristicProvider, i: int) -> StabilityEntry:
    """``dx * B / pi <= 1`` with ``B = int|phi| + int|Phi|`` over the Fourier window at the worst node."""
    t = float(grid.partition.nodes[i])
    dt = float(grid.partition.deltas[i])
    bound = provider.char_integral_bound(grid.space_nodes(i), t, dt, nu_max=grid.params.L / 2)
    value = grid.params.dx * bound / math.pi
    return StabilityEntry(i, value, value <= 1.0, (bound,))


def solve_rk(problem: FbsdeProblem, grid: AlternativeGrid, tableau: ButcherTableau,
             provider: CharacteristicProvider) -> Solution:
    violations = validate_tableau(tableau)
    if violations:
        raise TableauError(f"tableau {tableau.name}: " + "; ".join(violations))
    if not tableau.is_explicit:
        raise UnsupportedSchemeError(f"tableau {tableau.name}: implicit schemes are not supported")
    check_setup(problem, grid)

    q = tableau.q
    n = grid.n
    times = grid.partition.nodes
    deltas = grid.partition.deltas
    gamma = [float(v) for v in tableau.gamma]

    x = grid.space_nodes(n)
    u = np.asarray(problem.g(x), dtype=float) * np.ones_like(x)
    u_dot = terminal_gradient(problem, x)
    layers = [None] * (n + 1)
    layers[n] = SolutionLayer(n, float(times[n]), x, u, u_dot, u.copy())
    stability = []
    residue = 0.0

    for i in range(n - 1, -1, -1):
        t, dt, t_next = float(times[i]), float(deltas[i]), float(times[i + 1])
        x_next, u_next, u_dot_next = x, u, u_dot
        x = grid.space_nodes(i)
        f_next = np.asarray(problem.f(t_next, x_next, u_next, u_dot_next), dtype=float)

        sources = {}

        def source(weight):
            # transformed spectrum of u_{i+1} + dt*weight*f_{i+1}, shared by equal weights
            if weight not in sources:
                values = u_next + dt * weight * f_next
                params = fit_layer(values, x_next)
                sources[weight] = (weighted_signed_dft(apply_transform(values, x_next, params)), params)
            return sources[weight]

        value_kernel = LayerKernel(lambda nu, xx: provider.phi(nu, xx, t, dt), grid, i, provider.x_independent)
        grad_kernel = LayerKernel(lambda nu, xx: provider.Phi(nu, xx, t, dt), grid, i, provider.x_independent)

        stage_u, stage_u_dot = {}, {}
        for j in range(2, q + 2):
            spectrum, params = source(tableau.alpha(j, 1))
            expectation = value_kernel(spectrum) - provider.value_correction(x, t, dt, params)
            value = expectation.copy()
            for k in range(2, j):
                coef = tableau.alpha(j, k)
                if coef:
                    t_k = t + (1.0 - gamma[k - 1]) * dt
                    value += dt * coef * np.asarray(problem.f(t_k, x, stage_u[k], stage_u_dot[k]), dtype=float)
            spectrum, params = source(tableau.beta(j, 1))
            gradient = grad_kernel(spectrum) - provider.gradient_correction(x, t, dt, params)
            check_finite(i, j, u=value, u_dot=gradient)
            stage_u[j], stage_u_dot[j] = value, gradient

        u, u_dot = stage_u[q + 1], stage_u_dot[q + 1]
        residue = max(residue, value_kernel.residue, grad_kernel.residue)
        layers[i] = SolutionLayer(i, t, x, u, u_dot, expectation)

        entry = stability_check_rk(grid, provider, i)
        stability.append(entry)
        log.debug("step %d: stability %.4g (%s)", i, entry.value, "ok" if entry.passed else "violated")

    solution = Solution(grid, layers, tableau.name, provider.name, stability[::-1], residue)
    report_diagnostics(solution)
    return solution
