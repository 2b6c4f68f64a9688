"""Commodity forward benchmark on the Lucia-Schwartz spot model, with its closed form and error metrics."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .euler_solver import solve_euler
from .grid import GridParams, TimePartition, build_grid
from .model import FbsdeProblem, make_provider
from .rk_solver import ButcherTableau, explicit_one_stage, rk2_benchmark, solve_rk
from .solution import Solution

log = logging.getLogger(__name__)

SEASONAL_AMPLITUDE = 0.05
SEASONAL_FREQUENCY = 2.0 * math.pi
GRID_SPAN = 1.8


@dataclass(frozen=True)
class LuciaSchwartzModel:
    """One-factor mean-reverting log-spot model with a sinusoidal seasonal level."""

    kappa: float = 1.5
    sigma: float = 0.065
    p_bar: float = 1.0
    lam: float = 0.25
    T: float = 0.25

    def __post_init__(self):
        for name in ("kappa", "sigma", "p_bar", "T"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name}: must be positive, got {value}")
        if not math.isfinite(self.lam):
            raise ValueError(f"lam: must be finite, got {self.lam}")

    @property
    def x0(self) -> float:
        return 0.95 * self.p_bar

    def S(self, t):
        return math.log(self.p_bar) + SEASONAL_AMPLITUDE * np.sin(SEASONAL_FREQUENCY * t)

    def dS(self, t):
        return SEASONAL_AMPLITUDE * SEASONAL_FREQUENCY * np.cos(SEASONAL_FREQUENCY * t)

    def theta(self, t):
        return (0.5 * self.sigma**2 + self.dS(t)) / self.kappa + self.S(t)

    def to_fbsde(self) -> FbsdeProblem:
        kappa, sigma, lam = self.kappa, self.sigma, self.lam
        return FbsdeProblem(
            a=lambda t, x: kappa * (self.theta(t) - np.log(x)) * x,
            sigma=lambda t, x: sigma * x,
            f=lambda t, x, y, z: -lam * z,
            g=lambda x: x,
            grad_g=lambda x: np.ones_like(x),
            T=self.T,
            x0=self.x0,
        )


def _h(tau, k):
    return -np.expm1(-k * tau)


def _check_state(x):
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise ValueError("x: the spot price must be positive")
    return x


def closed_form_Y(m: LuciaSchwartzModel, t, x):
    x = _check_state(x)
    tau = m.T - np.asarray(t, dtype=float)
    k = m.kappa
    exponent = (
        m.S(m.T)
        + (np.log(x) - m.S(t)) * np.exp(-k * tau)
        - (m.sigma * m.lam / k) * _h(tau, k)
        + (m.sigma**2 / (4.0 * k)) * _h(tau, 2.0 * k)
    )
    return np.exp(exponent)


def closed_form_Z(m: LuciaSchwartzModel, t, x):
    tau = m.T - np.asarray(t, dtype=float)
    return m.sigma * np.exp(-m.kappa * tau) * closed_form_Y(m, t, x)


@dataclass(frozen=True)
class Scheme:
    """Backward scheme plus the forward discretization used for its kernels and paths."""

    name: str
    provider: str
    tableau: ButcherTableau | None = None

    def solve(self, problem: FbsdeProblem, grid) -> Solution:
        provider = make_provider(self.provider, problem)
        if self.tableau is None:
            return solve_euler(problem, grid, provider)
        return solve_rk(problem, grid, self.tableau, provider)


def named_scheme(name: str, provider: str | None = None, tableau: ButcherTableau | None = None) -> Scheme:
    """``euler`` and ``rk1`` default to Euler paths, ``rk2`` to Milstein paths."""
    if name == "euler":
        return Scheme("euler", provider or "euler")
    if name == "rk1":
        return Scheme("rk1", provider or "euler", explicit_one_stage())
    if name == "rk2":
        return Scheme("rk2", provider or "milstein", rk2_benchmark())
    if name == "custom":
        if tableau is None:
            raise ValueError("tableau: scheme 'custom' needs a tableau")
        return Scheme("custom", provider or "euler", tableau)
    raise ValueError(f"scheme: unknown scheme {name!r}")


def auto_span(n: int, N0: int = 1) -> float:
    return GRID_SPAN / (N0 + n)


def benchmark_grid(m: LuciaSchwartzModel, n: int, N: int = 2, N0: int = 1, l: float | None = None):
    partition = TimePartition.uniform(m.T, n)
    return build_grid(GridParams(m.x0, auto_span(n, N0) if l is None else l, N, N0), partition)


@dataclass
class ErrorReport:
    e_true: float
    e_true_y: float
    e_true_z: float
    layer_errors: list = field(default_factory=list)


def e_true(solution: Solution, m: LuciaSchwartzModel) -> ErrorReport:
    """Grid-wide max error in ``u`` plus grid-wide max error in ``u_dot`` over layers ``0..n-1``."""
    rows = []
    for layer in solution.layers[: solution.n]:
        ey = float(np.max(np.abs(closed_form_Y(m, layer.t, layer.x) - layer.u)))
        ez = float(np.max(np.abs(closed_form_Z(m, layer.t, layer.x) - layer.u_dot)))
        rows.append((layer.i, ey, ez))
    ey = max(r[1] for r in rows)
    ez = max(r[2] for r in rows)
    return ErrorReport(ey + ez, ey, ez, rows)


@dataclass
class SimReport:
    e_sim: float
    e_sim_std: float
    e_sim_sd: float
    clamped: int
    num_paths: int
    seed: int


def path_normals(seed: int, num_paths: int, n: int) -> np.ndarray:
    """Standard normals, one independent stream per path index."""
    out = np.empty((num_paths, n))
    for p in range(num_paths):
        out[p] = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(p,))).standard_normal(n)
    return out


def simulate_paths(solution: Solution, problem: FbsdeProblem, provider: str, num_paths: int, seed: int) -> np.ndarray:
    """Forward paths on the solution's time partition, shape ``(num_paths, n + 1)``."""
    stepper = make_provider(provider, problem)
    times = solution.grid.partition.nodes
    deltas = solution.grid.partition.deltas
    z = path_normals(seed, num_paths, solution.n)
    x = np.empty((num_paths, solution.n + 1))
    x[:, 0] = problem.x0
    for i in range(solution.n):
        x[:, i + 1] = stepper.simulate_step(x[:, i], times[i], deltas[i], z[:, i])
    return x


def path_values(solution: Solution, paths: np.ndarray):
    """Interpolated ``(u, u_dot)`` along paths plus the number of clamped points."""
    y = np.empty_like(paths)
    z = np.empty_like(paths)
    clamped = 0
    for i in range(solution.n + 1):
        y[:, i], z[:, i], outside = solution.interpolate(i, paths[:, i])
        clamped += int(outside.sum())
    return y, z, clamped


def e_sim(solution: Solution, m: LuciaSchwartzModel, num_paths: int, seed: int,
          provider: str | None = None) -> SimReport:
    """Path-averaged error of the interpolated solution along simulated forward paths.

    Per path: max over ``t_i`` of the ``Y`` error plus the root of the
    ``dt``-weighted sum of squared ``Z`` errors. ``e_sim_std`` is the standard
    error of the mean of these per-path totals, ``e_sim_sd`` their raw
    standard deviation.
    """
    if num_paths < 1:
        raise ValueError(f"paths: need at least one path, got {num_paths}")
    problem = m.to_fbsde()
    paths = simulate_paths(solution, problem, provider or solution.provider, num_paths, seed)
    y, z, clamped = path_values(solution, paths)
    times = solution.grid.partition.nodes
    deltas = solution.grid.partition.deltas
    n = solution.n
    y_err = np.max(np.abs(closed_form_Y(m, times[:n], paths[:, :n]) - y[:, :n]), axis=1)
    z_err = np.sqrt(np.sum(deltas * (closed_form_Z(m, times[:n], paths[:, :n]) - z[:, :n]) ** 2, axis=1))
    total = y_err + z_err
    sd = float(np.std(total, ddof=1)) if num_paths > 1 else 0.0
    if clamped:
        log.warning("%d path points fell outside their layer and were clamped", clamped)
    return SimReport(float(total.mean()), sd / math.sqrt(num_paths), sd, clamped, num_paths, seed)


def loglog_slope(ns, errors) -> float:
    """Least-squares order estimate: minus the slope of ``log e`` against ``log n``."""
    ns = np.asarray(ns, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if ns.size < 2 or not np.all(np.isfinite(errors)) or np.any(errors <= 0):
        return float("nan")
    return float(-np.polyfit(np.log(ns), np.log(errors), 1)[0])


@dataclass
class ConvergenceRow:
    n: int
    e_true: float
    e_sim: float
    e_sim_std: float
    slope_true_cum: float
    slope_sim_cum: float
    y0: float
    z0: float
    clamped: int

    def as_dict(self) -> dict:
        return asdict(self)


def convergence_study(m: LuciaSchwartzModel, scheme: Scheme, n_list, *, N: int = 2, N0: int = 1,
                      num_paths: int = 1000, seed: int = 0) -> list[ConvergenceRow]:
    """Solve for each ``n`` with ``l = 1.8/(N0 + n)``; slopes are fitted on all rows so far."""
    n_list = [int(n) for n in n_list]
    if not n_list:
        raise ValueError("n_list: must not be empty")
    if n_list != sorted(n_list) or len(set(n_list)) != len(n_list):
        raise ValueError("n_list: must be strictly increasing")
    problem = m.to_fbsde()
    rows = []
    for n in n_list:
        solution = scheme.solve(problem, benchmark_grid(m, n, N, N0))
        truth = e_true(solution, m)
        sim = e_sim(solution, m, num_paths, seed, scheme.provider) if num_paths > 0 else None
        y0, z0 = solution.center_values()
        ns = [r.n for r in rows] + [n]
        true_errs = [r.e_true for r in rows] + [truth.e_true]
        sim_errs = [r.e_sim for r in rows] + [sim.e_sim if sim else float("nan")]
        rows.append(ConvergenceRow(
            n, truth.e_true,
            sim.e_sim if sim else float("nan"), sim.e_sim_std if sim else float("nan"),
            loglog_slope(ns, true_errs), loglog_slope(ns, sim_errs) if sim else float("nan"),
            y0, z0, sim.clamped if sim else 0,
        ))
        log.info("n=%d e_true=%.3e e_sim=%.3e", n, truth.e_true, rows[-1].e_sim)
    return rows


PRESET_VARIANTS = {
    "defaults": LuciaSchwartzModel(),
    "sigma-0.08": LuciaSchwartzModel(sigma=0.08),
    "kappa-3": LuciaSchwartzModel(kappa=3.0),
}


def with_overrides(m: LuciaSchwartzModel, **overrides) -> LuciaSchwartzModel:
    return replace(m, **{k: v for k, v in overrides.items() if v is not None})
