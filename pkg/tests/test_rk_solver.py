import numpy as np
import pytest

from fbsde_fourier.euler_solver import solve_euler
from fbsde_fourier.grid import GridParams, TimePartition, build_grid
from fbsde_fourier.model import EulerCharacteristics, FbsdeProblem, MilsteinCharacteristics
from fbsde_fourier.rk_solver import (
    ButcherTableau,
    TableauError,
    UnsupportedSchemeError,
    crank_nicolson,
    explicit_one_stage,
    implicit_one_stage,
    load_tableau,
    rk2_benchmark,
    solve_rk,
    stability_check_rk,
    two_stage,
    validate_tableau,
)
from fbsde_fourier.solution import NumericalError

PROVIDERS = [EulerCharacteristics, MilsteinCharacteristics]


def grid(n=10, T=0.5, x0=1.0, l=0.04, N=4, N0=2):
    return build_grid(GridParams(x0, l, N, N0), TimePartition.uniform(T, n))


def problem(g, f=None, T=0.5, x0=1.0):
    return FbsdeProblem(
        a=lambda t, x: 0.5 * (1.0 - x),
        sigma=lambda t, x: 0.2 * x,
        f=f or (lambda t, x, y, z: 0 * y),
        g=g,
        grad_g=lambda x: np.cos(x),
        T=T,
        x0=x0,
    )


def test_builtin_tableaus_are_valid():
    for t in (explicit_one_stage(), rk2_benchmark(), implicit_one_stage(), crank_nicolson()):
        assert validate_tableau(t) == []


def test_benchmark_tableau_entries():
    t = rk2_benchmark()
    assert t.gamma == pytest.approx((0, 2 / 3, 1))
    assert t.A[1] == pytest.approx((2 / 3, 0))
    assert t.bottom_alpha == pytest.approx((1 / 4, 3 / 4, 0))
    assert t.B[1] == pytest.approx((2 / 3, 0))
    assert t.bottom_beta == pytest.approx((1, 0))
    assert t.is_explicit


@pytest.mark.parametrize("gamma2", [0.5, 0.6, 2 / 3, 0.9, 0.99])
@pytest.mark.parametrize("beta1", [0.0, 0.3, 1.0])
def test_two_stage_family_is_valid(gamma2, beta1):
    t = two_stage(gamma2, beta1)
    assert validate_tableau(t) == [] and t.is_explicit
    assert sum(t.bottom_alpha) == pytest.approx(1)


def test_two_stage_range_checked():
    with pytest.raises(TableauError):
        two_stage(0.4, 0.5)
    with pytest.raises(TableauError):
        two_stage(1.0, 0.5)
    with pytest.raises(TableauError):
        two_stage(0.5, 1.5)


def test_implicit_tableaus_recognised():
    assert not implicit_one_stage().is_explicit
    assert not crank_nicolson().is_explicit
    for t in (implicit_one_stage(), crank_nicolson()):
        with pytest.raises(UnsupportedSchemeError, match="implicit"):
            solve_rk(problem(np.sin), grid(), t, EulerCharacteristics(problem(np.sin)))


def test_bottom_alpha_sum_violation():
    t = ButcherTableau((0, 1), ((0,),), (0.9, 0.0), ((0,),), (1,))
    assert "sum of α_j ≠ 1" in validate_tableau(t)


@pytest.mark.parametrize("kwargs, name", [
    (dict(gamma=(0.1, 2 / 3, 1)), "γ_1 ≠ 0"),
    (dict(gamma=(0, 1, 1)), "γ not strictly increasing"),
    (dict(B=((0, 0), (2 / 3, 0.1))), "β_jj ≠ 0"),
    (dict(A=((0, 0), (0.5, 0))), "sum_k α_2k ≠ γ_2"),
    (dict(B=((0, 0), (0.5, 0))), "sum_k β_2k ≠ γ_2"),
    (dict(bottom_alpha=(-0.25, 1.25, 0)), "negative coefficient"),
])
def test_malformed_tableaus(kwargs, name):
    base = rk2_benchmark().as_dict()
    args = dict(gamma=base["gamma"], A=base["A"], bottom_alpha=base["bottom_alpha"],
                B=base["B"], bottom_beta=base["bottom_beta"]) | kwargs
    t = ButcherTableau(**{k: tuple(tuple(r) if isinstance(r, list) else r for r in v) for k, v in args.items()})
    assert name in validate_tableau(t)
    with pytest.raises(TableauError):
        solve_rk(problem(np.sin), grid(), t, EulerCharacteristics(problem(np.sin)))


def test_shape_mismatch_rejected():
    with pytest.raises(TableauError, match="shapes"):
        ButcherTableau((0, 1), ((0,),), (1.0,), ((0,),), (1,))


def test_load_tableau(tmp_path):
    path = tmp_path / "t.ini"
    path.write_text("[tableau]\nname = mine\ngamma = 0, 2/3, 1\nalpha = 0; 2/3\n"
                    "bottom_alpha = 1/4, 3/4, 0\nbeta = 0; 2/3\nbottom_beta = 1, 0\n")
    t = load_tableau(path)
    assert t.name == "mine"
    assert t.as_dict() | {"name": "rk2"} == rk2_benchmark().as_dict()
    (tmp_path / "bad.ini").write_text("[tableau]\ngamma = 0, 1\n")
    with pytest.raises(TableauError):
        load_tableau(tmp_path / "bad.ini")
    with pytest.raises(TableauError):
        load_tableau(tmp_path / "missing.ini")


@pytest.mark.parametrize("cls", PROVIDERS)
@pytest.mark.parametrize("n", [5, 20])
@pytest.mark.parametrize("tableau", [explicit_one_stage, rk2_benchmark])
def test_zero_driver_matches_euler(cls, n, tableau):
    pb = problem(np.sin)
    g = grid(n=n)
    rk = solve_rk(pb, g, tableau(), cls(pb))
    eu = solve_euler(pb, g, cls(pb))
    for a, b in zip(rk.layers, eu.layers):
        np.testing.assert_allclose(a.u, b.u_tilde, atol=1e-9)
        np.testing.assert_allclose(a.u_dot, b.u_dot, atol=1e-9)


@pytest.mark.parametrize("cls", PROVIDERS)
def test_constant_terminal_is_exact(cls):
    pb = FbsdeProblem(a=lambda t, x: 0.5 * (1 - x), sigma=lambda t, x: 0.2 * x,
                      f=lambda t, x, y, z: -0.3 * z, g=lambda x: 1.5 + 0 * x, T=0.5, x0=1.0)
    sol = solve_rk(pb, grid(), rk2_benchmark(), cls(pb))
    for layer in sol.layers:
        np.testing.assert_allclose(layer.u, 1.5, atol=1e-9)
        np.testing.assert_allclose(layer.u_dot, 0.0, atol=1e-9)


def test_terminal_gradient_is_analytic():
    pb = problem(np.sin)
    sol = solve_rk(pb, grid(n=3), rk2_benchmark(), MilsteinCharacteristics(pb))
    last = sol.layer(3)
    np.testing.assert_array_equal(last.u_dot, 0.2 * last.x * np.cos(last.x))


def test_linear_driver_two_stage_first_order():
    r = 0.8
    pb = FbsdeProblem(a=lambda t, x: 0 * x, sigma=lambda t, x: 0.3 + 0 * x, f=lambda t, x, y, z: -r * y,
                      g=lambda x: x, grad_g=np.ones_like, T=0.5, x0=1.0, x_independent=True)
    errs = []
    for n in (10, 20, 40):
        sol = solve_rk(pb, grid(n=n), rk2_benchmark(), MilsteinCharacteristics(pb))
        errs.append(abs(sol.center_values()[0] - np.exp(-r * 0.5)))
    assert errs[0] > errs[1] > errs[2]
    assert np.log2(errs[0] / errs[2]) / 2 > 0.8


def test_nan_reports_stage():
    # only the intermediate stage time of step 3 (t = 0.3 + 0.1/3) is poisoned
    f = lambda t, x, y, z: np.where(abs(t - 0.3 - 0.1 / 3) < 1e-9, np.nan, 0.0) + 0 * y
    pb = problem(np.sin, f=f)
    with pytest.raises(NumericalError) as info:
        solve_rk(pb, grid(n=5), rk2_benchmark(), MilsteinCharacteristics(pb))
    assert (info.value.i, info.value.stage) == (3, 3)


def test_stability_euler_provider_uses_gaussian_integrals():
    pb = FbsdeProblem(a=lambda t, x: 0 * x, sigma=lambda t, x: 1.0 + 0 * x, f=None, g=None, T=1.0, x0=0.0)
    g = build_grid(GridParams(0.0, 0.02, 2, 1), TimePartition.uniform(1.0, 100))
    pr = EulerCharacteristics(pb)
    L = g.params.L
    entry = stability_check_rk(g, pr, 4)
    dt = 0.01
    expected = 0.01 * (pr.phi_integral(0.0, 0.0, dt, L / 2) + pr.Phi_integral(0.0, 0.0, dt, L / 2)) / np.pi
    assert entry.value == pytest.approx(expected)
    # windowed integrals at most the full Gaussian ones
    assert entry.value <= 0.01 * pr.char_integral_bound(0.0, 0.0, dt) / np.pi
    assert entry.passed


def test_stability_passes_as_dx_shrinks():
    pb = FbsdeProblem(a=lambda t, x: 0 * x, sigma=lambda t, x: 0.5 + 0 * x, f=None, g=None, T=1.0, x0=0.0)
    pr = MilsteinCharacteristics(pb)
    values = []
    for l in (2.0, 0.2, 0.02, 0.002):
        g = build_grid(GridParams(0.0, l, 2, 1), TimePartition.uniform(1.0, 50))
        values.append(stability_check_rk(g, pr, 0).value)
    # once the window L/2 covers the characteristic function the bound falls linearly with dx
    assert values[2] / values[3] == pytest.approx(10, rel=1e-3)
    assert values[-1] < 1 < values[1]
