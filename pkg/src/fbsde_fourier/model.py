"""FBSDE problem definition and conditional characteristics of the forward step.

A characteristics provider describes one step ``X_{t+dt} - X_t`` of a forward
discretization started at ``x``:

* ``phi(nu, x, t, dt)``: conditional characteristic function of the increment,
* ``Phi(nu, x, t, dt)``: the same expectation weighted by ``dW/dt`` (the
  gradient kernel, ``sigma`` included),
* ``value_correction`` / ``gradient_correction``: conditional moments that
  undo the quadratic boundary transform,
* ``simulate_step``: one step driven by a supplied standard normal draw.

Everything broadcasts over numpy arrays in ``nu`` and ``x``.

Milstein characteristic function
--------------------------------
With ``s2 = sigma(t, x)**2`` the first-order step is
``dX = a dt + sigma dW + s2 (dW**2 - dt)/2``, an affine function of a
non-central chi-square variable with one degree of freedom. Completing the
square gives::

    phi(nu) = zeta**0.5 * exp(i nu zeta / 2 + i nu kappa)
    zeta    = 1 / (1 - i s2 nu dt),   kappa = a dt - (s2 dt + 1)/2

i.e. ``zeta`` (not its reciprocal) in the exponent. A Monte-Carlo check with
1e7 draws (``tests/test_model.py::test_milstein_phi_matches_monte_carlo``)
agrees with this form to 2e-3 and rejects the reciprocal reading. Since
``Re(zeta) > 0`` for every real ``nu`` the principal square root is already
the branch continuous from ``zeta(0) = 1``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import integrate
from scipy.special import erf

from .transform import TransformParams, euler_corrections, milstein_corrections


@dataclass(frozen=True)
class FbsdeProblem:
    """Decoupled one-dimensional FBSDE.

    ``a(t, x)``, ``sigma(t, x)``, ``f(t, x, y, z)``, ``g(x)`` and ``grad_g(x)``
    must accept numpy arrays. Set ``x_independent`` when ``a`` and ``sigma``
    do not depend on ``x``; the kernels then use a single inverse FFT per layer.
    """

    a: Callable
    sigma: Callable
    f: Callable
    g: Callable
    T: float
    x0: float
    grad_g: Optional[Callable] = None
    x_independent: bool = False

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError(f"T: horizon must be positive, got {self.T}")

    def sig2(self, t, x):
        return np.asarray(self.sigma(t, x), dtype=float) ** 2

    def check_diffusion(self, times, nodes) -> None:
        """Raise unless ``sigma(t, x)**2 > 0`` on every supplied (t, x)."""
        for t in times:
            s2 = np.broadcast_to(self.sig2(t, nodes), np.shape(nodes))
            if not np.all(np.isfinite(s2)) or np.any(s2 <= 0):
                raise ValueError(f"sigma: sigma(t, x)**2 must be positive on the grid (fails at t={t})")


def euler_phi(nu, a, s2, dt):
    return np.exp(1j * nu * a * dt - 0.5 * dt * nu**2 * s2)


def milstein_zeta(nu, s2, dt):
    return 1.0 / (1.0 - 1j * s2 * nu * dt)


def milstein_phi(nu, a, s2, dt):
    zeta = milstein_zeta(nu, s2, dt)
    # i nu zeta/2 + i nu kappa rewritten without the cancelling +-i nu/2 terms
    exponent = -0.5 * nu**2 * s2 * dt * zeta + 1j * nu * (a * dt - 0.5 * s2 * dt)
    return np.sqrt(zeta) * np.exp(exponent)


def milstein_phi_reciprocal_reading(nu, a, s2, dt):
    """Literal alternative with ``zeta**-1`` in the exponent; kept to test it is rejected."""
    zeta = milstein_zeta(nu, s2, dt)
    kappa = a * dt - 0.5 * (s2 * dt + 1.0)
    return np.sqrt(zeta) * np.exp(0.5j * nu / zeta + 1j * nu * kappa)


class CharacteristicProvider:
    """Base class; subclasses fill in the step-specific pieces."""

    name = "abstract"

    def __init__(self, problem: FbsdeProblem):
        self.problem = problem

    @property
    def x_independent(self) -> bool:
        return self.problem.x_independent

    def _coeffs(self, x, t):
        a = np.asarray(self.problem.a(t, x), dtype=float)
        sigma = np.asarray(self.problem.sigma(t, x), dtype=float)
        return a, sigma

    def phi(self, nu, x, t, dt):
        raise NotImplementedError

    def Phi(self, nu, x, t, dt):
        raise NotImplementedError

    def corrections(self, x, a, s2, dt, p):
        raise NotImplementedError

    def value_correction(self, x, t, dt, p: TransformParams):
        a, sigma = self._coeffs(x, t)
        return self.corrections(x, a, sigma**2, dt, p)[0]

    def gradient_correction(self, x, t, dt, p: TransformParams):
        a, sigma = self._coeffs(x, t)
        return sigma * self.corrections(x, a, sigma**2, dt, p)[1]

    def simulate_step(self, x, t, dt, z):
        raise NotImplementedError

    def char_integral_bound(self, x, t, dt, nu_max=np.inf) -> float:
        """``int |phi| dnu + int |Phi| dnu`` over ``|nu| <= nu_max`` at the worst node of ``x``."""
        return self.phi_integral(x, t, dt, nu_max) + self.Phi_integral(x, t, dt, nu_max)

    def _worst_node(self, x, t):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        s2 = np.broadcast_to(self.problem.sig2(t, x), x.shape)
        k = int(np.argmin(s2))
        return x[k], s2[k]


class EulerCharacteristics(CharacteristicProvider):
    """Gaussian increment of the Euler-Maruyama step (half order)."""

    name = "euler"

    def phi(self, nu, x, t, dt):
        a, sigma = self._coeffs(x, t)
        return euler_phi(nu, a, sigma**2, dt)

    def Phi(self, nu, x, t, dt):
        a, sigma = self._coeffs(x, t)
        return sigma * 1j * nu * euler_phi(nu, a, sigma**2, dt)

    def corrections(self, x, a, s2, dt, p):
        return euler_corrections(x, a, s2, dt, p)

    def simulate_step(self, x, t, dt, z):
        a, sigma = self._coeffs(x, t)
        return x + a * dt + sigma * np.sqrt(dt) * z

    def phi_integral(self, x, t, dt, nu_max=np.inf) -> float:
        _, s2 = self._worst_node(x, t)
        c = dt * s2
        full = np.sqrt(2.0 * np.pi / c)
        if np.isinf(nu_max):
            return float(full)
        return float(full * erf(nu_max * np.sqrt(c / 2.0)))

    def Phi_integral(self, x, t, dt, nu_max=np.inf) -> float:
        _, s2 = self._worst_node(x, t)
        c = dt * s2
        tail = 1.0 if np.isinf(nu_max) else -np.expm1(-0.5 * c * nu_max**2)
        return float(np.sqrt(s2) * 2.0 * tail / c)


class MilsteinCharacteristics(CharacteristicProvider):
    """Non-central chi-square increment of the first-order (Milstein) step."""

    name = "milstein"

    def phi(self, nu, x, t, dt):
        a, sigma = self._coeffs(x, t)
        return milstein_phi(nu, a, sigma**2, dt)

    def Phi(self, nu, x, t, dt):
        a, sigma = self._coeffs(x, t)
        s2 = sigma**2
        return milstein_zeta(nu, s2, dt) * sigma * 1j * nu * milstein_phi(nu, a, s2, dt)

    def corrections(self, x, a, s2, dt, p):
        return milstein_corrections(x, a, s2, dt, p)

    def simulate_step(self, x, t, dt, z):
        a, sigma = self._coeffs(x, t)
        return x + a * dt + sigma * np.sqrt(dt) * z + 0.5 * sigma**2 * dt * (z**2 - 1.0)

    def _integral(self, integrand, s2, dt, nu_max) -> float:
        # |phi| only depends on s2*dt; beyond ~40 standard widths the Gaussian
        # envelope is below double precision
        width = 1.0 / np.sqrt(dt * s2)
        upper = min(nu_max, 40.0 * width)
        value, _ = integrate.quad(integrand, 0.0, upper, limit=200)
        return 2.0 * float(value)

    def phi_integral(self, x, t, dt, nu_max=np.inf) -> float:
        _, s2 = self._worst_node(x, t)
        return self._integral(lambda v: abs(milstein_phi(v, 0.0, s2, dt)), s2, dt, nu_max)

    def Phi_integral(self, x, t, dt, nu_max=np.inf) -> float:
        _, s2 = self._worst_node(x, t)
        sigma = np.sqrt(s2)
        return self._integral(
            lambda v: abs(milstein_zeta(v, s2, dt) * sigma * v * milstein_phi(v, 0.0, s2, dt)),
            s2, dt, nu_max,
        )


PROVIDERS = {"euler": EulerCharacteristics, "milstein": MilsteinCharacteristics}


def make_provider(name: str, problem: FbsdeProblem) -> CharacteristicProvider:
    try:
        return PROVIDERS[name](problem)
    except KeyError:
        raise ValueError(f"provider: unknown provider {name!r}, expected one of {sorted(PROVIDERS)}") from None
