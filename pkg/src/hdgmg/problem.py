"""Problem data for -div(K grad u) = f on a rectangle with Dirichlet boundary."""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np


@dataclass(frozen=True)
class ProblemSpec:
    """Scalar diffusion coefficient, source, Dirichlet datum, and stabilization.

    All coefficient callables take vectorized (x, y) arrays.  tau is the HDG
    stabilization, constant per facet (the same value on every facet here;
    assembly routines accept a per-facet override).
    """

    coefficient: Callable
    source: Callable
    dirichlet: Callable
    tau: float = 1.0
    # closed-form fields for error measurement, when known
    exact_u: Optional[Callable] = field(default=None)
    exact_flux: Optional[Callable] = field(default=None)  # returns (q_x, q_y)

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError(f"stabilization tau must be positive, got {self.tau}")


def _bump_parts(x, y):
    """u = x(x-1) y(y-1) exp(-x^2-y^2) split into the factors used below."""
    P = x * (x - 1.0)
    Q = y * (y - 1.0)
    E = np.exp(-x * x - y * y)
    return P, Q, E


def bump_u(x, y):
    P, Q, E = _bump_parts(x, y)
    return P * Q * E


def bump_grad(x, y):
    P, Q, E = _bump_parts(x, y)
    Px = (2.0 * x - 1.0) - 2.0 * x * P  # d/dx of P*exp, divided by exp
    Qy = (2.0 * y - 1.0) - 2.0 * y * Q
    return Px * Q * E, P * Qy * E


def tanh_coefficient(x, y):
    return np.tanh(x + y) + 1.0


def bump_flux(x, y):
    """q = -K grad u for the tanh coefficient."""
    ux, uy = bump_grad(x, y)
    K = tanh_coefficient(x, y)
    return -K * ux, -K * uy


def bump_source(x, y):
    """f = -div(K grad u), differentiated by hand from the closed forms."""
    P, Q, E = _bump_parts(x, y)
    Px = (2.0 * x - 1.0) - 2.0 * x * P
    Qy = (2.0 * y - 1.0) - 2.0 * y * Q
    # second x-derivative of P*exp over exp: (Px)' - 2x*Px
    Pxx = (2.0 + 4.0 * x - 6.0 * x * x) - 2.0 * x * Px
    Qyy = (2.0 + 4.0 * y - 6.0 * y * y) - 2.0 * y * Qy
    u_x = Px * Q * E
    u_y = P * Qy * E
    u_xx = Pxx * Q * E
    u_yy = Qyy * P * E
    t = np.tanh(x + y)
    K = t + 1.0
    dK = 1.0 - t * t  # equal for both partials
    return -(dK * (u_x + u_y) + K * (u_xx + u_yy))


def manufactured_problem(tau=1.0):
    """Verification problem on [0,1]^2: smooth bump solution, tanh coefficient."""
    return ProblemSpec(
        coefficient=tanh_coefficient,
        source=bump_source,
        dirichlet=bump_u,
        tau=tau,
        exact_u=bump_u,
        exact_flux=bump_flux,
    )


def constant_problem(value=0.0, kappa=1.0, tau=1.0):
    """u identically `value` with constant coefficient; handy sanity case."""
    c = float(value)
    k = float(kappa)
    return ProblemSpec(
        coefficient=lambda x, y: np.full_like(np.asarray(x, dtype=float), k),
        source=lambda x, y: np.zeros_like(np.asarray(x, dtype=float)),
        dirichlet=lambda x, y: np.full_like(np.asarray(x, dtype=float), c),
        tau=tau,
        exact_u=lambda x, y: np.full_like(np.asarray(x, dtype=float), c),
        exact_flux=lambda x, y: (
            np.zeros_like(np.asarray(x, dtype=float)),
            np.zeros_like(np.asarray(x, dtype=float)),
        ),
    )
