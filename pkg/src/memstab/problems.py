"""Stock problem data: coefficients, initial states and the exact benchmark.

The default reaction/convection pair drives an unstable free dynamics on the
unit square under Neumann conditions; the exact benchmark solution is used for
the discretization-error refinement study.
"""

from __future__ import annotations

import numpy as np

from .fem import CoefficientField
from .memory import KernelSpec, kernel_mass

__all__ = [
    "default_field",
    "initial_state",
    "exact_solution",
    "exact_neg_laplacian",
    "exact_gradient",
    "manufactured_forcing",
]


def _reaction(x1, x2, t):
    return -1.5 + x1 - np.abs(np.sin(6.0 * t + x1))


def _convection(x1, x2, t):
    return x1 + x2, np.abs(np.cos(6.0 * t) * x1 * x2)


def default_field(nu: float = 0.1, eta: float = 0.0) -> CoefficientField:
    """Time-varying reaction/convection data of the stock experiments."""
    return CoefficientField(a=_reaction, b=_convection, nu=nu, eta=eta,
                            time_dependent=True)


def initial_state(x1, x2):
    """Stock initial state 1 - 2 x1 x2."""
    return 1.0 - 2.0 * x1 * x2


def exact_solution(x1, x2):
    """Time-independent benchmark solution, compatible with Neumann walls."""
    pi = np.pi
    return np.cos(pi * x1) * np.cos(2 * pi * x2) + np.cos(2 * pi * x1) + 2.0


def exact_neg_laplacian(x1, x2):
    """-Laplacian of the benchmark solution."""
    pi = np.pi
    return (5 * pi**2 * np.cos(pi * x1) * np.cos(2 * pi * x2)
            + 4 * pi**2 * np.cos(2 * pi * x1))


def exact_gradient(x1, x2):
    pi = np.pi
    g1 = -pi * np.sin(pi * x1) * np.cos(2 * pi * x2) - 2 * pi * np.sin(2 * pi * x1)
    g2 = -2 * pi * np.cos(pi * x1) * np.sin(2 * pi * x2)
    return g1, g2


def manufactured_forcing(field: CoefficientField, kernel: KernelSpec | None):
    """Forcing that makes the benchmark solution exact for the free dynamics.

    Derived term by term from the strong form: since the benchmark state is
    time-independent, the history integral collapses to the kernel mass
    integral( K(u) du ) times the (stationary) -Laplacian.
    """
    eta = field.eta
    if eta > 0 and kernel is None:
        raise ValueError("a kernel is required when the memory coefficient is set")

    def forcing(x1, x2, t):
        y = exact_solution(x1, x2)
        lap = exact_neg_laplacian(x1, x2)
        g1, g2 = exact_gradient(x1, x2)
        b1, b2 = field.b(x1, x2, t)
        out = field.nu * lap + (1.0 + field.a(x1, x2, t)) * y + b1 * g1 + b2 * g2
        if eta > 0:
            out = out + eta * kernel_mass(kernel, t) * lap
        return out

    return forcing
