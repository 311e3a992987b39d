"""Actuator/sensor device matrices and the explicit feedback operators.

The feedback input and output injection are scaled orthogonal projections onto
the spans of the device indicator functions:

    K = -lambda1 * VU^{-1} U' M        (input from a state estimate)
    L = -lambda2 * M W VW^{-1}         (injection of the output mismatch)

with VU = U' M U and VW = W' M W the device Gram matrices.  The Gram systems
are tiny (one row per device), so dense Cholesky factorizations are stored.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

from .mesh import DeviceLayout, StructuredMesh, indicator_vector

__all__ = [
    "DeviceMatrices",
    "FeedbackGains",
    "build_device_matrices",
    "feedback_matrix",
    "injection_matrix",
    "orthogonal_projection",
    "observer_initial_state",
    "static_output_gain",
]


@dataclass(frozen=True)
class FeedbackGains:
    """Nonnegative scaling gains for the input and injection operators."""

    lambda1: float
    lambda2: float

    def __post_init__(self):
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ValueError(
                f"gains must be nonnegative, got ({self.lambda1}, {self.lambda2})"
            )


@dataclass
class DeviceMatrices:
    """Indicator columns and Gram factorizations for one device layout."""

    U: sp.csr_matrix            # nodes x n_actuators, 0/1 columns
    W: sp.csr_matrix            # nodes x n_sensors
    VU: np.ndarray              # actuator Gram matrix U' M U
    VW: np.ndarray              # sensor Gram matrix W' M W
    VU_chol: tuple = field(repr=False)
    VW_chol: tuple = field(repr=False)


def _indicator_columns(mesh: StructuredMesh, supports) -> sp.csr_matrix:
    cols = [indicator_vector(mesh, rect) for rect in supports]
    return sp.csr_matrix(np.column_stack(cols))


def build_device_matrices(mesh: StructuredMesh, layout: DeviceLayout,
                          M: sp.csr_matrix) -> DeviceMatrices:
    """Assemble U, W and the positive definite Gram matrices with factors."""
    U = _indicator_columns(mesh, layout.actuator_supports)
    W = _indicator_columns(mesh, layout.sensor_supports)
    VU = (U.T @ (M @ U)).toarray()
    VW = (W.T @ (M @ W)).toarray()
    try:
        VU_chol = _checked_cho_factor(VU)
        VW_chol = _checked_cho_factor(VW)
    except la.LinAlgError as exc:
        raise ValueError(f"degenerate device layout: singular Gram matrix ({exc})")
    return DeviceMatrices(U=U, W=W, VU=VU, VW=VW, VU_chol=VU_chol, VW_chol=VW_chol)


def _checked_cho_factor(V: np.ndarray):
    """Cholesky factorization that also rejects numerically singular input."""
    chol = la.cho_factor(V)
    pivots = np.abs(np.diag(chol[0]))
    if pivots.min() ** 2 <= 1e-12 * pivots.max() ** 2:
        raise la.LinAlgError("Gram matrix is numerically singular")
    return chol


def feedback_matrix(dm: DeviceMatrices, M: sp.csr_matrix,
                    lambda1: float) -> np.ndarray:
    """Dense feedback-input matrix K = -lambda1 VU^{-1} U' M."""
    UtM = (M @ dm.U).T.toarray()
    return -lambda1 * la.cho_solve(dm.VU_chol, UtM)


def injection_matrix(dm: DeviceMatrices, M: sp.csr_matrix,
                     lambda2: float) -> np.ndarray:
    """Dense output-injection matrix L = -lambda2 M W VW^{-1}."""
    MW = (M @ dm.W).toarray()
    return -lambda2 * la.cho_solve(dm.VW_chol, MW.T).T


def orthogonal_projection(dm: DeviceMatrices, M: sp.csr_matrix, side: str,
                          v: np.ndarray) -> np.ndarray:
    """M-orthogonal projection of v onto the actuator or sensor span."""
    if side == "actuators":
        cols, chol = dm.U, dm.VU_chol
    elif side == "sensors":
        cols, chol = dm.W, dm.VW_chol
    else:
        raise ValueError(f"side must be 'actuators' or 'sensors', got {side!r}")
    weights = la.cho_solve(chol, cols.T @ (M @ v))
    return cols @ weights


def observer_initial_state(dm: DeviceMatrices, M: sp.csr_matrix,
                           y0: np.ndarray) -> np.ndarray:
    """Initial observer guess: projection of y0 onto the sensor span.

    Only the measured output W' M y0 enters, so the guess is constructible
    from the sensors alone.
    """
    return orthogonal_projection(dm, M, "sensors", y0)


def static_output_gain(dm: DeviceMatrices, lambda1: float) -> np.ndarray:
    """Static output-to-input map u = K_stat w for collocated devices.

    When every actuator doubles as its own sensor the feedback composition
    collapses to K_stat = -lambda1 VU^{-1} acting on the measured output
    w = U' M y, so no observer is needed.
    """
    eye = np.eye(dm.VU.shape[0])
    return -lambda1 * la.cho_solve(dm.VU_chol, eye)
