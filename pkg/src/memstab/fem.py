"""Piecewise-linear finite element assembly on the structured triangulations.

All element integrals are evaluated in closed form (the integrands are at most
quadratic), so the assembled matrices carry no quadrature error.  Matrices are
returned in CSR format with sorted indices, summed duplicates and no explicit
zeros.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp

__all__ = [
    "CoefficientField",
    "assemble_mass",
    "assemble_stiffness",
    "assemble_directional",
    "assemble_reaction",
    "assemble_convection",
    "reaction_from_mass",
    "h_norm",
    "apply_dirichlet",
]


@dataclass(frozen=True)
class CoefficientField:
    """Reaction/convection/diffusion data of the parabolic operator.

    ``a(x1, x2, t)`` returns nodal reaction values, ``b(x1, x2, t)`` a pair of
    nodal convection components.  Both must be total and deterministic.
    ``time_dependent=False`` lets the time stepper reuse factorizations.
    """

    a: Callable
    b: Callable
    nu: float
    eta: float = 0.0
    time_dependent: bool = True

    def __post_init__(self):
        if self.nu <= 0:
            raise ValueError(f"diffusion coefficient must be positive, got {self.nu}")
        if self.eta < 0:
            raise ValueError(f"memory coefficient must be >= 0, got {self.eta}")


def _geometry(mesh):
    """Signed areas and P1 gradient coefficients per triangle.

    Returns (area, bx, by) where grad(phi_i) = (bx[:, i], by[:, i]) / (2*area).
    """
    p = mesh.nodes[mesh.triangles]  # (nt, 3, 2)
    x = p[:, :, 0]
    y = p[:, :, 1]
    bx = np.column_stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]])
    by = np.column_stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]])
    area = 0.5 * ((x[:, 1] - x[:, 0]) * (y[:, 2] - y[:, 0])
                  - (x[:, 2] - x[:, 0]) * (y[:, 1] - y[:, 0]))
    if np.any(area <= 0):
        raise ValueError("mesh contains a triangle with non-positive signed area")
    return area, bx, by


def _assemble(mesh, local) -> sp.csr_matrix:
    """Scatter (nt, 3, 3) element matrices into a finalized CSR matrix."""
    n = mesh.nodes.shape[0]
    rows = np.repeat(mesh.triangles, 3, axis=1).ravel()
    cols = np.tile(mesh.triangles, (1, 3)).ravel()
    mat = sp.coo_matrix((local.reshape(-1), (rows, cols)), shape=(n, n)).tocsr()
    mat.sum_duplicates()
    mat.eliminate_zeros()
    mat.sort_indices()
    return mat


def assemble_mass(mesh) -> sp.csr_matrix:
    """Consistent mass matrix: diagonal |T|/6, off-diagonal |T|/12 per element."""
    area, _, _ = _geometry(mesh)
    base = np.full((3, 3), 1.0 / 12.0)
    np.fill_diagonal(base, 1.0 / 6.0)
    local = area[:, None, None] * base[None, :, :]
    return _assemble(mesh, local)


def assemble_stiffness(mesh) -> sp.csr_matrix:
    """Gradient Gram matrix of the hat functions (unscaled by the diffusion)."""
    area, bx, by = _geometry(mesh)
    # grad_i . grad_j * |T| = (bx_i bx_j + by_i by_j) / (4 |T|)
    scale = 0.25 / area
    local = scale[:, None, None] * (
        bx[:, :, None] * bx[:, None, :] + by[:, :, None] * by[:, None, :]
    )
    return _assemble(mesh, local)


def assemble_directional(mesh, axis: int) -> sp.csr_matrix:
    """Matrix of integral( d(phi_j)/dx_axis * phi_i ), derivative on the column.

    ``axis`` is 1 or 2.  The derivative acts on the trial (column) function so
    the matrix discretizes the convection term b . grad(y) acting on the state
    vector.
    """
    if axis not in (1, 2):
        raise ValueError(f"axis must be 1 or 2, got {axis}")
    _, bx, by = _geometry(mesh)
    g = bx if axis == 1 else by
    # d(phi_j)/dx_axis = g_j / (2|T|) is constant; integral(phi_i) = |T|/3.
    local = np.repeat(g[:, None, :] / 6.0, 3, axis=1)
    return _assemble(mesh, local)


def reaction_from_mass(M: sp.csr_matrix, a_vals: np.ndarray,
                       row_of_entry: np.ndarray | None = None) -> sp.csr_matrix:
    """Symmetrized reaction matrix (M D_a + D_a M) / 2 from nodal values."""
    if row_of_entry is None:
        row_of_entry = np.repeat(np.arange(M.shape[0]), np.diff(M.indptr))
    data = M.data * 0.5 * (a_vals[row_of_entry] + a_vals[M.indices])
    return sp.csr_matrix((data, M.indices.copy(), M.indptr.copy()), shape=M.shape)


def assemble_reaction(mesh, field: CoefficientField, t: float) -> sp.csr_matrix:
    """Reaction term at time t with the coefficient sampled at the nodes."""
    M = assemble_mass(mesh)
    a_vals = np.asarray(field.a(mesh.nodes[:, 0], mesh.nodes[:, 1], t), dtype=float)
    R = reaction_from_mass(M, a_vals)
    R.eliminate_zeros()
    return R


def assemble_convection(mesh, field: CoefficientField, t: float) -> sp.csr_matrix:
    """Convection matrix sum_i D_{b_i}(t) G_{x_i} with nodal coefficients."""
    b1, b2 = field.b(mesh.nodes[:, 0], mesh.nodes[:, 1], t)
    G1 = assemble_directional(mesh, 1)
    G2 = assemble_directional(mesh, 2)
    C = sp.diags(np.asarray(b1, dtype=float)) @ G1 \
        + sp.diags(np.asarray(b2, dtype=float)) @ G2
    C = C.tocsr()
    C.eliminate_zeros()
    C.sort_indices()
    return C


def h_norm(M: sp.csr_matrix, v: np.ndarray) -> float:
    """Discrete L2 norm sqrt(v' M v) with the consistent mass matrix."""
    val = float(v @ (M @ v))
    return float(np.sqrt(max(val, 0.0)))


def apply_dirichlet(A: sp.csr_matrix, rhs: np.ndarray, boundary_nodes):
    """Eliminate homogeneous Dirichlet rows/columns, keeping symmetry.

    Boundary rows and columns are zeroed, the diagonal is set to 1 and the
    right-hand side entries are zeroed, pinning boundary values to 0.
    """
    boundary = np.asarray(list(boundary_nodes), dtype=np.int64)
    out_rhs = np.array(rhs, dtype=float, copy=True)
    if boundary.size == 0:
        return A.copy(), out_rhs
    n = A.shape[0]
    mask = np.ones(n)
    mask[boundary] = 0.0
    D = sp.diags(mask)
    fixup = sp.coo_matrix(
        (np.ones(boundary.size), (boundary, boundary)), shape=A.shape
    )
    out = (D @ A @ D + fixup).tocsr()
    out.sum_duplicates()
    out.eliminate_zeros()
    out.sort_indices()
    out_rhs[boundary] = 0.0
    return out, out_rhs
