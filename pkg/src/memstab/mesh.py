"""Structured triangulations of the unit square and the chessboard device layout.

The meshes are uniform right-triangle grids whose element edges line up with
the boundaries of the actuator/sensor support sub-squares, so that indicator
vectors of the devices are exact nodal interpolants at every refinement level.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "StructuredMesh",
    "DeviceLayout",
    "build_mesh",
    "chessboard_layout",
    "indicator_vector",
    "write_mesh_text",
]

_ALIGN_TOL = 1e-9


@dataclass(frozen=True)
class StructuredMesh:
    """Uniform triangulation of [0,1]^2 with resolution ``n`` cells per side.

    Nodes are ordered lexicographically by (row, column), i.e. node
    ``iy*(n+1) + ix`` sits at ``(ix/n, iy/n)``.  Every square cell is split
    along its bottom-left to top-right diagonal into two counterclockwise
    triangles.
    """

    ell: int
    rf: int
    subdiv: int
    n: int
    nodes: np.ndarray          # (n_nodes, 2) float
    triangles: np.ndarray      # (2*n*n, 3) int
    boundary_nodes: np.ndarray # sorted int indices on the boundary
    h: float                   # max element diameter (the hypotenuse)

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]


@dataclass(frozen=True)
class DeviceLayout:
    """Chessboard assignment of actuator and sensor supports.

    Cell ``(i, j)`` of the ell-by-ell grid is an actuator cell iff ``i + j``
    is even, so the left-bottom cell (0, 0) carries an actuator.  Each device
    occupies a centred sub-square whose side is ``support_fraction`` of the
    cell side.  Supports are given as ``(x0, y0, x1, y1)`` rectangles.
    """

    ell: int
    support_fraction: float
    actuator_cells: tuple = field(repr=False)
    sensor_cells: tuple = field(repr=False)
    actuator_supports: tuple = field(repr=False)
    sensor_supports: tuple = field(repr=False)

    @property
    def n_actuators(self) -> int:
        return len(self.actuator_cells)

    @property
    def n_sensors(self) -> int:
        return len(self.sensor_cells)


def build_mesh(ell: int, rf: int = 0, subdiv: int = 4) -> StructuredMesh:
    """Build the structured triangulation at refinement level ``rf``.

    Parameters
    ----------
    ell : cells per side of the device grid (2, 4 and 6 are the stock cases).
    rf : regular refinement level; each level doubles the grid resolution.
    subdiv : elements per device-cell side on the coarsest level.  The default
        of 4 keeps half-side supports aligned with element edges.
    """
    if ell < 1:
        raise ValueError(f"ell must be positive, got {ell}")
    if rf < 0:
        raise ValueError(f"refinement level must be >= 0, got {rf}")
    if subdiv < 1:
        raise ValueError(f"subdiv must be >= 1, got {subdiv}")

    n = ell * subdiv * 2**rf
    side = np.arange(n + 1, dtype=float) / n
    xg, yg = np.meshgrid(side, side, indexing="xy")
    nodes = np.column_stack([xg.ravel(), yg.ravel()])

    ix, iy = np.meshgrid(np.arange(n), np.arange(n), indexing="xy")
    bl = (iy * (n + 1) + ix).ravel()
    br = bl + 1
    tl = bl + (n + 1)
    tr = tl + 1
    lower = np.column_stack([bl, br, tr])   # below the bl->tr diagonal
    upper = np.column_stack([bl, tr, tl])   # above it
    triangles = np.empty((2 * n * n, 3), dtype=np.int64)
    triangles[0::2] = lower
    triangles[1::2] = upper

    gx, gy = np.meshgrid(np.arange(n + 1), np.arange(n + 1), indexing="xy")
    boundary = ((gx == 0) | (gx == n) | (gy == 0) | (gy == n)).ravel()
    boundary_nodes = np.flatnonzero(boundary)

    return StructuredMesh(
        ell=ell,
        rf=rf,
        subdiv=subdiv,
        n=n,
        nodes=nodes,
        triangles=triangles,
        boundary_nodes=boundary_nodes,
        h=float(np.sqrt(2.0) / n),
    )


def chessboard_layout(ell: int, support_fraction: float = 0.5) -> DeviceLayout:
    """Alternate actuator/sensor cells over the ell-by-ell grid."""
    if ell < 1:
        raise ValueError(f"ell must be positive, got {ell}")
    if not 0.0 < support_fraction <= 1.0:
        raise ValueError(
            f"support_fraction must lie in (0, 1], got {support_fraction}"
        )

    cell = 1.0 / ell
    margin = 0.5 * (1.0 - support_fraction) * cell
    side = support_fraction * cell

    act_cells, sen_cells, act_supports, sen_supports = [], [], [], []
    for j in range(ell):
        for i in range(ell):
            x0 = i * cell + margin
            y0 = j * cell + margin
            rect = (x0, y0, x0 + side, y0 + side)
            if (i + j) % 2 == 0:
                act_cells.append((i, j))
                act_supports.append(rect)
            else:
                sen_cells.append((i, j))
                sen_supports.append(rect)

    return DeviceLayout(
        ell=ell,
        support_fraction=support_fraction,
        actuator_cells=tuple(act_cells),
        sensor_cells=tuple(sen_cells),
        actuator_supports=tuple(act_supports),
        sensor_supports=tuple(sen_supports),
    )


def _assert_aligned(mesh: StructuredMesh, support) -> None:
    for coord in support:
        scaled = coord * mesh.n
        if abs(scaled - round(scaled)) > _ALIGN_TOL * max(1.0, mesh.n):
            raise ValueError(
                f"support {support} is not aligned with the n={mesh.n} grid; "
                "its boundary would cut elements"
            )


def indicator_vector(mesh: StructuredMesh, support) -> np.ndarray:
    """Nodal interpolant of the indicator function of an aligned rectangle.

    Entries are exactly 1 at nodes inside the closed rectangle
    ``(x0, y0, x1, y1)`` and 0 elsewhere.  Rejects rectangles whose edges do
    not fall on mesh lines.
    """
    x0, y0, x1, y1 = support
    if x1 < x0 or y1 < y0:
        raise ValueError(f"degenerate support rectangle {support}")
    _assert_aligned(mesh, support)
    tol = _ALIGN_TOL
    x = mesh.nodes[:, 0]
    y = mesh.nodes[:, 1]
    inside = (x >= x0 - tol) & (x <= x1 + tol) & (y >= y0 - tol) & (y <= y1 + tol)
    if x1 == x0 or y1 == y0:  # zero-area rectangle carries no element
        return np.zeros(mesh.n_nodes)
    return inside.astype(float)


def write_mesh_text(mesh: StructuredMesh, path) -> None:
    """Dump the mesh as plain text, one record per line (debug aid)."""
    with open(path, "w") as fh:
        fh.write(f"mesh ell={mesh.ell} rf={mesh.rf} subdiv={mesh.subdiv} n={mesh.n}\n")
        fh.write(f"nodes {mesh.n_nodes}\n")
        for k, (x, y) in enumerate(mesh.nodes):
            fh.write(f"v {k} {x:.17g} {y:.17g}\n")
        fh.write(f"triangles {mesh.n_triangles}\n")
        for k, (a, b, c) in enumerate(mesh.triangles):
            fh.write(f"t {k} {a} {b} {c}\n")
        fh.write(f"boundary {mesh.boundary_nodes.size}\n")
        for k in mesh.boundary_nodes:
            fh.write(f"b {k}\n")
