"""Output-based feedback stabilization of parabolic equations with memory.

Library layout:

- ``mesh``: structured triangulations and the chessboard device layout
- ``fem``: piecewise-linear assembly and the discrete L2 norm
- ``memory``: kernel quadrature and the history convolution
- ``feedback``: device matrices and the explicit feedback/injection operators
- ``timestepper``: the IMEX scheme for the coupled plant/observer pair
- ``experiments``: run configurations, presets, CSV/JSON emission
- ``cli``: the ``memstab`` command
"""

from .fem import CoefficientField, h_norm
from .feedback import DeviceMatrices, FeedbackGains
from .memory import EXPONENTIAL, RIESZ, HistoryBuffer, KernelSpec
from .mesh import DeviceLayout, StructuredMesh, build_mesh, chessboard_layout
from .timestepper import NormSeries, SolverError, assemble_system, decay_rate_fit

__version__ = "0.1.0"

__all__ = [
    "CoefficientField",
    "DeviceLayout",
    "DeviceMatrices",
    "EXPONENTIAL",
    "FeedbackGains",
    "HistoryBuffer",
    "KernelSpec",
    "NormSeries",
    "RIESZ",
    "SolverError",
    "StructuredMesh",
    "assemble_system",
    "build_mesh",
    "chessboard_layout",
    "decay_rate_fit",
    "h_norm",
    "__version__",
]
