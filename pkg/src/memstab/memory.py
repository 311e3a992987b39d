"""Memory kernels and their exact piecewise-affine convolution quadrature.

The history convolution integral( K(t_j - s) S y(s) ds ) is discretized by
replacing y with its piecewise-affine interpolant on the uniform time grid
t_i = k (i - 1).  The per-interval kernel moments are available in closed form
for both supported families, giving lag-indexed weights

    Gamma_1(m) = integral over one step of K at lag m = j - i,
    Gamma_2(m) = the (s - t_i)-weighted moment divided by k,

so the discrete convolution reads  S * sum_i [ G1(j-i) y_i + G2(j-i) (y_{i+1} - y_i) ].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "KernelSpec",
    "EXPONENTIAL",
    "RIESZ",
    "kernel_value",
    "kernel_mass",
    "interval_integral_0",
    "interval_integral_1",
    "gamma_coeffs",
    "gamma_tables",
    "HistoryBuffer",
    "memory_term",
    "memory_weights",
    "kernel_positivity_form",
    "MemoryConvolution",
]

EXPONENTIAL = "exponential"
RIESZ = "riesz"


@dataclass(frozen=True)
class KernelSpec:
    """Memory kernel family with rate parameter gamma.

    ``exponential``: K(tau) = exp(-gamma * tau), gamma > 0.
    ``riesz``:       K(tau) = tau**(gamma - 1), 0 < gamma < 1 (weakly singular).
    """

    family: str
    gamma: float

    def __post_init__(self):
        if self.family not in (EXPONENTIAL, RIESZ):
            raise ValueError(f"unknown kernel family {self.family!r}")
        if self.family == EXPONENTIAL and not self.gamma > 0:
            raise ValueError(f"exponential kernel needs gamma > 0, got {self.gamma}")
        if self.family == RIESZ and not 0 < self.gamma < 1:
            raise ValueError(
                f"weakly singular kernel needs gamma in (0, 1), got {self.gamma}"
            )


def kernel_value(kernel: KernelSpec, tau):
    """Pointwise kernel evaluation (tau > 0 for the weakly singular family)."""
    tau = np.asarray(tau, dtype=float)
    if kernel.family == EXPONENTIAL:
        return np.exp(-kernel.gamma * tau)
    return np.power(tau, kernel.gamma - 1.0)


def kernel_mass(kernel: KernelSpec, t):
    """Antiderivative integral( K(u) du ) from 0 to t, in closed form."""
    t = np.asarray(t, dtype=float)
    g = kernel.gamma
    if kernel.family == EXPONENTIAL:
        return -np.expm1(-g * t) / g
    return np.power(t, g) / g


def _check_lag(k: float, m: int) -> None:
    if k <= 0:
        raise ValueError(f"time step must be positive, got {k}")
    if m < 1:
        raise ValueError(
            f"lag must be >= 1 (the quadrature never touches the kernel "
            f"singularity from the right), got {m}"
        )


def _xexp_minus_expm1(x: float) -> float:
    """x e^x - expm1(x), evaluated without cancellation for small x.

    Equals sum_{n>=2} (n-1) x^n / n!; the naive difference loses half the
    mantissa once x drops below ~1e-4.
    """
    if x < 1e-3:
        return x * x * (0.5 + x * (1.0 / 3.0 + x * (0.125 + x * (1.0 / 30.0 + x / 144.0))))
    return x * np.exp(x) - np.expm1(x)


def interval_integral_0(kernel: KernelSpec, k: float, m: int) -> float:
    """Exact integral of K(t_j - s) over one step at lag m = j - i >= 1."""
    _check_lag(k, m)
    g = kernel.gamma
    if kernel.family == EXPONENTIAL:
        return float(np.expm1(g * k) * np.exp(-g * k * m) / g)
    return float(k**g / g * (m**g - (m - 1) ** g))


def interval_integral_1(kernel: KernelSpec, k: float, m: int) -> float:
    """Exact integral of (s - t_i) K(t_j - s) over one step at lag m >= 1."""
    _check_lag(k, m)
    g = kernel.gamma
    if kernel.family == EXPONENTIAL:
        return float(np.exp(-g * k * m) * _xexp_minus_expm1(g * k) / g**2)
    gp = g + 1.0
    return float(
        k**gp / (g * gp) * (m**gp - (m - 1) ** gp - gp * (m - 1) ** g)
    )


def gamma_coeffs(kernel: KernelSpec, k: float, m: int):
    """Quadrature weight pair (Gamma_1, Gamma_2) for lag m.

    Gamma_1 is the plain interval integral; Gamma_2 the affine-increment
    weight, equal to interval_integral_1 / k.
    """
    _check_lag(k, m)
    g = kernel.gamma
    if kernel.family == EXPONENTIAL:
        decay = np.exp(-g * k * m)
        g1 = np.expm1(g * k) * decay / g
        g2 = decay * _xexp_minus_expm1(g * k) / (g**2 * k)
        return float(g1), float(g2)
    gp = g + 1.0
    g1 = k**g / g * (m**g - (m - 1) ** g)
    g2 = k**g / (g * gp) * (m**gp - (m - 1) ** gp - gp * (m - 1) ** g)
    return float(g1), float(g2)


def gamma_tables(kernel: KernelSpec, k: float, max_lag: int):
    """Vectorized (Gamma_1, Gamma_2) arrays for lags 1..max_lag."""
    _check_lag(k, max(max_lag, 1))
    g = kernel.gamma
    m = np.arange(1, max_lag + 1, dtype=float)
    if kernel.family == EXPONENTIAL:
        decay = np.exp(-g * k * m)
        g1 = np.expm1(g * k) * decay / g
        g2 = decay * _xexp_minus_expm1(g * k) / (g**2 * k)
        return g1, g2
    gp = g + 1.0
    pg = np.power(m, g)
    pg_prev = np.power(m - 1.0, g)
    pgp = np.power(m, gp)
    pgp_prev = np.power(m - 1.0, gp)
    g1 = k**g / g * (pg - pg_prev)
    g2 = k**g / (g * gp) * (pgp - pgp_prev - gp * pg_prev)
    return g1, g2


class HistoryBuffer:
    """Append-only store of the nodal states y(t_1), y(t_2), ... (1-based).

    The full history is retained for the convolution; entry i corresponds to
    t_i = dt * (i - 1) on the uniform grid.
    """

    def __init__(self, dt: float, n_dofs: int, capacity: int = 64):
        if dt <= 0:
            raise ValueError(f"time step must be positive, got {dt}")
        self.dt = float(dt)
        self.n_dofs = int(n_dofs)
        self._data = np.empty((max(capacity, 1), n_dofs))
        self._len = 0

    def __len__(self) -> int:
        return self._len

    def append(self, state: np.ndarray) -> None:
        state = np.asarray(state, dtype=float)
        if state.shape != (self.n_dofs,):
            raise ValueError(
                f"state has shape {state.shape}, expected ({self.n_dofs},)"
            )
        if self._len == self._data.shape[0]:
            grown = np.empty((2 * self._data.shape[0], self.n_dofs))
            grown[: self._len] = self._data[: self._len]
            self._data = grown
        self._data[self._len] = state
        self._len += 1

    def state(self, i: int) -> np.ndarray:
        """State at the 1-based time index i."""
        if not 1 <= i <= self._len:
            raise IndexError(f"history holds {self._len} states, asked for {i}")
        return self._data[i - 1]

    def view(self, j: int | None = None) -> np.ndarray:
        """Read view of the first j states as a (j, n_dofs) array."""
        j = self._len if j is None else j
        if not 0 <= j <= self._len:
            raise ValueError(f"history holds {self._len} states, asked for {j}")
        return self._data[:j]


def memory_weights(kernel: KernelSpec, k: float, j: int, tables=None) -> np.ndarray:
    """Per-state weights w such that the discrete convolution is w . (y_1..y_j).

    Folding the increment terms onto the states gives
    w_i = (G1 - G2)(j - i) for i < j plus G2(j - i + 1) for i > 1.
    """
    if j < 2:
        return np.zeros(max(j, 0))
    if tables is None:
        tables = gamma_tables(kernel, k, j - 1)
    g1, g2 = tables
    rev1 = g1[j - 2 :: -1]
    rev2 = g2[j - 2 :: -1]
    w = np.zeros(j)
    w[: j - 1] = rev1 - rev2
    w[1:] += rev2
    return w


def memory_term(S, history: HistoryBuffer, kernel: KernelSpec, j: int,
                tables=None) -> np.ndarray:
    """Discrete history convolution at time index j (zero for j <= 1).

    Accumulates the weighted state sum first and applies S once.
    """
    n = history.n_dofs if S is None else S.shape[0]
    if j <= 1:
        return np.zeros(n)
    if len(history) < j:
        raise ValueError(f"history holds {len(history)} states, step asked for {j}")
    w = memory_weights(kernel, history.dt, j, tables=tables)
    v = w @ history.view(j)
    return S @ v


def _pair_integral_table(kernel: KernelSpec, k: float, n: int):
    """Exact kernel double integrals over interval pairs.

    Returns (diag, offdiag) where diag is the self-interaction
    integral over { t_j <= r <= tau <= t_j + k } and offdiag[m-1] the full
    rectangle integral at lag m >= 1.
    """
    g = kernel.gamma
    m = np.arange(1, n, dtype=float)
    if kernel.family == EXPONENTIAL:
        diag = (g * k + np.expm1(-g * k)) / g**2
        off = (-np.expm1(-g * k)) * np.expm1(g * k) / g**2 * np.exp(-g * k * m)
        return diag, off
    gp = g + 1.0
    c = k**gp / (g * gp)
    diag = c
    off = c * (np.power(m + 1.0, gp) - 2.0 * np.power(m, gp) + np.power(m - 1.0, gp))
    return diag, off


def kernel_positivity_form(kernel: KernelSpec, k: float, f) -> float:
    """Quadratic form integral( f(tau) integral( K(tau-r) f(r) dr ) dtau ).

    ``f`` holds samples f_1..f_n extended as a step function on the uniform
    grid; the double integral of the extension is evaluated exactly from the
    closed-form interval-pair kernel moments.  Positive kernels make this
    nonnegative for every f, which is what the property suite checks.
    """
    f = np.asarray(f, dtype=float)
    if f.ndim != 1 or f.size < 2:
        raise ValueError("need at least two samples")
    n = f.size
    diag, off = _pair_integral_table(kernel, k, n)
    total = diag * float(f @ f)
    for m in range(1, n):
        total += off[m - 1] * float(f[m:] @ f[:-m])
    return float(total)


class MemoryConvolution:
    """Running evaluation of the history convolution along a trajectory.

    Tracks the two most recent values (at t_j and t_{j-1}) needed by the
    extrapolated memory forcing.  ``mode='direct'`` recomputes the literal
    lag sum each step; ``mode='recurrence'`` uses the geometric one-step
    update available for exponential kernels (identical up to rounding).
    """

    def __init__(self, S, kernel: KernelSpec, history: HistoryBuffer,
                 mode: str = "direct", max_steps: int | None = None):
        if mode not in ("direct", "recurrence"):
            raise ValueError(f"unknown memory mode {mode!r}")
        if mode == "recurrence" and kernel.family != EXPONENTIAL:
            raise ValueError("the geometric recurrence needs an exponential kernel")
        self.S = S
        self.kernel = kernel
        self.history = history
        self.mode = mode
        n = history.n_dofs
        self.value_curr = np.zeros(n)   # convolution at the newest time index
        self.value_prev = np.zeros(n)   # one index earlier
        self._tables = None
        if max_steps is not None and max_steps >= 2:
            self._tables = gamma_tables(kernel, history.dt, max_steps)
        if mode == "recurrence":
            k = history.dt
            self._decay = float(np.exp(-kernel.gamma * k))
            self._g1_1, self._g2_1 = gamma_coeffs(kernel, k, 1)
            self._acc = np.zeros(n)

    def advance(self) -> None:
        """Update after a new state was appended; history holds j >= 2 states."""
        j = len(self.history)
        if j < 2:
            raise ValueError("advance needs at least two recorded states")
        self.value_prev = self.value_curr
        if self.mode == "recurrence":
            y_new = self.history.state(j)
            y_old = self.history.state(j - 1)
            self._acc = (
                self._decay * self._acc
                + self._g1_1 * y_old
                + self._g2_1 * (y_new - y_old)
            )
            self.value_curr = self.S @ self._acc
        else:
            self.value_curr = memory_term(
                self.S, self.history, self.kernel, j, tables=self._tables
            )
