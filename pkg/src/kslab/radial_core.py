"""Stationary profiles, weights and the inner operator with its inverse.

All radial work happens on grids that are uniform in ``s = ln r``.  On such a
grid the quadrature is composite Simpson in ``s`` (with the Jacobian ``r``
folded into the weights) and derivatives are fourth order finite differences
in ``s``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

__all__ = [
    "Parameters",
    "LogGrid",
    "RadialGridFunction",
    "KernelTable",
    "WeightSet",
    "AccuracyError",
    "GridError",
    "log_grid",
    "stationary_profiles",
    "partial_mass",
    "apply_A0",
    "invert_A0",
    "build_kernel_table",
    "theta_profile",
    "dhat_coefficients",
    "d_coefficients",
    "c_coefficients",
    "theta0_moment",
    "wronskian_scaled",
]


class GridError(ValueError):
    """Raised when a grid is too coarse or not uniform in ln r."""


class AccuracyError(ArithmeticError):
    """Raised when a fitted quantity disagrees with its recurrence value."""


@dataclass(frozen=True)
class Parameters:
    """Problem constants. ``b = beta * nu**2`` is derived."""

    beta: float = 0.5
    nu: float = 1e-3
    zeta0: float = 0.1
    n_max: int = 3
    delta: float = 0.1

    def __post_init__(self) -> None:
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        if not 0 < self.nu < 1:
            raise ValueError("nu must lie in (0, 1)")
        if not 0 < self.zeta0 <= 0.5:
            raise ValueError("zeta0 must lie in (0, 0.5]")
        if self.n_max < 0:
            raise ValueError("n_max must be nonnegative")

    @property
    def b(self) -> float:
        return self.beta * self.nu**2

    @property
    def log_b(self) -> float:
        return math.log(self.beta) + 2.0 * math.log(self.nu)

    @property
    def R0(self) -> float:
        return self.zeta0 / math.sqrt(self.b)

    @property
    def z0(self) -> float:
        return 0.5 * self.zeta0**2

    @classmethod
    def from_b(cls, b: float, beta: float = 0.5, **kwargs) -> "Parameters":
        return cls(beta=beta, nu=math.sqrt(b / beta), **kwargs)


# ---------------------------------------------------------------------------
# Grids and grid functions
# ---------------------------------------------------------------------------


@lru_cache(maxsize=None)
def _fd_weights(offsets: tuple[int, ...], order: int) -> np.ndarray:
    """Finite-difference weights on integer offsets (unit spacing)."""
    m = len(offsets)
    a = np.array([[o**k for o in offsets] for k in range(m)], dtype=float)
    rhs = np.zeros(m)
    rhs[order] = math.factorial(order)
    return np.linalg.solve(a, rhs)


def _diff_uniform(y: np.ndarray, h: float, order: int) -> np.ndarray:
    """Fourth-order derivative of samples on a uniform grid."""
    n = y.size
    if n < 7:
        raise GridError("at least 7 nodes are required for the difference stencils")
    out = np.empty_like(y)
    central = _fd_weights((-2, -1, 0, 1, 2), order)
    out[2:-2] = sum(w * y[2 + o : n - 2 + o] for o, w in zip(range(-2, 3), central))
    for i in (0, 1):
        offs = tuple(range(-i, 6 - i))
        w = _fd_weights(offs, order)
        out[i] = sum(wk * y[i + o] for o, wk in zip(offs, w))
        j = n - 1 - i
        offs_r = tuple(-o for o in offs)
        w_r = _fd_weights(offs_r, order)
        out[j] = sum(wk * y[j + o] for o, wk in zip(offs_r, w_r))
    return out / h**order


def _cumulative_cubic(y: np.ndarray, h: float) -> np.ndarray:
    """Running integral on a uniform grid, one local cubic per interval.

    Unlike cumulative Simpson the error does not alternate between odd and
    even nodes, so the result can be differentiated twice without noise.
    """
    n = y.size
    if n < 4:
        raise GridError("at least 4 nodes are required")
    piece = np.empty(n - 1)
    piece[1:-1] = -y[:-3] + 13.0 * y[1:-2] + 13.0 * y[2:-1] - y[3:]
    piece[0] = 9.0 * y[0] + 19.0 * y[1] - 5.0 * y[2] + y[3]
    piece[-1] = y[-4] - 5.0 * y[-3] + 19.0 * y[-2] + 9.0 * y[-1]
    out = np.zeros(n)
    out[1:] = np.cumsum(piece) * (h / 24.0)
    return out


@dataclass(frozen=True)
class LogGrid:
    """Grid uniform in s = ln r with an odd number of nodes."""

    r: np.ndarray
    h: float

    @property
    def s(self) -> np.ndarray:
        return np.log(self.r)

    @property
    def size(self) -> int:
        return self.r.size

    @property
    def weights(self) -> np.ndarray:
        """Composite Simpson weights in s including the Jacobian r."""
        n = self.size
        w = np.ones(n)
        w[1:-1:2] = 4.0
        w[2:-1:2] = 2.0
        return w * self.h / 3.0 * self.r

    def function(self, values) -> "RadialGridFunction":
        return RadialGridFunction(self.r, np.asarray(values, dtype=float), self.weights)

    def d_ds(self, y: np.ndarray, order: int = 1) -> np.ndarray:
        return _diff_uniform(np.asarray(y, dtype=float), self.h, order)

    def d_dr(self, y: np.ndarray) -> np.ndarray:
        return self.d_ds(y) / self.r

    def cumulative(self, integrand: np.ndarray) -> np.ndarray:
        """Running integral of ``integrand dr`` from the first node."""
        return _cumulative_cubic(np.asarray(integrand) * self.r, self.h)

    def index_of(self, r: float) -> int:
        return int(np.argmin(np.abs(self.r - r)))


def log_grid(r_min: float = 1e-4, r_max: float = 1e4, n_nodes: int = 4001) -> LogGrid:
    """Log-uniform grid with r = 1 placed exactly on a node.

    ``n_nodes`` is rounded up to the next odd number; ``r_max`` is adjusted
    slightly so that the spacing in ln r divides ln(1/r_min).
    """
    if not 0 < r_min < 1 < r_max:
        raise GridError("need r_min < 1 < r_max")
    n = n_nodes + (1 - n_nodes % 2)
    if n < 7:
        raise GridError("at least 7 nodes are required")
    s_lo, s_hi = math.log(r_min), math.log(r_max)
    n_below = max(1, round((n - 1) * (-s_lo) / (s_hi - s_lo)))
    h = -s_lo / n_below
    s = s_lo + h * np.arange(n)
    s[n_below] = 0.0
    return LogGrid(np.exp(s), h)


def grid_from_nodes(nodes: np.ndarray) -> LogGrid:
    nodes = np.asarray(nodes, dtype=float)
    ds = np.diff(np.log(nodes))
    if nodes.size < 7:
        raise GridError("at least 7 nodes are required")
    if np.ptp(ds) > 1e-9 * ds.mean():
        raise GridError("nodes are not uniform in ln r")
    return LogGrid(nodes, float(ds.mean()))


@dataclass(frozen=True)
class RadialGridFunction:
    """Samples of a radial function with quadrature weights for dr."""

    nodes: np.ndarray
    values: np.ndarray
    quadrature_weights: np.ndarray

    def __post_init__(self) -> None:
        if self.nodes.shape != self.values.shape:
            raise ValueError("nodes and values must have the same length")
        if np.any(np.diff(self.nodes) <= 0):
            raise ValueError("nodes must be strictly increasing")

    @property
    def grid(self) -> LogGrid:
        return grid_from_nodes(self.nodes)

    def integrate(self, weight: np.ndarray | float = 1.0) -> float:
        """Integral of values * weight dr over the grid."""
        return float(np.sum(self.quadrature_weights * self.values * weight))

    def with_values(self, values) -> "RadialGridFunction":
        return RadialGridFunction(self.nodes, np.asarray(values, dtype=float), self.quadrature_weights)

    def __call__(self, r):
        return np.interp(np.log(r), np.log(self.nodes), self.values)

    def sign_changes(self, rel_tol: float = 0.0) -> int:
        v = self.values
        scale = rel_tol * np.max(np.abs(v))
        sig = np.sign(np.where(np.abs(v) <= scale, 0.0, v))
        sig = sig[sig != 0]
        return int(np.count_nonzero(sig[1:] != sig[:-1]))


# ---------------------------------------------------------------------------
# Profiles and weights
# ---------------------------------------------------------------------------


def stationary_profiles(r):
    """Return (U, Q, psi0, psi0_tilde, dpsi0, dpsi0_tilde) at r.

    ``psi0_tilde`` needs r > 0; at r = 0 it is reported as -1, its limit.
    """
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError("r must be nonnegative")
    x = r * r
    one_x = 1.0 + x
    U = 8.0 / one_x**2
    Q = 4.0 * x / one_x
    psi0 = x / one_x**2
    dpsi0 = 2.0 * r * (1.0 - x) / one_x**3
    with np.errstate(divide="ignore", invalid="ignore"):
        lnr = np.where(r > 0, np.log(np.where(r > 0, r, 1.0)), 0.0)
        psit = (x * x + 4.0 * x * lnr - 1.0) / one_x**2
        # derivative of the numerator over (1+x)^2, simplified
        num = x * x + 4.0 * x * lnr - 1.0
        dnum = 4.0 * x * r + 8.0 * r * lnr + 4.0 * r
        dpsit = dnum / one_x**2 - 4.0 * r * num / one_x**3
    if r.ndim == 0:
        return float(U), float(Q), float(psi0), float(psit), float(dpsi0), float(dpsit)
    return U, Q, psi0, psit, dpsi0, dpsit


def wronskian_scaled(r):
    """(psi0 psi0_tilde' - psi0' psi0_tilde) (1 + r^2)^2 / r."""
    _, _, p, pt, dp, dpt = stationary_profiles(r)
    return (p * dpt - dp * pt) * (1.0 + np.asarray(r) ** 2) ** 2 / np.asarray(r)


@dataclass(frozen=True)
class WeightSet:
    """Weights of the radial problem in the zeta and r variables."""

    beta: float
    nu: float

    @property
    def b(self) -> float:
        return self.beta * self.nu**2

    def U_nu(self, zeta):
        zeta = np.asarray(zeta, dtype=float)
        return 8.0 * self.nu**2 / (self.nu**2 + zeta**2) ** 2

    def omega_nu(self, zeta):
        zeta = np.asarray(zeta, dtype=float)
        return self.nu**2 * np.exp(-0.5 * self.beta * zeta**2) / self.U_nu(zeta)

    def rho0(self, zeta):
        return np.exp(-0.5 * self.beta * np.asarray(zeta, dtype=float) ** 2)

    def log_omega_b(self, r):
        r = np.asarray(r, dtype=float)
        return -0.5 * self.b * r**2 + 2.0 * np.log1p(r**2) - math.log(8.0) - np.log(r)

    def omega_b(self, r):
        return np.exp(self.log_omega_b(r))

    def rho_b(self, r):
        r = np.asarray(r, dtype=float)
        U = 8.0 / (1.0 + r**2) ** 2
        return np.exp(-0.25 * self.b * r**2) / (r**2 * np.sqrt(U))


# ---------------------------------------------------------------------------
# The inner operator
# ---------------------------------------------------------------------------


def _head_integral(r0: float, r1: float, f0: float, f1: float, extra_power: float) -> float:
    """Integral of f(s) s^extra_power over [0, r0] assuming f ~ c r^p locally."""
    p = 0.0
    if f0 != 0.0 and f1 != 0.0 and (f0 > 0) == (f1 > 0):
        p = math.log(f1 / f0) / math.log(r1 / r0)
    expo = p + extra_power + 1.0
    if expo <= 0:
        raise ArithmeticError("integrand is not integrable at the origin")
    return f0 * r0 ** (extra_power + 1.0) / expo


def partial_mass(f: RadialGridFunction) -> RadialGridFunction:
    """Running mass m(r) = int_0^r f(s) s ds."""
    grid = f.grid
    v = f.values
    head = _head_integral(grid.r[0], grid.r[1], v[0], v[1], 1.0)
    return f.with_values(head + grid.cumulative(v * grid.r))


def apply_A0(f: RadialGridFunction) -> RadialGridFunction:
    """Apply f'' - f'/r + (Q f)'/r using difference stencils in ln r."""
    grid = f.grid
    r = grid.r
    U, Q, *_ = stationary_profiles(r)
    fs = grid.d_ds(f.values, 1)
    fss = grid.d_ds(f.values, 2)
    return f.with_values((fss + (Q - 2.0) * fs) / r**2 + U * f.values)


def _invert_with_derivative(grid: LogGrid, f: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Inverse of the inner operator and its r-derivative on a grid.

    The two kernel integrals run from r to 1 and from 0 to r. The boundary
    terms produced by differentiating them cancel, so the derivative only
    involves the kernel derivatives.
    """
    r = grid.r
    _, _, psi0, psit, dpsi0, dpsit = stationary_profiles(r)
    kernel = (r**4 + 4.0 * r**2 * np.log(r) - 1.0) / r
    running_k = grid.cumulative(kernel * f)
    i1 = grid.index_of(1.0)
    from_r_to_1 = running_k[i1] - running_k
    head = _head_integral(r[0], r[1], f[0], f[1], 1.0)
    from_0_to_r = head + grid.cumulative(r * f)
    u = 0.5 * psi0 * from_r_to_1 + 0.5 * psit * from_0_to_r
    du = 0.5 * dpsi0 * from_r_to_1 + 0.5 * dpsit * from_0_to_r
    return u, du


def invert_A0(f: RadialGridFunction) -> RadialGridFunction:
    """Particular solution of A0 u = f built from the two kernels."""
    grid = f.grid
    if abs(grid.r[grid.index_of(1.0)] - 1.0) > 1e-12:
        raise GridError("the grid must contain r = 1")
    u, _ = _invert_with_derivative(grid, f.values)
    return f.with_values(u)


# ---------------------------------------------------------------------------
# Iterated kernels
# ---------------------------------------------------------------------------


D1 = 0.5


def dhat_coefficients(j_max: int) -> np.ndarray:
    """Log coefficients of the large-r tails, index 0 unused (set to 0)."""
    out = np.zeros(j_max + 1)
    if j_max >= 1:
        out[1] = -0.5
    for i in range(1, j_max):
        out[i + 1] = -out[i] / (4.0 * i * (i + 1))
    return out


def d_coefficients(j_max: int) -> np.ndarray:
    """Constant coefficients of the large-r tails; T_0 ~ r^-2 gives d_0 = 1.

    d_1 = 1/2 follows from the inversion formula: the running integral
    int_0^r xi psi0 = (ln(1 + r^2) + 1/(1 + r^2) - 1)/2 contributes -1/4 on
    top of the +1/4 coming from the psi0 kernel.
    """
    dh = dhat_coefficients(j_max)
    out = np.zeros(j_max + 1)
    out[0] = 1.0
    if j_max >= 1:
        out[1] = D1
    for i in range(1, j_max):
        out[i + 1] = ((dh[i] - 2 * i * out[i]) / i**2 - (dh[i] - (2 * i + 2) * out[i]) / (i + 1) ** 2) / 8.0
    return out


def c_coefficients(n_max: int) -> np.ndarray:
    """Matrix c[n, j] = 2^j n!/(n-j)! for j <= n, zero above the diagonal."""
    c = np.zeros((n_max + 1, n_max + 1))
    for n in range(n_max + 1):
        c[n, 0] = 1.0
        for j in range(n):
            c[n, j + 1] = 2.0 * (n - j) * c[n, j]
    return c


def _fit_tail(r: np.ndarray, t: np.ndarray, j: int, window: tuple[float, float]) -> tuple[float, float]:
    mask = (r >= window[0]) & (r <= window[1])
    x = np.log(r[mask])
    y = t[mask] / r[mask] ** (2 * j - 2)
    slope, intercept = np.polyfit(x, y, 1)
    return float(slope), float(intercept)


@dataclass(frozen=True)
class KernelTable:
    """T_j with r-derivatives, their tail coefficients and c_{n,j}."""

    j_max: int
    T: list
    dT: list
    dhat: np.ndarray
    d: np.ndarray
    c: np.ndarray
    fitted_dhat: np.ndarray
    fitted_d: np.ndarray
    Theta: list = field(default_factory=list)

    @property
    def grid(self) -> LogGrid:
        return self.T[0].grid


def build_kernel_table(
    j_max: int,
    grid: LogGrid,
    fit_window: tuple[float, float] = (0.05, 0.5),
    check: bool = True,
) -> KernelTable:
    """Iterate T_{j+1} = -A0^{-1} T_j and fit the large-r tails.

    ``fit_window`` is a fraction of the grid's outer radius.
    """
    if j_max > 6:
        raise ValueError("j_max above 6 is dominated by quadrature error")
    r = grid.r
    _, _, psi0, _, dpsi0, _ = stationary_profiles(r)
    T = [psi0.copy()]
    dT = [dpsi0.copy()]
    for _ in range(j_max):
        u, du = _invert_with_derivative(grid, T[-1])
        T.append(-u)
        dT.append(-du)
    dhat = dhat_coefficients(j_max)
    d = d_coefficients(j_max)
    window = (fit_window[0] * r[-1], fit_window[1] * r[-1])
    fdh = np.zeros(j_max + 1)
    fd = np.zeros(j_max + 1)
    fd[0] = 1.0
    for j in range(1, j_max + 1):
        fdh[j], fd[j] = _fit_tail(r, T[j], j, window)
        if check and abs(fdh[j] - dhat[j]) > 0.05 * abs(dhat[j]):
            raise AccuracyError(f"fitted log coefficient of T_{j} is {fdh[j]}, expected {dhat[j]}")
    w = grid.weights
    theta = []
    for j in range(j_max + 1):
        theta.append(RadialGridFunction(r, r * dT[j] - 2.0 * (j - 1) * T[j], w))
    return KernelTable(
        j_max=j_max,
        T=[RadialGridFunction(r, t, w) for t in T],
        dT=[RadialGridFunction(r, t, w) for t in dT],
        dhat=dhat,
        d=d,
        c=c_coefficients(j_max),
        fitted_dhat=fdh,
        fitted_d=fd,
        Theta=theta,
    )


def theta_profile(j: int, table: KernelTable) -> RadialGridFunction:
    """r T_j' - 2 (j - 1) T_j."""
    if j > table.j_max:
        raise ValueError("j exceeds the table horizon")
    return table.Theta[j]


def theta0_moment(table: KernelTable) -> float:
    """int_0^inf r Theta_0 dr with the r^-4 tail added analytically."""
    th = table.Theta[0]
    r = th.nodes
    head = _head_integral(r[0], r[1], th.values[0], th.values[1], 1.0)
    return head + th.integrate(r) + 2.0 / r[-1] ** 2
