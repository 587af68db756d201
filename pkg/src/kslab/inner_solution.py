"""Inner eigenfunction on (0, R0] and its expansion in the iterated kernels.

The inner equation is ``(A0 - b r d/dr) phi = alpha phi`` with
``alpha = 2b(1 - n + alpha_tilde)`` and ``alpha_tilde = 1/ln b + alpha_bar``.
In ``s = ln r`` it reads

    phi_ss = (2 - Q + b r^2) phi_s - r^2 (U - alpha) phi,

which is integrated outward from a regular power series start at ``r_min``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .radial_core import (
    KernelTable,
    LogGrid,
    Parameters,
    RadialGridFunction,
    build_kernel_table,
    invert_A0,
    log_grid,
)
from .special_functions import EULER_GAMMA, digamma

R_MIN = 1e-4
RTOL = 1e-12
FROBENIUS_TERMS = 6
NORMALIZATION_WINDOW = 0.05


class StiffnessError(RuntimeError):
    """Raised when the inner integrator fails to reach the interface."""


def frobenius_coefficients(b: float, alpha: float, nterms: int = FROBENIUS_TERMS) -> np.ndarray:
    """Coefficients a_m of the regular solution sum a_m x^(m+1), x = r^2.

    The indicial roots are 0 and 2 in r; the r^2 branch is a pure power
    series, normalized by a_0 = 1.
    """
    # Write the equation as x^2 y'' ... in x and expand p(x), q(x) in powers
    # of x: p = 2 - 4x/(1+x) + b x, q = x (8/(1+x)^2 - alpha).
    k_max = nterms + 1
    p = np.zeros(k_max)
    q = np.zeros(k_max)
    for k in range(1, k_max):
        p[k] = -4.0 * (-1) ** (k - 1) + (b if k == 1 else 0.0)
        q[k] = 8.0 * (-1) ** (k - 1) * k - (alpha if k == 1 else 0.0)
    a = np.zeros(nterms)
    a[0] = 1.0
    for m in range(1, nterms):
        acc = 0.0
        for k in range(1, m + 1):
            acc += a[m - k] * (-(2.0 + 2.0 * (m - k)) * p[k] + q[k])
        a[m] = -acc / ((2.0 + 2.0 * m) * 2.0 * m)
    return a


def _seed(b: float, alpha: float, r0: float) -> tuple[float, float]:
    a = frobenius_coefficients(b, alpha)
    x = r0 * r0
    phi = sum(a[m] * x ** (m + 1) for m in range(a.size))
    phi_s = sum((2.0 + 2.0 * m) * a[m] * x ** (m + 1) for m in range(a.size))
    return phi, phi_s


def inner_rhs(b: float, alpha: float):
    def rhs(s, y):
        r2 = math.exp(2.0 * s)
        q = 4.0 * r2 / (1.0 + r2)
        u = 8.0 / (1.0 + r2) ** 2
        return [y[1], (2.0 - q + b * r2) * y[1] - r2 * (u - alpha) * y[0]]

    return rhs


def integrate_inner(b: float, alpha: float, r_end: float, r_min: float = R_MIN):
    """Dense solution (phi, r phi_r) in s = ln r from r_min to r_end."""
    y0 = _seed(b, alpha, r_min)
    sol = solve_ivp(
        inner_rhs(b, alpha),
        (math.log(r_min), math.log(r_end)),
        y0,
        method="DOP853",
        rtol=RTOL,
        atol=1e-300,
        dense_output=True,
    )
    if not sol.success:
        raise StiffnessError(sol.message)
    return sol


def eigen_alpha(b: float, n: int, alpha_bar: float) -> float:
    return 2.0 * b * (1.0 - n + 1.0 / math.log(b) + alpha_bar)


@dataclass(frozen=True)
class InnerSolution:
    params: Parameters
    n: int
    alpha_bar: float
    alpha_tilde: float
    values: RadialGridFunction
    dvalues: RadialGridFunction
    normalization: float
    leading_F: RadialGridFunction
    residual_E: RadialGridFunction
    r_end: float
    phi_end: float
    rphi_end: float

    @property
    def alpha(self) -> float:
        return 2.0 * self.params.b * (1.0 - self.n + self.alpha_tilde)

    def log_derivative_end(self) -> float:
        """(r d/dr) phi / (2 phi) at the interface."""
        return self.rphi_end / (2.0 * self.phi_end)


def inner_grid(r_end: float, n_nodes: int = 4001, r_min: float = R_MIN) -> LogGrid:
    full = log_grid(r_min, max(r_end, 1.5), n_nodes)
    keep = full.r <= r_end * (1.0 + 1e-12)
    return LogGrid(full.r[keep], full.h)


def kernel_table_on(grid: LogGrid, j_max: int) -> KernelTable:
    return build_kernel_table(j_max, grid, check=False)


def leading_expansion_F(params: Parameters, n: int, table: KernelTable) -> RadialGridFunction:
    """F_n = sum_j c_{n,j} b^j T_j."""
    if n > table.j_max:
        raise ValueError("n exceeds the kernel table horizon")
    b = params.b
    vals = np.zeros_like(table.T[0].values)
    for j in range(n + 1):
        vals = vals + table.c[n, j] * b**j * table.T[j].values
    return table.T[0].with_values(vals)


def first_order_correction(params: Parameters, table: KernelTable) -> RadialGridFunction:
    """b (-(2/ln b) T_1 + A0^{-1} Theta_0)."""
    b, lb = params.b, params.log_b
    inv = invert_A0(table.Theta[0])
    return inv.with_values(b * (-2.0 / lb * table.T[1].values + inv.values))


def solve_inner(
    params: Parameters,
    n: int,
    alpha_bar: float,
    r_end: float | None = None,
    n_nodes: int = 4001,
    table: KernelTable | None = None,
) -> InnerSolution:
    """Integrate the inner problem and normalize it against F_n."""
    b = params.b
    lb = params.log_b
    if not 0 < b <= 1e-2:
        raise ValueError("the inner solve needs 0 < b <= 1e-2")
    if abs(alpha_bar) > 1.0 / abs(lb):
        raise ValueError("|alpha_bar| must not exceed 1/|ln b|")
    r_end = params.R0 if r_end is None else r_end
    alpha = eigen_alpha(b, n, alpha_bar)
    sol = integrate_inner(b, alpha, r_end)
    grid = inner_grid(r_end, n_nodes)
    if table is None or table.T[0].nodes.size != grid.size:
        table = kernel_table_on(grid, max(n + 1, 1))
    y = sol.sol(grid.s)
    F = leading_expansion_F(params, n, table)
    window = grid.r <= NORMALIZATION_WINDOW
    kappa = float(np.dot(y[0][window], F.values[window]) / np.dot(y[0][window], y[0][window]))
    phi = kappa * y[0]
    dphi = kappa * y[1] / grid.r
    first = first_order_correction(params, table)
    ab_part = np.zeros_like(phi)
    for j in range(n + 1):
        if j + 1 <= table.j_max:
            ab_part -= table.c[n, j] * b ** (j + 1) * table.T[j + 1].values
    residual = phi - F.values - first.values - 2.0 * alpha_bar * ab_part
    end = sol.y[:, -1] * kappa
    return InnerSolution(
        params=params,
        n=n,
        alpha_bar=alpha_bar,
        alpha_tilde=1.0 / lb + alpha_bar,
        values=grid.function(phi),
        dvalues=grid.function(dphi),
        normalization=kappa,
        leading_F=F,
        residual_E=grid.function(residual),
        r_end=r_end,
        phi_end=float(end[0]),
        rphi_end=float(end[1]),
    )


def inner_zero_count(sol: InnerSolution) -> int:
    """Number of strict sign changes of the inner eigenfunction."""
    return sol.values.sign_changes(rel_tol=1e-12)


def first_zero(sol: InnerSolution) -> float | None:
    """Location of the first sign change, linearly interpolated."""
    v = sol.values.values
    r = sol.values.nodes
    idx = np.nonzero(np.sign(v[1:]) * np.sign(v[:-1]) < 0)[0]
    if idx.size == 0:
        return None
    i = idx[0]
    return float(r[i] - v[i] * (r[i + 1] - r[i]) / (v[i + 1] - v[i]))


# ---------------------------------------------------------------------------
# Explicit refined series for n = 0, 1
# ---------------------------------------------------------------------------


def _series_sum(term_fn, x, i_start: int, max_terms: int = 500):
    total = np.zeros_like(x)
    for i in range(i_start, i_start + max_terms):
        t = term_fn(i)
        total = total + t
        if i > i_start + 2 and np.all(np.abs(t) <= 1e-14 * np.maximum(np.abs(total), 1e-300)):
            return total
    raise ArithmeticError("refined series did not converge within 500 terms")


def refined_series(params: Parameters, n: int, r):
    """Explicit parts of R_n and S_n for n = 0, 1, as (R_series, S_series).

    For n = 0 the S part is S_0; for n = 1 it is S_1 (S_0 is O(b) there).
    """
    if n not in (0, 1):
        raise ValueError("explicit series are available for n = 0, 1 only")
    b, lb = params.b, params.log_b
    r = np.asarray(r, dtype=float)
    x = b * r * r
    if np.any(x > 50.0):
        raise ValueError("b r^2 must not exceed 50")
    lg = np.log1p(r)
    # coefficients carried by the ratio of successive terms
    if n == 0:
        coef = {1: 0.25}  # 1/((2)_i 2^i) at i = 1

        def c0(i):
            if i not in coef:
                coef[i] = coef[i - 1] / (2.0 * (i + 1))
            return coef[i]

        def r_term(i):
            bracket = (2.0 * lg - digamma(i + 2.0) - EULER_GAMMA) / lb + 1.0
            return -0.5 * c0(i) * x**i * bracket

        def s_term(i):
            return 0.5 * c0(i) * x**i * lg

        return _series_sum(r_term, x, 1), _series_sum(s_term, x, 1)

    coef = {1: 0.25}  # (1)_{i-1}/((2)_i i! 2^i) = 1/(i (i+1)! 2^i)

    def c1(i):
        if i not in coef:
            coef[i] = 1.0 / (i * math.factorial(i + 1) * 2.0**i) if i < 150 else 0.0
        return coef[i]

    def r_term(i):
        bracket = (2.0 * lg - 1.0 / i - digamma(i + 2.0) - EULER_GAMMA) / lb + 1.0 - 1.0 / lb
        return -0.5 * c1(i) * x**i * bracket

    def s_term(i):
        return -0.5 * c1(i) * x**i / b * lg

    return _series_sum(r_term, x, 1), _series_sum(s_term, x, 2)


def explicit_expansion(params: Parameters, n: int, alpha_bar: float, table: KernelTable) -> RadialGridFunction:
    """F_n plus every explicitly known correction for n = 0, 1."""
    b = params.b
    r = table.T[0].nodes
    F = leading_expansion_F(params, n, table)
    first = first_order_correction(params, table)
    R_ser, S_ser = refined_series(params, n, r)
    ab = np.zeros_like(r)
    for j in range(n + 1):
        ab -= table.c[n, j] * b ** (j + 1) * table.T[j + 1].values
    ab += b ** (n + 1) * S_ser
    return F.with_values(F.values + first.values + 2.0 * alpha_bar * ab + b * R_ser)
