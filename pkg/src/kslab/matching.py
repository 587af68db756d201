"""Match inner and outer solutions at R0 and glue the eigenfunction.

The eigenvalue is selected by equating the logarithmic derivatives of the
inner solution (in r) and of the outer solution (in z = b r^2 / 2) at the
interface.  Root finding uses the cross product

    D = (r phi_r) q - 2 phi (z q_z),

which has the same zeros as the log-derivative mismatch but no poles.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .inner_solution import integrate_inner, solve_inner, InnerSolution, eigen_alpha
from .outer_solution import OuterSolution, integrate_outer, solve_outer
from .radial_core import (
    Parameters,
    RadialGridFunction,
    c_coefficients,
    d_coefficients,
    dhat_coefficients,
)
from .special_functions import EULER_GAMMA, digamma

log = logging.getLogger(__name__)

BRACKET_C = 50.0
ROOT_XTOL = 1e-14
LN2 = math.log(2.0)


class DegenerateError(ArithmeticError):
    """Raised when an interface value is too small to form a log-derivative."""


class NoSignChangeError(ArithmeticError):
    """Raised when the mismatch does not change sign on the bracket."""


def _interface_values(params: Parameters, n: int, alpha_bar: float):
    b = params.b
    theta = 1.0 - n + 1.0 / params.log_b + alpha_bar
    inner = integrate_inner(b, eigen_alpha(b, n, alpha_bar), params.R0)
    outer, _ = integrate_outer(b, theta, params.z0)
    phi, rphi = inner.y[:, -1]
    q, zq = outer.y[:, -1]
    return phi, rphi, q, zq


def mismatch_theta(params: Parameters, n: int, alpha_bar: float) -> float:
    """(r phi_r)/(2 phi) at R0 minus (z q_z)/q at z0."""
    phi, rphi, q, zq = _interface_values(params, n, alpha_bar)
    if abs(phi) < 1e-12 * abs(rphi) or abs(q) < 1e-12 * abs(zq):
        raise DegenerateError("interface value vanishes; the log-derivative is undefined")
    return rphi / (2.0 * phi) - zq / q


def mismatch_cross(params: Parameters, n: int, alpha_bar: float) -> float:
    """Pole-free mismatch D, scaled by the interface values' magnitudes."""
    phi, rphi, q, zq = _interface_values(params, n, alpha_bar)
    return (rphi * q - 2.0 * phi * zq) / ((abs(phi) + abs(rphi)) * (abs(q) + abs(zq)))


@dataclass(frozen=True)
class MatchedEigenpair:
    params: Parameters
    n: int
    alpha_bar_n: float
    inner: InnerSolution
    outer: OuterSolution
    beta0: float
    phi: RadialGridFunction
    derivative_jump: float
    b_dalpha_tilde: float | None = None

    @property
    def alpha_tilde_n(self) -> float:
        return 1.0 / self.params.log_b + self.alpha_bar_n

    @property
    def alpha_n(self) -> float:
        return 2.0 * self.params.b * (1.0 - self.n + self.alpha_tilde_n)

    @property
    def lambda_n(self) -> float:
        """Eigenvalue in the zeta variable, alpha_n / nu^2."""
        return self.alpha_n / self.params.nu**2

    def zeta_image(self) -> tuple[np.ndarray, np.ndarray]:
        """Eigenfunction against zeta = nu r."""
        return self.params.nu * self.phi.nodes, self.phi.values

    def zero_count(self) -> int:
        return self.phi.sign_changes(rel_tol=1e-12)


def _simpson_weights(n: int, h: float) -> np.ndarray:
    """Composite weights on n uniformly spaced points (3/8 rule tail if n even)."""
    w = np.zeros(n)
    m = n if n % 2 == 1 else n - 3
    if m >= 3:
        w[:m:2] += 2.0 * h / 3.0
        w[1:m:2] += 4.0 * h / 3.0
        w[0] -= h / 3.0
        w[m - 1] -= h / 3.0
    if n % 2 == 0:
        w[n - 4 : n] += np.array([3.0, 9.0, 9.0, 3.0]) * h / 8.0
    return w


def glue_eigenfunction(inner: InnerSolution, outer: OuterSolution) -> tuple[RadialGridFunction, float, float]:
    """Piecewise eigenfunction, gluing constant beta0 and relative derivative jump."""
    params = inner.params
    b = params.b
    beta0 = inner.phi_end / outer.q_start
    r_in = inner.values.nodes
    keep = r_in < inner.r_end * (1.0 - 1e-12)
    r_in = r_in[keep]
    r_out = np.sqrt(2.0 * outer.z / b)
    r_out[0] = inner.r_end
    nodes = np.concatenate([r_in, r_out])
    values = np.concatenate([inner.values.values[keep], beta0 * outer.q])
    values[r_in.size] = inner.phi_end
    # quadrature: Simpson in ln r on each uniform piece, joined by a trapezoid
    h_in = math.log(r_in[1] / r_in[0])
    h_out = math.log(r_out[2] / r_out[1])
    w = np.concatenate([_simpson_weights(r_in.size, h_in), _simpson_weights(r_out.size, h_out)]) * nodes
    gap = math.log(r_out[0] / r_in[-1])
    w[r_in.size - 1] += 0.5 * gap * r_in[-1]
    w[r_in.size] += 0.5 * gap * r_out[0]
    dphi_in = inner.rphi_end / inner.r_end
    dphi_out = beta0 * 2.0 * outer.zq_start / inner.r_end
    jump = abs(dphi_in - dphi_out) / abs(dphi_in)
    return RadialGridFunction(nodes, values, w), beta0, jump


def _bracket(params: Parameters, n: int, c: float) -> tuple[float, float, float, float]:
    lb2 = params.log_b**2
    xs = np.linspace(-c / lb2, c / lb2, 11)
    lo = mismatch_cross(params, n, xs[0])
    hi = mismatch_cross(params, n, xs[-1])
    if lo * hi < 0:
        return xs[0], xs[-1], lo, hi
    prev_x, prev_v = xs[0], lo
    for x in xs[1:-1]:
        v = mismatch_cross(params, n, x)
        if prev_v * v < 0:
            return prev_x, x, prev_v, v
        prev_x, prev_v = x, v
    raise NoSignChangeError(f"no sign change on [{xs[0]:.3e}, {xs[-1]:.3e}]: D = {lo:.3e}, {hi:.3e}")


def find_alpha_bar(params: Parameters, n: int, c: float = BRACKET_C) -> float:
    """Root of the interface mismatch in alpha_bar."""
    try:
        a, b_, _, _ = _bracket(params, n, c)
    except NoSignChangeError:
        log.warning("bracket C=%g failed for n=%d; widening once", c, n)
        a, b_, _, _ = _bracket(params, n, 2.0 * c)
    return brentq(lambda x: mismatch_cross(params, n, x), a, b_, xtol=ROOT_XTOL, rtol=4 * np.finfo(float).eps)


def solve_eigenvalue(
    params: Parameters,
    n: int,
    estimate_b_derivative: bool = False,
    n_nodes: int = 4001,
) -> MatchedEigenpair:
    """Matched eigenpair for mode n; optionally b d(alpha_tilde)/db by differences."""
    if params.b > 1e-4 and n <= 4:
        raise ValueError("matching is only reliable for b <= 1e-4")
    ab = find_alpha_bar(params, n)
    inner = solve_inner(params, n, ab, n_nodes=n_nodes)
    outer = solve_outer(params, n, ab)
    phi, beta0, jump = glue_eigenfunction(inner, outer)
    b_dat = None
    if estimate_b_derivative:
        eps = 0.05
        vals = []
        for sgn in (1.0, -1.0):
            p = Parameters.from_b(params.b * math.exp(sgn * eps), beta=params.beta, zeta0=params.zeta0)
            vals.append(1.0 / p.log_b + find_alpha_bar(p, n))
        b_dat = (vals[0] - vals[1]) / (2.0 * eps)
    return MatchedEigenpair(params, n, ab, inner, outer, beta0, phi, jump, b_dat)


# ---------------------------------------------------------------------------
# Closed-form predictions and coefficient functions
# ---------------------------------------------------------------------------


def refined_constant(n: int) -> float:
    """e_n = ln 2 - gamma - n of the second-order eigenvalue law."""
    return LN2 - EULER_GAMMA - n


def predicted_eigenvalue(params: Parameters, n: int, order: int = 1) -> float:
    """alpha_n from the expansion in 1/ln b (order 1 or 2)."""
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    if order == 2 and n not in (0, 1):
        raise ValueError("the second-order law is stated for n = 0, 1")
    b, lb = params.b, params.log_b
    at = 1.0 / lb
    if order == 2:
        at += refined_constant(n) / lb**2
    return 2.0 * b * (1.0 - n + at)


def predicted_lambda_zeta(params: Parameters, n: int) -> float:
    """Second-order law written in ln nu and ln beta, zeta-variable eigenvalue."""
    ln_nu = math.log(params.nu)
    at = 1.0 / (2.0 * ln_nu) + (refined_constant(n) - math.log(params.beta)) / (4.0 * ln_nu**2)
    return 2.0 * params.beta * (1.0 - n + at)


def H_coefficient(n: int, zeta0: float) -> float:
    c = c_coefficients(n)
    dh = dhat_coefficients(max(n, 1))
    return float(sum(c[n, i] * dh[i] * zeta0 ** (2 * (i - 1)) for i in range(1, n + 1)))


def K_coefficient(n: int, zeta0: float) -> float:
    c = c_coefficients(n)
    dh = dhat_coefficients(max(n, 1))
    d = d_coefficients(max(n, 1))
    lz = math.log(zeta0)
    return float(zeta0**-2 + sum(c[n, i] * zeta0 ** (2 * (i - 1)) * (dh[i] * lz + d[i]) for i in range(1, n + 1)))


def _sum_until_small(term, start: int = 1, cap: int = 500) -> float:
    total = 0.0
    for i in range(start, start + cap):
        t = term(i)
        total += t
        if abs(t) < 1e-17 * max(abs(total), 1e-300) and i > start + 2:
            return total
    return total


def J0_coefficient(zeta0: float) -> float:
    lz = math.log(zeta0)
    coef = [1.0]

    def term(i):
        coef[0] /= 2.0 * (i + 1)  # 1/((2)_i 2^i)
        return coef[0] * zeta0 ** (2 * i) * (2.0 * lz - digamma(i + 2.0) - EULER_GAMMA)

    return 2.0 * lz - 1.0 + _sum_until_small(term)


def J1_coefficient(zeta0: float) -> float:
    lz = math.log(zeta0)

    def term(i):
        c = 1.0 / (i * math.factorial(i + 1) * 2.0**i)  # (1)_{i-1}/((2)_i i! 2^i)
        return c * zeta0 ** (2 * i) * (2.0 * lz - LN2 - 1.0 / i - digamma(i + 2.0))

    return 2.0 * lz - refined_constant(1) - _sum_until_small(term, cap=150)


def G0_tilde_coefficient(zeta0: float) -> float:
    coef = [1.0]

    def term(i):
        coef[0] /= 2.0 * (i + 1)
        return coef[0] * zeta0 ** (2 * i)

    return 1.0 + _sum_until_small(term)
