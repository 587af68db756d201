"""Outer zone: the Kummer problem with its small b-dependent potential.

With ``z = b r^2 / 2`` the radial eigenproblem on ``r >= R0`` becomes

    (K_theta + P0) q = 0,   K_theta = z d^2/dz^2 + (2 - z) d/dz - theta,
    P0 = -(2b/(b + 2z)) d/dz + 4b/(b + 2z)^2,

which is exactly the full radial equation, so no approximation enters here.
The decaying solution is found by integrating backward from a large z with
an asymptotic start.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable

import numpy as np
from scipy.integrate import solve_ivp

from .radial_core import LogGrid, Parameters, _cumulative_cubic, log_grid
from .special_functions import gamma, kummer_regular, kummer_singular

Z_MAX = 40.0
RTOL = 1e-12
SEED_TOL = 1e-8


class SeedError(ArithmeticError):
    """Raised when the asymptotic start at z_max is not accurate enough."""


class Method(str, Enum):
    BACKWARD_ODE = "backward_ode"
    FIXED_POINT = "fixed_point"


def potential_coefficients(b: float, z):
    """Coefficients (first-order, zeroth-order) of P0."""
    z = np.asarray(z, dtype=float)
    return -2.0 * b / (b + 2.0 * z), 4.0 * b / (b + 2.0 * z) ** 2


def apply_P0(b: float, z, f, df):
    c1, c0 = potential_coefficients(b, z)
    return c1 * np.asarray(df) + c0 * np.asarray(f)


def asymptotic_seed(theta: float, z: float, max_terms: int = 30) -> tuple[float, float, float]:
    """z^-theta sum_k (theta)_k (theta-1)_k / k! (-1/z)^k, with z d/dz of it.

    Returns (value, z * derivative, size of the first omitted term relative
    to the value).
    """
    terms = [1.0]
    t = 1.0
    for k in range(1, max_terms):
        nxt = -t * (theta + k - 1) * (theta + k - 2) / (k * z)
        if abs(nxt) > abs(t):
            break
        t = nxt
        terms.append(t)
        if abs(t) < 1e-17:
            break
    scale = z ** (-theta)
    value = scale * sum(terms)
    zq = scale * sum((-theta - k) * c for k, c in enumerate(terms))
    omitted = abs(terms[-1]) / abs(sum(terms))
    return value, zq, omitted


def outer_rhs(b: float, theta: float, extra: Callable | None = None):
    """Right-hand side in t = ln z for y = (q, z q')."""

    def rhs(t, y):
        z = math.exp(t)
        a1 = z - 1.0 + 2.0 * b / (b + 2.0 * z)
        a0 = theta * z - 4.0 * b * z / (b + 2.0 * z) ** 2
        if extra is not None:
            v, dv = extra(z)
            a1 -= 0.5 * v / z
            a0 -= 0.5 * dv
        return [y[1], a1 * y[1] + a0 * y[0]]

    return rhs


def default_z_max(theta: float) -> float:
    """Large enough that the first asymptotic correction is below 5%."""
    return max(Z_MAX, 20.0 * abs(theta), 25.0 * abs(theta * (theta - 1.0)))


def integrate_outer(
    b: float,
    theta: float,
    z0: float,
    z_max: float | None = None,
    extra: Callable | None = None,
):
    """Backward integration of the decaying solution, normalized as z^-theta."""
    z_max = default_z_max(theta) if z_max is None else z_max
    q, zq, omitted = asymptotic_seed(theta, z_max)
    if omitted > SEED_TOL:
        raise SeedError(f"asymptotic start at z_max={z_max} has relative error {omitted:.2e}")
    sol = solve_ivp(
        outer_rhs(b, theta, extra),
        (math.log(z_max), math.log(z0)),
        [q, zq],
        method="DOP853",
        rtol=RTOL,
        atol=1e-300,
        dense_output=True,
    )
    if not sol.success:
        raise ArithmeticError(sol.message)
    return sol, z_max


@dataclass(frozen=True)
class OuterSolution:
    params: Parameters
    theta: float
    z: np.ndarray
    q: np.ndarray
    dq: np.ndarray
    method: Method
    z_max: float
    q_start: float
    zq_start: float

    @property
    def correction_G(self) -> np.ndarray:
        """q - Gamma(theta) h_theta on the grid."""
        g = gamma(self.theta)
        h = np.array([kummer_singular(self.theta, zz).value for zz in self.z])
        return self.q - g * h

    def tail_deviation(self) -> float:
        """|q / (Gamma(theta) z^-theta) - 1| at z_max."""
        lead = gamma(self.theta) * self.z[-1] ** (-self.theta)
        return float(abs(self.q[-1] / lead - 1.0))

    def log_derivative_start(self) -> float:
        """(z d/dz) q / q at z0."""
        return self.zq_start / self.q_start

    def residual(self) -> np.ndarray:
        """Kummer-plus-potential residual by differences in ln z."""
        grid = LogGrid(self.z, float(np.log(self.z[1] / self.z[0])))
        zq = self.z * self.dq
        zzq = grid.d_ds(zq) - zq  # z^2 q''
        b = self.params.b
        res = zzq / self.z + (2.0 - self.z) * self.dq - self.theta * self.q
        return res + apply_P0(b, self.z, self.q, self.dq)


def z_grid(z0: float, z_max: float, n_nodes: int = 2001) -> LogGrid:
    """Log-uniform z grid from z0 to z_max, truncated at z_max."""
    full = log_grid(z0, max(z_max, 1.5), n_nodes)
    keep = full.r <= z_max * (1.0 + 1e-12)
    return LogGrid(full.r[keep], full.h)


def solve_outer(
    params: Parameters,
    n: int,
    alpha_bar: float,
    n_nodes: int = 2001,
    z_max: float | None = None,
    extra_potential: Callable | None = None,
) -> OuterSolution:
    """Decaying outer solution with q ~ Gamma(theta) z^-theta at infinity.

    ``extra_potential(z) -> (V, dV/dz)`` adds (1/2) d/dz(V q)/z to the
    operator.
    """
    b = params.b
    if b > 1e-2:
        raise ValueError("the outer solve needs b <= 1e-2")
    theta = 1.0 - n + 1.0 / params.log_b + alpha_bar
    z0 = params.z0
    sol, z_max = integrate_outer(b, theta, z0, z_max, extra_potential)
    grid = z_grid(z0, z_max, n_nodes)
    g = gamma(theta)
    y = sol.sol(np.log(grid.r)) * g
    return OuterSolution(
        params=params,
        theta=theta,
        z=grid.r,
        q=y[0],
        dq=y[1] / grid.r,
        method=Method.BACKWARD_ODE,
        z_max=z_max,
        q_start=float(sol.y[0, -1] * g),
        zq_start=float(sol.y[1, -1] * g),
    )


def outer_zero_count(sol: OuterSolution) -> int:
    q = sol.q
    sig = np.sign(q[np.abs(q) > 1e-14 * np.max(np.abs(q))])
    return int(np.count_nonzero(sig[1:] != sig[:-1]))


# ---------------------------------------------------------------------------
# Explicit inverse of the Kummer operator
# ---------------------------------------------------------------------------


def kummer_pair(theta: float, z: np.ndarray):
    """(h, h', h_tilde, h_tilde') sampled on z."""
    hs = [kummer_singular(theta, zz) for zz in z]
    hr = [kummer_regular(theta, zz) for zz in z]
    return (
        np.array([e.value for e in hs]),
        np.array([e.derivative_z for e in hs]),
        np.array([e.value for e in hr]),
        np.array([e.derivative_z for e in hr]),
    )


def invert_kummer(theta: float, z: np.ndarray, f: np.ndarray, pair=None) -> np.ndarray:
    """Particular solution of K_theta u = f on a log-uniform z grid.

    u = -Gamma(theta) [h int_{z0}^z h~ f xi e^-xi + h~ int_z^inf h f xi e^-xi];
    the upper integral is truncated at the last node.
    """
    z = np.asarray(z, dtype=float)
    f = np.asarray(f, dtype=float)
    t_step = float(np.log(z[1] / z[0]))
    h, _, ht, _ = kummer_pair(theta, z) if pair is None else pair
    weight = z * np.exp(-z) * z  # xi e^-xi times the Jacobian dz = z dt
    lower = _cumulative_cubic(ht * f * weight, t_step)
    # accumulate from the right: h~ ~ e^z would amplify any cancellation
    upper = _cumulative_cubic((h * f * weight)[::-1], t_step)[::-1]
    return -gamma(theta) * (h * lower + ht * upper)


def apply_kummer(theta: float, z: np.ndarray, u: np.ndarray) -> np.ndarray:
    """K_theta u by fourth-order differences in ln z."""
    grid = LogGrid(np.asarray(z, dtype=float), float(np.log(z[1] / z[0])))
    us = grid.d_ds(u, 1)
    uss = grid.d_ds(u, 2)
    # z u'' = (u_ss - u_s)/z and u' = u_s / z
    return (uss - us) / z + (2.0 - z) * us / z - theta * u


def fixed_point_outer(params: Parameters, n: int, alpha_bar: float, sweeps: int = 1, n_nodes: int = 2001) -> OuterSolution:
    """q^{k+1} = Gamma(theta) h - K^{-1}[P0 q^k], started from Gamma(theta) h."""
    if not 1 <= sweeps <= 3:
        raise ValueError("between 1 and 3 sweeps")
    b = params.b
    theta = 1.0 - n + 1.0 / params.log_b + alpha_bar
    grid = z_grid(params.z0, default_z_max(theta), n_nodes)
    z = grid.r
    pair = kummer_pair(theta, z)
    g = gamma(theta)
    base, dbase = g * pair[0], g * pair[1]
    q, dq = base, dbase
    for _ in range(sweeps):
        rhs = apply_P0(b, z, q, dq)
        corr = invert_kummer(theta, z, rhs, pair)
        q = base - corr
        dq = dbase - grid.d_ds(corr) / z
    return OuterSolution(
        params=params,
        theta=theta,
        z=z,
        q=q,
        dq=dq,
        method=Method.FIXED_POINT,
        z_max=float(z[-1]),
        q_start=float(q[0]),
        zq_start=float(z[0] * dq[0]),
    )
