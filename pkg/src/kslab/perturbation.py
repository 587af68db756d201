"""Perturbed radial operator A + (1/r) d/dr (P .) and its spectral stability.

In the r variable (zeta = nu r) the perturbation only shifts the partial
mass profile, Q -> Q + P, so the perturbed b = 0 operator keeps an explicit
positive kernel

    psi_bar = psi0 exp(-I),   I(r) = int_0^r P(s)/s ds,

and the ground-state transform of direct_spectrum carries over with
W = omega_bar psi_bar^2 / r and V = -b (2 - Q - P).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .direct_spectrum import (
    DEFAULT_NODES,
    FINE_NODES,
    R_MIN,
    Discretization,
    Form,
    SpectrumResult,
    _dual_lengths,
    default_r_max,
    log_nodes,
    solve_spectrum,
)
from .radial_core import Parameters, RadialGridFunction

ADMISSIBILITY_LIMIT = 10.0  # on the P-only constant
COMBINED_LIMIT = 20.0  # on the |P| + |zeta P'| constant


class AdmissibilityError(ValueError):
    """Raised when a perturbation violates the size condition."""


@dataclass(frozen=True)
class PerturbationSpec:
    """Perturbation P(zeta), with I = int_0^zeta P/s ds.

    ``P`` and ``log_factor`` are callables of zeta; ``P_sampled`` is P on the
    admissibility grid.  ``admissibility`` is the smallest M with
    |P| <= M (nu^2/|ln nu|) zeta^2/(nu^2+zeta^2)^2 on that grid and
    ``admissibility_combined`` the same for |P| + |zeta P'|.
    """

    nu: float
    nu_tilde: float | None
    P: Callable
    log_factor: Callable
    P_sampled: RadialGridFunction
    admissibility: float
    admissibility_combined: float

    def weight_bar(self, weights, zeta):
        """omega_bar_nu = omega_nu exp(I) for a radial_core WeightSet."""
        return weights.omega_nu(zeta) * np.exp(self.log_factor(zeta))

    @property
    def is_zero(self) -> bool:
        return bool(np.all(self.P_sampled.values == 0.0))


def _zeta_grid(nu: float, n_nodes: int = 2001) -> np.ndarray:
    return np.exp(np.linspace(math.log(1e-4 * nu), math.log(1e4 * nu), n_nodes))


def admissibility_constant(nu: float, zeta, P, zP_prime=None) -> float:
    zeta = np.asarray(zeta, dtype=float)
    envelope = nu**2 / abs(math.log(nu)) * zeta**2 / (nu**2 + zeta**2) ** 2
    size = np.abs(P) if zP_prime is None else np.abs(P) + np.abs(zP_prime)
    return float(np.max(size / envelope))


def _check(m: float, mc: float) -> None:
    if m > ADMISSIBILITY_LIMIT:
        raise AdmissibilityError(f"admissibility constant {m:.3g} exceeds {ADMISSIBILITY_LIMIT}")
    if mc > COMBINED_LIMIT:
        raise AdmissibilityError(f"combined admissibility constant {mc:.3g} exceeds {COMBINED_LIMIT}")


def default_potential(nu: float, nu_tilde: float, check: bool = True) -> PerturbationSpec:
    """P = (Q_nu_tilde - Q_nu)/2 = 2 zeta^2 (nu^2 - nu_tilde^2) / ((zeta^2 + nu^2)(zeta^2 + nu_tilde^2))."""
    ln_nu = abs(math.log(nu))
    if check and abs(nu_tilde / nu - 1.0) > 1.0 / ln_nu * (1.0 + 1e-12):
        raise AdmissibilityError("|nu_tilde/nu - 1| must not exceed 1/|ln nu|")
    n2, t2 = nu * nu, nu_tilde * nu_tilde

    def P(zeta):
        x = np.asarray(zeta, dtype=float) ** 2
        return 2.0 * x * (n2 - t2) / ((x + n2) * (x + t2))

    def zP_prime(zeta):
        x = np.asarray(zeta, dtype=float) ** 2
        # zeta d/dzeta = 2 x d/dx
        return 4.0 * x * (n2 - t2) * (n2 * t2 - x * x) / ((x + n2) ** 2 * (x + t2) ** 2)

    def log_factor(zeta):
        x = np.asarray(zeta, dtype=float) ** 2
        return np.log((x + t2) / (x + n2)) - math.log(t2 / n2)

    z = _zeta_grid(nu)
    pv = P(z)
    m = admissibility_constant(nu, z, pv)
    mc = admissibility_constant(nu, z, pv, zP_prime(z))
    if check:
        _check(m, mc)
    w = _dual_lengths(z)
    return PerturbationSpec(nu, nu_tilde, P, log_factor, RadialGridFunction(z, pv, w), m, mc)


def sampled_potential(nu: float, zeta: np.ndarray, values: np.ndarray, check: bool = True) -> PerturbationSpec:
    """Perturbation given by samples on a log grid in zeta; P must vanish like zeta^2 at 0."""
    zeta = np.asarray(zeta, dtype=float)
    values = np.asarray(values, dtype=float)
    s = np.log(zeta)
    integrand = values  # P/zeta dzeta = P ds
    steps = 0.5 * (integrand[1:] + integrand[:-1]) * np.diff(s)
    # head: P ~ c zeta^2 gives int_0^zeta1 P ds = P(zeta1)/2
    cum = np.concatenate([[0.5 * values[0]], 0.5 * values[0] + np.cumsum(steps)])

    def P(z):
        return np.interp(np.log(z), s, values, left=0.0, right=0.0)

    def log_factor(z):
        return np.interp(np.log(z), s, cum)

    m = admissibility_constant(nu, zeta, values)
    mc = admissibility_constant(nu, zeta, values, np.gradient(values, s))
    if check:
        _check(m, mc)
    return PerturbationSpec(nu, None, P, log_factor, RadialGridFunction(zeta, values, _dual_lengths(zeta)), m, mc)


def ground_state_log_weight(b: float, r, nu: float, spec: PerturbationSpec | None) -> np.ndarray:
    """ln(omega_bar psi_bar^2 / r) in the r variable."""
    r = np.asarray(r, dtype=float)
    x = r * r
    out = -0.5 * b * x + 3.0 * np.log(r) - 2.0 * np.log1p(x) - math.log(8.0)
    if spec is not None:
        out = out - spec.log_factor(nu * r)
    return out


def build_perturbed(
    params: Parameters,
    spec: PerturbationSpec | None,
    n_nodes: int | None = None,
    form: Form = Form.GROUND_STATE,
    r_min: float = R_MIN,
) -> Discretization:
    """Finite-volume operator with P on the same grid as direct_spectrum."""
    if spec is not None:
        _check(spec.admissibility, spec.admissibility_combined)
    b, nu = params.b, params.nu
    n_nodes = n_nodes or (FINE_NODES if nu <= 1e-5 else DEFAULT_NODES)
    r = log_nodes(b, n_nodes, r_min=r_min, r_max=default_r_max(b))
    x = r * r
    P = spec.P(nu * r) if spec is not None else np.zeros_like(r)
    mid = np.sqrt(r[1:] * r[:-1])
    if form is Form.GROUND_STATE:
        flux = np.exp(ground_state_log_weight(b, mid, nu, spec)) / np.diff(r)
        mass = np.exp(ground_state_log_weight(b, r, nu, spec)) * _dual_lengths(r)
        Q = 4.0 * x / (1.0 + x)
        conj = x / (1.0 + x) ** 2
        if spec is not None:
            conj = conj * np.exp(-spec.log_factor(nu * r))
        return Discretization(r, flux, mass, -b * (2.0 - Q - P), conj, form, b)

    # untransformed operator: weight omega_bar / r, potential U + P'/r, Dirichlet ends
    def log_w(s):
        lw = -0.5 * b * s * s + 2.0 * np.log1p(s * s) - math.log(8.0) - np.log(s)
        return lw + (spec.log_factor(nu * s) if spec is not None else 0.0)

    flux = np.exp(log_w(mid)) / np.diff(r)
    mass = np.exp(log_w(r)) * _dual_lengths(r)
    pot = 8.0 / (1.0 + x) ** 2
    if spec is not None:
        pot = pot + np.gradient(P, r) / r
    pot = pot[1:-1].copy()
    pot[0] -= flux[0] / mass[1]
    pot[-1] -= flux[-1] / mass[-2]
    return Discretization(r[1:-1], flux[1:-1], mass[1:-1], pot, np.ones(r.size - 2), form, b)


@dataclass(frozen=True)
class StabilityReport:
    nu: float
    eigenvalues: np.ndarray
    eigenvalues_bar: np.ndarray
    scaled_eigenvalue_deviation: np.ndarray
    scaled_eigenfunction_distance: np.ndarray
    relative_distance: np.ndarray

    def as_dict(self) -> dict:
        return {
            "nu": self.nu,
            "eigenvalues": self.eigenvalues.tolist(),
            "eigenvalues_bar": self.eigenvalues_bar.tolist(),
            "scaled_eigenvalue_deviation": self.scaled_eigenvalue_deviation.tolist(),
            "scaled_eigenfunction_distance": self.scaled_eigenfunction_distance.tolist(),
        }


def eigenfunction_distance(base: SpectrumResult, pert: SpectrumResult, n: int) -> float:
    """||phi_bar - phi|| / ||phi|| in L^2(omega/r), both construction-normalized."""
    op = base.operator
    ratio = pert.operator.conjugate / op.conjugate  # psi_bar / psi0 on the common grid
    diff = ratio * pert.reduced[n] - base.reduced[n]
    return math.sqrt(op.norm2(diff) / op.norm2(base.reduced[n]))


def stability_report(params: Parameters, spec: PerturbationSpec, N: int = 2, n_nodes: int | None = None) -> StabilityReport:
    """Eigenvalue and eigenfunction deviations, scaled by |ln nu|^2 and sqrt|ln nu|."""
    if not 0 <= N <= 4:
        raise ValueError("N must be between 0 and 4")
    base = solve_spectrum(build_perturbed(params, None, n_nodes), N + 1, params)
    pert = solve_spectrum(build_perturbed(params, spec, n_nodes), N + 1, params)
    ln_nu = abs(math.log(params.nu))
    dev = np.abs(pert.eigenvalues - base.eigenvalues) / (2.0 * params.b) * ln_nu**2
    dist = np.array([eigenfunction_distance(base, pert, n) for n in range(N + 1)])
    return StabilityReport(
        nu=params.nu,
        eigenvalues=base.eigenvalues,
        eigenvalues_bar=pert.eigenvalues,
        scaled_eigenvalue_deviation=dev,
        scaled_eigenfunction_distance=dist * math.sqrt(ln_nu),
        relative_distance=dist,
    )
