"""Non-radial sector: Poisson fields per harmonic, the M operators, the mixed
scalar product and the coercivity of the localized linearized operator.

A field is a sum of profiles u_{k,i}(r) Y_{k,i}(theta) with Y_{k,1} = cos(k theta)
and Y_{k,2} = sin(k theta), k >= 1.  Every operator here commutes with
rotations, so quadratic forms split into per-profile radial integrals, each
carrying the angular factor int Y^2 = pi.

Conventions in the y variable: rho = exp(-b |y|^2 / 2), omega = rho / U,
Phi_tilde_u = Phi[u sqrt(rho)] / sqrt(rho) and M_tilde u = u/U - Phi_tilde_u.
The localized operator is L_tilde u = div(U grad(M_tilde u) - b y u).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import BSpline

from .radial_core import LogGrid, _cumulative_cubic, log_grid

ANGULAR = math.pi
TAIL_TOL = 1e-8
R_MIN = 1e-3
N_NODES = 4001


class DivergenceError(ArithmeticError):
    """Raised when the outer Poisson integral has not converged on the grid."""


# ---------------------------------------------------------------------------
# Backgrounds: y variable (scale 1, drift b) and zeta variable (scale nu, drift beta)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Background:
    """Stationary state at scale ``scale`` with drift coefficient ``drift``.

    ``prefactor`` multiplies the mixed scalar product and the weight omega
    (1 in the y variable, nu^2 in the zeta variable).
    """

    scale: float = 1.0
    drift: float = 0.0
    prefactor: float = 1.0

    def U(self, r):
        s2 = self.scale**2
        return 8.0 * s2 / (s2 + r * r) ** 2

    def dU(self, r):
        s2 = self.scale**2
        return -32.0 * s2 * r / (s2 + r * r) ** 3

    def dPhiU(self, r):
        return -4.0 * r / (self.scale**2 + r * r)

    def rho(self, r):
        return np.exp(-0.5 * self.drift * r * r)

    def sqrt_rho(self, r):
        return np.exp(-0.25 * self.drift * r * r)

    def omega(self, r):
        return self.prefactor * self.rho(r) / self.U(r)


def y_background(b: float) -> Background:
    return Background(1.0, b, 1.0)


def zeta_background(beta: float, nu: float) -> Background:
    return Background(nu, beta, nu * nu)


def default_grid(b: float, n_nodes: int = N_NODES, scale: float = 1.0, r_max: float | None = None) -> LogGrid:
    """Log grid in units of ``scale``; by default reaches b r^2 / 2 = 40 (or 1e3 at b = 0)."""
    if r_max is None:
        r_max = math.sqrt(80.0 / b) if b > 0 else 1e3
    g = log_grid(R_MIN, r_max, n_nodes)
    return LogGrid(g.r * scale, g.h)


# ---------------------------------------------------------------------------
# Poisson solves
# ---------------------------------------------------------------------------


def _reverse_cumulative(grid: LogGrid, integrand: np.ndarray) -> np.ndarray:
    """int_r^{r_max} integrand dr at every node."""
    return _cumulative_cubic((integrand * grid.r)[::-1], grid.h)[::-1]


def poisson_harmonic(grid: LogGrid, k: int, u: np.ndarray, check_tail: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Solution of -Delta^(k) Phi = u and its r-derivative.

    k >= 1 uses the two-kernel formula with r^k and r^-k; k = 0 returns the
    field with Phi(r) -> -ln(r) * mass at infinity.
    """
    r = grid.r
    u = np.asarray(u, dtype=float)
    if k == 0:
        inner = grid.cumulative(u * r) + u[0] * r[0] ** 2 / 2.0
        outer = _reverse_cumulative(grid, u * np.log(r) * r)
        return -np.log(r) * inner - outer, -inner / r
    outer_integrand = u * r ** (1 - k)
    if check_tail:
        scale = np.max(np.abs(outer_integrand * r)) + 1e-300
        if abs(outer_integrand[-1] * r[-1]) > TAIL_TOL * scale:
            raise DivergenceError("profile does not decay before the end of the grid")
    A = _reverse_cumulative(grid, outer_integrand)
    # head of int_0^r u s^(1+k) ds assuming u ~ c r^k below the first node
    B = grid.cumulative(u * r ** (1 + k)) + u[0] * r[0] ** (k + 2) / (2.0 * k + 2.0)
    phi = (r**k * A + r ** (-k) * B) / (2.0 * k)
    dphi = 0.5 * (r ** (k - 1) * A - r ** (-k - 1) * B)
    return phi, dphi


def poisson_residual(grid: LogGrid, k: int, u: np.ndarray, phi: np.ndarray) -> float:
    """max |Delta^(k) phi + u| relative to the local size of the terms, interior nodes."""
    r = grid.r
    phi_ss = grid.d_ds(phi, 2)
    res = (phi_ss - k * k * phi) / r**2 + u
    scale = (np.abs(phi_ss) + k * k * np.abs(phi)) / r**2 + np.abs(u) + 1e-300
    return float(np.max(np.abs(res[4:-4]) / scale[4:-4]))


def truncated_poisson_profile(grid: LogGrid, k: int, u: np.ndarray, bg: Background) -> tuple[np.ndarray, np.ndarray]:
    """Phi_tilde = Phi[u sqrt(rho)] / sqrt(rho) and its r-derivative."""
    r = grid.r
    sr = bg.sqrt_rho(r)
    phi, dphi = poisson_harmonic(grid, k, u * sr)
    half = 0.5 * bg.drift * r
    return phi / sr, (dphi + half * phi) / sr


# ---------------------------------------------------------------------------
# Fields
# ---------------------------------------------------------------------------


@dataclass
class HarmonicField:
    """Non-radial field: profiles keyed by (k, i) with k >= 1, i in {1, 2}."""

    b: float
    grid: LogGrid
    profiles: dict
    background: Background | None = None
    gradient_cache: dict = field(default_factory=dict, repr=False)
    poisson_cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        for (k, i), v in self.profiles.items():
            if k < 1 or i not in (1, 2):
                raise ValueError("only non-radial harmonics (k >= 1, i in {1, 2}) are allowed")
            if v.shape != self.grid.r.shape:
                raise ValueError("profile does not match the grid")
        if self.background is None:
            self.background = y_background(self.b)

    @property
    def k_list(self) -> list:
        return sorted(self.profiles)

    def derivative(self, key) -> np.ndarray:
        if key not in self.gradient_cache:
            self.gradient_cache[key] = self.grid.d_dr(self.profiles[key])
        return self.gradient_cache[key]

    def phi_tilde(self, key) -> tuple[np.ndarray, np.ndarray]:
        if key not in self.poisson_cache:
            self.poisson_cache[key] = truncated_poisson_profile(self.grid, key[0], self.profiles[key], self.background)
        return self.poisson_cache[key]

    def with_profiles(self, profiles: dict) -> "HarmonicField":
        return HarmonicField(self.b, self.grid, profiles, self.background)

    def decays(self, tol: float = 1e-14) -> bool:
        """Gradient energy density at r_max below tol times its maximum."""
        bg = self.background
        r = self.grid.r
        for key, u in self.profiles.items():
            du = self.derivative(key)
            dens = (du**2 + key[0] ** 2 * u**2 / r**2) * bg.omega(r) * r
            if dens[-1] > tol * dens.max():
                return False
        return True


def truncated_poisson(f: HarmonicField) -> HarmonicField:
    """Field of Phi_tilde profiles."""
    return f.with_profiles({key: f.phi_tilde(key)[0] for key in f.k_list})


def M_apply(f: HarmonicField, truncated: bool = True) -> HarmonicField:
    """u/U - Phi_tilde (truncated) or u/U - Phi (untruncated)."""
    U = f.background.U(f.grid.r)
    out = {}
    for key, u in f.profiles.items():
        phi = f.phi_tilde(key)[0] if truncated else poisson_harmonic(f.grid, key[0], u)[0]
        out[key] = u / U - phi
    return f.with_profiles(out)


def _integrate(grid: LogGrid, integrand: np.ndarray) -> float:
    """pi * int integrand r dr."""
    return ANGULAR * float(np.sum(grid.weights * integrand * grid.r))


def _M_tilde(f: HarmonicField, key) -> tuple[np.ndarray, np.ndarray]:
    r = f.grid.r
    bg = f.background
    U, dU = bg.U(r), bg.dU(r)
    u, du = f.profiles[key], f.derivative(key)
    phi, dphi = f.phi_tilde(key)
    return u / U - phi, du / U - u * dU / U**2 - dphi


def gradient_norm(f: HarmonicField) -> float:
    """||grad u||^2 in L^2(omega)."""
    r = f.grid.r
    w = f.background.omega(r)
    return sum(
        _integrate(f.grid, (f.derivative(key) ** 2 + key[0] ** 2 * f.profiles[key] ** 2 / r**2) * w) for key in f.k_list
    )


def weighted_l2_norm(f: HarmonicField) -> float:
    """||u||^2 in L^2(omega)."""
    w = f.background.omega(f.grid.r)
    return sum(_integrate(f.grid, f.profiles[key] ** 2 * w) for key in f.k_list)


def mixed_inner_product(u: HarmonicField, v: HarmonicField) -> float:
    """<u, v>_* = prefactor * int u M_tilde(v) rho."""
    if set(u.k_list) != set(v.k_list):
        raise ValueError("fields must share their harmonic support")
    rho = u.background.rho(u.grid.r)
    total = 0.0
    for key in u.k_list:
        mv, _ = _M_tilde(v, key)
        total += _integrate(u.grid, u.profiles[key] * mv * rho)
    return u.background.prefactor * total


@dataclass(frozen=True)
class QuadraticForms:
    F: float
    G: float
    mixed: float
    full: float
    gradient: float


def quadratic_forms(u: HarmonicField) -> QuadraticForms:
    """F(u,u), G(u,u) and full = F + G + 2 drift <u,u>_*.

    F = int U |grad M_tilde u|^2 rho + drift int (y . grad Phi_U) u M_tilde(u) rho,
    G = drift int U (y . grad Phi_tilde_u) M_tilde(u) rho (times the prefactor).
    """
    r = u.grid.r
    bg = u.background
    U, rho, dphiU = bg.U(r), bg.rho(r), bg.dPhiU(r)
    F = G = 0.0
    for key in u.k_list:
        k = key[0]
        m, dm = _M_tilde(u, key)
        _, dphi = u.phi_tilde(key)
        F += _integrate(u.grid, (U * (dm**2 + k * k * m**2 / r**2) + bg.drift * r * dphiU * u.profiles[key] * m) * rho)
        G += _integrate(u.grid, bg.drift * U * r * dphi * m * rho)
    F *= bg.prefactor
    G *= bg.prefactor
    mixed = mixed_inner_product(u, u)
    return QuadraticForms(F, G, mixed, F + G + 2.0 * bg.drift * mixed, gradient_norm(u))


def F_expanded(u: HarmonicField) -> float:
    """F(u,u) written around ||grad u||^2_omega (five terms)."""
    r = u.grid.r
    bg = u.background
    U, dU, rho, dphiU = bg.U(r), bg.dU(r), bg.rho(r), bg.dPhiU(r)
    total = 0.0
    for key in u.k_list:
        k = key[0]
        w, dw = u.profiles[key], u.derivative(key)
        phi, dphi = u.phi_tilde(key)
        q, dq = w / U, dw / U - w * dU / U**2
        cross = U * (dq * dphi + k * k * q * phi / r**2)
        grad_phi2 = U * (dphi**2 + k * k * phi**2 / r**2)
        integrand = -w * w - 2.0 * cross + grad_phi2 - bg.drift * r * dphiU * w * phi
        total += _integrate(u.grid, integrand * rho)
    return gradient_norm(u) + bg.prefactor * total


def direct_form(u: HarmonicField) -> float:
    """<-L_tilde u, u>_* with L_tilde u assembled by finite differences."""
    grid = u.grid
    r = grid.r
    bg = u.background
    U, dU, rho, dphiU = bg.U(r), bg.dU(r), bg.rho(r), bg.dPhiU(r)

    def lap(k, f):
        fs = grid.d_ds(f, 1)
        fss = grid.d_ds(f, 2)
        return (fss - k * k * f) / r**2, fs / r

    total = 0.0
    for key in u.k_list:
        k = key[0]
        w = u.profiles[key]
        lw, dw = lap(k, w)
        flux = grid.d_ds(r * w * dphiU) / r**2  # (1/r) d/dr (r w Phi_U')
        phi, _ = u.phi_tilde(key)
        lphi, dphi = lap(k, phi)
        L = lw - flux - (U * lphi + dU * dphi) - bg.drift * (2.0 * w + r * dw)
        m, _ = _M_tilde(u, key)
        total += _integrate(grid, -L * m * rho)
    return bg.prefactor * total


def poisson_identity_residual(u: HarmonicField) -> float:
    """max |Delta Phi_t + u - drift y.grad Phi_t - (drift - drift^2 |y|^2 / 4) Phi_t|, pointwise relative.

    The identity follows from -Delta(Phi_t sqrt(rho)) = u sqrt(rho).  Each
    node is scaled by the sum of the magnitudes of the terms, on the interior
    and where sqrt(rho) has not amplified rounding.
    """
    grid = u.grid
    r = grid.r
    c = u.background.drift
    worst = 0.0
    sl = slice(4, -4)
    mask = (0.25 * c * r * r < 8.0)[sl]
    for key in u.k_list:
        k = key[0]
        phi, _ = u.phi_tilde(key)
        fs, fss = grid.d_ds(phi, 1), grid.d_ds(phi, 2)
        quad = (c - c * c * r * r / 4.0) * phi
        res = (fss - k * k * phi) / r**2 + u.profiles[key] - c * fs - quad
        scale = (np.abs(fss) + k * k * np.abs(phi)) / r**2 + np.abs(u.profiles[key]) + np.abs(c * fs) + np.abs(quad) + 1e-300
        worst = max(worst, float(np.max((np.abs(res) / scale)[sl][mask])))
    return worst


# ---------------------------------------------------------------------------
# Projections and the kernel direction
# ---------------------------------------------------------------------------


def kernel_profile(grid: LogGrid, bg: Background) -> np.ndarray:
    """Radial profile of d_{y_1} U (harmonic (1, 1))."""
    return bg.dU(grid.r)


def translation_projection(f: HarmonicField, key=(1, 1)) -> float:
    """int u d_{y_j} U sqrt(rho) dy for the harmonic matching j (cos -> 1, sin -> 2)."""
    if key not in f.profiles:
        return 0.0
    r = f.grid.r
    return _integrate(f.grid, f.profiles[key] * f.background.dU(r) * f.background.sqrt_rho(r))


def project_out_translations(f: HarmonicField, weight_sqrt_rho: bool = True) -> HarmonicField:
    """Remove the components along d_{y_j}U sqrt(rho) (or d_{y_j}U) in L^2."""
    r = f.grid.r
    bg = f.background
    direction = bg.dU(r) * (bg.sqrt_rho(r) if weight_sqrt_rho else 1.0)
    norm = _integrate(f.grid, direction * direction)
    out = dict(f.profiles)
    for key in ((1, 1), (1, 2)):
        if key in out:
            out[key] = out[key] - _integrate(f.grid, out[key] * direction) / norm * direction
    return f.with_profiles(out)


# ---------------------------------------------------------------------------
# Random ensembles and scans
# ---------------------------------------------------------------------------


def random_field(
    b: float,
    K: int,
    rng: np.random.Generator,
    grid: LogGrid | None = None,
    n_basis: int = 12,
    background: Background | None = None,
) -> HarmonicField:
    """Cubic B-spline profiles in ln r on harmonics 1..K, damped by exp(-sqrt(b) r).

    Knots span [0.02, 4/sqrt(b)] (or [0.02, 40] at b = 0), so the ensemble
    covers both the stationary-state scale and the parabolic scale.
    """
    grid = default_grid(b) if grid is None else grid
    r = grid.r
    s = np.log(r)
    r_hi = 4.0 / math.sqrt(b) if b > 0 else 40.0
    knots = np.linspace(math.log(0.02), math.log(r_hi), n_basis + 4)
    basis = []
    for j in range(n_basis):
        bj = BSpline.basis_element(knots[j : j + 5], extrapolate=False)(s)
        basis.append(np.nan_to_num(bj))
    basis = np.array(basis)
    damp = np.exp(-math.sqrt(b) * r) if b > 0 else np.exp(-r / 20.0)
    profiles = {}
    for k in range(1, K + 1):
        for i in (1, 2):
            profiles[(k, i)] = rng.standard_normal(n_basis) @ basis * damp
    return HarmonicField(b, grid, profiles, background)


@dataclass(frozen=True)
class CoercivityReport:
    b: float
    K: int
    trials: int
    seed: int
    quotients: np.ndarray

    @property
    def minimum(self) -> float:
        return float(self.quotients.min())

    def as_dict(self) -> dict:
        q = self.quotients
        return {
            "b": self.b,
            "K": self.K,
            "trials": self.trials,
            "seed": self.seed,
            "min": float(q.min()),
            "max": float(q.max()),
            "mean": float(q.mean()),
            "median": float(np.median(q)),
        }


def coercivity_scan(b: float, K: int = 4, trials: int = 100, seed: int = 42) -> CoercivityReport:
    """Minimum of <-L_tilde u, u>_* / ||grad u||^2_omega over projected random fields."""
    if not 1 <= K <= 6:
        raise ValueError("K must be between 1 and 6")
    if not 0 < b <= 1e-2:
        raise ValueError("b must lie in (0, 1e-2]")
    grid = default_grid(b)
    children = np.random.SeedSequence(seed).spawn(trials)
    q = np.empty(trials)
    for t, child in enumerate(children):
        f = project_out_translations(random_field(b, K, np.random.default_rng(child), grid))
        forms = quadratic_forms(f)
        q[t] = forms.full / forms.gradient
    return CoercivityReport(b, K, trials, seed, q)


def _weighted(grid: LogGrid, f: HarmonicField, weight: np.ndarray, gradient: bool) -> float:
    r = grid.r
    total = 0.0
    for key in f.k_list:
        u = f.profiles[key]
        dens = f.derivative(key) ** 2 + key[0] ** 2 * u**2 / r**2 if gradient else u**2
        total += _integrate(grid, dens * weight)
    return total


def functional_inequality_checks(b: float, samples: list[HarmonicField], alphas=(0.0, 0.5, 1.0, 1.5, 2.0)) -> dict:
    """Worst ratios of the Hardy and Poincare-type inequalities over samples.

    For "<~" inequalities the reported value is max(lhs/rhs); for the H^1
    coercivity of M at b = 0 it is min(lhs/rhs) after projecting out d_j U.
    """
    report: dict = {"genpoincare": {}, "generalisedhardy": {}}
    hardy_rho, hardy_plain, coerc_h1, cont_M = [], [], [], []
    gp = {0: [], 1: []}
    gh = {a: [] for a in alphas}
    for f in samples:
        grid = f.grid
        r = grid.r
        rho = np.exp(-0.5 * b * r * r)
        rhs = _weighted(grid, f, (1.0 + r**4) * rho, True)
        hardy_rho.append(_weighted(grid, f, (1.0 + r**2) * rho, False) / rhs)
        for a in alphas:
            gh[a].append(b**a * _weighted(grid, f, (1.0 + r ** (2 + 2 * a)) * rho, False) / rhs)
        hardy_plain.append(
            _weighted(grid, f, 1.0 + r**2, False) / _weighted(grid, f, 1.0 + r**4, True)
        )
        if b > 0:
            z2 = b * r * r
            for kp in gp:
                lhs = _weighted(grid, f, z2**kp * (1.0 + z2) * np.exp(-0.5 * z2), False) * b
                rhs_p = _weighted(grid, f, z2**kp * np.exp(-0.5 * z2), True)
                gp[kp].append(lhs / rhs_p)
        # b = 0 statements with the untruncated operator
        f0 = HarmonicField(0.0, grid, dict(f.profiles))
        f0 = project_out_translations(f0, weight_sqrt_rho=False)
        U, dU = 8.0 / (1.0 + r * r) ** 2, -32.0 * r / (1.0 + r * r) ** 3
        lhs = rhs0 = lhs_c = rhs_c = 0.0
        for key in f0.k_list:
            k = key[0]
            u = f0.profiles[key]
            du = f0.derivative(key)
            phi, dphi = poisson_harmonic(grid, k, u)
            m = u / U - phi
            dm = du / U - u * dU / U**2 - dphi
            lhs += _integrate(grid, U * (dm**2 + k * k * m**2 / r**2))
            rhs0 += _integrate(grid, (du**2 + k * k * u**2 / r**2) / U)
            lhs_c += _integrate(grid, U * m * m)
            rhs_c += _integrate(grid, u * u / U)
        coerc_h1.append(lhs / rhs0)
        cont_M.append(lhs_c / rhs_c)
    report["hardyL2rho"] = max(hardy_rho)
    report["hardy"] = max(hardy_plain)
    report["generalisedhardy"] = {a: max(v) for a, v in gh.items()}
    report["genpoincare"] = {kp: (max(v) if v else None) for kp, v in gp.items()}
    report["coercivity_H1_min"] = min(coerc_h1)
    report["continuity_M_max"] = max(cont_M)
    return report


def poisson_pointwise_constant(f: HarmonicField) -> float:
    """max over r of b^(3/4) |Phi_tilde|^2 rho (1+r)^(3/2) / ||grad u||^2_omega (sum over harmonics)."""
    r = f.grid.r
    rho = f.background.rho(r)
    phi2 = sum(f.phi_tilde(key)[0] ** 2 for key in f.k_list)
    return float(np.max(f.b**0.75 * phi2 * rho * (1.0 + r) ** 1.5) / gradient_norm(f))


def to_zeta_variables(f: HarmonicField, beta: float, nu: float) -> HarmonicField:
    """Same field written in z = nu y: profiles unchanged, grid scaled by nu."""
    if abs(beta * nu * nu - f.b) > 1e-12 * f.b:
        raise ValueError("b must equal beta nu^2")
    grid = LogGrid(f.grid.r * nu, f.grid.h)
    return HarmonicField(f.b, grid, dict(f.profiles), zeta_background(beta, nu))


def zeta_projection(f: HarmonicField, key=(1, 1)) -> float:
    """int u d_{z_j} U_nu sqrt(rho0) dz for a field in zeta variables."""
    return translation_projection(f, key)
