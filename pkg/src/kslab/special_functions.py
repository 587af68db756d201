"""Gamma, digamma, Pochhammer symbols and the two Kummer solutions.

The Kummer equation ``z f'' + (2 - z) f' - theta f = 0`` has the regular
solution ``M(theta, 2, z)`` and the logarithmic solution ``U(theta, 2, z)``.
Everything here is implemented with plain floating point arithmetic so the
matching and outer-zone modules do not depend on an external special
function library.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

EULER_GAMMA = 0.57721566490153286060651209008240243

# Lanczos coefficients for g = 7, n = 9.
_LANCZOS_G = 7.0
_LANCZOS_COEF = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)

# Bernoulli numbers B_2, B_4, ..., B_16 for the digamma asymptotic series.
_BERNOULLI_EVEN = (
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
    -3617.0 / 510.0,
)

_POLE_TOL = 1e-12
DEFAULT_SWITCH = 30.0
_SERIES_TERM_CAP = 500
_LOG_SERIES_LIMIT = 6.0
_CONTINUATION_START = 45.0
_CONTINUATION_STEP = 1.5


class PoleError(ValueError):
    """Raised when Gamma or digamma is evaluated at a nonpositive integer."""


class Branch(str, Enum):
    SERIES = "series"
    ASYMPTOTIC = "asymptotic"


@dataclass(frozen=True)
class KummerEval:
    """A Kummer solution and its z-derivative at one point."""

    theta: float
    z: float
    value: float
    derivative_z: float
    branch: Branch


def _near_pole(x: float) -> bool:
    return x <= 0.0 and abs(x - round(x)) < _POLE_TOL


def _lanczos_gamma(x: float) -> float:
    # valid for x >= 0.5
    x -= 1.0
    acc = _LANCZOS_COEF[0]
    for i, c in enumerate(_LANCZOS_COEF[1:], start=1):
        acc += c / (x + i)
    t = x + _LANCZOS_G + 0.5
    return math.sqrt(2.0 * math.pi) * t ** (x + 0.5) * math.exp(-t) * acc


def gamma(x: float) -> float:
    """Gamma function with reflection for arguments below one half."""
    x = float(x)
    if _near_pole(x):
        raise PoleError(f"Gamma has a pole at {x!r}")
    if x == round(x) and 1.0 <= x <= 30.0:
        return float(math.factorial(int(x) - 1))
    if x < 0.5:
        return math.pi / (math.sin(math.pi * x) * _lanczos_gamma(1.0 - x))
    return _lanczos_gamma(x)


def rgamma(x: float) -> float:
    """Reciprocal Gamma, exactly zero at the nonpositive integers."""
    x = float(x)
    if x <= 0.0 and x == round(x):
        return 0.0
    if x < 0.5:
        return math.sin(math.pi * x) * _lanczos_gamma(1.0 - x) / math.pi
    return 1.0 / gamma(x)


def digamma(x: float) -> float:
    """Logarithmic derivative of Gamma."""
    x = float(x)
    if _near_pole(x):
        raise PoleError(f"digamma has a pole at {x!r}")
    if x < 0.5:
        # Psi(1 - x) - Psi(x) = pi cot(pi x)
        return digamma(1.0 - x) - math.pi / math.tan(math.pi * x)
    acc = 0.0
    while x < 10.0:
        acc -= 1.0 / x
        x += 1.0
    inv2 = 1.0 / (x * x)
    series = 0.0
    power = inv2
    for k, bern in enumerate(_BERNOULLI_EVEN, start=1):
        series += bern / (2 * k) * power
        power *= inv2
    return acc + math.log(x) - 0.5 / x - series


def pochhammer(a: float, i: int) -> float:
    """Rising factorial a (a + 1) ... (a + i - 1)."""
    if i < 0:
        raise ValueError("pochhammer index must be nonnegative")
    out = 1.0
    for j in range(i):
        out *= a + j
    return out


# ---------------------------------------------------------------------------
# Regular solution M(theta, 2, z)
# ---------------------------------------------------------------------------


def _m_series(a: float, b: float, z: float) -> float:
    term = 1.0
    total = 1.0
    for i in range(_SERIES_TERM_CAP):
        term *= (a + i) * z / ((b + i) * (i + 1))
        total += term
        if term == 0.0 or (i > z and abs(term) <= 1e-16 * abs(total)):
            return total
    raise ArithmeticError("Kummer series did not converge within the term cap")


def _m_asymptotic(a: float, b: float, z: float) -> float | None:
    """Leading exponential branch of M, or None if it is not accurate."""
    ra = rgamma(a)
    if ra == 0.0:
        return None
    # the neglected algebraic branch is ~ z^{-a} / Gamma(b - a)
    log_lead = z + (a - b) * math.log(z) + math.log(abs(ra))
    log_other = -a * math.log(z) + math.log(abs(rgamma(b - a)) + 1e-300)
    if log_other - log_lead > math.log(1e-15):
        return None
    total = 0.0
    term = 1.0
    prev = math.inf
    for s in range(200):
        if abs(term) > prev:
            break
        total += term
        prev = abs(term)
        if abs(term) < 1e-17 * abs(total):
            break
        term *= (b - a + s) * (1 - a + s) / ((s + 1) * z)
    if prev > 1e-14 * abs(total):
        return None
    return gamma(b) * ra * math.exp(z) * z ** (a - b) * total


def _kummer_m(a: float, b: float, z: float, switch: float) -> tuple[float, Branch]:
    if z > 700.0:
        raise OverflowError("e^z exceeds the floating point range")
    if z >= switch:
        val = _m_asymptotic(a, b, z)
        if val is not None:
            return val, Branch.ASYMPTOTIC
    return _m_series(a, b, z), Branch.SERIES


def kummer_regular(theta: float, z: float, switch: float = DEFAULT_SWITCH) -> KummerEval:
    """Regular Kummer solution M(theta, 2, z), normalized to 1 at z = 0."""
    if z <= 0.0:
        raise ValueError("z must be positive")
    value, branch = _kummer_m(theta, 2.0, z, switch)
    dval, _ = _kummer_m(theta + 1.0, 3.0, z, switch)
    return KummerEval(theta, z, value, 0.5 * theta * dval, branch)


# ---------------------------------------------------------------------------
# Logarithmic solution U(theta, 2, z)
# ---------------------------------------------------------------------------


def _u_log_series(a: float, z: float) -> tuple[float, float]:
    """Convergent expansion around z = 0, accurate for moderate z."""
    ra1 = rgamma(a - 1.0)
    lnz = math.log(z)
    value = rgamma(a) / z
    deriv = -rgamma(a) / (z * z)
    coef = 1.0  # (a)_k / ((2)_k k!)
    zk = 1.0  # z^k
    for k in range(_SERIES_TERM_CAP):
        if a + k <= 0.5:
            psi_term = ra1 * digamma(1.0 - a - k) + gamma(2.0 - a) * math.cos(math.pi * a)
        else:
            psi_term = ra1 * digamma(a + k)
        bracket = ra1 * (lnz - digamma(1.0 + k) - digamma(2.0 + k)) + psi_term
        t_val = coef * zk * bracket
        t_der = coef * (k * zk / z * bracket + ra1 * zk / z)
        value += t_val
        deriv += t_der
        if k > z and abs(coef * zk) * (abs(bracket) + abs(ra1)) <= 1e-17 * (abs(value) + 1e-300):
            return value, deriv
        coef *= (a + k) / ((2.0 + k) * (k + 1.0))
        zk *= z
        if coef == 0.0 and ra1 == 0.0:
            return value, deriv
    raise ArithmeticError("logarithmic Kummer series did not converge")


def _u_asymptotic(a: float, z: float) -> tuple[float, float] | None:
    total = 0.0
    dtotal = 0.0
    term = 1.0
    prev = math.inf
    for k in range(200):
        if abs(term) > prev:
            break
        total += term
        dtotal += (-a - k) * term / z
        prev = abs(term)
        if abs(term) < 1e-17 * abs(total):
            break
        term *= -(a + k) * (a - 1.0 + k) / ((k + 1) * z)
    if prev > 1e-13 * abs(total) and total != 0.0:
        return None
    scale = z ** (-a)
    return total * scale, dtotal * scale


def _taylor_step(a: float, z1: float, f: float, df: float, h: float) -> tuple[float, float]:
    """Advance a Kummer solution from z1 to z1 + h by its local power series."""
    c_prev, c_cur = f, df  # c_0, c_1
    value = c_prev + c_cur * h
    deriv = c_cur
    hk = h  # h^k for the current c_k with k = 1
    k = 0
    while True:
        c_next = (-(k + 1) * (k + 2 - z1) * c_cur + (k + a) * c_prev) / (z1 * (k + 2) * (k + 1))
        deriv += (k + 2) * c_next * hk
        hk *= h
        value += c_next * hk
        k += 1
        c_prev, c_cur = c_cur, c_next
        small = abs(c_next * hk) <= 1e-18 * (abs(value) + 1e-300)
        if k > 8 and small and abs(c_prev * hk / h) <= 1e-18 * (abs(value) + 1e-300):
            return value, deriv
        if k > 400:
            raise ArithmeticError("Taylor continuation did not converge")


def _u_continued(a: float, z: float) -> tuple[float, float]:
    """Carry the asymptotic value from a large argument back down to z."""
    z1 = max(_CONTINUATION_START, z)
    start = _u_asymptotic(a, z1)
    if start is None:
        raise ArithmeticError("asymptotic start of the continuation is inaccurate")
    f, df = start
    while z1 > z:
        h = -min(_CONTINUATION_STEP, z1 - z)
        f, df = _taylor_step(a, z1, f, df, h)
        z1 += h
    return f, df


def kummer_singular(theta: float, z: float, switch: float = DEFAULT_SWITCH) -> KummerEval:
    """Logarithmic Kummer solution U(theta, 2, z), decaying like z^{-theta}."""
    if z <= 0.0:
        raise ValueError("z must be positive")
    if z > 700.0:
        raise OverflowError("argument beyond the supported range")
    if z >= switch:
        asym = _u_asymptotic(theta, z)
        if asym is not None:
            return KummerEval(theta, z, asym[0], asym[1], Branch.ASYMPTOTIC)
    if z <= _LOG_SERIES_LIMIT:
        value, deriv = _u_log_series(theta, z)
    else:
        value, deriv = _u_continued(theta, z)
    return KummerEval(theta, z, value, deriv, Branch.SERIES)


def kummer_ode_residual(ev: KummerEval, second_derivative: float) -> float:
    """Residual of z f'' + (2 - z) f' - theta f at an evaluated point."""
    return ev.z * second_derivative + (2.0 - ev.z) * ev.derivative_z - ev.theta * ev.value
