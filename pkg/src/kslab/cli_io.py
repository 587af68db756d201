"""Batch driver: configuration, parameter sweeps and report serialization."""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from . import direct_spectrum as ds
from . import matching
from . import nonradial as nr
from .outer_solution import apply_kummer, invert_kummer, z_grid
from .perturbation import default_potential, stability_report
from .radial_core import (
    AccuracyError,
    Parameters,
    apply_A0,
    build_kernel_table,
    invert_A0,
    log_grid,
    stationary_profiles,
)
from .special_functions import digamma, gamma, kummer_regular, kummer_singular, pochhammer

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERICAL = 2
EXIT_INVARIANT = 3


class ConfigError(ValueError):
    """Invalid run configuration."""


class Command(str, Enum):
    EIGEN_TABLE = "eigen-table"
    MATCH = "match"
    PROFILES = "profiles"
    PERTURB = "perturb"
    COERCIVITY = "coercivity"
    VALIDATE = "validate"


TABULAR = {Command.EIGEN_TABLE, Command.PROFILES}


@dataclass(frozen=True)
class RunConfig:
    command: Command
    beta: float = 0.5
    nu_list: tuple = (1e-3,)
    n_max: int = 2
    zeta0: float = 0.1
    grid_points: int | None = None
    output_path: Path | None = None
    seed: int = 42
    format: str | None = None
    K: int = 4
    trials: int = 100
    workers: int = 1

    def __post_init__(self) -> None:
        if self.beta <= 0:
            raise ConfigError("beta must be positive")
        if not self.nu_list:
            raise ConfigError("at least one nu is required")
        if any(not 0 < nu <= 0.1 for nu in self.nu_list):
            raise ConfigError("every nu must lie in (0, 0.1]")
        object.__setattr__(self, "nu_list", tuple(sorted((float(x) for x in self.nu_list), reverse=True)))
        if not 0 <= self.n_max <= 9:
            raise ConfigError("n_max must lie in [0, 9]")
        if not 0 < self.zeta0 <= 0.5:
            raise ConfigError("zeta0 must lie in (0, 0.5]")
        if self.grid_points is not None and self.grid_points < 101:
            raise ConfigError("grid_points must be at least 101")
        if self.format is None:
            object.__setattr__(self, "format", "csv" if self.command in TABULAR else "json")
        if self.format not in ("csv", "json"):
            raise ConfigError("format must be csv or json")
        if self.format == "csv" and self.command not in TABULAR:
            raise ConfigError(f"{self.command.value} only writes json")
        if not 1 <= self.K <= 6:
            raise ConfigError("K must lie in [1, 6]")
        if self.trials < 1 or self.workers < 1:
            raise ConfigError("trials and workers must be positive")

    def params(self, nu: float) -> Parameters:
        return Parameters(beta=self.beta, nu=nu, zeta0=self.zeta0, n_max=self.n_max)


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------


def parse_nu_grid(text: str) -> tuple:
    """'a:b:count' -> count log-spaced values from a to b."""
    try:
        a, b, count = text.split(":")
        a, b, count = float(a), float(b), int(count)
    except ValueError as exc:
        raise ConfigError(f"nu grid must be 'a:b:count', got {text!r}") from exc
    if a <= 0 or b <= 0 or count < 1:
        raise ConfigError("nu grid endpoints must be positive and count >= 1")
    if count == 1:
        return (a,)
    return tuple(float(x) for x in np.geomspace(a, b, count))


def _parse_nu_list(text: str) -> tuple:
    try:
        return tuple(float(x) for x in text.replace(",", " ").split())
    except ValueError as exc:
        raise ConfigError(f"invalid nu list {text!r}") from exc


CONFIG_KEYS = {
    "beta": float,
    "nu": _parse_nu_list,
    "nu_grid": parse_nu_grid,
    "n_max": int,
    "zeta0": float,
    "grid_points": int,
    "seed": int,
    "output": Path,
    "format": str,
    "K": int,
    "trials": int,
    "workers": int,
}


def read_config_file(path: Path) -> dict:
    """Plain key = value lines; '#' starts a comment."""
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    raw = {}
    for number, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{number}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in CONFIG_KEYS:
            raise ConfigError(f"{path}:{number}: unknown key {key!r}")
        raw[key] = value
    return raw


def build_config(command: str, file_values: dict, overrides: dict) -> RunConfig:
    """Merge config-file strings with already-typed flag overrides."""
    try:
        cmd = Command(command)
    except ValueError as exc:
        raise ConfigError(f"unknown command {command!r}") from exc
    values = {}
    for key, text in file_values.items():
        try:
            values[key] = CONFIG_KEYS[key](text)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"invalid value for {key}: {text!r}") from exc
    values.update({k: v for k, v in overrides.items() if v is not None})
    nu = values.pop("nu", None)
    grid = values.pop("nu_grid", None)
    if nu is not None and grid is not None:
        raise ConfigError("give either nu or nu_grid, not both")
    kwargs = {k: values[k] for k in ("beta", "n_max", "zeta0", "grid_points", "seed", "format", "K", "trials", "workers") if k in values}
    if "output" in values:
        kwargs["output_path"] = Path(values["output"])
    nus = grid if grid is not None else nu
    if nus is not None:
        kwargs["nu_list"] = tuple(nus)
    try:
        return RunConfig(cmd, **kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def format_float(x: float) -> str:
    """17 significant digits; nan and inf spelled out."""
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def _csv_cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format_float(float(v))
    return str(v)


def timestamp() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def to_csv(rows: list[dict], header_comment: str) -> str:
    """First line is a '#' comment (timestamp); everything after it is deterministic."""
    columns: list = []
    for row in rows:
        for key in row:
            if key not in columns:
                columns.append(key)
    out = [f"# {header_comment}", ",".join(columns)]
    for row in rows:
        out.append(",".join(_csv_cell(row.get(c, float("nan"))) for c in columns))
    return "\n".join(out) + "\n"


def to_json(obj, indent: int = 2, _level: int = 0) -> str:
    """JSON with floats at 17 significant digits; non-finite floats become null."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{to_json(str(k))}: {to_json(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if not seq:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in seq):
            return "[" + ", ".join(to_json(v) for v in seq) + "]"
        return "[\n" + ",\n".join(pad + to_json(v, indent, _level + 1) for v in seq) + "\n" + end + "]"
    if obj is None:
        return "null"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return format_float(x) if math.isfinite(x) else "null"
    if isinstance(obj, (str, Path, Enum)):
        import json

        return json.dumps(obj.value if isinstance(obj, Enum) else str(obj))
    raise TypeError(f"cannot serialize {type(obj).__name__}")


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------


def sweep(fn: Callable, items: Iterable, workers: int = 1) -> list:
    """Map fn over items; results come back in input order."""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _eigen_rows(args) -> list[dict]:
    cfg, nu = args
    p = cfg.params(nu)
    b, lb = p.b, abs(p.log_b)
    k = min(cfg.n_max + 1, 10)
    spec = ds.direct_spectrum(p, k=k, n_nodes=cfg.grid_points)
    rows = []
    for n in range(k):
        lam = float(spec.eigenvalues[n])
        alpha = float("nan")
        if b <= 1e-4 and n <= 4:
            alpha = matching.solve_eigenvalue(p, n).alpha_n
        o1 = matching.predicted_eigenvalue(p, n, 1)
        o2 = matching.predicted_eigenvalue(p, n, 2) if n <= 1 else float("nan")
        rows.append(
            {
                "beta": p.beta,
                "nu": nu,
                "b": b,
                "n": n,
                "lambda_direct": lam,
                "alpha_matched": alpha,
                "alpha_pred_o1": o1,
                "alpha_pred_o2": o2,
                "scaled_residual_o1": abs(lam - o1) / (2.0 * b) * lb**2,
                "scaled_residual_o2": abs(lam - o2) / (2.0 * b) * lb**3,
                "scaled_matched_deviation": abs(alpha - lam) / (2.0 * b) * lb**2,
                "eigen_residual": float(spec.residuals[n]),
                "zero_count": spec.zero_counts()[n],
            }
        )
    return rows


def _match_record(args) -> dict:
    cfg, nu = args
    p = cfg.params(nu)
    modes = []
    for n in range(min(cfg.n_max, 4) + 1):
        m = matching.solve_eigenvalue(p, n)
        modes.append(
            {
                "n": n,
                "alpha_bar": m.alpha_bar_n,
                "alpha_tilde": m.alpha_tilde_n,
                "alpha": m.alpha_n,
                "lambda_zeta": m.lambda_n,
                "beta0": m.beta0,
                "derivative_jump": m.derivative_jump,
                "mismatch_at_root": matching.mismatch_cross(p, n, m.alpha_bar_n),
                "zero_count": m.zero_count(),
                "predicted_alpha_o1": matching.predicted_eigenvalue(p, n, 1),
            }
        )
    return {"beta": p.beta, "nu": nu, "b": p.b, "zeta0": p.zeta0, "R0": p.R0, "z0": p.z0, "modes": modes}


def _profile_rows(args) -> list[dict]:
    cfg, nu = args
    p = cfg.params(nu)
    n_points = cfg.grid_points or 2001
    grid = log_grid(1e-4, 1e4, n_points + (1 - n_points % 2))
    j_max = min(cfg.n_max, 6)
    table = build_kernel_table(j_max, grid, check=False)
    spec = ds.direct_spectrum(p, k=min(cfg.n_max + 1, 10))
    r = grid.r
    _, _, psi0, _, _, _ = stationary_profiles(r)
    phis = []
    for vec in spec.eigenvectors:
        phis.append(np.interp(np.log(r), np.log(vec.nodes), vec.values, left=np.nan, right=np.nan))
    rows = []
    for i, ri in enumerate(r):
        row = {"nu": nu, "r": ri, "T_0": psi0[i]}
        for j in range(1, j_max + 1):
            row[f"T_{j}"] = table.T[j].values[i]
        for n, phi in enumerate(phis):
            row[f"phi_{n}"] = phi[i]
        rows.append(row)
    return rows


def _perturb_record(args) -> dict:
    cfg, nu = args
    p = cfg.params(nu)
    nu_t = nu * (1.0 + 1.0 / abs(math.log(nu)))
    spec = default_potential(nu, nu_t)
    rep = stability_report(p, spec, N=min(cfg.n_max, 4), n_nodes=cfg.grid_points)
    out = {"beta": p.beta, "b": p.b, "nu_tilde": nu_t, "admissibility": spec.admissibility}
    out.update(rep.as_dict())
    return out


def _coercivity_record(args) -> dict:
    cfg, nu = args
    b = cfg.beta * nu * nu
    t0 = time.perf_counter()
    rep = nr.coercivity_scan(b, K=cfg.K, trials=cfg.trials, seed=cfg.seed)
    out = {"nu": nu, "beta": cfg.beta}
    out.update(rep.as_dict())
    out["seconds"] = round(time.perf_counter() - t0, 1)
    return out


# ---------------------------------------------------------------------------
# Invariant suite
# ---------------------------------------------------------------------------


@dataclass
class Check:
    name: str
    passed: bool
    value: float
    bound: float
    detail: str = ""


@dataclass
class ValidationReport:
    checks: list = field(default_factory=list)

    def add(self, name: str, value: float, bound: float, passed: bool | None = None, detail: str = "") -> None:
        ok = bool(value <= bound) if passed is None else bool(passed)
        self.checks.append(Check(name, ok, float(value), float(bound), detail))

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def as_dict(self) -> dict:
        return {
            "passed": self.passed,
            "checks": [
                {"name": c.name, "passed": c.passed, "value": c.value, "bound": c.bound, "detail": c.detail}
                for c in self.checks
            ],
        }


def _special_function_checks(rep: ValidationReport) -> None:
    worst = 0.0
    for x in (0.3, 1.7, 4.2, 11.5, -0.4, -2.6):
        worst = max(worst, abs(gamma(x + 1.0) - x * gamma(x)) / abs(x * gamma(x)))
        worst = max(worst, abs(digamma(x + 1.0) - digamma(x) - 1.0 / x) / max(1.0, abs(digamma(x + 1.0))))
        worst = max(worst, abs(pochhammer(x, 3) - x * (x + 1) * (x + 2)) / max(1.0, abs(pochhammer(x, 3))))
    rep.add("special_function_recurrences", worst, 1e-12)
    worst = 0.0
    for theta in (0.93, -0.07, -1.04):
        for z in (0.01, 0.5, 3.0, 20.0):
            m, h = kummer_regular(theta, z), kummer_singular(theta, z)
            # Wronskian of M(theta,2,z) and U(theta,2,z): -Gamma(2)/Gamma(theta) z^-2 e^z
            w = m.value * h.derivative_z - m.derivative_z * h.value
            ref = -math.exp(z) / (gamma(theta) * z * z)
            worst = max(worst, abs(w - ref) / abs(ref))
    rep.add("kummer_wronskian", worst, 1e-10)


def _round_trip_checks(rep: ValidationReport) -> None:
    g = log_grid(1e-4, 1e4, 4001)
    r = g.r
    f = g.function(r**2 / (1 + r**2) ** 3)
    back = apply_A0(invert_A0(f))
    mask = (r > 1e-3) & (r < 1e3)
    rep.add("A0_round_trip", float(np.max(np.abs(back.values - f.values)[mask]) / np.max(np.abs(f.values))), 1e-7)
    z = z_grid(0.005, 40.0).r  # default density; finer grids are rounding-limited
    worst = 0.0
    for theta in (0.93, -0.07):
        fz = z * np.exp(-z)
        k = apply_kummer(theta, z, invert_kummer(theta, z, fz))
        worst = max(worst, float(np.max(np.abs(k - fz)[5:-5]) / np.max(np.abs(fz))))
    rep.add("kummer_round_trip", worst, 1e-7)
    # partial mass of U equals Q: -r dPhi_U/dr = int_0^r U s ds
    grid = log_grid(1e-4, 1e4, 4001)
    rr = grid.r
    _, dphi = nr.poisson_harmonic(grid, 0, 8.0 / (1.0 + rr**2) ** 2)
    Q = 4.0 * rr**2 / (1.0 + rr**2)
    rep.add("partial_mass_of_U", float(np.max(np.abs(-rr * dphi - Q)) / 4.0), 1e-10)


def _radial_checks(rep: ValidationReport, beta: float, zeta0: float) -> None:
    table = build_kernel_table(3, log_grid(1e-4, 1e6, 6001), fit_window=(0.01, 0.3))
    rep.add("kernel_dhat2", abs(table.fitted_dhat[2] / (1.0 / 16.0) - 1.0), 0.02)
    rep.add("kernel_dhat3", abs(table.fitted_dhat[3] / (-1.0 / 384.0) - 1.0), 0.05)
    rep.add("kernel_d2", abs(table.fitted_d[2] / table.d[2] - 1.0), 0.05)
    for nu in (1e-2, 1e-3, 1e-4, 1e-5):
        p = Parameters(beta=beta, nu=nu, zeta0=zeta0)
        res = ds.direct_spectrum(p, k=4)
        lb = abs(p.log_b)
        rep.add(f"eigen_residual_nu={nu:g}", float(res.residuals.max()), ds.RESIDUAL_TOL)
        off = res.gram - np.diag(np.diag(res.gram))
        orth = float(np.max(np.abs(off) / np.sqrt(np.outer(np.diag(res.gram), np.diag(res.gram)))))
        rep.add(f"orthogonality_nu={nu:g}", orth, 1e-8)
        for n in range(3):
            law = abs(res.eigenvalues[n] / (2 * p.b) - (1 - n + 1 / p.log_b)) * lb**2
            rep.add(f"eigen_law_n={n}_nu={nu:g}", float(law), 50.0)
        counts = res.zero_counts()
        rep.add(f"direct_zero_counts_nu={nu:g}", float(sum(c != n for n, c in enumerate(counts))), 0.0)
        if nu <= 1e-3:
            for n in range(3):
                m = matching.solve_eigenvalue(p, n)
                dev = abs(m.alpha_n - res.eigenvalues[n]) * lb**2 / (2 * p.b)
                rep.add(f"matched_vs_direct_n={n}_nu={nu:g}", float(dev), 20.0)
    p = Parameters(beta=beta, nu=1e-4, zeta0=0.5)
    bad = sum(matching.solve_eigenvalue(p, n).zero_count() != n for n in range(5))
    rep.add("glued_zero_counts", float(bad), 0.0)


def _perturbation_checks(rep: ValidationReport, beta: float) -> None:
    for nu in (1e-3, 1e-4):
        p = Parameters(beta=beta, nu=nu)
        spec = default_potential(nu, nu * (1.0 + 1.0 / abs(math.log(nu))))
        s = stability_report(p, spec, N=2)
        rep.add(f"perturbation_eigenvalue_nu={nu:g}", float(s.scaled_eigenvalue_deviation.max()), 50.0)
        rep.add(f"perturbation_eigenfunction_nu={nu:g}", float(s.scaled_eigenfunction_distance.max()), 50.0)


def _nonradial_checks(rep: ValidationReport, seed: int) -> None:
    minima = []
    for b in (1e-3, 1e-4, 1e-5):
        scan = nr.coercivity_scan(b, K=4, trials=100, seed=seed)
        minima.append(scan.minimum)
        rep.add(f"coercivity_b={b:g}", -scan.minimum, 0.0, passed=scan.minimum > 0)
    rep.add("coercivity_stability", min(minima) / max(minima), 0.5, passed=min(minima) >= 0.5 * max(minima))
    b = 1e-4
    grid = nr.default_grid(b)
    children = np.random.SeedSequence(seed).spawn(10)
    worst = 0.0
    for child in children:
        f = nr.project_out_translations(nr.random_field(b, 4, np.random.default_rng(child), grid))
        full = nr.quadratic_forms(f).full
        worst = max(worst, abs(full - nr.direct_form(f)) / abs(full))
    rep.add("forms_vs_direct_assembly", worst, 1e-5)
    r = grid.r
    smooth = nr.HarmonicField(b, grid, {(k, 1): r**k * np.exp(-(r**2) / 50.0) for k in (1, 2, 3)})
    rep.add("truncated_poisson_identity", nr.poisson_identity_residual(smooth), 1e-6)
    kernel = nr.HarmonicField(0.0, grid, {(1, 1): nr.kernel_profile(grid, nr.y_background(0.0))})
    m = nr.M_apply(kernel, truncated=False).profiles[(1, 1)]
    inner = r < 50.0
    rep.add("kernel_of_M", float(np.max(np.abs(m[inner] * nr.y_background(0.0).U(r[inner])))), 1e-6)


def validate(cfg: RunConfig) -> ValidationReport:
    rep = ValidationReport()
    _special_function_checks(rep)
    _round_trip_checks(rep)
    _radial_checks(rep, cfg.beta, cfg.zeta0)
    _perturbation_checks(rep, cfg.beta)
    _nonradial_checks(rep, cfg.seed)
    return rep


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RunResult:
    status: int
    text: str
    payload: object = None


def run(cfg: RunConfig) -> RunResult:
    """Execute one command; numerical exceptions propagate to the caller."""
    items = [(cfg, nu) for nu in cfg.nu_list]
    header = f"kslab {cfg.command.value} generated {timestamp()}"
    if cfg.command in TABULAR:
        fn = _eigen_rows if cfg.command is Command.EIGEN_TABLE else _profile_rows
        rows = [row for block in sweep(fn, items, cfg.workers) for row in block]
        if cfg.format == "csv":
            return RunResult(EXIT_OK, to_csv(rows, header), rows)
        return RunResult(EXIT_OK, to_json({"generated": timestamp(), "rows": rows}) + "\n", rows)
    if cfg.command is Command.VALIDATE:
        rep = validate(cfg)
        body = {"generated": timestamp(), **rep.as_dict()}
        return RunResult(EXIT_OK if rep.passed else EXIT_INVARIANT, to_json(body) + "\n", rep)
    fn = {Command.MATCH: _match_record, Command.PERTURB: _perturb_record, Command.COERCIVITY: _coercivity_record}[cfg.command]
    records = sweep(fn, items, cfg.workers)
    return RunResult(EXIT_OK, to_json({"generated": timestamp(), "command": cfg.command, "results": records}) + "\n", records)


NUMERICAL_ERRORS = (ArithmeticError, RuntimeError, AccuracyError, FloatingPointError, np.linalg.LinAlgError)
