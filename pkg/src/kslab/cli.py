"""Command-line front end (``kslab``)."""

from __future__ import annotations

import sys
import traceback
from pathlib import Path

import click

from . import cli_io
from .cli_io import EXIT_CONFIG, EXIT_NUMERICAL, ConfigError


def _common(fn):
    options = [
        click.option("--config", "config_path", type=click.Path(path_type=Path), help="key = value file"),
        click.option("--beta", type=float),
        click.option("--nu", type=str, help="one value or a comma-separated list"),
        click.option("--nu-grid", type=str, help="'a:b:count', log-spaced"),
        click.option("--n-max", type=int),
        click.option("--zeta0", type=float),
        click.option("--grid-points", type=int),
        click.option("--seed", type=int),
        click.option("--output", type=click.Path(path_type=Path)),
        click.option("--format", "fmt", type=str, help="csv or json"),
        click.option("--trials", type=int),
        click.option("-K", "--harmonics", "K", type=int),
        click.option("--workers", type=int),
    ]
    for opt in reversed(options):
        fn = opt(fn)
    return fn


def _execute(command: str, config_path, nu, nu_grid, fmt, output, **flags) -> None:
    file_values = cli_io.read_config_file(config_path) if config_path else {}
    overrides = dict(flags)
    overrides["format"] = fmt
    overrides["output"] = output
    if nu is not None:
        overrides["nu"] = cli_io._parse_nu_list(nu)
        file_values.pop("nu_grid", None)
    if nu_grid is not None:
        overrides["nu_grid"] = cli_io.parse_nu_grid(nu_grid)
        file_values.pop("nu", None)
    cfg = cli_io.build_config(command, file_values, overrides)
    try:
        result = cli_io.run(cfg)
    except cli_io.NUMERICAL_ERRORS as exc:
        diag = (cfg.output_path.with_suffix(cfg.output_path.suffix + ".diag")) if cfg.output_path else Path("kslab-failure.diag")
        diag.write_text("".join(traceback.format_exception(type(exc), exc, exc.__traceback__)))
        click.echo(f"numerical failure: {exc} (diagnostics in {diag})", err=True)
        sys.exit(EXIT_NUMERICAL)
    if cfg.output_path:
        cfg.output_path.write_text(result.text)
    else:
        click.echo(result.text, nl=False)
    sys.exit(result.status)


@click.group()
def cli() -> None:
    """Spectral computations for the radial and non-radial linearized problems."""


def _make(name: str, help_text: str):
    @cli.command(name=name, help=help_text)
    @_common
    def command(**kwargs):
        _execute(name, **kwargs)

    return command


_make("eigen-table", "Direct and matched eigenvalues with the asymptotic predictions.")
_make("match", "Matched-asymptotics root diagnostics per mode.")
_make("profiles", "Kernel profiles T_j and eigenfunctions phi_n against r.")
_make("perturb", "Eigenvalue and eigenfunction stability under the default perturbation.")
_make("coercivity", "Projected Rayleigh quotient statistics of the non-radial operator.")
_make("validate", "Run the invariant suite; exit 3 if any check fails.")


def main(argv=None) -> None:
    """Console entry; maps usage and configuration errors to exit status 1."""
    try:
        cli.main(args=argv, standalone_mode=False)
    except (click.UsageError, ConfigError, ValueError) as exc:
        message = exc.format_message() if isinstance(exc, click.ClickException) else str(exc)
        click.echo(f"invalid configuration: {message}", err=True)
        sys.exit(EXIT_CONFIG)
    except click.exceptions.Abort:
        sys.exit(EXIT_CONFIG)
    sys.exit(0)


if __name__ == "__main__":
    main()
