"""Command line entry point: ``signreg COMMAND CONFIG [options]``.

CONFIG is a TOML file or the name of a bundled config.  Exit status is 0 when
every check passes, 2 when checks ran and found violations, 1 on errors.
"""

from __future__ import annotations

import sys

import click

from .config import BUNDLED, load_config
from .errors import SignRegError
from .harness import run


def _common(fn):
    opts = [
        click.option("--mesh", type=click.IntRange(2, 65536), help="Number of elements."),
        click.option("--grid", type=click.IntRange(2, 4097), help="Kernel grid size."),
        click.option("--seeds", type=click.IntRange(1), help="Random loads per sign-change count."),
        click.option("--seed", type=click.IntRange(0), help="First seed."),
        click.option("--order", type=click.IntRange(1), help="Maximal compound-minor order."),
        click.option("--out", type=click.Path(file_okay=False), help="Directory for report.json and artifacts."),
    ]
    for opt in reversed(opts):
        fn = opt(fn)
    return click.argument("config")(fn)


def _execute(command: str, config: str, **overrides):
    try:
        problem, cfg = load_config(config)
        cfg = cfg.with_overrides(command=command, **overrides)
    except (SignRegError, ValueError, OSError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    report = run(command, problem, cfg)
    if cfg.out:
        path = report.write(cfg.out)
        click.echo(f"report written to {path}", err=True)
    click.echo(report.to_json())
    if report.error:
        click.echo(f"error: {report.error}", err=True)
    sys.exit(report.exit_code)


class _Group(click.Group):
    """Usage errors exit with 1 (2 is reserved for checks that found violations)."""

    def main(self, args=None, prog_name=None, complete_var=None, standalone_mode=True, **extra):
        try:
            return super().main(args, prog_name, complete_var, standalone_mode=False, **extra)
        except click.exceptions.Exit as exc:
            sys.exit(exc.exit_code)
        except click.ClickException as exc:
            exc.show()
            sys.exit(1)
        except click.Abort:
            click.echo("aborted", err=True)
            sys.exit(1)


@click.group(cls=_Group, epilog=f"Bundled configs: {', '.join(BUNDLED)}")
@click.version_option(package_name="artifact")
def main():
    """Sign-regularity checks for fourth-order operators."""


def _simple(name, help_text):
    @main.command(name, help=help_text)
    @_common
    def cmd(config, **kw):
        _execute(name, config, **kw)
    return cmd


_simple("check", "Validate the problem, factorize and classify the kernel sign.")
_simple("green", "Sample the Green kernel (kernel.csv with --out).")
_simple("signs", "Sign-change verdict for one random load.")
_simple("suite", "Randomized sign non-decrease suite, preceded by kernel positivity.")
_simple("certificate", "Interlacing certificates for random loads, independently re-checked.")
_simple("tn", "Compound minors of the kernel on an interior grid.")
_simple("refine", "G(t, s) under dyadic refinement with observed orders.")
_simple("residuals", "Strong-form point-condition residuals for a constant load.")


@main.command("transform")
@_common
@click.option("--mode", type=click.Choice(["variable", "multiplier"]), help="Which reduction to apply.")
def transform(config, **kw):
    """Conjugation residuals of a reduction under refinement."""
    _execute("transform", config, **kw)


@main.command("restrict")
@_common
@click.option("--eps", type=click.FloatRange(0.0, 0.5, min_open=True, max_open=True), help="Restriction margin.")
def restrict(config, **kw):
    """Kernel positivity and sign counts on [eps, 1 - eps]."""
    _execute("restrict", config, **kw)


if __name__ == "__main__":  # pragma: no cover
    main()
