"""CLI for the dynamical Yang-Baxter verification suites."""

import json
import logging
import sys

import click

from dynbaxter import config
from dynbaxter.exceptions import DynBaxterError
from dynbaxter.models import ModelVariant, SuiteConfig, parse_complex
from dynbaxter.suites import PAIRS, THETA_KINDS, default_params, export_fiber, run_suite, theta_eval

logger = logging.getLogger("dynbaxter.cli")


class ComplexType(click.ParamType):
    """Numbers such as 0.3, 1.2j or 0.3+0.1i."""

    name = "complex"

    def convert(self, value, param, ctx):
        try:
            return parse_complex(value)
        except DynBaxterError as e:
            self.fail(str(e), param, ctx)


COMPLEX = ComplexType()
MODELS = click.Choice([v.value for v in ModelVariant])


def model_options(f):
    f = click.option("--shift", type=float, default=None, help="Shift b of an unrestricted face window")(f)
    f = click.option("--level", type=int, default=None, help="Level L of the restricted chain")(f)
    f = click.option("--nome", type=COMPLEX, default=None, help="Nome p of H and Theta")(f)
    f = click.option("--tau", type=COMPLEX, default=None, help="Modular parameter of the bracket")(f)
    f = click.option("--model", type=MODELS, default=None, help="Spectral operator family")(f)
    return f


def suite_options(f):
    f = click.option("--input", "input_path", type=click.Path(exists=True), default=None, help="JSON input file")(f)
    f = click.option("--out", type=click.Path(), default=None, help="Write the JSON report here")(f)
    f = click.option("--seed", type=int, default=config.SEED, help="Sampling seed")(f)
    f = click.option("--samples", type=int, default=config.SAMPLES, help="Random points per check")(f)
    f = click.option("--tol", type=float, default=config.TOLERANCE, help="Residual tolerance")(f)
    f = click.option("--cells", default=None, help='Cell system: "ad", "e6" or a cell JSON file')(f)
    f = click.option("--pair", type=click.Choice(PAIRS), default=None, help="Vertex-face model pair")(f)
    return model_options(f)


@click.group()
@click.option("--log-level", default=config.LOG_LEVEL, help="Logging level")
def cli(log_level):
    """Dynamical Yang-Baxter operators: builders and numerical verifiers."""
    logging.basicConfig(level=getattr(logging, log_level.upper(), logging.INFO), stream=sys.stderr)


def _run(suite: str, model, pair, cells, tol, samples, seed, tau, nome, level, shift, out, input_path):
    click.echo(f"🔍 Running {suite} suite...", err=True)
    try:
        variant = ModelVariant(model) if model else None
        cfg = SuiteConfig(
            suite=suite,
            model=variant,
            pair=pair,
            cells=cells,
            params=default_params(variant, tau, nome, level, shift),
            tolerance=tol,
            samples=samples,
            seed=seed,
            out=out,
            input_path=input_path,
        )
        report = run_suite(cfg)
    except (DynBaxterError, ValueError) as e:
        logger.error(f"{suite} failed: {e}")
        click.echo(f"❌ {suite} failed: {e}", err=True)
        sys.exit(2)

    if not out:
        click.echo(json.dumps(report.to_json_dict(), indent=2))
    for check in report.checks:
        mark = "✅" if check.passed else "❌"
        click.echo(f"  {mark} {check.name}: {check.residual:.3e} (tol {check.tol:.0e})", err=True)
    if report.passed:
        click.echo(f"🎉 {suite} passed ({report.samples} samples, {report.resamples} resamples)", err=True)
    else:
        click.echo(f"❌ {suite} did not pass", err=True)
        sys.exit(1)


def _suite_command(name: str, help_text: str):
    @suite_options
    def command(**kwargs):
        _run(name, **kwargs)

    command.__doc__ = help_text
    return cli.command(name=name)(command)


_suite_command("dybe", "Dynamical Yang-Baxter equation at random spectral points.")
_suite_command("ybe", "Ordinary Yang-Baxter equation (any one-object model).")
_suite_command("inversion", "Unitarity R(z)R(-z) = id on every source fiber.")
_suite_command("symmetric", "Table symmetry under path reversal and inversion.")
_suite_command("rcc", "Intertwining relation of a vertex-face pair (--pair).")
_suite_command("rdd", "Transposed intertwining relation of a pair.")
_suite_command("trace", "Transfer-matrix relation of a pair, or commuting transfer matrices of a model.")
_suite_command("weight-zero", "Weight-zero relation of a cell-twist intertwiner.")
_suite_command("twist-unique", "Gauge twist through the identity connecting system.")
_suite_command("twist-quasi", "Quasi-unique twist of a cell system (--cells).")
_suite_command("cell", "Cell twist equations, the twisted dynamical YBE and the weight-zero implication.")
_suite_command("drinfeld", "Drinfeld twist on a one-object groupoid (builtin example or --input).")
_suite_command("dyn-twist", "Dynamical twist pair (identity pair on SOS, or --input).")


@cli.command()
@model_options
@click.option("--object", "obj", required=True, help="Base object of the source fiber")
@click.option("--z", type=COMPLEX, default="0", help="Spectral parameter")
@click.option("--out", type=click.Path(), default=None, help="Write the matrix dump here")
def export(model, tau, nome, level, shift, obj, z, out):
    """Dump the source-fiber matrix of R(z) at one object."""
    try:
        variant = ModelVariant(model) if model else None
        dump = export_fiber(default_params(variant, tau, nome, level, shift), obj, z)
    except (DynBaxterError, ValueError) as e:
        click.echo(f"❌ Export failed: {e}", err=True)
        sys.exit(2)
    text = json.dumps(dump, indent=2)
    if out:
        with open(out, "w") as fh:
            fh.write(text)
        click.echo(f"✅ Wrote {len(dump['paths'])}x{len(dump['paths'])} fiber matrix to {out}", err=True)
    else:
        click.echo(text)


@cli.command(name="theta-eval")
@model_options
@click.option("--kind", type=click.Choice(THETA_KINDS), default="theta", help="Function to evaluate")
@click.argument("points", nargs=-1, type=COMPLEX, required=True)
def theta_eval_command(model, tau, nome, level, shift, kind, points):
    """Evaluate a theta function or bracket at the given points."""
    try:
        variant = ModelVariant(model) if model else None
        params = default_params(variant, tau, nome, level, shift)
        values = [theta_eval(kind, z, params) for z in points]
    except (DynBaxterError, ValueError) as e:
        click.echo(f"❌ Evaluation failed: {e}", err=True)
        sys.exit(2)
    for z, value in zip(points, values):
        click.echo(json.dumps({"z": [z.real, z.imag], kind: [value.real, value.imag]}))


if __name__ == "__main__":
    cli()
