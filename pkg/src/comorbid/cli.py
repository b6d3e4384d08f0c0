"""Command line: ``comorbid analyze | diff | simulate``.

Exit codes: 1 for unreadable or inconsistent inputs, 2 for bad
configuration, 3 for infeasible simulations or imputations.
"""

from __future__ import annotations

import functools
import logging
import sys

import click

from .errors import (
    CensoringInfeasibleError,
    ConfigError,
    DomainError,
    InfeasibleEffectError,
    ParseError,
)
from .ingest import PopulationPair, read_cohort
from .multiplicity import NullGrid
from .pipeline import (
    AnalysisConfig,
    analyze_differential,
    analyze_population,
    write_differential_reports,
    write_population_reports,
)
from .synth import configs_from_dict, default_simulation_config, load_simulation_config, simulate, write_outputs

log = logging.getLogger("comorbid")

EXIT_PARSE = 1
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3


def _fail(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def handle_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ConfigError as exc:
            _fail(EXIT_CONFIG, str(exc))
        except (InfeasibleEffectError, CensoringInfeasibleError) as exc:
            _fail(EXIT_INFEASIBLE, str(exc))
        except (ParseError, DomainError, OSError, UnicodeDecodeError) as exc:
            _fail(EXIT_PARSE, str(exc))
    return wrapper


def _thresholds(ctx, param, value):
    if value is None:
        return None
    try:
        parts = tuple(float(x) for x in value.split(","))
    except ValueError:
        raise click.BadParameter("expected three comma-separated numbers, e.g. 3,5,10") from None
    if len(parts) != 3:
        raise click.BadParameter("expected exactly three thresholds")
    return parts


def analysis_options(fn):
    options = [
        click.option("--alpha", type=float, default=0.05, show_default=True, envvar="COMORBID_ALPHA",
                     help="FDR / FCR level."),
        click.option("--mu", type=float, default=3.0, show_default=True, envvar="COMORBID_MU",
                     help="Selection-bias null odds ratio."),
        click.option("--samples", type=int, default=100, show_default=True, envvar="COMORBID_SAMPLES",
                     help="Imputation samples per term."),
        click.option("--seed", type=int, default=0, show_default=True, envvar="COMORBID_SEED"),
        click.option("--width", type=int, default=5, show_default=True, envvar="COMORBID_WIDTH",
                     help="Half-width of the censoring interval around reported counts."),
        click.option("--grid-lo", type=float, default=0.25, show_default=True, envvar="COMORBID_GRID_LO",
                     help="Smallest null odds ratio scanned."),
        click.option("--grid-hi", type=float, default=4096.0, show_default=True, envvar="COMORBID_GRID_HI",
                     help="Largest null odds ratio scanned."),
        click.option("--grid-step", type=float, default=0.01, show_default=True, envvar="COMORBID_GRID_STEP",
                     help="Grid spacing on the log2 scale."),
        click.option("--thresholds", default="3,5,10", show_default=True, callback=_thresholds,
                     envvar="COMORBID_THRESHOLDS", help="Minor,Moderate,High odds-ratio levels."),
        click.option("--out", "out_dir", type=click.Path(file_okay=False), default="out", show_default=True,
                     envvar="COMORBID_OUT"),
        click.option("--strict", type=click.BOOL, default=True, show_default=True, envvar="COMORBID_STRICT",
                     help="Reject counts that are not multiples of ten (false: round them)."),
        click.option("--jobs", type=int, default=1, show_default=True, envvar="COMORBID_JOBS",
                     help="Worker processes for imputation."),
    ]
    for option in reversed(options):
        fn = option(fn)
    return fn


def build_config(alpha, mu, samples, seed, width, grid_lo, grid_hi, grid_step, thresholds, jobs) -> AnalysisConfig:
    from .differential import DIFF_GRID

    try:
        grid = NullGrid.from_odds(grid_lo, grid_hi, grid_step)
        diff_grid = NullGrid(DIFF_GRID.lo, DIFF_GRID.hi, grid_step)
    except DomainError as exc:
        raise ConfigError(str(exc)) from None
    return AnalysisConfig(alpha=alpha, mu=mu, samples=samples, seed=seed, width=width, grid=grid,
                          diff_grid=diff_grid, thresholds=thresholds, jobs=jobs)


def _load_pair(base_path, cond_path, strict) -> PopulationPair:
    return PopulationPair(read_cohort(base_path, strict), read_cohort(cond_path, strict))


@click.group()
@click.option("-v", "--verbose", count=True, help="Repeat for debug output.")
def main(verbose):
    """Co-morbidity mining over rounded aggregate cohort exports."""
    level = logging.WARNING - 10 * min(verbose, 2)
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")


@main.command()
@click.argument("base_csv", type=click.Path(dir_okay=False))
@click.argument("condition_csv", type=click.Path(dir_okay=False))
@analysis_options
@handle_errors
def analyze(base_csv, condition_csv, out_dir, strict, **opts):
    """Rank terms co-morbid with the condition in one population."""
    config = build_config(**opts)
    pair = _load_pair(base_csv, condition_csv, strict)
    analysis = analyze_population(pair, config)
    if not analysis.results:
        log.warning("no valid terms; writing empty results")
    for path in write_population_reports(analysis, config, out_dir):
        log.info("wrote %s", path)


@main.command()
@click.argument("senior_base", type=click.Path(dir_okay=False))
@click.argument("senior_condition", type=click.Path(dir_okay=False))
@click.argument("bg_base", type=click.Path(dir_okay=False))
@click.argument("bg_condition", type=click.Path(dir_okay=False))
@analysis_options
@handle_errors
def diff(senior_base, senior_condition, bg_base, bg_condition, out_dir, strict, **opts):
    """Differential co-morbidity of a target population against a background."""
    config = build_config(**opts)
    senior = _load_pair(senior_base, senior_condition, strict)
    bg = _load_pair(bg_base, bg_condition, strict)
    result = analyze_differential(senior, bg, config)
    n_conf = sum(r.confident for r in result.results.values())
    log.info("%d of %d comparable terms differentially co-morbid", n_conf, len(result.results))
    for path in write_differential_reports(result, config, out_dir):
        log.info("wrote %s", path)


@main.command("simulate")
@click.argument("config_file", required=False, type=click.Path(dir_okay=False, exists=True))
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default="synthetic", show_default=True,
              envvar="COMORBID_OUT")
@click.option("--seed", type=int, default=None, envvar="COMORBID_SEED", help="Override the config seed.")
@click.option("--width", type=int, default=None, envvar="COMORBID_WIDTH",
              help="Rounding half-width: 5 rounds to tens, 0 writes exact counts.")
@click.option("--stochastic/--deterministic", default=None, help="Override the config's generation mode.")
@handle_errors
def simulate_cmd(config_file, out_dir, seed, width, stochastic):
    """Write synthetic cohort exports with planted effects and a truth ledger."""
    raw = load_simulation_config(config_file) if config_file else default_simulation_config()
    if stochastic is not None:
        raw = {**raw, "stochastic": stochastic}
    populations = [simulate(cfg) for cfg in configs_from_dict(raw, seed=seed, width=width)]
    for path in write_outputs(populations, out_dir):
        log.info("wrote %s", path)


if __name__ == "__main__":
    main()
