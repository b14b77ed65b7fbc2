# Copyright (c) 2023, Semiotic AI, Inc.  All rights reserved.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Command-line interface: ``factorial-screen analyze|simulate|generate``."""

import dataclasses
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import click
import numpy as np

from .datafiles import write_dataset
from .design import Heredity
from .errors import FactorialError
from .misc import to_jsonable
from .screening import ScreeningConfig
from .simulation import (
    DGPS,
    DesignSpec,
    SimulationConfig,
    assign,
    gen_science_table,
    reveal,
    run_monte_carlo,
)
from .tools import REPORT_FORMATS, AnalysisRequest, parse_targets, run_analysis

logger = logging.getLogger(__name__)


def _resolve_seed(seed: Optional[int]) -> int:
    if seed is not None:
        return seed
    seed = int(np.random.SeedSequence().entropy % (1 << 63))
    logger.info("no seed given, using %d", seed)
    return seed


@click.group()
@click.option(
    "-v", "--verbose", count=True, help="Log progress (-v) or debug details (-vv)."
)
def cli(verbose: int):
    """Screening and post-screening inference for 2^K factorial experiments."""

    level = {0: logging.WARNING, 1: logging.INFO}.get(verbose, logging.DEBUG)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


@cli.command()
@click.argument(
    "input_path", metavar="INPUT", type=click.Path(dir_okay=False, path_type=Path)
)
@click.option(
    "--levels", "-D", default=2, show_default=True, help="Deepest interaction level D."
)
@click.option(
    "--alpha",
    default="0.05",
    show_default=True,
    help="Significance level, or one per level.",
)
@click.option(
    "--heredity",
    type=click.Choice([mode.value for mode in Heredity]),
    default="strong",
    show_default=True,
)
@click.option(
    "--s-step", default="t", show_default=True, help="t, lasso or lasso:<lambda>."
)
@click.option(
    "--strategy",
    default="full",
    show_default=True,
    help="full, under:<d*> or over:<d*>.",
)
@click.option("--covariance", type=click.Choice(["direct", "ehw"]), default="direct")
@click.option("--alpha-ci", default=0.05, show_default=True, type=float)
@click.option(
    "--target",
    "targets",
    multiple=True,
    help="arm:<z>, contrast:<k,..>, effect:<k,..>, custom:<f,..> or "
    "best_arm[:K0=..,eta=..].",
)
@click.option("--seed", type=int, default=None, help="Recorded in the report.")
@click.option(
    "--output", "-o", type=click.Path(dir_okay=False, path_type=Path), default=None
)
@click.option("--format", "fmt", type=click.Choice(REPORT_FORMATS), default="json")
def analyze(
    input_path: Path,
    levels: int,
    alpha: str,
    heredity: str,
    s_step: str,
    strategy: str,
    covariance: str,
    alpha_ci: float,
    targets: Sequence[str],
    seed: Optional[int],
    output: Optional[Path],
    fmt: str,
):
    """Screen effects in INPUT (CSV with header y,z1,...,zK) and estimate targets."""

    config = ScreeningConfig.from_options(
        levels, alpha, heredity, s_step, strategy, alpha_ci, covariance
    )
    request = AnalysisRequest(
        input_path,
        config,
        tuple(parse_targets(targets)),
        output,
        fmt,
        _resolve_seed(seed),
    )
    stream = click.get_text_stream("stdout")
    run_analysis(request, stream)


@cli.command()
@click.argument(
    "config_path", metavar="CONFIG", type=click.Path(dir_okay=False, path_type=Path)
)
@click.option("--seed", type=int, default=None, help="Overrides the config seed.")
@click.option(
    "--jobs", "-j", type=int, default=None, help="Overrides the config n_jobs."
)
@click.option(
    "--output",
    "-o",
    type=click.Path(dir_okay=False, path_type=Path),
    default=None,
    help="Metrics CSV; stdout when omitted.",
)
@click.option(
    "--manifest",
    type=click.Path(dir_okay=False, path_type=Path),
    default=None,
    help="Run manifest JSON; defaults to <output>.manifest.json.",
)
@click.option("--progress/--no-progress", default=False)
def simulate(
    config_path: Path,
    seed: Optional[int],
    jobs: Optional[int],
    output: Optional[Path],
    manifest: Optional[Path],
    progress: bool,
):
    """Run the Monte Carlo study described by the YAML or JSON file CONFIG."""

    config = SimulationConfig.load(config_path)
    overrides = {"seed": _resolve_seed(seed if seed is not None else config.seed)}
    if jobs is not None:
        overrides["n_jobs"] = jobs
    config = dataclasses.replace(config, **overrides)

    result = run_monte_carlo(config, progress=progress)

    if output is None:
        result.table.to_csv(
            click.get_text_stream("stdout"), index=False, lineterminator="\n"
        )
    else:
        result.table.to_csv(output, index=False, lineterminator="\n")
        logger.info("wrote %d metric rows to %s", len(result.table), output)

    if manifest is None and output is not None:
        manifest = output.with_name(output.name + ".manifest.json")
    if manifest is not None:
        with open(manifest, "w", encoding="utf-8") as handle:
            json.dump(to_jsonable(result.manifest), handle, indent=2)
            handle.write("\n")
    else:
        click.echo(f"seed: {result.manifest['seed']}", err=True)


@cli.command()
@click.option("--factors", "-K", "n_factors", type=int, default=8, show_default=True)
@click.option("--n0", type=int, default=8, show_default=True, help="Units per arm.")
@click.option("--effect-size", type=float, default=0.4, show_default=True)
@click.option(
    "--active", type=int, default=None, help="Factors with nonzero effects [min(5, K)]."
)
@click.option("--dgp", type=click.Choice(DGPS), default="shifted_exponential")
@click.option("--noise-scale", type=float, default=1.0, show_default=True)
@click.option("--seed", type=int, default=None)
@click.option(
    "--output", "-o", type=click.Path(dir_okay=False, path_type=Path), required=True
)
@click.option(
    "--truth",
    type=click.Path(dir_okay=False, path_type=Path),
    default=None,
    help="Write the science-table truth (means, effects, true model) as JSON.",
)
def generate(
    n_factors: int,
    n0: int,
    effect_size: float,
    active: Optional[int],
    dgp: str,
    noise_scale: float,
    seed: Optional[int],
    output: Path,
    truth: Optional[Path],
):
    """Simulate one completely randomized experiment and write it as CSV."""

    seed = _resolve_seed(seed)
    config = SimulationConfig(
        n_factors=n_factors,
        n0_grid=(n0,),
        effect_sizes=(effect_size,),
        active=active,
        dgp=dgp,
        noise_scale=noise_scale,
        seed=seed,
    )
    design = DesignSpec.uniform(n_factors, n0, seed)
    rng = np.random.default_rng(seed)

    science = gen_science_table(
        effect_size * config.base_means(), design.n_units, rng, dgp, noise_scale
    )
    dataset = reveal(science, assign(design, rng))
    write_dataset(dataset, output)
    logger.info("wrote %d units to %s", dataset.n_units, output)

    if truth is not None:
        record = {
            "seed": seed,
            "means": science.means,
            "effects": science.effects,
            "true_model": science.true_model().to_list(),
        }
        with open(truth, "w", encoding="utf-8") as handle:
            json.dump(to_jsonable(record), handle, indent=2)
            handle.write("\n")


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Run the CLI and map failures to exit codes.

    0 success, 2 invalid input or usage, 3 too few replicated arms for the
    requested inference, 4 anything else.
    """

    try:
        result = cli.main(
            args=argv, prog_name="factorial-screen", standalone_mode=False
        )
    except click.exceptions.Abort:
        click.echo("Aborted!", err=True)
        return 2
    except click.ClickException as err:
        err.show()
        return 2
    except FactorialError as err:
        click.echo(f"error: {err}", err=True)
        return err.exit_code
    except Exception:  # pylint: disable=broad-except
        logger.exception("internal error")
        return 4
    return result if isinstance(result, int) else 0


if __name__ == "__main__":
    sys.exit(main())
