"""
Command-line front end
Presets, config-file parsing and CSV / manifest emission
"""

import argparse
import sys
import time
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Sequence, Tuple

import structlog
from dotenv import dotenv_values
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from sselab.api.presets import PRESETS, preset_values
from sselab.core.config import settings
from sselab.core.exceptions import ConfigurationError, NumericalFailureError, SSELabError
from sselab.core.logging import configure_logging
from sselab.numerics.noise import CovarianceSpec
from sselab.numerics.observables import OBSERVABLES
from sselab.numerics.profiles import potential_profile
from sselab.numerics.scalar_oracle import ScalarProblem, moment_table
from sselab.numerics.schemes import ProblemSpec, Stepper
from sselab.numerics.spectral import GridSpec
from sselab.services.montecarlo import EnsembleConfig, MonteCarloEngine, drift_flag
from sselab.services.results import (
    RunManifest,
    git_describe,
    utc_now,
    write_manifest,
    write_mass_defect_csv,
    write_scalar_csv,
    write_strong_error_csv,
    write_trace_csv,
)

logger = structlog.get_logger(__name__)

SUBCOMMANDS = ("strong-error", "trace", "scalar-test")

EXIT_OK, EXIT_NUMERICAL, EXIT_CONFIG = 0, 1, 2

_REQUIRED = {
    "strong-error": ("modes", "samples", "horizon", "steps", "reference_step", "exponent", "schemes"),
    "trace": ("modes", "samples", "horizon", "steps", "exponent", "schemes", "observable"),
    "scalar-test": ("a", "b", "k", "n_steps"),
}


class RunConfig(BaseModel):
    """Fully resolved run description; unknown keys are rejected"""

    model_config = ConfigDict(extra="forbid", frozen=True)

    subcommand: Literal["strong-error", "trace", "scalar-test"]
    preset: Optional[str] = None
    scale: Literal["desk", "paper"] = "desk"

    # Ensemble
    modes: Optional[int] = Field(default=None, ge=2)
    samples: Optional[int] = Field(default=None, ge=2)
    seed: int = Field(default=0, ge=0, lt=2 ** 64)
    horizon: Optional[float] = Field(default=None, gt=0)
    steps: Optional[Tuple[float, ...]] = None
    reference_step: Optional[float] = Field(default=None, gt=0)
    reference_scheme: str = "SEXP"
    schemes: Optional[Tuple[str, ...]] = None
    n_jobs: Optional[int] = Field(default=None, ge=1)

    # Problem
    exponent: Optional[float] = None
    symmetric: bool = False
    initial: str = "zero"
    potential: str = "none"
    noise: Literal["additive", "multiplicative"] = "additive"
    observable: Optional[str] = None

    # Scalar test equation
    a: Optional[float] = None
    b: Optional[float] = Field(default=None, ge=0)
    m0: float = Field(default=0.0, ge=0)
    k: Optional[float] = Field(default=None, gt=0)
    n_steps: Optional[int] = Field(default=None, ge=0)

    output_dir: Optional[str] = None

    @field_validator("steps", "schemes", mode="before")
    @classmethod
    def _split_lists(cls, value):
        if isinstance(value, str):
            return tuple(item.strip() for item in value.split(",") if item.strip())
        return value

    @field_validator("schemes")
    @classmethod
    def _upper(cls, value):
        return None if value is None else tuple(s.upper() for s in value)

    @field_validator("observable")
    @classmethod
    def _known_observable(cls, value):
        if value is not None and value not in OBSERVABLES:
            raise ValueError(f"expected one of {OBSERVABLES}")
        return value


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sselab",
        description="Monte Carlo experiments for stochastic Schrödinger equations",
    )
    parser.add_argument("subcommand", nargs="?", choices=SUBCOMMANDS)
    parser.add_argument("--preset", help="named experiment, see --list-presets")
    parser.add_argument("--scale", choices=("desk", "paper"))
    parser.add_argument("--config", type=Path, help="flat key=value file; flags override it")
    parser.add_argument("--list-presets", action="store_true")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override any config key")
    parser.add_argument("--modes", type=int)
    parser.add_argument("--samples", type=int)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--horizon", type=float)
    parser.add_argument("--steps", help="comma-separated step sizes, decreasing")
    parser.add_argument("--reference-step", type=float, dest="reference_step")
    parser.add_argument("--reference-scheme", dest="reference_scheme")
    parser.add_argument("--schemes", help="comma-separated, e.g. SEXP,MP,BEM")
    parser.add_argument("--exponent", type=float, help="λ_n = 1/(1+|n|^exponent)")
    parser.add_argument("--initial")
    parser.add_argument("--potential")
    parser.add_argument("--noise", choices=("additive", "multiplicative"))
    parser.add_argument("--observable", choices=OBSERVABLES)
    parser.add_argument("--output-dir", dest="output_dir")
    parser.add_argument("--n-jobs", type=int, dest="n_jobs")
    return parser


_FLAG_KEYS = ("preset", "scale", "modes", "samples", "seed", "horizon", "steps", "reference_step",
              "reference_scheme", "schemes", "exponent", "initial", "potential", "noise",
              "observable", "output_dir", "n_jobs")


def _parse_overrides(pairs: Sequence[str]) -> Dict[str, str]:
    overrides = {}
    for pair in pairs:
        key, sep, value = pair.partition("=")
        if not sep or not key.strip():
            raise ConfigurationError(f"override '{pair}' is not of the form key=value", key=pair)
        overrides[key.strip()] = value.strip()
    return overrides


def _first_error_key(error: ValidationError) -> str:
    details = error.errors()
    return ".".join(str(part) for part in details[0]["loc"]) if details else "?"


def parse_and_validate(argv: Optional[Sequence[str]] = None,
                       config_file: Optional[Path] = None) -> RunConfig:
    """Merge preset, config file, flags and --set overrides into a checked RunConfig"""
    args = _build_parser().parse_args(argv)

    explicit: Dict[str, Any] = {}
    path = args.config or config_file
    if path is not None:
        if not Path(path).is_file():
            raise ConfigurationError(f"config file '{path}' not found", key="config")
        explicit.update({k: v for k, v in dotenv_values(path).items() if v is not None})
    explicit.update({key: getattr(args, key) for key in _FLAG_KEYS if getattr(args, key) is not None})
    explicit.update(_parse_overrides(args.set))
    if args.subcommand:
        explicit["subcommand"] = args.subcommand

    merged: Dict[str, Any] = {}
    preset = explicit.get("preset")
    if preset:
        merged.update(preset_values(preset, explicit.get("scale", "desk")))
        if "subcommand" in explicit and explicit["subcommand"] != merged["subcommand"]:
            raise ConfigurationError(
                f"preset '{preset}' is a {merged['subcommand']} experiment, "
                f"not {explicit['subcommand']}", key="subcommand")
    merged.update(explicit)

    if "subcommand" not in merged:
        raise ConfigurationError("a subcommand or a preset is required", key="subcommand")

    try:
        cfg = RunConfig.model_validate(merged)
    except ValidationError as e:
        key = _first_error_key(e)
        raise ConfigurationError(f"invalid value for '{key}': {e.errors()[0]['msg']}", key=key) from e

    missing = [key for key in _REQUIRED[cfg.subcommand] if getattr(cfg, key) is None]
    if missing:
        raise ConfigurationError(
            f"incomplete configuration for {cfg.subcommand}: missing {', '.join(missing)}",
            key=missing[0])
    return cfg


def build_ensemble(cfg: RunConfig) -> EnsembleConfig:
    grid = GridSpec(num_modes=cfg.modes)
    covariance = CovarianceSpec.power_decay(cfg.exponent, grid, symmetric=cfg.symmetric)
    potential = potential_profile(cfg.potential, grid)
    problem = ProblemSpec(grid=grid, covariance=covariance, noise_mode=cfg.noise,
                          potential=None if potential is None else tuple(potential))
    reference_step = cfg.reference_step if cfg.reference_step is not None else min(cfg.steps)
    return EnsembleConfig(problem=problem, initial_profile=cfg.initial, schemes=cfg.schemes,
                          num_samples=cfg.samples, master_seed=cfg.seed, horizon=cfg.horizon,
                          reference_step=reference_step, step_sizes=cfg.steps,
                          reference_scheme=cfg.reference_scheme)


def _warn_explicit_euler(ensemble: EnsembleConfig) -> None:
    if "EM" not in ensemble.schemes:
        return
    stiffness = Stepper("EM", ensemble.problem, ensemble.step_sizes[0]).max_stiffness
    if stiffness > 1.0:
        logger.warning("Explicit Euler-Maruyama is unstable at this resolution",
                       max_n2k=stiffness)


def _trace_filename(observable: str, scheme: str, index: int, count: int) -> str:
    suffix = f"_k{index}" if count > 1 else ""
    return f"trace_{observable}_{scheme}{suffix}.csv"


def _run(cfg: RunConfig, out: Path, engine: MonteCarloEngine, manifest: RunManifest) -> int:
    if cfg.subcommand == "scalar-test":
        problem = ScalarProblem(a=cfg.a, b=cfg.b, m0=cfg.m0, k=cfg.k)
        path = write_scalar_csv(moment_table(problem, cfg.n_steps), out / "scalar_moments.csv")
        manifest.outputs.append(path.name)
        return EXIT_OK

    ensemble = build_ensemble(cfg)
    _warn_explicit_euler(ensemble)
    failed = 0

    if cfg.subcommand == "strong-error":
        tables = engine.run_strong_error(ensemble)
        for scheme, table in tables.items():
            path = write_strong_error_csv(table, out / f"strong_error_{scheme}.csv")
            manifest.outputs.append(path.name)
            manifest.summary[scheme] = {"fitted_slope": table.fitted_slope,
                                        "r_squared": table.r_squared}
            failed = max(failed, table.failed_samples)
    else:
        runs = engine.run_trace(ensemble, cfg.observable)
        for scheme, series_list in runs.items():
            for index, series in enumerate(series_list):
                name = _trace_filename(cfg.observable, scheme, index, len(series_list))
                manifest.outputs.append(write_trace_csv(series, out / name).name)
                failed = max(failed, series.failed_samples)
            manifest.summary[scheme] = {
                "final_flag": drift_flag(series_list[-1]),
                "fraction_within_3se": [s.fraction_within(3.0) for s in series_list],
            }
            if cfg.observable == "mass" and len(series_list) > 1:
                rows = [(s.step, abs(s.values[-1] - s.theory[-1]), s.std_errs[-1]) for s in series_list]
                path = write_mass_defect_csv(rows, out / f"mass_defect_{scheme}.csv")
                manifest.outputs.append(path.name)

    manifest.performance = engine.get_performance_stats()
    if failed > settings.NAN_FAILURE_THRESHOLD * cfg.samples:
        raise NumericalFailureError(failed, cfg.samples)
    return EXIT_OK


def execute(cfg: RunConfig) -> int:
    """Run the configured experiment and write CSVs plus manifest.json"""
    out = Path(cfg.output_dir or settings.SSE_OUTPUT_DIR)
    engine = MonteCarloEngine(n_jobs=cfg.n_jobs)
    manifest = RunManifest(git_describe=git_describe(), master_seed=cfg.seed,
                           config=cfg.model_dump(mode="json"), started_at=utc_now())
    start = time.perf_counter()
    logger.info("Starting run", subcommand=cfg.subcommand, preset=cfg.preset, scale=cfg.scale,
                output_dir=str(out))

    try:
        status = _run(cfg, out, engine, manifest)
    except ConfigurationError as e:
        logger.error("Configuration rejected", key=e.key, error=str(e))
        return EXIT_CONFIG
    except (ValidationError, ValueError) as e:
        logger.error("Configuration rejected", error=str(e))
        return EXIT_CONFIG
    except SSELabError as e:
        logger.error("Numerical failure", error=str(e))
        status = EXIT_NUMERICAL

    manifest.wall_clock_seconds = round(time.perf_counter() - start, 3)
    write_manifest(manifest, out)
    logger.info("Run finished", status=status, outputs=manifest.outputs,
                elapsed=manifest.wall_clock_seconds)
    return status


def list_presets() -> List[str]:
    return [f"{name:28s} {preset['subcommand']}" for name, preset in sorted(PRESETS.items())]


def main(argv: Optional[Sequence[str]] = None) -> int:
    configure_logging(settings.LOG_LEVEL, settings.LOG_FORMAT)
    argv = list(sys.argv[1:] if argv is None else argv)
    if "--list-presets" in argv:
        print("\n".join(list_presets()))
        return EXIT_OK
    try:
        cfg = parse_and_validate(argv)
    except ConfigurationError as e:
        logger.error("Configuration rejected", key=e.key, error=str(e))
        return EXIT_CONFIG
    return execute(cfg)
