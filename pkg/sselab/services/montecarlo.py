"""
Monte Carlo experiment engine
Strong errors with coupled noise paths, trace-formula series and slope fits
"""

import math
import time
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import structlog
from joblib import Parallel, delayed
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from sselab.core.config import settings
from sselab.core.exceptions import (
    ConfigurationError,
    DivisibilityError,
    NumericalFailureError,
    UnknownTagError,
)
from sselab.numerics.noise import BrownianPath, aggregate_array, child_rng, sample_increment_array
from sselab.numerics.observables import (
    OBSERVABLES,
    ObservableSeries,
    drift_line,
    kinetic_energy_coeffs,
    mass_coeffs,
    mass_defect,
    momentum_coeffs,
    potential_energy_coeffs,
)
from sselab.numerics.profiles import initial_profile
from sselab.numerics.schemes import SCHEME_KINDS, ProblemSpec, Stepper
from sselab.numerics.spectral import l2_norm_squared

logger = structlog.get_logger(__name__)

_RATIO_TOL = 1e-9
_TRACE_BLOCK = 256


def _integer_ratio(numerator: float, denominator: float) -> Optional[int]:
    ratio = numerator / denominator
    nearest = round(ratio)
    if nearest >= 1 and abs(ratio - nearest) <= _RATIO_TOL * max(1.0, ratio):
        return int(nearest)
    return None


class EnsembleConfig(BaseModel):
    """Declarative description of one Monte Carlo ensemble"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    problem: ProblemSpec
    initial_profile: str = "zero"
    schemes: Tuple[str, ...] = ("SEXP",)
    num_samples: int = Field(..., ge=2)
    master_seed: int = Field(0, ge=0, lt=2 ** 64)
    horizon: float = Field(..., gt=0)
    reference_step: float = Field(..., gt=0)
    step_sizes: Tuple[float, ...]
    reference_scheme: str = "SEXP"

    @field_validator("schemes")
    @classmethod
    def _known_schemes(cls, value: Tuple[str, ...]) -> Tuple[str, ...]:
        value = tuple(s.upper() for s in value)
        unknown = [s for s in value if s not in SCHEME_KINDS]
        if unknown or not value:
            raise ValueError(f"unknown schemes {unknown}, expected a subset of {SCHEME_KINDS}")
        return value

    @field_validator("reference_scheme")
    @classmethod
    def _known_reference(cls, value: str) -> str:
        value = value.upper()
        if value not in SCHEME_KINDS:
            raise ValueError(f"unknown reference scheme '{value}'")
        return value

    @model_validator(mode="after")
    def _check_steps(self) -> "EnsembleConfig":
        if not self.step_sizes:
            raise ValueError("at least one step size is required")
        if any(b >= a for a, b in zip(self.step_sizes, self.step_sizes[1:])):
            raise ValueError("step_sizes must be strictly decreasing")
        if _integer_ratio(self.horizon, self.reference_step) is None:
            raise ValueError("horizon must be an integer multiple of reference_step")
        for k in self.step_sizes:
            if _integer_ratio(k, self.reference_step) is None:
                raise ValueError(f"step size {k} is not a multiple of reference_step {self.reference_step}")
            if _integer_ratio(self.horizon, k) is None:
                raise ValueError(f"horizon {self.horizon} is not a multiple of step size {k}")
        return self

    @property
    def fine_steps(self) -> int:
        return _integer_ratio(self.horizon, self.reference_step)

    def factor(self, k: float) -> int:
        ratio = _integer_ratio(k, self.reference_step)
        if ratio is None:
            raise DivisibilityError(f"step size {k} is not a multiple of {self.reference_step}")
        return ratio


class StrongErrorTable(BaseModel):
    """RMS L² error at the horizon per step size for one scheme"""

    model_config = ConfigDict(extra="forbid")

    scheme: str
    step_sizes: List[float]
    rms_errors: List[float]
    std_errs: List[float]
    fitted_slope: Optional[float] = None
    intercept: Optional[float] = None
    r_squared: Optional[float] = None
    num_samples: int = 0
    failed_samples: int = 0
    coupling_failures: int = 0


class NeumaierSum:
    """Compensated running sum of equally shaped arrays"""

    def __init__(self, shape):
        self.total = np.zeros(shape)
        self.compensation = np.zeros(shape)

    def add(self, value: np.ndarray) -> None:
        value = np.asarray(value, dtype=np.float64)
        t = self.total + value
        bigger = np.abs(self.total) >= np.abs(value)
        self.compensation += np.where(bigger, (self.total - t) + value, (value - t) + self.total)
        self.total = t

    def add_rows(self, rows: np.ndarray) -> None:
        for row in rows:
            self.add(row)

    def merge(self, other: "NeumaierSum") -> None:
        self.add(other.total)
        self.add(other.compensation)

    @property
    def value(self) -> np.ndarray:
        return self.total + self.compensation


def fit_slope(step_sizes: Sequence[float], errors: Sequence[float]) -> Tuple[float, float, float]:
    """Least-squares line through (log k, log error): slope, intercept, r²"""
    k = np.asarray(step_sizes, dtype=np.float64)
    err = np.asarray(errors, dtype=np.float64)
    if k.size < 2 or k.size != err.size:
        raise ValueError("need at least two (step, error) pairs of equal length")
    if np.any(k <= 0) or np.any(err <= 0) or not np.all(np.isfinite(err)):
        raise ValueError("step sizes and errors must be positive and finite")
    x, y = np.log(k), np.log(err)
    slope, intercept = np.polyfit(x, y, 1)
    residual = y - (slope * x + intercept)
    ss_res = float(np.sum(residual ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r_squared = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), r_squared


def _jackknife_rms(squared_errors: np.ndarray) -> Tuple[float, float]:
    """RMS of per-sample squared errors and its jackknife standard error"""
    n = squared_errors.size
    total = math.fsum(squared_errors.tolist())
    rms = math.sqrt(total / n)
    leave_one_out = np.sqrt(np.maximum(total - squared_errors, 0.0) / (n - 1))
    centred = leave_one_out - math.fsum(leave_one_out.tolist()) / n
    variance = (n - 1) / n * math.fsum((centred ** 2).tolist())
    return rms, math.sqrt(variance)


def _sample_paths(cfg: EnsembleConfig, indices: Sequence[int]) -> BrownianPath:
    """Batched fine path of shape (samples, fine steps, M), one child stream per sample index"""
    return BrownianPath(np.stack([
        sample_increment_array(cfg.problem.covariance, cfg.reference_step, cfg.fine_steps,
                               child_rng(cfg.master_seed, i))
        for i in indices
    ]), cfg.reference_step)


def _initial_batch(cfg: EnsembleConfig, count: int) -> np.ndarray:
    u0 = initial_profile(cfg.initial_profile, cfg.problem.grid).coeffs
    return np.broadcast_to(u0, (count, u0.size)).copy()


def _integrate(stepper: Stepper, u: np.ndarray, increments: np.ndarray) -> np.ndarray:
    for s in range(increments.shape[1]):
        u = stepper.advance(u, increments[:, s, :])
    return u


def _strong_error_chunk(cfg: EnsembleConfig, indices: Sequence[int]) -> dict:
    fine = _sample_paths(cfg, indices)
    count = len(indices)
    timings = {scheme: 0.0 for scheme in cfg.schemes}
    squared = np.empty((count, len(cfg.schemes), len(cfg.step_sizes)))
    coupling_failures = 0

    with np.errstate(over="ignore", invalid="ignore"):
        reference = Stepper(cfg.reference_scheme, cfg.problem, cfg.reference_step)
        u_ref = _integrate(reference, _initial_batch(cfg, count), fine.increments)
        fine_total = fine.checksum()

        for j, k in enumerate(cfg.step_sizes):
            coarse = fine.coarsen(cfg.factor(k))
            drift = np.abs(coarse.checksum() - fine_total)
            coupling_failures += int(np.sum(np.any(drift > 1e-12 * (1.0 + np.abs(fine_total)), axis=-1)))
            for i, scheme in enumerate(cfg.schemes):
                start = time.perf_counter()
                u = _integrate(Stepper(scheme, cfg.problem, k), _initial_batch(cfg, count), coarse.increments)
                squared[:, i, j] = l2_norm_squared(u - u_ref)
                timings[scheme] += time.perf_counter() - start

    # Non-finite entries stay in place; each (scheme, k) column is masked on its own
    return {"squared": squared, "coupling_failures": coupling_failures, "timings": timings}


def _observable_values(observable: str, coeffs: np.ndarray, problem: ProblemSpec,
                       n_squared: np.ndarray, modes: np.ndarray) -> np.ndarray:
    if observable == "mass":
        return mass_coeffs(coeffs)
    if observable == "momentum":
        return momentum_coeffs(coeffs, modes)
    value = kinetic_energy_coeffs(coeffs, n_squared)
    if observable == "energy_with_potential" and problem.potential is not None:
        value = value - potential_energy_coeffs(coeffs, problem.potential_array())
    return value


def _trace_theory(cfg: EnsembleConfig, observable: str, k: float) -> Tuple[np.ndarray, np.ndarray]:
    grid = cfg.problem.grid
    u0 = initial_profile(cfg.initial_profile, grid).coeffs
    n = grid.modes().astype(np.float64)
    initial = float(_observable_values(observable, u0, cfg.problem, n * n, n))
    times = k * np.arange(_integer_ratio(cfg.horizon, k) + 1)
    return times, drift_line(observable, cfg.problem.covariance, cfg.problem.potential_array(), initial, times)


def _increment_blocks(cfg: EnsembleConfig, indices: Sequence[int], block: int):
    """The same fine increments as _sample_paths, drawn `block` steps at a time"""
    rngs = [child_rng(cfg.master_seed, i) for i in indices]
    remaining = cfg.fine_steps
    while remaining:
        size = min(block, remaining)
        yield np.stack([sample_increment_array(cfg.problem.covariance, cfg.reference_step, size, rng)
                        for rng in rngs])
        remaining -= size


def _trace_chunk(cfg: EnsembleConfig, observable: str, indices: Sequence[int]) -> dict:
    count = len(indices)
    n = cfg.problem.grid.modes().astype(np.float64)
    factors = [cfg.factor(k) for k in cfg.step_sizes]
    # Blocks must hold whole coarse steps of every resolution
    block = math.lcm(*factors)
    block *= max(1, _TRACE_BLOCK // block)

    steppers = {(scheme, j): Stepper(scheme, cfg.problem, k)
                for j, k in enumerate(cfg.step_sizes) for scheme in cfg.schemes}
    states, values = {}, {}
    for key in steppers:
        states[key] = _initial_batch(cfg, count)
        values[key] = np.empty((count, cfg.fine_steps // factors[key[1]] + 1))
        values[key][:, 0] = _observable_values(observable, states[key], cfg.problem, n * n, n)
    timings = {scheme: 0.0 for scheme in cfg.schemes}

    position = 0
    with np.errstate(over="ignore", invalid="ignore"):
        for fine in _increment_blocks(cfg, indices, block):
            for j, factor in enumerate(factors):
                coarse = aggregate_array(fine, factor)
                offset = position // factor
                for scheme in cfg.schemes:
                    key = (scheme, j)
                    start = time.perf_counter()
                    u = states[key]
                    for s in range(coarse.shape[1]):
                        u = steppers[key].advance(u, coarse[:, s, :])
                        values[key][:, offset + s + 1] = _observable_values(
                            observable, u, cfg.problem, n * n, n)
                    states[key] = u
                    timings[scheme] += time.perf_counter() - start
            position += fine.shape[1]

    partials = {}
    for (scheme, j), series in values.items():
        _, theory = _trace_theory(cfg, observable, cfg.step_sizes[j])
        ok = np.all(np.isfinite(series), axis=1)
        deviation = series[ok] - theory
        first, second = NeumaierSum(theory.shape), NeumaierSum(theory.shape)
        first.add_rows(deviation)
        second.add_rows(deviation ** 2)
        partials[(scheme, j)] = (first, second, int(ok.sum()), int((~ok).sum()))

    return {"partials": partials, "timings": timings}


class MonteCarloEngine:
    """Runs ensembles in fixed-size sample chunks and reduces them in sample order"""

    def __init__(self, n_jobs: Optional[int] = None, chunk_size: Optional[int] = None,
                 backend: Optional[str] = None):
        self.n_jobs = n_jobs or settings.N_JOBS
        self.chunk_size = chunk_size or settings.CHUNK_SIZE
        self.backend = backend or settings.JOBLIB_BACKEND

        # Track scheme cost and failures across runs
        self.scheme_performance: Dict[str, Dict[str, float]] = {}

        logger.info("MonteCarloEngine initialized", n_jobs=self.n_jobs,
                    chunk_size=self.chunk_size, backend=self.backend)

    def _chunks(self, num_samples: int) -> List[range]:
        return [range(start, min(start + self.chunk_size, num_samples))
                for start in range(0, num_samples, self.chunk_size)]

    def _map(self, worker, cfg: EnsembleConfig, *args):
        """Chunk results in sample order, independent of n_jobs"""
        parallel = Parallel(n_jobs=self.n_jobs, backend=self.backend, return_as="generator")
        return parallel(delayed(worker)(cfg, *args, chunk) for chunk in self._chunks(cfg.num_samples))

    def _update_performance(self, scheme: str, elapsed: float, failed: int):
        stats = self.scheme_performance.setdefault(
            scheme, {"runs": 0, "elapsed": 0.0, "failed_samples": 0})
        stats["runs"] += 1
        stats["elapsed"] += elapsed
        stats["failed_samples"] += failed

    def get_performance_stats(self) -> Dict[str, Dict[str, float]]:
        """Per-scheme run counts, wall time and failed samples"""
        return {
            scheme: {
                "runs": int(stats["runs"]),
                "elapsed": round(stats["elapsed"], 3),
                "failed_samples": int(stats["failed_samples"]),
            }
            for scheme, stats in self.scheme_performance.items()
        }

    def run_strong_error(self, cfg: EnsembleConfig) -> Dict[str, StrongErrorTable]:
        """RMS errors at the horizon against a fine-step reference on the same paths"""
        logger.info("Starting strong error run", schemes=cfg.schemes, samples=cfg.num_samples,
                    step_sizes=cfg.step_sizes, reference_step=cfg.reference_step,
                    reference_scheme=cfg.reference_scheme)

        squared_parts = []
        coupling_failures = 0
        timings = {scheme: 0.0 for scheme in cfg.schemes}
        for result in self._map(_strong_error_chunk, cfg):
            squared_parts.append(result["squared"])
            coupling_failures += result["coupling_failures"]
            for scheme, elapsed in result["timings"].items():
                timings[scheme] += elapsed

        squared = np.concatenate(squared_parts)
        finite = np.isfinite(squared)
        if coupling_failures:
            logger.warning("Coarse increments do not sum to the fine path",
                           coupling_failures=coupling_failures)

        tables = {}
        for i, scheme in enumerate(cfg.schemes):
            num_failed = int(np.sum(~np.all(finite[:, i, :], axis=1)))
            rms, se = [], []
            for j in range(len(cfg.step_sizes)):
                column = squared[finite[:, i, j], i, j]
                if column.size < 2:
                    rms.append(math.nan)
                    se.append(math.nan)
                    continue
                value, err = _jackknife_rms(column)
                rms.append(value)
                se.append(err)
            if num_failed:
                logger.warning("Samples produced non-finite states", scheme=scheme,
                               failed_samples=num_failed, samples=cfg.num_samples)
            table = StrongErrorTable(scheme=scheme, step_sizes=list(cfg.step_sizes),
                                     rms_errors=rms, std_errs=se,
                                     num_samples=cfg.num_samples, failed_samples=num_failed,
                                     coupling_failures=coupling_failures)
            if len(rms) >= 2 and all(e > 0 for e in rms):
                table.fitted_slope, table.intercept, table.r_squared = fit_slope(cfg.step_sizes, rms)
            tables[scheme] = table
            self._update_performance(scheme, timings[scheme], num_failed)
            logger.info("Strong error table ready", scheme=scheme, slope=table.fitted_slope,
                        failed_samples=num_failed, elapsed=round(timings[scheme], 3))

        if all(any(math.isnan(e) for e in table.rms_errors) for table in tables.values()):
            raise NumericalFailureError(max(t.failed_samples for t in tables.values()), cfg.num_samples)
        return tables

    def run_trace(self, cfg: EnsembleConfig, observable: str) -> Dict[str, List[ObservableSeries]]:
        """Ensemble mean of an observable at every step, one series per configured step size"""
        if observable not in OBSERVABLES:
            raise UnknownTagError(f"unknown observable '{observable}', expected one of {OBSERVABLES}")
        if cfg.problem.noise_mode != "additive":
            raise ConfigurationError("trace formulas hold for additive noise only", key="noise_mode")
        if observable == "energy" and cfg.problem.potential is not None:
            raise ConfigurationError(
                "use energy_with_potential for problems with a potential", key="observable")

        logger.info("Starting trace run", observable=observable, schemes=cfg.schemes,
                    samples=cfg.num_samples, step_sizes=cfg.step_sizes)

        totals: Dict[tuple, list] = {}
        timings = {scheme: 0.0 for scheme in cfg.schemes}
        for result in self._map(_trace_chunk, cfg, observable):
            for key, (first, second, count, failed) in result["partials"].items():
                if key not in totals:
                    totals[key] = [NeumaierSum(first.total.shape), NeumaierSum(first.total.shape), 0, 0]
                totals[key][0].merge(first)
                totals[key][1].merge(second)
                totals[key][2] += count
                totals[key][3] += failed
            for scheme, elapsed in result["timings"].items():
                timings[scheme] += elapsed

        series: Dict[str, List[ObservableSeries]] = {scheme: [] for scheme in cfg.schemes}
        complete = 0
        for scheme in cfg.schemes:
            failed_total = 0
            for j, k in enumerate(cfg.step_sizes):
                first, second, count, failed = totals[(scheme, j)]
                failed_total += failed
                times, theory = _trace_theory(cfg, observable, k)
                if count < 2:
                    values = std_errs = np.full(theory.shape, np.nan)
                else:
                    s1, s2 = first.value, second.value
                    variance = np.maximum(s2 - s1 * s1 / count, 0.0) / (count - 1)
                    values, std_errs = theory + s1 / count, np.sqrt(variance / count)
                series[scheme].append(ObservableSeries(
                    observable_name=observable, scheme=scheme, step=k,
                    times=times.tolist(), values=values.tolist(),
                    std_errs=std_errs.tolist(), theory=theory.tolist(),
                    failed_samples=failed))
            if all(math.isfinite(s.values[-1]) for s in series[scheme]):
                complete += 1
            if failed_total:
                logger.warning("Samples produced non-finite states", scheme=scheme,
                               failed_samples=failed_total)
            self._update_performance(scheme, timings[scheme], failed_total)
            final = series[scheme][-1]
            logger.info("Trace series ready", scheme=scheme, observable=observable,
                        final_flag=drift_flag(final), elapsed=round(timings[scheme], 3))

        if not complete:
            failed = max(s.failed_samples for runs in series.values() for s in runs)
            raise NumericalFailureError(failed, cfg.num_samples)
        return series

    def run_trace_defect(self, cfg: EnsembleConfig) -> Dict[str, List[Tuple[float, float, float]]]:
        """(k, |E[M(u^N)] - (M(u0) + T Tr Q)|, SE) per scheme and step size"""
        series = self.run_trace(cfg, "mass")
        return {
            scheme: [(s.step,) + mass_defect(s) for s in runs]
            for scheme, runs in series.items()
        }


def drift_flag(series: ObservableSeries, num_std_errs: float = 3.0) -> str:
    """'below', 'above' or 'consistent' for the final time against the theory line

    A series without a finite final mean is 'undetermined'.
    """
    diff = series.values[-1] - series.theory[-1]
    band = num_std_errs * series.std_errs[-1]
    if not (math.isfinite(diff) and math.isfinite(band)):
        return "undetermined"
    if diff < -band:
        return "below"
    if diff > band:
        return "above"
    return "consistent"


def run_strong_error(cfg: EnsembleConfig) -> Dict[str, StrongErrorTable]:
    return MonteCarloEngine().run_strong_error(cfg)


def run_trace(cfg: EnsembleConfig, observable: str) -> Dict[str, List[ObservableSeries]]:
    return MonteCarloEngine().run_trace(cfg, observable)


def run_trace_defect(cfg: EnsembleConfig) -> Dict[str, List[Tuple[float, float, float]]]:
    return MonteCarloEngine().run_trace_defect(cfg)
