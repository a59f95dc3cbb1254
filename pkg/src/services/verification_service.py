"""
Verification of synthesized module specs.

Empirical checks of the modular guarantee (random in-contract module
perturbations), brute-force and modular parameter-region oracles, and the
incremental redesign loop that re-baselines the system after every commit.
"""

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from src.domain.errors import (
    GuaranteeViolated, IllPosedInterconnection, Infeasible, InvalidParameter,
    RegionInclusionViolated, SolverFailure
)
from src.domain.models import FrequencyGrid
from src.domain.specs import CostWeights, ModuleSpec, SystemSpec
from src.model_library import ModelBuilder
from src.services.frf_assembly import AssembledSystem, DEFAULT_RCOND_THRESHOLD, eval_second_order_frf
from src.services.spec_service import (
    check_module_spec, check_system_spec, module_margins, system_spec_from_relative_gamma
)
from src.services.synthesis_service import SynthesisService
from src.logger import get_logger

logger = get_logger()

# Smallest module-spec margin a random draw is normalized from
_MIN_DRAW_MARGIN = 1e-300

# Relative parameter nudge used to read which way the objective improves
_DIRECTION_STEP = 1e-3


@dataclass(frozen=True, eq=False)
class PerturbationSample:
    """One random redesign: an error FRF per module and its target margin."""
    errors: Tuple[np.ndarray, ...]
    margins: Tuple[float, ...]

    @property
    def in_contract(self) -> bool:
        return all(m <= 1.0 for m in self.margins)


@dataclass
class GuaranteeReport:
    """Outcome of sample_guarantee."""
    n_samples: int
    n_passed: int = 0
    n_out_of_contract: int = 0
    n_out_of_contract_failed: int = 0
    worst_margin: float = 0.0
    worst_sample: int = -1

    @property
    def all_passed(self) -> bool:
        return self.n_passed == self.n_samples - self.n_out_of_contract_failed


def draw_perturbation(rng: np.random.Generator, module_specs: Sequence[ModuleSpec],
                      margin_range: Tuple[float, float] = (0.0, 1.0)) -> PerturbationSample:
    """
    Random complex module errors, each scaled to a random module-spec margin.

    One margin is drawn per module and applied at every frequency.
    """
    errors = []
    margins = []
    low, high = margin_range
    for spec in module_specs:
        target = float(rng.uniform(low, high))
        shape = (len(spec.grid),) + spec.baseline.shape
        raw = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        scale = np.maximum(module_margins(spec, raw), _MIN_DRAW_MARGIN)
        errors.append(raw * (target / scale)[:, None, None])
        margins.append(target)
    return PerturbationSample(tuple(errors), tuple(margins))


def sample_guarantee(system: AssembledSystem, system_spec: SystemSpec,
                     module_specs: Sequence[ModuleSpec], n_samples: int, seed: int = 42,
                     margin_range: Tuple[float, float] = (0.0, 1.0)) -> GuaranteeReport:
    """
    Check the modular guarantee on random module redesigns.

    Every sample perturbs all modules at once, assembles the redesigned
    system and checks it against the system spec. Samples whose module
    margins exceed 1 are outside the contract: their failures are counted,
    never raised.

    Args:
        system: Original modules and interconnection
        system_spec: System spec the module specs were synthesized for
        module_specs: One spec per module
        n_samples: Number of random redesigns
        seed: Seed of the only random generator used
        margin_range: Range of the uniformly drawn module margins

    Returns:
        GuaranteeReport with pass counts and the worst in-contract margin

    Raises:
        GuaranteeViolated: If an in-contract sample breaks the system spec
    """
    if len(module_specs) != system.structure.n_modules:
        raise InvalidParameter(f"{len(module_specs)} module specs for {system.structure.n_modules} modules")
    rng = np.random.default_rng(seed)
    report = GuaranteeReport(n_samples=n_samples)

    for index in range(n_samples):
        sample = draw_perturbation(rng, module_specs, margin_range)
        redesigned = [
            frf.with_samples(frf.samples + error) for frf, error in zip(system.module_frfs, sample.errors)
        ]
        try:
            verdict = check_system_spec(system_spec, system.redesigned_system_frf(redesigned))
            margin, ok, omega = verdict.max_margin, verdict.overall, verdict.worst_omega
        except IllPosedInterconnection as e:
            margin, ok, omega = math.inf, False, e.omega

        if not sample.in_contract:
            report.n_out_of_contract += 1
            if not ok:
                report.n_out_of_contract_failed += 1
                logger.warning(f"Out-of-contract sample {index} fails the system spec (margin {margin:.4g})")
            continue
        if not ok:
            logger.error(f"In-contract sample {index} breaks the system spec at omega={omega:.6g}")
            raise GuaranteeViolated(index, margin, omega, sample)
        report.n_passed += 1
        if margin > report.worst_margin or report.worst_sample < 0:
            report.worst_margin = margin
            report.worst_sample = index

    logger.info(
        f"Guarantee check: {report.n_passed}/{n_samples} samples pass, "
        f"worst in-contract system margin {report.worst_margin:.4g}"
    )
    return report


@dataclass
class RegionGrid:
    """Two-parameter design grid with per-cell acceptance of each method."""
    param_names: Tuple[str, str]
    values: Tuple[np.ndarray, np.ndarray]
    brute: Optional[np.ndarray] = None
    modular: Optional[np.ndarray] = None

    def __post_init__(self):
        if len(self.param_names) != 2 or len(self.values) != 2:
            raise InvalidParameter("a region grid spans exactly two parameters")
        self.param_names = tuple(self.param_names)
        self.values = tuple(np.asarray(v, dtype=float) for v in self.values)

    @classmethod
    def around(cls, builder: ModelBuilder, param_names: Sequence[str],
               span: float = 0.6, cells: int = 41) -> 'RegionGrid':
        """Grid of cells x cells values within +-span of the builder's parameters."""
        if not 0.0 < span < 1.0 or cells < 1:
            raise InvalidParameter(f"region needs 0 < span < 1 and cells >= 1, got {span}, {cells}")
        values = tuple(
            np.linspace(builder.get_param(p) * (1.0 - span), builder.get_param(p) * (1.0 + span), cells)
            for p in param_names
        )
        return cls(tuple(param_names), values)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.values[0].size, self.values[1].size

    def cells(self) -> Iterator[Tuple[int, int, float, float]]:
        for a, v1 in enumerate(self.values[0]):
            for b, v2 in enumerate(self.values[1]):
                yield a, b, float(v1), float(v2)

    def area_ratio(self) -> float:
        """Modular-accepted over brute-force-accepted cell count."""
        accepted = int(np.count_nonzero(self.brute))
        return float(np.count_nonzero(self.modular)) / accepted if accepted else 0.0

    def violations(self) -> List[Tuple[float, float]]:
        """Cells accepted by the module specs but rejected by brute force."""
        bad = np.argwhere(self.modular & ~self.brute)
        return [(float(self.values[0][a]), float(self.values[1][b])) for a, b in bad]

    def assert_sound(self) -> None:
        cells = self.violations()
        if cells:
            raise RegionInclusionViolated(cells)

    def rows(self) -> Iterator[Dict[str, Any]]:
        """Rows of region.csv (p1, p2, brute_pass, modular_pass)."""
        for a, b, v1, v2 in self.cells():
            yield {
                "p1": v1,
                "p2": v2,
                "brute_pass": bool(self.brute[a, b]) if self.brute is not None else None,
                "modular_pass": bool(self.modular[a, b]) if self.modular is not None else None,
            }

    def summary(self) -> Dict[str, Any]:
        return {
            "params": list(self.param_names),
            "cells": list(self.shape),
            "brute_accepted": int(np.count_nonzero(self.brute)) if self.brute is not None else None,
            "modular_accepted": int(np.count_nonzero(self.modular)) if self.modular is not None else None,
            "area_ratio": self.area_ratio() if self.brute is not None and self.modular is not None else None,
            "violations": len(self.violations()) if self.brute is not None and self.modular is not None else None,
        }


def _brute_force_cell(args: Tuple[ModelBuilder, Dict[str, float], FrequencyGrid, SystemSpec, float]) -> bool:
    """Worker: does the assembled system of one cell satisfy the system spec?"""
    builder, params, grid, system_spec, rcond = args
    system = builder.with_params(**params).assemble(grid, rcond)
    return check_system_spec(system_spec, system.g_a).overall


def _map_cells(func: Callable, tasks: List[Any], jobs: int) -> List[Any]:
    if jobs <= 1 or len(tasks) < 2:
        return [func(task) for task in tasks]
    with ProcessPoolExecutor(max_workers=min(jobs, os.cpu_count() or 1)) as executor:
        return list(executor.map(func, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))


def brute_force_region(builder: ModelBuilder, region: RegionGrid, system_spec: SystemSpec,
                       rcond_threshold: float = DEFAULT_RCOND_THRESHOLD, jobs: int = 1) -> RegionGrid:
    """
    Mark every cell whose assembled system satisfies the system spec.

    Raises:
        IllPosedInterconnection: Tagged with the cell that produced it
    """
    cells = list(region.cells())
    tasks = [
        (builder, dict(zip(region.param_names, (v1, v2))), system_spec.grid, system_spec, rcond_threshold)
        for _, _, v1, v2 in cells
    ]
    try:
        results = _map_cells(_brute_force_cell, tasks, jobs)
    except IllPosedInterconnection as e:
        if e.cell is not None:
            raise
        # Re-run serially to find the offending cell
        for _, _, v1, v2 in cells:
            try:
                _brute_force_cell((builder, dict(zip(region.param_names, (v1, v2))),
                                   system_spec.grid, system_spec, rcond_threshold))
            except IllPosedInterconnection as cell_error:
                raise cell_error.at_cell((v1, v2))
        raise

    brute = np.zeros(region.shape, dtype=bool)
    for (a, b, _, _), ok in zip(cells, results):
        brute[a, b] = ok
    region.brute = brute
    logger.info(f"Brute-force region: {int(brute.sum())}/{brute.size} cells accepted")
    return region


def _module_accepts(builder: ModelBuilder, params: Dict[str, float], module: int,
                    spec: ModuleSpec) -> bool:
    try:
        models, _ = builder.with_params(**params).build()
    except InvalidParameter:
        return False
    return check_module_spec(spec, eval_second_order_frf(models[module], spec.grid)).overall


def _owning_module(builder: ModelBuilder, parameter: str) -> int:
    design = builder.design_parameters()
    if parameter not in design:
        raise InvalidParameter(
            f"'{parameter}' is not a module design parameter (choose from {', '.join(sorted(design))})"
        )
    return design[parameter]


def modular_region(builder: ModelBuilder, region: RegionGrid,
                   spec_sets: Sequence[Sequence[ModuleSpec]]) -> RegionGrid:
    """
    Mark every cell whose redesigned modules all satisfy their own specs.

    A cell counts as accepted if any of the given spec sets accepts it. No
    system is assembled.
    """
    if not spec_sets:
        raise InvalidParameter("modular_region needs at least one module-spec set")
    modules = [_owning_module(builder, p) for p in region.param_names]
    modular = np.zeros(region.shape, dtype=bool)
    for a, b, v1, v2 in region.cells():
        params = dict(zip(region.param_names, (v1, v2)))
        touched = sorted(set(modules))
        for specs in spec_sets:
            if all(_module_accepts(builder, params, j, specs[j]) for j in touched):
                modular[a, b] = True
                break
    region.modular = modular
    logger.info(f"Modular region: {int(modular.sum())}/{modular.size} cells accepted ({len(spec_sets)} spec sets)")
    return region


def allowed_perturbation(builder: ModelBuilder, module_specs: Sequence[ModuleSpec], parameter: str,
                         target: float, tol: float = 1e-4) -> float:
    """
    Furthest value toward target that keeps the owning module within its spec.

    Bisection between the current value (always accepted) and target, to a
    relative tolerance tol of the current value.
    """
    module = _owning_module(builder, parameter)
    spec = module_specs[module]
    start = builder.get_param(parameter)
    if _module_accepts(builder, {parameter: target}, module, spec):
        return float(target)
    lo, hi = start, target
    while abs(hi - lo) > tol * max(abs(start), 1e-12):
        mid = 0.5 * (lo + hi)
        if _module_accepts(builder, {parameter: mid}, module, spec):
            lo = mid
        else:
            hi = mid
    return float(lo)


def total_mass_reduction(original: ModelBuilder) -> Callable[[ModelBuilder], float]:
    """Objective: total mass removed relative to the original design."""
    reference = original.total_mass()
    return lambda current: reference - current.total_mass()


def search_target(current: ModelBuilder, parameter: str, objective: Callable[[ModelBuilder], float],
                  lower_fraction: float) -> float:
    """
    End point of the search for one design parameter.

    lower_fraction times the current value when a small decrease scores at
    least as well as a small increase, otherwise the current value divided
    by lower_fraction.
    """
    value = current.get_param(parameter)
    down = objective(current.with_params(**{parameter: value * (1.0 - _DIRECTION_STEP)}))
    up = objective(current.with_params(**{parameter: value * (1.0 + _DIRECTION_STEP)}))
    return lower_fraction * value if down >= up else value / lower_fraction


@dataclass
class IncrementalStep:
    """One committed redesign iteration."""
    iteration: int
    changes: Dict[str, float]
    cum_objective: float
    chained_margin: float


@dataclass
class IncrementalResult:
    """Trajectory of an incremental redesign plus both comparison views."""
    gamma_total: float
    n_iterations: int
    steps: List[IncrementalStep] = field(default_factory=list)
    final_builder: Optional[ModelBuilder] = None
    one_shot_margin: float = math.nan
    stop_reason: str = "completed"
    infeasible_omegas: List[float] = field(default_factory=list)

    @property
    def completed(self) -> bool:
        return self.stop_reason == "completed"

    @property
    def cum_objective(self) -> float:
        return self.steps[-1].cum_objective if self.steps else 0.0

    def rows(self) -> Iterator[Dict[str, Any]]:
        """Rows of trajectory.csv (iter, param, value, cum_objective)."""
        for step in self.steps:
            for param, value in step.changes.items():
                yield {"iter": step.iteration, "param": param, "value": value,
                       "cum_objective": step.cum_objective}

    def summary(self) -> Dict[str, Any]:
        return {
            "gamma_total": self.gamma_total,
            "gamma_step": self.gamma_total / self.n_iterations,
            "n_iterations": self.n_iterations,
            "completed_iterations": len(self.steps),
            "stop_reason": self.stop_reason,
            "cum_objective": self.cum_objective,
            "chained_margins": [step.chained_margin for step in self.steps],
            "one_shot_margin_vs_original": self.one_shot_margin,
            "final_params": self.final_builder.params() if self.final_builder else None,
        }


def incremental_redesign(builder: ModelBuilder, grid: FrequencyGrid, gamma_total: float,
                         n_iterations: int, parameters: Optional[Sequence[str]] = None,
                         lower_fraction: float = 0.05, tol: float = 1e-4,
                         service: Optional[SynthesisService] = None,
                         objective: Optional[Callable[[ModelBuilder], float]] = None) -> IncrementalResult:
    """
    Redesign in n_iterations small steps, re-baselining after each commit.

    Every iteration specifies the current system with relative gamma
    gamma_total / n_iterations, synthesizes module specs, pushes each design
    parameter as far as its module spec allows toward the end point
    search_target picks from the objective, then commits all changes and
    re-verifies the assembled system against the step spec. With the
    default mass-reduction objective every parameter moves down toward
    lower_fraction of its current value.

    Args:
        builder: Starting design
        grid: Frequencies of interest
        gamma_total: Total relative gamma, split evenly over the iterations
        n_iterations: Number of synthesize/commit cycles
        parameters: Design parameters to change (all of the builder's by default)
        lower_fraction: Search end point as a fraction of the current value (its inverse when increasing)
        tol: Relative bisection tolerance
        service: Synthesis service (a serial default one if None)
        objective: Score of a design, larger is better (total mass reduction by default)

    Returns:
        IncrementalResult; a partial trajectory if some iteration is infeasible

    Raises:
        GuaranteeViolated: If a committed design fails its step spec
    """
    if n_iterations < 1 or not gamma_total > 0:
        raise InvalidParameter("incremental redesign needs n_iterations >= 1 and gamma_total > 0")
    if not 0.0 < lower_fraction < 1.0:
        raise InvalidParameter(f"lower_fraction must lie in (0, 1), got {lower_fraction}")
    parameters = list(parameters or builder.design_parameters())
    owners = [_owning_module(builder, p) for p in parameters]
    if len(set(owners)) != len(owners):
        raise InvalidParameter("each design parameter must belong to a different module")

    objective = objective or total_mass_reduction(builder)
    gamma_step = gamma_total / n_iterations
    own_service = service is None
    service = service or SynthesisService()
    result = IncrementalResult(gamma_total=gamma_total, n_iterations=n_iterations)
    current = builder

    try:
        for iteration in range(1, n_iterations + 1):
            system = current.assemble(grid)
            step_spec = system_spec_from_relative_gamma(system.g_a, gamma_step)
            try:
                specs = service.synthesize(system, step_spec, CostWeights.uniform(system.structure.n_modules)).module_specs
            except (Infeasible, SolverFailure) as e:
                logger.warning(f"Incremental iteration {iteration} stopped: {e}")
                result.stop_reason = "infeasible" if isinstance(e, Infeasible) else "solver_failure"
                result.infeasible_omegas = list(e.omegas)
                break

            changes = {
                p: allowed_perturbation(current, specs, p, search_target(current, p, objective, lower_fraction), tol)
                for p in parameters
            }
            current = current.with_params(**changes)
            verdict = check_system_spec(step_spec, current.assemble(grid).g_a)
            if not verdict.overall:
                raise GuaranteeViolated(iteration, verdict.max_margin, verdict.worst_omega)
            step = IncrementalStep(iteration, changes, float(objective(current)), verdict.max_margin)
            result.steps.append(step)
            logger.info(
                f"Iteration {iteration}/{n_iterations}: objective {step.cum_objective:.6g}, "
                f"step margin {step.chained_margin:.4g}"
            )
    finally:
        if own_service:
            service.close()

    result.final_builder = current
    original = builder.assemble(grid).g_a
    one_shot = system_spec_from_relative_gamma(original, gamma_total)
    result.one_shot_margin = check_system_spec(one_shot, current.assemble(grid).g_a).max_margin
    return result


@dataclass
class BruteForceOptimum:
    objective: float
    params: Dict[str, float]


def brute_force_optimum(builder: ModelBuilder, region: RegionGrid, system_spec: SystemSpec,
                        objective: Optional[Callable[[ModelBuilder], float]] = None,
                        jobs: int = 1) -> BruteForceOptimum:
    """Best objective over the brute-force-accepted cells of a region."""
    objective = objective or total_mass_reduction(builder)
    if region.brute is None:
        brute_force_region(builder, region, system_spec, jobs=jobs)
    best = BruteForceOptimum(-math.inf, {})
    for a, b, v1, v2 in region.cells():
        if not region.brute[a, b]:
            continue
        params = dict(zip(region.param_names, (v1, v2)))
        score = float(objective(builder.with_params(**params)))
        if score > best.objective:
            best = BruteForceOptimum(score, params)
    return best


def chained_brute_force_optimum(builder: ModelBuilder, grid: FrequencyGrid, gamma_total: float,
                                n_iterations: int, param_names: Sequence[str], lower_fraction: float = 0.05,
                                cells: int = 11, objective: Optional[Callable[[ModelBuilder], float]] = None,
                                rcond_threshold: float = DEFAULT_RCOND_THRESHOLD,
                                jobs: int = 1) -> BruteForceOptimum:
    """
    Brute-force counterpart of the incremental chain.

    Each of the n_iterations steps specifies the current design with
    relative gamma gamma_total / n_iterations, moves to the best
    brute-force-accepted cell between the current parameters and their
    search end points, and re-baselines there. Stops early when no cell
    improves the objective.
    """
    if n_iterations < 1 or not gamma_total > 0:
        raise InvalidParameter("chained optimum needs n_iterations >= 1 and gamma_total > 0")
    if len(param_names) != 2:
        raise InvalidParameter("the brute-force optimum spans exactly two parameters")
    objective = objective or total_mass_reduction(builder)
    names = tuple(param_names)
    current = builder
    best = BruteForceOptimum(float(objective(builder)), {p: builder.get_param(p) for p in names})
    for iteration in range(1, n_iterations + 1):
        region = search_region(current, names, objective, lower_fraction, cells)
        step_spec = system_spec_from_relative_gamma(current.assemble(grid, rcond_threshold).g_a,
                                                    gamma_total / n_iterations)
        brute_force_region(current, region, step_spec, rcond_threshold, jobs)
        step = brute_force_optimum(current, region, step_spec, objective, jobs)
        if not step.objective > best.objective:
            logger.info(f"Chained brute force stopped at iteration {iteration}: no better cell")
            break
        current = current.with_params(**step.params)
        best = step
    return best


def search_region(builder: ModelBuilder, param_names: Sequence[str],
                  objective: Callable[[ModelBuilder], float], lower_fraction: float = 0.05,
                  cells: int = 11) -> RegionGrid:
    """Grid from the current parameters to their search end points."""
    values = tuple(
        np.linspace(builder.get_param(p), search_target(builder, p, objective, lower_fraction), cells)
        for p in param_names
    )
    return RegionGrid(tuple(param_names), values)


def incremental_oracles(builder: ModelBuilder, grid: FrequencyGrid, gamma_total: float, n_iterations: int,
                        param_names: Sequence[str], lower_fraction: float = 0.05, cells: int = 11,
                        objective: Optional[Callable[[ModelBuilder], float]] = None,
                        rcond_threshold: float = DEFAULT_RCOND_THRESHOLD,
                        jobs: int = 1) -> Dict[str, BruteForceOptimum]:
    """
    Brute-force optima an incremental redesign is compared with.

    "one_shot" is the best design meeting gamma_total around the original
    system. "chained" is the best end point of n_iterations brute-force
    steps, each meeting gamma_total / n_iterations around the previous one.
    """
    objective = objective or total_mass_reduction(builder)
    region = search_region(builder, param_names, objective, lower_fraction, cells)
    one_shot_spec = system_spec_from_relative_gamma(builder.assemble(grid, rcond_threshold).g_a, gamma_total)
    brute_force_region(builder, region, one_shot_spec, rcond_threshold, jobs)
    return {
        "one_shot": brute_force_optimum(builder, region, one_shot_spec, objective, jobs),
        "chained": chained_brute_force_optimum(builder, grid, gamma_total, n_iterations, param_names,
                                               lower_fraction, cells, objective, rcond_threshold, jobs),
    }
