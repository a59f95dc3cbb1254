"""
Module specification synthesis service.

Turns a system spec into per-module specs by running the alternating
weight / scaling optimization independently at every grid frequency,
serially or on a process pool, and collecting the results by frequency.
"""

import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor, as_completed, TimeoutError
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np

from src.domain.errors import DimensionMismatch, GridMismatch, Infeasible, NotConverged, SolverFailure
from src.domain.models import FrfMatrix, InterconnectionStructure, SynthesisOptions
from src.domain.specs import (
    CostWeights, DiagonalWeight, FrequencyTrace, ModuleSpec, SynthesisTrace,
    SystemSpec, TerminationReason, WeightSide
)
from src.services.frf_assembly import AssembledSystem
from src.services.synthesis_workers import FrequencyTask, synthesize_frequency_safe
from src.logger import get_logger

logger = get_logger()


@dataclass
class SynthesisResult:
    """Module specs over the grid plus the per-frequency trace."""
    module_specs: List[ModuleSpec]
    trace: SynthesisTrace
    cost: CostWeights

    @property
    def converged(self) -> bool:
        return all(t.reason is TerminationReason.CONVERGED for t in self.trace.ordered())

    @property
    def feasible(self) -> bool:
        return not self.trace.infeasible_omegas and not self.trace.failed_omegas


def alpha_sweep(n_modules: int, n_points: int, span: float = 100.0) -> List[CostWeights]:
    """
    Cost-weight distributions for exploring the module-spec trade-off.

    Ratios r are log-spaced in [1/span, span]. With two modules this gives
    alpha = (1, r); with more, each module in turn takes r while the others
    keep 1.
    """
    if n_modules == 1 or n_points < 2:
        return [CostWeights.uniform(n_modules)]
    ratios = np.logspace(-math.log10(span), math.log10(span), n_points)
    varied = [1] if n_modules == 2 else list(range(n_modules))
    sweep: List[CostWeights] = []
    seen = set()
    for j in varied:
        for r in ratios:
            alphas = tuple(float(r) if i == j else 1.0 for i in range(n_modules))
            key = tuple(round(math.log10(a), 9) for a in alphas)
            if key not in seen:
                seen.add(key)
                sweep.append(CostWeights(alphas))
    return sweep


class SynthesisService:
    """Computes module specifications from a system specification."""

    # Below this many frequencies a pool costs more than it saves
    MIN_PARALLEL_ITEMS = 4

    def __init__(self, config: "Config" = None, options: Optional[SynthesisOptions] = None,
                 jobs: Optional[int] = None):
        """
        Initialize the synthesis service.

        Args:
            config: Configuration object for solver and parallel settings
            options: Solver settings; overrides the configuration
            jobs: Worker pool size; overrides the configuration
        """
        self._config = config
        self.options = options or (config.get_synthesis_options() if config else SynthesisOptions())
        self._jobs = jobs if jobs is not None else self._get_jobs()
        self._worker_timeout = self._get_worker_timeout()
        self._executor: Optional[ProcessPoolExecutor] = None

    def _get_jobs(self) -> int:
        """Get configured pool size or default."""
        if self._config:
            return self._config.get_jobs()
        return 1

    def _get_worker_timeout(self) -> int:
        """Get configured worker timeout or default."""
        if self._config:
            return self._config.get_worker_timeout()
        return 600

    def _get_executor(self) -> ProcessPoolExecutor:
        """Get or create the process pool executor."""
        if self._executor is None:
            self._executor = ProcessPoolExecutor(max_workers=min(self._jobs, os.cpu_count() or 1))
        return self._executor

    def close(self) -> None:
        """Shutdown the executor and release resources."""
        if self._executor is not None:
            self._executor.shutdown(wait=False)
            self._executor = None

    def __enter__(self) -> 'SynthesisService':
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def synthesize(self, system: AssembledSystem, system_spec: SystemSpec,
                   cost: Optional[CostWeights] = None) -> SynthesisResult:
        """
        Synthesize module specs for an assembled system.

        Args:
            system: Module FRFs and interconnection
            system_spec: System spec around the system's own G_A
            cost: Cost weights (uniform if None)

        Returns:
            SynthesisResult with one ModuleSpec per module

        Raises:
            Infeasible: If some frequency admits no module weights; .partial holds the result
            SolverFailure: If the solver fails at some frequency; .partial holds the result
        """
        return self.synthesize_from_nominal(
            system.nominal, system.structure, system_spec, system.module_frfs, system.names, cost
        )

    def synthesize_from_nominal(self, n: FrfMatrix, structure: InterconnectionStructure,
                                system_spec: SystemSpec, module_baselines: Sequence[FrfMatrix],
                                names: Optional[Sequence[str]] = None,
                                cost: Optional[CostWeights] = None) -> SynthesisResult:
        """Synthesize module specs from the nominal system N over the grid."""
        cost = cost or CostWeights.uniform(structure.n_modules)
        names = list(names or [f"module_{j + 1}" for j in range(structure.n_modules)])
        self._validate(n, structure, system_spec, module_baselines, cost)

        tasks = self._build_tasks(n, structure, system_spec, cost)
        logger.info(
            f"Synthesizing specs for {structure.n_modules} modules at {len(tasks)} frequencies "
            f"(alpha={list(cost.alphas)}, jobs={self._jobs})"
        )
        trace = SynthesisTrace(n.grid)
        for record in self._run_tasks(tasks):
            trace.add(record)

        result = SynthesisResult(self._module_specs(trace, structure, module_baselines, names), trace, cost)
        self._report(result)
        return result

    def synthesize_sweep(self, system: AssembledSystem, system_spec: SystemSpec,
                         costs: Sequence[CostWeights]) -> List[List[ModuleSpec]]:
        """
        Module-spec sets for several cost distributions.

        Sets with infeasible frequencies are kept with their floor weights there.
        """
        spec_sets = []
        for cost in costs:
            try:
                result = self.synthesize(system, system_spec, cost)
            except (Infeasible, SolverFailure) as e:
                if e.partial is None:
                    raise
                logger.warning(f"alpha={list(cost.alphas)}: {e}; using partial specs")
                result = e.partial
            spec_sets.append(result.module_specs)
        return spec_sets

    def _validate(self, n: FrfMatrix, structure: InterconnectionStructure, system_spec: SystemSpec,
                  module_baselines: Sequence[FrfMatrix], cost: CostWeights) -> None:
        expected = (structure.total_inputs + structure.p_a, structure.total_outputs + structure.m_a)
        if n.shape != expected:
            raise DimensionMismatch(f"N is {n.shape}, the interconnection implies {expected}")
        if system_spec.grid != n.grid:
            raise GridMismatch("system spec and nominal system live on different grids")
        if system_spec.baseline.shape != (structure.p_a, structure.m_a):
            raise DimensionMismatch("system spec does not match the external channels")
        if len(module_baselines) != structure.n_modules or cost.n_modules != structure.n_modules:
            raise DimensionMismatch("module baselines or cost weights do not match the module count")
        for spec in cost.frozen_specs.values():
            if spec.grid != n.grid:
                raise GridMismatch(f"frozen weights of '{spec.name}' live on a different grid")

    def _build_tasks(self, n: FrfMatrix, structure: InterconnectionStructure,
                     system_spec: SystemSpec, cost: CostWeights) -> List[FrequencyTask]:
        tasks = []
        for i, omega in enumerate(n.grid.points):
            frozen = {
                j: (spec.w_j.values[i], spec.v_j.values[i]) for j, spec in cost.frozen_specs.items()
            }
            tasks.append(FrequencyTask(
                index=i,
                omega=float(omega),
                n_sample=n.samples[i],
                v_a=system_spec.v_a.values[i],
                w_a=system_spec.w_a.values[i],
                structure=structure,
                alphas=cost.alphas,
                options=self.options,
                frozen_weights=frozen,
            ))
        return tasks

    def _run_tasks(self, tasks: List[FrequencyTask]) -> List[FrequencyTrace]:
        """Run the frequency tasks, in a pool when it pays off."""
        if self._jobs <= 1 or len(tasks) < self.MIN_PARALLEL_ITEMS:
            return [synthesize_frequency_safe(task) for task in tasks]

        records: Dict[int, FrequencyTrace] = {}
        try:
            executor = self._get_executor()
            futures = {executor.submit(synthesize_frequency_safe, task): task.index for task in tasks}
            try:
                for future in as_completed(futures, timeout=self._worker_timeout * len(tasks)):
                    idx = futures[future]
                    try:
                        records[idx] = future.result(timeout=self._worker_timeout)
                    except TimeoutError:
                        logger.debug(f"Synthesis worker for frequency {idx} timed out")
                    except Exception as e:
                        logger.debug(f"Synthesis worker for frequency {idx} failed: {e}")
            except TimeoutError:
                logger.warning("Synthesis pool timed out; unfinished frequencies are marked failed")
        except Exception as e:
            logger.warning(f"Parallel synthesis failed, falling back to sequential: {e}")
            return [synthesize_frequency_safe(task) for task in tasks]

        for task in tasks:
            if task.index not in records:
                record = FrequencyTrace(index=task.index, omega=task.omega)
                record.reason = TerminationReason.SOLVER_FAILURE
                record.message = "worker did not return"
                records[task.index] = record
        return [records[task.index] for task in tasks]

    def _module_specs(self, trace: SynthesisTrace, structure: InterconnectionStructure,
                      module_baselines: Sequence[FrfMatrix], names: Sequence[str]) -> List[ModuleSpec]:
        """Collect per-frequency weights into one ModuleSpec per module."""
        floor_weight = self.options.zero_freedom_weight
        n_freq = len(trace.grid)
        specs = []
        for j, (p, m) in enumerate(structure.module_dims):
            w = np.full((n_freq, p), floor_weight)
            v = np.full((n_freq, m), floor_weight)
            for record in trace.ordered():
                if record.ok and record.module_w:
                    w[record.index] = record.module_w[j]
                    v[record.index] = record.module_v[j]
            specs.append(ModuleSpec(
                name=names[j],
                baseline=module_baselines[j],
                w_j=DiagonalWeight(trace.grid, w, WeightSide.OUTPUT),
                v_j=DiagonalWeight(trace.grid, v, WeightSide.INPUT),
            ))
        return specs

    def _report(self, result: SynthesisResult) -> None:
        trace = result.trace
        stalled = trace.not_converged_omegas
        if stalled:
            message = f"alternation did not converge at {len(stalled)} frequencies; best iterates returned"
            logger.warning(message)
            warnings.warn(NotConverged(message), stacklevel=3)

        failed = trace.failed_omegas
        if failed:
            logger.error(f"Solver failed at {len(failed)} frequencies")
            raise SolverFailure(
                f"solver failed at {len(failed)} frequencies", omegas=failed, partial=result
            )
        infeasible = trace.infeasible_omegas
        if infeasible:
            logger.warning(f"Infeasible at {len(infeasible)} of {len(trace.grid)} frequencies")
            raise Infeasible(infeasible, partial=result)

        iterations = [t.iterations for t in trace.ordered()]
        logger.info(
            f"Synthesis finished: {len(iterations)} frequencies, "
            f"{min(iterations)}-{max(iterations)} iterations each"
        )


def synthesize(n: FrfMatrix, structure: InterconnectionStructure, system_spec: SystemSpec,
               module_baselines: Sequence[FrfMatrix], cost: Optional[CostWeights] = None,
               options: Optional[SynthesisOptions] = None, jobs: int = 1,
               names: Optional[Sequence[str]] = None) -> SynthesisResult:
    """Synthesize module specs from N; see SynthesisService.synthesize_from_nominal."""
    with SynthesisService(options=options, jobs=jobs) as service:
        return service.synthesize_from_nominal(n, structure, system_spec, module_baselines, names, cost)
