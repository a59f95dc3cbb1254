"""
Worker functions for parallel module-spec synthesis.

These functions must be module-level (not methods) to be picklable
for multiprocessing. Each task covers one grid frequency; results are
keyed by the frequency index so they can be collected in any order.
"""

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from src.domain.errors import Infeasible, SolverFailure
from src.domain.models import InterconnectionStructure, SynthesisOptions
from src.domain.specs import (
    CostWeights, DScaling, FrequencyTrace, StackedWeights, TerminationReason
)
from src.services.lmi_solver import (
    decoupled_modules, schur_max_eig, step_dscaling, step_weights, theorem1_feasible
)
from src.logger import get_logger

logger = get_logger()

# First relative inflation of W^-2, V^-2 when the returned point sits on the LMI boundary
TIGHTEN_START = 1e-6


@dataclass
class FrequencyTask:
    """Everything one worker needs for one grid point."""
    index: int
    omega: float
    n_sample: np.ndarray
    v_a: np.ndarray
    w_a: np.ndarray
    structure: InterconnectionStructure
    alphas: Tuple[float, ...]
    options: SynthesisOptions
    frozen_weights: Dict[int, Tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)


def _tighten(task: FrequencyTask, weights: StackedWeights, d: DScaling,
             free: List[int], excluded: List[int], margin: float):
    """Shrink the free modules' weights until the LMI holds with the margin."""
    check = theorem1_feasible(task.n_sample, weights, d, task.structure, margin, excluded)
    tau = TIGHTEN_START
    for _ in range(task.options.tighten_steps):
        if check.feasible:
            break
        # x, y grow by (1 + tau), so weights shrink by its inverse square root
        weights = weights.scaled_modules((1.0 + tau) ** -0.5, free)
        check = theorem1_feasible(task.n_sample, weights, d, task.structure, margin, excluded)
        tau *= 2.0
    return weights, check


def synthesize_frequency(task: FrequencyTask) -> FrequencyTrace:
    """
    Run the alternating weight / scaling steps at one frequency.

    Starts from D = I and alternates until the trace cost improves by less
    than eps or max_iters is reached. A new D is adopted only when its delta
    is no larger than delta at the current D, so beta never rises. A step
    that fails after the first iterate ends the run with STEP_FAILED. The
    iterate with the smallest cost is
    kept, post-verified against the LMI with margin eps_pd/2, and tightened
    if the solver returned a boundary point.

    Args:
        task: Frequency task

    Returns:
        FrequencyTrace with iterates, final weights and termination reason
    """
    options = task.options
    structure = task.structure
    cost = CostWeights(task.alphas)
    trace = FrequencyTrace(index=task.index, omega=task.omega)

    free = cost.free_indices
    decoupled = decoupled_modules(task.n_sample, structure, free)
    excluded = sorted(
        [j for j in cost.frozen_indices if j not in task.frozen_weights] + decoupled
    )

    d = DScaling.identity(structure.n_modules)
    best: Optional[Tuple[float, StackedWeights, DScaling]] = None
    prev_beta = math.inf
    trace.reason = TerminationReason.MAX_ITERS

    for i in range(options.max_iters):
        try:
            step = step_weights(
                task.n_sample, task.v_a, task.w_a, d, structure, cost,
                options=options, frozen_weights=task.frozen_weights, omega=task.omega,
            )
        except (Infeasible, SolverFailure) as e:
            if best is None:
                failed = isinstance(e, Infeasible)
                trace.reason = TerminationReason.INFEASIBLE if failed else TerminationReason.SOLVER_FAILURE
                trace.message = "weight step infeasible" if failed else str(e)
                return trace
            trace.reason = TerminationReason.STEP_FAILED
            trace.message = f"weight step failed at iteration {i + 1}: {e}"
            logger.warning(f"omega={task.omega:.6g}: {trace.message}; best iterate kept")
            break

        if step.beta > prev_beta:
            # solver noise at the previous D; the previous iterate stands
            trace.reason = TerminationReason.CONVERGED
            trace.message = f"beta rose at iteration {i + 1}; previous iterate kept"
            break
        trace.betas.append(step.beta)
        if best is None or step.beta < best[0]:
            best = (step.beta, step.weights, d)

        if math.isinf(options.eps) or prev_beta - step.beta < options.eps:
            trace.reason = TerminationReason.CONVERGED
            break
        prev_beta = step.beta
        if i + 1 == options.max_iters:
            break

        delta_now = schur_max_eig(task.n_sample, step.weights, d, structure, excluded)
        try:
            dstep = step_dscaling(task.n_sample, step.weights, structure, options, excluded, task.omega)
        except (Infeasible, SolverFailure) as e:
            trace.deltas.append(delta_now)
            trace.reason = TerminationReason.STEP_FAILED
            trace.message = f"scaling step failed at iteration {i + 1}: {e}"
            logger.warning(f"omega={task.omega:.6g}: {trace.message}; best iterate kept")
            break

        logger.debug(
            f"omega={task.omega:.6g} iter={i + 1} beta={step.beta:.6e} "
            f"delta={dstep.delta:.6e} (current D {delta_now:.6e})"
        )
        if dstep.delta > delta_now:
            # The new D would make the current weights worse; the alternation is done.
            trace.deltas.append(delta_now)
            trace.reason = TerminationReason.CONVERGED
            trace.message = f"scaling step at iteration {i + 1} did not lower delta; D kept"
            break
        trace.deltas.append(dstep.delta)
        d = dstep.d

    _, weights, d_best = best
    margin = 0.5 * options.eps_pd_rel * float(np.linalg.norm(task.n_sample, 2))
    tunable = [j for j in free if j not in decoupled]
    weights, check = _tighten(task, weights, d_best, tunable, excluded, margin)
    trace.module_w = weights.module_w
    trace.module_v = weights.module_v
    trace.d = d_best
    trace.lmi_margin = check.min_eig
    if not check.feasible:
        trace.reason = TerminationReason.SOLVER_FAILURE
        trace.message = "returned weights fail the LMI post-check"
    return trace


def synthesize_frequency_safe(task: FrequencyTask) -> FrequencyTrace:
    """Worker entry point; unexpected errors become a solver-failure record."""
    try:
        return synthesize_frequency(task)
    except Exception as e:
        trace = FrequencyTrace(index=task.index, omega=task.omega)
        trace.reason = TerminationReason.SOLVER_FAILURE
        trace.message = f"{type(e).__name__}: {e}"
        return trace
