"""
Per-frequency LMI machinery for module-spec synthesis.

The sufficient condition for "module specs imply system spec" is the
Hermitian LMI

    [[W^-2 D_r^-1, N^H], [N, V^-2 D_l]] > 0

with V, W the stacked weights and (D_l, D_r) block-scalar scalings. Complex
LMIs are solved through their real symmetric embedding with cvxpy.
"""

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import cvxpy as cp
import numpy as np

from src.domain.errors import DimensionMismatch, Infeasible, NotHermitian, SolverFailure
from src.domain.models import InterconnectionStructure, SynthesisOptions
from src.domain.specs import CostWeights, DScaling, StackedWeights
from src.logger import get_logger

logger = get_logger()

HERMITIAN_TOL = 1e-10

_ACCEPTED = (cp.OPTIMAL, cp.OPTIMAL_INACCURATE)
_INFEASIBLE = (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE)


@dataclass(frozen=True)
class LmiCheck:
    """Outcome of the guarantee LMI test at one frequency."""
    feasible: bool
    min_eig: float


@dataclass(frozen=True)
class WeightStep:
    """Result of the weight step: recovered weights and the trace cost beta."""
    weights: StackedWeights
    beta: float
    status: str


@dataclass(frozen=True)
class DStep:
    """Result of the scaling step: new D (d_A = 1) and delta."""
    d: DScaling
    delta: float
    status: str


def hermitian_embed(h: np.ndarray, tol: float = HERMITIAN_TOL) -> np.ndarray:
    """
    Real symmetric embedding [[Re h, -Im h], [Im h, Re h]] of a Hermitian matrix.

    Each eigenvalue of h appears twice in the embedding, so definiteness is
    preserved both ways.

    Raises:
        NotHermitian: If h is not square or not Hermitian within tol
    """
    h = np.asarray(h, dtype=complex)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise NotHermitian(f"expected a square matrix, got shape {h.shape}")
    scale = max(1.0, float(np.max(np.abs(h), initial=0.0)))
    if float(np.max(np.abs(h - h.conj().T), initial=0.0)) > tol * scale:
        raise NotHermitian("matrix is not Hermitian within tolerance")
    re, im = h.real, h.imag
    return np.block([[re, -im], [im, re]])


def _partition(structure: InterconnectionStructure) -> Tuple[List[np.ndarray], List[np.ndarray]]:
    """Row and column index blocks of N: modules first, then the external block."""
    sum_m, sum_p = structure.total_inputs, structure.total_outputs
    rows = [np.arange(s.start, s.stop) for s in structure.input_slices()]
    rows.append(np.arange(sum_m, sum_m + structure.p_a))
    cols = [np.arange(s.start, s.stop) for s in structure.output_slices()]
    cols.append(np.arange(sum_p, sum_p + structure.m_a))
    return rows, cols


def _check_sample(n_sample: np.ndarray, structure: InterconnectionStructure) -> np.ndarray:
    n_sample = np.asarray(n_sample, dtype=complex)
    expected = (structure.total_inputs + structure.p_a, structure.total_outputs + structure.m_a)
    if n_sample.shape != expected:
        raise DimensionMismatch(f"N sample has shape {n_sample.shape}, expected {expected}")
    return n_sample


def _kept(structure: InterconnectionStructure, excluded: Sequence[int]) -> Tuple[List[int], np.ndarray, np.ndarray]:
    """Blocks that stay in the LMI and their row/column indices."""
    rows, cols = _partition(structure)
    blocks = [j for j in range(structure.n_modules) if j not in set(excluded)] + [structure.n_modules]
    return (
        blocks,
        np.concatenate([rows[b] for b in blocks]).astype(int),
        np.concatenate([cols[b] for b in blocks]).astype(int),
    )


def decoupled_modules(n_sample: np.ndarray, structure: InterconnectionStructure,
                      candidates: Sequence[int]) -> List[int]:
    """Modules whose rows and columns of N vanish; the LMI never constrains them."""
    rows, cols = _partition(structure)
    return [
        j for j in candidates
        if not np.any(n_sample[rows[j], :]) and not np.any(n_sample[:, cols[j]])
    ]


def lmi_matrix(n_sample: np.ndarray, weights: StackedWeights, d: DScaling,
               structure: InterconnectionStructure, excluded: Sequence[int] = ()) -> np.ndarray:
    """
    Complex Hermitian LMI matrix [[W^-2 D_r^-1, N^H], [N, V^-2 D_l]].

    Modules listed in excluded (zero redesign freedom) are dropped.
    """
    n_sample = _check_sample(n_sample, structure)
    weights.validate(structure)
    d_left, d_right = d.expand(structure)
    upper = weights.w_diag() ** -2 / d_right
    lower = weights.v_diag() ** -2 * d_left

    _, rows, cols = _kept(structure, excluded)
    n_red = n_sample[np.ix_(rows, cols)]
    return np.block([
        [np.diag(upper[cols]).astype(complex), n_red.conj().T],
        [n_red, np.diag(lower[rows]).astype(complex)],
    ])


def theorem1_feasible(n_sample: np.ndarray, weights: StackedWeights, d: DScaling,
                      structure: InterconnectionStructure, margin: float = 0.0,
                      excluded: Sequence[int] = ()) -> LmiCheck:
    """
    Test the sufficient LMI at one frequency.

    Feasibility is decided by a Cholesky factorization of the embedded
    matrix minus margin*I; the minimum eigenvalue is reported alongside.

    Args:
        n_sample: N at this frequency
        weights: Module and system weights at this frequency
        d: D-scalings
        structure: Module partition
        margin: Required strictness (the LMI must exceed margin*I)
        excluded: Modules with zero redesign freedom

    Raises:
        DimensionMismatch: If the inputs do not follow the module partition
    """
    embedded = hermitian_embed(lmi_matrix(n_sample, weights, d, structure, excluded))
    min_eig = float(np.linalg.eigvalsh(embedded)[0])
    try:
        np.linalg.cholesky(embedded - margin * np.eye(embedded.shape[0]))
        feasible = True
    except np.linalg.LinAlgError:
        feasible = False
    return LmiCheck(feasible, min_eig)


def schur_max_eig(n_sample: np.ndarray, weights: StackedWeights, d: DScaling,
                  structure: InterconnectionStructure, excluded: Sequence[int] = ()) -> float:
    """
    lambda_max(N W^2 D_r N^H - V^-2 D_l); negative iff the LMI holds.

    With excluded modules this is the delta that step_dscaling reports
    for the same weights and scalings.
    """
    n_sample = _check_sample(n_sample, structure)
    weights.validate(structure)
    d_left, d_right = d.expand(structure)
    _, rows, cols = _kept(structure, excluded)
    n_red = n_sample[np.ix_(rows, cols)]
    h = (n_red * (weights.w_diag()[cols] ** 2 * d_right[cols])) @ n_red.conj().T
    h -= np.diag(weights.v_diag()[rows] ** -2 * d_left[rows])
    return float(np.linalg.eigvalsh(0.5 * (h + h.conj().T))[-1])


def _solve(problem: cp.Problem, solver: str, omega: float, what: str) -> None:
    """Solve with the configured solver, falling back to cvxpy's default."""
    name = solver if solver in cp.installed_solvers() else None
    if name is None:
        logger.debug(f"Solver {solver} not installed, using cvxpy default")
    try:
        if name:
            problem.solve(solver=name)
        else:
            problem.solve()
    except cp.error.SolverError as e:
        raise SolverFailure(f"{what} failed at omega={omega:.6g} rad/s: {e}", omegas=[omega])
    if problem.status in _INFEASIBLE:
        raise Infeasible([omega])
    if problem.status not in _ACCEPTED:
        raise SolverFailure(
            f"{what} returned status '{problem.status}' at omega={omega:.6g} rad/s", omegas=[omega]
        )
    if problem.status == cp.OPTIMAL_INACCURATE:
        logger.debug(f"{what} solved inaccurately at omega={omega:.6g} rad/s")


def step_weights(n_sample: np.ndarray, v_a: np.ndarray, w_a: np.ndarray, d: DScaling,
                 structure: InterconnectionStructure, cost: CostWeights,
                 options: Optional[SynthesisOptions] = None,
                 frozen_weights: Optional[Dict[int, Tuple[np.ndarray, np.ndarray]]] = None,
                 omega: float = float("nan")) -> WeightStep:
    """
    Weight step: maximize module freedom for fixed D and system weights.

    Minimizes sum_j alpha_j (sum x_j + sum y_j) over x_j = diag(W_j^-2) and
    y_j = diag(V_j^-2), bounded below by the weight floor, subject to the
    LMI imposed as >= eps_pd I. Free modules that are decoupled from the
    rest of N get the weight cap directly.

    Args:
        n_sample: N at this frequency
        v_a: System output weights (p_A)
        w_a: System input weights (m_A)
        d: Current D-scalings
        structure: Module partition
        cost: Cost weights; alpha = inf freezes a module
        options: Solver settings
        frozen_weights: (w_j, v_j) at this frequency for frozen modules with given weights
        omega: Frequency, for diagnostics

    Returns:
        WeightStep with recovered weights (inverse square roots) and beta

    Raises:
        Infeasible: If the solver reports the LMI infeasible
        SolverFailure: If the solver fails or returns no point
    """
    options = options or SynthesisOptions()
    frozen_weights = frozen_weights or {}
    n_sample = _check_sample(n_sample, structure)
    if cost.n_modules != structure.n_modules:
        raise DimensionMismatch(f"{cost.n_modules} cost weights for {structure.n_modules} modules")

    rows, cols = _partition(structure)
    decoupled = set(decoupled_modules(n_sample, structure, cost.free_indices))
    excluded = [j for j in cost.frozen_indices if j not in frozen_weights] + sorted(decoupled)
    blocks, keep_rows, keep_cols = _kept(structure, excluded)
    ext = structure.n_modules

    scale = float(np.linalg.norm(n_sample, 2)) or 1.0
    n_scaled = n_sample[np.ix_(keep_rows, keep_cols)] / scale
    floor = options.weight_floor

    # Variables are x/scale and y/scale so the embedded LMI is O(1).
    x_vars: Dict[int, cp.Variable] = {}
    y_vars: Dict[int, cp.Variable] = {}
    upper_parts, lower_parts = [], []
    for b in blocks:
        d_b = d.d_a if b == ext else d.d_modules[b]
        if b == ext:
            upper_parts.append(np.asarray(w_a, dtype=float) ** -2 / (d_b * scale))
            lower_parts.append(np.asarray(v_a, dtype=float) ** -2 * d_b / scale)
        elif b in frozen_weights:
            w_j, v_j = frozen_weights[b]
            upper_parts.append(np.asarray(w_j, dtype=float) ** -2 / (d_b * scale))
            lower_parts.append(np.asarray(v_j, dtype=float) ** -2 * d_b / scale)
        else:
            x_vars[b] = cp.Variable(cols[b].size, name=f"x{b}")
            y_vars[b] = cp.Variable(rows[b].size, name=f"y{b}")
            upper_parts.append(x_vars[b] / d_b)
            lower_parts.append(y_vars[b] * d_b)

    values_x: Dict[int, np.ndarray] = {}
    values_y: Dict[int, np.ndarray] = {}
    status = cp.OPTIMAL
    if x_vars:
        size = keep_rows.size + keep_cols.size
        offdiag = np.zeros((size, size), dtype=complex)
        offdiag[:keep_cols.size, keep_cols.size:] = n_scaled.conj().T
        offdiag[keep_cols.size:, :keep_cols.size] = n_scaled
        c_emb = hermitian_embed(offdiag)
        z = cp.hstack(upper_parts + lower_parts)
        lmi = cp.diag(cp.hstack([z, z])) + c_emb
        constraints = [lmi >> options.eps_pd_rel * np.eye(2 * size)]
        objective = 0
        for j in x_vars:
            constraints += [x_vars[j] >= floor / scale, y_vars[j] >= floor / scale]
            objective = objective + cost.alphas[j] * (cp.sum(x_vars[j]) + cp.sum(y_vars[j]))
        problem = cp.Problem(cp.Minimize(objective), constraints)
        _solve(problem, options.solver, omega, "weight step")
        status = problem.status
        for j in x_vars:
            if x_vars[j].value is None or y_vars[j].value is None:
                raise SolverFailure(f"weight step returned no point at omega={omega:.6g} rad/s", omegas=[omega])
            values_x[j] = np.maximum(np.asarray(x_vars[j].value, dtype=float) * scale, floor)
            values_y[j] = np.maximum(np.asarray(y_vars[j].value, dtype=float) * scale, floor)
    for j in decoupled:
        values_x[j] = np.full(cols[j].size, floor)
        values_y[j] = np.full(rows[j].size, floor)

    module_w, module_v = [], []
    for j in range(structure.n_modules):
        if j in values_x:
            module_w.append(values_x[j] ** -0.5)
            module_v.append(values_y[j] ** -0.5)
        elif j in frozen_weights:
            module_w.append(np.asarray(frozen_weights[j][0], dtype=float))
            module_v.append(np.asarray(frozen_weights[j][1], dtype=float))
        else:
            module_w.append(np.full(cols[j].size, options.zero_freedom_weight))
            module_v.append(np.full(rows[j].size, options.zero_freedom_weight))

    beta = float(sum(
        cost.alphas[j] * (values_x[j].sum() + values_y[j].sum()) for j in values_x
    ))
    weights = StackedWeights(tuple(module_w), tuple(module_v), np.asarray(w_a), np.asarray(v_a))
    return WeightStep(weights, beta, status)


def _block_terms(n_sample: np.ndarray, weights: StackedWeights,
                 structure: InterconnectionStructure, blocks: Sequence[int]) -> List[np.ndarray]:
    """Hermitian terms H_b with N W^2 D_r N^H - V^-2 D_l = sum_b d_b H_b."""
    rows, cols = _partition(structure)
    w_all = weights.w_diag()
    v_all = weights.v_diag()
    size = n_sample.shape[0]
    terms = []
    for b in blocks:
        n_c = n_sample[:, cols[b]]
        h = (n_c * w_all[cols[b]] ** 2) @ n_c.conj().T
        penalty = np.zeros(size)
        penalty[rows[b]] = v_all[rows[b]] ** -2
        h = h - np.diag(penalty)
        terms.append(0.5 * (h + h.conj().T))
    return terms


def step_dscaling(n_sample: np.ndarray, weights: StackedWeights, structure: InterconnectionStructure,
                  options: Optional[SynthesisOptions] = None, excluded: Sequence[int] = (),
                  omega: float = float("nan")) -> DStep:
    """
    Scaling step: minimize delta s.t. N W^2 D_r N^H - V^-2 D_l <= delta I.

    The constraint is linear in the module scalars; d_A is fixed to 1 and
    the scalars are bounded to [d_min, d_max]. Excluded modules keep d = 1.

    Returns:
        DStep with the new scalings and delta, the maximum eigenvalue at the optimum

    Raises:
        SolverFailure: If the solver fails or returns no point
    """
    options = options or SynthesisOptions()
    n_sample = _check_sample(n_sample, structure)
    weights.validate(structure)
    blocks, keep_rows, _ = _kept(structure, excluded)
    module_blocks = blocks[:-1]
    terms = _block_terms(n_sample, weights, structure, blocks)
    terms = [h[np.ix_(keep_rows, keep_rows)] for h in terms]

    h_scale = max(float(np.max(np.abs(h), initial=0.0)) for h in terms) or 1.0
    embedded = [hermitian_embed(h / h_scale) for h in terms]
    h_ext = embedded[-1]

    d_values = np.ones(structure.n_modules)
    status = cp.OPTIMAL
    if module_blocks:
        d_var = cp.Variable(len(module_blocks), name="d")
        delta = cp.Variable(name="delta")
        size = h_ext.shape[0]
        scaled = h_ext
        for i in range(len(module_blocks)):
            scaled = scaled + d_var[i] * embedded[i]
        constraints = [
            delta * np.eye(size) - scaled >> 0,
            d_var >= options.d_min,
            d_var <= options.d_max,
        ]
        problem = cp.Problem(cp.Minimize(delta), constraints)
        _solve(problem, options.solver, omega, "scaling step")
        status = problem.status
        if d_var.value is None:
            raise SolverFailure(f"scaling step returned no point at omega={omega:.6g} rad/s", omegas=[omega])
        for i, j in enumerate(module_blocks):
            d_values[j] = float(np.clip(d_var.value[i], options.d_min, options.d_max))

    d_new = DScaling(tuple(d_values.tolist()), 1.0)
    total = terms[-1] + sum(d_values[j] * terms[i] for i, j in enumerate(module_blocks))
    delta_value = float(np.linalg.eigvalsh(total)[-1])
    return DStep(d_new, delta_value, status)
