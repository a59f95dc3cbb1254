"""
Command-line front end.

Subcommands follow the modular redesign work-flow: synthesize module specs
from a system spec, verify redesigned modules or systems, sweep design
regions, run incremental redesign and export FRF data.

Exit codes: 0 success, 1 error, 2 infeasible frequencies (synthesize) or
spec violation (verify-module, verify-system).
"""

import argparse
import dataclasses
import os
import sys
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from src.config import Config
from src.domain.errors import (
    GuaranteeViolated, Infeasible, InvalidParameter, ModSpecError, ModelFileError,
    RegionInclusionViolated, SolverFailure
)
from src.domain.models import FrfMatrix, SynthesisOptions
from src.domain.specs import CostWeights, ModuleSpec, SystemSpec
from src.export import ResultExporter
from src.logger import AppLogger, get_logger
from src.model_io import (
    GridSpec, ModelDefinition, ModelStore, load_frf, load_module_spec, load_system_spec
)
from src.model_library import ModelBuilder, make_builder
from src.services.spec_service import (
    check_module_spec, check_system_spec, system_spec_from_absolute_gamma,
    system_spec_from_relative_gamma
)
from src.services.synthesis_service import SynthesisService, alpha_sweep
from src.services.verification_service import (
    RegionGrid, brute_force_region, incremental_oracles, incremental_redesign,
    modular_region, sample_guarantee
)

logger = get_logger()

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_FAIL = 2

DEFAULT_GRID = "logspace,0.5,5,100"


@dataclass
class RunConfig:
    """Resolved settings of one CLI run."""
    subcommand: str
    output_dir: str
    options: SynthesisOptions
    jobs: int
    seed: int
    rcond_threshold: float
    model_path: Optional[str] = None
    builder_name: Optional[str] = None
    builder_params: Optional[str] = None
    grid: Optional[str] = None
    spec_path: Optional[str] = None
    gamma: Optional[float] = None
    absolute_gamma: Optional[float] = None
    extra: Dict[str, object] = field(default_factory=dict)

    def validate(self) -> None:
        """Check referenced files exist and the output dir is writable."""
        for path in (self.model_path, self.spec_path):
            if path and not os.path.exists(path):
                raise ModelFileError(path, "", "file not found")
        try:
            os.makedirs(self.output_dir, exist_ok=True)
        except OSError as e:
            raise OSError(f"cannot create output directory {self.output_dir}: {e}")
        if not os.access(self.output_dir, os.W_OK):
            raise OSError(f"output directory {self.output_dir} is not writable")

    def out(self, name: str) -> str:
        return os.path.join(self.output_dir, name)


def parse_grid(text: str) -> GridSpec:
    """Parse "logspace,f_min,f_max,n", "linspace,..." or "points,f1,f2,..." (Hz)."""
    parts = [p.strip() for p in text.split(",") if p.strip()]
    if not parts:
        raise InvalidParameter("empty grid description")
    kind = parts[0]
    try:
        if kind in ("logspace", "linspace"):
            if len(parts) != 4:
                raise InvalidParameter(f"{kind} grid needs f_min,f_max,n")
            return GridSpec(kind, float(parts[1]), float(parts[2]), int(parts[3]))
        if kind == "points":
            return GridSpec.points([float(p) for p in parts[1:]])
    except ValueError as e:
        raise InvalidParameter(f"cannot parse grid {text!r}: {e}")
    raise InvalidParameter(f"unknown grid type '{kind}'")


def _builder(cfg: RunConfig) -> ModelBuilder:
    if not cfg.builder_name:
        raise InvalidParameter(f"'{cfg.subcommand}' needs --builder")
    return make_builder(cfg.builder_name, cfg.builder_params)


def _model(cfg: RunConfig) -> ModelDefinition:
    """Model from --model, or from --builder on --grid."""
    if cfg.model_path:
        definition = ModelStore(cfg.model_path).load()
        if cfg.grid:
            if any(isinstance(m, FrfMatrix) for m in definition.modules):
                raise InvalidParameter("--grid cannot resample a model with raw FRF modules")
            definition = dataclasses.replace(definition, grid_spec=parse_grid(cfg.grid))
        return definition
    return ModelDefinition.from_builder(_builder(cfg), parse_grid(cfg.grid or DEFAULT_GRID))


def _system_spec(cfg: RunConfig, g_a: FrfMatrix) -> SystemSpec:
    if cfg.spec_path:
        return load_system_spec(cfg.spec_path, g_a)
    if cfg.gamma is not None:
        return system_spec_from_relative_gamma(g_a, cfg.gamma)
    if cfg.absolute_gamma is not None:
        return system_spec_from_absolute_gamma(g_a, cfg.absolute_gamma)
    raise InvalidParameter("a system spec is required: --system-spec, --gamma or --abs-gamma")


def _service(cfg: RunConfig, config: Config) -> SynthesisService:
    return SynthesisService(config=config, options=cfg.options, jobs=cfg.jobs)


def cmd_synthesize(cfg: RunConfig, config: Config) -> int:
    """Compute module specs and write them with trace.csv."""
    definition = _model(cfg)
    system = definition.assemble(cfg.rcond_threshold)
    spec = _system_spec(cfg, system.g_a)
    n_modules = system.structure.n_modules

    cost = CostWeights.parse(str(cfg.extra.get("alpha") or "uniform"), n_modules)
    frozen: Dict[int, ModuleSpec] = {}
    for item in cfg.extra.get("frozen_spec") or []:
        name, _, path = str(item).partition("=")
        if name not in definition.names or not path:
            raise InvalidParameter(f"--frozen-spec expects <module name>=<file>, got {item!r}")
        frozen[definition.names.index(name)] = load_module_spec(path)
    if frozen:
        cost = CostWeights(cost.alphas, frozen)

    exit_code = EXIT_OK
    with _service(cfg, config) as service:
        try:
            result = service.synthesize(system, spec, cost)
        except Infeasible as e:
            logger.warning(f"Synthesis infeasible at {len(e.omegas)} frequencies; writing partial results")
            result, exit_code = e.partial, EXIT_FAIL
        except SolverFailure as e:
            if e.partial is None:
                raise
            logger.error(f"Solver failure: {e}; writing partial results")
            result, exit_code = e.partial, EXIT_ERROR

    paths = ResultExporter.export_module_specs(result.module_specs, cfg.output_dir)
    traced = ResultExporter.export_trace(result.trace, cfg.out("trace.csv"))
    if not paths or not traced:
        return EXIT_ERROR
    for path in paths:
        print(path)
    return exit_code


def _print_verdict(title: str, rows) -> None:
    print(title)
    print(f"{'omega_hz':>14}  {'margin':>12}  pass")
    for row in rows:
        print(f"{row['omega_hz']:>14.6g}  {row['margin']:>12.6g}  {'yes' if row['pass'] else 'NO'}")


def cmd_verify_module(cfg: RunConfig, config: Config) -> int:
    """Check a redesigned module FRF against its module spec."""
    spec = load_module_spec(str(cfg.extra["module_spec"]))
    candidate_path = cfg.extra.get("candidate")
    if candidate_path:
        candidate = load_frf(str(candidate_path), spec.grid)
    else:
        definition = _model(cfg)
        if spec.name not in definition.names:
            raise InvalidParameter(f"model has no module named '{spec.name}'")
        frf = definition.module_frfs()[definition.names.index(spec.name)]
        candidate = _on_grid(frf, spec)
    verdict = check_module_spec(spec, candidate)
    _print_verdict(f"Module '{spec.name}' (pass iff margin <= 1)", verdict.rows())
    if not ResultExporter.export_verdict(verdict, cfg.out(f"{spec.name}_verdict.csv")):
        return EXIT_ERROR
    logger.info(f"Module '{spec.name}': max margin {verdict.max_margin:.6g}, "
                f"{'pass' if verdict.overall else 'FAIL'}")
    return EXIT_OK if verdict.overall else EXIT_FAIL


def _on_grid(frf: FrfMatrix, spec: ModuleSpec) -> FrfMatrix:
    if len(frf.grid) != len(spec.grid) or not np.allclose(frf.grid.points, spec.grid.points, rtol=1e-9, atol=0.0):
        raise ModelFileError(str(spec.name), "/omega_hz", "candidate grid differs from the module spec grid")
    return FrfMatrix(spec.grid, frf.samples)


def cmd_verify_system(cfg: RunConfig, config: Config) -> int:
    """Check a redesigned system against the system spec, or sample the guarantee."""
    definition = _model(cfg)
    system = definition.assemble(cfg.rcond_threshold)
    spec = _system_spec(cfg, system.g_a)

    module_spec_paths = cfg.extra.get("module_specs") or []
    if module_spec_paths:
        specs = [load_module_spec(str(p)) for p in module_spec_paths]
        by_name = {s.name: s for s in specs}
        ordered = [by_name[name] for name in definition.names if name in by_name]
        if len(ordered) != len(definition.names):
            raise InvalidParameter("need one module spec per model module (matched by name)")
        n_samples = int(cfg.extra.get("samples") or config.get_n_samples())
        try:
            report = sample_guarantee(system, spec, ordered, n_samples, cfg.seed)
        except GuaranteeViolated as e:
            logger.error(str(e))
            return EXIT_FAIL
        print(f"{report.n_passed}/{n_samples} samples pass; worst system margin {report.worst_margin:.6g}")
        return EXIT_OK

    candidate_path = cfg.extra.get("candidate")
    candidate_params = cfg.extra.get("candidate_params")
    if candidate_path:
        g_a_hat = _candidate_system(str(candidate_path), spec, cfg.rcond_threshold)
    elif candidate_params:
        builder = _builder(cfg)
        changed = make_builder(cfg.builder_name, ",".join(filter(None, [cfg.builder_params, str(candidate_params)])))
        g_a_hat = changed.assemble(system.grid, cfg.rcond_threshold).g_a
        logger.debug(f"Candidate parameters {changed.params()} (baseline {builder.params()})")
    else:
        raise InvalidParameter("verify-system needs --candidate, --candidate-params or --module-specs")

    verdict = check_system_spec(spec, g_a_hat)
    _print_verdict("System (pass iff margin < 1)", verdict.rows())
    ok = (ResultExporter.export_verdict(verdict, cfg.out("system_verdict.csv"))
          and ResultExporter.export_spec_envelope(spec, g_a_hat, cfg.out("spec_envelope.csv")))
    if not ok:
        return EXIT_ERROR
    return EXIT_OK if verdict.overall else EXIT_FAIL


def _candidate_system(path: str, spec: SystemSpec, rcond_threshold: float) -> FrfMatrix:
    """Ĝ_A from a redesigned model file or a raw FRF file."""
    with open(path, "r", encoding="utf-8") as f:
        is_model = '"modules"' in f.read()
    if not is_model:
        return load_frf(path, spec.grid)
    g_a_hat = ModelStore(path).load().assemble(rcond_threshold).g_a
    if len(g_a_hat.grid) != len(spec.grid) or not np.allclose(g_a_hat.grid.points, spec.grid.points, rtol=1e-9, atol=0.0):
        raise ModelFileError(path, "/grid", "candidate grid differs from the system spec grid")
    return FrfMatrix(spec.grid, g_a_hat.samples)


def _region_params(cfg: RunConfig, builder: ModelBuilder) -> List[str]:
    names = cfg.extra.get("region_params")
    if names:
        return [p.strip() for p in str(names).split(",") if p.strip()]
    return list(builder.design_parameters())[:2]


def cmd_sweep(cfg: RunConfig, config: Config) -> int:
    """Brute-force and modular design regions over two parameters."""
    builder = _builder(cfg)
    grid = parse_grid(cfg.grid or DEFAULT_GRID).build()
    system = builder.assemble(grid, cfg.rcond_threshold)
    spec = _system_spec(cfg, system.g_a)

    cells = int(cfg.extra.get("cells") or config.get_region_cells())
    span = float(cfg.extra.get("span") or config.get_region_span())
    region = RegionGrid.around(builder, _region_params(cfg, builder), span, cells)
    brute_force_region(builder, region, spec, cfg.rcond_threshold, jobs=cfg.jobs)

    n_alphas = int(cfg.extra.get("alphas") or config.get_alpha_sweep())
    with _service(cfg, config) as service:
        spec_sets = service.synthesize_sweep(system, spec, alpha_sweep(system.structure.n_modules, n_alphas))
    modular_region(builder, region, spec_sets)

    ok = (ResultExporter.export_rows(region.rows(), ["p1", "p2", "brute_pass", "modular_pass"], cfg.out("region.csv"))
          and ResultExporter.export_summary(region.summary(), cfg.out("region_summary.json")))
    if not ok:
        return EXIT_ERROR
    region.assert_sound()
    print(f"brute-force cells {region.summary()['brute_accepted']}, modular cells "
          f"{region.summary()['modular_accepted']}, area ratio {region.area_ratio():.4f}")
    return EXIT_OK


def cmd_incremental(cfg: RunConfig, config: Config) -> int:
    """Incremental redesign with re-baselining after each commit."""
    builder = _builder(cfg)
    grid = parse_grid(cfg.grid or DEFAULT_GRID).build()
    gamma_total = float(cfg.gamma if cfg.gamma is not None else 0.5)
    n_iterations = int(cfg.extra.get("iterations") or 1)
    parameters = cfg.extra.get("parameters")
    parameters = [p.strip() for p in str(parameters).split(",")] if parameters else None
    lower_fraction = float(cfg.extra.get("lower_fraction") or 0.05)

    with _service(cfg, config) as service:
        result = incremental_redesign(
            builder, grid, gamma_total, n_iterations, parameters, lower_fraction,
            config.get_bisection_tol(), service,
        )
    summary = result.summary()

    brute_cells = int(cfg.extra.get("brute_cells") or 0)
    names = parameters or list(builder.design_parameters())
    oracle_rows = []
    if brute_cells > 0 and len(names) == 2:
        oracles = incremental_oracles(
            builder, grid, gamma_total, n_iterations, names, lower_fraction, brute_cells,
            rcond_threshold=cfg.rcond_threshold, jobs=cfg.jobs,
        )
        for label, optimum in oracles.items():
            summary[f"brute_force_optimum_{label}"] = {"objective": optimum.objective, "params": optimum.params}
            oracle_rows.append({"oracle": label, "objective": optimum.objective,
                                **{f"p{i + 1}": optimum.params.get(p) for i, p in enumerate(names)}})
    elif brute_cells > 0:
        logger.warning("Brute-force optimum needs exactly two parameters; skipped")

    ok = (ResultExporter.export_rows(result.rows(), ["iter", "param", "value", "cum_objective"],
                                     cfg.out("trajectory.csv"))
          and ResultExporter.export_summary(summary, cfg.out("incremental_summary.json")))
    if oracle_rows:
        ok = ok and ResultExporter.export_rows(oracle_rows, ["oracle", "objective", "p1", "p2"],
                                               cfg.out("brute_force.csv"))
    if not ok:
        return EXIT_ERROR
    print(f"{len(result.steps)}/{n_iterations} iterations, cumulative objective {result.cum_objective:.6g}")
    return EXIT_OK if result.completed else EXIT_FAIL


def cmd_export_frf(cfg: RunConfig, config: Config) -> int:
    """Write the model with raw FRF modules plus system_frf.csv."""
    definition = _model(cfg)
    system = definition.assemble(cfg.rcond_threshold)
    ModelStore(cfg.out("model_frf.json")).save(definition, as_frf=True)
    if not ResultExporter.export_system_frf(system.g_a, cfg.out("system_frf.csv")):
        return EXIT_ERROR
    return EXIT_OK


COMMANDS = {
    "synthesize": cmd_synthesize,
    "verify-module": cmd_verify_module,
    "verify-system": cmd_verify_system,
    "sweep": cmd_sweep,
    "incremental": cmd_incremental,
    "export-frf": cmd_export_frf,
}


def _add_model_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--model", help="Model JSON file")
    parser.add_argument("--builder", help="Built-in model (two_dof, chain, plate_pillar)")
    parser.add_argument("--params", help="Builder parameters, e.g. k=90,m_1=1")
    parser.add_argument("--grid", help=f"Frequency grid in Hz (default {DEFAULT_GRID})")


def _add_spec_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--system-spec", help="System spec JSON file")
    parser.add_argument("--gamma", type=float, help="Relative system spec gamma")
    parser.add_argument("--abs-gamma", type=float, help="Absolute system spec gamma")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="modspec", description="Modular FRF redesign toolkit")
    parser.add_argument("--config", default="modspec.json", help="Configuration file")
    parser.add_argument("--log-level", help="Console/file log level")
    parser.add_argument("--log-dir", help="Log directory ('' disables the log file)")
    parser.add_argument("--jobs", type=int, help="Worker processes (default: MODSPEC_JOBS or config)")
    parser.add_argument("--seed", type=int, help="Random seed")
    parser.add_argument("--eps", type=float, help="Alternation stopping tolerance")
    parser.add_argument("--max-iters", type=int, help="Alternation iteration limit")
    parser.add_argument("--eps-pd", type=float, help="Relative positive-definiteness margin of the LMI")
    parser.add_argument("--out", default="out", help="Output directory")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synthesize", help="Compute module specs from a system spec")
    _add_model_args(p)
    _add_spec_args(p)
    p.add_argument("--alpha", default="uniform", help='Cost weights: "uniform" or a list like 1,inf')
    p.add_argument("--frozen-spec", action="append", default=[],
                   help="Keep a module's weights: <module name>=<module spec file>")

    p = sub.add_parser("verify-module", help="Check a redesigned module against its spec")
    _add_model_args(p)
    p.add_argument("--module-spec", required=True, help="Module spec JSON file")
    p.add_argument("--candidate", help="Raw FRF JSON of the redesigned module")

    p = sub.add_parser("verify-system", help="Check a redesigned system against the system spec")
    _add_model_args(p)
    _add_spec_args(p)
    p.add_argument("--candidate", help="Redesigned model JSON or raw system FRF JSON")
    p.add_argument("--candidate-params", help="Builder parameters of the redesigned system")
    p.add_argument("--module-specs", nargs="+", help="Module spec files: sample the modular guarantee")
    p.add_argument("--samples", type=int, help="Random module redesigns to draw")

    p = sub.add_parser("sweep", help="Brute-force vs modular design regions")
    _add_model_args(p)
    _add_spec_args(p)
    p.add_argument("--region-params", help="Two design parameters, e.g. m_1,m_2")
    p.add_argument("--cells", type=int, help="Cells per axis")
    p.add_argument("--span", type=float, help="Relative half-width around nominal")
    p.add_argument("--alphas", type=int, help="Cost-weight distributions in the sweep")

    p = sub.add_parser("incremental", help="Incremental redesign")
    _add_model_args(p)
    p.add_argument("--gamma", type=float, default=0.5, help="Total relative gamma")
    p.add_argument("--iterations", type=int, default=1, help="Number of redesign steps")
    p.add_argument("--parameters", help="Design parameters to change")
    p.add_argument("--lower-fraction", type=float, default=0.05, help="Search bound as a fraction of the value")
    p.add_argument("--brute-cells", type=int, default=0, help="Cells per axis of the brute-force optimum")

    p = sub.add_parser("export-frf", help="Write the model as raw FRFs and system_frf.csv")
    _add_model_args(p)
    return parser


def _run_config(args: argparse.Namespace, config: Config) -> RunConfig:
    options = config.get_synthesis_options()
    overrides = {
        name: value for name, value in (
            ("eps", args.eps), ("max_iters", args.max_iters), ("eps_pd_rel", args.eps_pd)
        ) if value is not None
    }
    if overrides:
        options = dataclasses.replace(options, **overrides)
    known = {"config", "log_level", "log_dir", "jobs", "seed", "eps", "max_iters", "eps_pd", "out",
             "command", "model", "builder", "params", "grid", "system_spec", "gamma", "abs_gamma"}
    return RunConfig(
        subcommand=args.command,
        output_dir=args.out,
        options=options,
        jobs=args.jobs if args.jobs is not None else config.get_jobs(),
        seed=args.seed if args.seed is not None else config.get_seed(),
        rcond_threshold=config.get_rcond_threshold(),
        model_path=getattr(args, "model", None),
        builder_name=getattr(args, "builder", None),
        builder_params=getattr(args, "params", None),
        grid=getattr(args, "grid", None),
        spec_path=getattr(args, "system_spec", None),
        gamma=getattr(args, "gamma", None),
        absolute_gamma=getattr(args, "abs_gamma", None),
        extra={k: v for k, v in vars(args).items() if k not in known},
    )


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Parse arguments, run one subcommand and return its exit code."""
    args = build_parser().parse_args(argv)
    config = Config(args.config)
    log_dir = args.log_dir if args.log_dir is not None else config.get_log_dir()
    AppLogger.setup(log_level=args.log_level or config.get_log_level(), log_dir=log_dir or None, force=True)

    try:
        cfg = _run_config(args, config)
        cfg.validate()
        logger.info(f"Running '{cfg.subcommand}' (jobs={cfg.jobs}, out={cfg.output_dir})")
        return COMMANDS[cfg.subcommand](cfg, config)
    except ModelFileError as e:
        logger.error(f"File error: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR
    except RegionInclusionViolated as e:
        logger.error(f"Soundness check failed: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR
    except (ModSpecError, ValueError, OSError) as e:
        logger.error(f"{type(e).__name__}: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR
