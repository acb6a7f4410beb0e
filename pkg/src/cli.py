"""
Experiment orchestration: configuration files, the dispatch run, trace CSV
and summary report emission, and the command-line subcommands.
"""

import argparse
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from src.config import solver_defaults
from src.dispatch import (
    FIG1_COEFFICIENTS,
    FIG1_STEP_C,
    FIG1_STEP_GAMMA,
    DispatchInstance,
    DispatchOptimum,
    build_dispatch,
    fig1_fixture,
    global_set,
    gradient_bounds,
    kkt_residuals,
    local_problems,
    solve_centralized,
)
from src.errors import ConfigError, IoError, PpsgdaError
from src.graph import (
    DirectedGraph,
    PerronMatrix,
    components,
    from_spec,
    is_strongly_connected,
    perron_from_out_degrees,
    second_eigenvalue_modulus,
)
from src.ppsgda import RunConfig, RunResult, RunTrace, run
from src.problem import GradientBounds, LocalProblem, StepSizeSchedule
from src.projections import ScaledSimplex


THRESHOLDS = (0.04, 0.01)


# ----------------------------------------------------------------------
# Configuration schema
# ----------------------------------------------------------------------

class ProblemSpec(BaseModel):
    """Either the "fig1" preset or explicit dispatch coefficients."""
    model_config = ConfigDict(extra="forbid")

    preset: Optional[Literal["fig1"]] = None
    a: Optional[List[float]] = None
    b: Optional[List[float]] = None
    c: Optional[List[float]] = None
    demand: Optional[float] = None
    p_min: Optional[List[float]] = None
    p_max: Optional[List[float]] = None

    @model_validator(mode="after")
    def check_preset_or_coefficients(self):
        explicit = [self.a, self.b, self.c, self.demand, self.p_min, self.p_max]
        if self.preset is not None:
            if any(v is not None for v in explicit):
                raise ValueError("give either a preset or coefficients, not both")
            return self
        if any(v is None for v in explicit):
            raise ValueError("a, b, c, demand, p_min and p_max are all required without a preset")
        lengths = {len(self.a), len(self.b), len(self.c), len(self.p_min), len(self.p_max)}
        if len(lengths) != 1 or 0 in lengths:
            raise ValueError("coefficient lists must be non-empty and of equal length")
        return self

    @property
    def n(self) -> int:
        return len(FIG1_COEFFICIENTS["a"]) if self.preset == "fig1" else len(self.a)


class GraphSpec(BaseModel):
    """The "fig1" preset, an explicit 1-based edge list, or a named generator."""
    model_config = ConfigDict(extra="forbid")

    preset: Optional[Literal["fig1"]] = None
    edges: Optional[List[Tuple[int, int]]] = None
    generator: Optional[Literal["ring", "complete", "random"]] = None
    seed: Optional[int] = None
    edge_probability: float = Field(default=0.3, ge=0.0, le=1.0)

    @model_validator(mode="after")
    def check_single_source(self):
        given = [self.preset is not None, self.edges is not None, self.generator is not None]
        if sum(given) != 1:
            raise ValueError("set exactly one of preset, edges, generator")
        return self


class ScheduleSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    c: float = Field(default_factory=lambda: solver_defaults.step_c, gt=0.0)
    gamma: float = Field(default_factory=lambda: solver_defaults.step_gamma, gt=0.5, le=1.0)


class OutputSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    directory: str = Field(default_factory=lambda: solver_defaults.output_dir)
    trace_csv: str = "trace.csv"
    summary_json: str = "summary.json"


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: str = "experiment"
    problem: ProblemSpec
    graph: GraphSpec
    schedule: ScheduleSpec = Field(default_factory=ScheduleSpec)
    iterations: int = Field(default_factory=lambda: solver_defaults.iterations, ge=1)
    trace_stride: int = Field(default_factory=lambda: solver_defaults.trace_stride, ge=1)
    mu_box_upper: float = Field(default_factory=lambda: solver_defaults.mu_box_upper, gt=0.0)
    seed: int = Field(default_factory=lambda: solver_defaults.seed)
    initial_x: Union[Literal["projected-zero", "random"], List[float], List[List[float]]] = "projected-zero"
    output: OutputSpec = Field(default_factory=OutputSpec)


def fig1_config() -> ExperimentConfig:
    """The canonical 4-generator experiment: 4000 rounds, alpha_t = 15/(t+1)^0.6."""
    return ExperimentConfig(
        name="fig1",
        problem=ProblemSpec(preset="fig1"),
        graph=GraphSpec(preset="fig1"),
        schedule=ScheduleSpec(c=FIG1_STEP_C, gamma=FIG1_STEP_GAMMA),
        iterations=4000,
        trace_stride=10,
        mu_box_upper=100.0,
        seed=0,
    )


# ----------------------------------------------------------------------
# Resolved experiment
# ----------------------------------------------------------------------

@dataclass
class Experiment:
    """A validated configuration with every derived object built."""
    config: ExperimentConfig
    instance: DispatchInstance
    graph: DirectedGraph
    P: PerronMatrix
    schedule: StepSizeSchedule
    problems: List[LocalProblem]
    X: ScaledSimplex
    bounds: GradientBounds


def _build_instance(spec: ProblemSpec) -> DispatchInstance:
    if spec.preset == "fig1":
        return fig1_fixture()[0]
    return build_dispatch(spec.n, spec.a, spec.b, spec.c, spec.demand, spec.p_min, spec.p_max)


def _build_graph(spec: GraphSpec, n: int) -> DirectedGraph:
    if spec.preset == "fig1":
        return fig1_fixture()[1]
    return from_spec(n, edges=spec.edges, generator=spec.generator, seed=spec.seed,
                     edge_probability=spec.edge_probability)


def build_experiment(config: ExperimentConfig) -> Experiment:
    """Build instance, graph and Perron matrix; construction failures become ConfigError."""
    try:
        instance = _build_instance(config.problem)
    except PpsgdaError as e:
        raise ConfigError("problem", str(e)) from e
    if config.graph.preset == "fig1" and instance.n != 4:
        raise ConfigError("graph.preset", f"fig1 graph has 4 vertices, problem has {instance.n} generators")
    try:
        graph = _build_graph(config.graph, instance.n)
    except PpsgdaError as e:
        raise ConfigError("graph", str(e)) from e
    if not is_strongly_connected(graph):
        raise ConfigError("graph", f"not strongly connected, components {components(graph)}")
    P = perron_from_out_degrees(graph)
    problems = local_problems(instance, config.mu_box_upper)
    return Experiment(
        config=config,
        instance=instance,
        graph=graph,
        P=P,
        schedule=StepSizeSchedule(config.schedule.c, config.schedule.gamma),
        problems=problems,
        X=global_set(instance),
        bounds=gradient_bounds(instance, config.mu_box_upper),
    )


def _loc_path(loc: Sequence) -> str:
    return ".".join(str(part) for part in loc)


def parse_config(data: dict) -> ExperimentConfig:
    try:
        config = ExperimentConfig.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        raise ConfigError(_loc_path(first["loc"]), first["msg"]) from e
    build_experiment(config)
    return config


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    """Read and validate a JSON experiment file (unknown keys rejected, graph checked)."""
    path = Path(path)
    if not path.is_file():
        raise IoError(str(path), "configuration file not found")
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise IoError(str(path), str(e)) from e
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError("", f"not valid JSON ({e})") from e
    if not isinstance(data, dict):
        raise ConfigError("", "top level must be an object")
    config = parse_config(data)
    print(f"[CONFIG] Loaded '{config.name}' from {path}")
    return config


def save_config(config: ExperimentConfig, path: Union[str, Path]) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(config.model_dump_json(indent=2, exclude_none=True) + "\n", encoding="utf-8")
    except OSError as e:
        raise IoError(str(path), str(e)) from e
    return path


# ----------------------------------------------------------------------
# Summary report
# ----------------------------------------------------------------------

class OracleSummary(BaseModel):
    p_star: List[float]
    lambda_star: float
    mu_star: List[List[float]]
    objective: float


class SummaryReport(BaseModel):
    name: str
    n: int
    iterations: int
    final_max_rel_err: List[float]
    iterations_to_threshold: Dict[str, Optional[int]]
    final_consensus_residual: List[float]
    kkt: Dict[str, float]
    oracle: OracleSummary
    second_eigenvalue_modulus: float
    eps_x_violations: int
    eps_mu_violations: int
    feasibility_violations: int
    lyapunov_violations: int
    lyapunov_checked: int
    t0: Optional[int]
    min_u: Optional[float]
    wall_clock_seconds: float
    trace_csv: Optional[str] = None


def iterations_to_threshold(trace: RunTrace, threshold: float) -> Optional[int]:
    """First traced t from which the max relative error stays at or below threshold."""
    first = None
    for record in reversed(trace.records):
        if record.rel_err_max is None or float(np.max(record.rel_err_max)) > threshold:
            break
        first = record.t
    return first


def summarize(experiment: Experiment, optimum: DispatchOptimum, result: RunResult) -> SummaryReport:
    trace = result.trace
    x_bar = np.mean([s.x for s in result.states], axis=0)
    mus = np.stack([s.mu for s in result.states])
    kkt = kkt_residuals(experiment.instance, x_bar, optimum.lambda_star, mus)
    return SummaryReport(
        name=experiment.config.name,
        n=experiment.P.n,
        iterations=experiment.config.iterations,
        final_max_rel_err=[float(v) for v in result.final_relative_errors(optimum.p_star)],
        iterations_to_threshold={f"{thr:g}": iterations_to_threshold(trace, thr) for thr in THRESHOLDS},
        final_consensus_residual=[float(v) for v in result.final_consensus_residual()],
        kkt={
            "stationarity": kkt.stationarity,
            "primal": kkt.primal,
            "dual_negativity": kkt.dual_negativity,
            "complementarity": kkt.complementarity,
        },
        oracle=OracleSummary(
            p_star=[float(v) for v in optimum.p_star],
            lambda_star=optimum.lambda_star,
            mu_star=[[float(v) for v in row] for row in optimum.mu_star],
            objective=optimum.objective,
        ),
        second_eigenvalue_modulus=second_eigenvalue_modulus(experiment.P),
        eps_x_violations=trace.eps_x_violations,
        eps_mu_violations=trace.eps_mu_violations,
        feasibility_violations=trace.feasibility_violations,
        lyapunov_violations=trace.prop1_violations,
        lyapunov_checked=trace.prop1_checked,
        t0=trace.t0,
        min_u=trace.min_u,
        wall_clock_seconds=trace.elapsed_seconds,
    )


def write_summary(report: SummaryReport, path: Union[str, Path]) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(report.model_dump_json(indent=2) + "\n", encoding="utf-8")
    except OSError as e:
        raise IoError(str(path), str(e)) from e
    return path


# ----------------------------------------------------------------------
# Trace CSV
# ----------------------------------------------------------------------

def trace_columns(n: int, has_oracle: bool) -> List[str]:
    """t, alpha, per-agent blocks, then v_t, u_t, c_t when an oracle was supplied."""
    cols = ["t", "alpha"]
    for i in range(1, n + 1):
        if has_oracle:
            cols.append(f"rel_err_max_{i}")
        cols += [f"consensus_residual_{i}", f"eps_x_norm_{i}", f"eps_mu_norm_{i}"]
    if has_oracle:
        cols += ["v_t", "u_t", "c_t"]
    return cols


def trace_frame(trace: RunTrace) -> pd.DataFrame:
    rows = []
    for r in trace.records:
        row = [r.t, r.alpha]
        for i in range(trace.n):
            if trace.has_oracle:
                row.append(float(r.rel_err_max[i]))
            row += [float(r.consensus_residual[i]), float(r.eps_x_norm[i]), float(r.eps_mu_norm[i])]
        if trace.has_oracle:
            row += [r.v, r.u, r.c]
        rows.append(row)
    frame = pd.DataFrame(rows, columns=trace_columns(trace.n, trace.has_oracle))
    if rows:
        frame["t"] = frame["t"].astype(int)
    return frame


def emit_trace_csv(trace: RunTrace, path: Union[str, Path]) -> Path:
    """One row per traced round, 12 significant digits, '\\n' line endings."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        trace_frame(trace).to_csv(path, index=False, float_format="%.12g", lineterminator="\n")
    except OSError as e:
        raise IoError(str(path), str(e)) from e
    return path


def read_trace_csv(path: Union[str, Path]) -> pd.DataFrame:
    path = Path(path)
    if not path.is_file():
        raise IoError(str(path), "trace file not found")
    try:
        return pd.read_csv(path)
    except (OSError, pd.errors.ParserError) as e:
        raise IoError(str(path), str(e)) from e


# ----------------------------------------------------------------------
# Orchestration
# ----------------------------------------------------------------------

def simulate(config: ExperimentConfig, verbose: bool = False) -> Tuple[Experiment, DispatchOptimum, RunResult]:
    """Build the experiment, solve the oracle and run ppsgda against it."""
    experiment = build_experiment(config)
    optimum = solve_centralized(experiment.instance, verbose=verbose)
    if verbose:
        print(f"[GRAPH] {experiment.graph.n} agents, {len(experiment.graph.edges)} edges "
              f"(self-loops included), |lambda_2| = {second_eigenvalue_modulus(experiment.P):.4f}")
    run_config = RunConfig(
        iterations=config.iterations,
        schedule=experiment.schedule,
        trace_stride=config.trace_stride,
        seed=config.seed,
        initial_x=config.initial_x if isinstance(config.initial_x, str) else np.asarray(config.initial_x),
        verbose=verbose,
    )
    result = run(run_config, experiment.P, experiment.problems, experiment.X,
                 oracle_optimum=optimum.saddle_point(), bounds=experiment.bounds)
    return experiment, optimum, result


def run_experiment(config: ExperimentConfig, output_dir: Optional[Union[str, Path]] = None,
                   verbose: bool = True) -> SummaryReport:
    """Run one experiment and write its trace CSV and summary JSON."""
    experiment, optimum, result = simulate(config, verbose=verbose)
    out = Path(output_dir) if output_dir is not None else Path(config.output.directory)
    trace_path = emit_trace_csv(result.trace, out / config.output.trace_csv)
    report = summarize(experiment, optimum, result)
    report.trace_csv = str(trace_path)
    summary_path = write_summary(report, out / config.output.summary_json)
    if verbose:
        print(f"[TRACE] {len(result.trace.records)} rows -> {trace_path}")
        print(f"[RUN] Final max relative error {max(report.final_max_rel_err):.4g}; "
              f"summary -> {summary_path}")
    return report


def format_oracle(instance: DispatchInstance, optimum: DispatchOptimum) -> str:
    kkt = kkt_residuals(instance, optimum.p_star, optimum.lambda_star, optimum.mu_star)
    lines = [f"lambda* = {optimum.lambda_star:.12g}", f"cost    = {optimum.objective:.12g}"]
    for i in range(instance.n):
        lines.append(f"  p*_{i + 1} = {optimum.p_star[i]:.12g}   "
                     f"mu_min = {optimum.mu_star[i, 0]:.6g}   mu_max = {optimum.mu_star[i, 1]:.6g}")
    lines.append(f"worst KKT residual = {kkt.worst():.3e}")
    return "\n".join(lines)


# ----------------------------------------------------------------------
# Command line
# ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ppsgda",
        description="Projected push-sum gradient descent-ascent on distributed economic dispatch",
    )
    parser.add_argument("--log-file", action="store_true",
                        help="tee console output into a timestamped file under the log directory")
    sub = parser.add_subparsers(dest="command", required=True)

    run_cmd = sub.add_parser("run", help="run the experiment described by a JSON config")
    run_cmd.add_argument("config", type=Path)
    run_cmd.add_argument("--output-dir", type=Path, default=None)

    fig1_cmd = sub.add_parser("fig1", help="run the 4-generator preset")
    fig1_cmd.add_argument("--output-dir", type=Path, default=None)
    fig1_cmd.add_argument("--iterations", type=int, default=None)

    verify_cmd = sub.add_parser("verify", help="run the property suite")
    verify_cmd.add_argument("--quick", action="store_true", help="fewer random cases per check")
    verify_cmd.add_argument("--seed", type=int, default=None)

    oracle_cmd = sub.add_parser("oracle", help="print the centralized optimum of a config")
    oracle_cmd.add_argument("config", type=Path)
    return parser


def _report_failed(report: SummaryReport) -> bool:
    return (report.eps_x_violations + report.eps_mu_violations + report.feasibility_violations
            + report.lyapunov_violations) > 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Dispatch a subcommand; 0 on success, 1 on a failed check or error."""
    from src.verification import CheckResult, run_suite

    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            report = run_experiment(load_config(args.config), args.output_dir)
            return 1 if _report_failed(report) else 0
        if args.command == "fig1":
            config = fig1_config()
            if args.iterations is not None:
                config = config.model_copy(update={"iterations": args.iterations})
                parse_config(config.model_dump())
            report = run_experiment(config, args.output_dir)
            return 1 if _report_failed(report) else 0
        if args.command == "verify":
            seed = args.seed if args.seed is not None else solver_defaults.seed
            reports = run_suite(quick=args.quick, seed=seed)
            for r in reports:
                print(f"[VERIFY] {r.result.value} {r.name}: {r.detail}")
            failed = [r for r in reports if r.result is CheckResult.FAIL]
            print(f"[VERIFY] {len(reports) - len(failed)}/{len(reports)} checks passed")
            return 1 if failed else 0
        if args.command == "oracle":
            experiment = build_experiment(load_config(args.config))
            print(format_oracle(experiment.instance, solve_centralized(experiment.instance, verbose=True)))
            return 0
    except PpsgdaError as e:
        print(f"[ERROR] {type(e).__name__}: {e}")
        return 1
    return 1
