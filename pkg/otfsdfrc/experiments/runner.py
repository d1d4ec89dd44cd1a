"""Experiment orchestration: optimize, region sweep, AF slices, BER and check.

Every experiment builds a `Scenario` from its configuration, runs its stages
inside `stage(...)` so failures carry the stage name, and returns the CSV /
YAML artifacts it wrote. `run_experiment` adds `manifest.json` and
`diagnostics.json`.
"""

from collections.abc import Iterator
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path

import numpy as np
import pandas as pd
import yaml
from loguru import logger
from tqdm import tqdm

from .. import __version__
from ..channel import ChannelModel, LinkOperators, PilotDictionary, build_link_operators
from ..diagnostics import get_collector
from ..errors import DfrcError, ExperimentError
from ..grid import GridConfig, KernelSet, Placement, build_delay_doppler_kernels, validate_guard
from ..manifest import ManifestBuilder
from ..metrics import capacity_lower_bound, empirical_af
from ..montecarlo import BerConfig, run_ber
from ..optimizer import (
    DesignState,
    ProblemSpec,
    SolveResult,
    SolverOptions,
    best_pilot_share,
    resolve_scales,
    restore_feasibility,
    solve,
    solve_multistart,
    split_design,
)
from ..utils import db, log_stage, max_workers, spawn_seeds
from .config import ExperimentConfig
from .patterns import PATTERNS, generate_pattern, pilot_shape, save_placement

DEFAULT_PILOT_SHARE = 0.5
# ISL under ISL_ZERO * budget^2 counts as zero
ISL_ZERO = 1e-12


@dataclass
class RunResult:
    """Artifacts written by one experiment, keyed by kind."""

    experiment: str
    out_dir: Path
    artifacts: dict[str, Path] = field(default_factory=dict)
    summary: list[dict] = field(default_factory=list)
    success: bool = True


@dataclass(frozen=True, eq=False)
class Scenario:
    """Grid, placement, channel model and the operators built from them."""

    config: ExperimentConfig
    cfg: GridConfig
    placement: Placement
    model: ChannelModel

    @classmethod
    def from_config(cls, config: ExperimentConfig) -> "Scenario":
        cfg = config.grid.build()
        model = config.channel.build()
        placement = config.placement.build(cfg, model.L, model.Q, config.base_dir)
        return cls(config, cfg, placement, model)

    def with_placement(self, placement: Placement) -> "Scenario":
        return replace(self, placement=placement)

    @cached_property
    def kernels(self) -> KernelSet:
        l_hat, q_hat = self.config.sensing.bins(self.config.channel)
        return build_delay_doppler_kernels(
            self.cfg, self.placement, l_hat, q_hat, self.config.sensing.include_mainlobe
        )

    @cached_property
    def link(self) -> LinkOperators:
        return build_link_operators(self.cfg, self.placement, self.model)

    @property
    def dictionary(self) -> PilotDictionary:
        return self.link.dictionary

    def spec(self, eta: float, scales: tuple[float | None, float | None] = (None, None)) -> ProblemSpec:
        problem = self.config.problem
        return ProblemSpec(
            eta=eta,
            p_max=problem.p_max,
            xi_min=problem.xi(self.cfg),
            kernels=self.kernels,
            model=self.model,
            dictionary=self.dictionary,
            sinr_scale=scales[0],
            isl_scale=scales[1],
        )

    def pattern_scenario(self, kind: str) -> "Scenario":
        k_p, k_c = self.placement.k_p, self.placement.k_c
        return self.with_placement(
            generate_pattern(kind, self.cfg, k_p, k_c, self.model.L, self.model.Q)
        )


@contextmanager
def stage(name: str, **fields) -> Iterator[None]:
    """Run a block as experiment stage `name`; any failure becomes ExperimentError."""
    log_stage(name, **fields)
    try:
        yield
    except ExperimentError:
        raise
    except Exception as e:
        code = "STAGE_FAILED" if isinstance(e, DfrcError) else "INTERNAL_ERROR"
        get_collector().error(code, f"{type(e).__name__}: {e}", stage=name)
        logger.error(f"Stage {name} failed: {e}")
        raise ExperimentError(name, e) from e
    logger.success(f"Stage {name} done")


# --- designs ----------------------------------------------------------------


def initial_state(spec: ProblemSpec, options: SolverOptions, kind: str | None = None) -> DesignState:
    """Start point: a pilot shape of `kind` at full budget split by `init_pilot_share`."""
    kind = kind or options.init_pattern
    shape = pilot_shape(kind if kind in PATTERNS else "flat", spec.placement.k_p)
    share = options.init_pilot_share
    if share == "auto":
        scaled = resolve_scales(spec, *split_design(spec, shape, DEFAULT_PILOT_SHARE))
        share = best_pilot_share(scaled, shape)
        logger.debug(f"Initial pilot share chosen by line search: {share:.4f}")
    elif share is None:
        share = DEFAULT_PILOT_SHARE
    p_c, x_p = split_design(spec, shape, float(share))
    return DesignState.initial(spec, p_c, x_p, options.rho, options.zeta)


def floor_scale(value: float, reference: float, ratio: float, metric: str) -> float:
    """`value`, raised to `ratio * reference` when it is degenerately small."""
    floor = ratio * reference
    if value >= floor:
        return value if value > 0 else 1.0
    logger.warning(f"{metric} normalizer {value:.3g} floored at {floor:.3g}")
    get_collector().warning(
        "NORMALIZER_FLOORED",
        f"The {metric} optimum is degenerate; its normalizer was floored",
        stage="setup",
        context={"metric": metric, "value": value, "floor": floor},
        suggestion="Lower problem.isl_floor_ratio to follow the optimum more closely",
    )
    return floor if floor > 0 else 1.0


def anchor_scales(scenario: Scenario, options: SolverOptions) -> tuple[float, float]:
    """(SINR, ISL) normalizers shared by every design of a run.

    `initial` takes them from the initial design; `optimal` from the
    single-objective optima at eta = 1 (SINR) and eta = 0 (ISL). The ISL
    optimum can be a data-free design with vanishing sidelobes, so its
    normalizer is floored at `isl_floor_ratio` times the ISL of the SINR optimum.
    """
    problem = scenario.config.problem
    if problem.normalize == "optimal":
        unit = (1.0, 1.0)
        best_sinr = solve(scenario.spec(1.0, unit), options, initial_state(scenario.spec(1.0, unit), options))
        best_isl = solve(scenario.spec(0.0, unit), options, initial_state(scenario.spec(0.0, unit), options))
        sinr_scale = best_sinr.spec.sinr(best_sinr.p_c, best_sinr.x_p)
        isl_scale = floor_scale(
            best_isl.spec.isl(best_isl.p_c, best_isl.x_p),
            best_sinr.spec.isl(best_sinr.p_c, best_sinr.x_p),
            problem.isl_floor_ratio,
            "ISL",
        )
        return (sinr_scale if sinr_scale > 0 else 1.0, isl_scale)
    spec = scenario.spec(problem.eta)
    init = initial_state(spec, options)
    resolved = resolve_scales(spec, *restore_feasibility(spec, init.p_c, init.x_p))
    return resolved.sinr_scale, resolved.isl_scale


def solve_design(
    scenario: Scenario, eta: float, scales: tuple[float, float], options: SolverOptions
) -> tuple[Scenario, SolveResult]:
    """Solve at `eta`; with multistart, also from every generated pattern."""
    spec = scenario.spec(eta, scales)
    if not options.multistart:
        return scenario, solve(spec, options, initial_state(spec, options))

    candidates = {"config": scenario}
    if scenario.config.placement.pattern in PATTERNS and scenario.config.placement.file is None:
        for kind in PATTERNS:
            try:
                candidates[kind] = scenario.pattern_scenario(kind)
            except DfrcError as e:
                logger.warning(f"Multistart: pattern '{kind}' skipped ({e})")
    starts = {}
    for name, sc in candidates.items():
        sc_spec = sc.spec(eta, scales)
        kind = name if name in PATTERNS else None
        starts[name] = (sc_spec, initial_state(sc_spec, options, kind))
    name, result = solve_multistart(starts, options)
    return candidates[name], result


def _solve_eta(args: tuple[Scenario, float, tuple[float, float], SolverOptions]) -> SolveResult:
    scenario, eta, scales, options = args
    return solve_design(scenario, eta, scales, options)[1]


def sweep_eta(
    scenario: Scenario,
    etas: list[float],
    scales: tuple[float, float],
    options: SolverOptions,
    workers: int | None = None,
) -> list[SolveResult]:
    """Independent solves over an eta grid, in a process pool when workers > 1."""
    tasks = [(scenario, eta, scales, replace(options, multistart=False)) for eta in etas]
    n_workers = min(max_workers(workers), len(tasks))
    if n_workers > 1:
        with ProcessPoolExecutor(n_workers) as executor:
            return list(tqdm(executor.map(_solve_eta, tasks), total=len(tasks), desc="eta sweep"))
    return [_solve_eta(t) for t in tqdm(tasks, desc="eta sweep")]


def baseline_design(scenario: Scenario, kind: str) -> tuple[Scenario, float, np.ndarray]:
    """Pattern `kind` at full budget with the SINR-maximizing pilot share."""
    pattern = scenario.pattern_scenario(kind)
    spec = pattern.spec(1.0)
    shape = pilot_shape(kind, pattern.placement.k_p)
    share = best_pilot_share(spec, shape)
    p_c, x_p = split_design(spec, shape, share)
    logger.info(f"Baseline {kind}: pilot share {share:.4f}, p_c {p_c:.6g}")
    return pattern, p_c, x_p


# --- artifacts ----------------------------------------------------------------


def design_frame(cfg: GridConfig, placement: Placement, p_c: float, x_p: np.ndarray) -> pd.DataFrame:
    """One row per occupied DD cell; data cells carry power p_c and no fixed symbol."""
    rows = []
    for index, value in zip(placement.pilot_indices, x_p):
        delay, doppler = cfg.cell(index)
        rows.append(("pilot", index, delay, doppler, value.real, value.imag, abs(value) ** 2))
    for index in placement.data_indices:
        delay, doppler = cfg.cell(index)
        rows.append(("data", index, delay, doppler, np.nan, np.nan, p_c))
    return pd.DataFrame(rows, columns=["role", "index", "delay", "doppler", "re", "im", "power"])


def write_design_yaml(path: Path, scenario: Scenario, result: SolveResult) -> Path:
    doc = {
        "eta": float(result.spec.eta),
        "objective": float(result.objective),
        "converged": bool(result.converged),
        "p_c": float(result.p_c),
        "x_p_re": [float(v) for v in result.x_p.real],
        "x_p_im": [float(v) for v in result.x_p.imag],
        "sinr_scale": float(result.spec.sinr_scale),
        "isl_scale": float(result.spec.isl_scale),
        "placement": scenario.placement.to_dict(scenario.cfg),
    }
    with open(path, "w", encoding="utf-8") as f:
        yaml.safe_dump(doc, f, sort_keys=False)
    return path


def _write_csv(run: RunResult, name: str, frame: pd.DataFrame) -> pd.DataFrame:
    path = run.out_dir / name
    frame.to_csv(path, index=False)
    run.artifacts[name] = path
    return frame


def _metric_columns(frame: pd.DataFrame, scales: tuple[float, float]) -> pd.DataFrame:
    frame["sinr_db"] = db(frame["sinr"].to_numpy(dtype=float))
    frame["isl_db"] = db(frame["isl"].to_numpy(dtype=float))
    frame["sinr_norm"] = frame["sinr"] / scales[0]
    frame["isl_norm"] = frame["isl"] / scales[1]
    return frame


# --- experiments --------------------------------------------------------------


def run_optimize(config: ExperimentConfig, out_dir: Path, workers: int | None = None) -> RunResult:
    run = RunResult("optimize", out_dir)
    options = config.solver
    with stage("setup"):
        scenario = Scenario.from_config(config)
        scales = anchor_scales(scenario, options)
    with stage("optimize", eta=config.problem.eta):
        scenario, result = solve_design(scenario, config.problem.eta, scales, options)
    with stage("report"):
        report = result.report()
        if config.optimize.capacity_trials > 0:
            estimate = capacity_lower_bound(
                result.p_c,
                result.x_p,
                scenario.model,
                scenario.cfg,
                scenario.link,
                config.optimize.capacity_trials,
                config.seed,
            )
            report.capacity_lb, report.capacity_stderr = estimate.value, estimate.stderr
        frame = report.to_frame()
        frame["objective"] = result.objective
        frame["power_only_objective"] = result.power_only_objective
        frame["converged"] = result.converged
        frame["ao_iterations"] = result.state.n
        frame["sinr_scale"], frame["isl_scale"] = scales
        _write_csv(run, "report.csv", frame)
        _write_csv(run, "design.csv", design_frame(scenario.cfg, scenario.placement, result.p_c, result.x_p))
        run.artifacts["design.yaml"] = write_design_yaml(out_dir / "design.yaml", scenario, result)
        for path in result.trace.write_csv(out_dir):
            run.artifacts[path.name] = path
        run.artifacts["placement.yaml"] = save_placement(
            out_dir / "placement.yaml", scenario.cfg, scenario.placement
        )
        run.summary = frame[["eta", "sinr", "isl", "mainlobe", "objective", "converged"]].to_dict("records")
    return run


def run_region(config: ExperimentConfig, out_dir: Path, workers: int | None = None) -> RunResult:
    run = RunResult("region", out_dir)
    options = config.solver
    etas = sorted(config.problem.etas)
    with stage("setup"):
        scenario = Scenario.from_config(config)
        scales = anchor_scales(scenario, options)
    with stage("sweep", points=len(etas)):
        results = sweep_eta(scenario, etas, scales, options, workers)

    with stage("frontier"):
        rows = [
            {"scheme": "optimized", "eta": eta, "split": np.nan, "p_c": r.p_c,
             "sinr": r.spec.sinr(r.p_c, r.x_p), "isl": r.spec.isl(r.p_c, r.x_p)}
            for eta, r in zip(etas, results)
        ]
        frontier = []
        for eta in etas:
            spec = scenario.spec(eta, scales)
            values = [spec.objective(r.p_c, r.x_p) for r in results]
            best = int(np.argmax(values))
            frontier.append(
                {"eta": eta, "source_eta": etas[best], "objective": values[best],
                 "sinr": rows[best]["sinr"], "isl": rows[best]["isl"]}
            )
        frontier_frame = _metric_columns(pd.DataFrame(frontier), scales)
        _write_csv(run, "frontier.csv", frontier_frame)

    with stage("baselines", schemes=",".join(config.region.baselines)):
        splits = np.linspace(0.0, 1.0, config.region.split_points)
        for kind in config.region.baselines:
            pattern = scenario.pattern_scenario(kind)
            spec = pattern.spec(1.0, scales)
            shape = pilot_shape(kind, pattern.placement.k_p)
            for t in splits:
                p_c, x_p = split_design(spec, shape, float(t))
                rows.append(
                    {"scheme": kind, "eta": np.nan, "split": float(t), "p_c": p_c,
                     "sinr": spec.sinr(p_c, x_p), "isl": spec.isl(p_c, x_p)}
                )
        region = _metric_columns(pd.DataFrame(rows), scales)
        _write_csv(run, "region.csv", region)

    with stage("dominance"):
        optimized = region[region["scheme"] == "optimized"]
        isl_floor = ISL_ZERO * scenario.spec(1.0, scales).budget ** 2
        best_isl = float(optimized["isl"].min())
        if best_isl < isl_floor:
            get_collector().info(
                "ISL_AT_NUMERICAL_ZERO",
                "Optimized sidelobes vanish; ISL gains are measured from the numerical floor",
                stage="dominance",
                context={"isl": best_isl, "floor": isl_floor},
            )
        margins = []
        for kind in config.region.baselines:
            base = region[region["scheme"] == kind]
            isl_gain = float(db(max(base["isl"].min(), isl_floor)) - db(max(best_isl, isl_floor)))
            sinr_gain = float(db(optimized["sinr"].max()) - db(base["sinr"].max()))
            margins.append(
                {"baseline": kind, "isl_gain_db": isl_gain, "sinr_gain_db": sinr_gain,
                 "dominates": bool(isl_gain > 0 and sinr_gain > 0)}
            )
        _write_csv(run, "dominance.csv", pd.DataFrame(margins))
        run.summary = margins
    return run


def run_af(config: ExperimentConfig, out_dir: Path, workers: int | None = None) -> RunResult:
    run = RunResult("af", out_dir)
    options = config.solver
    etas = sorted(config.af.eta_grid)
    with stage("setup"):
        scenario = Scenario.from_config(config)
        scales = anchor_scales(scenario, options)
    with stage("designs", points=len(etas)):
        results = sweep_eta(scenario, etas, scales, options, workers)

    with stage("ambiguity", draws=config.af.n_draws):
        zero_doppler, zero_delay = {}, {}
        for eta, result, seed in zip(etas, results, spawn_seeds(config.seed, len(etas))):
            af = empirical_af(result.x_p, result.p_c, scenario.kernels, config.af.n_draws, seed)
            _write_csv(run, f"af_eta{eta:g}.csv", af.to_frame())
            zero_doppler["l"] = af.lags
            zero_delay["k"] = af.dopplers
            zero_doppler[f"eta_{eta:g}"] = af.zero_doppler_slice()
            zero_delay[f"eta_{eta:g}"] = af.zero_delay_slice()
            run.summary.append({"eta": eta, "sidelobe_energy": af.sidelobe_energy()})
        _write_csv(run, "af_zero_doppler.csv", pd.DataFrame(zero_doppler))
        _write_csv(run, "af_zero_delay.csv", pd.DataFrame(zero_delay))
    return run


def run_ber_experiment(config: ExperimentConfig, out_dir: Path, workers: int | None = None) -> RunResult:
    run = RunResult("ber", out_dir)
    options = config.solver
    ber = config.ber
    ber_cfg = BerConfig(
        snr_grid_db=list(ber.snr_grid_db),
        modulation=ber.modulation,
        n_trials=ber.n_trials,
        seed=config.seed,
        perfect_csi=ber.perfect_csi,
        chunk_size=ber.chunk_size,
    )
    with stage("setup"):
        scenario = Scenario.from_config(config)
    for scheme in ber.schemes:
        with stage("design", scheme=scheme):
            if scheme == "optimized":
                scales = anchor_scales(scenario, options)
                design, result = solve_design(scenario, ber.eta, scales, options)
                p_c, x_p = result.p_c, result.x_p
            else:
                design, p_c, x_p = baseline_design(scenario, scheme)
        with stage("ber", scheme=scheme):
            result = run_ber(
                p_c, x_p, design.cfg, design.placement, design.model, ber_cfg,
                scheme=scheme, workers=workers, progress=True,
            )
            frame = _write_csv(run, f"ber_{scheme}.csv", result.to_frame())
            run.summary.extend({"scheme": scheme, **row} for row in frame.to_dict("records"))
    return run


def run_check(config: ExperimentConfig, out_dir: Path, workers: int | None = None) -> RunResult:
    run = RunResult("check", out_dir)
    with stage("check"):
        scenario = Scenario.from_config(config)
        report = validate_guard(scenario.cfg, scenario.placement, scenario.model.L, scenario.model.Q)
        if not report:
            get_collector().error(
                "GUARD_VIOLATION",
                f"{len(report.violations)} channel taps leak between pilot and data cells",
                stage="check",
            )
            run.success = False
        ratios = scenario.placement.ratios(scenario.cfg)
        run.summary = [
            {"K_p": scenario.placement.k_p, "K_c": scenario.placement.k_c,
             "guard_ok": bool(report), **ratios}
        ]
    return run


EXPERIMENTS = {
    "optimize": run_optimize,
    "region": run_region,
    "af": run_af,
    "ber": run_ber_experiment,
    "check": run_check,
}


def run_experiment(config: ExperimentConfig, out_dir: str | Path, workers: int | None = None) -> RunResult:
    """Run `config.experiment`, then write manifest.json and diagnostics.json."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    workers = workers if workers is not None else config.workers
    manifest = ManifestBuilder(config.to_dict(), out_dir, source=config.source)
    collector = get_collector()
    logger.info(f"Running {config.experiment} (seed {config.seed}) into {out_dir}")

    run = None
    try:
        run = EXPERIMENTS[config.experiment](config, out_dir, workers)
    finally:
        status = "error" if run is None or not run.success else collector.get_status()
        if run is not None:
            for path in run.artifacts.values():
                rows = None
                if path.suffix == ".csv":
                    rows = len(pd.read_csv(path))
                manifest.add_artifact(path, kind=path.suffix.lstrip("."), rows=rows)
        manifest.write_json(out_dir / "manifest.json", status=status)
        collector.write_json(out_dir / "diagnostics.json", tool_version=__version__)
    return run
