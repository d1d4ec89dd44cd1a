"""Experiment configuration documents.

A configuration is a YAML document validated against
`schema/experiment.schema.json` and then checked semantically (geometry,
guard validity, feasibility of the mainlobe requirement). Every problem found
is reported at once through `ConfigValidationError`.
"""

import json
from dataclasses import asdict, dataclass, field
from difflib import get_close_matches
from pathlib import Path
from typing import Any

import jsonschema
import yaml
from loguru import logger

from ..channel import ChannelModel
from ..diagnostics import get_collector
from ..errors import ConfigValidationError, DfrcError
from ..grid import GridConfig, Placement, validate_guard
from ..optimizer import SolverOptions
from ..utils import dbm_to_watts
from .patterns import generate_pattern, load_placement

SCHEMA_DIR = Path(__file__).resolve().parent.parent / "schema"
DEFAULT_ETA_GRID = [0.0, 0.25, 0.5, 0.75, 1.0]


@dataclass
class GridSection:
    M: int = 8
    N: int = 16
    N_CP: int | None = None
    r_CP: float | None = 0.125

    def build(self) -> GridConfig:
        if self.N_CP is not None:
            return GridConfig(self.M, self.N, self.N_CP)
        return GridConfig.from_cp_ratio(self.M, self.N, self.r_CP or 0.0)


@dataclass
class PlacementSection:
    pattern: str = "cluster"
    K_p: int | None = None
    K_c: int | None = None
    r_pilot: float | None = None
    r_GI: float | None = None
    file: str | None = None
    pilot_indices: list[int] | None = None
    data_indices: list[int] | None = None
    rx_pilot_indices: list[int] | None = None
    rx_data_indices: list[int] | None = None

    def counts(self, cfg: GridConfig) -> tuple[int, int]:
        """(K_p, K_c) from explicit counts, from (r_pilot, r_GI), or the 24/40 default."""
        if self.K_p is not None and self.K_c is not None:
            return self.K_p, self.K_c
        if self.r_pilot is not None and self.r_GI is not None:
            used = round(cfg.mn * (1.0 - self.r_GI))
            k_p = max(1, round(self.r_pilot * used))
            return k_p, used - k_p
        return (self.K_p or 24), (self.K_c if self.K_c is not None else 40)

    def build(self, cfg: GridConfig, L: int, Q: int, base_dir: Path | None = None) -> Placement:
        if self.file is not None:
            path = Path(self.file)
            if not path.is_absolute() and base_dir is not None:
                path = base_dir / path
            file_cfg, placement = load_placement(path)
            if (file_cfg.M, file_cfg.N) != (cfg.M, cfg.N):
                raise ConfigValidationError(
                    [f"placement file {path} is for a {file_cfg.M}x{file_cfg.N} grid, "
                     f"config has {cfg.M}x{cfg.N}"]
                )
            return placement
        if self.pattern == "custom":
            if self.pilot_indices is None or self.data_indices is None:
                raise ConfigValidationError(
                    ["placement.pattern 'custom' needs pilot_indices and data_indices"]
                )
            return Placement.with_spread(
                cfg,
                self.pilot_indices,
                self.data_indices,
                L,
                Q,
                self.rx_pilot_indices,
                self.rx_data_indices,
            )
        return generate_pattern(self.pattern, cfg, *self.counts(cfg), L, Q)


@dataclass
class ChannelSection:
    L: int = 7
    Q: int = 3
    p: float = 0.5
    sigma_h_sq: float = 1.0
    sigma_n_sq: float = 0.1

    def build(self) -> ChannelModel:
        return ChannelModel(self.L, self.Q, self.p, self.sigma_h_sq, self.sigma_n_sq)


@dataclass
class SensingSection:
    L_hat: int | None = None
    Q_hat: int | None = None
    include_mainlobe: bool = False

    def bins(self, channel: ChannelSection) -> tuple[int, int]:
        return (
            channel.L if self.L_hat is None else self.L_hat,
            channel.Q if self.Q_hat is None else self.Q_hat,
        )


@dataclass
class ProblemSection:
    eta: float = 0.5
    eta_grid: list[float] | None = None
    P_max_dbm: float = 30.0
    xi_min: float | None = None
    xi_min_ratio: float = 0.5
    normalize: str = "optimal"
    isl_floor_ratio: float = 0.1

    @property
    def p_max(self) -> float:
        return dbm_to_watts(self.P_max_dbm)

    def xi(self, cfg: GridConfig) -> float:
        """Mainlobe requirement, given directly or as a share of (MN+N_CP) P_max."""
        if self.xi_min is not None:
            return self.xi_min
        return self.xi_min_ratio * cfg.frame_len * self.p_max

    @property
    def etas(self) -> list[float]:
        return list(self.eta_grid) if self.eta_grid else list(DEFAULT_ETA_GRID)


@dataclass
class OptimizeSection:
    capacity_trials: int = 0


@dataclass
class RegionSection:
    baselines: list[str] = field(default_factory=lambda: ["flat", "cluster"])
    split_points: int = 21


@dataclass
class AfSection:
    eta_grid: list[float] = field(default_factory=lambda: [0.0, 0.5, 1.0])
    n_draws: int = 10000


@dataclass
class BerSection:
    modulation: str = "QPSK"
    snr_grid_db: list[float] = field(default_factory=lambda: [0.0, 5.0, 10.0, 15.0, 20.0])
    n_trials: int = 1000
    chunk_size: int = 256
    perfect_csi: bool = False
    eta: float = 1.0
    schemes: list[str] = field(default_factory=lambda: ["optimized", "cluster", "flat"])


SECTIONS = {
    "grid": GridSection,
    "placement": PlacementSection,
    "channel": ChannelSection,
    "sensing": SensingSection,
    "problem": ProblemSection,
    "solver": SolverOptions,
    "optimize": OptimizeSection,
    "region": RegionSection,
    "af": AfSection,
    "ber": BerSection,
}


@dataclass
class ExperimentConfig:
    experiment: str
    seed: int = 0
    workers: int | None = None
    grid: GridSection = field(default_factory=GridSection)
    placement: PlacementSection = field(default_factory=PlacementSection)
    channel: ChannelSection = field(default_factory=ChannelSection)
    sensing: SensingSection = field(default_factory=SensingSection)
    problem: ProblemSection = field(default_factory=ProblemSection)
    solver: SolverOptions = field(default_factory=SolverOptions)
    optimize: OptimizeSection = field(default_factory=OptimizeSection)
    region: RegionSection = field(default_factory=RegionSection)
    af: AfSection = field(default_factory=AfSection)
    ber: BerSection = field(default_factory=BerSection)
    source: str | None = None

    def to_dict(self) -> dict[str, Any]:
        """Resolved configuration as a plain document (re-loadable)."""
        doc: dict[str, Any] = {"experiment": self.experiment, "seed": self.seed}
        if self.workers is not None:
            doc["workers"] = self.workers
        for name in SECTIONS:
            section = getattr(self, name)
            values = section.to_dict() if name == "solver" else asdict(section)
            doc[name] = {k: v for k, v in values.items() if v is not None}
        return doc

    @property
    def base_dir(self) -> Path | None:
        return Path(self.source).resolve().parent if self.source else None


def load_schema() -> dict:
    with open(SCHEMA_DIR / "experiment.schema.json", encoding="utf-8") as f:
        return json.load(f)


def _suggest(name: str, known) -> str:
    matches = get_close_matches(name, list(known), n=1, cutoff=0.6)
    return f" Did you mean '{matches[0]}'?" if matches else ""


def schema_errors(doc: Any) -> list[str]:
    """Every schema violation in `doc`, with hints for misspelled keys."""
    validator = jsonschema.Draft202012Validator(load_schema())
    errors = []
    for e in sorted(validator.iter_errors(doc), key=lambda e: list(map(str, e.absolute_path))):
        where = ".".join(str(p) for p in e.absolute_path) or "<root>"
        if e.validator == "additionalProperties" and isinstance(e.instance, dict):
            known = e.schema.get("properties", {})
            for key in sorted(set(e.instance) - set(known)):
                errors.append(f"{where}: unknown key '{key}'.{_suggest(key, known)}")
        else:
            errors.append(f"{where}: {e.message}")
    return errors


def semantic_errors(config: ExperimentConfig) -> list[str]:
    """Cross-section checks that need the built objects."""
    errors: list[str] = []
    try:
        cfg = config.grid.build()
        model = config.channel.build()
        placement = config.placement.build(cfg, model.L, model.Q, config.base_dir)
    except (DfrcError, ValueError, OSError) as e:
        return [f"{type(e).__name__}: {e}"]

    report = validate_guard(cfg, placement, model.L, model.Q)
    if not report:
        shown = ", ".join(f"tap ({i},{j}) rx {r} <- tx {t}" for i, j, r, t in report.violations[:3])
        errors.append(
            f"placement guard does not isolate pilots from data for L={model.L}, Q={model.Q} "
            f"({len(report.violations)} leaks: {shown})"
        )

    l_hat, q_hat = config.sensing.bins(config.channel)
    if l_hat >= cfg.frame_len:
        errors.append(f"sensing.L_hat={l_hat} must be below the frame length {cfg.frame_len}")

    budget = cfg.frame_len * config.problem.p_max
    xi = config.problem.xi(cfg)
    if xi > budget:
        errors.append(
            f"problem: xi_min={xi:.6g} exceeds the power budget (MN+N_CP) P_max={budget:.6g}"
        )
    if config.experiment == "ber" and placement.k_c == 0:
        errors.append("ber: the placement has no data cells")
    return errors


def parse_config(doc: Any, source: str | None = None) -> ExperimentConfig:
    """Validate a configuration document and build the config object."""
    errors = schema_errors(doc)
    if errors:
        _report(errors, source)
    top = {k: doc[k] for k in ("experiment", "seed", "workers") if k in doc}
    sections = {}
    for name, cls in SECTIONS.items():
        try:
            sections[name] = cls(**(doc.get(name) or {}))
        except (TypeError, ValueError) as e:
            errors.append(f"{name}: {e}")
    if errors:
        _report(errors, source)
    config = ExperimentConfig(**top, **sections, source=source)
    errors = semantic_errors(config)
    if errors:
        _report(errors, source)
    return config


def _report(errors: list[str], source: str | None):
    for message in errors:
        get_collector().error("CONFIG_INVALID", message, stage="config", context={"source": source})
    logger.error(f"Configuration {source or '<document>'} is invalid ({len(errors)} problem(s))")
    raise ConfigValidationError(errors)


def load_config(path: str | Path, overrides: dict[str, Any] | None = None) -> ExperimentConfig:
    """Read, override (top-level keys such as seed and workers) and validate a YAML config."""
    path = Path(path)
    with open(path, encoding="utf-8") as f:
        doc = yaml.safe_load(f)
    if not isinstance(doc, dict):
        _report([f"{path} does not hold a mapping"], str(path))
    doc.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return parse_config(doc, source=str(path))
