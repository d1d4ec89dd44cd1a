"""Spike, flat and cluster pilot arrangements and their YAML documents.

Every generated arrangement uses the same column plan along the Doppler
axis: a pilot band starting at column 0, Q guard columns, the data columns,
then Q guard columns before the band wraps around. Delay shifts stay inside a
column, so whole-column separation keeps pilot and data observations apart
for any L.
"""

import math
from pathlib import Path

import numpy as np
import yaml

from ..errors import GeometryError, PlacementError
from ..grid import GridConfig, Placement

PATTERNS = ("spike", "flat", "cluster")


def _columns(cfg: GridConfig, k_p: int, k_c: int, Q: int, pilot_width: int | None) -> tuple[int, int]:
    """(pilot band width, data column count), checked against the grid."""
    n_data = math.ceil(k_c / cfg.M)
    guard = 2 * Q if k_c else 0
    if pilot_width is None:
        pilot_width = cfg.N - n_data - guard
    if pilot_width * cfg.M < k_p:
        raise GeometryError(
            f"{k_p} pilots need {math.ceil(k_p / cfg.M)} of the {cfg.N} Doppler columns but "
            f"only {max(pilot_width, 0)} remain after {n_data} data and {guard} guard columns",
            dimension="doppler",
        )
    if pilot_width + n_data + guard > cfg.N:
        raise GeometryError(
            f"pilot band ({pilot_width}) + data ({n_data}) + guard ({guard}) columns "
            f"exceed N={cfg.N}",
            dimension="doppler",
        )
    return pilot_width, n_data


def generate_pattern(kind: str, cfg: GridConfig, k_p: int, k_c: int, L: int, Q: int) -> Placement:
    """Placement of `kind` with receive sets equal to each region's DD spread.

    `spike` and `cluster` occupy the same contiguous pilot band; they differ
    only in the starting amplitudes of `pilot_shape`. `flat` spreads the
    pilots over every Doppler column left free by the data and guard.
    """
    if kind not in PATTERNS:
        raise PlacementError(f"unknown pattern '{kind}', expected one of {PATTERNS}")
    if k_p < 1 or k_c < 0:
        raise PlacementError(f"need K_p >= 1 and K_c >= 0, got K_p={k_p}, K_c={k_c}")
    if k_p + k_c > cfg.mn:
        raise GeometryError(f"K_p + K_c = {k_p + k_c} exceeds MN = {cfg.mn}", dimension="delay")

    if kind == "flat":
        width, _ = _columns(cfg, k_p, k_c, Q, None)
        band = width * cfg.M
        pilots = np.unique(np.rint(np.linspace(0, band - 1, k_p)).astype(int))
    else:
        width, _ = _columns(cfg, k_p, k_c, Q, math.ceil(k_p / cfg.M))
        pilots = np.arange(k_p)

    start = (width + Q) * cfg.M if k_c else 0
    data = start + np.arange(k_c)
    return Placement.with_spread(cfg, pilots.tolist(), data.tolist(), L, Q)


def pilot_shape(kind: str, k_p: int) -> np.ndarray:
    """Unit-free initial pilot amplitudes: one centred impulse for spike, equal otherwise."""
    if kind == "spike":
        shape = np.zeros(k_p, dtype=complex)
        shape[k_p // 2] = 1.0
        return shape
    return np.ones(k_p, dtype=complex)


def save_placement(path: str | Path, cfg: GridConfig, placement: Placement) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        yaml.safe_dump(placement.to_dict(cfg), f, sort_keys=False)
    return path


def load_placement(path: str | Path) -> tuple[GridConfig, Placement]:
    with open(path, encoding="utf-8") as f:
        doc = yaml.safe_load(f)
    required = ("M", "N", "pilot_indices", "data_indices", "rx_pilot_indices", "rx_data_indices")
    missing = [k for k in required if k not in (doc or {})]
    if missing:
        raise PlacementError(f"placement document {path} lacks {', '.join(missing)}")
    return Placement.from_dict(doc)
