"""Pytest configuration for otfs-dfrc tests."""

from pathlib import Path

import numpy as np
import pytest

from otfsdfrc.channel import ChannelModel, build_link_operators
from otfsdfrc.diagnostics import reset_collector
from otfsdfrc.experiments.patterns import generate_pattern
from otfsdfrc.grid import GridConfig, build_delay_doppler_kernels
from otfsdfrc.optimizer import ProblemSpec

PROJECT_ROOT = Path(__file__).parent.parent
EXAMPLES_DIR = PROJECT_ROOT / "otfsdfrc" / "examples"
SCHEMA_DIR = PROJECT_ROOT / "otfsdfrc" / "schema"


def pytest_addoption(parser):
    parser.addoption(
        "--runslow", action="store_true", default=False, help="run full-size acceptance tests"
    )


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(autouse=True)
def collector():
    """Fresh diagnostics collector for every test."""
    return reset_collector()


@pytest.fixture
def examples_dir() -> Path:
    return EXAMPLES_DIR


@pytest.fixture
def schema_dir() -> Path:
    return SCHEMA_DIR


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def toy_cfg() -> GridConfig:
    """4 x 4 frame with a 2-sample cyclic prefix."""
    return GridConfig(4, 4, 2)


@pytest.fixture
def toy_model() -> ChannelModel:
    return ChannelModel(L=1, Q=1, p=0.5, sigma_h_sq=1.0, sigma_n_sq=0.1)


@pytest.fixture
def toy_placement(toy_cfg, toy_model):
    return generate_pattern("cluster", toy_cfg, 4, 4, toy_model.L, toy_model.Q)


@pytest.fixture
def toy_kernels(toy_cfg, toy_placement):
    return build_delay_doppler_kernels(toy_cfg, toy_placement, 1, 1)


@pytest.fixture
def toy_link(toy_cfg, toy_placement, toy_model):
    return build_link_operators(toy_cfg, toy_placement, toy_model)


@pytest.fixture
def toy_spec(toy_kernels, toy_model, toy_link) -> ProblemSpec:
    """Balanced problem with xi_min at half of the power budget."""
    p_max = 1.0
    budget = toy_kernels.cfg.frame_len * p_max
    return ProblemSpec(
        eta=0.5,
        p_max=p_max,
        xi_min=0.5 * budget,
        kernels=toy_kernels,
        model=toy_model,
        dictionary=toy_link.dictionary,
    )

