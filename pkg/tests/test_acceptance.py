"""Full-size acceptance runs. Slow: enable with ``pytest --runslow``."""

import numpy as np
import pandas as pd
import pytest

from otfsdfrc.experiments import Scenario, generate_pattern, load_config, run_experiment
from otfsdfrc.experiments.runner import anchor_scales, initial_state
from otfsdfrc.grid import GridConfig, build_delay_doppler_kernels
from otfsdfrc.metrics import isl_expected, mainlobe
from otfsdfrc.montecarlo import oracle_isl
from otfsdfrc.optimizer import solve

pytestmark = pytest.mark.slow


def test_isl_matches_simulation():
    """Ten random designs on a 4 x 8 frame, 1e5 data draws each."""
    cfg = GridConfig(4, 8, 4)
    placement = generate_pattern("cluster", cfg, 8, 8, 1, 1)
    kernels = build_delay_doppler_kernels(cfg, placement, 1, 1)
    rng = np.random.default_rng(2024)
    for trial in range(10):
        x_p = rng.standard_normal(8) + 1j * rng.standard_normal(8)
        p_c = rng.uniform(0.1, 2.0)
        estimate = oracle_isl(p_c, x_p, kernels, 100_000, rng_seed=trial)
        assert estimate.mean == pytest.approx(isl_expected(p_c, x_p, kernels), rel=0.02)


def test_full_size_solver(examples_dir):
    config = load_config(examples_dir / "m8n16_optimize.yaml")
    scenario = Scenario.from_config(config)
    options = config.solver
    spec = scenario.spec(config.problem.eta, anchor_scales(scenario, options))
    result = solve(spec, options, initial_state(spec, options))

    assert np.all(np.diff(result.trace.objectives()) >= -1e-9)
    final = {}
    for record in result.trace.admm:
        final[record.n] = record
    assert final
    assert all(r.primal_residual <= options.eps_consensus for r in final.values())
    lobe = mainlobe(result.p_c, result.x_p, spec.kernels)
    assert spec.xi_min * (1 - 1e-6) <= lobe <= spec.budget * (1 + 1e-6)


def test_region_dominates_baselines(examples_dir, tmp_path):
    run = run_experiment(load_config(examples_dir / "m8n16_region.yaml"), tmp_path)
    dominance = pd.read_csv(tmp_path / "dominance.csv")
    assert set(dominance["baseline"]) == {"flat", "cluster"}
    assert np.all(dominance["isl_gain_db"] >= 1.0)
    assert np.all(dominance["sinr_gain_db"] >= 1.0)
    assert run.success


def test_sidelobes_grow_with_eta(examples_dir, tmp_path):
    run = run_experiment(load_config(examples_dir / "m8n16_af.yaml"), tmp_path)
    energy = [row["sidelobe_energy"] for row in sorted(run.summary, key=lambda r: r["eta"])]
    assert np.all(np.diff(energy) > 0)
    zero_doppler = pd.read_csv(tmp_path / "af_zero_doppler.csv")
    sidelobes = zero_doppler[zero_doppler["l"] != 0]
    assert sidelobes["eta_0"].sum() < sidelobes["eta_1"].sum()


def test_ber_ordering(examples_dir, tmp_path):
    run_experiment(load_config(examples_dir / "m8n16_ber.yaml"), tmp_path)
    curves = {s: pd.read_csv(tmp_path / f"ber_{s}.csv") for s in ("optimized", "cluster", "flat")}
    for point in (-2, -1):
        low = {s: frame["ci_low"].iloc[point] for s, frame in curves.items()}
        high = {s: frame["ci_high"].iloc[point] for s, frame in curves.items()}
        assert 0 < low["optimized"]
        assert high["optimized"] < low["cluster"]
        assert high["cluster"] < low["flat"]
