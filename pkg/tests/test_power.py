"""Tests for the data-power subproblem."""

import numpy as np
import pytest

from otfsdfrc.errors import InfeasibleProblemError
from otfsdfrc.metrics import isl_power_coefficients, mainlobe
from otfsdfrc.optimizer import golden_section_max, power_interval, power_objective, solve_power


def make_pilots(rng, k_p: int) -> np.ndarray:
    return rng.standard_normal(k_p) + 1j * rng.standard_normal(k_p)


def scaled_pilots(spec, rng, share: float) -> np.ndarray:
    """Pilots using `share` of the power budget as mainlobe."""
    x_p = make_pilots(rng, spec.placement.k_p)
    q = np.vdot(x_p, spec.kernels.pilot_gram @ x_p).real
    return x_p * np.sqrt(share * spec.budget / q)


class TestGoldenSection:
    """Tests for the 1-D golden-section search."""

    @pytest.mark.parametrize("peak", [0.0, 0.3, 1.0], ids=["left-edge", "interior", "right-edge"])
    def test_finds_peak(self, peak):
        found = golden_section_max(lambda x: -((x - peak) ** 2), 0.0, 1.0, 1e-9)
        assert found == pytest.approx(peak, abs=1e-8)

    def test_reversed_bracket(self):
        assert golden_section_max(lambda x: -abs(x - 2.0), 5.0, 0.0, 1e-9) == pytest.approx(2.0, abs=1e-8)

    def test_degenerate_bracket(self):
        assert golden_section_max(lambda x: x, 1.0, 1.0, 1e-9) == 1.0


class TestPowerInterval:
    """Tests for the feasible range of p_c."""

    def test_interval_meets_constraints(self, rng, toy_spec):
        x_p = scaled_pilots(toy_spec, rng, 0.2)
        lo, hi = power_interval(toy_spec, x_p)
        assert mainlobe(lo, x_p, toy_spec.kernels) == pytest.approx(toy_spec.xi_min)
        assert mainlobe(hi, x_p, toy_spec.kernels) == pytest.approx(toy_spec.budget)

    def test_lower_end_clamped_at_zero(self, rng, toy_spec):
        """Pilots alone above xi_min leave p_c free down to zero."""
        lo, _ = power_interval(toy_spec, scaled_pilots(toy_spec, rng, 0.8))
        assert lo == 0.0

    def test_pilots_over_budget(self, rng, toy_spec):
        with pytest.raises(InfeasibleProblemError, match="power"):
            power_interval(toy_spec, scaled_pilots(toy_spec, rng, 1.5))


class TestSolvePower:
    """Tests for the global power maximizer."""

    @pytest.mark.parametrize("eta", [0.0, 0.5, 1.0], ids=["sensing", "balanced", "comms"])
    def test_beats_grid_scan(self, rng, toy_spec, eta):
        spec = toy_spec.with_eta(eta).with_scales(1.0, 1.0)
        x_p = scaled_pilots(spec, rng, 0.3)
        s1 = spec.trace_term(x_p)
        p_star = solve_power(spec, s1, x_p)
        lo, hi = power_interval(spec, x_p)
        objective = power_objective(spec, s1, x_p)
        grid = np.linspace(lo, hi, 2001)
        assert lo <= p_star <= hi
        assert float(objective(p_star)) >= float(np.max(objective(grid))) - 1e-9

    def test_sensing_only_minimizes_isl(self, rng, toy_spec):
        """With eta = 0 the solution is the clipped vertex of the ISL parabola."""
        spec = toy_spec.with_eta(0.0).with_scales(1.0, 1.0)
        x_p = scaled_pilots(spec, rng, 0.3)
        lo, hi = power_interval(spec, x_p)
        alpha2, alpha1, _ = isl_power_coefficients(x_p, spec.kernels)
        vertex = min(max(-alpha1 / (2 * alpha2), lo), hi)
        assert solve_power(spec, spec.trace_term(x_p), x_p) == pytest.approx(vertex, abs=1e-6)

    def test_comms_only_uses_full_budget(self, rng, toy_spec):
        """With eta = 1 the SINR grows with p_c, so the budget is spent."""
        spec = toy_spec.with_eta(1.0).with_scales(1.0, 1.0)
        x_p = scaled_pilots(spec, rng, 0.3)
        _, hi = power_interval(spec, x_p)
        assert solve_power(spec, spec.trace_term(x_p), x_p) == pytest.approx(hi)

    def test_objective_vectorized(self, rng, toy_spec):
        x_p = scaled_pilots(toy_spec, rng, 0.3)
        objective = power_objective(toy_spec, 0.5, x_p)
        values = objective(np.array([0.1, 0.2]))
        assert values.shape == (2,)
        assert values[0] == pytest.approx(float(objective(0.1)))
