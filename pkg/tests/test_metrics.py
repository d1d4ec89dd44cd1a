"""Tests for SINR, ISL, mainlobe and the empirical ambiguity function."""

import numpy as np
import pytest

from otfsdfrc.grid import evaluate_af
from otfsdfrc.metrics import (
    capacity_lower_bound,
    empirical_af,
    evaluate_design,
    isl_expected,
    isl_power_coefficients,
    isl_split,
    isl_split_grad_x1,
    mainlobe,
    mainlobe_split,
    sinr,
    sinr_aux,
    sinr_aux_slope,
    trace_term,
    tx_power,
)


def make_pilots(rng, k_p: int) -> np.ndarray:
    return rng.standard_normal(k_p) + 1j * rng.standard_normal(k_p)


class TestSinr:
    """Tests for the LMMSE effective-noise SINR."""

    def test_trace_term_matches_inverse(self, rng, toy_link, toy_model):
        dictionary = toy_link.dictionary
        x_p = make_pilots(rng, dictionary.k_p)
        xi = np.eye(toy_model.k_h) + toy_model.estimation_gain * dictionary.gram(x_p)
        expected = toy_model.prior_variance * np.trace(np.linalg.inv(xi)).real
        assert trace_term(x_p, toy_model, dictionary) == pytest.approx(expected, rel=1e-12)

    def test_trace_term_without_pilots(self, toy_link, toy_model):
        """With no pilot energy the estimation error is the full prior."""
        value = trace_term(np.zeros(4), toy_model, toy_link.dictionary)
        assert value == pytest.approx(toy_model.k_h * toy_model.prior_variance)

    def test_sinr_equals_aux_at_trace(self, rng, toy_link, toy_model):
        dictionary = toy_link.dictionary
        x_p = make_pilots(rng, dictionary.k_p)
        s1 = trace_term(x_p, toy_model, dictionary)
        assert sinr(2.0, x_p, toy_model, dictionary) == pytest.approx(
            float(sinr_aux(2.0, s1, toy_model.sigma_n_sq)), abs=1e-12
        )

    def test_sinr_zero_without_data_power(self, rng, toy_link, toy_model):
        assert sinr(0.0, make_pilots(rng, 4), toy_model, toy_link.dictionary) == 0.0

    def test_more_pilot_energy_raises_sinr(self, rng, toy_link, toy_model):
        x_p = make_pilots(rng, 4)
        low = sinr(1.0, x_p, toy_model, toy_link.dictionary)
        high = sinr(1.0, 3.0 * x_p, toy_model, toy_link.dictionary)
        assert high > low

    def test_aux_slope_matches_finite_difference(self):
        p_c, s1, sn2, h = 1.5, 0.7, 0.2, 1e-6
        numeric = (sinr_aux(p_c, s1 + h, sn2) - sinr_aux(p_c, s1 - h, sn2)) / (2 * h)
        assert float(sinr_aux_slope(p_c, s1, sn2)) == pytest.approx(float(numeric), rel=1e-6)

    def test_aux_concave_in_power(self):
        p = np.linspace(0.0, 10.0, 101)
        values = sinr_aux(p, 0.4, 0.1)
        assert np.all(np.diff(values, 2) <= 1e-12)


class TestIsl:
    """Tests for the expected ISL and its split form."""

    def test_split_matches_joint(self, rng, toy_kernels):
        x_p = make_pilots(rng, 4)
        assert isl_split(0.8, x_p, x_p, toy_kernels) == pytest.approx(
            isl_expected(0.8, x_p, toy_kernels), rel=1e-12
        )

    def test_split_gradient(self, rng, toy_kernels):
        """Packed gradient d/dRe + j d/dIm agrees with central differences."""
        x1, x2 = make_pilots(rng, 4), make_pilots(rng, 4)
        grad = isl_split_grad_x1(0.6, x1, x2, toy_kernels)
        h = 1e-6
        for i in range(4):
            e = np.zeros(4)
            e[i] = h
            d_re = (
                isl_split(0.6, x1 + e, x2, toy_kernels) - isl_split(0.6, x1 - e, x2, toy_kernels)
            ) / (2 * h)
            d_im = (
                isl_split(0.6, x1 + 1j * e, x2, toy_kernels) - isl_split(0.6, x1 - 1j * e, x2, toy_kernels)
            ) / (2 * h)
            assert grad[i].real == pytest.approx(d_re, rel=1e-5, abs=1e-6)
            assert grad[i].imag == pytest.approx(d_im, rel=1e-5, abs=1e-6)

    def test_power_polynomial(self, rng, toy_kernels):
        x_p = make_pilots(rng, 4)
        alpha2, alpha1, alpha0 = isl_power_coefficients(x_p, toy_kernels)
        for p_c in (0.0, 0.5, 3.0):
            assert isl_expected(p_c, x_p, toy_kernels) == pytest.approx(
                alpha2 * p_c**2 + alpha1 * p_c + alpha0
            )
        assert alpha2 > 0

    def test_pilot_only_isl_is_deterministic_sidelobes(self, rng, toy_cfg, toy_kernels):
        x_p = make_pilots(rng, 4)
        x = toy_kernels.placement.compose(x_p, np.zeros(4))
        f = evaluate_af(toy_cfg, x, 1, 1)
        expected = np.sum(np.abs(f[toy_kernels.isl_mask]) ** 2)
        assert isl_expected(0.0, x_p, toy_kernels) == pytest.approx(expected, rel=1e-10)

    def test_isl_non_negative(self, rng, toy_kernels):
        for _ in range(5):
            assert isl_expected(rng.uniform(0, 3), make_pilots(rng, 4), toy_kernels) >= 0


class TestMainlobe:
    """Tests for the mainlobe and transmit power."""

    def test_split_matches_joint(self, rng, toy_kernels):
        x_p = make_pilots(rng, 4)
        assert mainlobe_split(1.2, x_p, x_p, toy_kernels) == pytest.approx(mainlobe(1.2, x_p, toy_kernels))

    def test_mainlobe_is_expected_energy(self, rng, toy_kernels):
        """Mean f_00 over Gaussian data equals the analytic mainlobe."""
        x_p = make_pilots(rng, 4)
        af = empirical_af(x_p, 1.0, toy_kernels, 4000, rng_seed=9)
        mean_f00 = af.mean_f[toy_kernels.l_hat, toy_kernels.q_hat].real
        assert mean_f00 == pytest.approx(mainlobe(1.0, x_p, toy_kernels), rel=0.03)

    def test_tx_power_per_sample(self, rng, toy_kernels):
        x_p = make_pilots(rng, 4)
        assert tx_power(1.0, x_p, toy_kernels) * toy_kernels.cfg.frame_len == pytest.approx(
            mainlobe(1.0, x_p, toy_kernels)
        )


class TestEmpiricalAf:
    """Tests for the Monte Carlo ambiguity function."""

    def test_pilot_only_is_deterministic(self, rng, toy_cfg, toy_kernels):
        x_p = make_pilots(rng, 4)
        af = empirical_af(x_p, 0.0, toy_kernels, 10)
        x = toy_kernels.placement.compose(x_p, np.zeros(4))
        np.testing.assert_allclose(af.mean_abs_f_sq, np.abs(evaluate_af(toy_cfg, x, 1, 1)) ** 2)

    def test_reproducible(self, rng, toy_kernels):
        x_p = make_pilots(rng, 4)
        a = empirical_af(x_p, 1.0, toy_kernels, 300, rng_seed=4)
        b = empirical_af(x_p, 1.0, toy_kernels, 300, rng_seed=4)
        np.testing.assert_array_equal(a.mean_abs_f_sq, b.mean_abs_f_sq)

    def test_slices_and_frame(self, rng, toy_kernels):
        af = empirical_af(make_pilots(rng, 4), 0.5, toy_kernels, 200, rng_seed=1)
        assert af.zero_doppler_slice().shape == (3,)
        assert af.zero_delay_slice().shape == (3,)
        frame = af.to_frame()
        assert list(frame.columns) == ["l", "k", "mean_abs_f_sq"]
        assert len(frame) == 9
        assert af.sidelobe_energy() == pytest.approx(af.mean_abs_f_sq.sum() - af.mean_abs_f_sq[1, 1])

    def test_needs_draws(self, rng, toy_kernels):
        with pytest.raises(ValueError, match="n_draws"):
            empirical_af(make_pilots(rng, 4), 1.0, toy_kernels, 0)


class TestReports:
    """Tests for design reports and the capacity bound."""

    def test_evaluate_design(self, rng, toy_kernels, toy_model, toy_link):
        x_p = make_pilots(rng, 4)
        report = evaluate_design(1.0, x_p, toy_kernels, toy_model, toy_link.dictionary, 0.3)
        assert report.eta == 0.3
        assert report.sinr == pytest.approx(sinr(1.0, x_p, toy_model, toy_link.dictionary))
        assert report.capacity_lb is None
        assert list(report.to_frame().columns)[:2] == ["sinr", "isl"]

    def test_capacity_zero_without_data_power(self, rng, toy_cfg, toy_model, toy_link):
        estimate = capacity_lower_bound(0.0, make_pilots(rng, 4), toy_model, toy_cfg, toy_link, 10)
        assert estimate.value == 0.0

    def test_capacity_reproducible_and_positive(self, rng, toy_cfg, toy_model, toy_link):
        x_p = make_pilots(rng, 4)
        a = capacity_lower_bound(1.0, x_p, toy_model, toy_cfg, toy_link, 200, rng_seed=2)
        b = capacity_lower_bound(1.0, x_p, toy_model, toy_cfg, toy_link, 200, rng_seed=2)
        assert a.value == b.value
        assert a.value > 0
        assert a.stderr > 0
