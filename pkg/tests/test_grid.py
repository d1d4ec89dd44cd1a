"""Tests for the delay-Doppler grid operators, placements and AF kernels."""

import numpy as np
import pytest

from otfsdfrc.errors import GridError, PlacementError
from otfsdfrc.grid import (
    GridConfig,
    Placement,
    build_channel_operators,
    build_delay_doppler_kernels,
    build_dft_factor,
    dd_spread,
    evaluate_af,
    tap_pairs,
    to_time_domain,
    validate_guard,
)


def make_frame(rng, cfg: GridConfig, batch: int | None = None) -> np.ndarray:
    shape = (cfg.mn,) if batch is None else (batch, cfg.mn)
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def unit(cfg: GridConfig, delay: int, doppler: int) -> np.ndarray:
    e = np.zeros(cfg.mn, dtype=complex)
    e[cfg.index(delay, doppler)] = 1.0
    return e


class TestGridConfig:
    """Tests for frame geometry."""

    def test_cp_ratio(self):
        """r_CP = 0.125 on an 8 x 16 frame gives a 16-sample prefix."""
        cfg = GridConfig.from_cp_ratio(8, 16, 0.125)
        assert cfg.n_cp == 16
        assert cfg.frame_len == 144
        assert cfg.f_cp == pytest.approx(128 / 144)

    @pytest.mark.parametrize(
        "M,N,n_cp",
        [(0, 4, 0), (4, 0, 0), (4, 4, 16), (4, 4, -1)],
        ids=["no-delay", "no-doppler", "cp-too-long", "negative-cp"],
    )
    def test_invalid_geometry(self, M, N, n_cp):
        """Degenerate frames are rejected."""
        with pytest.raises(GridError):
            GridConfig(M, N, n_cp)

    def test_index_is_column_major(self):
        """Index = delay + M * doppler, with cyclic wrap."""
        cfg = GridConfig(4, 3)
        assert cfg.index(1, 2) == 9
        assert cfg.cell(9) == (1, 2)
        assert cfg.index(5, -1) == cfg.index(1, 2)


class TestOperators:
    """Tests for the DFT factor and channel shift operators."""

    def test_dft_factor_unitary(self, toy_cfg):
        f = build_dft_factor(toy_cfg)
        np.testing.assert_allclose(f @ f.conj().T, np.eye(toy_cfg.mn), atol=1e-12)

    def test_operators_read_only(self, toy_cfg):
        ops = build_channel_operators(toy_cfg, 1, 1)
        assert not ops.flags.writeable

    def test_zero_tap_is_identity(self, toy_cfg):
        ops = build_channel_operators(toy_cfg, 1, 1)
        np.testing.assert_allclose(ops[0], np.eye(toy_cfg.mn), atol=1e-12)

    def test_operators_unitary(self, toy_cfg):
        for op in build_channel_operators(toy_cfg, 2, 1):
            np.testing.assert_allclose(op @ op.conj().T, np.eye(toy_cfg.mn), atol=1e-10)

    def test_tap_order(self):
        """Taps are delay-major within each Doppler index."""
        assert tap_pairs(1, 1) == [(0, 0), (1, 0), (0, 1), (1, 1)]

    def test_delay_shift_moves_down_column(self, toy_cfg):
        """A delay tap moves an impulse one delay bin within its column."""
        ops = build_channel_operators(toy_cfg, 1, 0)
        np.testing.assert_allclose(ops[1] @ unit(toy_cfg, 0, 2), unit(toy_cfg, 1, 2), atol=1e-12)

    def test_doppler_shift_moves_across_columns(self, toy_cfg):
        """A Doppler tap moves an impulse one column, up to a phase."""
        ops = build_channel_operators(toy_cfg, 0, 1)
        moved = ops[1] @ unit(toy_cfg, 2, 1)
        np.testing.assert_allclose(np.abs(moved), np.abs(unit(toy_cfg, 2, 2)), atol=1e-12)

    def test_taps_compose(self, toy_cfg):
        """T_11 = T_10 T_01."""
        ops = build_channel_operators(toy_cfg, 1, 1)
        np.testing.assert_allclose(ops[3], ops[1] @ ops[2], atol=1e-12)

    def test_delay_beyond_frame(self, toy_cfg):
        with pytest.raises(GridError, match="must be below MN"):
            build_channel_operators(toy_cfg, toy_cfg.mn, 0)


class TestPlacement:
    """Tests for placements and the guard check."""

    def test_overlap_rejected(self):
        with pytest.raises(PlacementError, match="overlap"):
            Placement(16, (0, 1), (1, 2), (), ())

    def test_out_of_range_rejected(self):
        with pytest.raises(PlacementError, match="outside"):
            Placement(16, (0, 16), (), (), ())

    def test_repeated_rejected(self):
        with pytest.raises(PlacementError, match="repeated"):
            Placement(16, (0, 0), (), (), ())

    def test_grid_mismatch(self, toy_placement):
        with pytest.raises(PlacementError, match="MN"):
            toy_placement.check_grid(GridConfig(8, 4))

    def test_spread_covers_shifts(self, toy_cfg):
        """Cell (3, 3) reaches (0, 3), (3, 0) and (0, 0) by wrapping."""
        spread = dd_spread(toy_cfg, [toy_cfg.index(3, 3)], 1, 1)
        expected = {toy_cfg.index(d, c) for d in (3, 0) for c in (3, 0)}
        assert set(spread) == expected

    def test_compose_batches(self, toy_placement):
        x_p = np.arange(1, 5)
        x_c = np.ones((3, 4))
        x = toy_placement.compose(x_p, x_c)
        assert x.shape == (3, 16)
        np.testing.assert_array_equal(x[:, list(toy_placement.pilot_indices)], np.broadcast_to(x_p, (3, 4)))

    def test_ratios(self, toy_cfg, toy_placement):
        ratios = toy_placement.ratios(toy_cfg)
        assert ratios["r_pilot"] == pytest.approx(0.5)
        assert ratios["r_GI"] == pytest.approx(0.5)
        assert ratios["r_CP"] == pytest.approx(2 / 16)

    def test_dict_round_trip(self, toy_cfg, toy_placement):
        cfg, placement = Placement.from_dict(toy_placement.to_dict(toy_cfg))
        assert cfg == toy_cfg
        assert placement.pilot_indices == toy_placement.pilot_indices
        assert placement.rx_data_indices == toy_placement.rx_data_indices

    def test_guard_holds(self, toy_cfg, toy_placement, toy_model):
        assert validate_guard(toy_cfg, toy_placement, toy_model.L, toy_model.Q)

    def test_guard_violation_reported(self, toy_cfg):
        """Pilot and data in adjacent columns leak under a Doppler tap."""
        pilots = [toy_cfg.index(d, 0) for d in range(4)]
        data = [toy_cfg.index(d, 1) for d in range(4)]
        placement = Placement.with_spread(toy_cfg, pilots, data, 1, 1)
        report = validate_guard(toy_cfg, placement, 1, 1)
        assert not report
        leaked = {(rx, tx) for _, _, rx, tx in report.violations}
        assert (toy_cfg.index(0, 1), toy_cfg.index(0, 0)) in leaked


class TestAmbiguityFunction:
    """Tests for AF kernels and the time-domain evaluator."""

    def test_kernels_match_time_domain(self, rng, toy_cfg, toy_kernels):
        """x^H A_lk x equals the time-domain correlation for every bin."""
        x = make_frame(rng, toy_cfg)
        f = evaluate_af(toy_cfg, x, toy_kernels.l_hat, toy_kernels.q_hat)
        for kernel in toy_kernels:
            expected = f[kernel.l + toy_kernels.l_hat, kernel.k + toy_kernels.q_hat]
            assert kernel.evaluate(x) == pytest.approx(expected, abs=1e-9)

    def test_mainlobe_is_energy(self, rng, toy_cfg, toy_kernels):
        x = make_frame(rng, toy_cfg)
        s = to_time_domain(toy_cfg, x)
        assert toy_kernels.bin(0, 0).evaluate(x) == pytest.approx(np.vdot(s, s), rel=1e-12)

    def test_mirrored_bins_have_equal_magnitude(self, rng, toy_cfg):
        x = make_frame(rng, toy_cfg, batch=5)
        f = evaluate_af(toy_cfg, x, 3, 2)
        np.testing.assert_allclose(np.abs(f), np.abs(f[:, ::-1, ::-1]), atol=1e-9)

    def test_mirror_conjugate_on_axes(self, rng, toy_cfg):
        """f(-l, 0) = conj f(l, 0) and f(0, -k) = conj f(0, k)."""
        x = make_frame(rng, toy_cfg)
        f = evaluate_af(toy_cfg, x, 2, 2)
        np.testing.assert_allclose(f[::-1, 2], f[:, 2].conj(), atol=1e-9)
        np.testing.assert_allclose(f[2, ::-1], f[2, :].conj(), atol=1e-9)

    def test_no_cp_grams(self, rng):
        """Without a prefix the transmit map is unitary: pilot Gram is I, data trace is K_c."""
        cfg = GridConfig(4, 4, 0)
        placement = Placement.with_spread(cfg, [0, 1, 2, 3], [8, 9, 10, 11], 1, 1)
        kernels = build_delay_doppler_kernels(cfg, placement, 1, 1)
        np.testing.assert_allclose(kernels.pilot_gram, np.eye(4), atol=1e-12)
        assert kernels.data_trace == pytest.approx(4.0)

    def test_isl_stacks_exclude_mainlobe(self, toy_kernels):
        n_bins = (2 * toy_kernels.l_hat + 1) * (2 * toy_kernels.q_hat + 1)
        assert len(toy_kernels) == n_bins
        assert toy_kernels.A_p.shape == (n_bins - 1, 4, 4)
        assert not any(k.is_mainlobe for k in toy_kernels.isl_kernels)

    def test_cross_matrices_hermitian(self, toy_kernels):
        np.testing.assert_allclose(toy_kernels.B, toy_kernels.B.conj().transpose(0, 2, 1), atol=1e-12)

    def test_sensing_window_checked(self, toy_cfg, toy_placement):
        with pytest.raises(GridError, match="L_hat"):
            build_delay_doppler_kernels(toy_cfg, toy_placement, toy_cfg.frame_len, 0)
