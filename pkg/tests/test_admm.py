"""Tests for the pilot ADMM blocks and the slack update."""

import numpy as np
import pytest

from otfsdfrc.metrics import mainlobe
from otfsdfrc.optimizer import (
    DesignState,
    SlackCoupling,
    SolverOptions,
    SolverTrace,
    solve_pilots,
    update_slack,
    update_x1,
    update_x2,
    xi_matrix,
)
from otfsdfrc.optimizer import admm
from otfsdfrc.optimizer.admm import _slab, _trace_bound, block_objective_x1, block_objective_x2, x1_qp, x2_qp


def make_pilots(rng, k_p: int) -> np.ndarray:
    return rng.standard_normal(k_p) + 1j * rng.standard_normal(k_p)


def make_state(spec, rng, p_c: float = 1.0, share: float = 0.4) -> DesignState:
    """A start whose pilots take `share` of the budget, with perturbed copies and dual."""
    x_p = make_pilots(rng, spec.placement.k_p)
    x_p *= np.sqrt(share * spec.budget / np.vdot(x_p, spec.kernels.pilot_gram @ x_p).real)
    state = DesignState.initial(spec, p_c, x_p, rho=1.0, zeta=0.5)
    state.x1 = x_p + 0.05 * make_pilots(rng, len(x_p))
    state.d = 0.01 * make_pilots(rng, len(x_p))
    state.A = np.linalg.inv(xi_matrix(spec, state.x1, state.x2)) + 0.01
    return state


class TestQuadraticModels:
    """The block QPs reproduce their augmented Lagrangians up to a constant."""

    def test_x1_model(self, rng, toy_spec):
        spec = toy_spec.with_scales(1.0, 1.0)
        state = make_state(spec, rng)
        qp = x1_qp(spec, state, 1.0)
        a, b = make_pilots(rng, 4), make_pilots(rng, 4)
        exact = block_objective_x1(spec, state, 1.0, a, SlackCoupling.DEFERRED) - block_objective_x1(
            spec, state, 1.0, b, SlackCoupling.DEFERRED
        )
        assert qp.value(a) - qp.value(b) == pytest.approx(exact, rel=1e-9)

    def test_x2_model(self, rng, toy_spec):
        spec = toy_spec.with_scales(1.0, 1.0)
        state = make_state(spec, rng)
        qp = x2_qp(spec, state, 1.0)
        a, b = make_pilots(rng, 4), make_pilots(rng, 4)
        exact = block_objective_x2(spec, state, 1.0, a) - block_objective_x2(spec, state, 1.0, b)
        assert qp.value(a) - qp.value(b) == pytest.approx(exact, rel=1e-9)

    def test_models_hermitian(self, rng, toy_spec):
        state = make_state(toy_spec, rng)
        for qp in (x1_qp(toy_spec, state, 1.0, kappa=0.3), x2_qp(toy_spec, state, 1.0)):
            np.testing.assert_allclose(qp.P, qp.P.conj().T)
            assert np.linalg.eigvalsh(qp.P)[0] > 0


class TestBlockUpdates:
    """Tests for the x1, x2 and slack steps."""

    @pytest.mark.parametrize("coupling", list(SlackCoupling), ids=[c.value for c in SlackCoupling])
    def test_x1_step_feasible(self, rng, toy_spec, coupling):
        state = make_state(toy_spec, rng)
        options = SolverOptions(slack_coupling=coupling)
        s1, x1 = update_x1(toy_spec, state, 1.0, options)
        lobe = toy_spec.kernels.data_trace + np.vdot(state.x2, toy_spec.kernels.pilot_gram @ x1).real
        assert toy_spec.xi_min - 1e-8 <= lobe <= toy_spec.budget + 1e-8
        assert s1 >= 0

    def test_x1_sca_history_decreases(self, rng, toy_spec):
        state = make_state(toy_spec.with_eta(0.9), rng)
        history: list[float] = []
        update_x1(toy_spec.with_eta(0.9), state, 1.0, SolverOptions(sca_max_iters=8), history)
        assert history
        assert all(b <= a + 1e-12 * max(1.0, abs(a)) for a, b in zip(history, history[1:]))

    def test_x2_step_improves_block(self, rng, toy_spec):
        state = make_state(toy_spec, rng)
        x2 = update_x2(toy_spec, state, 1.0, SolverOptions())
        assert block_objective_x2(toy_spec, state, 1.0, x2) <= block_objective_x2(
            toy_spec, state, 1.0, state.x2
        ) + 1e-10

    def test_slack_inverts_xi(self, rng, toy_spec):
        state = make_state(toy_spec, rng)
        A = update_slack(toy_spec, state, SolverOptions())
        xi = xi_matrix(toy_spec, state.x1, state.x2)
        np.testing.assert_allclose(A @ xi, np.eye(toy_spec.model.k_h), atol=1e-8)

    def test_projected_slack_respects_bound(self, rng, toy_spec):
        state = make_state(toy_spec, rng)
        state.s1 = 0.5 * toy_spec.trace_term(state.x2)
        A = update_slack(toy_spec, state, SolverOptions(slack_coupling="projected"))
        assert toy_spec.model.prior_variance * np.trace(A).real == pytest.approx(state.s1, rel=1e-9)


class TestSlackTangent:
    """The linearized SINR slack never exceeds the exact trace term."""

    def consensus_state(self, spec, rng) -> DesignState:
        x_p = make_pilots(rng, spec.placement.k_p)
        state = DesignState.initial(spec, 1.0, x_p, rho=1.0, zeta=0.5)
        state.x1 = x_p.copy()
        state.A = np.linalg.inv(xi_matrix(spec, x_p, x_p))
        return state

    def test_tight_at_inverse(self, rng, toy_spec):
        state = self.consensus_state(toy_spec, rng)
        bound = _trace_bound(toy_spec, state, state.x1, SlackCoupling.LINEARIZED)
        assert bound == pytest.approx(toy_spec.trace_term(state.x1), rel=1e-9)

    def test_majorizes_for_hermitian_slack(self, rng, toy_spec):
        state = self.consensus_state(toy_spec, rng)
        exact = toy_spec.trace_term(state.x1)
        k_h = toy_spec.model.k_h
        for _ in range(10):
            E = rng.standard_normal((k_h, k_h)) + 1j * rng.standard_normal((k_h, k_h))
            trial = state.copy()
            trial.A = state.A + 0.05 * (E + E.conj().T)
            assert _trace_bound(toy_spec, trial, trial.x1, SlackCoupling.LINEARIZED) <= exact + 1e-12


class TestLargePenalty:
    """With a dominant penalty each block returns the consensus target, projected onto its slab."""

    def test_x1_follows_target(self, rng, toy_spec):
        state = make_state(toy_spec, rng)
        state.rho = 1e12
        _, x1 = update_x1(toy_spec, state, 1.0, SolverOptions())
        np.testing.assert_allclose(x1, state.x2 - state.d, atol=1e-6)

    def test_x2_follows_target(self, rng, toy_spec):
        state = make_state(toy_spec, rng)
        state.rho = 1e12
        x2 = update_x2(toy_spec, state, 1.0, SolverOptions())
        np.testing.assert_allclose(x2, state.x1 + state.d, atol=1e-6)

    def test_x1_projected_onto_slab(self, rng, toy_spec):
        state = make_state(toy_spec, rng)
        state.rho = 1e12
        state.d = state.x2.copy()
        c, lo, _ = _slab(toy_spec, 1.0, state.x2)
        assert lo > 0
        _, x1 = update_x1(toy_spec, state, 1.0, SolverOptions())
        np.testing.assert_allclose(x1, lo * c / np.vdot(c, c).real, atol=1e-6)


class TestSlackExamples:
    """Slack updates for hand-checkable Xi."""

    @pytest.fixture
    def fixed_xi(self, monkeypatch):
        def install(xi):
            monkeypatch.setattr(admm, "xi_matrix", lambda spec, x1, x2: np.asarray(xi, dtype=complex))

        return install

    def test_identity(self, rng, toy_spec, fixed_xi):
        fixed_xi(np.eye(2))
        A = update_slack(toy_spec, make_state(toy_spec, rng), SolverOptions())
        np.testing.assert_allclose(A, np.eye(2), atol=1e-12)

    def test_diagonal(self, rng, toy_spec, fixed_xi):
        fixed_xi(np.diag([2.0, 4.0]))
        A = update_slack(toy_spec, make_state(toy_spec, rng), SolverOptions())
        np.testing.assert_allclose(A, np.diag([0.5, 0.25]), atol=1e-12)

    def test_projected_diagonal(self, rng, toy_spec, fixed_xi):
        """p sh2 = 0.5 and s1 = 0.25 pull Tr(A) from 0.75 down to 0.5 along (Xi Xi^H)^-1."""
        fixed_xi(np.diag([2.0, 4.0]))
        state = make_state(toy_spec, rng)
        state.s1 = 0.25
        A = update_slack(toy_spec, state, SolverOptions(slack_coupling="projected"))
        np.testing.assert_allclose(A, np.diag([0.3, 0.2]), atol=1e-12)


class TestSolvePilots:
    """Tests for the full pilot ADMM."""

    def test_returns_feasible_design(self, rng, toy_spec):
        spec = toy_spec.with_scales(1.0, 1.0)
        state = make_state(spec, rng)
        state.x1 = state.x2.copy()
        trace = SolverTrace()
        result = solve_pilots(spec, SolverOptions(admm_max_iters=100), 1.0, state, trace)
        lobe = mainlobe(1.0, result.x_p, spec.kernels)
        assert spec.xi_min * (1 - 1e-9) <= lobe <= spec.budget * (1 + 1e-9)
        assert 1 <= len(trace.admm) <= 100
        assert [r.m for r in trace.admm] == list(range(1, len(trace.admm) + 1))
        assert np.isfinite(result.primal_residual)

    def test_iteration_limit_warns(self, rng, toy_spec, collector):
        state = make_state(toy_spec, rng)
        solve_pilots(toy_spec, SolverOptions(admm_max_iters=1, eps_consensus=1e-300), 1.0, state)
        assert "ADMM_NOT_CONVERGED" in collector.codes()

    def test_input_state_untouched(self, rng, toy_spec):
        state = make_state(toy_spec, rng)
        x2 = state.x2.copy()
        solve_pilots(toy_spec, SolverOptions(admm_max_iters=5), 1.0, state)
        np.testing.assert_array_equal(state.x2, x2)

    def test_penalty_growth_reaches_consensus(self, rng, toy_spec, collector):
        spec = toy_spec.with_scales(1.0, 1.0)
        state = make_state(spec, rng)
        options = SolverOptions()
        trace = SolverTrace()
        result = solve_pilots(spec, options, 1.0, state, trace)
        assert trace.admm[-1].primal_residual <= options.eps_consensus
        assert result.primal_residual <= options.eps_consensus
        assert "ADMM_NOT_CONVERGED" not in collector.codes()

    def test_penalty_restarts_each_run(self, rng, toy_spec):
        state = make_state(toy_spec, rng)
        state.rho, state.d = 1e6, state.d / 1e6
        result = solve_pilots(toy_spec, SolverOptions(admm_max_iters=2, penalty_warmup=5), 1.0, state)
        assert result.rho <= 4.0

    def test_growth_starts_after_warmup(self, rng, toy_spec):
        state = make_state(toy_spec, rng)
        options = SolverOptions(
            admm_max_iters=10, penalty_warmup=100, adaptive_penalty=False, eps_consensus=1e-300
        )
        result = solve_pilots(toy_spec, options, 1.0, state)
        assert result.rho == pytest.approx(1.5**5)
