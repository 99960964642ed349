import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from daesplit.dae import CoupledDae, Partition, lift_constraint_model
from daesplit.errors import NewtonDivergence, SingularMatrix
from daesplit.integrators import (IntegratorKind, SolverStats, StepConfig, dae_step, integrate,
                                  newton_solve, ode_step, uniform_steps)
from daesplit.linalg import expm, lu_solve
from daesplit.models import lc_initial_state, lc_oscillator, scalar_decay

from conftest import scalar_ode, semi_explicit_growth

EULER = IntegratorKind.IMPLICIT_EULER
MIDPOINT = IntegratorKind.IMPLICIT_MIDPOINT


class TestNewton:
    def test_square_root(self):
        x = newton_solve(lambda x: x ** 2 - 4, [3.0], StepConfig(1.0))
        assert x[0] == pytest.approx(2.0, abs=1e-12)

    def test_linear_one_iteration(self):
        A = np.array([[3.0, 1.0], [1.0, 2.0]])
        b = np.array([1.0, -1.0])
        stats = SolverStats()
        x = newton_solve(lambda x: A @ x - b, np.zeros(2), StepConfig(1.0), jac=lambda x: A,
                         stats=stats)
        np.testing.assert_allclose(x, lu_solve(A, b), atol=1e-15)
        assert stats.newton_iterations == 1

    def test_no_real_root(self):
        with pytest.raises(NewtonDivergence):
            newton_solve(lambda x: x ** 2 + 1, [1.0], StepConfig(1.0))

    def test_singular_start(self):
        with pytest.raises(SingularMatrix):
            newton_solve(lambda x: x ** 2 + 1, [0.0], StepConfig(1.0))


class TestDaeStep:
    def test_euler_decay(self):
        dae = scalar_ode()
        s = dae_step(dae, dae.state(0.0, [1.0]), EULER, StepConfig(0.1))
        assert s.y[0] == pytest.approx(1 / 1.1, abs=1e-12)
        assert s.t == pytest.approx(0.1)

    def test_midpoint_decay(self):
        dae = scalar_ode()
        s = dae_step(dae, dae.state(0.0, [1.0]), MIDPOINT, StepConfig(0.1))
        assert s.y[0] == pytest.approx(0.95 / 1.05, abs=1e-12)

    def test_semi_explicit_euler(self):
        dae = semi_explicit_growth()
        s = dae_step(dae, dae.state(0.0, [1.0], [1.0]), EULER, StepConfig(0.1))
        assert s.y[0] == pytest.approx(1 / 0.9, abs=1e-12)
        assert s.z[0] == pytest.approx(s.y[0], abs=1e-12)

    def test_frozen_blocks_bitwise(self, rng):
        dae = lift_constraint_model(lc_oscillator())
        s = lc_initial_state(dae, rng.standard_normal(4))
        sub = dae.with_blocks(f2=None)
        out = dae_step(sub, s, MIDPOINT, StepConfig(0.05))
        assert np.array_equal(out.y[2:], s.y[2:])
        assert not np.array_equal(out.y[:2], s.y[:2])

    def test_all_f_zero_returns_y_bitwise(self, rng):
        dae = lift_constraint_model(lc_oscillator()).with_blocks(f1=None, f2=None)
        s = lc_initial_state(dae, rng.standard_normal(4))
        for kind in (EULER, MIDPOINT):
            assert np.array_equal(dae_step(dae, s, kind, StepConfig(0.1)).y, s.y)

    @settings(max_examples=20, deadline=None)
    @given(st.lists(st.floats(-2, 2), min_size=4, max_size=4), st.sampled_from([EULER, MIDPOINT]))
    def test_constraints_hold_after_step(self, y0, kind):
        dae = lift_constraint_model(lc_oscillator())
        s = lc_initial_state(dae, y0)
        out = dae_step(dae, s, kind, StepConfig(0.05))
        assert np.max(np.abs(dae.g(out))) <= 1e-12

    def test_substeps(self):
        dae = scalar_ode()
        s = dae_step(dae, dae.state(0.0, [1.0]), EULER, StepConfig(0.1, substeps=4))
        assert s.y[0] == pytest.approx(1.025 ** -4, abs=1e-13)
        assert s.t == pytest.approx(0.1)


class TestIntegrate:
    def test_zero_span(self):
        dae = scalar_ode()
        s0 = dae.state(0.5, [1.0])
        traj = integrate(dae, s0, 0.5, MIDPOINT, StepConfig(0.1))
        assert len(traj) == 1 and traj.final is s0

    def test_midpoint_power(self):
        dae = scalar_decay()
        traj = integrate(dae, dae.state(0.0, [1.0]), 1.0, MIDPOINT, StepConfig(0.1))
        assert traj.final.y[0] == pytest.approx((0.95 / 1.05) ** 10, abs=1e-12)
        assert traj.final.t == 1.0

    def test_non_integer_grid(self):
        with pytest.raises(ValueError):
            uniform_steps(0.0, 1.0, 0.3)

    def test_linear_system_against_expm(self):
        A = np.array([[0.0, 1.0], [-2.0, -0.3]])
        dae = CoupledDae(Partition(2, 0), f1=lambda s: A @ s.y)
        x0 = np.array([1.0, 0.5])
        exact = expm(A * 2.0) @ x0
        errs = []
        for h in (0.02, 0.01):
            traj = integrate(dae, dae.state(0.0, x0), 2.0, MIDPOINT, StepConfig(h))
            errs.append(np.max(np.abs(traj.final.y - exact)))
        assert errs[1] <= 2.0 * 0.01 ** 2
        assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.05)

    @pytest.mark.parametrize("kind,ratio", [(EULER, 2.0), (MIDPOINT, 4.0)])
    def test_order_under_halving(self, kind, ratio):
        dae = scalar_decay()
        errs = []
        for h in (0.02, 0.01, 0.005):
            traj = integrate(dae, dae.state(0.0, [1.0]), 1.0, kind, StepConfig(h), store=False)
            errs.append(abs(traj.final.y[0] - np.exp(-1.0)))
        for a, b in zip(errs, errs[1:]):
            assert a / b == pytest.approx(ratio, rel=0.1)

    def test_midpoint_conserves_quadratic_invariant(self):
        J = np.array([[0.0, 2.0, 0.5], [-2.0, 0.0, 1.0], [-0.5, -1.0, 0.0]])
        x0 = np.array([1.0, -0.5, 0.25])
        cfg = StepConfig(0.01)
        x = x0
        n = 10_000
        for _ in range(n):
            x = ode_step(lambda t, v: J @ v, 0.0, x, 0.01, MIDPOINT, cfg, jac=lambda t, v: J)
        drift = abs(np.linalg.norm(x) - np.linalg.norm(x0))
        assert drift <= cfg.newton_tol * n

    def test_stats_count_steps(self):
        dae = scalar_decay()
        stats = SolverStats()
        integrate(dae, dae.state(0.0, [1.0]), 1.0, EULER, StepConfig(0.25), stats)
        assert stats.steps == 4 and stats.newton_iterations >= 4

    def test_failure_records_time(self):
        dae = CoupledDae(Partition(1, 0), f1=lambda s: s.y ** 2 + 1e6)
        with pytest.raises(NewtonDivergence) as info:
            integrate(dae, dae.state(0.0, [0.0]), 1.0, EULER, StepConfig(0.5))
        assert info.value.t == 0.0
