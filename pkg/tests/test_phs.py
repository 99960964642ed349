import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from daesplit.errors import DimensionMismatch, SingularMatrix, StillSingular
from daesplit.integrators import IntegratorKind, StepConfig
from daesplit.models import InputSignal, synthetic_phs_dae
from daesplit.phs import (PhsDae, conservative_rhs, direct_integrate, dissipative_rhs,
                          dissipativity_check, explicit_form, full_rhs, hamiltonian, output,
                          perturbed_energy_bound, phs_integrate, phs_lie_step, phs_strang_step,
                          regularize, validate_structure)

MIDPOINT = IntegratorKind.IMPLICIT_MIDPOINT
EULER = IntegratorKind.IMPLICIT_EULER
J2 = np.array([[0.0, 1.0], [-1.0, 0.0]])


def phs(E=None, J=None, R=None, Q=None, B=None, u=None, n=2):
    I = np.eye(n)
    return PhsDae(I if E is None else E, np.zeros((n, n)) if J is None else J,
                  np.zeros((n, n)) if R is None else R, I if Q is None else Q,
                  np.zeros((n, 1)) if B is None else B, u)


class TestValidateStructure:
    def test_all_pass(self):
        assert validate_structure(phs(J=J2)).ok

    def test_symmetric_j(self):
        rep = validate_structure(phs(J=np.array([[0.0, 1.0], [1.0, 0.0]])))
        assert not rep["J skew-symmetry"].passed
        assert rep["J skew-symmetry"].violation == pytest.approx(2.0)

    def test_indefinite_r(self):
        rep = validate_structure(phs(R=np.array([[1.0, 2.0], [2.0, 1.0]])))
        assert not rep["R positive semidefinite"].passed
        assert rep["R positive semidefinite"].violation == pytest.approx(1.0)

    def test_q_not_positive(self):
        rep = validate_structure(phs(Q=np.diag([1.0, 0.0])))
        assert not rep["Q positive definite"].passed

    def test_shape_mismatch(self):
        with pytest.raises(DimensionMismatch):
            PhsDae(np.eye(2), np.eye(3), np.eye(2), np.eye(2), np.zeros((2, 1)))


class TestEnergyAndOutput:
    def test_hamiltonian_values(self):
        assert hamiltonian(phs(), np.zeros(2)) == 0.0
        assert hamiltonian(phs(), [3.0, 4.0]) == pytest.approx(12.5)
        assert hamiltonian(phs(E=np.diag([0.0, 1.0])), [5.0, 2.0]) == pytest.approx(2.0)

    def test_output_values(self):
        np.testing.assert_array_equal(output(phs(), [1.0, 2.0]), [0.0])
        B = np.array([[1.0], [0.0]])
        np.testing.assert_allclose(output(phs(B=B), [7.0, 1.0]), [7.0])
        np.testing.assert_allclose(output(phs(Q=np.diag([2.0, 1.0]), B=np.ones((2, 1))), [1.0, 3.0]), [5.0])


class TestRegularize:
    def test_diag(self):
        reg = regularize(phs(E=np.diag([0.0, 1.0])), 0.1)
        np.testing.assert_allclose(reg.E_eps, np.diag([0.1, 1.1]))

    def test_zero_e(self):
        reg = regularize(phs(E=np.zeros((2, 2))), 1.0)
        np.testing.assert_array_equal(reg.E_eps, np.eye(2))

    def test_nonpositive_rejected(self):
        with pytest.raises(ValueError):
            regularize(phs(), 0.0)

    def test_still_singular(self):
        with pytest.raises(StillSingular):
            regularize(phs(E=np.diag([-1.0, 1.0])), 1.0)

    def test_explicit_form_needs_regular_e(self):
        with pytest.raises(StillSingular):
            explicit_form(phs(E=np.diag([0.0, 1.0])))

    def test_split_rhs_examples(self):
        reg = explicit_form(phs(J=J2))
        np.testing.assert_allclose(conservative_rhs(reg, [1.0, 0.0]), [0.0, -1.0])
        reg = explicit_form(phs(R=np.eye(2)))
        np.testing.assert_allclose(dissipative_rhs(reg, [2.0, 3.0], 0.0), [-2.0, -3.0])

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 1000), st.floats(1e-4, 1.0), st.floats(0, 1))
    def test_split_sum(self, seed, eps, t):
        p = synthetic_phs_dae(3, 2, seed, input_signal=InputSignal("sine_product", 1, 1.0, 3.0))
        reg = regularize(p, eps)
        x = np.random.default_rng(seed).standard_normal(5)
        full = np.linalg.solve(reg.E_eps, (p.J - p.R) @ p.Q @ x + p.B @ p.input(t))
        got = conservative_rhs(reg, x, t) + dissipative_rhs(reg, x, t)
        np.testing.assert_allclose(got, full, rtol=1e-12, atol=1e-12 * np.max(np.abs(full)))
        np.testing.assert_allclose(full_rhs(reg, x, t), full, rtol=1e-12, atol=1e-12 * np.max(np.abs(full)))


class TestSplitSteps:
    def test_strang_conservative_energy(self):
        p = explicit_form(phs(J=np.array([[0.0, 3.0], [-3.0, 0.0]])))
        cfg = StepConfig(0.1)
        x = np.array([1.0, -2.0])
        x1, audit = phs_strang_step(p, x, 0.0, 0.1, MIDPOINT, cfg)
        assert abs(hamiltonian(p, x1) - hamiltonian(p, x)) <= cfg.newton_tol
        assert audit.supplied == 0.0

    def test_lie_conservative_energy(self):
        p = explicit_form(phs(J=J2))
        cfg = StepConfig(0.1)
        x1, _ = phs_lie_step(p, np.array([0.3, 0.4]), 0.0, 0.1, MIDPOINT, cfg)
        assert hamiltonian(p, x1) == pytest.approx(0.125, abs=cfg.newton_tol)

    def test_scalar_dissipative_stage(self):
        p = explicit_form(PhsDae([[1.0]], [[0.0]], [[1.0]], [[1.0]], [[0.0]]))
        errs = []
        for h in (0.1, 0.05):
            x1, _ = phs_strang_step(p, np.array([1.0]), 0.0, h, MIDPOINT, StepConfig(h))
            errs.append(abs(hamiltonian(p, x1) - 0.5 * np.exp(-2 * h)))
        assert errs[0] / errs[1] == pytest.approx(8.0, rel=0.1)

    def test_full_system_slack(self):
        p = explicit_form(phs(J=J2, R=np.diag([1.0, 0.0])))
        cfg = StepConfig(0.01)
        traj, audits = phs_integrate(p, [1.0, 1.0], 1.0, "strang", MIDPOINT, cfg)
        assert len(audits) == 100
        assert min(a.slack for a in audits) >= -10 * cfg.newton_tol

    def test_strang_order_halving(self):
        p = explicit_form(synthetic_phs_dae(4, 0, seed=3,
                                            input_signal=InputSignal("sine_product", 1, 0.5, 1.0)))
        x0 = np.ones(4)
        ref, _ = phs_integrate(p, x0, 1.0, "monolithic", MIDPOINT, StepConfig(1e-4))
        errs = []
        for h in (0.02, 0.01, 0.005):
            traj, _ = phs_integrate(p, x0, 1.0, "strang", MIDPOINT, StepConfig(h))
            errs.append(np.max(np.abs(traj.final.y - ref.final.y)))
        for a, b in zip(errs, errs[1:]):
            assert a / b == pytest.approx(4.0, rel=0.2)

    def test_unknown_scheme(self):
        p = explicit_form(phs(J=J2))
        with pytest.raises(KeyError):
            phs_integrate(p, [1.0, 0.0], 0.1, "yoshida", MIDPOINT, StepConfig(0.1))


class TestDissipativity:
    def test_conservative_pass(self):
        p = explicit_form(phs(J=J2))
        traj, _ = phs_integrate(p, [1.0, 0.0], 1.0, "strang", MIDPOINT, StepConfig(0.05))
        res = dissipativity_check(p, traj)
        assert res.passed
        assert max(abs(a.slack) for a in res.audits) <= 1e-12

    def test_dissipative_pass(self):
        p = explicit_form(synthetic_phs_dae(4, 0, seed=5))
        traj, _ = phs_integrate(p, np.ones(4), 1.0, "lie", MIDPOINT, StepConfig(0.05))
        res = dissipativity_check(p, traj)
        assert res.passed and res.min_slack > 0
        H = [hamiltonian(p, s.y) for s in traj.states]
        assert np.all(np.diff(H) < 0)

    def test_scalar_near_exact_flow(self):
        p = explicit_form(PhsDae([[1.0]], [[0.0]], [[1.0]], [[1.0]], [[0.0]]))
        h = 0.1
        _, audit = phs_lie_step(p, np.array([1.0]), 0.0, h, MIDPOINT, StepConfig(h, substeps=200))
        assert audit.H_end - audit.H_start == pytest.approx(0.5 * (np.exp(-2 * h) - 1), abs=1e-6)
        assert audit.slack >= 0

    def test_corrupted_trajectory_fails(self):
        p = explicit_form(synthetic_phs_dae(4, 0, seed=5))
        traj, _ = phs_integrate(p, np.ones(4), 1.0, "strang", MIDPOINT, StepConfig(0.05))
        traj.states[10].y[:] *= 3.0
        traj.supplied = None
        assert not dissipativity_check(p, traj).passed

    def test_power_balance_along_fine_trajectory(self):
        """Central differences of H match -x^T Q R Q x + y^T u to O(h^2)."""
        sig = InputSignal("sine_product", 1, 1.0, 2.0)
        p = explicit_form(synthetic_phs_dae(4, 0, seed=2, input_signal=sig))
        h = 1e-4
        traj, _ = phs_integrate(p, np.ones(4), 0.02, "monolithic", MIDPOINT, StepConfig(h))
        H = np.array([hamiltonian(p, s.y) for s in traj.states])
        dH = (H[2:] - H[:-2]) / (2 * h)
        worst = 0.0
        for k in range(1, len(H) - 1):
            x, t = traj.states[k].y, traj.times[k]
            Qx = p.Q @ x
            expected = -Qx @ p.base.R @ Qx + output(p, x) @ p.input(t)
            worst = max(worst, abs(dH[k - 1] - expected))
        assert worst <= 1e-6


class TestDirectAndEpsilon:
    def test_direct_singular_pencil(self):
        p = phs(E=np.zeros((2, 2)))
        with pytest.raises(SingularMatrix):
            direct_integrate(p, [0.0, 0.0], 0.1, 0.1)

    def test_eps_term_linear_in_eps(self):
        p = synthetic_phs_dae(3, 1, seed=42)
        reg = regularize(p, 1e-3)
        traj, _ = phs_integrate(reg, [1.0, 1.0, 1.0, 0.0], 0.1, "monolithic", EULER, StepConfig(1e-2))
        rows_a = perturbed_energy_bound(reg, traj)
        reg_b = regularize(p, 1e-4)
        rows_b = perturbed_energy_bound(reg_b, traj)
        for a, b in zip(rows_a, rows_b):
            assert a.eps_term == pytest.approx(10 * b.eps_term, rel=1e-12)
