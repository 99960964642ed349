"""Linear port-Hamiltonian DAEs ``E x' = (J - R) Q x + B u``, ``y = B^T Q x``.

Singular ``E`` is handled by eps-embedding: ``E_eps = E + eps I`` turns the
system into an ODE with Hamiltonian ``H_eps(x) = x^T Q^T E_eps x / 2``.
That ODE is split into its energy-conserving part ``J Q x`` and its
dissipative part ``-R Q x + B u`` and integrated with Lie-Trotter or
Strang composition.
"""
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .dae import Partition, State, Trajectory
from .errors import DimensionMismatch, MissingOutputs, SingularMatrix, SplittingError, StillSingular
from .integrators import IntegratorKind, ode_step, uniform_steps
from .linalg import LUFactor, as_matrix, check_symmetric_psd, min_symmetric_eigenvalue
from .splitting import SchemeKind, compose

STRUCTURE_RTOL = 1e-12


def zero_input(m):
    def u(t):
        return np.zeros(m)
    return u


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    violation: float

    def __str__(self):
        mark = "PASS" if self.passed else "FAIL"
        return f"{mark}  {self.name:<28} violation={self.violation:.3e}"


@dataclass(frozen=True)
class ValidationReport:
    checks: tuple

    @property
    def ok(self):
        return all(c.passed for c in self.checks)

    def failures(self):
        return [c for c in self.checks if not c.passed]

    def __getitem__(self, name):
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def __str__(self):
        return "\n".join(str(c) for c in self.checks)


@dataclass(frozen=True, eq=False)
class PhsDae:
    """Matrices of a linear port-Hamiltonian DAE plus its input signal.

    Only shapes are enforced here; the structural conditions are reported
    by :func:`validate_structure` so broken models can still be inspected.
    """

    E: np.ndarray
    J: np.ndarray
    R: np.ndarray
    Q: np.ndarray
    B: np.ndarray
    u: Optional[Callable] = None
    name: str = "phs"
    input_descriptor: Optional[dict] = None
    report: Optional[ValidationReport] = None

    def __post_init__(self):
        E = as_matrix(self.E, "E")
        n = E.shape[0]
        mats = {"E": E}
        for key in ("J", "R", "Q"):
            M = as_matrix(getattr(self, key), key)
            if M.shape != (n, n):
                raise DimensionMismatch(f"{key} has shape {M.shape}, expected {(n, n)}")
            mats[key] = M
        B = np.array(self.B, dtype=float)
        if B.ndim == 1:
            B = B.reshape(n, -1)
        B = as_matrix(B, "B")
        if B.shape[0] != n:
            raise DimensionMismatch(f"B has {B.shape[0]} rows, expected {n}")
        if E.shape != (n, n):
            raise DimensionMismatch("E must be square")
        mats["B"] = B
        for key, val in mats.items():
            val.setflags(write=False)
            object.__setattr__(self, key, val)
        if self.u is None:
            object.__setattr__(self, "u", zero_input(B.shape[1]))

    @property
    def n(self):
        return self.E.shape[0]

    @property
    def m(self):
        return self.B.shape[1]

    @property
    def base(self):
        return self

    @property
    def flow_matrix(self):
        return self.E

    def input(self, t):
        return np.asarray(self.u(t), dtype=float).reshape(self.m)


def _scale(*mats):
    return max(1.0, *(float(np.max(np.abs(M))) if M.size else 0.0 for M in mats))


def validate_structure(p):
    """Report every condition of the port-Hamiltonian definition."""
    E, J, R, Q = p.E, p.J, p.R, p.Q
    scale = _scale(E, J, R, Q)
    tol = STRUCTURE_RTOL * scale
    checks = []
    eq = np.max(np.abs(E.T @ Q - Q.T @ E)) if E.size else 0.0
    checks.append(Check("E^T Q symmetry", eq <= tol * scale, float(eq)))
    skew = np.max(np.abs(J + J.T)) if J.size else 0.0
    checks.append(Check("J skew-symmetry", skew <= tol, float(skew)))
    r_sym = np.max(np.abs(R - R.T)) if R.size else 0.0
    checks.append(Check("R symmetry", r_sym <= tol, float(r_sym)))
    r_min = min_symmetric_eigenvalue(R)
    checks.append(Check("R positive semidefinite", check_symmetric_psd(R, 1e-10 * scale),
                        float(max(0.0, -r_min))))
    q_sym = np.max(np.abs(Q - Q.T)) if Q.size else 0.0
    checks.append(Check("Q symmetry", q_sym <= tol, float(q_sym)))
    q_min = min_symmetric_eigenvalue(Q)
    checks.append(Check("Q positive definite", q_sym <= tol and q_min > 0.0,
                        float(max(0.0, -q_min))))
    return ValidationReport(tuple(checks))


class RegularizedPhs:
    """``p`` with ``E`` replaced by ``E + eps I``.

    ``E_eps`` is factorized once; the explicit-ODE matrices of the two split
    parts are formed eagerly.
    """

    def __init__(self, base, epsilon):
        if not epsilon >= 0:
            raise ValueError("epsilon must be non-negative")
        self.base = base
        self.epsilon = float(epsilon)
        self.E_eps = base.E + self.epsilon * np.eye(base.n)
        self.E_eps.setflags(write=False)
        try:
            self._lu = LUFactor(self.E_eps)
        except SingularMatrix as exc:
            raise StillSingular(f"E + {epsilon:g} I is singular") from exc
        sym = self.E_eps.T @ base.Q - base.Q.T @ self.E_eps
        self.symmetry_violation = float(np.max(np.abs(sym))) if sym.size else 0.0
        self.conservative_matrix = self._lu.solve(base.J @ base.Q)
        self.dissipative_matrix = -self._lu.solve(base.R @ base.Q)
        self.input_matrix = self._lu.solve(base.B)
        self.full_matrix = self.conservative_matrix + self.dissipative_matrix

    # delegate model data so audits work on either type
    n = property(lambda self: self.base.n)
    m = property(lambda self: self.base.m)
    Q = property(lambda self: self.base.Q)
    B = property(lambda self: self.base.B)
    u = property(lambda self: self.base.u)
    name = property(lambda self: f"{self.base.name}[eps={self.epsilon:g}]")

    @property
    def flow_matrix(self):
        return self.E_eps

    def input(self, t):
        return self.base.input(t)


def regularize(p, epsilon):
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    return RegularizedPhs(p, epsilon)


def explicit_form(p):
    """``p`` as an explicit ODE without perturbation; needs nonsingular ``E``."""
    return RegularizedPhs(p, 0.0)


def _check_x(p, x):
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != p.n:
        raise DimensionMismatch(f"x has length {x.size}, model has n={p.n}")
    return x


def hamiltonian(p, x):
    """``x^T Q^T E x / 2``, with ``E_eps`` for a regularized model."""
    x = _check_x(p, x)
    return 0.5 * float(x @ (p.Q.T @ (p.flow_matrix @ x)))


def output(p, x, t=None):
    x = _check_x(p, x)
    return p.B.T @ (p.Q @ x)


def conservative_rhs(p, x, t=None):
    return p.conservative_matrix @ _check_x(p, x)


def dissipative_rhs(p, x, t):
    return p.dissipative_matrix @ _check_x(p, x) + p.input_matrix @ p.input(t)


def full_rhs(p, x, t):
    return p.full_matrix @ _check_x(p, x) + p.input_matrix @ p.input(t)


@dataclass(frozen=True)
class EnergyAudit:
    """Energy balance of one macro step.

    ``slack = supplied - (H_end - H_start)`` is non-negative when the step
    respects the dissipation inequality. ``eps_term`` uses the quadratic
    form ``x^T Q x``; ``eps_term_norm`` the unsquared ``Q``-norm.
    """

    t: float
    H_start: float
    H_end: float
    supplied: float
    slack: float
    eps_term: float = 0.0
    eps_term_norm: float = 0.0


def _eps_terms(p, x0, x1):
    eps = getattr(p, "epsilon", 0.0)
    if not eps:
        return 0.0, 0.0
    q0 = float(x0 @ p.Q @ x0)
    q1 = float(x1 @ p.Q @ x1)
    return 0.5 * eps * abs(q1 - q0), 0.5 * eps * abs(math.sqrt(max(q1, 0.0)) - math.sqrt(max(q0, 0.0)))


def _audit(p, t, x0, x1, supplied):
    H0 = hamiltonian(p, x0)
    H1 = hamiltonian(p, x1)
    e_q, e_n = _eps_terms(p, x0, x1)
    return EnergyAudit(t, H0, H1, supplied, supplied - (H1 - H0), e_q, e_n)


def _port_power(p, x, t):
    return float(output(p, x) @ p.input(t))


def _stage(p, which, kind, cfg, stats, record=None):
    """Sub-flow ``x, t, h -> x`` for one split part.

    With ``record`` set, the port power ``y^T u`` at every inner node is
    integrated by the trapezoidal rule and accumulated into ``record``.
    """
    if which == "conservative":
        M = p.conservative_matrix

        def rhs(t, x):
            return M @ x
    elif which == "dissipative":
        M = p.dissipative_matrix
        Bin = p.input_matrix

        def rhs(t, x):
            return M @ x + Bin @ p.input(t)
    else:
        M = p.full_matrix
        Bin = p.input_matrix

        def rhs(t, x):
            return M @ x + Bin @ p.input(t)

    def jac(t, x):
        return M

    def flow(x, t, h):
        n_in = cfg.substeps
        hs = h / n_in
        for i in range(n_in):
            ti = t + i * hs
            x_new = ode_step(rhs, ti, x, hs, kind, cfg, jac, stats)
            if record is not None:
                record[0] += 0.5 * hs * (_port_power(p, x, ti) + _port_power(p, x_new, ti + hs))
            x = x_new
        return x

    return flow


def _split_step(p, x, t, h, scheme, kind, cfg, stats):
    kind = IntegratorKind.parse(kind)
    x = _check_x(p, x)
    supplied = [0.0]
    cons = _stage(p, "conservative", kind, cfg, stats)
    diss = _stage(p, "dissipative", kind, cfg, stats, supplied)
    x_next = compose(cons, diss, scheme, x, t, h)
    return x_next, _audit(p, t, x, x_next, supplied[0])


def phs_strang_step(p, x, t, h, kind, cfg, stats=None):
    """Conservative ``h/2``, dissipative ``h``, conservative ``h/2``.

    Only the dissipative stage exchanges energy with the port, so the
    audit's supplied energy is the trapezoidal integral of ``y^T u`` over
    that stage.
    """
    return _split_step(p, x, t, h, SchemeKind.STRANG, kind, cfg, stats)


def phs_lie_step(p, x, t, h, kind, cfg, stats=None):
    return _split_step(p, x, t, h, SchemeKind.LIE_TROTTER, kind, cfg, stats)


def phs_monolithic_step(p, x, t, h, kind, cfg, stats=None):
    kind = IntegratorKind.parse(kind)
    x = _check_x(p, x)
    supplied = [0.0]
    x_next = _stage(p, "full", kind, cfg, stats, supplied)(x, t, h)
    return x_next, _audit(p, t, x, x_next, supplied[0])


def _phs_partition(n):
    return Partition(n, 0, 0, 0)


def _trajectory(p, times, xs, supplied):
    part = _phs_partition(p.n)
    states = [State(t, x, np.zeros(0), part) for t, x in zip(times, xs)]
    outputs = np.array([output(p, x) for x in xs])
    return Trajectory(np.array(times), states, outputs=outputs,
                      supplied=None if supplied is None else np.array(supplied))


def phs_integrate(p, x0, t_end, scheme, kind, cfg, t0=0.0, stats=None):
    """Integrate a regularized PHS on a uniform grid.

    ``scheme`` is ``"lie"``, ``"strang"`` or ``"monolithic"``. Returns the
    trajectory (with outputs and per-interval supplied energy) and the list
    of per-step :class:`EnergyAudit` records.
    """
    step = {
        "lie": phs_lie_step,
        "strang": phs_strang_step,
        "monolithic": phs_monolithic_step,
    }[scheme.value if isinstance(scheme, SchemeKind) else str(scheme).lower()]
    n = uniform_steps(t0, t_end, cfg.h)
    x = _check_x(p, x0)
    times, xs, audits = [t0], [x], []
    for k in range(1, n + 1):
        t = times[-1]
        try:
            x, audit = step(p, x, t, cfg.h, kind, cfg, stats)
        except SplittingError as exc:
            exc.t = t
            raise
        times.append(t_end if k == n else t0 + k * cfg.h)
        xs.append(x)
        audits.append(audit)
    traj = _trajectory(p, times, xs, [a.supplied for a in audits])
    return traj, audits


def direct_step(p, x, t, h, kind):
    """One step on the unregularized DAE by solving with ``E`` itself.

    Implicit Euler: ``(E - h A) x+ = E x + h B u(t+h)``; midpoint:
    ``(E - h/2 A) x+ = (E + h/2 A) x + h B u(t+h/2)`` with ``A = (J-R)Q``.
    Raises :class:`SingularMatrix` when the pencil does not allow it.
    """
    kind = IntegratorKind.parse(kind)
    A = (p.J - p.R) @ p.Q
    if kind is IntegratorKind.IMPLICIT_EULER:
        lhs = p.E - h * A
        rhs = p.E @ x + h * (p.B @ p.input(t + h))
    else:
        lhs = p.E - 0.5 * h * A
        rhs = (p.E + 0.5 * h * A) @ x + h * (p.B @ p.input(t + 0.5 * h))
    return LUFactor(lhs).solve(rhs)


def direct_integrate(p, x0, t_end, h, kind=IntegratorKind.IMPLICIT_EULER, t0=0.0):
    kind = IntegratorKind.parse(kind)
    n = uniform_steps(t0, t_end, h)
    A = (p.J - p.R) @ p.Q
    if kind is IntegratorKind.IMPLICIT_EULER:
        lu = LUFactor(p.E - h * A)
        rhs_mat, t_shift = p.E, h
    else:
        lu = LUFactor(p.E - 0.5 * h * A)
        rhs_mat, t_shift = p.E + 0.5 * h * A, 0.5 * h
    x = _check_x(p, x0)
    times, xs = [t0], [x]
    for k in range(1, n + 1):
        t = times[-1]
        x = lu.solve(rhs_mat @ x + h * (p.B @ p.input(t + t_shift)))
        times.append(t_end if k == n else t0 + k * h)
        xs.append(x)
    return _trajectory(p, times, xs, None)


def algebraic_indices(p):
    """Indices whose row and column of ``E`` vanish."""
    E = p.base.E if isinstance(p, RegularizedPhs) else p.E
    zero_rows = np.all(E == 0.0, axis=1)
    zero_cols = np.all(E == 0.0, axis=0)
    return np.flatnonzero(zero_rows & zero_cols)


def consistent_state(p, x_guess, t=0.0):
    """Replace the algebraic components of ``x_guess`` by values satisfying
    ``0 = [(J - R) Q x + B u(t)]_alg``."""
    base = p.base
    x = _check_x(base, x_guess).copy()
    alg = algebraic_indices(base)
    if alg.size == 0:
        return x
    dyn = np.setdiff1d(np.arange(base.n), alg)
    A = (base.J - base.R) @ base.Q
    rhs = -(A[np.ix_(alg, dyn)] @ x[dyn] + (base.B @ base.input(t))[alg])
    x[alg] = LUFactor(A[np.ix_(alg, alg)]).solve(rhs)
    return x


@dataclass
class DissipativityResult:
    audits: list
    tolerances: np.ndarray
    passed: bool

    @property
    def min_slack(self):
        return min(a.slack for a in self.audits) if self.audits else 0.0


def _supplied_from_grid(p, traj, u):
    if traj.outputs is None:
        raise MissingOutputs("trajectory has no recorded outputs")
    t = traj.times
    power = np.array([float(np.asarray(y) @ np.asarray(u(ti), dtype=float).reshape(-1))
                      for y, ti in zip(traj.outputs, t)])
    return 0.5 * np.diff(t) * (power[1:] + power[:-1]), power


def dissipativity_check(p, traj, u=None, newton_tol=1e-12, use_recorded=True):
    """Audit ``H(t_{k+1}) - H(t_k) <= int y^T u`` on every interval.

    The supplied energy comes from the integrator's own stage quadrature
    when the trajectory carries it (``traj.supplied``), otherwise from the
    trapezoidal rule on the recorded outputs. An interval passes when its
    slack is at least ``-(10 * newton_tol + allowance)``, where the
    allowance bounds the trapezoidal error ``h^3 |w''| / 12`` of the port
    power ``w = y^T u`` using second differences.
    """
    if traj.outputs is None:
        raise MissingOutputs("trajectory has no recorded outputs")
    u = p.input if u is None else u
    grid_supplied, power = _supplied_from_grid(p, traj, u)
    if use_recorded and traj.supplied is not None:
        supplied = np.asarray(traj.supplied, dtype=float)
    else:
        supplied = grid_supplied
    hs = np.diff(traj.times)
    if power.size >= 3:
        curv = np.abs(np.diff(power, 2))
        curv = np.concatenate([[curv[0]], np.maximum(curv[:-1], curv[1:]), [curv[-1]]]) \
            if curv.size > 1 else np.full(hs.size, curv[0])
    else:
        curv = np.zeros(hs.size)
    tolerances = 10.0 * newton_tol + 2.0 * hs * curv / 12.0
    audits = []
    for k in range(hs.size):
        x0 = traj.states[k].y
        x1 = traj.states[k + 1].y
        audits.append(_audit(p, traj.times[k], x0, x1, float(supplied[k])))
    passed = all(a.slack >= -tol for a, tol in zip(audits, tolerances))
    return DissipativityResult(audits, tolerances, passed)


@dataclass(frozen=True)
class BoundRow:
    t: float
    lhs: float
    supplied: float
    eps_term: float
    eps_term_norm: float

    @property
    def margin(self):
        return self.supplied + self.eps_term - self.lhs

    @property
    def margin_norm(self):
        return self.supplied + self.eps_term_norm - self.lhs


def perturbed_energy_bound(p, traj, u=None):
    """Evaluate the unregularized energy balance along a regularized trajectory.

    Per interval reports ``H(x1) - H(x0)`` (with the original ``E``), the
    supplied energy, and both candidate eps-terms. ``margin >= 0`` means the
    bound ``dH <= supplied + eps_term`` holds.
    """
    if traj.outputs is None:
        raise MissingOutputs("trajectory has no recorded outputs")
    u = p.input if u is None else u
    if traj.supplied is not None:
        supplied = np.asarray(traj.supplied, dtype=float)
    else:
        supplied, _ = _supplied_from_grid(p, traj, u)
    rows = []
    for k in range(len(traj) - 1):
        x0 = traj.states[k].y
        x1 = traj.states[k + 1].y
        lhs = hamiltonian(p.base, x1) - hamiltonian(p.base, x0)
        e_q, e_n = _eps_terms(p, x0, x1)
        rows.append(BoundRow(traj.times[k], lhs, float(supplied[k]), e_q, e_n))
    return rows
