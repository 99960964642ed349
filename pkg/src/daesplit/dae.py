"""Coupled semi-explicit index-1 DAEs.

A model is

    y1' = f1(y1, y2, z1, z2)      0 = g1(y1, y2, z1, z2)
    y2' = f2(y1, y2, z1, z2)      0 = g2(y1, y2, z1, z2)

with ``d(g1, g2)/d(z1, z2)`` nonsingular near the solution. Model functions
receive a :class:`State` and return 1-D arrays.

A right-hand side set to ``None`` is *frozen*: for ``f_i`` the matching
``y_i`` block keeps its value during a step, for ``g_i`` the matching ``z_i``
block is neither solved for nor constrained. Split subsystems are built this
way.
"""
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .errors import (DimensionMismatch, EvaluationFailure, NewtonDivergence, SingularMatrix,
                     SplittingError)
from .linalg import LUFactor, condition_estimate

NEWTON_TOL = 1e-12
NEWTON_MAX_ITER = 50
MAX_HALVINGS = 20


@dataclass(frozen=True)
class Partition:
    ny1: int
    ny2: int
    nz1: int = 0
    nz2: int = 0

    def __post_init__(self):
        for name in ("ny1", "ny2", "nz1", "nz2"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.ny1 + self.ny2 < 1:
            raise ValueError("need at least one differential variable")

    @property
    def ny(self):
        return self.ny1 + self.ny2

    @property
    def nz(self):
        return self.nz1 + self.nz2


class State:
    """Point ``(t, y, z)`` with ``y = (y1, y2)`` and ``z = (z1, z2)`` stacked."""

    __slots__ = ("t", "y", "z", "partition")

    def __init__(self, t, y, z, partition):
        self.t = float(t)
        self.y = np.asarray(y, dtype=float)
        self.z = np.asarray(z, dtype=float)
        self.partition = partition
        if self.y.shape != (partition.ny,) or self.z.shape != (partition.nz,):
            raise DimensionMismatch(
                f"state sizes y={self.y.shape}, z={self.z.shape} do not match {partition}"
            )

    @classmethod
    def _raw(cls, t, y, z, partition):
        # unchecked constructor for the inner loops
        s = object.__new__(cls)
        s.t = t
        s.y = y
        s.z = z
        s.partition = partition
        return s

    @classmethod
    def from_blocks(cls, t, y1, y2, z1, z2, partition):
        return cls(t, np.concatenate([y1, y2]), np.concatenate([z1, z2]), partition)

    @property
    def y1(self):
        return self.y[: self.partition.ny1]

    @property
    def y2(self):
        return self.y[self.partition.ny1 :]

    @property
    def z1(self):
        return self.z[: self.partition.nz1]

    @property
    def z2(self):
        return self.z[self.partition.nz1 :]

    def replace(self, t=None, y=None, z=None):
        return State(
            self.t if t is None else t,
            self.y if y is None else y,
            self.z if z is None else z,
            self.partition,
        )

    def __repr__(self):
        return f"State(t={self.t!r}, y={self.y!r}, z={self.z!r})"


@dataclass(frozen=True)
class CouplingFlags:
    """Which cross-subsystem algebraic dependencies a model may have.

    ``cross_algebraic=False`` certifies that f1, g1 do not depend on z2 and
    f2, g2 do not depend on z1.
    """

    cross_algebraic: bool = True


def _zeros(n):
    return np.zeros(n)


@dataclass(frozen=True, eq=False)
class CoupledDae:
    """Two coupled semi-explicit index-1 DAE subsystems.

    Parameters
    ----------
    partition : Partition
    f1, g1, f2, g2 : callable or None
        ``State -> ndarray``. ``None`` freezes the corresponding block.
    coupling_flags : CouplingFlags
    jac : callable, optional
        ``State -> (fy, fz, gy, gz)`` with the Jacobians of the *full*
        stacked ``f = (f1, f2)`` and ``g = (g1, g2)``. Frozen blocks keep
        using the same hook; their rows are simply ignored.
    names : tuple of str, optional
        Variable names, ``y`` components first, then ``z``.
    """

    partition: Partition
    f1: Optional[Callable] = None
    g1: Optional[Callable] = None
    f2: Optional[Callable] = None
    g2: Optional[Callable] = None
    coupling_flags: CouplingFlags = field(default_factory=CouplingFlags)
    jac: Optional[Callable] = None
    names: Optional[tuple] = None
    name: str = "dae"
    jac_constant: bool = False

    def __post_init__(self):
        p = self.partition
        y_act = []
        if self.f1 is not None:
            y_act.extend(range(p.ny1))
        if self.f2 is not None:
            y_act.extend(range(p.ny1, p.ny))
        z_act = []
        if self.g1 is not None:
            z_act.extend(range(p.nz1))
        if self.g2 is not None:
            z_act.extend(range(p.nz1, p.nz))
        object.__setattr__(self, "y_active", np.array(y_act, dtype=int))
        object.__setattr__(self, "z_active", np.array(z_act, dtype=int))
        # factorized Newton matrices, used only when jac_constant is set
        object.__setattr__(self, "_factor_cache", {})
        if self.names is not None and len(self.names) != p.ny + p.nz:
            raise DimensionMismatch("names must cover every y and z component")

    def with_blocks(self, **changes):
        return replace(self, **changes)

    def variable_names(self):
        if self.names is not None:
            return tuple(self.names)
        p = self.partition
        return tuple(f"y{i}" for i in range(p.ny)) + tuple(f"z{i}" for i in range(p.nz))

    def state(self, t, y, z=None):
        if z is None:
            z = np.zeros(self.partition.nz)
        return State(t, y, z, self.partition)

    def f_active(self, s):
        """Differential right-hand side restricted to unfrozen ``y`` rows."""
        parts = []
        if self.f1 is not None:
            parts.append(self.f1(s))
        if self.f2 is not None:
            parts.append(self.f2(s))
        return np.concatenate(parts) if parts else _zeros(0)

    def g_active(self, s):
        parts = []
        if self.g1 is not None:
            parts.append(self.g1(s))
        if self.g2 is not None:
            parts.append(self.g2(s))
        return np.concatenate(parts) if parts else _zeros(0)

    def f(self, s):
        p = self.partition
        return np.concatenate([
            self.f1(s) if self.f1 is not None else _zeros(p.ny1),
            self.f2(s) if self.f2 is not None else _zeros(p.ny2),
        ])

    def g(self, s):
        p = self.partition
        return np.concatenate([
            self.g1(s) if self.g1 is not None else _zeros(p.nz1),
            self.g2(s) if self.g2 is not None else _zeros(p.nz2),
        ])

    def rhs(self, s):
        """Stacked ``(f1, g1, f2, g2)`` with zeros for frozen blocks."""
        p = self.partition
        return np.concatenate([
            self.f1(s) if self.f1 is not None else _zeros(p.ny1),
            self.g1(s) if self.g1 is not None else _zeros(p.nz1),
            self.f2(s) if self.f2 is not None else _zeros(p.ny2),
            self.g2(s) if self.g2 is not None else _zeros(p.nz2),
        ])

    def jacobian_blocks(self, s):
        """Active-row Jacobians ``(fy, fz, gy, gz)`` or ``None`` without a hook."""
        if self.jac is None:
            return None
        fy, fz, gy, gz = self.jac(s)
        ya, za = self.y_active, self.z_active
        return fy[ya], fz[ya], gy[za], gz[za]


@dataclass(frozen=True, eq=False)
class CoupledDaeWithConstraint:
    """Coupled DAE with a dedicated coupling equation ``0 = k`` and multiplier ``u_c``.

    ``f1, f2`` receive a :class:`State`; ``g1, g2, k`` receive
    ``(State, u_c)``. The optional ``jac`` hook follows the convention of the
    lifted model: algebraic unknowns ``(z1, z2, u_c)``, residuals
    ``(g1, g2, k)``.
    """

    partition: Partition
    nu: int
    f1: Callable
    g1: Callable
    f2: Callable
    g2: Callable
    k: Callable
    jac: Optional[Callable] = None
    names: Optional[tuple] = None
    name: str = "dae_with_constraint"
    jac_constant: bool = False


def lift_constraint_model(m):
    """Fold the coupling equation and its multiplier into subsystem 2.

    The lifted model has algebraic unknowns ``(z1, (z2, u_c))`` and residuals
    ``(g1, (g2, k))``. Plain :class:`CoupledDae` inputs are returned as is.
    """
    if isinstance(m, CoupledDae):
        return m
    p = m.partition
    nz = p.nz
    lifted = Partition(p.ny1, p.ny2, p.nz1, p.nz2 + m.nu)

    def base(s):
        return State._raw(s.t, s.y, s.z[:nz], p), s.z[nz:]

    def f1(s):
        return m.f1(base(s)[0])

    def f2(s):
        return m.f2(base(s)[0])

    def g1(s):
        return m.g1(*base(s))

    def g2(s):
        bs, uc = base(s)
        return np.concatenate([m.g2(bs, uc), m.k(bs, uc)])

    return CoupledDae(lifted, f1, g1, f2, g2, CouplingFlags(True), m.jac, m.names, m.name,
                      m.jac_constant)


@dataclass
class Trajectory:
    """Time grid with one state per grid point.

    ``outputs`` holds port outputs for PHS runs; ``supplied`` holds the
    supplied energy of each interval when the integrator computed it from
    its own stage values.
    """

    times: np.ndarray
    states: list
    outputs: Optional[np.ndarray] = None
    supplied: Optional[np.ndarray] = None
    names: Optional[tuple] = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if len(self.times) != len(self.states):
            raise DimensionMismatch("one state per time point required")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")

    def __len__(self):
        return len(self.states)

    @property
    def ys(self):
        return np.array([s.y for s in self.states])

    @property
    def zs(self):
        return np.array([s.z for s in self.states])

    @property
    def final(self):
        return self.states[-1]


def _check_finite(vals, what):
    if not np.all(np.isfinite(vals)):
        raise EvaluationFailure(f"{what} returned non-finite values")
    return vals


def algebraic_jacobian(dae, s, fd_step=None):
    """Central finite differences of stacked ``g`` w.r.t. stacked ``z``.

    Only active (unfrozen) algebraic blocks take part. The default step is
    ``1e-7 * (1 + |z_i|)``.
    """
    za = dae.z_active
    n = len(za)
    J = np.empty((n, n))
    g0 = _check_finite(dae.g_active(s), "algebraic residual")
    if g0.size != n:
        raise DimensionMismatch(f"g returned {g0.size} values for {n} unknowns")
    for j, idx in enumerate(za):
        d = fd_step if fd_step is not None else 1e-7 * (1.0 + abs(s.z[idx]))
        zp = s.z.copy()
        zm = s.z.copy()
        zp[idx] += d
        zm[idx] -= d
        gp = _check_finite(dae.g_active(s.replace(z=zp)), "algebraic residual")
        gm = _check_finite(dae.g_active(s.replace(z=zm)), "algebraic residual")
        J[:, j] = (gp - gm) / (2.0 * d)
    return J


@dataclass(frozen=True)
class Index1Check:
    regular: bool
    condition_estimate: float


def check_index1(dae, s, fd_step=None):
    if len(dae.z_active) == 0:
        return Index1Check(True, 1.0)
    blocks = dae.jacobian_blocks(s)
    if blocks is not None:
        J = blocks[3][:, dae.z_active]
    else:
        J = algebraic_jacobian(dae, s, fd_step)
    try:
        cond = condition_estimate(J)
    except SingularMatrix:
        return Index1Check(False, float("inf"))
    return Index1Check(True, cond)


def stack_pair(v):
    """Accept a stacked vector or a ``(v1, v2)`` pair."""
    if isinstance(v, (tuple, list)) and len(v) == 2 and not np.isscalar(v[0]):
        return np.concatenate([np.atleast_1d(np.asarray(v[0], float)),
                               np.atleast_1d(np.asarray(v[1], float))])
    return np.atleast_1d(np.asarray(v, dtype=float)).reshape(-1)


def solve_algebraic(dae, t, y, z_guess, tol=NEWTON_TOL, max_iter=NEWTON_MAX_ITER,
                    max_halvings=MAX_HALVINGS):
    """Damped Newton for ``g(t, y, z) = 0`` in the active ``z`` components."""
    z = np.array(z_guess, dtype=float)
    za = dae.z_active
    s = State(t, y, z, dae.partition)
    r = _check_finite(dae.g_active(s), "algebraic residual")
    rnorm = np.max(np.abs(r)) if r.size else 0.0
    it = 0
    while rnorm > tol:
        if it >= max_iter:
            raise NewtonDivergence(
                f"algebraic solve did not converge in {max_iter} iterations (|g|={rnorm:.3e})"
            )
        blocks = dae.jacobian_blocks(s)
        if blocks is not None:
            J = blocks[3][:, za]
        else:
            J = algebraic_jacobian(dae, s)
        dz = LUFactor(J).solve(-r)
        lam = 1.0
        for _ in range(max_halvings + 1):
            z_try = z.copy()
            z_try[za] += lam * dz
            s_try = State(t, y, z_try, dae.partition)
            r_try = dae.g_active(s_try)
            if np.all(np.isfinite(r_try)):
                n_try = np.max(np.abs(r_try))
                if n_try < rnorm or n_try <= tol:
                    break
            lam *= 0.5
        else:
            raise NewtonDivergence(f"no residual decrease after {max_halvings} halvings")
        z, s, r, rnorm = z_try, s_try, r_try, n_try
        it += 1
    return z


def consistent_init(dae, y0, z_guess, tol=NEWTON_TOL, t=0.0):
    """Complete ``y0`` with algebraic values satisfying ``|g|_inf <= tol``."""
    y = stack_pair(y0)
    p = dae.partition
    z_guess = stack_pair(z_guess) if p.nz else np.zeros(0)
    if z_guess.size == 1 and p.nz > 1:
        z_guess = np.full(p.nz, float(z_guess[0]))
    if y.size != p.ny or z_guess.size != p.nz:
        raise DimensionMismatch(f"initial values do not match {p}")
    try:
        z = solve_algebraic(dae, t, y, z_guess, tol)
    except SplittingError as exc:
        exc.t = t
        raise
    return State(t, y, z, p)


def reduce_to_ode(dae, y, z_hint, t=0.0, tol=NEWTON_TOL):
    """Evaluate the reduced ODE ``y' = f(y, phi(y))``.

    ``phi`` is never formed explicitly; the constraints are solved by Newton
    starting at ``z_hint``. Returns the stacked derivative ``(y1', y2')``.
    """
    y = stack_pair(y)
    z_hint = stack_pair(z_hint) if dae.partition.nz else np.zeros(0)
    z = solve_algebraic(dae, t, y, z_hint, tol)
    return dae.f(State(t, y, z, dae.partition))


def reduced_model(dae, z_hint=None, tol=NEWTON_TOL):
    """Pure-ODE model whose right-hand side is :func:`reduce_to_ode`.

    The last algebraic solution is reused as the next Newton start. When the
    DAE carries a Jacobian hook, the reduced Jacobian is the Schur complement
    ``fy - fz gz^-1 gy``.
    """
    p = dae.partition
    memo = {"z": np.zeros(p.nz) if z_hint is None else stack_pair(z_hint)}

    def solve(s):
        z = solve_algebraic(dae, s.t, s.y, memo["z"], tol)
        memo["z"] = z
        return State(s.t, s.y, z, p)

    def rhs(s):
        return dae.f(solve(s))

    jac = None
    if dae.jac is not None:
        def jac(s):
            full = solve(s)
            fy, fz, gy, gz = dae.jac(full)
            red = fy - fz @ LUFactor(gz).solve(gy) if p.nz else fy
            return red, np.zeros((p.ny, 0)), np.zeros((0, p.ny)), np.zeros((0, 0))

    ode_part = Partition(p.ny, 0, 0, 0)
    return CoupledDae(ode_part, rhs, None, None, None, CouplingFlags(False), jac,
                      dae.variable_names()[: p.ny], f"{dae.name}_reduced")


def ode_model(rhs, n, jac=None, names=None, name="ode"):
    """Wrap ``rhs(t, y) -> y'`` (and optional ``jac(t, y) -> dy'/dy``) as a model."""
    part = Partition(n, 0, 0, 0)

    def f1(s):
        return np.asarray(rhs(s.t, s.y), dtype=float)

    hook = None
    if jac is not None:
        def hook(s):
            return (np.asarray(jac(s.t, s.y), dtype=float), np.zeros((n, 0)),
                    np.zeros((0, n)), np.zeros((0, 0)))

    return CoupledDae(part, f1, None, None, None, CouplingFlags(False), hook, names, name)
