"""Implicit Euler and implicit midpoint steps for semi-explicit DAEs.

Both methods solve one coupled Newton system per step. For the midpoint
rule the algebraic unknowns are stage values at ``t + h/2``; a projection
solve afterwards puts the stored state back on ``g(y, z) = 0``.
"""
import enum
import math
from dataclasses import dataclass

import numpy as np

from .dae import State, Trajectory
from .errors import NewtonDivergence, SingularMatrix, SplittingError
from .linalg import LUFactor


class IntegratorKind(enum.Enum):
    IMPLICIT_EULER = "euler"
    IMPLICIT_MIDPOINT = "midpoint"

    @property
    def order(self):
        return 1 if self is IntegratorKind.IMPLICIT_EULER else 2

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        return cls(str(value).lower())


@dataclass(frozen=True)
class StepConfig:
    """Step size and Newton settings.

    ``substeps`` splits every integrator call into that many equal inner
    steps; the splitting drivers use it to emulate exact sub-flows.
    """

    h: float
    newton_tol: float = 1e-12
    newton_max_iter: int = 50
    substeps: int = 1
    fd_step: float = 1e-7

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError("h must be positive")
        if not self.newton_tol > 0:
            raise ValueError("newton_tol must be positive")
        if self.substeps < 1:
            raise ValueError("substeps must be >= 1")

    def with_h(self, h):
        return StepConfig(h, self.newton_tol, self.newton_max_iter, self.substeps, self.fd_step)


class SolverStats:
    """Mutable counters threaded through the steppers on request."""

    def __init__(self):
        self.steps = 0
        self.newton_iterations = 0

    def __repr__(self):
        return f"SolverStats(steps={self.steps}, newton_iterations={self.newton_iterations})"


def _inf_norm(r):
    # plain Python is faster than ufunc reductions at these sizes
    if r.size > 64:
        return float(np.abs(r).max())
    return max(map(abs, r.tolist()), default=0.0)


def fd_jacobian(residual, x, r0=None, fd_step=1e-7):
    """Central finite-difference Jacobian."""
    n = x.size
    cols = []
    for j in range(n):
        d = fd_step * (1.0 + abs(x[j]))
        xp = x.copy()
        xm = x.copy()
        xp[j] += d
        xm[j] -= d
        cols.append((np.asarray(residual(xp)) - np.asarray(residual(xm))) / (2.0 * d))
    if not cols:
        return np.zeros((0, 0))
    return np.column_stack(cols)


def newton_solve(residual, x0, cfg, jac=None, stats=None):
    """Undamped Newton iteration until ``|residual|_inf <= cfg.newton_tol``.

    Parameters
    ----------
    residual : callable
        ``x -> r`` on 1-D arrays.
    x0 : array_like
        Starting point.
    cfg : StepConfig
    jac : callable, optional
        ``x -> dr/dx`` as a matrix or an already factorized
        :class:`~daesplit.linalg.LUFactor`; central differences are used
        when omitted.

    Raises
    ------
    SingularMatrix
        If the Jacobian at the starting point is singular.
    NewtonDivergence
        On non-finite residuals, a singular Jacobian at a later iterate, or
        when ``cfg.newton_max_iter`` is exhausted.
    """
    x = np.array(x0, dtype=float).reshape(-1)
    r = np.asarray(residual(x), dtype=float)
    it = 0
    tol = cfg.newton_tol
    while True:
        rnorm = _inf_norm(r)
        if rnorm <= tol:
            if stats is not None:
                stats.newton_iterations += it
            return x
        if not math.isfinite(rnorm):
            raise NewtonDivergence(f"non-finite residual after {it} iterations")
        if it >= cfg.newton_max_iter:
            raise NewtonDivergence(
                f"no convergence in {cfg.newton_max_iter} iterations (|r|={rnorm:.3e})"
            )
        J = jac(x) if jac is not None else fd_jacobian(residual, x, r, cfg.fd_step)
        try:
            lu = J if isinstance(J, LUFactor) else LUFactor(J)
            dx = lu.solve(-r)
        except SingularMatrix as exc:
            if it == 0:
                raise
            raise NewtonDivergence(f"singular Jacobian at iteration {it}") from exc
        x = x + dx
        r = np.asarray(residual(x), dtype=float)
        it += 1


def _newton_jac(dae, key, build):
    """Wrap a Newton-matrix builder, caching its factorization for models
    whose Jacobian does not depend on the state."""
    if dae.jac is None:
        return None
    if not dae.jac_constant:
        return build
    cache = dae._factor_cache

    def cached(w):
        lu = cache.get(key)
        if lu is None:
            lu = cache[key] = LUFactor(build(w))
        return lu

    return cached


def _euler_step(dae, s, h, cfg, stats):
    ya, za = dae.y_active, dae.z_active
    na = len(ya)
    t1 = s.t + h
    y_base, z_base = s.y, s.z
    part = dae.partition

    def unpack(w):
        y1 = y_base.copy()
        y1[ya] = w[:na]
        z1 = z_base.copy()
        z1[za] = w[na:]
        return State._raw(t1, y1, z1, part)

    def residual(w):
        sp = unpack(w)
        return np.concatenate([w[:na] - y_base[ya] - h * dae.f_active(sp), dae.g_active(sp)])

    def build(w):
        fy, fz, gy, gz = dae.jacobian_blocks(unpack(w))
        return np.block([
            [np.eye(na) - h * fy[:, ya], -h * fz[:, za]],
            [gy[:, ya], gz[:, za]],
        ])

    jac = _newton_jac(dae, ("euler", h), build)

    w0 = np.concatenate([y_base[ya], z_base[za]])
    w = newton_solve(residual, w0, cfg, jac, stats)
    return unpack(w)


def _midpoint_step(dae, s, h, cfg, stats):
    ya, za = dae.y_active, dae.z_active
    na = len(ya)
    tm = s.t + 0.5 * h
    y_base, z_base = s.y, s.z
    part = dae.partition

    def split(w):
        y1 = y_base.copy()
        y1[ya] = w[:na]
        zm = z_base.copy()
        zm[za] = w[na:]
        return y1, State._raw(tm, 0.5 * (y_base + y1), zm, part)

    def residual(w):
        _, sm = split(w)
        return np.concatenate([w[:na] - y_base[ya] - h * dae.f_active(sm), dae.g_active(sm)])

    def build(w):
        fy, fz, gy, gz = dae.jacobian_blocks(split(w)[1])
        return np.block([
            [np.eye(na) - 0.5 * h * fy[:, ya], -h * fz[:, za]],
            [0.5 * gy[:, ya], gz[:, za]],
        ])

    jac = _newton_jac(dae, ("midpoint", h), build)

    w0 = np.concatenate([y_base[ya], z_base[za]])
    w = newton_solve(residual, w0, cfg, jac, stats)
    y1, sm = split(w)
    z1 = sm.z
    if len(za):
        z1 = _project(dae, s.t + h, y1, sm.z, cfg, stats)
    return State._raw(s.t + h, y1, z1, part)


def _project(dae, t, y, z_guess, cfg, stats):
    za = dae.z_active
    part = dae.partition

    def unpack(v):
        z = z_guess.copy()
        z[za] = v
        return State._raw(t, y, z, part)

    def residual(v):
        return dae.g_active(unpack(v))

    def build(v):
        return dae.jacobian_blocks(unpack(v))[3][:, za]

    jac = _newton_jac(dae, ("projection",), build)

    v = newton_solve(residual, z_guess[za], cfg, jac, stats)
    return unpack(v).z


def dae_step(dae, s, kind, cfg, stats=None, h=None):
    """Advance ``s`` by one step of size ``h`` (default ``cfg.h``).

    Frozen differential blocks are returned bitwise unchanged; frozen
    algebraic blocks are carried along without being solved for. With
    ``cfg.substeps > 1`` the step is made of that many equal inner steps.
    """
    kind = IntegratorKind.parse(kind)
    h = cfg.h if h is None else h
    if cfg.substeps > 1:
        hs = h / cfg.substeps
        inner = cfg.with_h(hs)
        t0 = s.t
        for i in range(cfg.substeps):
            s = _one_step(dae, s, kind, inner, hs, stats)
        return s.replace(t=t0 + h)
    return _one_step(dae, s, kind, cfg, h, stats)


def _one_step(dae, s, kind, cfg, h, stats):
    if stats is not None:
        stats.steps += 1
    if len(dae.y_active) == 0 and len(dae.z_active) == 0:
        return s.replace(t=s.t + h)
    if kind is IntegratorKind.IMPLICIT_EULER:
        return _euler_step(dae, s, h, cfg, stats)
    return _midpoint_step(dae, s, h, cfg, stats)


def uniform_steps(t0, t_end, h):
    """Number of steps of size ``h`` from ``t0`` to ``t_end``; grid must be uniform."""
    span = t_end - t0
    if span < 0:
        raise ValueError("t_end precedes the initial time")
    n_float = span / h
    n = int(round(n_float))
    if abs(n_float - n) > 1e-9 * max(1.0, n_float):
        raise ValueError(f"(t_end - t0)/h = {n_float!r} is not an integer")
    return n


def integrate(dae, s0, t_end, kind, cfg, stats=None, store=True):
    """Monolithic integration on the uniform grid ``s0.t + k*h``.

    With ``store=False`` only the first and last states are kept.
    """
    kind = IntegratorKind.parse(kind)
    n = uniform_steps(s0.t, t_end, cfg.h)
    t0 = s0.t
    times = [t0]
    states = [s0]
    s = s0
    for k in range(1, n + 1):
        try:
            s = dae_step(dae, s, kind, cfg, stats)
        except SplittingError as exc:
            exc.t = s.t
            raise
        tk = t_end if k == n else t0 + k * cfg.h
        s = State._raw(tk, s.y, s.z, s.partition)
        if store or k == n:
            times.append(tk)
            states.append(s)
    return Trajectory(np.array(times), states, names=dae.variable_names())


def ode_step(rhs, t, x, h, kind, cfg, jac=None, stats=None):
    """One implicit step for ``x' = rhs(t, x)`` on flat arrays.

    ``jac(t, x)`` is the Jacobian of ``rhs``; finite differences otherwise.
    Returns the new state vector.
    """
    kind = IntegratorKind.parse(kind)
    x = np.asarray(x, dtype=float)
    n = x.size
    if stats is not None:
        stats.steps += 1
    if kind is IntegratorKind.IMPLICIT_EULER:
        t1 = t + h

        def residual(w):
            return w - x - h * rhs(t1, w)

        njac = None if jac is None else (lambda w: np.eye(n) - h * jac(t1, w))
    else:
        tm = t + 0.5 * h

        def residual(w):
            return w - x - h * rhs(tm, 0.5 * (x + w))

        njac = None if jac is None else (lambda w: np.eye(n) - 0.5 * h * jac(tm, 0.5 * (x + w)))
    return newton_solve(residual, x, cfg, njac, stats)
