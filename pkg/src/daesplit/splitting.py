"""Subsystem decompositions and Lie-Trotter / Strang drivers.

The doubled decomposition keeps every algebraic constraint in both
subsystems::

    (f1, 2 g1, f2, 2 g2) = (f1, g1, 0, g2) + (0, g1, f2, g2)

so each subsystem is again an index-1 DAE that re-solves all constraints,
while only its own differential block moves.
"""
import enum
from dataclasses import dataclass

import numpy as np

from .dae import CoupledDae, State, Trajectory, lift_constraint_model
from .errors import CouplingViolation, SplittingError
from .integrators import IntegratorKind, dae_step, uniform_steps


class SplitKind(enum.Enum):
    DOUBLED = "doubled"
    DIFFERENTIAL_COUPLING = "differential"
    LAGRANGIAN = "lagrangian"


class SchemeKind(enum.Enum):
    LIE_TROTTER = "lie"
    STRANG = "strang"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        return cls(str(value).lower())


@dataclass(frozen=True, eq=False)
class SplitPair:
    sub1: CoupledDae
    sub2: CoupledDae
    kind: SplitKind
    parent: CoupledDae

    def rhs_sum(self, s):
        return self.sub1.rhs(s) + self.sub2.rhs(s)


def doubled_split(dae):
    """``sub1 = (f1, g1, 0, g2)``, ``sub2 = (0, g1, f2, g2)``."""
    dae = lift_constraint_model(dae)
    sub1 = dae.with_blocks(f2=None, name=f"{dae.name}/sub1")
    sub2 = dae.with_blocks(f1=None, name=f"{dae.name}/sub2")
    return SplitPair(sub1, sub2, SplitKind.DOUBLED, dae)


def lagrangian_split(m):
    """Doubled split of the lifted model; ``k`` and ``u_c`` live in both halves."""
    dae = lift_constraint_model(m)
    pair = doubled_split(dae)
    return SplitPair(pair.sub1, pair.sub2, SplitKind.LAGRANGIAN, dae)


def cross_algebraic_sensitivity(dae, s, fd_step=1e-6):
    """Max finite-difference sensitivity of (f1, g1) to z2 and (f2, g2) to z1."""
    p = dae.partition
    worst = 0.0
    pairs = (
        (range(p.nz1, p.nz), (dae.f1, dae.g1)),
        (range(p.nz1), (dae.f2, dae.g2)),
    )
    for z_idx, funcs in pairs:
        for j in z_idx:
            d = fd_step * (1.0 + abs(s.z[j]))
            zp, zm = s.z.copy(), s.z.copy()
            zp[j] += d
            zm[j] -= d
            sp, sm = s.replace(z=zp), s.replace(z=zm)
            for fn in funcs:
                if fn is None:
                    continue
                diff = (np.asarray(fn(sp)) - np.asarray(fn(sm))) / (2.0 * d)
                if diff.size:
                    worst = max(worst, float(np.max(np.abs(diff))))
    return worst


def differential_coupling_split(dae, state=None, tol=1e-8):
    """Split without doubling when subsystems couple only through ``y``.

    ``sub1`` carries ``(f1, g1)`` and freezes ``y2, z2``; ``sub2`` carries
    ``(f2, g2)`` and freezes ``y1, z1``. The decoupling claimed by
    ``dae.coupling_flags`` is checked by finite differences at ``state``
    (the zero state at ``t = 0`` when omitted).
    """
    if dae.coupling_flags.cross_algebraic:
        raise CouplingViolation("model flags allow cross-subsystem algebraic coupling")
    if state is None:
        state = dae.state(0.0, np.zeros(dae.partition.ny))
    worst = cross_algebraic_sensitivity(dae, state)
    if worst > tol:
        raise CouplingViolation(
            f"cross-subsystem algebraic sensitivity {worst:.3e} exceeds {tol:g}"
        )
    sub1 = dae.with_blocks(f2=None, g2=None, name=f"{dae.name}/sub1")
    sub2 = dae.with_blocks(f1=None, g1=None, name=f"{dae.name}/sub2")
    return SplitPair(sub1, sub2, SplitKind.DIFFERENTIAL_COUPLING, dae)


def compose(flow1, flow2, scheme, x, t, h):
    """Compose two sub-flows ``flow(x, t, h) -> x`` over one macro step.

    Lie-Trotter runs ``flow1`` then ``flow2`` on ``[t, t+h]``. Strang runs
    ``flow1`` on ``[t, t+h/2]``, ``flow2`` on ``[t, t+h]``, then ``flow1``
    on ``[t+h/2, t+h]``.
    """
    scheme = SchemeKind.parse(scheme)
    if scheme is SchemeKind.LIE_TROTTER:
        return flow2(flow1(x, t, h), t, h)
    half = 0.5 * h
    x = flow1(x, t, half)
    x = flow2(x, t, h)
    return flow1(x, t + half, half)


def splitting_step(pair, s, scheme, kind, cfg, stats=None):
    """One macro step of size ``cfg.h``; each substep is one implicit step
    (or ``cfg.substeps`` inner steps)."""
    kind = IntegratorKind.parse(kind)
    t0 = s.t

    def flow(sub):
        def run(state, t, h):
            return dae_step(sub, State._raw(t, state.y, state.z, state.partition),
                            kind, cfg, stats, h=h)
        return run

    out = compose(flow(pair.sub1), flow(pair.sub2), scheme, s, t0, cfg.h)
    return State._raw(t0 + cfg.h, out.y, out.z, out.partition)


def splitting_integrate(pair, s0, t_end, scheme, kind, cfg, stats=None, store=True):
    scheme = SchemeKind.parse(scheme)
    kind = IntegratorKind.parse(kind)
    n = uniform_steps(s0.t, t_end, cfg.h)
    t0 = s0.t
    times, states = [t0], [s0]
    s = s0
    for k in range(1, n + 1):
        try:
            s = splitting_step(pair, s, scheme, kind, cfg, stats)
        except SplittingError as exc:
            exc.t = s.t
            raise
        tk = t_end if k == n else t0 + k * cfg.h
        s = State._raw(tk, s.y, s.z, s.partition)
        if store or k == n:
            times.append(tk)
            states.append(s)
    return Trajectory(np.array(times), states, names=pair.parent.variable_names())
