"""Reference solutions, error measurement, order fits and the eps-study."""
import csv
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .dae import consistent_init, lift_constraint_model
from .errors import DegenerateData, GridMismatch, ReferenceNotConverged, SplittingError
from .integrators import IntegratorKind, StepConfig, integrate
from .phs import (PhsDae, RegularizedPhs, consistent_state, direct_integrate, perturbed_energy_bound,
                  phs_integrate, regularize)
from .splitting import SchemeKind, differential_coupling_split, doubled_split, splitting_integrate


def fmt(x):
    return f"{x:.17g}"


def _is_phs(model):
    return isinstance(model, (PhsDae, RegularizedPhs))


def default_initial_state(model, epsilon=None):
    """Consistent start used when the caller gives none.

    Coupled DAEs: ``y0`` from the model (``model.y0``) or ``(1, 0, ..., 0)``
    with algebraic values solved for. PHS: all ones, algebraic part solved.
    """
    if _is_phs(model):
        return consistent_state(model, np.ones(model.n))
    dae = lift_constraint_model(model)
    p = dae.partition
    y0 = getattr(dae, "y0", None)
    if y0 is None:
        y0 = np.zeros(p.ny)
        y0[0] = 1.0
    z0 = getattr(dae, "z0", None)
    if z0 is None:
        z0 = np.zeros(p.nz)
    return consistent_init(dae, y0, z0)


def reference_solution(model, T, h_ref, initial=None, kind=IntegratorKind.IMPLICIT_MIDPOINT,
                       epsilon=None, store=True, newton_tol=1e-12):
    """Monolithic (unsplit) solution on ``[t0, T]`` with step ``h_ref``.

    Coupled DAEs are integrated with :func:`~daesplit.integrators.dae_step`.
    PHS models use the regularized ODE when ``epsilon`` is given and the
    direct DAE scheme otherwise.
    """
    kind = IntegratorKind.parse(kind)
    if _is_phs(model):
        x0 = default_initial_state(model) if initial is None else np.asarray(initial, float)
        if epsilon is None and isinstance(model, PhsDae):
            return direct_integrate(model, x0, T, h_ref, kind)
        reg = model if isinstance(model, RegularizedPhs) else regularize(model, epsilon)
        traj, _ = phs_integrate(reg, x0, T, "monolithic", kind, StepConfig(h_ref, newton_tol))
        return traj
    dae = lift_constraint_model(model)
    s0 = default_initial_state(dae) if initial is None else initial
    return integrate(dae, s0, T, kind, StepConfig(h_ref, newton_tol), store=store)


@dataclass(frozen=True)
class FinalErrors:
    differential: np.ndarray
    algebraic: np.ndarray

    @property
    def all(self):
        return np.concatenate([self.differential, self.algebraic])


def error_at_final(traj, ref):
    """Absolute per-component differences of the final states."""
    t1, t2 = traj.times[-1], ref.times[-1]
    if abs(t1 - t2) > 1e-12 * max(1.0, abs(t2)):
        raise GridMismatch(f"final times differ: {t1!r} vs {t2!r}")
    a, b = traj.final, ref.final
    return FinalErrors(np.abs(a.y - b.y), np.abs(a.z - b.z))


def observed_order(errors, hs):
    """Least-squares slope of ``log(error)`` against ``log(h)``.

    ``errors`` may be 1-D (one variable) or 2-D with one column per
    variable; the result has the matching shape.
    """
    hs = np.asarray(hs, dtype=float)
    errs = np.asarray(errors, dtype=float)
    if hs.size < 2:
        raise DegenerateData("need at least two step sizes")
    one_d = errs.ndim == 1
    if one_d:
        errs = errs[:, None]
    if errs.shape[0] != hs.size:
        raise DegenerateData("one error row per step size required")
    if not np.all(np.isfinite(errs)) or np.any(errs <= 0) or np.any(hs <= 0):
        raise DegenerateData("errors and step sizes must be finite and positive")
    x = np.log(hs)
    xc = x - x.mean()
    Y = np.log(errs)
    slopes = (xc @ (Y - Y.mean(axis=0))) / (xc @ xc)
    return float(slopes[0]) if one_d else slopes


@dataclass
class ConvergenceReport:
    step_sizes: np.ndarray
    errors: np.ndarray
    variable_names: tuple
    n_differential: int
    observed_orders: Optional[np.ndarray]
    scheme: str
    integrator: str
    model: str
    reference_change: float = math.nan
    failures: dict = field(default_factory=dict)
    trajectories: dict = field(default_factory=dict, repr=False)

    @property
    def order_defined(self):
        return self.observed_orders is not None

    @property
    def differential_orders(self):
        return None if self.observed_orders is None else self.observed_orders[: self.n_differential]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["h"] + [f"var_{i}" for i in range(len(self.variable_names))])
            for h, row in zip(self.step_sizes, self.errors):
                w.writerow([fmt(h)] + [fmt(e) for e in row])
            if self.observed_orders is not None:
                w.writerow(["order"] + [fmt(o) for o in self.observed_orders])

    def table(self):
        names = self.variable_names
        lines = [f"{self.model}: {self.scheme} + {self.integrator}"]
        lines.append("h".ljust(12) + "".join(n.rjust(12) for n in names))
        for h, row in zip(self.step_sizes, self.errors):
            lines.append(f"{h:<12.4g}" + "".join(f"{e:12.3e}" for e in row))
        if self.observed_orders is not None:
            lines.append("order".ljust(12) + "".join(f"{o:12.3f}" for o in self.observed_orders))
        else:
            lines.append("order".ljust(12) + "undefined (need two step sizes with nonzero errors)")
        for h, msg in self.failures.items():
            lines.append(f"failed at h={h:g}: {msg}")
        return "\n".join(lines)


def _fit_orders(hs, errors):
    ok = np.all(np.isfinite(errors), axis=1)
    if ok.sum() < 2:
        return None
    orders = np.full(errors.shape[1], math.nan)
    for j in range(errors.shape[1]):
        col = errors[ok, j]
        if np.all(col > 0):
            orders[j] = observed_order(col, hs[ok])
    return orders


def _split_pair(model, split):
    if split == "differential":
        return differential_coupling_split(lift_constraint_model(model))
    return doubled_split(model)


def run_convergence(model, scheme, integrator, hs, h_ref, T, initial=None, split="doubled",
                    epsilon=None, out=None, check_reference=True, newton_tol=1e-12,
                    keep_trajectories=False, references=None):
    """Sweep step sizes, measure final-time errors against a fine reference.

    The reference is computed once at ``h_ref``. With ``check_reference`` a
    second reference at ``2*h_ref`` is computed and its change must stay
    below 1% of the coarsest splitting error, otherwise
    :class:`ReferenceNotConverged` is raised. A failing step size is
    recorded in ``failures`` and its error row is NaN.

    ``references`` may carry precomputed ``(ref, ref_coarse)`` trajectories
    at ``h_ref`` and ``2*h_ref`` so several sweeps can share them.
    """
    scheme = SchemeKind.parse(scheme)
    kind = IntegratorKind.parse(integrator)
    hs = np.asarray(sorted(hs, reverse=True), dtype=float)
    if hs.size < 1:
        raise ValueError("need at least one step size")
    phs = _is_phs(model)
    if phs:
        if epsilon is None and isinstance(model, PhsDae):
            raise ValueError("splitting a PHS requires epsilon")
        reg = model if isinstance(model, RegularizedPhs) else regularize(model, epsilon)
        x0 = default_initial_state(model) if initial is None else np.asarray(initial, float)
        names = tuple(f"x{i}" for i in range(reg.n))
        n_diff = reg.n
        ref = references[0] if references else reference_solution(reg, T, h_ref, x0, kind,
                                                                   newton_tol=newton_tol)
        ref_final = ref.final
        model_name = reg.name
    else:
        dae = lift_constraint_model(model)
        s0 = default_initial_state(dae) if initial is None else initial
        names = dae.variable_names()
        n_diff = dae.partition.ny
        ref = references[0] if references else reference_solution(dae, T, h_ref, s0, kind, store=False,
                                                                   newton_tol=newton_tol)
        ref_final = ref.final
        pair = _split_pair(dae, split)
        model_name = dae.name

    errors = np.full((hs.size, len(names)), math.nan)
    failures, trajs = {}, {}
    for i, h in enumerate(hs):
        cfg = StepConfig(float(h), newton_tol)
        try:
            if phs:
                traj, _ = phs_integrate(reg, x0, T, scheme, kind, cfg)
            else:
                traj = splitting_integrate(pair, s0, T, scheme, kind, cfg, store=keep_trajectories)
        except SplittingError as exc:
            failures[float(h)] = f"{type(exc).__name__}: {exc}"
            continue
        errors[i] = error_at_final(traj, ref).all
        if keep_trajectories:
            trajs[float(h)] = traj

    ref_change = math.nan
    if check_reference and np.any(np.isfinite(errors[:, :n_diff])):
        if references:
            ref2 = references[1]
        elif phs:
            ref2 = reference_solution(reg, T, 2 * h_ref, x0, kind, newton_tol=newton_tol)
        else:
            ref2 = reference_solution(dae, T, 2 * h_ref, s0, kind, store=False, newton_tol=newton_tol)
        ref_change = float(np.max(np.abs(ref2.final.y - ref_final.y)))
        finite_rows = np.flatnonzero(np.all(np.isfinite(errors[:, :n_diff]), axis=1))
        coarsest = float(np.max(errors[finite_rows[0], :n_diff]))
        if ref_change >= 0.01 * coarsest:
            raise ReferenceNotConverged(
                f"reference moves by {ref_change:.3e} between h_ref and 2*h_ref, "
                f"not below 1% of the coarsest error {coarsest:.3e}"
            )

    report = ConvergenceReport(hs, errors, names, n_diff, _fit_orders(hs, errors), scheme.value,
                               kind.value, model_name, ref_change, failures, trajs)
    if out is not None:
        report.to_csv(out)
    return report


@dataclass
class EpsStudyReport:
    epsilons: np.ndarray
    deviations: np.ndarray
    monotone: bool
    eps_terms: np.ndarray
    eps_term_slope: float = math.nan
    bound_rows: dict = field(default_factory=dict, repr=False)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epsilon", "deviation"])
            for e, d in zip(self.epsilons, self.deviations):
                w.writerow([fmt(e), fmt(d)])

    def table(self):
        lines = [f"{'epsilon':>12} {'deviation':>14} {'max eps-term':>14}"]
        for e, d, t in zip(self.epsilons, self.deviations, self.eps_terms):
            lines.append(f"{e:12.3g} {d:14.6e} {t:14.6e}")
        lines.append(f"monotone: {self.monotone}")
        if np.isfinite(self.eps_term_slope):
            lines.append(f"eps-term log-log slope: {self.eps_term_slope:.3f}")
        return "\n".join(lines)


def run_eps_study(phs_model, epsilons, h, T, x0=None, kind=IntegratorKind.IMPLICIT_EULER, out=None,
                  newton_tol=1e-12):
    """Compare eps-regularized solutions against the direct DAE solution.

    Both are computed with the same monolithic scheme and step ``h``. For
    every eps the per-step eps-term of the perturbed energy bound is
    evaluated along the regularized trajectory; its maximum is reported and
    fitted against eps on a log-log scale.
    """
    kind = IntegratorKind.parse(kind)
    eps = np.asarray(sorted((float(e) for e in epsilons), reverse=True))
    if eps.size < 1:
        raise ValueError("need at least one epsilon")
    if np.any(eps <= 0):
        raise ValueError("epsilons must be positive")
    x0 = default_initial_state(phs_model) if x0 is None else np.asarray(x0, float)
    direct = direct_integrate(phs_model, x0, T, h, kind)
    devs, terms, rows = [], [], {}
    for e in eps:
        reg = regularize(phs_model, e)
        traj, _ = phs_integrate(reg, x0, T, "monolithic", kind, StepConfig(h, newton_tol))
        devs.append(float(np.max(np.abs(traj.final.y - direct.final.y))))
        bound = perturbed_energy_bound(reg, traj)
        rows[float(e)] = bound
        terms.append(max((r.eps_term for r in bound), default=0.0))
    devs = np.array(devs)
    terms = np.array(terms)
    monotone = bool(np.all(np.diff(devs) < 0))
    slope = math.nan
    if eps.size >= 2 and np.all(terms > 0):
        slope = observed_order(terms, eps)
    report = EpsStudyReport(eps, devs, monotone, terms, slope, rows)
    if out is not None:
        report.to_csv(out)
    return report


def write_energy_csv(path, audits):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "H", "supplied", "slack", "eps_term"])
        for a in audits:
            w.writerow([fmt(a.t), fmt(a.H_start), fmt(a.supplied), fmt(a.slack), fmt(a.eps_term)])
