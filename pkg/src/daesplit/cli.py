"""Command line interface.

Exit codes: 0 success, 1 domain failure (solver divergence, structure
violation, failed audit), 2 usage or file-format error.
"""
import argparse
import csv
import sys
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional

import numpy as np

from . import harness
from .dae import Partition, State, Trajectory, lift_constraint_model
from .errors import (DimensionMismatch, FileFormat, GridMismatch, SplittingError, StillSingular,
                     StructureViolation)
from .integrators import IntegratorKind, SolverStats, StepConfig, integrate
from .models import (CircuitParams, lc_oscillator, load_coupled, load_phs, phs_circuit_example,
                     scalar_decay, synthetic_phs_dae, _read_json)
from .phs import (PhsDae, RegularizedPhs, direct_integrate, dissipativity_check, explicit_form,
                  hamiltonian, phs_integrate, regularize, validate_structure)
from .splitting import doubled_split, splitting_integrate

BUILTINS = ("lc_oscillator", "decay", "synthetic", "phs_circuit")
DEFAULT_EPSILONS = (1e-2, 1e-3, 1e-4, 1e-5)


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    model: Optional[str] = None
    scheme: str = "strang"
    integrator: str = "midpoint"
    h: Optional[float] = None
    h_ref: Optional[float] = None
    T: float = 1.0
    epsilon: Optional[float] = None
    hs: Optional[list] = None
    epsilons: Optional[list] = None
    out: Optional[str] = None
    seed: int = 42
    n_dyn: int = 3
    n_alg: int = 1
    matrices: Optional[str] = None
    replay: Optional[str] = None

    def validate(self):
        if self.scheme not in ("lie", "strang", "monolithic"):
            raise UsageError(f"unknown scheme {self.scheme!r}")
        if self.integrator not in ("euler", "midpoint"):
            raise UsageError(f"unknown integrator {self.integrator!r}")
        if self.h is not None and not self.h > 0:
            raise UsageError("h must be positive")
        if not self.T > 0:
            raise UsageError("T must be positive")
        if self.epsilon is not None and not self.epsilon > 0:
            raise UsageError("epsilon must be positive")
        if self.model is None:
            raise UsageError("no model given (--model)")
        return self


def _float_list(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of numbers: {text!r}") from exc


def build_config(args):
    cfg = RunConfig()
    if getattr(args, "config", None):
        data = _read_json(args.config)
        known = {f.name for f in fields(RunConfig)}
        unknown = set(data) - known
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        for key, val in data.items():
            setattr(cfg, key, val)
    for f in fields(RunConfig):
        val = getattr(args, f.name, None)
        if val is not None:
            setattr(cfg, f.name, val)
    return cfg.validate()


def resolve_model(cfg):
    name = cfg.model
    if name == "lc_oscillator":
        return lc_oscillator()
    if name == "decay":
        return scalar_decay()
    if name == "synthetic":
        return synthetic_phs_dae(cfg.n_dyn, cfg.n_alg, cfg.seed)
    if name == "phs_circuit":
        return phs_circuit_example(CircuitParams(), cfg.matrices)
    path = Path(name)
    if not path.exists():
        raise UsageError(f"model {name!r} is neither a built-in ({', '.join(BUILTINS)}) nor a file")
    kind = _read_json(path).get("kind", "phs")
    if kind == "coupled_linear":
        return load_coupled(path)
    return load_phs(path)


def _is_phs(model):
    return isinstance(model, (PhsDae, RegularizedPhs))


def _phs_for_splitting(model, epsilon):
    if epsilon is not None:
        return regularize(model, epsilon)
    try:
        return explicit_form(model)
    except StillSingular as exc:
        raise UsageError("E is singular; pass --epsilon to regularize") from exc


def _fmt_row(values):
    return [harness.fmt(float(v)) for v in values]


def _write_state_csv(path, traj, header_names, extra=None, extra_names=()):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", *header_names, *extra_names])
        for i, (t, s) in enumerate(zip(traj.times, traj.states)):
            row = [t, *s.y, *s.z]
            if extra is not None:
                row.extend(extra[i])
            w.writerow(_fmt_row(row))


# -- commands ------------------------------------------------------------------------------

def cmd_validate(args):
    path = args.model_path
    data = _read_json(path)
    kind = data.get("kind", "phs")
    if kind == "coupled_linear":
        from .dae import check_index1
        model = load_coupled(path)
        s = model.state(0.0, np.zeros(model.partition.ny))
        res = check_index1(model, s)
        mark = "PASS" if res.regular else "FAIL"
        print(f"{mark}  index-1 algebraic Jacobian     condition={res.condition_estimate:.3e}")
        return 0 if res.regular else 1
    model = load_phs(path, validate=False)
    report = validate_structure(model)
    print(report)
    if report.ok:
        print("all structural checks passed")
        return 0
    print("structure violation: " + ", ".join(c.name for c in report.failures()))
    return 1


def cmd_integrate(args):
    cfg = build_config(args)
    if cfg.h is None:
        raise UsageError("--h is required")
    model = resolve_model(cfg)
    kind = IntegratorKind.parse(cfg.integrator)
    step = StepConfig(cfg.h)
    stats = SolverStats()
    if _is_phs(model):
        if cfg.scheme == "monolithic" and cfg.epsilon is None:
            try:
                target = explicit_form(model)
            except StillSingular:
                target = None
            if target is None:
                traj = direct_integrate(model, harness.default_initial_state(model), cfg.T, cfg.h, kind)
                energy_model = model
            else:
                traj, _ = phs_integrate(target, harness.default_initial_state(model), cfg.T,
                                        "monolithic", kind, step, stats=stats)
                energy_model = target
        else:
            target = _phs_for_splitting(model, cfg.epsilon)
            traj, _ = phs_integrate(target, harness.default_initial_state(model), cfg.T,
                                    cfg.scheme, kind, step, stats=stats)
            energy_model = target
        H = [hamiltonian(energy_model, s.y) for s in traj.states]
        extra = [[h, *y] for h, y in zip(H, traj.outputs)]
        names = [f"x{i}" for i in range(model.n)]
        if cfg.out:
            _write_state_csv(cfg.out, traj, names, extra, ["H", *(f"y{i}" for i in range(model.m))])
        print(f"steps: {len(traj) - 1}")
        print(f"newton iterations: {stats.newton_iterations}")
        print(f"final H: {H[-1]:.17g}")
        return 0
    dae = lift_constraint_model(model)
    s0 = harness.default_initial_state(dae)
    if cfg.scheme == "monolithic":
        traj = integrate(dae, s0, cfg.T, kind, step, stats)
    else:
        traj = splitting_integrate(doubled_split(dae), s0, cfg.T, cfg.scheme, kind, step, stats)
    if cfg.out:
        _write_state_csv(cfg.out, traj, dae.variable_names())
    final = traj.final
    print(f"steps: {len(traj) - 1}")
    print(f"newton iterations: {stats.newton_iterations}")
    print("final state: " + " ".join(
        f"{n}={v:.10g}" for n, v in zip(dae.variable_names(), [*final.y, *final.z])))
    return 0


def cmd_convergence(args):
    cfg = build_config(args)
    if not cfg.hs:
        raise UsageError("--hs is required (comma-separated step sizes)")
    if cfg.scheme == "monolithic":
        raise UsageError("convergence studies need --scheme lie or strang")
    model = resolve_model(cfg)
    h_ref = cfg.h_ref if cfg.h_ref is not None else min(cfg.hs) / 64
    report = harness.run_convergence(model, cfg.scheme, cfg.integrator, cfg.hs, h_ref, cfg.T,
                                     epsilon=cfg.epsilon, out=cfg.out)
    print(report.table())
    return 0


def cmd_eps_study(args):
    cfg = build_config(args)
    eps = cfg.epsilons if cfg.epsilons is not None else list(DEFAULT_EPSILONS)
    if len(eps) == 0:
        raise UsageError("epsilon grid is empty")
    model = resolve_model(cfg)
    if not _is_phs(model):
        raise UsageError("epsilon study requires a PHS model")
    h = cfg.h if cfg.h is not None else 1e-3
    kind = args.integrator or "euler"
    report = harness.run_eps_study(model, eps, h, cfg.T, kind=kind, out=cfg.out)
    print(report.table())
    return 0 if report.monotone else 1


def _read_trajectory_csv(path, n):
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], rows[1:]
        data = np.array([[float(v) for v in r] for r in body])
    except (OSError, IndexError, ValueError) as exc:
        raise FileFormat(f"{path}: cannot read trajectory CSV ({exc})") from exc
    if header[0] != "t" or data.ndim != 2 or data.shape[1] < n + 1:
        raise FileFormat(f"{path}: expected columns t,x0..x{n - 1}")
    return data[:, 0], data[:, 1:n + 1]


def cmd_energy(args):
    cfg = build_config(args)
    model = resolve_model(cfg)
    if not _is_phs(model):
        raise UsageError("energy audit requires a PHS model")
    target = _phs_for_splitting(model, cfg.epsilon)
    if cfg.replay:
        times, xs = _read_trajectory_csv(cfg.replay, model.n)
        part = Partition(model.n, 0, 0, 0)
        states = [State(t, x, np.zeros(0), part) for t, x in zip(times, xs)]
        outputs = np.array([target.B.T @ (target.Q @ x) for x in xs])
        traj = Trajectory(times, states, outputs=outputs)
    else:
        if cfg.h is None:
            raise UsageError("--h is required")
        scheme = "strang" if cfg.scheme is None else cfg.scheme
        traj, _ = phs_integrate(target, harness.default_initial_state(model), cfg.T, scheme,
                                cfg.integrator, StepConfig(cfg.h))
    result = dissipativity_check(target, traj)
    if cfg.out:
        harness.write_energy_csv(cfg.out, result.audits)
    print(f"intervals: {len(result.audits)}")
    print(f"min slack: {result.min_slack:.3e}")
    print(f"verdict: {'PASS' if result.passed else 'FAIL'}")
    return 0 if result.passed else 1


# -- parser --------------------------------------------------------------------------------

def _add_run_flags(p, hs=False, epsilons=False):
    p.add_argument("--config", help="JSON file with RunConfig fields; flags override it")
    p.add_argument("--model", help=f"built-in ({', '.join(BUILTINS)}) or model JSON file")
    p.add_argument("--scheme", choices=("lie", "strang", "monolithic"))
    p.add_argument("--integrator", choices=("euler", "midpoint"))
    p.add_argument("--h", type=float)
    p.add_argument("--h-ref", dest="h_ref", type=float)
    p.add_argument("--T", type=float)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--out")
    p.add_argument("--seed", type=int)
    p.add_argument("--n-dyn", dest="n_dyn", type=int)
    p.add_argument("--n-alg", dest="n_alg", type=int)
    p.add_argument("--matrices", help="J/R/B file for the phs_circuit model")
    if hs:
        p.add_argument("--hs", type=_float_list, help="comma-separated step sizes")
    if epsilons:
        p.add_argument("--epsilons", type=_float_list, help="comma-separated eps values")


def build_parser():
    parser = argparse.ArgumentParser(prog="daesplit", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check the structure of a model file")
    p.add_argument("model_path")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("integrate", help="integrate a model and write a trajectory CSV")
    _add_run_flags(p)
    p.set_defaults(func=cmd_integrate)

    p = sub.add_parser("convergence", help="order study against a fine reference")
    _add_run_flags(p, hs=True)
    p.set_defaults(func=cmd_convergence)

    p = sub.add_parser("eps-study", help="eps-regularized vs direct DAE solution")
    _add_run_flags(p, epsilons=True)
    p.set_defaults(func=cmd_eps_study)

    p = sub.add_parser("energy", help="dissipativity audit of a PHS run")
    _add_run_flags(p)
    p.add_argument("--replay", help="audit an existing trajectory CSV instead of integrating")
    p.set_defaults(func=cmd_energy)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except FileFormat as exc:
        print(f"file format error: {exc}", file=sys.stderr)
        return 2
    except StructureViolation as exc:
        print(f"structure violation: {exc}", file=sys.stderr)
        return 1
    except SplittingError as exc:
        if isinstance(exc, (DimensionMismatch, GridMismatch)):
            print(f"usage error: {exc}", file=sys.stderr)
            return 2
        where = f" at t={exc.t:.17g}" if getattr(exc, "t", None) is not None else ""
        print(f"solver failure{where}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
