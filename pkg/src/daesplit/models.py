"""Built-in models, a synthetic PHS generator and JSON model files."""
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dae import CouplingFlags, CoupledDae, CoupledDaeWithConstraint, Partition, ode_model
from .errors import DimensionMismatch, FileFormat, StructureViolation
from .phs import PhsDae, validate_structure


# -- coupled LC oscillator -----------------------------------------------------------

@dataclass(frozen=True)
class LcParams:
    R1: float = 1.0
    R2: float = 1.0
    C1: float = 1.0
    C2: float = 1.0
    L1: float = 1.0
    L2: float = 1.0

    def __post_init__(self):
        for name, val in vars(self).items():
            if not val > 0:
                raise ValueError(f"{name} must be positive, got {val!r}")


LC_NAMES = ("u1", "jL1", "jL2", "u4", "u2", "u3", "jco")
LC_DEFAULT_Y0 = (1.0, 0.0, 0.0, 0.0)


def lc_oscillator(params=None):
    """Two LC subcircuits joined by a coupling current ``jco``.

    Subsystem 1 has ``y1 = (u1, jL1)``, ``z1 = (u2,)``; subsystem 2 has
    ``y2 = (jL2, u4)``, ``z2 = (u3,)``; the coupling equation
    ``u2 - u3 = 0`` is enforced by the multiplier ``jco``.
    """
    p = params or LcParams()
    R1, R2, C1, C2, L1, L2 = p.R1, p.R2, p.C1, p.C2, p.L1, p.L2
    part = Partition(2, 2, 1, 1)

    a1, a2 = 1.0 / (R1 * C1), 1.0 / (R2 * C2)

    def f1(s):
        u1 = s.y[0]
        u2 = s.z[0]
        return np.array([(u2 - u1) * a1, u2 / L1])

    def g1(s, uc):
        u1, jL1 = s.y[0], s.y[1]
        u2 = s.z[0]
        return np.array([(u2 - u1) / R1 + jL1 + uc[0]])

    def f2(s):
        u4 = s.y[3]
        u3 = s.z[1]
        return np.array([u3 / L2, -(u4 - u3) * a2])

    def g2(s, uc):
        jL2, u4 = s.y[2], s.y[3]
        u3 = s.z[1]
        return np.array([-(u4 - u3) / R2 + jL2 - uc[0]])

    def k(s, uc):
        return np.array([s.z[0] - s.z[1]])

    # (u1, jL1, jL2, u4) and (u2, u3, jco)
    fy = np.array([
        [-1 / (R1 * C1), 0, 0, 0],
        [0, 0, 0, 0],
        [0, 0, 0, 0],
        [0, 0, 0, -1 / (R2 * C2)],
    ])
    fz = np.array([
        [1 / (R1 * C1), 0, 0],
        [1 / L1, 0, 0],
        [0, 1 / L2, 0],
        [0, 1 / (R2 * C2), 0],
    ])
    gy = np.array([
        [-1 / R1, 1, 0, 0],
        [0, 0, 1, -1 / R2],
        [0, 0, 0, 0],
    ])
    gz = np.array([
        [1 / R1, 0, 1],
        [0, 1 / R2, -1],
        [1, -1, 0],
    ])
    for M in (fy, fz, gy, gz):
        M.setflags(write=False)

    def jac(s):
        return fy, fz, gy, gz

    return CoupledDaeWithConstraint(part, 1, f1, g1, f2, g2, k, jac, LC_NAMES, "lc_oscillator",
                                    jac_constant=True)


def lc_initial_state(dae, y0=LC_DEFAULT_Y0, t=0.0):
    """Consistent initial state of the lifted LC model (linear constraint solve)."""
    from .dae import consistent_init
    return consistent_init(dae, np.asarray(y0, float), np.zeros(dae.partition.nz), t=t)


def scalar_decay(rate=1.0):
    """``y' = -rate * y``."""
    model = ode_model(lambda t, y: -rate * y, 1, jac=lambda t, y: np.array([[-rate]]),
                      names=("y",), name="decay")
    return model.with_blocks(jac_constant=True)


# -- input signals --------------------------------------------------------------------

@dataclass(frozen=True)
class InputSignal:
    """Port input ``u(t)`` described by a JSON-friendly descriptor.

    Supported types: ``zero``; ``sine_product`` with
    ``amplitude * sin(2 pi f1 t) * sin(2 pi f2 t)``; ``samples`` with
    linear interpolation of a table.
    """

    kind: str = "zero"
    m: int = 1
    f1: float = 50.0
    f2: float = 500.0
    amplitude: float = 1.0
    times: tuple = ()
    values: tuple = ()

    def __post_init__(self):
        if self.kind not in ("zero", "sine_product", "samples"):
            raise ValueError(f"unknown input type {self.kind!r}")
        if self.kind == "sine_product" and not (self.f1 > 0 and self.f2 > 0):
            raise ValueError("sine_product frequencies must be positive")
        if self.kind == "samples":
            if len(self.times) < 1 or len(self.times) != len(self.values):
                raise ValueError("samples need matching, non-empty times and values")

    def __call__(self, t):
        if self.kind == "zero":
            return np.zeros(self.m)
        if self.kind == "sine_product":
            val = self.amplitude * math.sin(2 * math.pi * self.f1 * t) * math.sin(2 * math.pi * self.f2 * t)
            return np.full(self.m, val)
        vals = np.asarray(self.values, dtype=float).reshape(len(self.times), -1)
        return np.array([np.interp(t, self.times, vals[:, j]) for j in range(vals.shape[1])])

    def to_dict(self):
        if self.kind == "zero":
            return {"type": "zero"}
        if self.kind == "sine_product":
            return {"type": "sine_product", "f1": self.f1, "f2": self.f2, "amplitude": self.amplitude}
        return {"type": "samples", "t": list(self.times), "values": [list(np.atleast_1d(v)) for v in self.values]}

    @classmethod
    def from_dict(cls, d, m):
        if not isinstance(d, dict) or "type" not in d:
            raise FileFormat("input: expected an object with a 'type' field")
        kind = d["type"]
        try:
            if kind == "zero":
                return cls("zero", m)
            if kind == "sine_product":
                return cls("sine_product", m, float(d.get("f1", 50.0)), float(d.get("f2", 500.0)),
                           float(d.get("amplitude", 1.0)))
            if kind == "samples":
                vals = tuple(tuple(np.atleast_1d(np.asarray(v, float)).tolist()) for v in d["values"])
                return cls("samples", m, times=tuple(float(x) for x in d["t"]), values=vals)
        except (KeyError, TypeError, ValueError) as exc:
            raise FileFormat(f"input: {exc}") from exc
        raise FileFormat(f"input.type: unknown input type {kind!r}")


# -- PHS circuit -------------------------------------------------------------------------

@dataclass(frozen=True)
class CircuitParams:
    R1: float = 0.5
    R2: float = 0.5
    R3: float = 0.5
    R4: float = 0.5
    R5: float = 5.0
    C1: float = 5e-4
    C2: float = 5e-4
    L1: float = 20.0


def phs_circuit_example(params=None, matrices_file=None):
    """Six-state PHS circuit with ``E = diag(0, C1, 0, L1, 0, C2)`` and ``Q = I``.

    ``J``, ``R`` and ``B`` come from ``matrices_file`` (JSON object with
    those keys); the input is ``sin(2 pi 50 t) sin(2 pi 500 t)``.
    """
    p = params or CircuitParams()
    if matrices_file is None:
        raise FileFormat("matrices_file with J, R, B is required")
    data = _read_json(matrices_file)
    J = _matrix_field(data, "J", 6, 6)
    R = _matrix_field(data, "R", 6, 6)
    B = _matrix_field(data, "B", 6, None)
    E = np.diag([0.0, p.C1, 0.0, p.L1, 0.0, p.C2])
    m = B.shape[1]
    signal = InputSignal("sine_product", m, 50.0, 500.0, 1.0)
    model = PhsDae(E, J, R, np.eye(6), B, signal, "phs_circuit", signal.to_dict())
    return _validated(model)


def _validated(model):
    report = validate_structure(model)
    model = PhsDae(model.E, model.J, model.R, model.Q, model.B, model.u, model.name,
                   model.input_descriptor, report)
    if not report.ok:
        names = ", ".join(c.name for c in report.failures())
        raise StructureViolation(f"structure check failed: {names}")
    return model


# -- synthetic PHS-DAE --------------------------------------------------------------------

def synthetic_phs_dae(n_dyn, n_alg=0, seed=0, delta=1e-3, input_signal=None):
    """Random linear PHS with ``E = diag(1,...,1, 0,...,0)`` and ``Q = I``.

    ``J`` is the skew part of a seeded uniform matrix, ``R = M^T M + delta I``
    and ``B`` is the first unit column. Deterministic in ``seed``.
    """
    if n_dyn < 1 or n_alg < 0:
        raise ValueError("need n_dyn >= 1 and n_alg >= 0")
    n = n_dyn + n_alg
    rng = np.random.default_rng(seed)
    A = rng.uniform(-1.0, 1.0, (n, n))
    J = 0.5 * (A - A.T)
    M = rng.uniform(-1.0, 1.0, (n, n))
    R = M.T @ M + delta * np.eye(n)
    R = 0.5 * (R + R.T)
    B = np.zeros((n, 1))
    B[0, 0] = 1.0
    E = np.diag([1.0] * n_dyn + [0.0] * n_alg)
    signal = input_signal or InputSignal("zero", 1)
    return PhsDae(E, J, R, np.eye(n), B, signal, f"synthetic_{n_dyn}_{n_alg}_s{seed}",
                  signal.to_dict() if isinstance(signal, InputSignal) else None)


# -- linear coupled DAE models ------------------------------------------------------------

def linear_coupled(partition, A, Bz, C, D, names=None, name="coupled_linear"):
    """``y' = A y + Bz z``, ``0 = C y + D z`` split by ``partition``."""
    p = partition
    A, Bz, C, D = (np.array(M, dtype=float) for M in (A, Bz, C, D))
    shapes = {"A": (p.ny, p.ny), "Bz": (p.ny, p.nz), "C": (p.nz, p.ny), "D": (p.nz, p.nz)}
    for key, M in zip(shapes, (A, Bz, C, D)):
        if M.shape != shapes[key]:
            raise DimensionMismatch(f"{key} has shape {M.shape}, expected {shapes[key]}")
        M.setflags(write=False)
    ny1, nz1 = p.ny1, p.nz1

    def f1(s):
        return A[:ny1] @ s.y + Bz[:ny1] @ s.z

    def f2(s):
        return A[ny1:] @ s.y + Bz[ny1:] @ s.z

    def g1(s):
        return C[:nz1] @ s.y + D[:nz1] @ s.z

    def g2(s):
        return C[nz1:] @ s.y + D[nz1:] @ s.z

    def jac(s):
        return A, Bz, C, D

    cross = bool(np.any(Bz[:ny1, nz1:]) or np.any(D[:nz1, nz1:])
                 or np.any(Bz[ny1:, :nz1]) or np.any(D[nz1:, :nz1]))
    model = CoupledDae(p, f1, g1 if p.nz1 else None, f2, g2 if p.nz2 else None,
                       CouplingFlags(cross), jac, names, name, jac_constant=True)
    object.__setattr__(model, "matrices", {"A": A, "Bz": Bz, "C": C, "D": D})
    return model


# -- JSON files -----------------------------------------------------------------------------

def _read_json(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise FileFormat(f"{path}: cannot read file ({exc})") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FileFormat(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise FileFormat(f"{path}: top level must be a JSON object")
    return data


def _matrix_field(data, key, rows, cols):
    if key not in data:
        raise FileFormat(f"field {key!r} is missing")
    raw = data[key]
    if not isinstance(raw, list) or not raw or not all(isinstance(r, list) for r in raw):
        raise FileFormat(f"field {key!r}: expected a list of rows")
    widths = {len(r) for r in raw}
    if len(widths) != 1:
        raise FileFormat(f"field {key!r}: ragged rows (lengths {sorted(widths)})")
    try:
        M = np.array(raw, dtype=float)
    except (TypeError, ValueError) as exc:
        raise FileFormat(f"field {key!r}: non-numeric entry ({exc})") from exc
    if not np.all(np.isfinite(M)):
        raise FileFormat(f"field {key!r}: non-finite entry")
    if M.shape[0] != rows or (cols is not None and M.shape[1] != cols):
        want = f"{rows}x{cols if cols is not None else 'm'}"
        raise FileFormat(f"field {key!r}: shape {M.shape[0]}x{M.shape[1]}, expected {want}")
    return M


def _int_field(data, key):
    val = data.get(key)
    if not isinstance(val, int) or isinstance(val, bool) or val < 0:
        raise FileFormat(f"field {key!r}: expected a non-negative integer, got {val!r}")
    return val


def load_phs(path, validate=True):
    """Read a PHS model file; with ``validate`` the structure is enforced."""
    data = _read_json(path)
    if data.get("kind", "phs") != "phs":
        raise FileFormat(f"field 'kind': expected 'phs', got {data.get('kind')!r}")
    n = _int_field(data, "n")
    m = _int_field(data, "m")
    mats = {key: _matrix_field(data, key, n, n) for key in ("E", "J", "R", "Q")}
    B = _matrix_field(data, "B", n, m)
    signal = InputSignal.from_dict(data.get("input", {"type": "zero"}), m)
    model = PhsDae(mats["E"], mats["J"], mats["R"], mats["Q"], B, signal,
                   data.get("name", Path(path).stem), signal.to_dict())
    return _validated(model) if validate else model


def phs_to_dict(p):
    return {
        "kind": "phs",
        "name": p.name,
        "n": p.n,
        "m": p.m,
        "E": p.E.tolist(),
        "J": p.J.tolist(),
        "R": p.R.tolist(),
        "Q": p.Q.tolist(),
        "B": p.B.tolist(),
        "input": p.input_descriptor or {"type": "zero"},
    }


def save_phs(p, path):
    Path(path).write_text(json.dumps(phs_to_dict(p), indent=2))


def load_coupled(path):
    data = _read_json(path)
    if data.get("kind") != "coupled_linear":
        raise FileFormat(f"field 'kind': expected 'coupled_linear', got {data.get('kind')!r}")
    part_d = data.get("partition")
    if not isinstance(part_d, dict):
        raise FileFormat("field 'partition': expected an object")
    try:
        part = Partition(*(_int_field(part_d, k) for k in ("ny1", "ny2", "nz1", "nz2")))
    except ValueError as exc:
        raise FileFormat(f"field 'partition': {exc}") from exc
    ny, nz = part.ny, part.nz
    A = _matrix_field(data, "A", ny, ny)
    Bz = _matrix_field(data, "Bz", ny, nz) if nz else np.zeros((ny, 0))
    C = _matrix_field(data, "C", nz, ny) if nz else np.zeros((0, ny))
    D = _matrix_field(data, "D", nz, nz) if nz else np.zeros((0, 0))
    names = data.get("names")
    if names is not None and len(names) != ny + nz:
        raise FileFormat("field 'names': must list every y and z component")
    model = linear_coupled(part, A, Bz, C, D, tuple(names) if names else None,
                           data.get("name", Path(path).stem))
    for key in ("y0", "z0"):
        if key in data:
            object.__setattr__(model, key, np.asarray(data[key], dtype=float))
    return model


def coupled_to_dict(model):
    p = model.partition
    mats = model.matrices
    out = {
        "kind": "coupled_linear",
        "name": model.name,
        "partition": {"ny1": p.ny1, "ny2": p.ny2, "nz1": p.nz1, "nz2": p.nz2},
        "A": mats["A"].tolist(),
    }
    if p.nz:
        out.update(Bz=mats["Bz"].tolist(), C=mats["C"].tolist(), D=mats["D"].tolist())
    if model.names is not None:
        out["names"] = list(model.names)
    for key in ("y0", "z0"):
        if hasattr(model, key):
            out[key] = np.asarray(getattr(model, key)).tolist()
    return out


def save_coupled(model, path):
    Path(path).write_text(json.dumps(coupled_to_dict(model), indent=2))


def load_model(path):
    """Dispatch on the file's ``kind`` field."""
    kind = _read_json(path).get("kind")
    if kind in (None, "phs"):
        return load_phs(path)
    if kind == "coupled_linear":
        return load_coupled(path)
    raise FileFormat(f"field 'kind': unknown model kind {kind!r}")
