"""Spin operators and Hamiltonians for the NV electron + 13C + 14N system.

Conventions used throughout the package:

* energies and frequencies in MHz (h = 1), fields in gauss, time in µs,
  angles in radians;
* product basis ordered electron (x) 13C (x) 14N with
  ``m_s in (+1, 0, -1)``, ``m_I1 in (+1/2, -1/2)``, ``m_I2 in (+1, 0, -1)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from functools import lru_cache
from pathlib import Path

import numpy as np

from .errors import ValidationError

DIM = 18
TWO_PI = 2.0 * np.pi

# electron, 13C, 14N gyromagnetic ratios (MHz/G)
GAMMA_E = 2.802495
GAMMA_13C = 1.0705e-3
GAMMA_14N = 3.0766e-4

_SYM_TOL = 1e-12


def _default_a1():
    return np.array([[189.3, 0.0, 24.1],
                     [0.0, 128.4, 0.0],
                     [24.1, 0.0, 128.9]])


def _default_a2():
    return np.diag([-2.6, -2.6, -2.3])


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SpinSystemParams:
    """Static Hamiltonian constants.

    ``A1`` and ``A2`` are the 13C and 14N hyperfine tensors in the NV frame
    (z along the NV axis, x in the N-V-13C plane).
    """

    D: float = 2870.0
    P: float = -4.95
    gamma_e: float = GAMMA_E
    gamma_n1: float = GAMMA_13C
    gamma_n2: float = GAMMA_14N
    A1: np.ndarray = field(default_factory=_default_a1)
    A2: np.ndarray = field(default_factory=_default_a2)

    def __post_init__(self):
        for name in ("A1", "A2"):
            t = _frozen(getattr(self, name))
            if t.shape != (3, 3):
                raise ValidationError(f"{name} must be 3x3, got shape {t.shape}")
            if not np.all(np.isfinite(t)):
                raise ValidationError(f"{name} has non-finite entries")
            if np.abs(t - t.T).max() > _SYM_TOL:
                raise ValidationError(f"{name} is not symmetric")
            object.__setattr__(self, name, t)
        for name in ("D", "P", "gamma_e", "gamma_n1", "gamma_n2"):
            v = float(getattr(self, name))
            if not np.isfinite(v):
                raise ValidationError(f"{name} must be finite")
            object.__setattr__(self, name, v)
        if self.D <= 0:
            raise ValidationError("zero-field splitting D must be positive")

    def replace(self, **changes) -> SpinSystemParams:
        kw = {f.name: getattr(self, f.name) for f in fields(self)}
        kw.update(changes)
        return SpinSystemParams(**kw)

    def to_dict(self) -> dict:
        return {
            "D": self.D,
            "P": self.P,
            "gamma_e": self.gamma_e,
            "gamma_n1": self.gamma_n1,
            "gamma_n2": self.gamma_n2,
            "A1": self.A1.tolist(),
            "A2": self.A2.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> SpinSystemParams:
        known = {f.name for f in fields(cls)}
        extra = set(data) - known - {"units", "schema_version", "comment"}
        if extra:
            raise ValidationError(f"unknown parameter keys: {sorted(extra)}")
        return cls(**{k: v for k, v in data.items() if k in known})


PARAMS_UNITS = {
    "D": "MHz",
    "P": "MHz",
    "gamma_e": "MHz/G",
    "gamma_n1": "MHz/G",
    "gamma_n2": "MHz/G",
    "A1": "MHz (3x3, NV frame)",
    "A2": "MHz (3x3, NV frame)",
}


def load_params(path) -> SpinSystemParams:
    """Read a JSON parameter file; missing keys fall back to defaults."""
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read parameter file {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ValidationError("parameter file must hold a JSON object")
    return SpinSystemParams.from_dict(data)


def dump_params(params: SpinSystemParams) -> str:
    doc = {"schema_version": 1, "units": PARAMS_UNITS, **params.to_dict()}
    return json.dumps(doc, indent=2)


@dataclass(frozen=True)
class FieldVector:
    """Static field in spherical form: magnitude (G), polar and azimuthal angle (rad)."""

    B: float
    theta: float
    phi: float = 0.0

    def __post_init__(self):
        B, theta, phi = float(self.B), float(self.theta), float(self.phi)
        if not (np.isfinite(B) and np.isfinite(theta) and np.isfinite(phi)):
            raise ValidationError("field components must be finite")
        if B < 0:
            raise ValidationError("field magnitude must be >= 0")
        if not 0.0 <= theta <= np.pi + 1e-12:
            raise ValidationError(f"theta={theta} outside [0, pi]")
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "theta", min(theta, np.pi))
        object.__setattr__(self, "phi", phi % TWO_PI)

    @classmethod
    def from_degrees(cls, B, theta_deg, phi_deg=0.0) -> FieldVector:
        return cls(B, np.radians(theta_deg), np.radians(phi_deg))

    @property
    def vector(self) -> np.ndarray:
        st = np.sin(self.theta)
        return self.B * np.array([st * np.cos(self.phi), st * np.sin(self.phi), np.cos(self.theta)])

    def replace(self, **changes) -> FieldVector:
        kw = {"B": self.B, "theta": self.theta, "phi": self.phi}
        kw.update(changes)
        return FieldVector(**kw)


@dataclass(frozen=True)
class DriveField:
    """Linearly polarised MW/RF drive.

    ``amplitude`` in G, ``zeta``/``eta`` polar/azimuthal direction in the NV
    frame, ``frequency`` carrier in MHz, ``phase`` carrier phase in rad.
    """

    amplitude: float
    zeta: float
    eta: float
    frequency: float = 0.0
    phase: float = 0.0

    def __post_init__(self):
        vals = [float(getattr(self, n)) for n in ("amplitude", "zeta", "eta", "frequency", "phase")]
        if not all(np.isfinite(vals)):
            raise ValidationError("drive parameters must be finite")
        amplitude, zeta, eta, frequency, phase = vals
        if amplitude < 0:
            raise ValidationError("drive amplitude must be >= 0")
        if not 0.0 <= zeta <= np.pi + 1e-12:
            raise ValidationError(f"zeta={zeta} outside [0, pi]")
        object.__setattr__(self, "amplitude", amplitude)
        object.__setattr__(self, "zeta", min(zeta, np.pi))
        object.__setattr__(self, "eta", eta % TWO_PI)
        object.__setattr__(self, "frequency", frequency)
        object.__setattr__(self, "phase", phase)

    @property
    def direction(self) -> np.ndarray:
        sz = np.sin(self.zeta)
        return np.array([sz * np.cos(self.eta), sz * np.sin(self.eta), np.cos(self.zeta)])

    def replace(self, **changes) -> DriveField:
        kw = {n: getattr(self, n) for n in ("amplitude", "zeta", "eta", "frequency", "phase")}
        kw.update(changes)
        return DriveField(**kw)


def spin_matrices(j: float):
    """Return (Jx, Jy, Jz) for spin ``j`` with m ordered from +j down to -j."""
    m = np.arange(j, -j - 1, -1)
    n = len(m)
    jp = np.zeros((n, n))
    for k in range(1, n):
        jp[k - 1, k] = np.sqrt(j * (j + 1) - m[k] * (m[k] + 1))
    jx = (jp + jp.T) / 2
    jy = (jp - jp.T) / 2j
    return jx.astype(complex), jy, np.diag(m).astype(complex)


@dataclass(frozen=True)
class SpinOperatorSet:
    S: np.ndarray   # (3, 18, 18) electron spin-1
    I1: np.ndarray  # (3, 18, 18) 13C spin-1/2
    I2: np.ndarray  # (3, 18, 18) 14N spin-1

    @property
    def Sx(self):
        return self.S[0]

    @property
    def Sy(self):
        return self.S[1]

    @property
    def Sz(self):
        return self.S[2]

    @property
    def I1x(self):
        return self.I1[0]

    @property
    def I1y(self):
        return self.I1[1]

    @property
    def I1z(self):
        return self.I1[2]

    @property
    def I2x(self):
        return self.I2[0]

    @property
    def I2y(self):
        return self.I2[1]

    @property
    def I2z(self):
        return self.I2[2]


@lru_cache(maxsize=None)
def build_operators() -> SpinOperatorSet:
    e3, e2 = np.eye(3), np.eye(2)
    s = [np.kron(np.kron(a, e2), e3) for a in spin_matrices(1)]
    i1 = [np.kron(np.kron(e3, a), e3) for a in spin_matrices(0.5)]
    i2 = [np.kron(np.kron(e3, e2), a) for a in spin_matrices(1)]
    return SpinOperatorSet(_frozen(s, complex), _frozen(i1, complex), _frozen(i2, complex))


def basis_index(m_s: int, m_i1: float, m_i2: int) -> int:
    """Position of |m_s, m_I1, m_I2> in the product basis."""
    try:
        return (1 - int(m_s)) * 6 + (0 if m_i1 > 0 else 1) * 3 + (1 - int(m_i2))
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"bad quantum numbers {(m_s, m_i1, m_i2)}") from exc


def basis_state(m_s: int, m_i1: float, m_i2: int) -> np.ndarray:
    v = np.zeros(DIM, dtype=complex)
    v[basis_index(m_s, m_i1, m_i2)] = 1.0
    return v


def _check_tensors(params: SpinSystemParams):
    for name in ("A1", "A2"):
        t = np.asarray(getattr(params, name))
        if t.shape != (3, 3) or np.abs(t - t.T).max() > _SYM_TOL:
            raise ValidationError(f"hyperfine tensor {name} must be a symmetric 3x3 matrix")


def field_independent_part(params: SpinSystemParams) -> np.ndarray:
    """Every term of the static Hamiltonian that does not depend on the field."""
    _check_tensors(params)
    ops = build_operators()
    h = params.D * ops.Sz @ ops.Sz + params.P * ops.I2z @ ops.I2z
    h = h + np.einsum("ac,aij,cjk->ik", params.A1, ops.S, ops.I1)
    h = h + np.einsum("ac,aij,cjk->ik", params.A2, ops.S, ops.I2)
    return h


def zeeman_operators(params: SpinSystemParams) -> np.ndarray:
    """(3, 18, 18) operators Z_a such that the Zeeman term is sum_a B_a Z_a."""
    ops = build_operators()
    return params.gamma_e * ops.S + params.gamma_n1 * ops.I1 + params.gamma_n2 * ops.I2


def static_hamiltonians(params: SpinSystemParams, b_vectors) -> np.ndarray:
    """Batch of static Hamiltonians for Cartesian field vectors of shape (..., 3) in G."""
    b = np.asarray(b_vectors, dtype=float)
    h0 = field_independent_part(params)
    return h0 + np.einsum("...a,aij->...ij", b, zeeman_operators(params))


def build_static_hamiltonian(params: SpinSystemParams, field: FieldVector) -> np.ndarray:
    """Full static Hamiltonian (MHz) at the given static field."""
    return static_hamiltonians(params, field.vector)


def drive_operator(params: SpinSystemParams, drive: DriveField) -> np.ndarray:
    """Spatial part of the drive Hamiltonian, i.e. H_drive(t) / cos(2 pi f t + phase)."""
    ops = build_operators()
    n = drive.direction
    return np.sqrt(2.0) * params.gamma_e * drive.amplitude * np.einsum("a,aij->ij", n, ops.S)


def build_drive_hamiltonian(params: SpinSystemParams, drive: DriveField, t: float) -> np.ndarray:
    return drive_operator(params, drive) * np.cos(TWO_PI * drive.frequency * t + drive.phase)


def ms_zero_projector() -> np.ndarray:
    """Projector onto the m_s = 0 electron subspace (all nuclear states)."""
    p = np.zeros((DIM, DIM), dtype=complex)
    p[6:12, 6:12] = np.eye(6)
    return p
