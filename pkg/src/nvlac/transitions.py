"""Transition frequencies, dipole amplitudes, selection rules and ZEFOZ gradients."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import TrackingError
from .hamiltonian import (
    DIM,
    FieldVector,
    SpinOperatorSet,
    SpinSystemParams,
    build_operators,
    static_hamiltonians,
)
from .levels import (
    DEGENERACY_TOL,
    EigenSystem,
    degenerate_groups,
    diagonalize,
    match_levels,
    reference_states,
)

LABEL_MAJOR = 0.5
LABEL_MINOR = 0.05
AXES = ("x", "y", "z")

# spectral line number -> (lower psi, upper psi)
LAC_LINES = {1: (2, 3), 2: (2, 4), 3: (1, 3), 4: (1, 4), 5: (3, 4)}


@dataclass(frozen=True)
class Transition:
    i: int
    j: int
    frequency: float       # MHz, E_j - E_i
    amplitudes: tuple      # (a_x, a_y, a_z)
    kind: str              # "MW" (m_s=0 <-> +-1) or "RF" (within a manifold)
    label: str             # "X", "Y", "Z" or ""


def selection_label(a, major=LABEL_MAJOR, minor=LABEL_MINOR) -> str:
    a = np.asarray(a)
    for k in range(3):
        others = np.delete(a, k)
        if a[k] > major and np.all(others < minor):
            return AXES[k].upper()
    return ""


@dataclass(frozen=True)
class TransitionTable:
    """All level pairs of one eigensystem.

    ``elements[a, i, j] = <i|S_a|j>`` (complex) in the eigenbasis;
    amplitudes are their moduli.
    """

    energies: np.ndarray
    elements: np.ndarray
    manifold: np.ndarray
    levels: tuple

    @property
    def amplitudes(self) -> np.ndarray:
        return np.abs(self.elements)

    def frequency(self, i, j) -> float:
        return float(self.energies[j] - self.energies[i])

    def amplitude(self, i, j) -> np.ndarray:
        return self.amplitudes[:, i, j]

    def combined_amplitude(self, i, j, tol=DEGENERACY_TOL) -> np.ndarray:
        """Amplitudes summed in quadrature over the degenerate partners of i and j."""
        groups = degenerate_groups(self.energies, tol)
        gi = next(g for g in groups if i in g)
        gj = next(g for g in groups if j in g)
        sub = self.amplitudes[:, gi][:, :, gj] ** 2
        return np.sqrt(sub.sum(axis=(1, 2)))

    def kind(self, i, j) -> str:
        zero_i, zero_j = self.manifold[i] == 0, self.manifold[j] == 0
        return "MW" if zero_i != zero_j else "RF"

    def entries(self):
        lv = self.levels
        out = []
        for p in range(len(lv)):
            for q in range(p + 1, len(lv)):
                i, j = lv[p], lv[q]
                a = tuple(float(x) for x in self.amplitude(i, j))
                out.append(Transition(i, j, self.frequency(i, j), a, self.kind(i, j), selection_label(a)))
        return out

    def rows(self):
        """CSV rows (i, j, frequency MHz, a_x, a_y, a_z, label)."""
        return [(t.i, t.j, t.frequency, *t.amplitudes, t.label) for t in self.entries()]

    def rabi_frequency(self, i, j, direction, amplitude, gamma_e) -> float:
        """Rabi frequency (MHz) of a linearly polarised drive on i <-> j."""
        m = np.einsum("a,a->", np.asarray(direction, dtype=float), self.elements[:, i, j])
        return float(np.sqrt(2.0) * gamma_e * amplitude * abs(m))


def transition_table(eig: EigenSystem, ops: SpinOperatorSet = None, restrict=None) -> TransitionTable:
    ops = ops or build_operators()
    v = eig.states
    elements = np.einsum("ik,aij,jl->akl", v.conj(), ops.S, v)
    levels = tuple(range(DIM)) if restrict is None else tuple(sorted(int(k) for k in restrict))
    return TransitionTable(np.asarray(eig.energies), elements, eig.manifold, levels)


def identify_lac_states(eig: EigenSystem) -> dict:
    """Map psi_1..psi_4 to ascending level indices.

    psi_1/psi_2 are the lower/upper m_s = 0 levels with m_I2 = 0 character;
    psi_3/psi_4 are the lower/upper +-1 levels with the largest weight on
    |+-1, -1/2, 0>.
    """
    ops = build_operators()
    i2sq = eig.expectation(ops.I2z @ ops.I2z)
    zero = [k for k in range(DIM) if not eig.in_pm1[k] and i2sq[k] < 0.5]
    ref = reference_states()
    span = np.stack([ref[3], ref[4]], axis=1)
    weight = (np.abs(span.conj().T @ eig.states) ** 2).sum(axis=0)
    pm1 = [k for k in range(DIM) if eig.in_pm1[k]]
    top = sorted(sorted(pm1, key=lambda k: -weight[k])[:2])
    zero = sorted(zero, key=lambda k: eig.energies[k])[:2]
    if len(zero) < 2:
        raise TrackingError("could not identify the m_s=0, m_I2=0 levels")
    return {1: zero[0], 2: zero[1], 3: top[0], 4: top[1]}


def lac_state_overlaps(eig: EigenSystem) -> dict:
    """|<psi_k(numerical)|psi_k(ideal)>|^2 for k = 1..4."""
    idx = identify_lac_states(eig)
    ref = reference_states()
    return {k: float(np.abs(eig.states[:, idx[k]].conj() @ ref[k]) ** 2) for k in range(1, 5)}


def lac_lines(eig: EigenSystem, table: TransitionTable = None) -> dict:
    """The five LAC transitions: line number -> (i, j, frequency, amplitudes)."""
    idx = identify_lac_states(eig)
    table = table or transition_table(eig)
    out = {}
    for line, (p, q) in LAC_LINES.items():
        i, j = sorted((idx[p], idx[q]))
        out[line] = (i, j, table.frequency(i, j), table.amplitude(i, j))
    return out


@dataclass(frozen=True)
class ZefozGradient:
    pair: tuple
    dB: float       # MHz/G
    dtheta: float   # MHz/rad
    dphi: float     # MHz/rad
    converged: bool
    half_step: tuple

    @property
    def vector(self) -> np.ndarray:
        return np.array([self.dB, self.dtheta, self.dphi])

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.vector))

    def to_dict(self) -> dict:
        return {
            "pair": list(self.pair),
            "dnu_dB_MHz_per_G": self.dB,
            "dnu_dtheta_MHz_per_rad": self.dtheta,
            "dnu_dphi_MHz_per_rad": self.dphi,
            "norm": self.norm,
            "richardson_converged": self.converged,
        }


def _spherical(B, theta, phi):
    st = np.sin(theta)
    return np.array([B * st * np.cos(phi), B * st * np.sin(phi), B * np.cos(theta)])


def transition_frequency_at(params, b_vector, ref_states, ref_energies, pair):
    """Frequency of the transition ``pair`` (nominal ascending indices) at a perturbed field."""
    e, v = np.linalg.eigh(static_hamiltonians(params, b_vector))
    perm = match_levels(ref_states, ref_energies, v, e)
    return float(e[perm[pair[1]]] - e[perm[pair[0]]])


def zefoz_gradient(params: SpinSystemParams, field: FieldVector, pair,
                   steps=(0.01, np.radians(0.01), np.radians(0.01)), rtol=0.01,
                   abs_floor=1e-6) -> ZefozGradient:
    """Central-difference gradient of a transition frequency w.r.t. (B, theta, phi).

    Levels at perturbed fields are re-matched by overlap. Gradients from full
    and half steps are combined by Richardson extrapolation; ``converged``
    records whether they agree within ``rtol`` of the gradient norm (or
    ``abs_floor`` MHz per unit).
    """
    i, j = int(pair[0]), int(pair[1])
    eig = diagonalize(static_hamiltonians(params, field.vector))
    base = np.array([field.B, field.theta, field.phi])

    def grad(h):
        g = np.empty(3)
        for k in range(3):
            d = np.zeros(3)
            d[k] = h[k]
            try:
                fp = transition_frequency_at(params, _spherical(*(base + d)), eig.states, eig.energies, (i, j))
                fm = transition_frequency_at(params, _spherical(*(base - d)), eig.states, eig.energies, (i, j))
            except TrackingError as exc:
                raise TrackingError(f"tracking failed at perturbed field for pair {pair}: {exc}") from exc
            g[k] = (fp - fm) / (2 * h[k])
        return g

    h = np.asarray(steps, dtype=float)
    g1 = grad(h)
    g2 = grad(h / 2)
    extrap = (4 * g2 - g1) / 3
    diff = np.linalg.norm(g2 - g1)
    converged = bool(diff <= max(rtol * np.linalg.norm(g2), abs_floor))
    return ZefozGradient((i, j), float(extrap[0]), float(extrap[1]), float(extrap[2]),
                         converged, tuple(float(x) for x in g2))
