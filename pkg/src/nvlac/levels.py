"""Eigen-decomposition, level tracking across field sweeps and LAC location."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import TrackingError, ValidationError
from .hamiltonian import (
    DIM,
    FieldVector,
    SpinSystemParams,
    basis_state,
    build_operators,
    static_hamiltonians,
)

DEGENERACY_TOL = 1e-6  # MHz
TRACKING_MIN_OVERLAP = 0.5
SWEEP_PARAMETERS = ("B", "theta", "phi")

_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class EigenSystem:
    """Ascending eigenvalues (MHz) and eigenvectors (columns of ``states``).

    ``ms_weights[k]`` holds the populations of level k in the m_s = +1, 0, -1
    blocks; ``tracking`` maps tracked labels to ascending indices when the
    system comes from a sweep.
    """

    energies: np.ndarray
    states: np.ndarray
    ms_weights: np.ndarray
    tracking: np.ndarray = field(default=None)

    @property
    def manifold(self) -> np.ndarray:
        """Dominant m_s character per level; LAC-mixed +-1 levels report +-1 by weight."""
        w = self.ms_weights
        tag = np.where(w[:, 1] >= 0.5, 0, np.where(w[:, 0] >= w[:, 2], 1, -1))
        return tag

    @property
    def in_pm1(self) -> np.ndarray:
        return self.ms_weights[:, 1] < 0.5

    def expectation(self, op) -> np.ndarray:
        return np.real(np.einsum("ik,ij,jk->k", self.states.conj(), op, self.states))

    def degenerate_groups(self, tol=DEGENERACY_TOL):
        return degenerate_groups(self.energies, tol)


def degenerate_groups(energies, tol=DEGENERACY_TOL):
    """Split ascending energies into runs whose neighbouring gaps are < tol."""
    groups, cur = [], [0]
    for k in range(1, len(energies)):
        if energies[k] - energies[k - 1] < tol:
            cur.append(k)
        else:
            groups.append(cur)
            cur = [k]
    groups.append(cur)
    return groups


def _ms_weights(states):
    p = np.abs(states) ** 2
    return np.stack([p[0:6].sum(0), p[6:12].sum(0), p[12:18].sum(0)], axis=-1)


def _check_hermitian(h):
    h = np.asarray(h)
    if h.ndim < 2 or h.shape[-1] != h.shape[-2]:
        raise ValidationError(f"expected square matrices, got shape {h.shape}")
    scale = max(np.abs(h).max(), 1.0)
    if np.abs(h - np.swapaxes(h, -1, -2).conj()).max() > 1e-10 * scale:
        raise ValidationError("matrix is not Hermitian")


def diagonalize(h) -> EigenSystem:
    """Eigen-decomposition of a Hermitian Hamiltonian.

    Inside a degenerate subspace the basis returned by LAPACK is arbitrary.
    """
    _check_hermitian(h)
    energies, states = np.linalg.eigh(np.asarray(h, dtype=complex))
    return EigenSystem(energies, states, _ms_weights(states))


def diagonalize_many(hs):
    """Batched version of :func:`diagonalize`; returns (energies, states)."""
    _check_hermitian(hs)
    return np.linalg.eigh(np.asarray(hs, dtype=complex))


def _overlap_scores(prev_states, prev_e, cur_states, cur_e):
    """Overlap magnitudes with degenerate blocks treated as subspaces."""
    m = np.abs(prev_states.conj().T @ cur_states) ** 2
    gp = degenerate_groups(prev_e)
    gc = degenerate_groups(cur_e)
    if len(gp) == len(prev_e) and len(gc) == len(cur_e):
        return np.sqrt(m)
    out = np.empty_like(m)
    for a in gp:
        for b in gc:
            block = m[np.ix_(a, b)].sum() / np.sqrt(len(a) * len(b))
            out[np.ix_(a, b)] = np.sqrt(min(block, 1.0))
    return out


def match_levels(prev_states, prev_e, cur_states, cur_e, min_overlap=TRACKING_MIN_OVERLAP):
    """Assign each previous level to a current one by greedy maximum overlap.

    Returns ``perm`` with ``perm[j_prev] = k_cur``; raises TrackingError if any
    assigned overlap is below ``min_overlap``.
    """
    score = _overlap_scores(prev_states, prev_e, cur_states, cur_e)
    perm, best = kernels.greedy_assign(score)
    if best.min() < min_overlap:
        raise TrackingError(
            f"level tracking failed: overlap {best.min():.3f} < {min_overlap}", index=None
        )
    return np.asarray(perm)


@dataclass(frozen=True)
class Sweep:
    parameter: str
    grid: np.ndarray

    def __post_init__(self):
        if self.parameter not in SWEEP_PARAMETERS:
            raise ValidationError(f"sweep parameter must be one of {SWEEP_PARAMETERS}")
        g = np.asarray(self.grid, dtype=float)
        if g.ndim != 1 or g.size < 2:
            raise ValidationError("sweep grid needs at least two points")
        d = np.diff(g)
        if not (np.all(d > 0) or np.all(d < 0)):
            raise ValidationError("sweep grid must be strictly monotone")
        if not np.all(np.isfinite(g)):
            raise ValidationError("sweep grid must be finite")
        g.setflags(write=False)
        object.__setattr__(self, "grid", g)

    @classmethod
    def from_spec(cls, text: str) -> Sweep:
        """Parse ``name:start:stop:step`` (angles in degrees, B in gauss)."""
        try:
            name, start, stop, step = text.split(":")
            start, stop, step = float(start), float(stop), float(step)
        except ValueError as exc:
            raise ValidationError(f"bad sweep spec {text!r}; want name:start:stop:step") from exc
        if step <= 0 or stop <= start:
            raise ValidationError(f"bad sweep bounds in {text!r}")
        n = int(round((stop - start) / step)) + 1
        grid = start + step * np.arange(n)
        if name in ("theta", "phi"):
            grid = np.radians(grid)
        return cls(name, grid)

    def fields(self, template: FieldVector):
        return [template.replace(**{self.parameter: float(x)}) for x in self.grid]


def _b_vectors(template: FieldVector, parameter: str, values):
    values = np.asarray(values, dtype=float)
    B = np.full_like(values, template.B)
    th = np.full_like(values, template.theta)
    ph = np.full_like(values, template.phi)
    {"B": B, "theta": th, "phi": ph}[parameter][...] = values
    st = np.sin(th)
    return np.stack([B * st * np.cos(ph), B * st * np.sin(ph), B * np.cos(th)], axis=-1)


def _validate_template(template: FieldVector, sweep: Sweep):
    g = sweep.grid
    if sweep.parameter == "B" and g.min() < 0:
        raise ValidationError("field magnitude sweep must stay >= 0")
    if sweep.parameter == "theta" and (g.min() < 0 or g.max() > np.pi + 1e-12):
        raise ValidationError("theta sweep must stay within [0, pi]")


@dataclass(frozen=True)
class SweepResult:
    """Eigen-sweep with both ascending and tracked level orderings.

    ``order[i, label]`` is the ascending index at grid point i of the level
    that carried ascending index ``label`` at the first grid point.
    """

    sweep: Sweep
    template: FieldVector
    energies: np.ndarray   # (n, 18) ascending
    states: np.ndarray     # (n, 18, 18)
    order: np.ndarray      # (n, 18)

    @property
    def tracked_energies(self) -> np.ndarray:
        return np.take_along_axis(self.energies, self.order, axis=1)

    def eigensystem(self, i) -> EigenSystem:
        return EigenSystem(self.energies[i], self.states[i], _ms_weights(self.states[i]), self.order[i])

    def __len__(self):
        return len(self.sweep.grid)


def sweep_levels(params: SpinSystemParams, template: FieldVector, sweep: Sweep) -> SweepResult:
    """Diagonalise along a one-parameter field sweep and track levels by overlap."""
    _validate_template(template, sweep)
    hs = static_hamiltonians(params, _b_vectors(template, sweep.parameter, sweep.grid))
    energies, states = diagonalize_many(hs)
    n = len(sweep.grid)
    order = np.empty((n, DIM), dtype=np.intp)
    order[0] = np.arange(DIM)
    for i in range(1, n):
        try:
            perm = match_levels(states[i - 1], energies[i - 1], states[i], energies[i])
        except TrackingError as exc:
            raise TrackingError(
                f"level tracking failed between grid points {i - 1} and {i} "
                f"({sweep.parameter}={sweep.grid[i]:.6g}); refine the grid",
                index=i,
            ) from exc
        order[i] = perm[order[i - 1]]
    return SweepResult(sweep, template, energies, states, order)


def reference_states():
    """Idealised LAC eigenstates |psi_1..4> in the product basis (m_I2 = 0)."""
    s2 = np.sqrt(2.0)
    return {
        1: (basis_state(0, -0.5, 0) + basis_state(0, 0.5, 0)) / s2,
        2: (basis_state(0, -0.5, 0) - basis_state(0, 0.5, 0)) / s2,
        3: (basis_state(-1, -0.5, 0) - basis_state(1, -0.5, 0)) / s2,
        4: (basis_state(-1, -0.5, 0) + basis_state(1, -0.5, 0)) / s2,
    }


@dataclass(frozen=True)
class LacReport:
    parameter: str
    value: float          # internal units (rad or G)
    gap: float            # MHz
    labels: tuple         # tracked labels of the two levels
    indices: tuple        # ascending indices at the minimum
    overlaps: dict        # {"psi3": ..., "psi4": ...}
    boundary: bool = False

    @property
    def value_display(self) -> float:
        """Location in CLI units: degrees for angles, gauss for B."""
        return float(np.degrees(self.value)) if self.parameter in ("theta", "phi") else self.value

    def to_dict(self) -> dict:
        return {
            "parameter": self.parameter,
            "value": self.value_display,
            "value_units": "deg" if self.parameter in ("theta", "phi") else "G",
            "gap_MHz": self.gap,
            "labels": list(self.labels),
            "indices": list(self.indices),
            "overlaps": self.overlaps,
            "boundary_minimum": self.boundary,
        }


def auto_lac_pair(result: SweepResult):
    """Pick the tracked m_s=+-1, m_I2=0 pair with the smallest interior gap minimum."""
    ops = build_operators()
    i2sq = ops.I2z @ ops.I2z
    mid = len(result) // 2
    es = result.eigensystem(mid)
    inv = np.argsort(result.order[mid])  # ascending index -> label
    cand = [k for k in range(DIM) if es.in_pm1[k] and es.expectation(i2sq)[k] < 0.5]
    labels = sorted(inv[k] for k in cand)
    tracked = result.tracked_energies
    best = None
    for a_pos in range(len(labels)):
        for b_pos in range(a_pos + 1, len(labels)):
            a, b = labels[a_pos], labels[b_pos]
            gap = np.abs(tracked[:, b] - tracked[:, a])
            k = int(np.argmin(gap))
            if k in (0, len(gap) - 1):
                continue
            if best is None or gap[k] < best[0]:
                best = (gap[k], (int(a), int(b)))
    if best is None:
        raise ValidationError("no m_s=+-1 level pair has an interior gap minimum in this sweep")
    return best[1]


def _tracked_at(params, template, parameter, x, ref_states, ref_e, labels):
    """Energies/states of ``labels`` at an off-grid point, matched to a reference grid point."""
    b = _b_vectors(template, parameter, [x])[0]
    e, v = np.linalg.eigh(static_hamiltonians(params, b))
    perm = match_levels(ref_states, ref_e, v, e)
    idx = tuple(int(perm[l]) for l in labels)
    return e, v, idx


def find_lac(params: SpinSystemParams, template: FieldVector, sweep: Sweep,
             pair=None, xtol=None) -> LacReport:
    """Locate the minimum of the tracked gap between two levels.

    The grid brackets the minimum; golden-section search refines it to
    ``xtol`` (default 1e-4 degree for angles, 1e-4 G for B). ``pair`` holds
    tracked labels (ascending indices at the first grid point); by default the
    m_I2 = 0 pair in the m_s = +-1 manifold is chosen automatically.
    """
    result = sweep_levels(params, template, sweep)
    if pair is None:
        pair = auto_lac_pair(result)
    a, b = (int(pair[0]), int(pair[1]))
    if not (0 <= a < DIM and 0 <= b < DIM) or a == b:
        raise ValidationError(f"invalid level pair {pair}")
    tracked = result.tracked_energies
    gaps = np.abs(tracked[:, b] - tracked[:, a])
    k = int(np.argmin(gaps))
    grid = result.sweep.grid
    if xtol is None:
        xtol = np.radians(1e-4) if sweep.parameter in ("theta", "phi") else 1e-4

    def gap_at(x, ref):
        e, v, idx = _tracked_at(params, template, sweep.parameter, x,
                                result.states[ref], result.energies[ref],
                                (result.order[ref][a], result.order[ref][b]))
        return abs(e[idx[1]] - e[idx[0]]), e, v, idx

    if k == 0 or k == len(grid) - 1:
        x = float(grid[k])
        g = float(gaps[k])
        e, v = result.energies[k], result.states[k]
        idx = (int(result.order[k][a]), int(result.order[k][b]))
        boundary = True
    else:
        lo, hi = float(grid[k - 1]), float(grid[k + 1])
        if lo > hi:
            lo, hi = hi, lo
        c = hi - _GOLDEN * (hi - lo)
        d = lo + _GOLDEN * (hi - lo)
        fc = gap_at(c, k)[0]
        fd = gap_at(d, k)[0]
        while hi - lo > xtol:
            if fc < fd:
                hi, d, fd = d, c, fc
                c = hi - _GOLDEN * (hi - lo)
                fc = gap_at(c, k)[0]
            else:
                lo, c, fc = c, d, fd
                d = lo + _GOLDEN * (hi - lo)
                fd = gap_at(d, k)[0]
        x = 0.5 * (lo + hi)
        g, e, v, idx = gap_at(x, k)
        boundary = False
    lower, upper = (idx if e[idx[0]] <= e[idx[1]] else idx[::-1])
    ref = reference_states()
    overlaps = {
        "psi3": float(np.abs(v[:, lower].conj() @ ref[3]) ** 2),
        "psi4": float(np.abs(v[:, upper].conj() @ ref[4]) ** 2),
    }
    return LacReport(sweep.parameter, x, float(g), (a, b), (int(lower), int(upper)), overlaps, boundary)
