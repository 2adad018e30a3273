"""Reconstruction of the MW field vector from LAC line amplitudes and Rabi frequencies.

At the longitudinal LAC, lines 1 and 3 respond only to the y component of
the MW field, lines 2 and 4 only to x, and the RF line 5 only to z. Line
amplitude ratios give the azimuth eta, and the MW/RF Rabi ratio gives the
polar angle zeta once the field ratio B_rf/B_mw is known.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .errors import InconsistentInputError, ValidationError
from .hamiltonian import (
    GAMMA_E,
    DriveField,
    FieldVector,
    SpinSystemParams,
    build_operators,
    build_static_hamiltonian,
)
from .levels import diagonalize
from .transitions import lac_lines, transition_table

SQRT2 = np.sqrt(2.0)


def field_ratio_from_powers(p_mw, p_rf) -> float:
    """B_rf/B_mw from delivered MW and RF powers (same coupling structure assumed)."""
    if p_mw <= 0 or p_rf < 0:
        raise ValidationError("powers must be positive")
    return float(np.sqrt(p_rf / p_mw))


@dataclass(frozen=True)
class EtaEstimate:
    eta: float              # rad, in [0, pi/2]
    ambiguity: tuple        # {eta, pi - eta, pi + eta, 2 pi - eta}
    residual: float         # |sqrt(I1/I2) - sqrt(I3/I4)|, nan if undefined
    pairwise: tuple         # (eta from lines 1/2, eta from lines 3/4), nan if undefined


def _deg_or_none(x):
    return None if np.isnan(x) else float(np.degrees(x))


def _ambiguity(eta):
    return tuple(float(x % (2 * np.pi)) for x in (eta, np.pi - eta, np.pi + eta, 2 * np.pi - eta))


def estimate_eta(I1, I2, I3, I4) -> EtaEstimate:
    """Pooled azimuth estimate tan(eta) = sqrt((I1 + I3)/(I2 + I4))."""
    amps = np.array([I1, I2, I3, I4], dtype=float)
    if not np.all(np.isfinite(amps)) or np.any(amps < 0):
        raise ValidationError("line amplitudes must be finite and >= 0")
    y, x = amps[0] + amps[2], amps[1] + amps[3]
    if x == 0 and y == 0:
        raise InconsistentInputError("all four amplitudes vanish: no transverse drive, eta undefined")
    eta = np.pi / 2 if x == 0 else float(np.arctan(np.sqrt(y / x)))

    def pair(a, b):
        return float(np.arctan(np.sqrt(a / b))) if b > 0 else (np.pi / 2 if a > 0 else np.nan)

    p12, p34 = pair(amps[0], amps[1]), pair(amps[2], amps[3])
    if amps[1] > 0 and amps[3] > 0:
        residual = float(abs(np.sqrt(amps[0] / amps[1]) - np.sqrt(amps[2] / amps[3])))
    else:
        residual = float("nan")
    return EtaEstimate(eta, _ambiguity(eta), residual, (p12, p34))


def zeta_coefficient(rabi_mw, rabi_rf, eta, a_y, a_z) -> float:
    """c in tan(zeta) = c * B_rf/B_mw."""
    if rabi_rf <= 0:
        return np.inf
    return float((rabi_mw / rabi_rf) * a_z / (a_y * np.sin(eta)))


def estimate_zeta(rabi_mw, rabi_rf, eta, a_y, a_z, field_ratio) -> float:
    """Polar angle of the drive from the MW (line 1) and RF (line 5) Rabi frequencies."""
    if rabi_mw < 0 or rabi_rf < 0 or field_ratio <= 0:
        raise ValidationError("Rabi frequencies must be >= 0 and the field ratio > 0")
    if rabi_rf == 0 and rabi_mw == 0:
        raise InconsistentInputError("both Rabi frequencies vanish")
    if rabi_rf == 0:
        return np.pi / 2
    if rabi_mw == 0:
        if np.sin(eta) == 0:
            raise InconsistentInputError("rabi_mw = 0 with sin(eta) = 0 leaves zeta undetermined")
        return 0.0
    if np.sin(eta) == 0:
        raise InconsistentInputError("nonzero MW Rabi frequency on a y-only line with sin(eta) = 0")
    return float(np.arctan(zeta_coefficient(rabi_mw, rabi_rf, eta, a_y, a_z) * field_ratio))


def estimate_amplitudes(rabi_mw, rabi_rf, eta, zeta, a_y, a_z, gamma_e=GAMMA_E):
    """(B_mw, B_rf) in G from the two Rabi expressions."""
    smw = np.sin(zeta) * np.sin(eta) * a_y
    srf = np.cos(zeta) * a_z
    if abs(smw) < 1e-12:
        if rabi_mw > 0:
            raise InconsistentInputError("sin(zeta) sin(eta) = 0 but the MW Rabi frequency is nonzero")
        b_mw = 0.0
    else:
        b_mw = rabi_mw / (SQRT2 * gamma_e * abs(smw))
    if abs(srf) < 1e-12:
        if rabi_rf > 0:
            raise InconsistentInputError("cos(zeta) = 0 but the RF Rabi frequency is nonzero")
        b_rf = 0.0
    else:
        b_rf = rabi_rf / (SQRT2 * gamma_e * abs(srf))
    return float(b_mw), float(b_rf)


# --------------------------------------------------------------------------
# Forward model at the longitudinal LAC


@dataclass(frozen=True)
class LacCouplings:
    """Complex <i|S|j> vectors of lines 1..5 at one field point."""

    field: FieldVector
    elements: dict          # line -> complex (3,) vector
    frequencies: dict       # line -> MHz
    gamma_e: float

    @property
    def a_y(self) -> float:
        return float(abs(self.elements[1][1]))

    @property
    def a_z(self) -> float:
        return float(abs(self.elements[5][2]))

    def rabi(self, line, drive: DriveField) -> float:
        return float(SQRT2 * self.gamma_e * drive.amplitude * abs(drive.direction @ self.elements[line]))

    def intensities(self, drive: DriveField) -> np.ndarray:
        """Weak-pulse line amplitudes I_1..I_4, proportional to the squared Rabi frequencies."""
        return np.array([self.rabi(k, drive) ** 2 for k in (1, 2, 3, 4)])


def lac_couplings(params: SpinSystemParams, field: FieldVector) -> LacCouplings:
    eig = diagonalize(build_static_hamiltonian(params, field))
    table = transition_table(eig, build_operators())
    lines = lac_lines(eig, table)
    elements = {k: table.elements[:, i, j].copy() for k, (i, j, _, _) in lines.items()}
    freqs = {k: v[2] for k, v in lines.items()}
    return LacCouplings(field, elements, freqs, params.gamma_e)


@dataclass(frozen=True)
class MwVectorEstimate:
    eta: float
    eta_ambiguity: tuple
    zeta: float
    B_mw: float
    B_rf: float
    inputs: dict
    residuals: dict = field(default_factory=dict)
    refined: bool = False

    def to_dict(self) -> dict:
        return {
            "eta_deg": float(np.degrees(self.eta)),
            "eta_ambiguity_deg": [float(np.degrees(x)) for x in self.eta_ambiguity],
            "zeta_deg": float(np.degrees(self.zeta)),
            "B_mw_G": self.B_mw,
            "B_rf_G": self.B_rf,
            "refined": self.refined,
            "inputs": self.inputs,
            "residuals": self.residuals,
        }


def reconstruct(amplitudes, rabi_mw, rabi_rf, field_ratio, a_y=0.80, a_z=1.0, gamma_e=GAMMA_E,
                couplings: LacCouplings = None, eta=None) -> MwVectorEstimate:
    """Closed-form (eta, zeta, B_mw, B_rf), optionally refined against the full forward model.

    ``amplitudes`` are I_1..I_4; pass ``None`` together with a known ``eta``
    (rad) to skip the azimuth step. When ``couplings`` are given and
    amplitudes are available, the closed-form values seed a least-squares
    fit that uses the complete complex matrix elements of all five lines,
    removing the bias of the small cross components.
    """
    if couplings is not None:
        a_y, a_z = couplings.a_y, couplings.a_z
        gamma_e = couplings.gamma_e
    if amplitudes is None:
        if eta is None:
            raise ValidationError("need either line amplitudes or eta")
        est = EtaEstimate(float(eta), _ambiguity(float(eta)), float("nan"), (float("nan"), float("nan")))
    else:
        est = estimate_eta(*amplitudes)
    zeta = estimate_zeta(rabi_mw, rabi_rf, est.eta, a_y, a_z, field_ratio)
    b_mw, b_rf = estimate_amplitudes(rabi_mw, rabi_rf, est.eta, zeta, a_y, a_z, gamma_e)
    inputs = {
        "amplitudes": None if amplitudes is None else [float(x) for x in amplitudes],
        "eta_input_deg": None if eta is None else float(np.degrees(eta)),
        "rabi_mw_MHz": float(rabi_mw),
        "rabi_rf_MHz": float(rabi_rf),
        "field_ratio": float(field_ratio),
        "a_y": float(a_y),
        "a_z": float(a_z),
    }
    residuals = {
        "eta_pairwise": None if np.isnan(est.residual) else est.residual,
        "eta_from_lines_1_2_deg": _deg_or_none(est.pairwise[0]),
        "eta_from_lines_3_4_deg": _deg_or_none(est.pairwise[1]),
        "zeta_coefficient": zeta_coefficient(rabi_mw, rabi_rf, est.eta, a_y, a_z),
    }
    out = MwVectorEstimate(est.eta, est.ambiguity, zeta, b_mw, b_rf, inputs, residuals)
    if couplings is None or amplitudes is None:
        return out
    return refine(out, couplings)


def refine(estimate: MwVectorEstimate, couplings: LacCouplings) -> MwVectorEstimate:
    """Least-squares polish of (eta, zeta, B_mw) with B_rf = ratio * B_mw.

    Residuals: normalised I_1..I_4 and the relative errors of both Rabi
    frequencies. The RF drive is taken to share the MW direction.
    """
    inp = estimate.inputs
    amps = np.asarray(inp["amplitudes"], dtype=float)
    norm_amps = amps / amps.sum()
    r_mw, r_rf, ratio = inp["rabi_mw_MHz"], inp["rabi_rf_MHz"], inp["field_ratio"]

    def model(x):
        eta, zeta, b_mw = x
        mw = DriveField(b_mw, float(np.clip(zeta, 0, np.pi)), eta)
        rf = DriveField(b_mw * ratio, float(np.clip(zeta, 0, np.pi)), eta)
        intens = couplings.intensities(mw)
        return intens / intens.sum(), couplings.rabi(1, mw), couplings.rabi(5, rf)

    def resid(x):
        ni, m_mw, m_rf = model(x)
        res = list(ni - norm_amps)
        if r_mw > 0:
            res.append((m_mw - r_mw) / r_mw)
        if r_rf > 0:
            res.append((m_rf - r_rf) / r_rf)
        return np.array(res)

    x0 = np.array([estimate.eta, estimate.zeta, max(estimate.B_mw, 1e-9)])
    lo = np.array([0.0, 0.0, 0.0])
    hi = np.array([np.pi / 2, np.pi / 2, np.inf])
    res = optimize.least_squares(resid, np.clip(x0, lo + 1e-9, hi - 1e-9), bounds=(lo, hi),
                                 xtol=1e-14, ftol=1e-14, gtol=1e-14)
    eta, zeta, b_mw = res.x
    residuals = dict(estimate.residuals)
    residuals["refine_cost"] = float(res.cost)
    residuals["refine_converged"] = bool(res.success)
    return MwVectorEstimate(float(eta), _ambiguity(eta), float(zeta), float(b_mw), float(b_mw * ratio),
                            estimate.inputs, residuals, refined=True)


def forward_measurements(couplings: LacCouplings, mw: DriveField, b_rf: float):
    """Noise-free (I_1..I_4, rabi_mw, rabi_rf) for an MW drive and an RF field of the same direction."""
    rf = mw.replace(amplitude=b_rf)
    return couplings.intensities(mw), couplings.rabi(1, mw), couplings.rabi(5, rf)


# --------------------------------------------------------------------------
# Amplitude ratios in the transverse configuration


@dataclass(frozen=True)
class RatioCurve:
    phi: np.ndarray          # rad
    intensities: np.ndarray  # (n, 4) I_1..I_4 ordered by frequency
    valid: np.ndarray        # bool per phi

    def _ratio(self, num, den):
        total = self.intensities.sum(axis=1)
        out = np.full(num.shape, np.inf)
        ok = den > 1e-12 * total
        out[ok] = num[ok] / den[ok]
        return out

    @property
    def ratio(self) -> np.ndarray:
        """(I_1 + I_4)/(I_2 + I_3); inf where the denominator vanishes."""
        i = self.intensities
        return self._ratio(i[:, 0] + i[:, 3], i[:, 1] + i[:, 2])

    @property
    def inverse(self) -> np.ndarray:
        i = self.intensities
        return self._ratio(i[:, 1] + i[:, 2], i[:, 0] + i[:, 3])


def transverse_lines(eig):
    """Four MW transitions between the m_s=0, m_I2=0 levels and the m_I2=0 LAC pair.

    The LAC pair is the m_I2=0 pair in the m_s=+-1 manifold with the smallest
    splitting. Returned as (i, j) tuples sorted by transition frequency.
    """
    ops = build_operators()
    i2 = eig.expectation(ops.I2z @ ops.I2z)
    zero = [k for k in range(len(eig.energies)) if not eig.in_pm1[k] and i2[k] < 0.5]
    pm = [k for k in range(len(eig.energies)) if eig.in_pm1[k] and i2[k] < 0.5]
    best = min(((abs(eig.energies[b] - eig.energies[a]), (a, b)) for n, a in enumerate(pm) for b in pm[n + 1:]))
    pair = best[1]
    trans = [tuple(sorted((z, l))) for z in zero[:2] for l in pair]
    return sorted(trans, key=lambda t: abs(eig.energies[t[1]] - eig.energies[t[0]]))


def amplitude_ratio_scan(params: SpinSystemParams, B, phis, drive: DriveField, method="weak",
                         theta=np.pi / 2, ramsey_options=None) -> RatioCurve:
    """I_1..I_4 of the transverse-LAC lines versus phi at theta = 90 degrees.

    ``method="weak"`` uses squared Rabi frequencies from the transition table;
    ``method="ramsey"`` simulates a Ramsey spectrum and extracts the lines,
    marking points with unresolved lines invalid. The ratios depend only on
    the drive direction, so the Ramsey pulses use ``pulse_amplitude`` (G,
    default 4) along that direction: the lines span about 12 MHz and a weak
    pulse would excite only those closest to the carrier.
    """
    from . import dynamics

    phis = np.asarray(phis, dtype=float)
    out = np.zeros((phis.size, 4))
    valid = np.ones(phis.size, dtype=bool)
    opts = {"detuning": 20.0, "duration": 12.0, "step": 0.01, "pulse_amplitude": 4.0}
    opts.update(ramsey_options or {})
    for n, phi in enumerate(phis):
        fv = FieldVector(B, theta, phi)
        eig = diagonalize(build_static_hamiltonian(params, fv))
        table = transition_table(eig)
        lines = transverse_lines(eig)
        rabis = [table.rabi_frequency(i, j, drive.direction, drive.amplitude, params.gamma_e) for i, j in lines]
        if method == "weak":
            out[n] = np.square(rabis)
            continue
        if method != "ramsey":
            raise ValidationError(f"unknown method {method!r}")
        freqs = [table.frequency(i, j) for i, j in lines]
        carrier = float(np.mean(freqs))
        d = drive.replace(amplitude=opts["pulse_amplitude"], frequency=carrier)
        scale = opts["pulse_amplitude"] / drive.amplitude if drive.amplitude > 0 else 0.0
        bright = scale * np.sqrt(np.sum(np.square(rabis)))
        if bright == 0:
            valid[n] = False
            continue
        tp = 1.0 / (4.0 * bright)
        fid = dynamics.ramsey_fid(params, fv, d, opts["detuning"], opts["duration"], opts["step"], tp)
        spec = dynamics.spectrum(fid)
        f, m = spec.positive()
        res = spec.resolution
        for k, nu in enumerate(freqs):
            x = abs(opts["detuning"] + nu - carrier)
            sel = np.abs(f - x) <= 0.25 * res
            out[n, k] = m[sel].max() if sel.any() else 0.0
        apparent = sorted(abs(opts["detuning"] + nu - carrier) for nu in freqs)
        if np.min(np.diff(apparent)) < 2 * res:
            valid[n] = False
    return RatioCurve(phis, out, valid)
