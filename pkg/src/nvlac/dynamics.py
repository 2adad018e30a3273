"""Lab-frame spin dynamics, Ramsey FIDs, spectra, line extraction and FID fits.

Pulses are integrated in the eigenbasis of the static Hamiltonian with a
fourth-order splitting step of at most 1/50 of a carrier period. Because the
drive is periodic, only one carrier period is ever integrated explicitly:
whole periods are applied as powers of the one-period propagator and a pulse
with carrier phase offset ``alpha`` is the time-shifted conjugate of the
zero-phase propagator.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, stats

from . import kernels
from .errors import ConvergenceError, LineExtractionError, ValidationError
from .hamiltonian import (
    DIM,
    GAMMA_E,
    TWO_PI,
    DriveField,
    FieldVector,
    SpinSystemParams,
    build_operators,
    build_static_hamiltonian,
    drive_operator,
    ms_zero_projector,
)

MIN_STEPS_PER_PERIOD = 50
DEFAULT_STEPS_PER_PERIOD = 64
CONVERGENCE_TOL = 1e-6


@dataclass(frozen=True)
class Pulse:
    duration: float  # µs
    drive: DriveField


@dataclass(frozen=True)
class PulseSequence:
    """Rectangular pulses separated by free evolution.

    ``delays[k]`` is the free interval after ``pulses[k]``; the readout
    projector defaults to the m_s = 0 subspace.
    """

    pulses: tuple
    delays: tuple = ()
    readout: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "pulses", tuple(self.pulses))
        object.__setattr__(self, "delays", tuple(float(d) for d in self.delays))
        if len(self.delays) > len(self.pulses):
            raise ValidationError("more delays than pulses")
        if any(p.duration < 0 for p in self.pulses) or any(d < 0 for d in self.delays):
            raise ValidationError("durations and delays must be >= 0")
        if self.readout is None:
            object.__setattr__(self, "readout", ms_zero_projector())

    @classmethod
    def ramsey(cls, drive: DriveField, pulse_duration: float, tau: float, detuning: float) -> PulseSequence:
        """pi/2 - tau - pi/2 with the second pulse phase advanced by -2 pi detuning tau."""
        second = drive.replace(phase=drive.phase - TWO_PI * detuning * tau)
        return cls((Pulse(pulse_duration, drive), Pulse(pulse_duration, second)), (tau,))

    @property
    def total_duration(self) -> float:
        return sum(p.duration for p in self.pulses) + sum(self.delays)


def mixed_ms0_state() -> np.ndarray:
    """Density matrix: electron in m_s = 0, nuclear spins unpolarised."""
    return ms_zero_projector() / 6.0


class Propagator:
    """Propagators of ``h_static + drive(t)`` for rectangular cosine pulses."""

    def __init__(self, h_static, gamma_e=GAMMA_E, steps_per_period=DEFAULT_STEPS_PER_PERIOD,
                 check_convergence=True, tol=CONVERGENCE_TOL):
        if steps_per_period < MIN_STEPS_PER_PERIOD:
            raise ValidationError(f"need at least {MIN_STEPS_PER_PERIOD} steps per carrier period")
        h = np.asarray(h_static, dtype=complex)
        if np.abs(h - h.conj().T).max() > 1e-10 * max(np.abs(h).max(), 1.0):
            raise ValidationError("static Hamiltonian is not Hermitian")
        self.energies, self.basis = np.linalg.eigh(h)
        self.gamma_e = gamma_e
        self.steps = int(steps_per_period)
        self.check_convergence = check_convergence
        self.tol = tol
        self._cache = {}

    # --- basis helpers -------------------------------------------------
    def to_eigen(self, op):
        return self.basis.conj().T @ op @ self.basis

    def from_eigen(self, op):
        return self.basis @ op @ self.basis.conj().T

    def free_eigen(self, t):
        return np.exp(-1j * TWO_PI * self.energies * t)

    def free(self, t) -> np.ndarray:
        """Exact free-evolution propagator in the product basis."""
        return self.from_eigen(np.diag(self.free_eigen(t)))

    # --- pulses --------------------------------------------------------
    def _drive_data(self, drive: DriveField, steps):
        key = (drive.amplitude, drive.zeta, drive.eta, drive.frequency, steps)
        if key not in self._cache:
            v = self.to_eigen(_drive_op(self.gamma_e, drive))
            w, W = np.linalg.eigh(0.5 * (v + v.conj().T))
            period = 1.0 / drive.frequency
            dt = period / steps
            prefix = kernels.prefix_propagators(self.energies, w, W, drive.frequency, 0.0, dt, steps)
            self._cache[key] = (w, W, dt, prefix, {})
        return self._cache[key]

    def _from_zero(self, data, drive, t):
        """U_0(t, 0) for the zero-phase drive, t >= 0 (eigenbasis)."""
        w, W, dt, prefix, powers = data
        steps = prefix.shape[0] - 1
        period = dt * steps
        n = int(np.floor(t / period))
        r = t - n * period
        m = min(int(np.floor(r / dt)), steps - 1)
        part = kernels.split_step(prefix[m], self.energies, w, W, drive.frequency, 0.0, m * dt, r - m * dt)
        if n == 0:
            return part
        if n not in powers:
            powers[n] = np.linalg.matrix_power(prefix[-1], n)
        return part @ powers[n]

    def _pulse_eigen(self, drive: DriveField, t_start, duration, steps):
        if drive.amplitude == 0.0 or duration == 0.0:
            return np.diag(self.free_eigen(duration))
        if drive.frequency <= 0.0:
            v = self.to_eigen(_drive_op(self.gamma_e, drive)) * np.cos(drive.phase)
            e, q = np.linalg.eigh(np.diag(self.energies) + v)
            return (q * np.exp(-1j * TWO_PI * e * duration)) @ q.conj().T
        data = self._drive_data(drive, steps)
        alpha = (TWO_PI * drive.frequency * t_start + drive.phase) % TWO_PI
        shift = alpha / (TWO_PI * drive.frequency)
        u_end = self._from_zero(data, drive, shift + duration)
        u_start = self._from_zero(data, drive, shift)
        return u_end @ u_start.conj().T

    def pulse_eigen(self, drive: DriveField, t_start, duration):
        """Pulse propagator in the eigenbasis; carrier phase referenced to absolute time."""
        u = self._pulse_eigen(drive, t_start, duration, self.steps)
        if self.check_convergence and drive.amplitude > 0 and duration > 0 and drive.frequency > 0:
            u2 = self._pulse_eigen(drive, t_start, duration, 2 * self.steps)
            err = np.abs(u2 - u).max()
            if err > self.tol:
                raise ConvergenceError(
                    f"halving the time step changed the pulse propagator by {err:.2e} > {self.tol:.0e}",
                    best=u2,
                )
            u = u2
        return u

    def pulse(self, drive: DriveField, t_start, duration) -> np.ndarray:
        return self.from_eigen(self.pulse_eigen(drive, t_start, duration))

    def sequence_eigen(self, seq: PulseSequence, t_start=0.0):
        u = np.eye(DIM, dtype=complex)
        t = t_start
        for k, p in enumerate(seq.pulses):
            u = self.pulse_eigen(p.drive, t, p.duration) @ u
            t += p.duration
            if k < len(seq.delays):
                u = self.free_eigen(seq.delays[k])[:, None] * u
                t += seq.delays[k]
        return u


def _drive_op(gamma_e, drive):
    return drive_operator(SpinSystemParams(gamma_e=gamma_e), drive)


def evolve(h_static, sequence: PulseSequence, initial_state, gamma_e=GAMMA_E, **kw):
    """Propagate a state vector or density matrix through ``sequence``."""
    state = np.asarray(initial_state, dtype=complex)
    if state.ndim == 1:
        norm = np.linalg.norm(state)
        if abs(norm - 1.0) > 1e-9:
            raise ValidationError(f"initial state not normalised (|psi| = {norm})")
    elif abs(np.trace(state).real - 1.0) > 1e-9:
        raise ValidationError("initial density matrix must have unit trace")
    prop = Propagator(h_static, gamma_e=gamma_e, **kw)
    u = prop.from_eigen(prop.sequence_eigen(sequence))
    if state.ndim == 1:
        return u @ state
    return u @ state @ u.conj().T


def rabi_frequency(params: SpinSystemParams, field: FieldVector, drive: DriveField, pair) -> float:
    """Rabi frequency (MHz) of ``drive`` on the level pair (ascending indices)."""
    from .levels import diagonalize
    from .transitions import transition_table

    eig = diagonalize(build_static_hamiltonian(params, field))
    table = transition_table(eig)
    return table.rabi_frequency(pair[0], pair[1], drive.direction, drive.amplitude, params.gamma_e)


def pi_half_duration(params, field, drive, pair, flip=np.pi / 2) -> float:
    """Pulse length for a ``flip`` rotation of the targeted transition, 1/(4 Rabi) for pi/2."""
    rabi = rabi_frequency(params, field, drive, pair)
    if rabi <= 0:
        raise ValidationError("drive does not couple the targeted transition")
    return flip / (TWO_PI * rabi)


# --------------------------------------------------------------------------
# FIDs and spectra


@dataclass(frozen=True)
class FidTrace:
    """Uniformly sampled FID; ``signal`` is the m_s = 0 population for simulations."""

    times: np.ndarray
    signal: np.ndarray
    detuning: float = 0.0

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        s = np.asarray(self.signal)
        if t.ndim != 1 or s.shape != t.shape:
            raise ValidationError("times and signal must be 1-D arrays of equal length")
        if t.size >= 2:
            d = np.diff(t)
            if np.abs(d - d[0]).max() > 1e-9 * max(abs(d[0]), 1e-12) + 1e-12:
                raise ValidationError("FID must be uniformly sampled")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "signal", s)

    @property
    def step(self) -> float:
        return float(self.times[1] - self.times[0])

    @property
    def duration(self) -> float:
        return self.step * len(self.times)


def ramsey_fid(params: SpinSystemParams, field: FieldVector, drive: DriveField, detuning: float,
               duration: float, step: float, pulse_duration: float, initial_state=None,
               steps_per_period=DEFAULT_STEPS_PER_PERIOD, check_convergence=True) -> FidTrace:
    """Simulate the Ramsey FID for delays ``tau = 0, step, ..., < duration``.

    The second pulse carries the phase ``-2 pi detuning tau``; the signal is
    the m_s = 0 population after the second pulse. ``initial_state`` (vector
    or density matrix) defaults to m_s = 0 with unpolarised nuclei.
    """
    if step <= 0 or duration <= 0:
        raise ValidationError("duration and step must be positive")
    n = int(round(duration / step))
    if n < 2:
        raise ValidationError("FID needs at least two samples")
    taus = step * np.arange(n)
    prop = Propagator(build_static_hamiltonian(params, field), gamma_e=params.gamma_e,
                      steps_per_period=steps_per_period, check_convergence=check_convergence)
    rho0 = mixed_ms0_state() if initial_state is None else np.asarray(initial_state, dtype=complex)
    if rho0.ndim == 1:
        rho0 = np.outer(rho0, rho0.conj())
    rho0 = prop.to_eigen(rho0)
    readout = prop.to_eigen(ms_zero_projector())
    u1 = prop.pulse_eigen(drive, 0.0, pulse_duration)
    rho1 = u1 @ rho0 @ u1.conj().T
    de = prop.energies[:, None] - prop.energies[None, :]
    signal = np.empty(n)
    for k, tau in enumerate(taus):
        rho = rho1 * np.exp(-1j * TWO_PI * de * tau)
        second = drive.replace(phase=drive.phase - TWO_PI * detuning * tau)
        u2 = prop.pulse_eigen(second, pulse_duration + tau, pulse_duration)
        rho = u2 @ rho @ u2.conj().T
        signal[k] = np.real(np.einsum("ij,ji->", readout, rho))
    return FidTrace(taus, np.clip(signal, 0.0, 1.0), detuning)


def apparent_frequency(transition_frequency, carrier, detuning):
    """Frequency at which a single-quantum line appears in the Ramsey spectrum."""
    return np.abs(detuning + (np.asarray(transition_frequency) - carrier))


@dataclass(frozen=True)
class Spectrum:
    """Two-sided spectrum of a mean-removed, optionally apodised, zero-padded FID.

    ``values = dt * DFT``; ``freqs`` are in MHz (fftshift order).
    """

    freqs: np.ndarray
    values: np.ndarray
    step: float
    n_samples: int
    mean: float
    window: np.ndarray = field(repr=False)
    apodization: tuple = ("none", 0.0)
    detuning: float = 0.0
    trace: np.ndarray = field(default=None, repr=False)  # mean-removed, windowed samples

    def evaluate(self, freqs) -> np.ndarray:
        """Exact transform ``dt * sum_n y_n exp(-2 pi i f n dt)`` at arbitrary frequencies (MHz)."""
        if self.trace is None:
            raise LineExtractionError("spectrum carries no trace for exact evaluation")
        f = np.atleast_1d(np.asarray(freqs, dtype=float))
        t = self.step * np.arange(len(self.trace))
        return self.step * np.exp(-1j * TWO_PI * np.outer(f, t)) @ self.trace

    @property
    def magnitude(self) -> np.ndarray:
        return np.abs(self.values)

    @property
    def spacing(self) -> float:
        return float(self.freqs[1] - self.freqs[0])

    @property
    def resolution(self) -> float:
        return 1.0 / (self.step * self.n_samples)

    def positive(self):
        sel = self.freqs >= 0
        return self.freqs[sel], self.magnitude[sel]


def spectrum(fid: FidTrace, apodization=None, pad=4) -> Spectrum:
    """Fourier transform with mean removal and ``pad``-fold zero padding.

    ``apodization`` is ``None``/``"none"`` or ``("exponential", rate)`` with
    rate in 1/µs.
    """
    x = np.asarray(fid.signal)
    if x.size < 16:
        raise ValidationError("spectrum needs at least 16 samples")
    mean = float(np.real(np.mean(x)))
    if apodization in (None, "none"):
        apod = ("none", 0.0)
        window = np.ones(x.size)
    else:
        kind, rate = apodization
        if kind != "exponential" or rate < 0:
            raise ValidationError(f"unsupported apodization {apodization!r}")
        apod = ("exponential", float(rate))
        window = np.exp(-rate * (fid.times - fid.times[0]))
    y = (x - mean) * window
    npad = int(pad) * x.size
    vals = fid.step * np.fft.fft(y, n=npad)
    freqs = np.fft.fftfreq(npad, d=fid.step)
    return Spectrum(np.fft.fftshift(freqs), np.fft.fftshift(vals), fid.step, x.size, mean,
                    window, apod, fid.detuning, np.real_if_close(y))


@dataclass(frozen=True)
class SpectralLine:
    center: float      # MHz
    amplitude: float   # interpolated peak magnitude
    fwhm: float        # MHz
    reliable: bool = True


@dataclass(frozen=True)
class LineFit:
    lines: tuple

    @property
    def centers(self):
        return np.array([l.center for l in self.lines])

    @property
    def amplitudes(self):
        return np.array([l.amplitude for l in self.lines])

    @property
    def fwhms(self):
        return np.array([l.fwhm for l in self.lines])

    def nearest(self, frequency) -> SpectralLine:
        if not self.lines:
            raise LineExtractionError("no lines extracted")
        return min(self.lines, key=lambda l: abs(l.center - frequency))


SIDELOBE = 0.25  # just above the first sinc sidelobe (0.217)


def _half_crossing(f, m, k, half, direction):
    """Grid bracket (inside, outside) of the half-maximum crossing walking from peak k."""
    j = k
    while 0 <= j + direction < len(m):
        nxt = j + direction
        if m[nxt] <= half:
            return (j, nxt), True
        if m[nxt] > m[j] and j != k:
            return (j, j), False  # rose again before reaching half maximum
        j = nxt
    return (j, j), False


def _refine_line(spec, f, m, k):
    """Centre and height of the peak at grid index k, with its FWHM.

    With the trace available, the peak is maximised and the half-maximum
    crossings are root-found on the exact transform, so the result does not
    depend on the zero-padding factor. Otherwise a parabola through the top
    three samples and linear interpolation of the crossings are used.
    """
    df = f[1] - f[0]
    y0, y1, y2 = m[k - 1], m[k], m[k + 1]
    denom = y0 - 2 * y1 + y2
    off = 0.5 * (y0 - y2) / denom if denom != 0 else 0.0
    center = f[k] + off * df
    height = y1 - 0.25 * (y0 - y2) * off
    exact = spec.trace is not None

    def mag(x):
        return float(np.abs(spec.evaluate(x))[0])

    if exact:
        res = optimize.minimize_scalar(lambda x: -mag(x), bounds=(f[k - 1], f[k + 1]), method="bounded",
                                       options={"xatol": 1e-9 * max(abs(f[k]), 1.0)})
        if -res.fun >= y1:
            center, height = float(res.x), float(-res.fun)
    half = 0.5 * height
    edges = []
    ok = True
    for direction in (-1, 1):
        (j, nxt), found = _half_crossing(f, m, k, half, direction)
        ok &= found
        if not found:
            edges.append(f[j])
        elif exact and mag(f[j]) > half >= mag(f[nxt]):
            lo, hi = sorted((f[j], f[nxt]))
            edges.append(optimize.brentq(lambda x: mag(x) - half, lo, hi, xtol=1e-12))
        else:
            x0, x1, v0, v1 = f[j], f[nxt], m[j], m[nxt]
            edges.append(x0 + (half - v0) * (x1 - x0) / (v1 - v0))
    return float(center), float(height), float(edges[1] - edges[0]), ok


def extract_lines(spec: Spectrum, count=None, threshold=0.05, fmin=None, fmax=None) -> LineFit:
    """Pick peaks of the positive-frequency magnitude spectrum.

    Keeps the ``count`` largest peaks, or all peaks above ``threshold`` times
    the largest one. Lines closer than twice the larger width are flagged
    unreliable, as are lines whose half-maximum is not reached on both sides.
    Neighbours weaker than ``SIDELOBE`` times a line are ignored for the
    overlap test, which keeps rectangular-window sidelobes from flagging it.
    """
    f, m = spec.positive()
    sel = np.ones_like(f, dtype=bool)
    if fmin is not None:
        sel &= f >= fmin
    if fmax is not None:
        sel &= f <= fmax
    f, m = f[sel], m[sel]
    if f.size < 3:
        raise LineExtractionError("frequency window too narrow")
    peaks = [k for k in range(1, len(m) - 1) if m[k] >= m[k - 1] and m[k] > m[k + 1]]
    if not peaks:
        raise LineExtractionError("no peaks found")
    peaks.sort(key=lambda k: -m[k])
    top = m[peaks[0]]
    if count is not None:
        peaks = peaks[:count]
    else:
        peaks = [k for k in peaks if m[k] >= threshold * top]
    lines = [SpectralLine(*_refine_line(spec, f, m, k)) for k in sorted(peaks)]
    out = []
    for n, line in enumerate(lines):
        ok = line.reliable
        for other in lines[:n] + lines[n + 1:]:
            if other.amplitude < SIDELOBE * line.amplitude:
                continue  # truncation sidelobes and weak neighbours do not displace the line
            if abs(other.center - line.center) < 2 * max(line.fwhm, other.fwhm):
                ok = False
        out.append(SpectralLine(line.center, line.amplitude, line.fwhm, ok))
    return LineFit(tuple(out))


def isolate_line(spec: Spectrum, band) -> FidTrace:
    """Band-pass one spectral line and transform back to a single-line FID.

    The mean-removed trace is recovered from the spectrum and extended
    evenly about t = 0 and about its last sample before filtering, so the
    truncation edges carry no step and the band edges leak only weakly.
    Both +f and -f components inside ``band`` are kept so the result is real.
    """
    lo, hi = float(min(band)), float(max(band))
    af = np.abs(spec.freqs)
    mask = (af >= lo) & (af <= hi)
    if not mask.any():
        raise LineExtractionError(f"band {band} contains no spectral points")
    if lo > 0 and spec.magnitude[mask].max() <= 1e-12 * max(spec.magnitude.max(), 1e-300):
        raise LineExtractionError(f"band {band} contains no signal")
    n = spec.n_samples
    y = np.real(np.fft.ifft(np.fft.ifftshift(spec.values))[:n]) / spec.step
    ext = np.concatenate([y, y[-2:0:-1]])
    fe = np.abs(np.fft.fftfreq(ext.size, d=spec.step))
    keep = (fe >= lo) & (fe <= hi)
    out = np.real(np.fft.ifft(np.fft.fft(ext) * keep))[:n] / spec.window
    if lo <= 0.0:
        out = out + spec.mean
    times = spec.step * np.arange(n)
    return FidTrace(times, out, spec.detuning)


# --------------------------------------------------------------------------
# FID fitting


@dataclass(frozen=True)
class FidFit:
    """Fit of ``a cos(2 pi nu t) exp(-t/T2*)`` with 95 % confidence intervals."""

    amplitude: float
    frequency: float
    decay_rate: float
    ci: dict
    residual_norm: float
    converged: bool = True

    @property
    def t2star(self) -> float:
        return 1.0 / self.decay_rate if self.decay_rate > 0 else np.inf

    @property
    def t2star_ci(self):
        lo, hi = self.ci["decay_rate"]
        return (1.0 / hi if hi > 0 else np.inf, 1.0 / lo if lo > 0 else np.inf)

    def to_dict(self) -> dict:
        return {
            "amplitude": self.amplitude,
            "frequency_MHz": self.frequency,
            "decay_rate_per_us": self.decay_rate,
            "t2star_us": self.t2star if np.isfinite(self.t2star) else None,
            "ci95": {k: list(v) for k, v in self.ci.items()},
            "t2star_ci95_us": [x if np.isfinite(x) else None for x in self.t2star_ci],
            "residual_norm": self.residual_norm,
        }


def damped_cosine(t, a, nu, rate):
    return a * np.cos(TWO_PI * nu * t) * np.exp(-rate * t)


def _guess(fid: FidTrace):
    t, y = fid.times, np.real(fid.signal)
    spec = spectrum(FidTrace(t, y), pad=8)
    f, m = spec.positive()
    k = int(np.argmax(m))
    nu = f[k]
    a = y[0] if abs(y[0]) > 0 else np.abs(y).max()
    rate = 1.0 / max(fid.duration, 1e-12)
    return np.array([a, nu, rate])


def fit_fid(fid: FidTrace, initial_guess=None, max_nfev=2000) -> FidFit:
    """Nonlinear least squares for (a, nu, 1/T2*) with Jacobian-based intervals."""
    t = fid.times
    y = np.real(fid.signal)
    p0 = np.asarray(initial_guess if initial_guess is not None else _guess(fid), dtype=float)
    if len(p0) == 3 and initial_guess is not None:
        a, nu, t2 = p0
        p0 = np.array([a, nu, 1.0 / t2 if np.isfinite(t2) and t2 > 0 else 0.0])

    def resid(p):
        return damped_cosine(t, *p) - y

    def jac(p):
        a, nu, rate = p
        env = np.exp(-rate * t)
        c = np.cos(TWO_PI * nu * t)
        s = np.sin(TWO_PI * nu * t)
        return np.stack([c * env, -a * TWO_PI * t * s * env, -a * t * c * env], axis=1)

    res = optimize.least_squares(resid, p0, jac=jac, method="lm", max_nfev=max_nfev,
                                 xtol=1e-12, ftol=1e-12, gtol=1e-12)
    p = res.x
    if not res.success:
        raise ConvergenceError(f"FID fit did not converge: {res.message}", best=p)
    dof = max(len(y) - 3, 1)
    s2 = float(res.fun @ res.fun) / dof
    J = res.jac
    try:
        cov = np.linalg.inv(J.T @ J) * s2
    except np.linalg.LinAlgError:
        cov = np.linalg.pinv(J.T @ J) * s2
    q = stats.t.ppf(0.975, dof)
    err = q * np.sqrt(np.clip(np.diag(cov), 0, None))
    names = ("amplitude", "frequency", "decay_rate")
    ci = {n: (float(v - e), float(v + e)) for n, v, e in zip(names, p, err)}
    return FidFit(float(p[0]), float(p[1]), float(p[2]), ci, float(np.linalg.norm(res.fun)))


def ensemble_operators():
    """Convenience: (operators, m_s=0 projector) pair for custom readouts."""
    return build_operators(), ms_zero_projector()
