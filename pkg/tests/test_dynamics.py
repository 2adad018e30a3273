import numpy as np
import pytest

from nvlac import dynamics as dyn
from nvlac.errors import ConvergenceError, LineExtractionError, ValidationError
from nvlac.hamiltonian import (
    DriveField,
    FieldVector,
    SpinSystemParams,
    basis_state,
    build_static_hamiltonian,
    ms_zero_projector,
)
from nvlac.levels import diagonalize
from nvlac.transitions import transition_table

SQRT3 = np.sqrt(3.0)


def _bare():
    z = np.zeros((3, 3))
    return SpinSystemParams(P=0.0, gamma_n1=0.0, gamma_n2=0.0, A1=z, A2=z)


def _trace(signal_fn, duration=12.0, step=0.01):
    t = step * np.arange(int(round(duration / step)))
    return dyn.FidTrace(t, signal_fn(t))


def _damped(a, nu, t2):
    return lambda t: a * np.cos(2 * np.pi * nu * t) * np.exp(-t / t2)


@pytest.fixture(scope="module")
def lac_spectrum(params, lac_field, lac_line_table):
    """Ramsey spectrum at the LAC with eta = 45.3 deg, bright-state pi/2 pulses."""
    drive = DriveField(2.0, np.pi / 2, np.radians(45.3), 2876.8)
    r1 = dyn.rabi_frequency(params, lac_field, drive, lac_line_table[1][:2])
    r2 = dyn.rabi_frequency(params, lac_field, drive, lac_line_table[2][:2])
    tp = 1.0 / (4.0 * np.hypot(r1, r2))
    fid = dyn.ramsey_fid(params, lac_field, drive, 20.0, 12.0, 0.01, tp)
    return fid, dyn.spectrum(fid)


class TestPropagator:
    def test_zero_drive_exact_phases(self, params, lac_field):
        h = build_static_hamiltonian(params, lac_field)
        prop = dyn.Propagator(h)
        u = prop.pulse(DriveField(0.0, 0.3, 0.2, 2870.0), 0.0, 0.37)
        e, v = np.linalg.eigh(h)
        want = v @ np.diag(np.exp(-2j * np.pi * e * 0.37)) @ v.conj().T
        assert np.abs(u - want).max() < 1e-10

    def test_unitarity(self, params, lac_field):
        prop = dyn.Propagator(build_static_hamiltonian(params, lac_field))
        u = prop.pulse(DriveField(2.0, 1.2, 0.7, 2876.8, 0.4), 0.123, 0.05)
        assert np.abs(u @ u.conj().T - np.eye(18)).max() < 1e-9

    def test_norm_after_many_steps(self, params, lac_field):
        # 0.4 us at 2876.8 MHz and 64 steps per period is ~7e4 steps
        h = build_static_hamiltonian(params, lac_field)
        psi = dyn.evolve(h, dyn.PulseSequence([dyn.Pulse(0.4, DriveField(1.0, 1.0, 0.5, 2876.8))]),
                         basis_state(0, -0.5, 0))
        assert abs(np.linalg.norm(psi) - 1.0) < 1e-9

    def test_pulse_composition(self, params, lac_field):
        prop = dyn.Propagator(build_static_hamiltonian(params, lac_field))
        d = DriveField(1.5, 1.0, 0.3, 2876.8, 0.9)
        whole = prop.pulse_eigen(d, 0.2, 0.05)
        split = prop.pulse_eigen(d, 0.23, 0.02) @ prop.pulse_eigen(d, 0.2, 0.03)
        assert np.abs(whole - split).max() < 1e-8

    def test_matches_direct_integration(self, params, lac_field):
        from scipy.linalg import expm

        h = build_static_hamiltonian(params, lac_field)
        d = DriveField(2.0, 1.1, 0.4, 2876.8, 0.3)
        from nvlac.hamiltonian import drive_operator

        v = drive_operator(params, d)
        T = 0.004
        n = 4000
        dt = T / n
        u = np.eye(18, dtype=complex)
        for k in range(n):
            t = (k + 0.5) * dt
            u = expm(-2j * np.pi * dt * (h + v * np.cos(2 * np.pi * d.frequency * t + d.phase))) @ u
        got = dyn.Propagator(h).pulse(d, 0.0, T)
        assert np.abs(got - u).max() < 1e-4

    def test_resonant_rabi_two_level(self):
        p = _bare()
        f = FieldVector(50.0, 0.0)
        nu = p.D - p.gamma_e * 50.0
        drive = DriveField(0.05, np.pi / 2, 0.0, nu)
        eig = diagonalize(build_static_hamiltonian(p, f))
        table = transition_table(eig)
        zero = int(np.flatnonzero(eig.manifold == 0)[0])
        minus = int(np.flatnonzero(eig.manifold == -1)[0])
        rabi = table.rabi_frequency(zero, minus, drive.direction, drive.amplitude, p.gamma_e)
        assert rabi == pytest.approx(p.gamma_e * 0.05)  # sqrt2 * gamma * B * (1/sqrt2)
        psi0 = basis_state(0, 0.5, 1)
        h = build_static_hamiltonian(p, f)
        prop = dyn.Propagator(h, check_convergence=False)
        p0 = ms_zero_projector()
        times = np.array([0.25, 0.5, 0.75, 1.0]) / rabi
        pops = [np.vdot(u_psi, p0 @ u_psi).real
                for u_psi in (prop.pulse(drive, 0.0, t) @ psi0 for t in times)]
        # two-level rotating-wave oracle: P0 = cos^2(pi * rabi * t)
        want = np.cos(np.pi * rabi * times) ** 2
        assert np.abs(np.array(pops) - want).max() < 0.02

    def test_step_validation_and_convergence_error(self, params, lac_field):
        h = build_static_hamiltonian(params, lac_field)
        with pytest.raises(ValidationError):
            dyn.Propagator(h, steps_per_period=20)
        prop = dyn.Propagator(h, tol=1e-15)
        with pytest.raises(ConvergenceError) as info:
            prop.pulse_eigen(DriveField(2.0, 1.0, 0.3, 2876.8), 0.0, 0.05)
        assert info.value.best.shape == (18, 18)

    def test_sequence_validation(self):
        d = DriveField(1.0, 0.0, 0.0, 10.0)
        with pytest.raises(ValidationError):
            dyn.PulseSequence([dyn.Pulse(-1.0, d)])
        with pytest.raises(ValidationError):
            dyn.PulseSequence([dyn.Pulse(1.0, d)], delays=(1.0, 2.0))
        seq = dyn.PulseSequence.ramsey(d, 0.1, 0.5, 20.0)
        assert seq.total_duration == pytest.approx(0.7)
        assert seq.pulses[1].drive.phase == pytest.approx(-2 * np.pi * 20.0 * 0.5)

    def test_evolve_rejects_unnormalised(self, params, lac_field):
        h = build_static_hamiltonian(params, lac_field)
        with pytest.raises(ValidationError):
            dyn.evolve(h, dyn.PulseSequence([]), 2 * basis_state(0, 0.5, 0))


class TestRamsey:
    def test_two_level_reduction(self):
        p = _bare()
        f = FieldVector(50.0, 0.0)
        nu = p.D - p.gamma_e * 50.0
        offset, nud = -3.0, 20.0
        drive = DriveField(3.0, np.pi / 2, 0.0, nu - offset)
        tp = 1.0 / (4.0 * p.gamma_e * 3.0)
        fid = dyn.ramsey_fid(p, f, drive, nud, 3.0, 0.01, tp)
        assert fid.signal.min() >= 0.0 and fid.signal.max() <= 1.0
        # a + b cos(2 pi (offset + nud) tau + const); the constant phase comes from the finite pulses
        w = 2 * np.pi * (offset + nud) * fid.times
        basis = np.stack([np.ones_like(w), np.cos(w), np.sin(w)], axis=1)
        coef, *_ = np.linalg.lstsq(basis, fid.signal, rcond=None)
        resid = fid.signal - basis @ coef
        assert np.linalg.norm(resid) < 5e-3 * np.linalg.norm(fid.signal - fid.signal.mean())
        assert np.hypot(coef[1], coef[2]) > 0.2
        line = dyn.extract_lines(dyn.spectrum(fid), count=1).lines[0]
        assert line.center == pytest.approx(dyn.apparent_frequency(nu, drive.frequency, nud), abs=1 / 6.0)

    def test_lines_match_transition_table(self, lac_spectrum, lac_line_table):
        fid, spec = lac_spectrum
        assert fid.signal.min() >= 0.0 and fid.signal.max() <= 1.0
        fit = dyn.extract_lines(spec, threshold=0.0)
        tol = 1.0 / (2.0 * fid.duration)
        for k, (i, j, nu, _) in lac_line_table.items():
            want = nu if k == 5 else dyn.apparent_frequency(nu, 2876.8, 20.0)
            assert abs(fit.nearest(want).center - want) < tol

    def test_line_ratio_gives_eta(self, lac_spectrum, lac_line_table):
        _, spec = lac_spectrum
        fit = dyn.extract_lines(spec, threshold=0.0)
        i1 = fit.nearest(dyn.apparent_frequency(lac_line_table[1][2], 2876.8, 20.0)).amplitude
        i2 = fit.nearest(dyn.apparent_frequency(lac_line_table[2][2], 2876.8, 20.0)).amplitude
        assert i1 / i2 == pytest.approx(np.tan(np.radians(45.3)) ** 2, rel=0.05)

    def test_validation(self, params, lac_field):
        d = DriveField(2.0, 1.0, 0.3, 2876.8)
        with pytest.raises(ValidationError):
            dyn.ramsey_fid(params, lac_field, d, 20.0, 0.0, 0.01, 0.03)
        with pytest.raises(ValidationError):
            dyn.FidTrace([0.0, 0.1, 0.3], [0.0, 0.0, 0.0])


class TestSpectrum:
    def test_pure_cosine_peak(self):
        spec = dyn.spectrum(_trace(lambda t: 0.5 + 0.5 * np.cos(2 * np.pi * 5.0 * t)))
        line = dyn.extract_lines(spec, count=1).lines[0]
        assert line.center == pytest.approx(5.0, abs=0.01)

    def test_damped_cosine_fwhm(self):
        t2 = 1.6
        spec = dyn.spectrum(_trace(_damped(1.0, 8.0, t2), duration=24.0))
        line = dyn.extract_lines(spec, count=1).lines[0]
        assert line.fwhm == pytest.approx(SQRT3 / (np.pi * t2), rel=0.05)

    def test_parseval(self):
        fid = _trace(lambda t: np.cos(2 * np.pi * 3.3 * t) * np.exp(-t / 4) + 0.2, duration=6.0)
        spec = dyn.spectrum(fid)
        y = fid.signal - fid.signal.mean()
        lhs = np.sum(y ** 2) * fid.step
        rhs = np.sum(spec.magnitude ** 2) * spec.spacing
        assert abs(lhs - rhs) < 1e-9 * lhs

    def test_grid_spacing(self):
        fid = _trace(lambda t: np.cos(2 * np.pi * 5.0 * t), duration=12.0)
        assert dyn.spectrum(fid, pad=1).spacing == pytest.approx(1.0 / fid.duration)
        spec = dyn.spectrum(fid)
        assert spec.resolution == pytest.approx(1.0 / fid.duration)
        assert spec.spacing == pytest.approx(1.0 / (4 * fid.duration))

    def test_apodization(self):
        fid = _trace(lambda t: np.cos(2 * np.pi * 5.0 * t), duration=12.0)
        plain = dyn.extract_lines(dyn.spectrum(fid), count=1).lines[0]
        apod = dyn.extract_lines(dyn.spectrum(fid, ("exponential", 1.0)), count=1).lines[0]
        assert apod.fwhm > plain.fwhm
        assert apod.center == pytest.approx(5.0, abs=0.01)
        with pytest.raises(ValidationError):
            dyn.spectrum(fid, ("gaussian", 1.0))
        with pytest.raises(ValidationError):
            dyn.spectrum(_trace(np.cos, duration=0.1))

    def test_fwhm_independent_of_padding(self):
        fid = _trace(_damped(1.0, 6.0, 2.0), duration=12.0)
        widths = [dyn.extract_lines(dyn.spectrum(fid, pad=k), count=1).lines[0].fwhm for k in (2, 4, 8)]
        assert np.ptp(widths) / np.mean(widths) < 0.01


class TestExtractLines:
    def test_two_line_synthesis(self):
        sig = lambda t: _damped(1.0, 5.0, 3.0)(t) + _damped(0.5, 9.0, 3.0)(t)
        fit = dyn.extract_lines(dyn.spectrum(_trace(sig, duration=24.0)), count=2)
        assert fit.centers == pytest.approx([5.0, 9.0], abs=0.01)
        assert fit.amplitudes[1] / fit.amplitudes[0] == pytest.approx(0.5, rel=0.01)
        assert all(line.reliable for line in fit.lines)

    def test_overlap_flagged(self):
        sig = lambda t: _damped(1.0, 5.0, 1.0)(t) + _damped(0.8, 5.5, 1.0)(t)
        fit = dyn.extract_lines(dyn.spectrum(_trace(sig)), count=2)
        assert not all(line.reliable for line in fit.lines)


class TestFit:
    def test_round_trip(self):
        fit = dyn.fit_fid(_trace(_damped(1.0, 20.0, 10.5)))
        assert fit.amplitude == pytest.approx(1.0, rel=0.01)
        assert fit.frequency == pytest.approx(20.0, rel=0.01)
        assert fit.t2star == pytest.approx(10.5, rel=0.01)
        lo, hi = fit.t2star_ci
        assert lo <= fit.t2star <= hi

    def test_pure_cosine_rate_consistent_with_zero(self):
        rng = np.random.default_rng(3)
        fid = _trace(lambda t: np.cos(2 * np.pi * 7.0 * t) + rng.normal(0, 0.05, t.size))
        fit = dyn.fit_fid(fid)
        lo, hi = fit.ci["decay_rate"]
        assert lo <= 0.0 <= hi

    def test_short_and_long_t2_distinguished(self):
        rng = np.random.default_rng(5)
        short = _trace(lambda t: _damped(0.3, 20.0, 1.6)(t) + rng.normal(0, 0.02, t.size), duration=3.0)
        long = _trace(lambda t: _damped(0.3, 20.0, 10.5)(t) + rng.normal(0, 0.02, t.size), duration=12.0)
        a, b = dyn.fit_fid(short).t2star_ci, dyn.fit_fid(long).t2star_ci
        assert a[1] < b[0]

    def test_initial_guess_and_failure(self):
        fid = _trace(_damped(1.0, 20.0, 5.0))
        fit = dyn.fit_fid(fid, initial_guess=(0.9, 20.02, 4.0))
        assert fit.t2star == pytest.approx(5.0, rel=1e-3)
        with pytest.raises(ConvergenceError):
            dyn.fit_fid(fid, initial_guess=(0.5, 20.3, 1.0), max_nfev=2)


class TestIsolate:
    def test_two_tone_residual(self):
        one = _damped(1.0, 5.0, 6.0)
        fid = _trace(lambda t: one(t) + _damped(1.0, 11.0, 6.0)(t), duration=24.0)
        iso = dyn.isolate_line(dyn.spectrum(fid), (3.0, 7.0))
        ref = one(fid.times)
        assert np.linalg.norm(iso.signal - ref) / np.linalg.norm(ref) < 0.01

    def test_isolate_then_fit(self):
        fid = _trace(lambda t: 0.5 + 0.4 * _damped(1.0, 17.0, 2.5)(t)
                     + 0.3 * _damped(1.0, 24.0, 4.0)(t), duration=12.0)
        fit = dyn.fit_fid(dyn.isolate_line(dyn.spectrum(fid), (14.0, 20.0)))
        assert fit.frequency == pytest.approx(17.0, rel=0.02)
        assert fit.t2star == pytest.approx(2.5, rel=0.02)

    def test_full_band_identity(self):
        fid = _trace(lambda t: 0.5 + 0.3 * np.cos(2 * np.pi * 4.0 * t) * np.exp(-t / 3), duration=6.0)
        spec = dyn.spectrum(fid)
        iso = dyn.isolate_line(spec, (0.0, np.abs(spec.freqs).max()))
        assert np.abs(iso.signal - fid.signal).max() < 1e-9

    def test_empty_band(self):
        spec = dyn.spectrum(_trace(lambda t: np.cos(2 * np.pi * 4.0 * t)))
        with pytest.raises(LineExtractionError):
            dyn.isolate_line(spec, (1000.0, 1001.0))
