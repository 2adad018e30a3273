import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from nvlac import dynamics as dyn
from nvlac import magnetometry as mag
from nvlac.hamiltonian import DriveField, FieldVector, SpinSystemParams, build_operators, build_static_hamiltonian
from nvlac.levels import diagonalize
from nvlac.transitions import transition_table

PARAMS = SpinSystemParams()
OPS = build_operators()

fields = st.builds(FieldVector, st.floats(0.0, 300.0), st.floats(0.0, np.pi), st.floats(0.0, 2 * np.pi))
drives = st.builds(DriveField, st.floats(0.01, 3.0), st.floats(0.0, np.pi), st.floats(0.0, 2 * np.pi),
                   st.floats(2800.0, 2950.0), st.floats(0.0, 2 * np.pi))
positive = st.floats(1e-3, 1e3)


@settings(max_examples=40, deadline=None)
@given(fields)
def test_hamiltonian_hermitian_with_fixed_trace(field):
    h = build_static_hamiltonian(PARAMS, field)
    assert np.abs(h - h.conj().T).max() < 1e-12 * np.abs(h).max()
    assert abs(np.trace(h).real - 12 * (PARAMS.D + PARAMS.P)) < 1e-8


@settings(max_examples=40, deadline=None)
@given(fields)
def test_eigen_residuals_and_sum_rules(field):
    h = build_static_hamiltonian(PARAMS, field)
    eig = diagonalize(h)
    resid = h @ eig.states - eig.states * eig.energies
    assert np.abs(resid).max() < 1e-9
    a2 = transition_table(eig, OPS).amplitudes ** 2
    for k in range(3):
        assert abs(a2[k].sum() - 12.0) < 1e-9


@settings(max_examples=15, deadline=None)
@given(fields, drives, st.floats(0.0, 0.05), st.floats(0.001, 0.02))
def test_pulse_unitary(field, drive, t0, duration):
    u = dyn.Propagator(build_static_hamiltonian(PARAMS, field), check_convergence=False).pulse(drive, t0, duration)
    assert np.abs(u @ u.conj().T - np.eye(18)).max() < 1e-9


@settings(max_examples=60, deadline=None)
@given(positive, positive, positive, positive, st.floats(1e-6, 1e6))
def test_eta_scale_invariant(i1, i2, i3, i4, scale):
    a = mag.estimate_eta(i1, i2, i3, i4)
    b = mag.estimate_eta(scale * i1, scale * i2, scale * i3, scale * i4)
    assert abs(a.eta - b.eta) < 1e-9
    assert 0.0 <= a.eta <= np.pi / 2


@settings(max_examples=60, deadline=None)
@given(st.floats(0.05, 5.0), st.floats(0.05, 5.0), st.floats(np.radians(5), np.radians(85)),
       st.floats(0.1, 3.0))
def test_amplitudes_linear_in_rabi(r_mw, r_rf, eta, ratio):
    zeta = mag.estimate_zeta(r_mw, r_rf, eta, 0.8, 1.0, ratio)
    assert 0.0 < zeta < np.pi / 2
    a = mag.estimate_amplitudes(r_mw, r_rf, eta, zeta, 0.8, 1.0)
    b = mag.estimate_amplitudes(2 * r_mw, 2 * r_rf, eta, zeta, 0.8, 1.0)
    assert np.allclose(b, 2 * np.asarray(a), rtol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.5, 40.0), st.floats(0.5, 20.0), st.floats(0.2, 2.0))
def test_fid_fit_round_trip(nu, t2, amp):
    t = 0.01 * np.arange(1200)
    fid = dyn.FidTrace(t, amp * np.cos(2 * np.pi * nu * t) * np.exp(-t / t2))
    fit = dyn.fit_fid(fid)
    assert abs(fit.frequency / nu - 1) < 0.01
    assert abs(fit.t2star / t2 - 1) < 0.01
    assert abs(abs(fit.amplitude) / amp - 1) < 0.01
