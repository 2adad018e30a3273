import os
import subprocess
import sys

import numpy as np
import pytest

from nvlac import kernels

py = kernels.get_backend("python")
try:
    cy = kernels.get_backend("compiled")
except ImportError:  # pragma: no cover - depends on build
    cy = None

needs_compiled = pytest.mark.skipif(cy is None, reason="compiled extension not built")


def _drive(rng, n=18):
    energies = np.sort(rng.uniform(-10, 3000, n))
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    w, W = np.linalg.eigh(a + a.conj().T)
    return energies, w, np.ascontiguousarray(W)


@needs_compiled
class TestEquivalence:
    def test_greedy_assign(self, rng):
        for _ in range(5):
            score = rng.uniform(size=(18, 18))
            p1, b1 = py.greedy_assign(score)
            p2, b2 = cy.greedy_assign(score)
            assert np.array_equal(p1, p2) and np.allclose(b1, b2)
            assert sorted(p1) == list(range(18))

    def test_split_step(self, rng):
        energies, w, W = _drive(rng)
        u0 = np.linalg.qr(rng.normal(size=(18, 18)) + 1j * rng.normal(size=(18, 18)))[0]
        a = py.split_step(u0.copy(), energies, w, W, 2876.8, 0.3, 0.01, 1e-5)
        b = cy.split_step(u0.copy(), energies, w, W, 2876.8, 0.3, 0.01, 1e-5)
        assert np.abs(a - b).max() < 1e-12

    def test_prefix_propagators(self, rng):
        energies, w, W = _drive(rng)
        a = py.prefix_propagators(energies, w, W, 2876.8, 0.0, 5e-6, 40)
        b = cy.prefix_propagators(energies, w, W, 2876.8, 0.0, 5e-6, 40)
        assert a.shape == b.shape == (41, 18, 18)
        assert np.abs(a - b).max() < 1e-11
        assert np.abs(a[-1] @ a[-1].conj().T - np.eye(18)).max() < 1e-9

    def test_lorentz_magnitude(self, rng):
        centers = rng.normal(scale=0.3, size=300)
        grid = np.linspace(-2, 2, 501)
        assert np.allclose(py.lorentz_magnitude(centers, grid, 0.5),
                           cy.lorentz_magnitude(centers, grid, 0.5), rtol=1e-12, atol=0)


def test_single_lorentzian_closed_form():
    grid = np.linspace(-1, 1, 5)
    got = py.lorentz_magnitude([0.0], grid, 0.7)
    assert np.allclose(got, 1.0 / np.abs(0.7 + 2j * np.pi * grid))


def test_unknown_backend():
    with pytest.raises(ValueError):
        kernels.get_backend("fortran")


def test_environment_forces_pure_python():
    env = dict(os.environ, NVLAC_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "import nvlac; print(nvlac.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
