"""Pure-Python (numpy) implementations of the hot kernels.

These are the reference versions; ``_kernels.pyx`` mirrors them one-to-one
and the test-suite checks both agree.
"""

import numpy as np

TWO_PI = 2.0 * np.pi

# fourth-order triple-jump coefficients
_P = 1.0 / (2.0 - 2.0 ** (1.0 / 3.0))
_Q = 1.0 - 2.0 * _P
_SUBSTEPS = ((_P, 0.5 * _P), (_Q, _P + 0.5 * _Q), (_P, _P + _Q + 0.5 * _P))


def greedy_assign(score):
    """Greedy maximum-score matching of rows to columns.

    Returns ``(perm, best)`` where ``perm[row] = col`` and ``best[row]`` is the
    score of the assigned pair.
    """
    score = np.asarray(score, dtype=float)
    n = score.shape[0]
    order = np.argsort(-score, axis=None, kind="stable")
    perm = np.full(n, -1, dtype=np.intp)
    best = np.zeros(n)
    row_used = np.zeros(n, dtype=bool)
    col_used = np.zeros(n, dtype=bool)
    done = 0
    for flat in order:
        r, c = divmod(int(flat), n)
        if row_used[r] or col_used[c]:
            continue
        perm[r] = c
        best[r] = score[r, c]
        row_used[r] = col_used[c] = True
        done += 1
        if done == n:
            break
    return perm, best


def _strang(u, energies, w, W, Wh, coef, t_mid, h):
    half = np.exp(-1j * TWO_PI * energies * (0.5 * h))
    kick = np.exp(-1j * TWO_PI * coef(t_mid) * w * h)
    u = half[:, None] * u
    u = W @ (kick[:, None] * (Wh @ u))
    return half[:, None] * u


def split_step(u, energies, w, W, frequency, alpha, t0, h):
    """Advance ``u`` by one fourth-order step of length ``h`` starting at ``t0``.

    Everything lives in the eigenbasis of the static Hamiltonian: ``energies``
    are its eigenvalues, ``W diag(w) W^H`` is the drive operator there, and the
    drive envelope is ``cos(2 pi frequency t + alpha)``.
    """
    Wh = W.conj().T

    def coef(t):
        return np.cos(TWO_PI * frequency * t + alpha)

    for a, off in _SUBSTEPS:
        u = _strang(u, energies, w, W, Wh, coef, t0 + off * h, a * h)
    return u


def prefix_propagators(energies, w, W, frequency, alpha, dt, nsteps):
    """Propagators U(k dt, 0) for k = 0..nsteps, shape (nsteps+1, n, n)."""
    n = len(energies)
    out = np.empty((nsteps + 1, n, n), dtype=complex)
    u = np.eye(n, dtype=complex)
    out[0] = u
    for k in range(nsteps):
        u = split_step(u, energies, w, W, frequency, alpha, k * dt, dt)
        out[k + 1] = u
    return out


def lorentz_magnitude(centers, grid, rate):
    """|mean_k 1 / (rate + 2 pi i (grid - centers_k))| on ``grid``.

    The complex line of an exponentially decaying FID summed over an
    inhomogeneous ensemble of centre frequencies; ``rate`` in 1/µs.
    """
    centers = np.asarray(centers, dtype=float)
    grid = np.asarray(grid, dtype=float)
    acc = np.zeros(grid.shape, dtype=complex)
    chunk = max(1, 2_000_000 // max(grid.size, 1))
    for s in range(0, centers.size, chunk):
        c = centers[s:s + chunk]
        acc += (1.0 / (rate + 1j * TWO_PI * (grid[None, :] - c[:, None]))).sum(axis=0)
    return np.abs(acc) / centers.size
