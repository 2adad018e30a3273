"""Compare the compiled kernels with the pure-Python fallback.

Run with ``python3 benchmarks/bench_kernels.py``; prints the median time of
each kernel for both backends and the speed-up.
"""

import argparse
import timeit

import numpy as np

from nvlac import kernels
from nvlac.hamiltonian import DriveField, FieldVector, SpinSystemParams, build_static_hamiltonian, drive_operator


def _cases():
    params = SpinSystemParams()
    h = build_static_hamiltonian(params, FieldVector.from_degrees(28.9, 38.3249, 0.0))
    energies, vecs = np.linalg.eigh(h)
    v = vecs.conj().T @ drive_operator(params, DriveField(2.0, np.pi / 2, np.radians(45.3))) @ vecs
    w, W = np.linalg.eigh(v)
    W = np.ascontiguousarray(W)
    rng = np.random.default_rng(0)
    score = rng.uniform(size=(18, 18))
    centers = rng.normal(scale=0.2, size=500)
    grid = np.linspace(-2.0, 2.0, 2000)
    dt = 1.0 / (64 * 2876.8)
    return {
        "greedy_assign": lambda k: k.greedy_assign(score),
        "prefix_propagators (1000 steps)": lambda k: k.prefix_propagators(energies, w, W, 2876.8, 0.0, dt, 1000),
        "lorentz_magnitude (500 x 2000)": lambda k: k.lorentz_magnitude(centers, grid, 0.18),
    }


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)
    backends = {"python": kernels.get_backend("python")}
    try:
        backends["compiled"] = kernels.get_backend("compiled")
    except ImportError:
        print("compiled extension not available; timing the python backend only")
    print(f"{'kernel':34s} " + " ".join(f"{b:>12s}" for b in backends) + "   speed-up")
    for name, fn in _cases().items():
        times = {}
        for b, mod in backends.items():
            fn(mod)  # warm-up
            times[b] = float(np.median(timeit.repeat(lambda: fn(mod), number=1, repeat=args.repeat)))
        cells = " ".join(f"{1e3 * times[b]:10.2f}ms" for b in backends)
        speed = f"{times['python'] / times['compiled']:8.1f}x" if "compiled" in times else ""
        print(f"{name:34s} {cells} {speed}")


if __name__ == "__main__":
    main()
