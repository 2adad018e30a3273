"""Quasi-static field noise: Monte-Carlo inhomogeneous linewidths and T2*.

Each noise sample is a static field perturbation (dB, dtheta, dphi). The
transition frequency is recomputed by diagonalization with overlap matching
to the nominal levels; the ensemble line is the magnitude of the mean of
Lorentzians whose width is the orientation-independent floor.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import optimize, special, stats
from scipy.stats import qmc

from . import kernels
from .errors import TrackingError, ValidationError
from .hamiltonian import FieldVector, SpinSystemParams, static_hamiltonians
from .levels import Sweep, diagonalize, match_levels, sweep_levels

SQRT3 = np.sqrt(3.0)
MAX_DISCARD_FRACTION = 0.05


def fwhm_to_t2star(fwhm):
    """T2* (µs) of a damped cosine whose magnitude line has this FWHM (MHz)."""
    return SQRT3 / (np.pi * fwhm)


def t2star_to_fwhm(t2):
    return SQRT3 / (np.pi * t2)


@dataclass(frozen=True)
class NoiseModel:
    """Zero-mean Gaussian field noise with diagonal covariance.

    Samples are drawn as a scrambled Sobol sequence mapped through the normal
    quantile function, so the estimate is deterministic for a given seed.
    """

    sigma_B: float          # G
    sigma_theta: float      # rad
    sigma_phi: float        # rad
    n_samples: int = 500
    floor: float = 0.10     # MHz, residual FWHM
    seed: int = 0

    def __post_init__(self):
        for name in ("sigma_B", "sigma_theta", "sigma_phi"):
            v = float(getattr(self, name))
            if not np.isfinite(v) or v < 0:
                raise ValidationError(f"{name} must be finite and >= 0")
            object.__setattr__(self, name, v)
        if int(self.n_samples) < 100:
            raise ValidationError("n_samples must be >= 100")
        if not self.floor > 0:
            raise ValidationError("residual floor must be > 0")
        object.__setattr__(self, "n_samples", int(self.n_samples))

    @classmethod
    def isotropic(cls, sigma, B, **kw) -> NoiseModel:
        """Equal displacement ``sigma`` (G) along the field and in both angles."""
        if B <= 0:
            raise ValidationError("isotropic model needs B > 0")
        return cls(sigma, sigma / B, sigma / B, **kw)

    @property
    def sigmas(self) -> np.ndarray:
        return np.array([self.sigma_B, self.sigma_theta, self.sigma_phi])

    def scaled(self, factor) -> NoiseModel:
        s = self.sigmas * factor
        return NoiseModel(s[0], s[1], s[2], self.n_samples, self.floor, self.seed)

    def replace(self, **kw) -> NoiseModel:
        d = self.to_dict()
        d.update(kw)
        return NoiseModel(**d)

    def unit_samples(self) -> np.ndarray:
        """(n_samples, 3) standard-normal quasi-random draws."""
        m = int(np.ceil(np.log2(self.n_samples)))
        u = qmc.Sobol(d=3, scramble=True, seed=self.seed).random_base2(m)[: self.n_samples]
        return stats.norm.ppf(np.clip(u, 1e-12, 1 - 1e-12))

    def samples(self) -> np.ndarray:
        return self.unit_samples() * self.sigmas

    def to_dict(self) -> dict:
        return {
            "sigma_B": self.sigma_B,
            "sigma_theta": self.sigma_theta,
            "sigma_phi": self.sigma_phi,
            "n_samples": self.n_samples,
            "floor": self.floor,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class LinewidthResult:
    fwhm: float             # MHz
    t2star: float           # µs
    center: float           # MHz, nominal transition frequency
    spread: float           # MHz, standard deviation of sampled frequencies
    n_used: int
    n_discarded: int
    pair: tuple

    def to_dict(self) -> dict:
        return {
            "fwhm_MHz": self.fwhm,
            "t2star_us": self.t2star,
            "center_MHz": self.center,
            "frequency_std_MHz": self.spread,
            "n_used": self.n_used,
            "n_discarded": self.n_discarded,
            "pair": list(self.pair),
        }


def _cartesian(B, theta, phi):
    st = np.sin(theta)
    return np.stack([B * st * np.cos(phi), B * st * np.sin(phi), B * np.cos(theta)], axis=-1)


def sample_frequencies(params: SpinSystemParams, field: FieldVector, pair, model: NoiseModel):
    """Transition frequency offsets (MHz) over the noise samples.

    Returns ``(offsets, nominal, n_discarded)``; samples whose levels cannot
    be matched to the nominal ones are discarded.
    """
    i, j = int(pair[0]), int(pair[1])
    nominal = diagonalize(static_hamiltonians(params, field.vector))
    nu0 = float(nominal.energies[j] - nominal.energies[i])
    d = model.samples()
    b = _cartesian(field.B + d[:, 0], field.theta + d[:, 1], field.phi + d[:, 2])
    e, v = np.linalg.eigh(static_hamiltonians(params, b))
    out = []
    discarded = 0
    for k in range(len(d)):
        try:
            perm = match_levels(nominal.states, nominal.energies, v[k], e[k])
        except TrackingError:
            discarded += 1
            continue
        out.append(e[k][perm[j]] - e[k][perm[i]] - nu0)
    return np.asarray(out), nu0, discarded


def silverman_bandwidth(offsets) -> float:
    """Gaussian kernel width (MHz) for smoothing the sampled frequency distribution."""
    x = np.asarray(offsets, dtype=float)
    iqr = np.subtract(*np.percentile(x, [75, 25]))
    scale = min(np.std(x), iqr / 1.349) if iqr > 0 else np.std(x)
    return float(0.9 * scale * len(x) ** -0.2)


def magnitude_line(offsets, floor, grid, bandwidth=0.0, chunk=256):
    """|mean_k L_k(nu)| with L_k a Lorentzian of FWHM ``floor`` centred on sample k.

    With ``bandwidth > 0`` each centre is smeared by a Gaussian of that
    standard deviation, which turns L_k into a complex Voigt profile
    evaluated with the Faddeeva function.
    """
    rate = np.pi * floor / SQRT3
    centers = np.asarray(offsets, dtype=float)
    grid = np.asarray(grid, dtype=float)
    if bandwidth <= 0:
        return kernels.lorentz_magnitude(centers, grid, rate)
    s = 2 * np.pi * bandwidth * np.sqrt(2.0)
    acc = np.zeros(grid.size, dtype=complex)
    for k in range(0, centers.size, chunk):
        z = (2 * np.pi * (grid[None, :] - centers[k:k + chunk, None]) + 1j * rate) / s
        acc += np.conj(special.wofz(z)).sum(axis=0)
    return np.abs(acc) * np.sqrt(np.pi) / (s * centers.size)


def line_fwhm(grid, values) -> float:
    """Width between the outermost half-maximum crossings (linear interpolation)."""
    k = int(np.argmax(values))
    half = 0.5 * values[k]
    above = np.nonzero(values >= half)[0]
    lo, hi = above[0], above[-1]
    if lo == 0 or hi == len(values) - 1:
        raise ValidationError("line not contained in the evaluation grid")

    def cross(a, b):
        return grid[a] + (half - values[a]) * (grid[b] - grid[a]) / (values[b] - values[a])

    return float(cross(hi, hi + 1) - cross(lo - 1, lo))


def inhomogeneous_linewidth(params: SpinSystemParams, field: FieldVector, transition,
                            model: NoiseModel) -> LinewidthResult:
    """Monte-Carlo FWHM and T2* of ``transition`` (ascending level indices at ``field``)."""
    offsets, nu0, discarded = sample_frequencies(params, field, transition, model)
    if discarded > MAX_DISCARD_FRACTION * model.n_samples:
        raise TrackingError(
            f"{discarded} of {model.n_samples} noise samples could not be tracked "
            f"(limit {MAX_DISCARD_FRACTION:.0%})")
    spread = float(np.std(offsets))
    lo = offsets.min() - 15 * model.floor
    hi = offsets.max() + 15 * model.floor
    step = min(model.floor, max(spread, 1e-3 * model.floor)) / 40.0
    n = int(min(max(np.ceil((hi - lo) / step), 400), 40000))
    grid = np.linspace(lo, hi, n)
    fwhm = line_fwhm(grid, magnitude_line(offsets, model.floor, grid, silverman_bandwidth(offsets)))
    return LinewidthResult(fwhm, float(fwhm_to_t2star(fwhm)), nu0, spread, len(offsets), discarded,
                           (int(transition[0]), int(transition[1])))


def calibrate_noise(params, field, transition, target_fwhm=0.7, shape: NoiseModel = None) -> NoiseModel:
    """Scale ``shape`` (default isotropic, unit sigma) so the line has ``target_fwhm``."""
    shape = shape or NoiseModel.isotropic(1e-3, field.B)
    if target_fwhm <= shape.floor:
        raise ValidationError("target FWHM must exceed the residual floor")

    def err(logk):
        return inhomogeneous_linewidth(params, field, transition, shape.scaled(np.exp(logk))).fwhm - target_fwhm

    lo, hi = -10.0, 10.0
    while err(lo) > 0:
        lo -= 5.0
    while err(hi) < 0:
        hi += 5.0
        if hi > 40:
            raise ValidationError("could not reach the target linewidth")
    logk = optimize.brentq(err, lo, hi, xtol=1e-10, rtol=1e-10)
    return shape.scaled(np.exp(logk))


@dataclass(frozen=True)
class LinewidthCurve:
    theta: np.ndarray       # rad
    fwhm: np.ndarray        # MHz
    pairs: tuple
    minimum: float          # rad, parabolic refinement of the grid minimum
    minimum_fwhm: float

    @property
    def t2star(self):
        return fwhm_to_t2star(self.fwhm)

    def region_below(self, factor=2.0):
        """(min, max) theta (rad) of grid points with FWHM < factor * minimum FWHM.

        The refined minimum itself always belongs to the region.
        """
        sel = self.fwhm < factor * self.minimum_fwhm
        pts = np.append(self.theta[sel], self.minimum)
        return float(pts.min()), float(pts.max())


def _parabolic_min(x, y, k):
    if k == 0 or k == len(x) - 1:
        return float(x[k]), float(y[k])
    x0, x1, x2 = x[k - 1:k + 2]
    y0, y1, y2 = y[k - 1:k + 2]
    denom = (x0 - x1) * (x0 - x2) * (x1 - x2)
    a = (x2 * (y1 - y0) + x1 * (y0 - y2) + x0 * (y2 - y1)) / denom
    b = (x2 * x2 * (y0 - y1) + x1 * x1 * (y2 - y0) + x0 * x0 * (y1 - y2)) / denom
    if a <= 0:
        return float(x1), float(y1)
    xm = -b / (2 * a)
    c = y1 - a * x1 * x1 - b * x1
    return float(xm), float(a * xm * xm + b * xm + c)


def track_pair(params, template: FieldVector, thetas, transition, step=np.radians(0.02)):
    """Ascending indices of ``transition`` (given at ``template.theta``) at each theta."""
    thetas = np.asarray(thetas, dtype=float)
    lo = min(thetas.min(), template.theta)
    hi = max(thetas.max(), template.theta)
    dense = np.union1d(np.union1d(np.arange(lo, hi, step), thetas), [hi, template.theta])
    res = sweep_levels(params, template, Sweep("theta", dense))
    ref = int(np.argmin(np.abs(dense - template.theta)))
    inv = np.argsort(res.order[ref])
    labels = (int(inv[transition[0]]), int(inv[transition[1]]))
    out = []
    for t in thetas:
        k = int(np.argmin(np.abs(dense - t)))
        a, b = int(res.order[k][labels[0]]), int(res.order[k][labels[1]])
        out.append((min(a, b), max(a, b)))
    return out


def linewidth_scan(params: SpinSystemParams, template: FieldVector, thetas, transition,
                   model: NoiseModel, refine=True, xtol=np.radians(1e-3)) -> LinewidthCurve:
    """FWHM versus theta for a transition tracked from ``template.theta``.

    The minimum location is refined by bounded scalar minimisation between
    the grid neighbours of the smallest grid value (``refine=False`` uses a
    parabola through the three grid points instead).
    """
    thetas = np.asarray(thetas, dtype=float)
    if thetas.ndim != 1 or thetas.size < 3 or np.any(np.diff(thetas) <= 0):
        raise ValidationError("theta grid must be strictly increasing with >= 3 points")
    pairs = track_pair(params, template, thetas, transition)
    fwhm = np.array([
        inhomogeneous_linewidth(params, template.replace(theta=t), pr, model).fwhm
        for t, pr in zip(thetas, pairs)
    ])
    k = int(np.argmin(fwhm))
    if refine and 0 < k < len(thetas) - 1:
        def width(t):
            return inhomogeneous_linewidth(params, template.replace(theta=t), pairs[k], model).fwhm

        res = optimize.minimize_scalar(width, bounds=(thetas[k - 1], thetas[k + 1]), method="bounded",
                                       options={"xatol": xtol})
        xm, ym = float(res.x), float(res.fun)
    else:
        xm, ym = _parabolic_min(thetas, fwhm, k)
    return LinewidthCurve(thetas, fwhm, tuple(pairs), xm, min(ym, float(fwhm[k])))


def ensemble_fid(params: SpinSystemParams, field: FieldVector, transition, model: NoiseModel,
                 duration, step, detuning=0.0):
    """Noise-averaged two-level FID of ``transition`` as an m_s = 0 population.

    signal = (1 + mean_k cos(2 pi (nu_d + d_k) t) e^(-g t)) / 2, where ``g``
    is the decay rate whose magnitude line has the floor FWHM.
    """
    from .dynamics import FidTrace

    offsets, _, _ = sample_frequencies(params, field, transition, model)
    t = step * np.arange(int(round(duration / step)))
    rate = np.pi * model.floor / SQRT3
    sig = np.cos(2 * np.pi * (detuning + offsets[:, None]) * t[None, :]).mean(axis=0) * np.exp(-rate * t)
    return FidTrace(t, 0.5 * (1.0 + sig), detuning)
