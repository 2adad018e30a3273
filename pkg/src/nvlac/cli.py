"""Command-line frontend: ``nvlac <subcommand> [options]``.

Angles are given in degrees, fields in gauss, frequencies in MHz and times
in µs. Every output file starts with a header echoing the tool version, the
parameters, the options and the seed, so reruns with the same inputs are
byte-identical.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import dynamics as dyn
from . import magnetometry as mag
from . import noise
from .errors import NvLacError, ValidationError
from .hamiltonian import DriveField, FieldVector, SpinSystemParams, build_static_hamiltonian, load_params
from .io import atomic_write_text, csv_text, json_text, read_csv_columns
from .levels import Sweep, diagonalize, find_lac, sweep_levels
from .transitions import (
    lac_state_overlaps,
    lac_lines,
    selection_label,
    transition_table,
    zefoz_gradient,
)

USAGE_EXIT = 2
LAC_SWEEP = "theta:36:41:0.05"
DEFAULT_SPECTRUM = {"carrier": 2876.8, "nud": 20.0, "duration": 12.0, "step": 0.01,
                    "mw_amplitude": 2.0, "zeta": 90.0, "eta": 45.3}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        sys.exit(USAGE_EXIT)


# --------------------------------------------------------------------------
# helpers


def _params(args) -> SpinSystemParams:
    return load_params(args.params) if args.params else SpinSystemParams()


def _field(args, theta=None) -> FieldVector:
    th = args.theta if theta is None else theta
    return FieldVector.from_degrees(args.B, th, args.phi)


def _lac_field(args, params) -> FieldVector:
    """``--theta`` if given, otherwise the longitudinal LAC located near 38 deg."""
    if args.theta is not None:
        return _field(args)
    template = FieldVector.from_degrees(args.B, 0.0, args.phi)
    rep = find_lac(params, template, Sweep.from_spec(LAC_SWEEP))
    return template.replace(theta=rep.value)


def _header(args, params, command):
    opts = {k: v for k, v in sorted(vars(args).items()) if k not in ("out", "func", "command")}
    return {"tool": f"nvlac {__version__}", "command": command, "options": opts,
            "params": params.to_dict(), "seed": args.seed}


def _out(args, name) -> Path:
    return Path(args.out) / name


def _pair(text):
    try:
        a, b = (int(x) for x in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected 'i,j', got {text!r}") from exc
    return (min(a, b), max(a, b))


def _floats(text):
    try:
        return [float(x) for x in text.split(",")]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _grid_deg(text):
    """start:stop:step in degrees, inclusive of stop."""
    try:
        start, stop, step = (float(x) for x in text.split(":"))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected start:stop:step, got {text!r}") from exc
    if step <= 0 or stop <= start:
        raise argparse.ArgumentTypeError(f"bad grid bounds {text!r}")
    n = int(round((stop - start) / step)) + 1
    return start + step * np.arange(n)


def _apodization(text):
    if text in (None, "none"):
        return None
    kind, _, rate = text.partition(":")
    if kind not in ("exp", "exponential") or not rate:
        raise argparse.ArgumentTypeError("apodization must be 'none' or 'exp:<rate per µs>'")
    return ("exponential", float(rate))


def _spectrum_drive(args, params, field):
    drive = DriveField(args.mw_amplitude, np.radians(args.zeta), np.radians(args.eta), args.carrier, 0.0)
    eig = diagonalize(build_static_hamiltonian(params, field))
    lines = lac_lines(eig)
    if args.pulse is not None:
        return drive, args.pulse, eig, lines
    r1 = dyn.rabi_frequency(params, field, drive, lines[1][:2])
    r2 = dyn.rabi_frequency(params, field, drive, lines[2][:2])
    bright = np.hypot(r1, r2)
    if bright == 0:
        raise ValidationError("drive does not couple lines 1 and 2; pass --pulse explicitly")
    return drive, 1.0 / (4.0 * bright), eig, lines


def _apparent(lines, carrier, nud):
    return {k: (v[2] if k == 5 else abs(nud + v[2] - carrier)) for k, v in lines.items()}


# --------------------------------------------------------------------------
# subcommands


def cmd_levels(args):
    params = _params(args)
    sweep = Sweep.from_spec(args.sweep)
    template = _field(args, theta=args.theta if args.theta is not None else 0.0)
    res = sweep_levels(params, template, sweep)
    grid = res.sweep.grid
    disp = np.degrees(grid) if sweep.parameter in ("theta", "phi") else grid
    unit = "deg" if sweep.parameter in ("theta", "phi") else "G"
    tracked = res.tracked_energies
    cols = [f"{sweep.parameter}_{unit}"] + [f"E{k}_MHz" for k in range(tracked.shape[1])]
    rows = [[x, *e] for x, e in zip(disp, tracked)]
    path = atomic_write_text(_out(args, "levels.csv"), csv_text(cols, rows, _header(args, params, "levels")))
    return [path]


def cmd_lac(args):
    params = _params(args)
    sweep = Sweep.from_spec(args.sweep)
    template = _field(args, theta=args.theta if args.theta is not None else 0.0)
    rep = find_lac(params, template, sweep, pair=args.pair)
    payload = {"lac": rep.to_dict()}
    if rep.parameter == "theta":
        fv = template.replace(theta=rep.value)
        payload["two_gamma_e_B_cos_theta_MHz"] = 2 * params.gamma_e * fv.B * np.cos(fv.theta)
        eig = diagonalize(build_static_hamiltonian(params, fv))
        try:
            payload["psi_overlaps"] = {f"psi{k}": v for k, v in lac_state_overlaps(eig).items()}
            table = transition_table(eig)
            payload["lines"] = {
                str(k): {"levels": [i, j], "frequency_MHz": nu, "a_xyz": list(a),
                         "label": selection_label(a)}
                for k, (i, j, nu, a) in lac_lines(eig, table).items()
            }
        except NvLacError:
            pass
    path = atomic_write_text(_out(args, "lac.json"), json_text(payload, _header(args, params, "lac")))
    return [path]


def cmd_zefoz(args):
    params = _params(args)
    field = _lac_field(args, params)
    if args.pair:
        pairs = {f"{args.pair[0]},{args.pair[1]}": args.pair}
    else:
        eig = diagonalize(build_static_hamiltonian(params, field))
        lines = lac_lines(eig)
        pairs = {f"line{k}": lines[k][:2] for k in (1, 2, 3, 4)}
    out = {name: zefoz_gradient(params, field, pr).to_dict() for name, pr in pairs.items()}
    path = atomic_write_text(_out(args, "zefoz.json"),
                             json_text({"gradients": out}, _header(args, params, "zefoz")))
    return [path]


def cmd_spectrum(args):
    params = _params(args)
    field = _lac_field(args, params)
    drive, tp, eig, lines = _spectrum_drive(args, params, field)
    fid = dyn.ramsey_fid(params, field, drive, args.nud, args.duration, args.step, tp)
    spec = dyn.spectrum(fid, args.apodization)
    header = _header(args, params, "spectrum")
    header["pulse_duration_us"] = tp
    f, m = spec.positive()
    sel = spec.freqs >= 0
    rows = zip(f, m, spec.values[sel].real, spec.values[sel].imag)
    p1 = atomic_write_text(_out(args, "spectrum.csv"),
                           csv_text(["frequency_MHz", "magnitude", "real", "imag"], rows, header))
    p2 = atomic_write_text(_out(args, "fid.csv"),
                           csv_text(["tau_us", "signal"], zip(fid.times, fid.signal), header))
    fit = dyn.extract_lines(spec, threshold=0.0)
    expected = _apparent(lines, args.carrier, args.nud)
    report = {}
    for k, x in expected.items():
        ln = fit.nearest(x)
        report[str(k)] = {"expected_MHz": x, "center_MHz": ln.center, "amplitude": ln.amplitude,
                          "fwhm_MHz": ln.fwhm, "reliable": ln.reliable,
                          "kind": "zero-quantum" if k == 5 else "single-quantum"}
    zq = lines[3][2] - lines[1][2]
    report["psi1_psi2"] = {"expected_MHz": abs(zq), "center_MHz": fit.nearest(abs(zq)).center,
                           "amplitude": fit.nearest(abs(zq)).amplitude, "kind": "zero-quantum"}
    p3 = atomic_write_text(_out(args, "lines.json"), json_text({"lines": report}, header))
    return [p1, p2, p3]


def cmd_fid(args):
    """Fit damped cosines to a measured FID, a simulated Ramsey FID or a noise-ensemble FID."""
    params = _params(args)
    header = _header(args, params, "fid")
    if args.input:
        cols = read_csv_columns(args.input)
        names = list(cols)
        if len(names) < 2:
            raise ValidationError(f"{args.input}: need time and signal columns")
        fid = dyn.FidTrace(cols[names[0]], cols[names[1]])
        bands = {"input": args.band} if args.band else {"input": None}
    elif args.sigma is not None:
        field = _lac_field(args, params)
        lines = lac_lines(diagonalize(build_static_hamiltonian(params, field)))
        model = noise.NoiseModel.isotropic(args.sigma, args.B, n_samples=args.samples,
                                           floor=args.floor, seed=args.seed)
        header["noise_model"] = model.to_dict()
        fid = noise.ensemble_fid(params, field, lines[args.line][:2], model, args.duration,
                                 args.step, detuning=args.nud)
        bands = {f"line{args.line}": args.band or (0.5 * args.nud, 1.5 * args.nud)}
    else:
        field = _lac_field(args, params)
        drive, tp, eig, lines = _spectrum_drive(args, params, field)
        header["pulse_duration_us"] = tp
        fid = dyn.ramsey_fid(params, field, drive, args.nud, args.duration, args.step, tp)
        expected = _apparent(lines, args.carrier, args.nud)
        half = args.halfwidth
        bands = {f"line{k}": (expected[k] - half, expected[k] + half) for k in (1, 2, 3, 4)}
        if args.band:
            bands = {"band": args.band}
    if args.readout_noise > 0:
        rng = np.random.default_rng(args.seed)
        fid = dyn.FidTrace(fid.times, fid.signal + rng.normal(0.0, args.readout_noise, fid.signal.size),
                           fid.detuning)
    spec = dyn.spectrum(fid)
    fits, traces = {}, []
    for name, band in bands.items():
        iso = fid if band is None else dyn.isolate_line(spec, band)
        res = dyn.fit_fid(iso)
        fits[name] = {"band_MHz": None if band is None else list(band), **res.to_dict()}
        traces.append(iso.signal)
    cols = ["tau_us", "signal"] + [f"{n}_isolated" for n in bands]
    table = [[t, y, *vals] for t, y, vals in zip(fid.times, fid.signal, np.array(traces).T)]
    p1 = atomic_write_text(_out(args, "fid_isolated.csv"), csv_text(cols, table, header))
    p2 = atomic_write_text(_out(args, "fid_fit.json"), json_text({"fits": fits}, header))
    return [p1, p2]


def _transverse_transition(params, template):
    eig = diagonalize(build_static_hamiltonian(params, template))
    return mag.transverse_lines(eig)


def cmd_linewidth(args):
    params = _params(args)
    ref_theta = args.theta if args.theta is not None else 90.0
    template = _field(args, theta=ref_theta)
    if args.pair:
        pair = args.pair
    else:
        lines = _transverse_transition(params, template)
        pair = lines[args.line - 1]
    shape = noise.NoiseModel.isotropic(1e-3, args.B, n_samples=args.samples, floor=args.floor, seed=args.seed)
    if args.sigma is not None:
        model = noise.NoiseModel.isotropic(args.sigma, args.B, n_samples=args.samples,
                                           floor=args.floor, seed=args.seed)
    else:
        cal = np.radians(args.calibrate_theta)
        cal_pair = noise.track_pair(params, template, [cal], pair)[0]
        model = noise.calibrate_noise(params, template.replace(theta=cal), cal_pair, args.target_fwhm, shape)
    thetas = np.radians(args.theta_grid)
    curve = noise.linewidth_scan(params, template, thetas, pair, model)
    header = _header(args, params, "linewidth")
    header["noise_model"] = model.to_dict()
    rows = zip(np.degrees(curve.theta), curve.fwhm, curve.t2star)
    p1 = atomic_write_text(_out(args, "linewidth.csv"),
                           csv_text(["theta_deg", "fwhm_MHz", "t2star_us"], rows, header))
    lo, hi = curve.region_below(2.0)
    summary = {"minimum_theta_deg": np.degrees(curve.minimum), "minimum_fwhm_MHz": curve.minimum_fwhm,
               "narrowing_factor": float(np.max(curve.fwhm) / curve.minimum_fwhm),
               "below_2x_minimum_deg": [np.degrees(lo), np.degrees(hi)],
               "transition": list(pair), "noise_model": model.to_dict()}
    p2 = atomic_write_text(_out(args, "linewidth.json"), json_text({"summary": summary}, header))
    return [p1, p2]


def cmd_ratios(args):
    params = _params(args)
    drive = DriveField(args.mw_amplitude, np.radians(args.zeta), np.radians(args.eta))
    phis = np.radians(args.phi_grid)
    curve = mag.amplitude_ratio_scan(params, args.B, phis, drive, method=args.method)
    rows = [[np.degrees(p), *i, r, q, v] for p, i, r, q, v in
            zip(curve.phi, curve.intensities, curve.ratio, curve.inverse, curve.valid)]
    cols = ["phi_deg", "I1", "I2", "I3", "I4", "ratio_14_over_23", "ratio_23_over_14", "valid"]
    path = atomic_write_text(_out(args, "ratios.csv"), csv_text(cols, rows, _header(args, params, "ratios")))
    return [path]


def _measured(path):
    """key,value rows -> dict (``#`` comments allowed)."""
    out = {}
    for ln in Path(path).read_text().splitlines():
        ln = ln.strip()
        if not ln or ln.startswith("#"):
            continue
        key, _, val = ln.partition(",")
        if key.strip() in ("key", "name"):
            continue
        out[key.strip()] = float(val)
    return out


def cmd_reconstruct(args):
    params = _params(args)
    vals = _measured(args.input) if args.input else {}
    rabi_mw = vals.get("rabi_mw", args.rabi_mw)
    rabi_rf = vals.get("rabi_rf", args.rabi_rf)
    if rabi_mw is None or rabi_rf is None:
        raise ValidationError("both --rabi-mw and --rabi-rf are required")
    ratio = vals.get("field_ratio", args.field_ratio)
    if ratio is None:
        p_mw = vals.get("power_mw", args.power_mw)
        p_rf = vals.get("power_rf", args.power_rf)
        if p_mw is None or p_rf is None:
            raise ValidationError("give --field-ratio or both --power-mw and --power-rf")
        ratio = mag.field_ratio_from_powers(p_mw, p_rf)
    amps = args.amplitudes
    if all(k in vals for k in ("I1", "I2", "I3", "I4")):
        amps = [vals[k] for k in ("I1", "I2", "I3", "I4")]
    eta = vals.get("eta_deg", args.eta)
    if amps is None and eta is None:
        raise ValidationError("give --amplitudes I1,I2,I3,I4 or --eta")
    couplings = None
    if args.from_model:
        couplings = mag.lac_couplings(params, _lac_field(args, params))
    est = mag.reconstruct(amps, rabi_mw, rabi_rf, ratio, a_y=args.a_y, a_z=args.a_z,
                          gamma_e=params.gamma_e, couplings=couplings,
                          eta=None if eta is None else np.radians(eta))
    path = atomic_write_text(_out(args, "reconstruct.json"),
                             json_text({"estimate": est.to_dict()}, _header(args, params, "reconstruct")))
    return [path]


# --------------------------------------------------------------------------
# parser


def _common(p, theta_default=None, phi_default=0.0):
    p.add_argument("--params", help="JSON file with Hamiltonian parameters")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--B", type=float, default=28.9, help="static field magnitude, G")
    p.add_argument("--theta", type=float, default=theta_default, help="polar angle, deg")
    p.add_argument("--phi", type=float, default=phi_default, help="azimuthal angle, deg")


def _spectrum_opts(p):
    d = DEFAULT_SPECTRUM
    p.add_argument("--carrier", type=float, default=d["carrier"], help="MW carrier, MHz")
    p.add_argument("--nud", type=float, default=d["nud"], help="artificial detuning, MHz")
    p.add_argument("--duration", type=float, default=d["duration"], help="FID length, µs")
    p.add_argument("--step", type=float, default=d["step"], help="delay step, µs")
    p.add_argument("--mw-amplitude", type=float, default=d["mw_amplitude"], help="G")
    p.add_argument("--zeta", type=float, default=d["zeta"], help="drive polar angle, deg")
    p.add_argument("--eta", type=float, default=d["eta"], help="drive azimuth, deg")
    p.add_argument("--pulse", type=float, default=None,
                   help="pulse length, µs (default: pi/2 on the lines 1+2 bright state)")


def build_parser():
    parser = _Parser(prog="nvlac", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"nvlac {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("levels", help="tracked energy levels along a sweep")
    _common(p)
    p.add_argument("--sweep", required=True, help="name:start:stop:step (theta/phi in deg, B in G)")
    p.set_defaults(func=cmd_levels)

    p = sub.add_parser("lac", help="locate a level anti-crossing")
    _common(p)
    p.add_argument("--sweep", default=LAC_SWEEP)
    p.add_argument("--pair", type=_pair, default=None, help="tracked labels 'a,b'")
    p.set_defaults(func=cmd_lac)

    p = sub.add_parser("zefoz", help="transition-frequency gradients")
    _common(p)
    p.add_argument("--pair", type=_pair, default=None, help="level indices 'i,j' (default: lines 1-4)")
    p.set_defaults(func=cmd_zefoz)

    p = sub.add_parser("spectrum", help="Ramsey FID and spectrum")
    _common(p)
    _spectrum_opts(p)
    p.add_argument("--apodization", type=_apodization, default=None, help="none or exp:<rate>")
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("fid", help="isolate lines and fit damped cosines")
    _common(p)
    _spectrum_opts(p)
    p.add_argument("--input", help="CSV with columns time (µs), signal; skips the simulation")
    p.add_argument("--band", type=_floats, default=None, help="lo,hi in MHz")
    p.add_argument("--halfwidth", type=float, default=0.4, help="isolation half band, MHz")
    p.add_argument("--readout-noise", type=float, default=0.0, help="Gaussian noise std added to the FID")
    p.add_argument("--sigma", type=float, default=None,
                   help="isotropic field noise, G: simulate the noise-ensemble FID of one LAC line")
    p.add_argument("--line", type=int, default=1, choices=(1, 2, 3, 4, 5), help="LAC line for --sigma")
    p.add_argument("--samples", type=int, default=500)
    p.add_argument("--floor", type=float, default=0.10, help="residual FWHM, MHz")
    p.set_defaults(func=cmd_fid)

    p = sub.add_parser("linewidth", help="Monte-Carlo linewidth versus theta")
    _common(p, phi_default=30.0)
    p.add_argument("--theta-grid", type=_grid_deg, default=_grid_deg("60:120:0.5"))
    p.add_argument("--pair", type=_pair, default=None, help="level indices at --theta (default 90)")
    p.add_argument("--line", type=int, default=1, choices=(1, 2, 3, 4),
                   help="transverse-LAC line by ascending frequency")
    p.add_argument("--samples", type=int, default=500)
    p.add_argument("--floor", type=float, default=0.10, help="residual FWHM, MHz")
    p.add_argument("--sigma", type=float, default=None, help="isotropic field noise, G (skips calibration)")
    p.add_argument("--calibrate-theta", type=float, default=60.0)
    p.add_argument("--target-fwhm", type=float, default=0.7)
    p.set_defaults(func=cmd_linewidth)

    p = sub.add_parser("ratios", help="transverse-LAC amplitude ratios versus phi")
    _common(p)
    p.add_argument("--phi-grid", type=_grid_deg, default=_grid_deg("0:180:5"))
    p.add_argument("--eta", type=float, default=45.3)
    p.add_argument("--zeta", type=float, default=39.0)
    p.add_argument("--mw-amplitude", type=float, default=0.31)
    p.add_argument("--method", choices=("weak", "ramsey"), default="weak")
    p.set_defaults(func=cmd_ratios)

    p = sub.add_parser("reconstruct", help="MW field vector from amplitudes and Rabi frequencies")
    _common(p)
    p.add_argument("--input", help="CSV of key,value rows (rabi_mw, rabi_rf, I1..I4, field_ratio, ...)")
    p.add_argument("--rabi-mw", type=float, default=None, help="Rabi frequency of line 1, MHz")
    p.add_argument("--rabi-rf", type=float, default=None, help="Rabi frequency of line 5, MHz")
    p.add_argument("--field-ratio", type=float, default=None, help="B_rf/B_mw")
    p.add_argument("--power-mw", type=float, default=None)
    p.add_argument("--power-rf", type=float, default=None)
    p.add_argument("--amplitudes", type=_floats, default=None, help="I1,I2,I3,I4")
    p.add_argument("--eta", type=float, default=None, help="known azimuth, deg (instead of amplitudes)")
    p.add_argument("--a-y", type=float, default=0.80)
    p.add_argument("--a-z", type=float, default=1.0)
    p.add_argument("--from-model", action="store_true",
                   help="take a_y, a_z from the Hamiltonian at the LAC and refine with the full model")
    p.set_defaults(func=cmd_reconstruct)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        paths = args.func(args)
    except NvLacError as exc:
        sys.stderr.write(f"nvlac {args.command}: {type(exc).__name__}: {exc}\n")
        return exc.exit_code
    except (OSError, ValueError) as exc:
        sys.stderr.write(f"nvlac {args.command}: error: {exc}\n")
        return 1
    for p in paths:
        sys.stdout.write(f"{p}\n")
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
