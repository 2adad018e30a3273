import json
import subprocess
import sys

import numpy as np
import pytest

from nvlac import __version__
from nvlac.cli import main
from nvlac.errors import ValidationError
from nvlac.io import SCHEMA_VERSION, atomic_write_text, csv_text, json_text, read_csv_columns


def _run(tmp_path, *argv, name="out"):
    out = tmp_path / name
    code = main([*argv, "--out", str(out)])
    return code, out


def _json(path):
    return json.loads(path.read_text())


def _header(path):
    return [ln for ln in path.read_text().splitlines() if ln.startswith("#")]


class TestLevels:
    def test_csv_with_header(self, tmp_path):
        code, out = _run(tmp_path, "levels", "--sweep", "theta:80:100:1", "--phi", "30")
        assert code == 0
        path = out / "levels.csv"
        head = _header(path)
        assert head[0] == f"# schema_version: {SCHEMA_VERSION}"
        assert any(h.startswith("# seed: ") for h in head)
        assert any(h == f'# tool: "nvlac {__version__}"' for h in head)
        assert any(h.startswith("# params: ") and '"D": 2870.0' in h for h in head)
        cols = read_csv_columns(path)
        assert len(cols) == 19 and len(cols["theta_deg"]) == 21

    def test_invalid_sweep_leaves_no_file(self, tmp_path):
        code, out = _run(tmp_path, "levels", "--sweep", "theta:100:80:1")
        assert code == ValidationError.exit_code
        assert not out.exists() or not any(out.iterdir())

    def test_usage_error_exit_code(self, tmp_path, capsys):
        with pytest.raises(SystemExit) as info:
            main(["levels"])
        assert info.value.code == 2
        with pytest.raises(SystemExit) as info:
            main(["lac", "--pair", "1"])
        assert info.value.code == 2


class TestLacAndZefoz:
    def test_lac(self, tmp_path):
        code, out = _run(tmp_path, "lac", "--B", "28.9", "--phi", "0")
        assert code == 0
        d = _json(out / "lac.json")
        assert d["schema_version"] == SCHEMA_VERSION
        assert d["lac"]["value"] == pytest.approx(38.4, abs=0.3)
        assert d["two_gamma_e_B_cos_theta_MHz"] == pytest.approx(127.0, abs=1.0)
        assert {v["label"] for v in d["lines"].values()} == {"X", "Y", "Z"}

    def test_zefoz_default_lines(self, tmp_path):
        code, out = _run(tmp_path, "zefoz")
        assert code == 0
        d = _json(out / "zefoz.json")
        assert len(d["gradients"]) == 4


class TestSpectrumAndFid:
    def test_spectrum_lines_and_determinism(self, tmp_path):
        argv = ["spectrum", "--theta", "38.4", "--carrier", "2876.8", "--nud", "20", "--duration", "3"]
        code, a = _run(tmp_path, *argv, name="a")
        assert code == 0
        _, b = _run(tmp_path, *argv, name="b")
        for name in ("spectrum.csv", "fid.csv", "lines.json"):
            assert (a / name).read_bytes() == (b / name).read_bytes()
        lines = _json(a / "lines.json")["lines"]
        assert {"1", "2", "3", "4", "5"} <= set(lines)
        for k in "1234":
            assert 15.0 < lines[k]["center_MHz"] < 30.0

    def test_fid_readout_noise_seeded(self, tmp_path):
        argv = ["fid", "--duration", "3", "--readout-noise", "0.01"]
        _, a = _run(tmp_path, *argv, "--seed", "3", name="a")
        _, b = _run(tmp_path, *argv, "--seed", "3", name="b")
        _, c = _run(tmp_path, *argv, "--seed", "4", name="c")
        assert (a / "fid_isolated.csv").read_bytes() == (b / "fid_isolated.csv").read_bytes()
        assert (a / "fid_isolated.csv").read_bytes() != (c / "fid_isolated.csv").read_bytes()

    def test_fid_from_input_csv(self, tmp_path):
        t = 0.01 * np.arange(1200)
        y = np.cos(2 * np.pi * 20.0 * t) * np.exp(-t / 10.5)
        src = tmp_path / "trace.csv"
        src.write_text("# measured\ntime_us,signal\n" + "".join(f"{a},{b}\n" for a, b in zip(t, y)))
        code, out = _run(tmp_path, "fid", "--input", str(src))
        assert code == 0
        fit = next(iter(_json(out / "fid_fit.json")["fits"].values()))
        assert fit["frequency_MHz"] == pytest.approx(20.0, rel=0.01)
        assert fit["t2star_us"] == pytest.approx(10.5, rel=0.01)

    def test_missing_input_is_an_error(self, tmp_path):
        code, _ = _run(tmp_path, "fid", "--input", str(tmp_path / "nope.csv"))
        assert code != 0


class TestLinewidthAndRatios:
    def test_linewidth_fixed_sigma(self, tmp_path):
        argv = ["linewidth", "--sigma", "0.0538", "--samples", "128", "--theta-grid", "88:93:1"]
        code, out = _run(tmp_path, *argv)
        assert code == 0
        s = _json(out / "linewidth.json")["summary"]
        assert 88.0 <= s["minimum_theta_deg"] <= 93.0
        assert s["noise_model"]["n_samples"] == 128
        cols = read_csv_columns(out / "linewidth.csv")
        assert np.all(cols["fwhm_MHz"] >= 0.1)

    def test_ratios_reciprocal(self, tmp_path):
        code, out = _run(tmp_path, "ratios", "--phi-grid", "0:180:30")
        assert code == 0
        cols = read_csv_columns(out / "ratios.csv")
        ok = np.isfinite(cols["ratio_14_over_23"]) & np.isfinite(cols["ratio_23_over_14"])
        assert np.allclose(cols["ratio_14_over_23"][ok] * cols["ratio_23_over_14"][ok], 1.0)


class TestReconstruct:
    def test_quoted_inputs(self, tmp_path):
        code, out = _run(tmp_path, "reconstruct", "--rabi-mw", "0.44", "--rabi-rf", "0.36", "--eta", "45.3",
                         "--power-mw", "4.72", "--power-rf", "0.67")
        assert code == 0
        est = _json(out / "reconstruct.json")["estimate"]
        assert est["zeta_deg"] == pytest.approx(39.0, abs=2.0)
        assert est["B_mw_G"] == pytest.approx(0.31, abs=0.01)
        assert est["B_rf_G"] == pytest.approx(0.12, abs=0.01)
        assert est["residuals"]["zeta_coefficient"] == pytest.approx(2.15, abs=0.05)

    def test_input_csv_and_model_refinement(self, tmp_path):
        src = tmp_path / "measured.csv"
        src.write_text("key,value\nrabi_mw,0.44\nrabi_rf,0.36\nfield_ratio,0.3768\n"
                       "I1,0.2\nI2,0.2\nI3,0.11\nI4,0.11\n")
        code, out = _run(tmp_path, "reconstruct", "--input", str(src), "--from-model")
        assert code == 0
        est = _json(out / "reconstruct.json")["estimate"]
        assert est["refined"] and 0 <= est["eta_deg"] <= 90

    def test_missing_inputs_exit_code(self, tmp_path):
        code, _ = _run(tmp_path, "reconstruct", "--rabi-mw", "0.44")
        assert code == ValidationError.exit_code


class TestIo:
    def test_atomic_write_leaves_no_temporaries(self, tmp_path):
        path = atomic_write_text(tmp_path / "x" / "a.txt", "hello\n")
        assert path.read_text() == "hello\n"
        assert [p.name for p in path.parent.iterdir()] == ["a.txt"]

    def test_csv_roundtrip_and_json(self, tmp_path):
        text = csv_text(["a", "b"], [[1, 0.5], [2, np.float64(1e-20)]], {"seed": 0})
        path = atomic_write_text(tmp_path / "t.csv", text)
        cols = read_csv_columns(path)
        assert np.array_equal(cols["a"], [1, 2]) and cols["b"][1] == 1e-20
        doc = json.loads(json_text({"x": np.arange(2), "y": np.nan}, {"seed": 1}))
        assert doc == {"schema_version": SCHEMA_VERSION, "header": {"seed": 1}, "x": [0, 1], "y": None}


def test_console_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "nvlac.cli", "lac", "--out", str(tmp_path)],
                         capture_output=True, text=True)
    assert out.returncode == 0
    assert out.stdout.strip().endswith("lac.json")
