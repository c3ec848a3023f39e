import csv
import io
import json
import subprocess
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from homsim import core
from homsim.cli import main
from homsim.config import DEFAULTS, ExperimentConfig, SweepSpec
from homsim.core import BeamSplitter, DetectorPair, SourcePair
from homsim.errors import InvalidConfig

GOLDEN = Path(__file__).parent / "golden"
AXES = ["dead_time", "photon_number", "intensity_ratio", "polarization_voltage"]

HEADLINE = {"detectors": {"dark_c": 0.0, "dark_d": 0.0}}


def write(tmp_path, data, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(data))
    return str(p)


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def table(text):
    rows = list(csv.reader(io.StringIO(text)))
    return rows[0], np.array([[float(v) for v in r] for r in rows[1:]])


# --- visibility ------------------------------------------------------------------

def test_headline_visibility(tmp_path, capsys):
    code, out, _ = run(capsys, "visibility", "--config", write(tmp_path, HEADLINE))
    assert code == 0
    values = dict(line.split(" = ") for line in out.splitlines())
    assert round(float(values["v_hom"]), 3) == 0.489


def test_orthogonal_prints_zero(tmp_path, capsys):
    cfg = {"source": {"cos_phi": 0.0}}
    code, out, _ = run(capsys, "visibility", "--config", write(tmp_path, cfg), "--format", "json")
    assert code == 0 and json.loads(out)["v_hom"] == 0.0


@pytest.mark.parametrize("cfg, name", [
    ({"beam_splitter": {"transmittance": 1.2}}, "InvalidBeamSplitter"),
    ({"source": {"mu_a": -1}}, "InvalidSource"),
    ({"detectors": {"eta_c": 2}}, "InvalidDetector"),
    ({"gating": {"dead_time_us": 1, "gate_period_us": 1, "gate_width_ns": 2000}}, "InvalidGating"),
    ({"vpi_volts": 0}, "InvalidConfig"),
    ({"wavelength_nm": 1550}, "InvalidConfig"),
    ({"source": {"mu_a": "0.4"}}, "InvalidConfig"),
    ({"mode": "exact"}, "InvalidConfig"),
])
def test_validation_exit_code(tmp_path, capsys, cfg, name):
    code, _, err = run(capsys, "visibility", "--config", write(tmp_path, cfg))
    assert code == 2
    assert err.startswith(f"{name}:")


def test_bad_json_and_missing_file(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run(capsys, "visibility", "--config", str(bad))[0] == 2
    assert run(capsys, "visibility", "--config", str(tmp_path / "nope.json"))[0] == 2


def test_runtime_error_exit_code(tmp_path, capsys):
    cfg = {"source": {"mu_a": 0, "mu_b": 0}, "detectors": {"dark_c": 0, "dark_d": 0}}
    code, _, err = run(capsys, "visibility", "--config", write(tmp_path, cfg))
    assert code == 3 and err.startswith("DegenerateDenominator:")


def test_module_entry_point(tmp_path):
    cfg = write(tmp_path, {"beam_splitter": {"transmittance": 1.2}})
    proc = subprocess.run([sys.executable, "-m", "homsim", "visibility", "--config", cfg],
                          capture_output=True, text=True)
    assert proc.returncode == 2
    assert "InvalidBeamSplitter" in proc.stderr


# --- sweeps -------------------------------------------------------------------------

@pytest.mark.parametrize("axis", AXES)
def test_golden_sweeps(axis, capsys):
    code, out, _ = run(capsys, "sweep", "--config", str(GOLDEN / f"{axis}.json"))
    assert code == 0
    got_header, got = table(out)
    want_header, want = table((GOLDEN / f"{axis}.csv").read_text())
    assert got_header == want_header
    np.testing.assert_allclose(got, want, rtol=1e-9, atol=1e-12)


def test_sweep_csv_has_ten_significant_digits(capsys):
    _, out, _ = run(capsys, "sweep", "--config", str(GOLDEN / "dead_time.json"))
    assert out.splitlines()[1] == "0.1,0.001232176952,0.04511512379,0.04784623661,0.4291747914"


def test_sweep_json_and_workers(capsys):
    cfg = str(GOLDEN / "intensity_ratio.json")
    _, serial, _ = run(capsys, "sweep", "--config", cfg, "--format", "json")
    _, parallel, _ = run(capsys, "sweep", "--config", cfg, "--format", "json", "--workers", "4")
    assert serial == parallel
    rows = json.loads(serial)
    assert [r["axis_value"] for r in rows] == pytest.approx(np.linspace(0.2, 1.8, 9).tolist())


def test_sweep_to_out_file(tmp_path, capsys):
    out = tmp_path / "t.csv"
    assert run(capsys, "sweep", "--config", str(GOLDEN / "photon_number.json"), "--out", str(out))[0] == 0
    assert out.read_text().startswith("axis_value,p_coin,p_c,p_d,v_hom,eta_mu\n")


def test_sweep_needs_sweep_section(capsys):
    assert run(capsys, "sweep")[0] == 2


def test_montecarlo_sweep(tmp_path, capsys):
    cfg = write(tmp_path, {"mode": "montecarlo", "simulation": {"n_gates": 50_000, "seed": 3},
                           "sweep": {"axis": "photon_number", "start": 0.2, "stop": 1.0, "steps": 3}})
    _, a, _ = run(capsys, "sweep", "--config", cfg)
    _, b, _ = run(capsys, "sweep", "--config", cfg, "--workers", "3")
    assert a == b
    header, rows = table(a)
    assert header == ["axis_value", "p_coin", "p_c", "p_d", "v_hom", "se_v", "eta_mu"]
    assert np.all(rows[:, 5] > 0)
    _, c, _ = run(capsys, "sweep", "--config", cfg, "--seed", "4")
    assert c != a


def test_photon_number_limit_and_shape(tmp_path, capsys):
    cfg = write(tmp_path, {**HEADLINE, "sweep": {"axis": "photon_number", "start": 1e-4,
                                                  "stop": 2.0, "steps": 60}})
    _, rows = table(run(capsys, "sweep", "--config", cfg)[1])
    assert rows[0, 4] == pytest.approx(0.5, abs=1e-4)
    assert np.all(np.diff(rows[:, 4]) < 0)


def test_intensity_ratio_peaks_near_one(tmp_path, capsys):
    # with mu_a held fixed, lowering mu_b also lowers the total photon number,
    # which pushes the peak to ratio 1 + O(eta mu_a); it sits at 1 only in
    # the weak-input limit
    cfg = write(tmp_path, {**HEADLINE, "source": {"mu_a": 0.47},
                           "sweep": {"axis": "intensity_ratio", "start": 0.1, "stop": 1.9, "steps": 61}})
    _, rows = table(run(capsys, "sweep", "--config", cfg)[1])
    peak = rows[np.argmax(rows[:, 4]), 0]
    assert 1.0 <= peak <= 1.0 + 0.1 * 0.47


def test_polarization_zero_at_vpi(capsys):
    _, rows = table(run(capsys, "sweep", "--config", str(GOLDEN / "polarization_voltage.json"))[1])
    at_vpi = rows[np.isclose(rows[:, 0], 5.25)]
    assert at_vpi[0, 4] == 0.0


# --- config ---------------------------------------------------------------------------

@pytest.mark.parametrize("kw", [
    dict(axis="time", start=0, stop=1, steps=3), dict(axis="dead_time", start=1, stop=1, steps=3),
    dict(axis="dead_time", start=0, stop=1, steps=1), dict(axis="photon_number", start=-1, stop=1, steps=3),
    dict(axis="intensity_ratio", start=0, stop=1, steps=3), dict(axis="dead_time", start=0, stop=1, steps=2.5),
])
def test_sweep_spec_validation(kw):
    with pytest.raises(InvalidConfig):
        SweepSpec(**kw)


def test_defaults_follow_polarization_run():
    c = ExperimentConfig.from_dict({})
    assert (c.det.eta_c, c.det.dark_c, c.det.dark_d) == (0.1, 5.5e-5, 2.0e-5)
    assert c.gating_c.dead_time == pytest.approx(7e-6) and c.gating_c.gate_period == pytest.approx(1e-6)
    assert c.gating_c.gate_width == pytest.approx(7e-9)
    assert c.coincidence_window == pytest.approx(5e-9) and c.vpi == 5.25
    assert DEFAULTS["simulation"]["ap_mode"] == "most-recent"


def test_config_round_trip(tmp_path, capsys):
    src = GOLDEN / "dead_time.json"
    first = ExperimentConfig.load(src)
    first.save(tmp_path / "again.json")
    second = ExperimentConfig.load(tmp_path / "again.json")
    assert first == second
    _, a, _ = run(capsys, "sweep", "--config", str(src))
    _, b, _ = run(capsys, "sweep", "--config", str(tmp_path / "again.json"))
    assert a == b


def test_config_round_trip_without_raw():
    c = ExperimentConfig.from_dict({"gating_d": {"dead_time_us": 3, "gate_period_us": 1,
                                                 "gate_width_ns": 5},
                                    "sweep": {"axis": "dead_time", "start": 1, "stop": 2, "steps": 2}})
    back = ExperimentConfig.from_dict(replace(c, _raw={}).to_dict())
    assert back.sweep == c.sweep and back.source == c.source and back.ap_d == c.ap_d
    assert back.gating_d.dead_time == pytest.approx(c.gating_d.dead_time, rel=1e-15)
    assert core.visibility(back.source, back.bs, back.det).as_dict() == pytest.approx(
        core.visibility(c.source, c.bs, c.det).as_dict(), rel=1e-13)


def test_seed_override_keeps_everything_else():
    c = ExperimentConfig.load(GOLDEN / "dead_time.json")
    s = c.with_seed(99)
    assert s.seed == 99 and s.ap_c == c.ap_c and s.sweep == c.sweep


# --- simulate / analyze / fit -----------------------------------------------------------

def test_simulate_is_reproducible(tmp_path, capsys):
    cfg = write(tmp_path, {"simulation": {"n_gates": 100_000}})
    for name in ("a", "b"):
        assert run(capsys, "simulate", "--config", cfg, "--seed", "5", "--format", "json",
                   "--out", str(tmp_path / f"{name}.json"),
                   "--timetags", str(tmp_path / f"{name}.tt"))[0] == 0
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    assert (tmp_path / "a.tt").read_bytes() == (tmp_path / "b.tt").read_bytes()


def test_simulate_replicas(tmp_path, capsys):
    cfg = write(tmp_path, {"simulation": {"n_gates": 40_000, "replicas": 4}})
    code, out, _ = run(capsys, "simulate", "--config", cfg, "--format", "json", "--workers", "2")
    assert code == 0 and json.loads(out)["n_gates"] == 40_000


def test_analyze_reproduces_simulate(tmp_path, capsys):
    cfg = write(tmp_path, {"simulation": {"n_gates": 10 ** 6, "seed": 8}})
    tt = str(tmp_path / "s.tt")
    _, sim, _ = run(capsys, "simulate", "--config", cfg, "--timetags", tt, "--format", "json")
    code, rep, _ = run(capsys, "analyze-timetags", "--config", cfg, "--input", tt, "--format", "json")
    assert code == 0
    sim, rep = json.loads(sim), json.loads(rep)
    assert (rep["coinciding_gates"], rep["coincidences"], rep["singles_c"], rep["singles_d"]) == (
        sim["n_open_pairs"], sim["n_coin"], sim["n_c"], sim["n_d"])
    c = ExperimentConfig.load(cfg)
    v = core.visibility(c.source, c.bs, c.det).v_hom
    assert abs(rep["v_hom_emp"] - v) <= 3 * rep["se_v_emp"]


def test_analyze_formats(tmp_path, capsys):
    tt = tmp_path / "s.tt"
    tt.write_bytes(b"GC,0\nGD,0\nDC,3\n")
    _, text, _ = run(capsys, "analyze-timetags", "--input", str(tt))
    assert "coinciding_gates = 1\n" in text
    _, out, _ = run(capsys, "analyze-timetags", "--input", str(tt), "--format", "csv")
    assert out.splitlines()[0].startswith("coinciding_gates,coincidences")


@pytest.mark.parametrize("content, code, name", [
    (b"GC,0\nQQ,1\n", 3, "ParseError"),
    (b"GC,0\nDC,1\n", 3, "NoGates"),
])
def test_analyze_errors(tmp_path, capsys, content, code, name):
    tt = tmp_path / "bad.tt"
    tt.write_bytes(content)
    got, _, err = run(capsys, "analyze-timetags", "--input", str(tt))
    assert got == code and err.startswith(name)


def test_analyze_missing_file(tmp_path, capsys):
    assert run(capsys, "analyze-timetags", "--input", str(tmp_path / "none"))[0] == 2


FIT_CFG = {
    "source": {"mu_a": 0.0, "mu_b": 0.0},
    "detectors": {"dark_c": 0.02, "dark_d": 0.02},
    "gating": {"dead_time_us": 0.1, "gate_period_us": 0.5, "gate_width_ns": 7.0},
    "afterpulse": {"c": {"p0": 0.018, "tau_us": 0.85}, "d": {"p0": 0.033, "tau_us": 1.41}},
    "simulation": {"seed": 2},
}


def test_fit_from_simulation(tmp_path, capsys):
    hist = tmp_path / "h.csv"
    code, out, _ = run(capsys, "fit-afterpulse", "--config", write(tmp_path, FIT_CFG),
                       "--detector", "d", "--format", "json", "--save-histogram", str(hist))
    assert code == 0
    fit = json.loads(out)
    assert fit["p0"] == pytest.approx(0.033, rel=0.1)
    assert fit["tau_us"] == pytest.approx(1.41, rel=0.1)
    assert fit["detections"] == 10 ** 6
    # refitting the saved histogram gives the same answer
    _, again, _ = run(capsys, "fit-afterpulse", "--histogram", str(hist), "--format", "json")
    assert json.loads(again) == fit


def test_fit_errors(tmp_path, capsys):
    bad = tmp_path / "h.csv"
    bad.write_text("bin_start_seconds,count\n0.5e-6,3\n1e-6,2\n")
    code, _, err = run(capsys, "fit-afterpulse", "--histogram", str(bad))
    assert code == 3 and err.startswith("InsufficientData")
    assert run(capsys, "fit-afterpulse", "--histogram", str(tmp_path / "none.csv"))[0] == 2
