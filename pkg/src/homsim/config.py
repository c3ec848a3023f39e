"""Experiment configuration files (JSON, explicit units in field names).

Every dimensional field names its unit (``dead_time_us``, ``gate_width_ns``,
``tau_us``, ``vpi_volts`` ...); unknown keys are rejected rather than
guessed at. Omitted sections fall back to the defaults below, which follow
the 1 MHz polarization-scan setup: 10 % efficient detectors, 7 us dead time,
1 us gate period, 7 ns gates, dark counts 5.5e-5 and 2.0e-5 per gate, and a
5 ns coincidence window.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .afterpulse import AfterpulseParams, GatingConfig
from .core import BeamSplitter, DetectorPair, SourcePair
from .errors import InvalidConfig
from .montecarlo import AP_MODES, SimConfig

AXES = ("dead_time", "photon_number", "intensity_ratio", "polarization_voltage")
MODES = ("analytic", "analytic+afterpulse", "montecarlo")

# sweep start/stop are in these units
AXIS_UNITS = {
    "dead_time": "us",
    "photon_number": "mean photons per pulse (mu_a = mu_b)",
    "intensity_ratio": "mu_a / mu_b with mu_a fixed",
    "polarization_voltage": "volts",
}

DEFAULTS = {
    "source": {"mu_a": 0.45, "mu_b": 0.45, "cos_phi": 1.0},
    "beam_splitter": {"transmittance": 0.5},
    "detectors": {"eta_c": 0.1, "eta_d": 0.1, "dark_c": 5.5e-5, "dark_d": 2.0e-5},
    "gating": {"dead_time_us": 7.0, "gate_period_us": 1.0, "gate_width_ns": 7.0},
    "gating_d": None,
    "afterpulse": {"c": {"p0": 0.0, "tau_us": 1.0}, "d": {"p0": 0.0, "tau_us": 1.0}},
    "simulation": {"n_gates": 1_000_000, "seed": 0, "ap_mode": "most-recent", "replicas": 1},
    "analysis": {"coincidence_window_ns": 5.0, "pair_window_ns": None},
    "vpi_volts": 5.25,
    "mode": "analytic",
    "sweep": None,
    "output": None,
}


@dataclass(frozen=True)
class SweepSpec:
    axis: str
    start: float
    stop: float
    steps: int

    def __post_init__(self):
        if self.axis not in AXES:
            raise InvalidConfig(f"sweep axis must be one of {AXES}, got {self.axis!r}")
        if int(self.steps) != self.steps or self.steps < 2:
            raise InvalidConfig(f"sweep steps must be an integer >= 2, got {self.steps!r}")
        if not (math.isfinite(self.start) and math.isfinite(self.stop) and self.start < self.stop):
            raise InvalidConfig(f"need finite start < stop, got {self.start}, {self.stop}")
        if self.axis in ("dead_time", "photon_number") and self.start < 0:
            raise InvalidConfig(f"{self.axis} sweep must start at >= 0")
        if self.axis == "intensity_ratio" and self.start <= 0:
            raise InvalidConfig("intensity_ratio sweep must start at > 0")

    def values(self) -> list[float]:
        n = int(self.steps)
        return [self.start + (self.stop - self.start) * i / (n - 1) for i in range(n)]


@dataclass(frozen=True)
class ExperimentConfig:
    source: SourcePair
    bs: BeamSplitter
    det: DetectorPair
    gating_c: GatingConfig
    gating_d: GatingConfig
    ap_c: AfterpulseParams
    ap_d: AfterpulseParams
    n_gates: int = 1_000_000
    seed: int = 0
    ap_mode: str = "most-recent"
    replicas: int = 1
    coincidence_window: float = 5e-9
    pair_window: float | None = None
    vpi: float = 5.25
    mode: str = "analytic"
    sweep: SweepSpec | None = None
    output: str | None = None
    _raw: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        if self.mode not in MODES:
            raise InvalidConfig(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.ap_mode not in AP_MODES:
            raise InvalidConfig(f"ap_mode must be one of {AP_MODES}, got {self.ap_mode!r}")
        if not self.vpi > 0:
            raise InvalidConfig(f"vpi_volts must be > 0, got {self.vpi!r}")
        if int(self.replicas) != self.replicas or self.replicas < 1:
            raise InvalidConfig("replicas must be an integer >= 1")
        if not self.coincidence_window > 0:
            raise InvalidConfig("coincidence_window_ns must be > 0")
        if self.pair_window is not None and not self.pair_window > 0:
            raise InvalidConfig("pair_window_ns must be > 0")

    def sim_config(self, **overrides) -> SimConfig:
        kw = dict(source=self.source, bs=self.bs, det=self.det, gating_c=self.gating_c,
                  gating_d=self.gating_d, ap_c=self.ap_c, ap_d=self.ap_d,
                  n_gates=self.n_gates, seed=self.seed, ap_mode=self.ap_mode)
        kw.update(overrides)
        return SimConfig(**kw)

    # -- (de)serialization -------------------------------------------------

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise InvalidConfig("config must be a JSON object")
        d = _merge(DEFAULTS, data, "")
        src = _section(d, "source", ("mu_a", "mu_b", "cos_phi"))
        gating = _gating(d["gating"], "gating")
        gating_d = gating if d["gating_d"] is None else _gating(d["gating_d"], "gating_d")
        ap = d["afterpulse"]
        sim = d["simulation"]
        an = d["analysis"]
        sweep = d["sweep"]
        if sweep is not None:
            _check_keys(sweep, ("axis", "start", "stop", "steps"), "sweep", required=True)
            sweep = SweepSpec(sweep["axis"], float(sweep["start"]), float(sweep["stop"]),
                              sweep["steps"])
        return cls(
            source=SourcePair(float(src["mu_a"]), float(src["mu_b"]), float(src["cos_phi"])),
            bs=BeamSplitter.from_transmittance(_num(d["beam_splitter"]["transmittance"],
                                                    "beam_splitter.transmittance")),
            det=DetectorPair(**{k: _num(v, f"detectors.{k}") for k, v in d["detectors"].items()}),
            gating_c=gating,
            gating_d=gating_d,
            ap_c=_afterpulse(ap["c"], "afterpulse.c"),
            ap_d=_afterpulse(ap["d"], "afterpulse.d"),
            n_gates=_int(sim["n_gates"], "simulation.n_gates"),
            seed=_int(sim["seed"], "simulation.seed"),
            ap_mode=sim["ap_mode"],
            replicas=_int(sim["replicas"], "simulation.replicas"),
            coincidence_window=_num(an["coincidence_window_ns"], "coincidence_window_ns") * 1e-9,
            pair_window=(None if an["pair_window_ns"] is None
                         else _num(an["pair_window_ns"], "pair_window_ns") * 1e-9),
            vpi=_num(d["vpi_volts"], "vpi_volts"),
            mode=d["mode"],
            sweep=sweep,
            output=d["output"],
            _raw=d,
        )

    def to_dict(self) -> dict:
        """Normalized dict form; configs read from a file round-trip verbatim."""
        if self._raw:
            return copy.deepcopy(self._raw)

        def gating(g: GatingConfig) -> dict:
            return {"dead_time_us": g.dead_time * 1e6, "gate_period_us": g.gate_period * 1e6,
                    "gate_width_ns": g.gate_width * 1e9}

        return {
            "source": {"mu_a": self.source.mu_a, "mu_b": self.source.mu_b,
                       "cos_phi": self.source.cos_phi},
            "beam_splitter": {"transmittance": self.bs.transmittance},
            "detectors": {"eta_c": self.det.eta_c, "eta_d": self.det.eta_d,
                          "dark_c": self.det.dark_c, "dark_d": self.det.dark_d},
            "gating": gating(self.gating_c),
            "gating_d": None if self.gating_d == self.gating_c else gating(self.gating_d),
            "afterpulse": {
                "c": {"p0": self.ap_c.p0, "tau_us": self.ap_c.tau * 1e6},
                "d": {"p0": self.ap_d.p0, "tau_us": self.ap_d.tau * 1e6},
            },
            "simulation": {"n_gates": self.n_gates, "seed": self.seed,
                           "ap_mode": self.ap_mode, "replicas": self.replicas},
            "analysis": {
                "coincidence_window_ns": self.coincidence_window * 1e9,
                "pair_window_ns": None if self.pair_window is None else self.pair_window * 1e9,
            },
            "vpi_volts": self.vpi,
            "mode": self.mode,
            "sweep": None if self.sweep is None else {
                "axis": self.sweep.axis, "start": self.sweep.start,
                "stop": self.sweep.stop, "steps": self.sweep.steps},
            "output": self.output,
        }

    def with_seed(self, seed: int) -> "ExperimentConfig":
        raw = self.to_dict()
        raw["simulation"]["seed"] = seed
        return ExperimentConfig.from_dict(raw)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            data = json.loads(Path(path).read_text())
        except OSError as exc:
            raise InvalidConfig(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise InvalidConfig(f"config {path} is not valid JSON: {exc}") from exc
        return cls.from_dict(data)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")


def _merge(defaults, data, prefix):
    if not isinstance(defaults, dict) or data is None:
        return data
    if not isinstance(data, dict):
        raise InvalidConfig(f"{prefix or 'config'} must be an object")
    unknown = set(data) - set(defaults)
    if unknown:
        raise InvalidConfig(f"unknown key(s) in {prefix or 'config'}: {sorted(unknown)}")
    out = {}
    for k, v in defaults.items():
        if k not in data:
            out[k] = v
        elif k in ("gating_d", "sweep"):
            out[k] = data[k]
        else:
            out[k] = _merge(v, data[k], f"{prefix}.{k}" if prefix else k)
    return out


def _check_keys(d, keys, where, required=False):
    if not isinstance(d, dict):
        raise InvalidConfig(f"{where} must be an object")
    unknown = set(d) - set(keys)
    if unknown:
        raise InvalidConfig(f"unknown key(s) in {where}: {sorted(unknown)}")
    if required and set(keys) - set(d):
        raise InvalidConfig(f"{where} is missing {sorted(set(keys) - set(d))}")


def _section(d, name, keys):
    _check_keys(d[name], keys, name)
    return {k: _num(v, f"{name}.{k}") for k, v in d[name].items()}


def _num(v, where) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise InvalidConfig(f"{where} must be a number, got {v!r}")
    return float(v)


def _int(v, where) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise InvalidConfig(f"{where} must be an integer, got {v!r}")
    return v


def _gating(g, where) -> GatingConfig:
    keys = ("dead_time_us", "gate_period_us", "gate_width_ns")
    _check_keys(g, keys, where, required=True)
    return GatingConfig(_num(g["dead_time_us"], where) * 1e-6,
                        _num(g["gate_period_us"], where) * 1e-6,
                        _num(g["gate_width_ns"], where) * 1e-9)


def _afterpulse(a, where) -> AfterpulseParams:
    _check_keys(a, ("p0", "tau_us"), where, required=True)
    return AfterpulseParams(_num(a["p0"], where), _num(a["tau_us"], where) * 1e-6)
