"""Parameter sweeps producing visibility tables."""

from __future__ import annotations

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

from . import afterpulse, core, montecarlo
from .afterpulse import GatingConfig
from .config import ExperimentConfig
from .core import SourcePair, VisibilityReport

HEADER = ("axis_value", "p_coin", "p_c", "p_d", "v_hom")


@dataclass(frozen=True)
class SweepRow:
    axis_value: float
    p_coin: float
    p_c: float
    p_d: float
    v_hom: float | None
    se_v: float | None = None
    eta_mu: float | None = None


def point_config(cfg: ExperimentConfig, axis: str, x: float) -> ExperimentConfig:
    """``cfg`` with the swept quantity set to ``x``."""
    src = cfg.source
    if axis == "dead_time":
        g_c = GatingConfig(x * 1e-6, cfg.gating_c.gate_period, cfg.gating_c.gate_width)
        g_d = GatingConfig(x * 1e-6, cfg.gating_d.gate_period, cfg.gating_d.gate_width)
        return replace(cfg, gating_c=g_c, gating_d=g_d, _raw={})
    if axis == "photon_number":
        src = SourcePair(x, x, src.cos_phi)
    elif axis == "intensity_ratio":
        src = SourcePair(src.mu_a, src.mu_a / x, src.cos_phi)
    elif axis == "polarization_voltage":
        src = SourcePair(src.mu_a, src.mu_b, core.cos_phi_from_voltage(x, cfg.vpi))
    else:
        raise ValueError(f"unknown axis {axis!r}")
    return replace(cfg, source=src, _raw={})


def evaluate(cfg: ExperimentConfig) -> VisibilityReport | montecarlo.SimEstimate:
    if cfg.mode == "analytic":
        return core.visibility(cfg.source, cfg.bs, cfg.det)
    if cfg.mode == "analytic+afterpulse":
        return afterpulse.visibility_with_afterpulse(
            cfg.source, cfg.bs, cfg.det, cfg.ap_c, cfg.ap_d, cfg.gating_c, cfg.gating_d)
    sim = cfg.sim_config()
    if cfg.replicas > 1:
        return montecarlo.simulate_replicas(sim, cfg.replicas)[0]
    return montecarlo.simulate(sim)


def _row(cfg: ExperimentConfig, axis: str, index: int, x: float) -> SweepRow:
    pc = point_config(cfg, axis, x)
    if cfg.mode == "montecarlo":
        pc = replace(pc, seed=montecarlo.replica_seed(cfg.seed, index))
    res = evaluate(pc)
    eta_mu = cfg.det.eta_c * x if axis == "photon_number" else None
    if isinstance(res, montecarlo.SimEstimate):
        return SweepRow(x, res.p_coin_hat, res.p_c_hat, res.p_d_hat, res.v_hom_hat,
                        res.se_v, eta_mu)
    return SweepRow(x, res.p_coin, res.p_c, res.p_d, res.v_hom, None, eta_mu)


def run_sweep(cfg: ExperimentConfig, workers: int = 1) -> list[SweepRow]:
    """One row per sweep step, in axis order.

    Monte Carlo points get seeds derived from ``(cfg.seed, step index)``, so
    the table does not depend on ``workers``.
    """
    if cfg.sweep is None:
        raise ValueError("config has no sweep section")
    axis = cfg.sweep.axis
    xs = cfg.sweep.values()
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            return list(pool.map(lambda ix: _row(cfg, axis, *ix), enumerate(xs)))
    return [_row(cfg, axis, i, x) for i, x in enumerate(xs)]


def _g(v) -> str:
    return "" if v is None else f"{v:.10g}"


def rows_to_csv(rows: list[SweepRow], montecarlo_mode: bool = False) -> str:
    """CSV with header ``axis_value,p_coin,p_c,p_d,v_hom``, then ``se_v`` in
    Monte Carlo mode and ``eta_mu`` for photon-number sweeps."""
    with_eta = any(r.eta_mu is not None for r in rows)
    header = list(HEADER) + (["se_v"] if montecarlo_mode else []) + (["eta_mu"] if with_eta else [])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        vals = [r.axis_value, r.p_coin, r.p_c, r.p_d, r.v_hom]
        if montecarlo_mode:
            vals.append(r.se_v)
        if with_eta:
            vals.append(r.eta_mu)
        w.writerow(_g(v) for v in vals)
    return buf.getvalue()


def rows_to_records(rows: list[SweepRow]) -> list[dict]:
    return [{k: v for k, v in r.__dict__.items() if v is not None or k == "v_hom"} for r in rows]
