"""Command-line front end.

Exit codes: 0 success, 2 configuration/validation failure, 3 other typed
errors raised while running. Errors print ``<ErrorName>: <message>`` on
stderr.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

from . import afterpulse, montecarlo, sweeps, timestamps
from .config import ExperimentConfig
from .errors import HomError, ValidationError

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.10g}"
    return str(v)


def _render(record: dict, fmt: str) -> str:
    if fmt == "json":
        return json.dumps(record, indent=2) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(record.keys())
        w.writerow(_fmt(v) for v in record.values())
        return buf.getvalue()
    return "".join(f"{k} = {_fmt(v)}\n" for k, v in record.items())


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _load(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig.from_dict({})
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg


def cmd_visibility(args) -> None:
    cfg = _load(args)
    res = sweeps.evaluate(cfg)
    record = res.as_dict()
    if isinstance(res, montecarlo.SimEstimate):
        record = {"p_coin": res.p_coin_hat, "p_c": res.p_c_hat, "p_d": res.p_d_hat,
                  "v_hom": res.v_hom_hat, "se_v": res.se_v}
    _emit(_render(record, args.format or "text"), args.out)


def cmd_sweep(args) -> None:
    cfg = _load(args)
    if cfg.sweep is None:
        raise ValidationError("config has no 'sweep' section")
    rows = sweeps.run_sweep(cfg, workers=args.workers)
    fmt = args.format or "csv"
    if fmt == "json":
        text = json.dumps(sweeps.rows_to_records(rows), indent=2) + "\n"
    else:
        text = sweeps.rows_to_csv(rows, montecarlo_mode=cfg.mode == "montecarlo")
    _emit(text, args.out or cfg.output)


def cmd_simulate(args) -> None:
    cfg = _load(args)
    sim = cfg.sim_config()
    if args.timetags:
        timestamps.write_timetags(montecarlo.generate_timetags(sim), args.timetags)
    if cfg.replicas > 1:
        est = montecarlo.simulate_replicas(sim, cfg.replicas, workers=args.workers)[0]
    else:
        est = montecarlo.simulate(sim)
    _emit(_render(est.as_dict(), args.format or "text"), args.out)


def cmd_fit(args) -> None:
    if args.histogram:
        try:
            hist = afterpulse.IntervalHistogram.load(args.histogram)
        except (OSError, ValueError) as exc:
            raise ValidationError(f"cannot read histogram {args.histogram}: {exc}") from exc
    else:
        cfg = _load(args)
        sim = cfg.sim_config(n_gates=args.max_gates)
        hist = montecarlo.generate_interval_histogram(sim, detector=args.detector,
                                                      max_detections=args.detections)
        if args.save_histogram:
            hist.save(args.save_histogram)
    fit = afterpulse.fit_afterpulse(hist)
    record = {"p0": fit.params.p0, "tau_us": fit.params.tau * 1e6,
              "background": fit.background, "residual": fit.residual,
              "background_residual": fit.background_residual, "detections": hist.total}
    _emit(_render(record, args.format or "text"), args.out)


def cmd_analyze(args) -> None:
    cfg = _load(args)
    try:
        stream = timestamps.read_timetags(args.input)
    except OSError as exc:
        raise ValidationError(f"cannot read {args.input}: {exc}") from exc
    rep = timestamps.extract_coincidences(
        stream, gate_width=cfg.gating_c.gate_width, pair_window=cfg.pair_window,
        coincidence_window=cfg.coincidence_window)
    fmt = args.format or "text"
    text = {"csv": rep.to_csv, "text": rep.to_text}.get(fmt)
    _emit(text() if text else _render(rep.as_dict(), fmt), args.out)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment config (JSON)")
    common.add_argument("--out", help="output path (default: stdout)")
    common.add_argument("--seed", type=int, help="override simulation seed (u64)")
    common.add_argument("--format", choices=("csv", "json", "text"))

    p = argparse.ArgumentParser(prog="homsim", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("visibility", parents=[common], help="visibility for one configuration")
    s.set_defaults(func=cmd_visibility)

    s = sub.add_parser("sweep", parents=[common], help="visibility table along one axis")
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("simulate", parents=[common], help="Monte Carlo estimate")
    s.add_argument("--timetags", help="also write the synthetic time-tag stream here")
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("fit-afterpulse", parents=[common],
                       help="fit after-pulse parameters to an interval histogram")
    s.add_argument("--histogram", help="histogram CSV (bin_start_seconds,count); "
                                       "simulated from --config if omitted")
    s.add_argument("--detector", choices=("c", "d"), default="c")
    s.add_argument("--detections", type=int, default=1_000_000)
    s.add_argument("--max-gates", type=int, default=10 ** 10)
    s.add_argument("--save-histogram")
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("analyze-timetags", parents=[common],
                       help="coincidence analysis of a time-tag file")
    s.add_argument("--input", required=True)
    s.set_defaults(func=cmd_analyze)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except ValidationError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except HomError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
