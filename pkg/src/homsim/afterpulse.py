"""After-pulse corrections, rate calibration, and after-pulse parameter fitting.

After an avalanche, a detector re-fires spuriously with probability
``p0 * exp(-t / tau)`` at a gate opened a time ``t`` later. In gated mode
only gate openings after the dead time contribute, which sums to the
geometric series implemented by :func:`total_afterpulse_probability`.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import optimize

from . import core
from .core import BeamSplitter, DetectorPair, SourcePair, VisibilityReport
from .errors import (
    FitDiverged,
    InconsistentProbabilities,
    InsufficientData,
    InvalidAfterpulse,
    InvalidGating,
    RateTooHigh,
    ValidationError,
)


@dataclass(frozen=True)
class AfterpulseParams:
    p0: float
    tau: float  # seconds

    def __post_init__(self):
        if not (math.isfinite(self.p0) and 0.0 <= self.p0 < 1.0):
            raise InvalidAfterpulse(f"p0 must lie in [0, 1), got {self.p0!r}")
        if not (math.isfinite(self.tau) and self.tau > 0.0):
            raise InvalidAfterpulse(f"tau must be > 0, got {self.tau!r}")

    @classmethod
    def none(cls) -> "AfterpulseParams":
        return cls(0.0, 1e-6)


@dataclass(frozen=True)
class GatingConfig:
    dead_time: float  # seconds
    gate_period: float  # seconds
    gate_width: float = 7e-9  # seconds

    def __post_init__(self):
        if not (math.isfinite(self.dead_time) and self.dead_time >= 0.0):
            raise InvalidGating(f"dead_time must be >= 0, got {self.dead_time!r}")
        if not (math.isfinite(self.gate_period) and self.gate_period > 0.0):
            raise InvalidGating(f"gate_period must be > 0, got {self.gate_period!r}")
        if not (math.isfinite(self.gate_width) and 0.0 < self.gate_width < self.gate_period):
            raise InvalidGating(
                f"gate_width must lie in (0, gate_period), got {self.gate_width!r}"
            )

    @property
    def dead_gates(self) -> int:
        """Gate periods from an avalanche to the next gate the detector accepts."""
        # tolerance keeps e.g. 7 us / 1 us from rounding up to 8
        return max(1, math.ceil(self.dead_time / self.gate_period - 1e-9))


@dataclass(frozen=True)
class IntervalHistogram:
    """Counts of inter-detection intervals; ``bin_edges`` in seconds."""

    bin_edges: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        edges = np.asarray(self.bin_edges, dtype=float)
        counts = np.asarray(self.counts)
        if edges.ndim != 1 or counts.ndim != 1 or len(counts) != len(edges) - 1:
            raise ValidationError("need len(counts) == len(bin_edges) - 1")
        if len(edges) > 1 and not np.all(np.diff(edges) > 0):
            raise ValidationError("bin edges must be strictly increasing")
        if np.any(counts < 0):
            raise ValidationError("counts must be non-negative")
        object.__setattr__(self, "bin_edges", edges)
        object.__setattr__(self, "counts", counts.astype(np.int64))

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.bin_edges[1:] + self.bin_edges[:-1])

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["bin_start_seconds", "count"])
        for start, n in zip(self.bin_edges[:-1], self.counts):
            w.writerow([repr(float(start)), int(n)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "IntervalHistogram":
        """Parse the two-column CSV; the last bin is assumed as wide as the one before."""
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or [c.strip() for c in rows[0]] != ["bin_start_seconds", "count"]:
            raise ValidationError("expected header 'bin_start_seconds,count'")
        rows = [r for r in rows[1:] if r]
        if not rows:
            return cls(np.zeros(1), np.zeros(0, dtype=np.int64))
        try:
            starts = np.array([float(r[0]) for r in rows])
            counts = np.array([int(r[1]) for r in rows], dtype=np.int64)
        except (ValueError, IndexError) as exc:
            raise ValidationError(f"malformed histogram row: {exc}") from None
        width = starts[-1] - starts[-2] if len(starts) > 1 else 1.0
        return cls(np.append(starts, starts[-1] + width), counts)

    def save(self, path) -> None:
        Path(path).write_text(self.to_csv())

    @classmethod
    def load(cls, path) -> "IntervalHistogram":
        return cls.from_csv(Path(path).read_text())


def total_afterpulse_probability(ap: AfterpulseParams, g: GatingConfig,
                                 gate_aligned: bool = False) -> float:
    """Summed after-pulse probability over all gates following one avalanche.

    The first contributing gate sits at ``dead_time`` after the avalanche and
    the rest follow every ``gate_period``. With ``gate_aligned`` the first
    contribution is instead taken at the first gate opening at or after the
    dead time, which is what a periodic gate train actually sees.
    """
    first = g.dead_gates * g.gate_period if gate_aligned else g.dead_time
    return ap.p0 * math.exp(-first / ap.tau) / -math.expm1(-g.gate_period / ap.tau)


def corrected_coincidence(p_coin: float, p_c: float, p_d: float,
                          ap_total_c: float, ap_total_d: float) -> float:
    for name, v in (("p_coin", p_coin), ("p_c", p_c), ("p_d", p_d),
                    ("ap_total_c", ap_total_c), ("ap_total_d", ap_total_d)):
        if not 0.0 <= v <= 1.0:
            raise ValidationError(f"{name} must lie in [0, 1], got {v!r}")
    if p_coin > p_c or p_coin > p_d:
        raise InconsistentProbabilities(
            f"p_coin={p_coin} exceeds a singles probability (p_c={p_c}, p_d={p_d})"
        )
    return (p_coin + (p_c - p_coin) * p_d * ap_total_d
            + (p_d - p_coin) * p_c * ap_total_c)


def corrected_singles(p: float, ap_total: float) -> float:
    if not (0.0 <= p <= 1.0 and 0.0 <= ap_total <= 1.0):
        raise ValidationError(f"inputs must lie in [0, 1], got p={p!r}, ap_total={ap_total!r}")
    return p * (1.0 + (1.0 - p) * ap_total)


def visibility_with_afterpulse(src: SourcePair, bs: BeamSplitter, det: DetectorPair,
                               ap_c: AfterpulseParams, ap_d: AfterpulseParams,
                               g: GatingConfig, g_d: GatingConfig | None = None,
                               gate_aligned: bool = False) -> VisibilityReport:
    """Visibility with both detectors' after-pulsing folded in.

    ``g`` gates detector c, and detector d too unless ``g_d`` is given.
    """
    g_d = g if g_d is None else g_d
    base = core.visibility(src, bs, det)
    a_c = total_afterpulse_probability(ap_c, g, gate_aligned)
    a_d = total_afterpulse_probability(ap_d, g_d, gate_aligned)
    p_coin = corrected_coincidence(base.p_coin, base.p_c, base.p_d, a_c, a_d)
    p_c = corrected_singles(base.p_c, a_c)
    p_d = corrected_singles(base.p_d, a_d)
    return VisibilityReport(p_coin, p_c, p_d, core.visibility_from_probabilities(p_coin, p_c, p_d))


def mu_from_rate(r_det: float, eta: float, g: GatingConfig) -> float:
    """Input mean photon number from the single-arm detection rate (counts/s).

    The factor 2 accounts for the balanced beam splitter in front of the
    detector.
    """
    if not eta > 0:
        raise ValidationError(f"eta must be > 0, got {eta!r}")
    if r_det < 0:
        raise ValidationError(f"rate must be >= 0, got {r_det!r}")
    busy = r_det * g.dead_time
    if busy >= 1.0:
        raise RateTooHigh(f"rate * dead_time = {busy} >= 1")
    return (2.0 / eta) * math.log1p(r_det * g.gate_period / (1.0 - busy))


# ---------------------------------------------------------------------------
# fitting


@dataclass(frozen=True)
class AfterpulseFit:
    params: AfterpulseParams
    background: float  # per-gate click probability without after-pulsing
    residual: float
    background_residual: float


def _hazard(t: np.ndarray, p_b: float, p0: float, tau: float) -> np.ndarray:
    return 1.0 - (1.0 - p_b) * (1.0 - p0 * np.exp(-t / tau))


def _log_model(t: np.ndarray, p_b: float, p0: float, tau: float) -> np.ndarray:
    h = _hazard(t, p_b, p0, tau)
    log_surv = np.concatenate(([0.0], np.cumsum(np.log1p(-h))[:-1]))
    return np.log(h) + log_surv


class _Objective:
    """Weighted squared log-residuals with the overall scale profiled out."""

    def __init__(self, t: np.ndarray, counts: np.ndarray):
        self.t = t
        mask = counts > 0
        self.mask = mask
        self.w = counts[mask].astype(float)
        self.log_n = np.log(self.w)

    def __call__(self, p_b: float, p0: float, tau: float) -> float:
        if not (0.0 < p_b < 1.0 and 0.0 <= p0 < 1.0 and tau > 0.0):
            return math.inf
        with np.errstate(divide="ignore", invalid="ignore"):
            resid = self.log_n - _log_model(self.t, p_b, p0, tau)[self.mask]
        if not np.all(np.isfinite(resid)):
            return math.inf
        offset = np.dot(self.w, resid) / self.w.sum()
        return float(np.dot(self.w, (resid - offset) ** 2))


def fit_afterpulse(h: IntervalHistogram, min_bins: int = 10) -> AfterpulseFit:
    """Extract ``(p0, tau)`` from an inter-detection interval histogram.

    Each bin is treated as one gate: the count in bin ``k`` is proportional to
    the hazard ``1 - (1 - p_b)(1 - p0 exp(-t_k / tau))`` times the survival
    through all earlier bins, where ``t_k`` is the bin centre. Leading empty
    bins (the dead time) are dropped. Log-counts are fitted by least squares
    with Poisson weights (each bin weighted by its count); a coarse grid over
    ``(tau, p0)`` seeds a bounded Nelder-Mead refinement of all three
    parameters.

    ``tau`` is confined to ``[bin width, span / 3]``: faster decays are not
    resolvable and slower ones cannot be told apart from the background.
    """
    counts = np.asarray(h.counts)
    nonzero = np.flatnonzero(counts)
    if len(nonzero) < min_bins:
        raise InsufficientData(f"need >= {min_bins} non-empty bins, got {len(nonzero)}")
    first = nonzero[0]
    counts = counts[first:]
    t = h.centers[first:]
    widths = np.diff(h.bin_edges)[first:]
    span = t[nonzero[-1] - first] - t[0] + widths[0]
    tau_min = float(np.min(widths))
    obj = _Objective(t, counts)

    # pure-background reference: geometric interval distribution
    bg = optimize.minimize_scalar(lambda pb: obj(pb, 0.0, 1.0), bounds=(1e-9, 1 - 1e-9),
                                  method="bounded", options={"xatol": 1e-12})
    p_b0, bg_resid = float(bg.x), float(bg.fun)

    mean_interval = float(np.dot(t, counts) / counts.sum())
    tau_max = span / 3.0
    if tau_max <= tau_min:
        raise InsufficientData(f"histogram spans {span:.3g} s, too short to resolve a decay")
    taus = np.geomspace(tau_min, tau_max, 40)
    taus = np.unique(np.append(taus, min(max(mean_interval, tau_min), tau_max)))
    p0s = np.concatenate(([0.0, 0.01], np.geomspace(1e-4, 0.9, 30)))
    best = (bg_resid, p_b0, 0.0, taus[0])
    for tau in taus:
        for p0 in p0s:
            val = obj(p_b0, p0, tau)
            if val < best[0]:
                best = (val, p_b0, p0, tau)

    def f(x):
        return obj(x[0], x[1], math.exp(x[2]))

    x0 = np.array([best[1], best[2], math.log(best[3])])
    res = optimize.minimize(
        f, x0, method="Nelder-Mead",
        bounds=[(1e-9, 1 - 1e-9), (0.0, 0.999), (math.log(tau_min), math.log(tau_max))],
        options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 20000, "maxfev": 40000,
                 "initial_simplex": _simplex(x0)},
    )
    p_b, p0, tau = float(res.x[0]), float(res.x[1]), math.exp(res.x[2])
    resid = float(res.fun)
    if best[0] < resid:
        resid, p_b, p0, tau = best
    if not (math.isfinite(resid) and math.isfinite(bg_resid)) or resid > bg_resid:
        raise FitDiverged(f"residual {resid} does not improve on background-only {bg_resid}")
    return AfterpulseFit(AfterpulseParams(p0, tau), p_b, resid, bg_resid)


def _simplex(x0: np.ndarray) -> np.ndarray:
    steps = np.array([0.1 * max(x0[0], 1e-4), max(0.2 * x0[1], 1e-3), 0.2])
    pts = [x0]
    for i, s in enumerate(steps):
        p = x0.copy()
        p[i] = p[i] + s if i != 1 else min(p[i] + s, 0.99)
        pts.append(p)
    return np.array(pts)
