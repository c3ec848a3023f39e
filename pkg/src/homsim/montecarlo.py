"""Gate-by-gate Monte Carlo of the two-detector HOM experiment.

Every gate draws independent input phases, Poisson photon numbers at the two
outputs and a click/no-click outcome per detector. Those draws do not depend
on the detector history and are vectorized per chunk. Arming (dead time) and
after-pulsing do depend on history and run in a compiled sequential kernel.

Randomness comes from numpy's ``Philox`` (4x64 counter-based) bit generator
seeded through ``SeedSequence``. Each gate consumes exactly eight uniforms in
a fixed order (theta_a, theta_b, photons_c, click_c, photons_d, click_d,
afterpulse_c, afterpulse_d), whether or not a detector is armed. Results are
therefore reproducible across platforms for a given seed and chunk size.
Replica seeds are ``SeedSequence([seed, replica_index])``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Iterator

import numba
import numpy as np

from .afterpulse import AfterpulseParams, GatingConfig, IntervalHistogram
from .core import TWO_PI, BeamSplitter, DetectorPair, SourcePair
from .errors import InvalidConfig
from .stats import binomial_se, visibility_se
from .timestamps import TICK_SECONDS, Channel, TimeTagStream

AP_MODES = ("most-recent", "superposed")
CHUNK = 1 << 18
_N_UNIFORMS = 8
_TIMING_STREAM = 0x54494D45  # extra SeedSequence word for detection-time jitter

ARMED = np.uint8(1)
CLICK = np.uint8(2)
AFTERPULSE = np.uint8(4)


@dataclass(frozen=True)
class SimConfig:
    source: SourcePair
    bs: BeamSplitter
    det: DetectorPair
    gating_c: GatingConfig
    gating_d: GatingConfig | None = None
    ap_c: AfterpulseParams = field(default_factory=AfterpulseParams.none)
    ap_d: AfterpulseParams = field(default_factory=AfterpulseParams.none)
    n_gates: int = 1_000_000
    seed: int = 0
    ap_mode: str = "most-recent"

    def __post_init__(self):
        if self.gating_d is None:
            object.__setattr__(self, "gating_d", self.gating_c)
        if int(self.n_gates) != self.n_gates or self.n_gates < 0:
            raise InvalidConfig(f"n_gates must be a non-negative integer, got {self.n_gates!r}")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise InvalidConfig("seed must be an unsigned 64-bit integer")
        if self.ap_mode not in AP_MODES:
            raise InvalidConfig(f"ap_mode must be one of {AP_MODES}, got {self.ap_mode!r}")
        if not math.isclose(self.gating_c.gate_period, self.gating_d.gate_period, rel_tol=1e-12):
            raise InvalidConfig("both detectors must share one gate period (common trigger)")

    @property
    def gate_period(self) -> float:
        return self.gating_c.gate_period


@dataclass(frozen=True)
class SimEstimate:
    """Tallies restricted to gates where both detectors were armed.

    ``clicks_c``/``clicks_d`` and ``armed_c``/``armed_d`` count over all
    gates regardless of the other detector; they give single-arm rates.
    """

    n_gates: int
    n_open_pairs: int
    n_coin: int
    n_c: int
    n_d: int
    clicks_c: int
    clicks_d: int
    armed_c: int
    armed_d: int
    afterpulses_c: int
    afterpulses_d: int
    gate_period: float

    @property
    def p_coin_hat(self) -> float:
        return self.n_coin / self.n_open_pairs if self.n_open_pairs else 0.0

    @property
    def p_c_hat(self) -> float:
        return self.n_c / self.n_open_pairs if self.n_open_pairs else 0.0

    @property
    def p_d_hat(self) -> float:
        return self.n_d / self.n_open_pairs if self.n_open_pairs else 0.0

    @property
    def se_coin(self) -> float:
        return binomial_se(self.n_coin, self.n_open_pairs)

    @property
    def se_c(self) -> float:
        return binomial_se(self.n_c, self.n_open_pairs)

    @property
    def se_d(self) -> float:
        return binomial_se(self.n_d, self.n_open_pairs)

    @property
    def v_hom_hat(self) -> float | None:
        """``None`` when either singles tally is zero."""
        if self.n_c == 0 or self.n_d == 0:
            return None
        return 1.0 - self.p_coin_hat / (self.p_c_hat * self.p_d_hat)

    @property
    def se_v(self) -> float | None:
        return visibility_se(self.n_coin, self.n_c, self.n_d, self.n_open_pairs)

    @property
    def duration(self) -> float:
        return self.n_gates * self.gate_period

    @property
    def rate_c(self) -> float:
        return self.clicks_c / self.duration if self.n_gates else 0.0

    @property
    def rate_d(self) -> float:
        return self.clicks_d / self.duration if self.n_gates else 0.0

    def __add__(self, other: "SimEstimate") -> "SimEstimate":
        if not math.isclose(self.gate_period, other.gate_period, rel_tol=1e-12):
            raise ValueError("cannot pool estimates with different gate periods")
        counts = {k: getattr(self, k) + getattr(other, k) for k in _COUNT_FIELDS}
        return SimEstimate(gate_period=self.gate_period, **counts)

    def as_dict(self) -> dict:
        out = {k: getattr(self, k) for k in _COUNT_FIELDS}
        for k in ("p_coin_hat", "p_c_hat", "p_d_hat", "se_coin", "se_c", "se_d",
                  "v_hom_hat", "se_v", "rate_c", "rate_d"):
            out[k] = getattr(self, k)
        out["gate_period"] = self.gate_period
        return out


_COUNT_FIELDS = ("n_gates", "n_open_pairs", "n_coin", "n_c", "n_d", "clicks_c", "clicks_d",
                 "armed_c", "armed_d", "afterpulses_c", "afterpulses_d")


# ---------------------------------------------------------------------------
# sampling


def poisson_inversion(mu: np.ndarray, u: np.ndarray, kmax: int = 200) -> np.ndarray:
    """Poisson variates by sequential CDF inversion of the uniforms ``u``."""
    mu = np.asarray(mu, dtype=float)
    p = np.exp(-mu)
    cdf = p.copy()
    k = np.zeros(mu.shape, dtype=np.int64)
    active = u > cdf
    j = 0
    while active.any() and j < kmax:
        j += 1
        idx = np.flatnonzero(active)
        p[idx] *= mu[idx] / j
        cdf[idx] += p[idx]
        k[idx] = j
        still = u[idx] > cdf[idx]
        # cdf can stall just below 1 from round-off; stop once terms vanish
        still &= p[idx] > 0.0
        active[idx] = still
    return k


def _light_clicks(cfg: SimConfig, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    src, bs, det = cfg.source, cfg.bs, cfg.det
    dtheta = TWO_PI * (u[:, 0] - u[:, 1])
    cross = 2.0 * math.sqrt(src.mu_a * src.mu_b) * bs.t * bs.r * src.cos_phi * np.cos(dtheta)
    total = src.mu_a + src.mu_b
    mu_c = np.clip(src.mu_a * bs.t ** 2 + src.mu_b * bs.r ** 2 + cross, 0.0, total)
    mu_d = total - mu_c
    m = poisson_inversion(mu_c, u[:, 2])
    n = poisson_inversion(mu_d, u[:, 4])
    click_c = u[:, 3] < 1.0 - (1.0 - det.eta_c) ** m * (1.0 - det.dark_c)
    click_d = u[:, 5] < 1.0 - (1.0 - det.eta_d) ** n * (1.0 - det.dark_d)
    return click_c, click_d


_BUF = 256


@numba.njit(cache=True, nogil=True)
def _timeline(gate0, light, u_ap, dead, p0, inv_tau_gates, superposed,
              next_armed, last, hist, hist_n, flags):
    """Advance both detectors through one chunk of gates.

    ``light[k, i]`` says whether detector ``i`` would click from photons or a
    dark count in gate ``gate0 + k`` if armed. State arrays (``next_armed``,
    ``last``, ``hist``, ``hist_n``) persist across chunks and are updated in
    place; ``flags[k, i]`` receives ARMED | CLICK | AFTERPULSE bits.
    """
    n = light.shape[0]
    for k in range(n):
        gate = gate0 + k
        for i in range(2):
            f = 0
            if gate >= next_armed[i]:
                f = 1
                click = light[k, i]
                ap = False
                if not click and p0[i] > 0.0:
                    if superposed:
                        keep = 0
                        q = 1.0
                        for j in range(hist_n[i]):
                            age = (gate - hist[i, j]) * inv_tau_gates[i]
                            if age < 60.0:
                                q *= 1.0 - p0[i] * math.exp(-age)
                                hist[i, keep] = hist[i, j]
                                keep += 1
                        hist_n[i] = keep
                        prob = 1.0 - q
                    elif last[i] >= 0:
                        prob = p0[i] * math.exp(-(gate - last[i]) * inv_tau_gates[i])
                    else:
                        prob = 0.0
                    if u_ap[k, i] < prob:
                        click = True
                        ap = True
                if click:
                    f |= 2
                    if ap:
                        f |= 4
                    last[i] = gate
                    next_armed[i] = gate + dead[i]
                    if superposed:
                        if hist_n[i] == hist.shape[1]:
                            for j in range(hist_n[i] - 1):
                                hist[i, j] = hist[i, j + 1]
                            hist_n[i] -= 1
                        hist[i, hist_n[i]] = gate
                        hist_n[i] += 1
            flags[k, i] = f


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))


def iter_gate_flags(cfg: SimConfig, chunk: int = CHUNK) -> Iterator[tuple[int, np.ndarray]]:
    """Yield ``(first_gate, flags)`` per chunk; ``flags`` has shape ``(n, 2)``."""
    rng = _rng(cfg.seed)
    dead = np.array([cfg.gating_c.dead_gates, cfg.gating_d.dead_gates], dtype=np.int64)
    p0 = np.array([cfg.ap_c.p0, cfg.ap_d.p0])
    inv_tau = np.array([cfg.gate_period / cfg.ap_c.tau, cfg.gate_period / cfg.ap_d.tau])
    superposed = cfg.ap_mode == "superposed"
    next_armed = np.zeros(2, dtype=np.int64)
    last = np.full(2, -1, dtype=np.int64)
    hist = np.zeros((2, _BUF), dtype=np.int64)
    hist_n = np.zeros(2, dtype=np.int64)
    for start in range(0, cfg.n_gates, chunk):
        m = min(chunk, cfg.n_gates - start)
        u = rng.random((m, _N_UNIFORMS))
        click_c, click_d = _light_clicks(cfg, u)
        light = np.stack((click_c, click_d), axis=1)
        u_ap = np.ascontiguousarray(u[:, 6:8])
        flags = np.empty((m, 2), dtype=np.uint8)
        _timeline(start, light, u_ap, dead, p0, inv_tau, superposed,
                  next_armed, last, hist, hist_n, flags)
        yield start, flags


def tally(flags: np.ndarray) -> dict:
    armed = (flags & ARMED) != 0
    click = (flags & CLICK) != 0
    both = armed[:, 0] & armed[:, 1]
    return {
        "n_gates": len(flags),
        "n_open_pairs": int(both.sum()),
        "n_coin": int((both & click[:, 0] & click[:, 1]).sum()),
        "n_c": int((both & click[:, 0]).sum()),
        "n_d": int((both & click[:, 1]).sum()),
        "clicks_c": int(click[:, 0].sum()),
        "clicks_d": int(click[:, 1].sum()),
        "armed_c": int(armed[:, 0].sum()),
        "armed_d": int(armed[:, 1].sum()),
        "afterpulses_c": int(((flags[:, 0] & AFTERPULSE) != 0).sum()),
        "afterpulses_d": int(((flags[:, 1] & AFTERPULSE) != 0).sum()),
    }


def simulate(cfg: SimConfig) -> SimEstimate:
    totals = dict.fromkeys(_COUNT_FIELDS, 0)
    for _, flags in iter_gate_flags(cfg):
        for k, v in tally(flags).items():
            totals[k] += v
    return SimEstimate(gate_period=cfg.gate_period, **totals)


def replica_seed(seed: int, index: int) -> int:
    state = np.random.SeedSequence([int(seed), int(index)]).generate_state(1, dtype=np.uint64)
    return int(state[0])


def simulate_replicas(cfg: SimConfig, n_replicas: int,
                      workers: int = 1) -> tuple[SimEstimate, list[SimEstimate]]:
    """Split ``cfg.n_gates`` over independent replicas and pool the tallies.

    Each replica runs its own timeline from gate 0 with a derived seed, so
    the pooled result does not depend on ``workers``.
    """
    if n_replicas < 1:
        raise InvalidConfig("n_replicas must be >= 1")
    base, extra = divmod(cfg.n_gates, n_replicas)
    cfgs = [replace(cfg, n_gates=base + (i < extra), seed=replica_seed(cfg.seed, i))
            for i in range(n_replicas)]
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(simulate, cfgs))
    else:
        parts = [simulate(c) for c in cfgs]
    pooled = parts[0]
    for p in parts[1:]:
        pooled = pooled + p
    return pooled, parts


def generate_interval_histogram(cfg: SimConfig, bin_width: float | None = None,
                                detector: str = "c",
                                max_detections: int | None = None) -> IntervalHistogram:
    """Histogram of times between successive detections of one detector.

    Bins are centred on multiples of ``bin_width`` (default: the gate period,
    i.e. one gate per bin), starting at one bin width. Simulation stops
    early once ``max_detections`` detections have been seen.
    """
    bw = cfg.gate_period if bin_width is None else float(bin_width)
    if not bw > 0:
        raise InvalidConfig(f"bin_width must be > 0, got {bin_width!r}")
    col = {"c": 0, "d": 1}[detector]
    gates = []
    seen = 0
    for start, flags in iter_gate_flags(cfg):
        idx = np.flatnonzero(flags[:, col] & CLICK) + start
        gates.append(idx)
        seen += len(idx)
        if max_detections is not None and seen >= max_detections + 1:
            break
    clicks = np.concatenate(gates) if gates else np.zeros(0, dtype=np.int64)
    if max_detections is not None:
        clicks = clicks[: max_detections + 1]
    intervals = np.diff(clicks) * cfg.gate_period
    n_bins = int(np.floor(intervals.max() / bw + 0.5)) if len(intervals) else 0
    edges = (np.arange(n_bins + 1) + 0.5) * bw
    if n_bins == 0:
        return IntervalHistogram(np.array([0.5 * bw]), np.zeros(0, dtype=np.int64))
    counts, _ = np.histogram(intervals, bins=edges)
    return IntervalHistogram(edges, counts)


def generate_timetags(cfg: SimConfig, pulse_width: float = 2e-9) -> TimeTagStream:
    """Time-tag records for every armed gate and every detection.

    Gate records sit at ``k * gate_period`` rounded to the 81 ps tick.
    Detections are placed inside their gate at the pulse arrival time:
    centred in the gate, jittered uniformly over ``pulse_width``. The jitter
    uses its own random stream so the click pattern matches :func:`simulate`
    for the same seed.
    """
    width_c, width_d = cfg.gating_c.gate_width, cfg.gating_d.gate_width
    jitter = _rng(np.random.SeedSequence([int(cfg.seed), _TIMING_STREAM])
                  .generate_state(1, dtype=np.uint64)[0])
    per_gate = cfg.gate_period / TICK_SECONDS
    chans, ticks = [], []
    for start, flags in iter_gate_flags(cfg):
        gate_ticks = np.rint((np.arange(len(flags)) + start) * per_gate).astype(np.uint64)
        u = jitter.random((len(flags), 2))
        for col, width, g_ch, d_ch in ((0, width_c, Channel.GATE_C, Channel.DET_C),
                                       (1, width_d, Channel.GATE_D, Channel.DET_D)):
            armed = (flags[:, col] & ARMED) != 0
            click = (flags[:, col] & CLICK) != 0
            offset_s = 0.5 * width + (u[click, col] - 0.5) * min(pulse_width, width)
            offset = np.clip(np.rint(offset_s / TICK_SECONDS), 0,
                             math.floor(width / TICK_SECONDS)).astype(np.uint64)
            chans.append(np.full(armed.sum(), g_ch, dtype=np.uint8))
            ticks.append(gate_ticks[armed])
            chans.append(np.full(click.sum(), d_ch, dtype=np.uint8))
            ticks.append(gate_ticks[click] + offset)
    if not ticks:
        return TimeTagStream(np.zeros(0, np.uint8), np.zeros(0, np.uint64))
    ch = np.concatenate(chans)
    tk = np.concatenate(ticks)
    order = np.lexsort((ch, tk))
    return TimeTagStream(ch[order], tk[order])
