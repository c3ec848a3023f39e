"""Phase-averaged HOM interference of two weak coherent states.

Two phase-randomized coherent pulses with mean photon numbers ``mu_a`` and
``mu_b`` meet at a beam splitter with amplitude coefficients ``t`` and ``r``.
Each output port feeds a threshold detector with efficiency ``eta`` and a
per-gate dark-count probability ``d``. For fixed input phases the output
ports carry independent coherent states, so every click probability is a
product of Poissonian no-click factors; averaging over the relative phase
turns the interference term into a modified Bessel function ``I0``.

The click-probability prefactors are

    C = exp(-eta_c (mu_a t^2 + mu_b r^2)) (1 - d_c)
    D = exp(-eta_d (mu_a r^2 + mu_b t^2)) (1 - d_d)

i.e. the phase-independent part of ``exp(-eta_c mu_c)`` with ``mu_c`` the
mean photon number reaching detector c.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import (
    DegenerateDenominator,
    InvalidBeamSplitter,
    InvalidDetector,
    InvalidSource,
    InvalidVpi,
    ValidationError,
)

TWO_PI = 2.0 * math.pi
_UNITARITY_TOL = 1e-12


def _finite(name: str, value: float, exc: type[ValidationError]) -> float:
    value = float(value)
    if not math.isfinite(value):
        raise exc(f"{name} must be finite, got {value!r}")
    return value


@dataclass(frozen=True)
class SourcePair:
    """Mean photon numbers of the two inputs and their polarization overlap."""

    mu_a: float
    mu_b: float
    cos_phi: float = 1.0

    def __post_init__(self):
        for name in ("mu_a", "mu_b"):
            v = _finite(name, getattr(self, name), InvalidSource)
            if v < 0:
                raise InvalidSource(f"{name} must be >= 0, got {v}")
        c = _finite("cos_phi", self.cos_phi, InvalidSource)
        if not 0.0 <= c <= 1.0:
            raise InvalidSource(f"cos_phi must lie in [0, 1], got {c}")

    @classmethod
    def from_angle(cls, mu_a: float, mu_b: float, phi: float) -> "SourcePair":
        """Build from a polarization mismatch angle in radians."""
        return cls(mu_a, mu_b, min(1.0, abs(math.cos(phi))))


@dataclass(frozen=True)
class PhaseSample:
    theta_a: float
    theta_b: float

    def __post_init__(self):
        for name in ("theta_a", "theta_b"):
            v = getattr(self, name)
            if not (math.isfinite(v) and 0.0 <= v < TWO_PI):
                raise ValidationError(f"{name} must lie in [0, 2*pi), got {v!r}")


@dataclass(frozen=True)
class BeamSplitter:
    """Amplitude transmissivity ``t`` and reflectivity ``r``, ``t**2 + r**2 == 1``."""

    t: float
    r: float

    def __post_init__(self):
        t = _finite("t", self.t, InvalidBeamSplitter)
        r = _finite("r", self.r, InvalidBeamSplitter)
        if t < 0 or r < 0:
            raise InvalidBeamSplitter(f"amplitudes must be >= 0, got t={t}, r={r}")
        if abs(t * t + r * r - 1.0) > _UNITARITY_TOL:
            raise InvalidBeamSplitter(f"t^2 + r^2 = {t * t + r * r!r}, expected 1")

    @classmethod
    def from_transmittance(cls, transmittance: float) -> "BeamSplitter":
        T = float(transmittance)
        if not (math.isfinite(T) and 0.0 < T < 1.0):
            raise InvalidBeamSplitter(f"transmittance must lie in (0, 1), got {transmittance!r}")
        return cls(math.sqrt(T), math.sqrt(1.0 - T))

    @classmethod
    def balanced(cls) -> "BeamSplitter":
        return cls.from_transmittance(0.5)

    @property
    def transmittance(self) -> float:
        return self.t * self.t

    def swapped(self) -> "BeamSplitter":
        return BeamSplitter(self.r, self.t)


@dataclass(frozen=True)
class DetectorPair:
    eta_c: float
    eta_d: float
    dark_c: float = 0.0
    dark_d: float = 0.0

    def __post_init__(self):
        for name in ("eta_c", "eta_d"):
            v = _finite(name, getattr(self, name), InvalidDetector)
            if not 0.0 <= v <= 1.0:
                raise InvalidDetector(f"{name} must lie in [0, 1], got {v}")
        for name in ("dark_c", "dark_d"):
            v = _finite(name, getattr(self, name), InvalidDetector)
            if not 0.0 <= v < 1.0:
                raise InvalidDetector(f"{name} must lie in [0, 1), got {v}")

    def swapped(self) -> "DetectorPair":
        return DetectorPair(self.eta_d, self.eta_c, self.dark_d, self.dark_c)


@dataclass(frozen=True)
class PolarizationState:
    """Polarization at a waveguide modulator: axis angle and TE/TM phase."""

    phi: float
    phase_m: float = 0.0

    def __post_init__(self):
        _finite("phi", self.phi, ValidationError)
        _finite("phase_m", self.phase_m, ValidationError)


@dataclass(frozen=True)
class VisibilityReport:
    p_coin: float
    p_c: float
    p_d: float
    v_hom: float

    def as_dict(self) -> dict:
        return {"p_coin": self.p_coin, "p_c": self.p_c, "p_d": self.p_d, "v_hom": self.v_hom}


def output_means(src: SourcePair, ph: PhaseSample, bs: BeamSplitter) -> tuple[float, float]:
    """Mean photon numbers at output ports c and d for fixed input phases."""
    cross = (
        2.0 * math.sqrt(src.mu_a * src.mu_b) * bs.t * bs.r * src.cos_phi
        * math.cos(ph.theta_a - ph.theta_b)
    )
    total = src.mu_a + src.mu_b
    mu_c = src.mu_a * bs.t ** 2 + src.mu_b * bs.r ** 2 + cross
    # Taking mu_d as the remainder makes mu_c + mu_d == mu_a + mu_b exact.
    mu_c = min(max(mu_c, 0.0), total)
    return mu_c, total - mu_c


def photon_pair_probability(m: int, n: int, mu_c: float, mu_d: float) -> float:
    """Joint Poisson probability of ``m`` photons at c and ``n`` at d."""
    if m < 0 or n < 0 or int(m) != m or int(n) != n:
        raise ValidationError(f"photon numbers must be non-negative integers, got {m}, {n}")
    if mu_c < 0 or mu_d < 0:
        raise ValidationError("mean photon numbers must be >= 0")
    log_p = -mu_c - mu_d
    for k, mu in ((int(m), mu_c), (int(n), mu_d)):
        if k == 0:
            continue
        if mu == 0.0:
            return 0.0
        log_p += k * math.log(mu) - math.lgamma(k + 1)
    return math.exp(log_p)


def bessel_i0(x: float) -> float:
    """Modified Bessel function of the first kind, order zero.

    Summed from the power series ``sum_k (x/2)**(2k) / (k!)**2``. Every term
    is positive, so there is no cancellation; the loop stops once a term
    drops below 1e-16 of the running sum.
    """
    return bessel_i(0, x)


def bessel_i(n: int, x: float) -> float:
    """``I_n(x)`` for integer ``n >= 0`` from its power series."""
    h = 0.5 * x
    term = h ** n / math.factorial(n)
    total = term
    q = h * h
    k = 0
    while term != 0.0:
        k += 1
        term *= q / (k * (k + n))
        total += term
        if abs(term) <= 1e-16 * abs(total):
            break
    return total


def _i0_difference_excess(x: float, y: float) -> float:
    """``I0(x - y) - I0(x) I0(y)`` without cancellation.

    By the addition theorem this is ``2 sum_{k>=1} (-1)^k I_k(x) I_k(y)``,
    which is never positive for x, y >= 0 and is accurate to full relative
    precision even when both Bessel values are close to one.
    """
    total = 0.0
    k = 0
    while True:
        k += 1
        term = bessel_i(k, x) * bessel_i(k, y)
        total += -term if k % 2 else term
        if term <= 1e-17 * abs(total):
            return 2.0 * total


def _log_prefactors(src: SourcePair, bs: BeamSplitter, det: DetectorPair) -> tuple[float, float]:
    t2, r2 = bs.t ** 2, bs.r ** 2
    log_c = -det.eta_c * (src.mu_a * t2 + src.mu_b * r2) + math.log1p(-det.dark_c)
    log_d = -det.eta_d * (src.mu_a * r2 + src.mu_b * t2) + math.log1p(-det.dark_d)
    return log_c, log_d


def _interference_amplitude(src: SourcePair, bs: BeamSplitter) -> float:
    return 2.0 * math.sqrt(src.mu_a * src.mu_b) * bs.t * bs.r * src.cos_phi


def singles_probabilities(src: SourcePair, bs: BeamSplitter,
                          det: DetectorPair) -> tuple[float, float]:
    """Phase-averaged probabilities that detector c (resp. d) clicks in a gate."""
    log_c, log_d = _log_prefactors(src, bs, det)
    amp = _interference_amplitude(src, bs)
    p_c = -math.expm1(log_c + math.log(bessel_i0(det.eta_c * amp)))
    p_d = -math.expm1(log_d + math.log(bessel_i0(det.eta_d * amp)))
    return p_c, p_d


def _coincidence_excess(src: SourcePair, bs: BeamSplitter, det: DetectorPair) -> float:
    """``p_coin - p_c p_d``, the (non-positive) interference term."""
    amp = _interference_amplitude(src, bs)
    if amp == 0.0:
        return 0.0
    log_c, log_d = _log_prefactors(src, bs, det)
    return math.exp(log_c + log_d) * _i0_difference_excess(det.eta_c * amp, det.eta_d * amp)


def coincidence_probability(src: SourcePair, bs: BeamSplitter, det: DetectorPair) -> float:
    """Phase-averaged probability that both detectors click in the same gate."""
    p_c, p_d = singles_probabilities(src, bs, det)
    # 1 - C I0(a_c) - D I0(a_d) + C D I0(a_c - a_d), written as the product
    # of the singles plus a correction that carries all the interference
    p = p_c * p_d + _coincidence_excess(src, bs, det)
    return min(max(p, 0.0), min(p_c, p_d))


def coincidence_probability_quadrature(src: SourcePair, bs: BeamSplitter,
                                       det: DetectorPair, n_nodes: int = 512) -> float:
    """Coincidence probability by explicit numerical phase averaging.

    Averages the fixed-phase product of click probabilities over the relative
    phase with an ``n_nodes``-point periodic trapezoid rule. Only the phase
    difference enters, so the double average collapses to one dimension. The
    Bessel closed form is never used here, which makes this an independent
    check on :func:`coincidence_probability`.
    """
    if n_nodes < 64:
        raise ValidationError(f"n_nodes must be >= 64, got {n_nodes}")
    acc = 0.0
    for j in range(n_nodes):
        mu_c, mu_d = output_means(src, PhaseSample(TWO_PI * j / n_nodes, 0.0), bs)
        click_c = 1.0 - math.exp(-det.eta_c * mu_c) * (1.0 - det.dark_c)
        click_d = 1.0 - math.exp(-det.eta_d * mu_d) * (1.0 - det.dark_d)
        acc += click_c * click_d
    return acc / n_nodes


def visibility_from_probabilities(p_coin: float, p_c: float, p_d: float) -> float:
    denom = p_c * p_d
    if denom <= 0.0:
        raise DegenerateDenominator(
            f"singles product is zero (p_c={p_c}, p_d={p_d}); visibility undefined"
        )
    return 1.0 - p_coin / denom


def visibility(src: SourcePair, bs: BeamSplitter, det: DetectorPair) -> VisibilityReport:
    p_c, p_d = singles_probabilities(src, bs, det)
    p_coin = coincidence_probability(src, bs, det)
    if p_c * p_d <= 0.0:
        visibility_from_probabilities(p_coin, p_c, p_d)  # raises
    # straight from the interference term, so small visibilities keep
    # their relative precision
    excess = _coincidence_excess(src, bs, det)
    v = 0.0 if excess == 0.0 else min(-excess / (p_c * p_d), 1.0)
    return VisibilityReport(p_coin, p_c, p_d, v)


def visibility_small_mu(src: SourcePair, bs: BeamSplitter) -> float:
    """Weak-input, dark-count-free approximation to the visibility.

    Note the denominator carries the amplitudes ``t`` and ``r`` rather than
    the intensities; for a balanced splitter this reduces to
    ``2 mu_a mu_b cos^2 / (mu_a + mu_b)^2``.
    """
    t, r = bs.t, bs.r
    denom = (t * src.mu_a + r * src.mu_b) * (r * src.mu_a + t * src.mu_b)
    if denom == 0.0:
        raise DegenerateDenominator("both mean photon numbers are zero")
    return 2.0 * t * r * src.mu_a * src.mu_b * src.cos_phi ** 2 / denom


def polarization_overlap(a: PolarizationState, b: PolarizationState) -> float:
    """``|e_a . conj(e_b)|`` for states written in the TE/TM basis."""
    z = (math.cos(a.phi) * math.cos(b.phi)
         + math.sin(a.phi) * math.sin(b.phi) * complex(math.cos(a.phase_m - b.phase_m),
                                                       math.sin(a.phase_m - b.phase_m)))
    return min(abs(z), 1.0)


def cos_phi_from_voltage(v_g: float, v_pi: float) -> float:
    """Polarization overlap for a 45-degree input and modulator drive ``v_g``."""
    if not (math.isfinite(v_pi) and v_pi > 0):
        raise InvalidVpi(f"v_pi must be > 0, got {v_pi!r}")
    # |cos(pi x / 2)| has period 2 in x; written as a sine of the distance to
    # the nearest odd x so that v_g = v_pi gives exactly zero
    x = abs(math.remainder(v_g / v_pi, 2.0))
    return min(math.sin(0.5 * math.pi * (1.0 - x)), 1.0)
