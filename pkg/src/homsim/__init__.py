"""HOM interference of phase-randomized weak coherent states with realistic detectors."""

from .afterpulse import (
    AfterpulseFit,
    AfterpulseParams,
    GatingConfig,
    IntervalHistogram,
    corrected_coincidence,
    corrected_singles,
    fit_afterpulse,
    mu_from_rate,
    total_afterpulse_probability,
    visibility_with_afterpulse,
)
from .core import (
    BeamSplitter,
    DetectorPair,
    PhaseSample,
    PolarizationState,
    SourcePair,
    VisibilityReport,
    bessel_i0,
    coincidence_probability,
    coincidence_probability_quadrature,
    cos_phi_from_voltage,
    output_means,
    photon_pair_probability,
    polarization_overlap,
    singles_probabilities,
    visibility,
    visibility_small_mu,
)
from .errors import *  # noqa: F401,F403

__version__ = "0.1.0"
