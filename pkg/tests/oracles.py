"""Independent reference implementations used by the tests.

Nothing here imports homsim; each function is written from the defining
expressions with mpmath or scipy so agreement is meaningful.
"""

from __future__ import annotations

import math

import mpmath as mp
from scipy import integrate

mp.mp.dps = 40


def i0_series(x, terms: int = 30) -> float:
    x = mp.mpf(x)
    return float(mp.fsum((x / 2) ** (2 * k) / mp.factorial(k) ** 2 for k in range(terms)))


def poisson_pair(m: int, n: int, mu_c: float, mu_d: float) -> float:
    return math.exp(-mu_c - mu_d) * mu_c ** m * mu_d ** n / (math.factorial(m) * math.factorial(n))


def _port_mean_c(mu_a, mu_b, cos_phi, T, dtheta):
    t, r = math.sqrt(T), math.sqrt(1.0 - T)
    return mu_a * T + mu_b * (1 - T) + 2 * math.sqrt(mu_a * mu_b) * t * r * cos_phi * math.cos(dtheta)


def phase_averaged(mu_a, mu_b, cos_phi, T, eta_c, eta_d, dark_c, dark_d):
    """(p_coin, p_c, p_d, v) by adaptive quadrature over the phase difference."""
    total = mu_a + mu_b

    def click_c(th):
        return 1 - math.exp(-eta_c * _port_mean_c(mu_a, mu_b, cos_phi, T, th)) * (1 - dark_c)

    def click_d(th):
        return 1 - math.exp(-eta_d * (total - _port_mean_c(mu_a, mu_b, cos_phi, T, th))) * (1 - dark_d)

    def avg(f):
        return integrate.quad(f, 0.0, 2 * math.pi, epsabs=1e-15, epsrel=1e-13, limit=200)[0] / (2 * math.pi)

    p_coin = avg(lambda th: click_c(th) * click_d(th))
    p_c, p_d = avg(click_c), avg(click_d)
    v = 1 - p_coin / (p_c * p_d) if p_c * p_d > 0 else None
    return p_coin, p_c, p_d, v


def afterpulse_series(p0, tau, dead_time, gate_period, terms: int = 10_000) -> float:
    p0, tau, dt, gp = (mp.mpf(v) for v in (p0, tau, dead_time, gate_period))
    return float(mp.fsum(p0 * mp.e ** (-(dt + k * gp) / tau) for k in range(terms)))


def afterpulse_visibility(mu_a, mu_b, cos_phi, T, eta_c, eta_d, dark_c, dark_d, ap_c, ap_d):
    """Visibility with the after-pulse totals ``ap_c``/``ap_d`` folded in."""
    p_coin, p_c, p_d, _ = phase_averaged(mu_a, mu_b, cos_phi, T, eta_c, eta_d, dark_c, dark_d)
    q_coin = p_coin + (p_c - p_coin) * p_d * ap_d + (p_d - p_coin) * p_c * ap_c
    q_c = p_c * (1 + (1 - p_c) * ap_c)
    q_d = p_d * (1 + (1 - p_d) * ap_d)
    return q_coin, q_c, q_d, 1 - q_coin / (q_c * q_d)


def mu_from_rate(rate, eta, dead_time, gate_period) -> float:
    r, e, dt, gp = (mp.mpf(v) for v in (rate, eta, dead_time, gate_period))
    return float(2 / e * mp.log((1 - r * dt + r * gp) / (1 - r * dt)))
