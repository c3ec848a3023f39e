"""Counting statistics for per-gate click tallies."""

from __future__ import annotations

import math


def binomial_se(successes: int, trials: int) -> float:
    if trials <= 0:
        return 0.0
    p = successes / trials
    return math.sqrt(p * (1.0 - p) / trials)


def visibility_se(n_coin: int, n_c: int, n_d: int, n_gates: int) -> float | None:
    """Delta-method standard error of ``1 - p_coin / (p_c p_d)``.

    The four outcome cells per gate (both, c only, d only, neither) are
    treated as one multinomial draw, so the covariance between the
    coincidence and singles estimates is carried through.
    """
    if n_gates <= 0 or n_c == 0 or n_d == 0:
        return None
    p11 = n_coin / n_gates
    p10 = (n_c - n_coin) / n_gates
    p01 = (n_d - n_coin) / n_gates
    a = p11 + p10
    b = p11 + p01
    ab = a * b
    g11 = -(ab - p11 * (a + b)) / (ab * ab)
    g10 = p11 / (a * ab)
    g01 = p11 / (b * ab)
    mean = g11 * p11 + g10 * p10 + g01 * p01
    second = g11 * g11 * p11 + g10 * g10 * p10 + g01 * g01 * p01
    return math.sqrt(max(second - mean * mean, 0.0) / n_gates)
