"""
Green functions of causal and standard diffusion in the (k, t) domain

All functions here carry the symmetric Fourier convention, i.e. a factor
(2π)^(-N/2) in front of every transform.  The discrete pipeline works with
dimensionless multipliers (Ĝ scaled by (2π)^(N/2)), and the conversion lives
in fourier_normalization() only.
"""
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from errors import DomainError
from upsilon import evaluator

log = logging.getLogger(__name__)

ZERO_DEDUP_TOL = 1e-9
# Relative slack when snapping t/tau to an integer
SPLIT_SNAP = 1e-12


@dataclass(frozen=True)
class DiffusionParams:
    """Speed c, step time tau and dimension N of causal diffusion."""
    c: float
    tau: float
    N: int = 2

    def __post_init__(self):
        for name in ("c", "tau"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise DomainError(f"{name} must be finite and positive, got {value!r}")
        if int(self.N) != self.N or self.N < 1:
            raise DomainError(f"N must be an integer >= 1, got {self.N!r}")

    @property
    def D0(self):
        """Diffusivity of the standard model matched to first order in k²."""
        return self.c ** 2 * self.tau / (2 * self.N)

    @property
    def D_perturbed(self):
        return self.D0 / math.log(2.0)

    @property
    def step_radius(self):
        """Radius c·tau of one averaging step."""
        return self.c * self.tau


@dataclass(frozen=True)
class TimeSplit:
    """t = m·tau + s with m >= 0 whole steps and s in (0, tau]."""
    m: int
    s: float


def fourier_normalization(N):
    """(2π)^(-N/2), the prefactor of the symmetric transform."""
    return (2.0 * math.pi) ** (-N / 2.0)


def split_time(p, t):
    """Split t > 0 into whole steps and the residual time s in (0, tau]."""
    if not (math.isfinite(t) and t > 0):
        raise DomainError(f"time must be finite and positive, got {t!r}")
    q = t / p.tau
    n = round(q)
    if n >= 1 and abs(q - n) <= SPLIT_SNAP * max(1.0, q):
        return TimeSplit(m=n - 1, s=p.tau)
    m = math.floor(q)
    s = t - m * p.tau
    if s <= 0:
        m, s = m - 1, s + p.tau
    return TimeSplit(m=m, s=min(s, p.tau))


# ============================================================================
# Reference models
# ============================================================================

def causal_multiplier(p, k, t):
    """(2π)^(N/2) Ĝ_causal = Υ_N(k c tau)^m Υ_N(k c s)."""
    split = split_time(p, t)
    ev = evaluator(p.N)
    k = np.abs(np.asarray(k, dtype=float))
    value = np.asarray(ev.eval(k * p.c * split.s))
    if split.m:
        value = value * np.asarray(ev.eval(k * p.c * p.tau)) ** split.m
    return float(value) if value.ndim == 0 else value


def causal_rate_multiplier(p, k, t):
    """Time derivative of causal_multiplier inside the current step."""
    split = split_time(p, t)
    ev = evaluator(p.N)
    k = np.abs(np.asarray(k, dtype=float))
    value = p.c * k * np.asarray(ev.eval_derivative(k * p.c * split.s))
    if split.m:
        value = value * np.asarray(ev.eval(k * p.c * p.tau)) ** split.m
    return float(value) if value.ndim == 0 else value


def ghat_causal(p, k, t):
    """Fourier transform of the causal Green function at |k|, time t."""
    return fourier_normalization(p.N) * causal_multiplier(p, k, t)


def ghat_standard(p, k, t):
    """Fourier transform of the heat kernel with diffusivity D0."""
    k = np.asarray(k, dtype=float)
    value = fourier_normalization(p.N) * np.exp(-p.D0 * k * k * t)
    return float(value) if value.ndim == 0 else value


def ghat_perturbed(p, k, t):
    """Heat kernel transform with the perturbed diffusivity D0/ln 2."""
    k = np.asarray(k, dtype=float)
    value = fourier_normalization(p.N) * np.exp(-p.D_perturbed * k * k * t)
    return float(value) if value.ndim == 0 else value


# ============================================================================
# Zeros and decay
# ============================================================================

def zero_set(p, t, k_max):
    """Wave numbers in (0, k_max] where Ĝ_causal(·, t) vanishes."""
    if not k_max > 0:
        raise DomainError(f"k_max must be positive, got {k_max!r}")
    split = split_time(p, t)
    ev = evaluator(p.N)

    radii = [p.c * split.s]
    if split.m:
        radii.append(p.c * p.tau)
    candidates = []
    for radius in radii:
        roots = ev.zeros_in(0.0, k_max * radius, which="function")
        candidates.extend(r / radius for r in roots if r > 0)

    zeros = []
    for k in sorted(candidates):
        if k <= k_max and (not zeros or k - zeros[-1] > ZERO_DEDUP_TOL):
            zeros.append(k)
    return zeros


def envelope_decay_rate(p, T):
    """Decay exponent of k -> Ĝ_causal(k, T) and the scale a_T.

    Returns:
        (exponent, a_T) with |Ĝ| ~ 1 / (a_T k^exponent) for large k
    """
    split = split_time(p, T)
    half = (p.N - 1) / 2.0
    exponent = (split.m + 1) * half
    a_T = (p.c * p.tau) ** (split.m * half) * (p.c * split.s) ** half
    return exponent, a_T


def envelope_decay_bound(p, T, k):
    """(2π)^(-N/2) C_N^(m+1) / (a_T k^exponent), valid once k c s >= 1."""
    split = split_time(p, T)
    k = np.asarray(k, dtype=float)
    if np.any(k * p.c * split.s < 1):
        raise DomainError("the envelope bound needs k c s >= 1")
    exponent, a_T = envelope_decay_rate(p, T)
    C = evaluator(p.N).envelope_constant()
    value = fourier_normalization(p.N) * C ** (split.m + 1) / (a_T * k ** exponent)
    return float(value) if value.ndim == 0 else value


def spectral_l2_profile(p, T, k):
    """Cumulative ∫_0^k |Ĝ_causal(k', T)|² k'^(N-1) dk' on an increasing grid."""
    k = np.asarray(k, dtype=float)
    integrand = np.asarray(ghat_causal(p, k, T)) ** 2 * k ** (p.N - 1)
    return integrate.cumulative_trapezoid(integrand, k, initial=0.0)


def link_coefficient(p, k_max=0.05, samples=201):
    """Least-squares k² coefficient of 1 - causal_multiplier(k, tau) on [0, k_max].

    The link relation predicts D0·tau = (c tau)²/(2N).
    """
    k = np.linspace(0.0, k_max, samples)
    deficit = 1.0 - np.asarray(causal_multiplier(p, k, p.tau))
    design = np.column_stack([k ** 2, k ** 4])
    coeffs, *_ = np.linalg.lstsq(design, deficit, rcond=None)
    return float(coeffs[0])
