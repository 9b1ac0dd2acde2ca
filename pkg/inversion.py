"""
Backwards causal diffusion: recover u from w = F_T u

  - projected Landweber with the discrepancy principle (noisy data)
  - spectral Moore-Penrose inverse with masking near the zeros of Ĝ
  - time reversal for T <= tau, using w and its time derivative
"""
import csv
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from errors import ConfigurationError, DomainError, NumericalError, StagnationError
from forward import (
    DEFAULT_STENCIL_POINTS,
    PATHS,
    adjoint_apply,
    apply_forward,
    from_spectrum,
    l2_norm,
    to_spectrum,
    wave_numbers,
)
from green_spectral import causal_multiplier, split_time
from upsilon import evaluator

log = logging.getLogger(__name__)

STOP_REASONS = ("discrepancy", "max_iters")
MASK_RTOL = 1e-3
MASK_WARN_FRACTION = 0.5
BAND_SPLIT_TOL = 1e-3


# ============================================================================
# Landweber
# ============================================================================

@dataclass(frozen=True)
class LandweberConfig:
    """Settings of the projected Landweber iteration.

    Args:
        eta: Discrepancy factor, at least 2
        delta: Relative L² noise level of the data
        max_iters: Iteration limit
        forward_path: "spatial" or "spectral"
        stencil_points: Circle points of the spatial path
        omega_max: Optional upper bound of the relaxation parameter (none by default)
    """
    eta: float = 2.0
    delta: float = 0.005
    max_iters: int = 100
    forward_path: str = "spatial"
    stencil_points: int = DEFAULT_STENCIL_POINTS
    omega_max: float = math.inf

    def __post_init__(self):
        if not self.eta >= 2:
            raise ConfigurationError(f"eta must be >= 2, got {self.eta!r}")
        if not self.delta >= 0:
            raise ConfigurationError(f"delta must be >= 0, got {self.delta!r}")
        if int(self.max_iters) != self.max_iters or self.max_iters < 1:
            raise ConfigurationError(f"max_iters must be an integer >= 1, got {self.max_iters!r}")
        if self.forward_path not in PATHS:
            raise ConfigurationError(f"unknown forward path {self.forward_path!r}")
        if not self.omega_max > 0:
            raise ConfigurationError(f"omega_max must be positive, got {self.omega_max!r}")


@dataclass
class LandweberState:
    """Iterate plus history; residual_norms[n] belongs to iterate n.

    omegas[n] is the relaxation used to go from iterate n to n + 1.
    """
    iterate: object
    residual_norms: list = field(default_factory=list)
    omegas: list = field(default_factory=list)
    min_values: list = field(default_factory=list)
    masses: list = field(default_factory=list)
    stopped_at: int = None
    stop_reason: str = None
    forward_iterate: object = None

    @property
    def iterations(self):
        return len(self.omegas)


def _forward(u, p, T, cfg):
    return apply_forward(u, p, T, cfg.forward_path, cfg.stencil_points)


def _check_compatible(u, w):
    if u.shape != w.shape or u.dx != w.dx:
        raise DomainError(f"grids differ: {u.shape}/{u.dx} vs {w.shape}/{w.dx}")


def initial_state(w_delta, p, T, cfg, u0=None):
    """State at iterate 0; u0 defaults to zero."""
    u = w_delta.with_values(np.zeros_like(w_delta.values)) if u0 is None else u0
    _check_compatible(u, w_delta)
    if np.any(u.values < 0):
        raise DomainError("the initial iterate must be nonnegative")
    Fu = _forward(u, p, T, cfg)
    return LandweberState(
        iterate=u,
        residual_norms=[l2_norm(Fu.with_values(Fu.values - w_delta.values))],
        min_values=[float(u.values.min())],
        masses=[u.total_mass],
        forward_iterate=Fu,
    )


def landweber_step(state, w_delta, p, T, cfg):
    """u <- max(0, u - ω F*(F u - w)) with ω = ¼‖r‖²/‖F r‖² (at most omega_max)."""
    u = state.iterate
    _check_compatible(u, w_delta)
    Fu = state.forward_iterate if state.forward_iterate is not None else _forward(u, p, T, cfg)
    r = Fu.with_values(Fu.values - w_delta.values)
    r_norm = l2_norm(r)

    if r_norm == 0:
        omega, new = 0.0, u.with_values(u.values.copy())
    else:
        Fr = adjoint_apply(r, p, T, cfg.stencil_points, cfg.forward_path)
        Fr_norm = l2_norm(Fr)
        if Fr_norm == 0:
            raise StagnationError(
                f"residual {r_norm:.3e} lies in the numerical null space of F_T"
            )
        omega = min(0.25 * r_norm ** 2 / Fr_norm ** 2, cfg.omega_max)
        new = u.with_values(np.maximum(0.0, u.values - omega * Fr.values))

    F_new = _forward(new, p, T, cfg)
    residual = l2_norm(F_new.with_values(F_new.values - w_delta.values))
    return replace(
        state,
        iterate=new,
        residual_norms=state.residual_norms + [residual],
        omegas=state.omegas + [omega],
        min_values=state.min_values + [float(new.values.min())],
        masses=state.masses + [new.total_mass],
        forward_iterate=F_new,
    )


def solve_landweber(w_delta, p, T, cfg, u0=None):
    """Iterate until ‖F u_n - w‖ < η δ ‖w‖ or max_iters steps were taken."""
    threshold = cfg.eta * cfg.delta * l2_norm(w_delta)
    state = initial_state(w_delta, p, T, cfg, u0)
    log.info("landweber: T=%g, threshold %.6e, residual_0 %.6e", T, threshold, state.residual_norms[0])

    while True:
        n = state.iterations
        if state.residual_norms[-1] < threshold:
            log.info("landweber: discrepancy reached after %d steps", n)
            return replace(state, stopped_at=n, stop_reason="discrepancy")
        if n >= cfg.max_iters:
            log.warning("landweber: max_iters=%d reached, residual %.6e", n, state.residual_norms[-1])
            return replace(state, stopped_at=n, stop_reason="max_iters")
        state = landweber_step(state, w_delta, p, T, cfg)
        log.info(
            "landweber: step %3d  residual %.6e  omega %.4f",
            state.iterations, state.residual_norms[-1], state.omegas[-1],
        )


def relative_error(estimate, truth):
    """‖estimate - truth‖ / ‖truth‖."""
    _check_compatible(estimate, truth)
    norm = np.linalg.norm(truth.values)
    if norm == 0:
        raise DomainError("relative error against a zero image")
    return float(np.linalg.norm(estimate.values - truth.values) / norm)


def write_iteration_log(state, path):
    """CSV with one row per iterate: iteration, residual_norm, omega, min_value, mass."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["iteration", "residual_norm", "omega", "min_value", "mass"])
        for n, residual in enumerate(state.residual_norms):
            omega = repr(state.omegas[n]) if n < len(state.omegas) else ""
            writer.writerow([n, repr(residual), omega, repr(state.min_values[n]), repr(state.masses[n])])


# ============================================================================
# Spectral inverses
# ============================================================================

@dataclass
class SpectralInverse:
    grid: object
    masked_fraction: float


def moore_penrose_spectral(w, p, T, zero_mask_tol=None):
    """Divide by the causal multiplier where it exceeds zero_mask_tol, zero elsewhere."""
    multiplier = np.asarray(causal_multiplier(p, wave_numbers(w.shape, w.dx), T))
    magnitude = np.abs(multiplier)
    tol = MASK_RTOL * float(magnitude.max()) if zero_mask_tol is None else zero_mask_tol
    if not tol >= 0:
        raise ConfigurationError(f"zero_mask_tol must be >= 0, got {zero_mask_tol!r}")

    keep = magnitude > tol
    spectrum = to_spectrum(w)
    coeffs = np.zeros_like(spectrum.coeffs)
    coeffs[keep] = spectrum.coeffs[keep] / multiplier[keep]
    masked_fraction = 1.0 - float(np.count_nonzero(keep)) / keep.size
    if masked_fraction > MASK_WARN_FRACTION:
        log.warning("moore-penrose: %.1f%% of the frequency bins are masked", 100 * masked_fraction)

    grid = from_spectrum(replace(spectrum, coeffs=coeffs))
    return SpectralInverse(w.with_values(grid.values), masked_fraction)


def time_reversal(w, w2, p, T, band_split_tol=BAND_SPLIT_TOL):
    """u from w = F_T u and w2 = ∂_t F_t u at t = T, for 0 < T <= tau.

    Bins with |Υ_N(|k|cT)| >= band_split_tol are divided by Υ_N, the rest use
    w2 divided by c|k| Υ'_N.
    """
    if not 0 < band_split_tol < 1:
        raise ConfigurationError(f"band_split_tol must lie in (0, 1), got {band_split_tol!r}")
    _check_compatible(w, w2)
    split = split_time(p, T)
    if split.m:
        raise DomainError(f"time reversal needs 0 < T <= tau, got T={T}, tau={p.tau}")

    k = wave_numbers(w.shape, w.dx)
    ev = evaluator(p.N)
    arg = k * p.c * split.s
    value = np.asarray(ev.eval(arg))
    slope = np.asarray(ev.eval_derivative(arg))

    band_a = np.abs(value) >= band_split_tol
    band_b = ~band_a
    if np.any(np.abs(slope[band_b]) < band_split_tol):
        raise NumericalError("Υ_N and Υ'_N are both below band_split_tol in some bin")

    spec_w = to_spectrum(w)
    spec_w2 = to_spectrum(w2)
    coeffs = np.zeros_like(spec_w.coeffs)
    coeffs[band_a] = spec_w.coeffs[band_a] / value[band_a]
    coeffs[band_b] = spec_w2.coeffs[band_b] / (p.c * k[band_b] * slope[band_b])
    log.debug("time reversal: %d of %d bins use the rate data", np.count_nonzero(band_b), k.size)

    grid = from_spectrum(replace(spec_w, coeffs=coeffs))
    return w.with_values(grid.values)
