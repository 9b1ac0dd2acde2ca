"""
Forward operator F_T of causal diffusion on pixel grids

Three realisations of the same map:
  - spatial:  repeated circle averages (one per step time tau, plus the rest)
  - spectral: Fourier multiplier Υ_N(|k| c tau)^m Υ_N(|k| c s) on the DFT lattice
  - Euler:    the explicit 5-point scheme of standard diffusion, kept as reference
"""
import logging
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import ndimage

from errors import ConfigurationError, DomainError
from green_spectral import causal_multiplier, causal_rate_multiplier, split_time

log = logging.getLogger(__name__)

# Stencil samples this close (in pixels) to a lattice point read that point
LATTICE_SNAP = 1e-9
RADIUS_RTOL = 1e-12
DEFAULT_STENCIL_POINTS = 50
PATHS = ("spatial", "spectral")


# ============================================================================
# Grid types
# ============================================================================

@dataclass
class Grid2D:
    """Concentration image with square pixels of edge dx.

    values[row, col] sits at (origin_x + col*dx, origin_y + row*dx).
    """
    values: np.ndarray
    dx: float
    origin: tuple = (0.0, 0.0)
    clipped: bool = False

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or min(self.values.shape) < 1:
            raise DomainError(f"Grid2D needs a non-empty 2D array, got shape {self.values.shape}")
        if not (math.isfinite(self.dx) and self.dx > 0):
            raise DomainError(f"pixel size must be positive, got {self.dx!r}")
        if not np.all(np.isfinite(self.values)):
            raise DomainError("Grid2D values must be finite")
        self.origin = (float(self.origin[0]), float(self.origin[1]))

    @property
    def rows(self):
        return self.values.shape[0]

    @property
    def cols(self):
        return self.values.shape[1]

    @property
    def shape(self):
        return self.values.shape

    @property
    def total_mass(self):
        return float(self.values.sum() * self.dx ** 2)

    def with_values(self, values, clipped=None):
        """Same geometry, new values."""
        return replace(self, values=values, clipped=self.clipped if clipped is None else clipped)

    def pixel_centers(self):
        """(X, Y) coordinate arrays of the pixel centres."""
        x = self.origin[0] + self.dx * np.arange(self.cols)
        y = self.origin[1] + self.dx * np.arange(self.rows)
        return np.meshgrid(x, y)


@dataclass
class Grid1D:
    values: np.ndarray
    dx: float
    origin: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 1 or self.values.size < 1:
            raise DomainError("Grid1D needs a non-empty 1D array")
        if not (math.isfinite(self.dx) and self.dx > 0):
            raise DomainError(f"pixel size must be positive, got {self.dx!r}")

    @property
    def total_mass(self):
        return float(self.values.sum() * self.dx)


@dataclass
class Spectrum:
    """Unitary DFT of a Grid2D together with the grid geometry."""
    coeffs: np.ndarray
    dx: float
    origin: tuple = (0.0, 0.0)

    @property
    def shape(self):
        return self.coeffs.shape


@dataclass(frozen=True)
class CircleStencil:
    """Equally spaced points on a circle, equal weights 1/n_points."""
    radius: float
    n_points: int = DEFAULT_STENCIL_POINTS

    def __post_init__(self):
        if self.n_points < 4:
            raise ConfigurationError(f"a circle stencil needs >= 4 points, got {self.n_points}")
        if not self.radius > 0:
            raise ConfigurationError(f"stencil radius must be positive, got {self.radius!r}")

    @property
    def angles(self):
        return 2.0 * np.pi * np.arange(self.n_points) / self.n_points

    @property
    def offsets(self):
        """(n_points, 2) array of (x, y) offsets in length units."""
        return self.radius * np.column_stack([np.cos(self.angles), np.sin(self.angles)])

    @property
    def weights(self):
        return np.full(self.n_points, 1.0 / self.n_points)


# ============================================================================
# Norms, padding, spectra
# ============================================================================

def inner_product(u, w):
    """Discrete L² inner product dx²·Σ u w."""
    return float(np.vdot(u.values, w.values).real * u.dx ** 2)


def l2_norm(u):
    return float(np.linalg.norm(u.values) * u.dx)


def required_padding(p, T, dx):
    """Free-space margin in pixels for evolving to time T."""
    return math.ceil(p.c * T / dx) + 2


def pad_grid(u, pixels):
    values = np.pad(u.values, pixels, mode="constant")
    origin = (u.origin[0] - pixels * u.dx, u.origin[1] - pixels * u.dx)
    return Grid2D(values, u.dx, origin, u.clipped)


def crop_grid(u, pixels):
    if pixels == 0:
        return u
    values = u.values[pixels:-pixels, pixels:-pixels]
    origin = (u.origin[0] + pixels * u.dx, u.origin[1] + pixels * u.dx)
    return Grid2D(values.copy(), u.dx, origin, u.clipped)


def wave_numbers(shape, dx):
    """|k| on the DFT lattice, k_j = 2π j/(n dx) with signed j."""
    ky = 2.0 * np.pi * np.fft.fftfreq(shape[0], d=dx)
    kx = 2.0 * np.pi * np.fft.fftfreq(shape[1], d=dx)
    return np.hypot(ky[:, None], kx[None, :])


def to_spectrum(u):
    return Spectrum(np.fft.fft2(u.values, norm="ortho"), u.dx, u.origin)


def from_spectrum(spectrum):
    values = np.fft.ifft2(spectrum.coeffs, norm="ortho").real
    return Grid2D(values, spectrum.dx, spectrum.origin)


# ============================================================================
# Sampling helpers
# ============================================================================

def _integer_shift(values, offset):
    """out[i] = values[i + offset], zero where i + offset leaves the array."""
    out = np.zeros_like(values)
    dst, src = [], []
    for size, d in zip(values.shape, offset):
        lo, hi = max(0, -d), min(size, size - d)
        if lo >= hi:
            return out
        dst.append(slice(lo, hi))
        src.append(slice(lo + d, hi + d))
    out[tuple(dst)] = values[tuple(src)]
    return out


def _sample(values, offset):
    """Linear interpolation of values at index + offset (pixels), zero outside."""
    offset = np.asarray(offset, dtype=float)
    nearest = np.round(offset)
    if np.all(np.abs(offset - nearest) <= LATTICE_SNAP):
        return _integer_shift(values, tuple(int(v) for v in nearest))
    return ndimage.shift(values, -offset, order=1, mode="grid-constant", cval=0.0, prefilter=False)


def _touches_border(values, margin):
    """True if any nonzero value lies within `margin` pixels of the border."""
    rows, cols = values.shape
    if 2 * margin >= min(rows, cols):
        return bool(np.any(values))
    interior = values[margin:rows - margin, margin:cols - margin]
    return bool(np.count_nonzero(values) != np.count_nonzero(interior))


# ============================================================================
# Spatial path
# ============================================================================

def step_spatial(u, p, s, stencil):
    """One averaging step: mean of u over the circle of radius c·s around each pixel."""
    if p.N != 2:
        raise ConfigurationError(f"spatial stepping is two-dimensional, got N={p.N}")
    if not (0 < s <= p.tau * (1 + RADIUS_RTOL)):
        raise DomainError(f"step time must lie in (0, tau], got {s!r}")
    if abs(stencil.radius - p.c * s) > RADIUS_RTOL * max(1.0, stencil.radius):
        raise ConfigurationError(
            f"stencil radius {stencil.radius} does not match c*s = {p.c * s}"
        )

    margin = math.ceil(stencil.radius / u.dx) + 1
    clipped = _touches_border(u.values, margin)
    if clipped:
        log.warning("support within %d pixels of the border, mass may leave the grid", margin)

    acc = np.zeros_like(u.values)
    for ox, oy in stencil.offsets / u.dx:
        acc = acc + _sample(u.values, (oy, ox))
    return u.with_values(acc * (1.0 / stencil.n_points), clipped=u.clipped or clipped)


def evolve(u, p, T, stencil_points=DEFAULT_STENCIL_POINTS):
    """F_T u on the spatial path: m full steps then one step of the residual time."""
    split = split_time(p, T)
    out = u
    if split.m:
        full = CircleStencil(p.c * p.tau, stencil_points)
        for _ in range(split.m):
            out = step_spatial(out, p, p.tau, full)
    return step_spatial(out, p, split.s, CircleStencil(p.c * split.s, stencil_points))


def step_1d(u, p, s):
    """Two-point average ½[u(x - cs) + u(x + cs)] on a line."""
    if p.N != 1:
        raise ConfigurationError(f"step_1d is one-dimensional, got N={p.N}")
    if not (0 < s <= p.tau * (1 + RADIUS_RTOL)):
        raise DomainError(f"step time must lie in (0, tau], got {s!r}")
    shift = p.c * s / u.dx
    left = _sample(u.values, (-shift,))
    right = _sample(u.values, (shift,))
    return Grid1D(0.5 * (left + right), u.dx, u.origin)


# ============================================================================
# Spectral path
# ============================================================================

def evolve_spectral(u, p, T):
    """F_T u as a Fourier multiplier; the caller pads against wrap-around."""
    spectrum = to_spectrum(u)
    multiplier = causal_multiplier(p, wave_numbers(u.shape, u.dx), T)
    out = from_spectrum(replace(spectrum, coeffs=spectrum.coeffs * multiplier))
    return u.with_values(out.values)


def evolve_spectral_rate(u, p, T):
    """∂/∂t of F_t u at t = T, from the multiplier c|k| Υ'_N(|k| c s)."""
    spectrum = to_spectrum(u)
    multiplier = causal_rate_multiplier(p, wave_numbers(u.shape, u.dx), T)
    out = from_spectrum(replace(spectrum, coeffs=spectrum.coeffs * multiplier))
    return u.with_values(out.values)


def apply_forward(u, p, T, path="spatial", stencil_points=DEFAULT_STENCIL_POINTS):
    if path == "spatial":
        return evolve(u, p, T, stencil_points)
    if path == "spectral":
        return evolve_spectral(u, p, T)
    raise ConfigurationError(f"unknown forward path {path!r}, expected one of {PATHS}")


def adjoint_apply(w, p, T, stencil_points=DEFAULT_STENCIL_POINTS, path="spatial"):
    """F_T* w.  The kernel is even, so this is F_T itself."""
    return apply_forward(w, p, T, path, stencil_points)


# ============================================================================
# Standard diffusion reference
# ============================================================================

def _euler_update(values, lam):
    """(1 - 4λ) v + λ (E + N + W + S) with zero values outside the grid."""
    neighbours = _integer_shift(values, (0, 1))
    neighbours = neighbours + _integer_shift(values, (1, 0))
    neighbours = neighbours + _integer_shift(values, (0, -1))
    neighbours = neighbours + _integer_shift(values, (-1, 0))
    return (1.0 - 4.0 * lam) * values + lam * neighbours


def evolve_euler_standard(u, p, T, dt):
    """Explicit Euler for u_t = D0 Δu up to time T; the last step is shortened."""
    if p.N != 2:
        raise ConfigurationError(f"the Euler reference is two-dimensional, got N={p.N}")
    if not (T > 0 and dt > 0):
        raise DomainError(f"need T > 0 and dt > 0, got T={T!r}, dt={dt!r}")
    limit = u.dx ** 2 / (2 * p.N * p.D0)
    if dt > limit * (1 + RADIUS_RTOL):
        raise ConfigurationError(f"dt = {dt} exceeds the stability limit {limit}")

    q = T / dt
    n_full = round(q)
    if abs(q - n_full) > RADIUS_RTOL * max(1.0, q):
        n_full = math.floor(q)
    remainder = T - n_full * dt

    values = u.values
    lam = p.D0 * dt / u.dx ** 2
    for _ in range(n_full):
        values = _euler_update(values, lam)
    if remainder > RADIUS_RTOL * dt:
        values = _euler_update(values, p.D0 * remainder / u.dx ** 2)
    return u.with_values(values)
