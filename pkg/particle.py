"""
Particle method for synthetic causal-diffusion data

Every pixel splits its mass into M equal particles; each particle travels a
distance c·tau (randomly perturbed) in one of M directions per step.  The
cloud is binned back onto the pixel grid and uniform positive-mean noise is
added, so the data never come from the discrete operator used for inversion.
"""
import logging
from dataclasses import dataclass, replace

import numpy as np

from errors import ConfigurationError, DomainError
from forward import Grid2D, l2_norm
from green_spectral import split_time

log = logging.getLogger(__name__)

NOISE_KINDS = ("uniform_positive_mean",)
PERTURBATION_SCOPES = ("particle", "step")
DIRECTION_SPANS = ("full_turn", "half_turn")


@dataclass(frozen=True)
class NoiseSpec:
    """Inverse-crime countermeasures.

    Args:
        radius_rel_perturbation: Half width of the uniform relative radius error
        data_noise_level: Relative L² level δ of the additive data noise
        noise_kind: Distribution of the additive noise
        seed: Seed of the additive noise stream
        perturbation_scope: Draw the radius error per particle or once per step
        direction_span: Directions j·2π/M ("full_turn") or j·π/M ("half_turn")
    """
    radius_rel_perturbation: float = 0.0025
    data_noise_level: float = 0.005
    noise_kind: str = "uniform_positive_mean"
    seed: int = 0
    perturbation_scope: str = "particle"
    direction_span: str = "full_turn"

    def __post_init__(self):
        if self.radius_rel_perturbation < 0 or self.data_noise_level < 0:
            raise ConfigurationError("noise levels must be >= 0")
        if self.radius_rel_perturbation >= 1:
            raise ConfigurationError("radius perturbation must stay below 100%")
        if self.noise_kind not in NOISE_KINDS:
            raise ConfigurationError(f"unknown noise kind {self.noise_kind!r}")
        if self.perturbation_scope not in PERTURBATION_SCOPES:
            raise ConfigurationError(f"unknown perturbation scope {self.perturbation_scope!r}")
        if self.direction_span not in DIRECTION_SPANS:
            raise ConfigurationError(f"unknown direction span {self.direction_span!r}")


@dataclass
class ParticleCloud:
    """Particle positions (n, 2) in length units and their masses."""
    positions: np.ndarray
    masses: np.ndarray
    rng_seed: int
    split_count: int

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64).reshape(-1, 2)
        self.masses = np.asarray(self.masses, dtype=np.float64)
        if len(self.positions) != len(self.masses):
            raise DomainError("positions and masses differ in length")
        if np.any(self.masses < 0):
            raise DomainError("particle masses must be >= 0")

    def __len__(self):
        return len(self.masses)

    @property
    def total_mass(self):
        return float(self.masses.sum())


def particle_rng(seed, step_index):
    """Counter-based generator for one (seed, step) stream."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, step_index])))


# ============================================================================
# Scatter / step / gather
# ============================================================================

def scatter(u, M, seed=0):
    """Split each nonzero pixel into M particles at the pixel centre."""
    if M < 1:
        raise DomainError(f"split count M must be >= 1, got {M}")
    if np.any(u.values < 0):
        raise DomainError("particle data need a nonnegative concentration")
    rows, cols = np.nonzero(u.values)
    x = u.origin[0] + cols * u.dx
    y = u.origin[1] + rows * u.dx
    pixel_mass = u.values[rows, cols] * u.dx ** 2
    positions = np.repeat(np.column_stack([x, y]), M, axis=0)
    masses = np.repeat(pixel_mass / M, M)
    return ParticleCloud(positions, masses, seed, M)


def step_cloud(cloud, p, noise, rng, duration=None):
    """Move every particle by R·d for one step.

    d is drawn with equal probability from the M directions tied to the split
    count; R = c·duration·(1 + η) with η uniform on ±radius_rel_perturbation.
    """
    duration = p.tau if duration is None else duration
    n, M = len(cloud), cloud.split_count
    span = 2.0 * np.pi if noise.direction_span == "full_turn" else np.pi
    phi = rng.integers(0, M, size=n) * (span / M)

    rho = noise.radius_rel_perturbation
    if noise.perturbation_scope == "particle":
        eta = rng.uniform(-rho, rho, size=n) if rho else np.zeros(n)
    else:
        eta = np.full(n, rng.uniform(-rho, rho) if rho else 0.0)
    radius = p.c * duration * (1.0 + eta)

    displacement = np.column_stack([radius * np.cos(phi), radius * np.sin(phi)])
    return replace(cloud, positions=cloud.positions + displacement)


def gather(cloud, template):
    """Bin particle masses into the template's pixels.

    Returns:
        (grid, outside_mass) where outside_mass left the template
    """
    col = np.floor((cloud.positions[:, 0] - template.origin[0]) / template.dx + 0.5).astype(np.int64)
    row = np.floor((cloud.positions[:, 1] - template.origin[1]) / template.dx + 0.5).astype(np.int64)
    inside = (row >= 0) & (row < template.rows) & (col >= 0) & (col < template.cols)

    flat = row[inside] * template.cols + col[inside]
    binned = np.bincount(flat, weights=cloud.masses[inside], minlength=template.rows * template.cols)
    values = binned.reshape(template.shape) / template.dx ** 2
    outside_mass = float(cloud.masses[~inside].sum())
    return Grid2D(values, template.dx, template.origin), outside_mass


# ============================================================================
# Data noise and the full pipeline
# ============================================================================

def add_data_noise(w, noise, rng):
    """w + e‖w‖δ/‖e‖ with e uniform on [0, 1]; relative L² perturbation δ."""
    delta = noise.data_noise_level
    if delta == 0:
        return w.with_values(w.values.copy())
    e = rng.uniform(0.0, 1.0, size=w.shape)
    scale = np.linalg.norm(w.values) * delta / np.linalg.norm(e)
    return w.with_values(w.values + scale * e)


def relative_noise_level(w_delta, w_clean):
    """‖w_delta - w_clean‖ / ‖w_delta‖."""
    norm = l2_norm(w_delta)
    if norm == 0:
        return 0.0
    return float(np.linalg.norm(w_delta.values - w_clean.values) * w_delta.dx / norm)


def simulate_data(u, p, T, M, noise, seed=0):
    """Particle-method data w^δ for F_T u: scatter, m+1 steps, gather, noise."""
    if p.N != 2:
        raise ConfigurationError(f"the particle method is two-dimensional, got N={p.N}")
    split = split_time(p, T)
    cloud = scatter(u, M, seed)
    durations = [p.tau] * split.m + [split.s]
    for index, duration in enumerate(durations):
        cloud = step_cloud(cloud, p, noise, particle_rng(seed, index), duration)

    w, outside = gather(cloud, u)
    if outside > 0:
        log.warning("%.3e of %.3e mass left the grid during simulation", outside, cloud.total_mass)
    return add_data_noise(w, noise, particle_rng(noise.seed, len(durations)))
