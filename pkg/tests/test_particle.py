#!/usr/bin/env python3
"""
Tests for the particle-method data simulator
"""
import os
import sys

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import numpy as np
import pytest
from scipy import stats

from errors import ConfigurationError, DomainError
from forward import Grid2D, evolve
from green_spectral import DiffusionParams
from particle import (
    NoiseSpec,
    ParticleCloud,
    add_data_noise,
    gather,
    particle_rng,
    relative_noise_level,
    scatter,
    simulate_data,
    step_cloud,
)
from phantoms import gaussian_blob, unit_pixel

QUIET = NoiseSpec(radius_rel_perturbation=0.0, data_noise_level=0.0)


def blob(n=64):
    dx = 1.0 / (n - 1)
    return gaussian_blob(n, n, dx, width=0.1, truncate=3.0)


# ============================================================================
# Scatter / gather bookkeeping
# ============================================================================

def test_scatter_conserves_mass():
    u = blob(32)
    cloud = scatter(u, 7)
    assert len(cloud) == 7 * np.count_nonzero(u.values)
    assert cloud.total_mass == pytest.approx(u.total_mass, rel=1e-12)
    assert cloud.split_count == 7


def test_scatter_rejects_negative_values_and_bad_split():
    values = np.zeros((4, 4))
    values[1, 1] = -1.0
    with pytest.raises(DomainError):
        scatter(Grid2D(values, 1.0), 4)
    with pytest.raises(DomainError):
        scatter(unit_pixel(4, 4, 1.0), 0)


def test_gather_without_motion_restores_grid():
    u = blob(32)
    w, outside = gather(scatter(u, 5), u)
    assert outside == 0.0
    np.testing.assert_allclose(w.values, u.values, rtol=1e-12, atol=1e-14)


def test_gather_reports_mass_outside():
    u = unit_pixel(8, 8, 1.0)
    cloud = ParticleCloud(np.array([[3.0, 3.0], [100.0, 3.0]]), np.array([0.25, 0.75]), 0, 2)
    w, outside = gather(cloud, u)
    assert outside == pytest.approx(0.75)
    assert w.total_mass + outside == pytest.approx(cloud.total_mass)
    assert w.values[3, 3] == pytest.approx(0.25)


# ============================================================================
# Stepping
# ============================================================================

def test_step_moves_particles_exactly_one_radius():
    p = DiffusionParams(c=2.0, tau=0.5)
    cloud = scatter(unit_pixel(9, 9, 1.0), 16)
    moved = step_cloud(cloud, p, QUIET, particle_rng(0, 0))
    distance = np.hypot(*(moved.positions - cloud.positions).T)
    np.testing.assert_allclose(distance, 1.0, rtol=1e-12)
    assert moved.total_mass == cloud.total_mass


def test_perturbed_radius_stays_in_band():
    p = DiffusionParams(c=1.0, tau=1.0)
    noise = NoiseSpec(radius_rel_perturbation=0.01, data_noise_level=0.0)
    cloud = scatter(unit_pixel(9, 9, 1.0), 500)
    moved = step_cloud(cloud, p, noise, particle_rng(3, 0))
    distance = np.hypot(*(moved.positions - cloud.positions).T)
    assert distance.min() >= 0.99 - 1e-12
    assert distance.max() <= 1.01 + 1e-12
    assert distance.std() > 0


def test_step_scope_shares_one_radius():
    p = DiffusionParams(c=1.0, tau=1.0)
    noise = NoiseSpec(radius_rel_perturbation=0.01, data_noise_level=0.0, perturbation_scope="step")
    cloud = scatter(unit_pixel(9, 9, 1.0), 50)
    moved = step_cloud(cloud, p, noise, particle_rng(3, 0))
    distance = np.hypot(*(moved.positions - cloud.positions).T)
    np.testing.assert_allclose(distance, distance[0], rtol=1e-12)


def test_direction_sets():
    p = DiffusionParams(c=1.0, tau=1.0)
    for span, M, expected in (
        ("full_turn", 4, {(1, 0), (0, 1), (-1, 0), (0, -1)}),
        ("half_turn", 2, {(1, 0), (0, 1)}),
    ):
        noise = NoiseSpec(radius_rel_perturbation=0.0, data_noise_level=0.0, direction_span=span)
        cloud = scatter(unit_pixel(5, 5, 1.0), M)
        cloud = ParticleCloud(np.repeat(cloud.positions, 100, axis=0), np.repeat(cloud.masses, 100), 0, M)
        moved = step_cloud(cloud, p, noise, particle_rng(1, 0))
        steps = np.rint(moved.positions - cloud.positions).astype(int)
        assert {tuple(s) for s in steps} == expected


def test_directions_are_uniform_over_split_count():
    p = DiffusionParams(c=1.0, tau=1.0)
    M = 16
    n = 100_000
    cloud = ParticleCloud(np.zeros((n, 2)), np.full(n, 1.0 / n), 0, M)
    moved = step_cloud(cloud, p, QUIET, particle_rng(11, 0))
    angle = np.arctan2(moved.positions[:, 1], moved.positions[:, 0])
    index = np.rint(angle / (2 * np.pi / M)).astype(int) % M
    counts = np.bincount(index, minlength=M)
    assert counts.sum() == n
    assert stats.chisquare(counts).pvalue > 0.01


def test_particles_respect_finite_speed():
    p = DiffusionParams(c=1.0, tau=0.05)
    noise = NoiseSpec(radius_rel_perturbation=0.0025, data_noise_level=0.0)
    u = blob(32)
    cloud = scatter(u, 12)
    start = cloud.positions.copy()
    for step in range(3):
        cloud = step_cloud(cloud, p, noise, particle_rng(0, step))
    travelled = np.hypot(*(cloud.positions - start).T)
    assert travelled.max() <= 3 * p.c * p.tau * 1.0025 * (1 + 1e-12)


# ============================================================================
# Full pipeline
# ============================================================================

def test_simulation_is_deterministic():
    p = DiffusionParams(c=1.0, tau=4.0 / 31)
    u = blob(32)
    noise = NoiseSpec(seed=5)
    a = simulate_data(u, p, 1.5 * p.tau, 16, noise, seed=2)
    b = simulate_data(u, p, 1.5 * p.tau, 16, noise, seed=2)
    c = simulate_data(u, p, 1.5 * p.tau, 16, noise, seed=3)
    assert np.array_equal(a.values, b.values)
    assert not np.array_equal(a.values, c.values)


def test_noise_free_simulation_conserves_mass():
    p = DiffusionParams(c=1.0, tau=2.0 / 31)
    u = blob(32)
    w = simulate_data(u, p, 2 * p.tau, 10, QUIET, seed=0)
    assert w.total_mass == pytest.approx(u.total_mass, rel=1e-12)


def test_data_noise_has_requested_level_and_positive_mean():
    rng = np.random.default_rng(0)
    w = Grid2D(rng.uniform(size=(32, 32)), 0.1)
    noise = NoiseSpec(data_noise_level=0.005)
    noisy = add_data_noise(w, noise, particle_rng(1, 0))
    diff = noisy.values - w.values
    assert diff.min() >= 0.0
    assert np.linalg.norm(diff) == pytest.approx(0.005 * np.linalg.norm(w.values), rel=1e-12)
    assert relative_noise_level(noisy, w) == pytest.approx(0.005, rel=0.01)


def test_particle_data_converge_in_l1():
    dx = 1.0 / 63
    p = DiffusionParams(c=1.0, tau=4 * dx)
    u = blob(64)
    reference = evolve(u, p, p.tau, stencil_points=64).values
    errors = []
    for M in (8, 32, 128, 512):
        per_seed = []
        for seed in range(3):
            w = simulate_data(u, p, p.tau, M, QUIET, seed=seed)
            per_seed.append(np.abs(w.values - reference).sum() / np.abs(reference).sum())
        errors.append(float(np.median(per_seed)))
    assert all(later < earlier for earlier, later in zip(errors, errors[1:]))
    assert errors[2] < 0.1
    assert errors[3] < 0.05


def test_noise_spec_validation():
    with pytest.raises(ConfigurationError):
        NoiseSpec(data_noise_level=-0.1)
    with pytest.raises(ConfigurationError):
        NoiseSpec(noise_kind="gaussian")
    with pytest.raises(ConfigurationError):
        NoiseSpec(perturbation_scope="pixel")
    with pytest.raises(ConfigurationError):
        NoiseSpec(direction_span="quarter_turn")


def test_simulation_is_two_dimensional():
    with pytest.raises(ConfigurationError):
        simulate_data(blob(16), DiffusionParams(c=1.0, tau=0.1, N=3), 0.1, 4, QUIET)
