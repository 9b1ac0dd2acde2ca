"""
File formats and experiment configuration

GridFile layout:
    CDG1
    2 <rows> <cols> <dx> <origin_x> <origin_y>
    <rows*cols little-endian float64, row-major>
"""
import csv
import json
import math
import os
from dataclasses import dataclass, fields

import numpy as np

from errors import ConfigurationError, DomainError
from forward import PATHS, Grid2D
from green_spectral import DiffusionParams
from inversion import BAND_SPLIT_TOL, LandweberConfig
from particle import NoiseSpec

GRID_MAGIC = "CDG1"
PAYLOAD_DTYPE = np.dtype("<f8")
METHODS = ("landweber", "moore_penrose", "time_reversal")
DELTA_SOURCES = ("configured", "realised")
PHANTOM_NAMES = ("question_mark", "gaussian_blob", "unit_pixel")


# ============================================================================
# Grid files
# ============================================================================

@dataclass(frozen=True)
class GridFile:
    """Header of a CDG1 grid file."""
    rows: int
    cols: int
    dx: float
    origin: tuple

    def header_line(self):
        return f"2 {self.rows} {self.cols} {self.dx!r} {self.origin[0]!r} {self.origin[1]!r}\n"

    @classmethod
    def parse(cls, line):
        parts = line.split()
        if len(parts) != 6 or parts[0] != "2":
            raise DomainError(f"malformed grid header: {line!r}")
        try:
            return cls(int(parts[1]), int(parts[2]), float(parts[3]), (float(parts[4]), float(parts[5])))
        except ValueError as e:
            raise DomainError(f"malformed grid header: {line!r}") from e


def write_grid(path, grid):
    header = GridFile(grid.rows, grid.cols, grid.dx, grid.origin)
    with open(path, "wb") as f:
        f.write(f"{GRID_MAGIC}\n".encode("ascii"))
        f.write(header.header_line().encode("ascii"))
        f.write(np.ascontiguousarray(grid.values, dtype=PAYLOAD_DTYPE).tobytes())


def read_grid(path):
    """Read a GridFile back into a Grid2D, bit for bit."""
    with open(path, "rb") as f:
        magic = f.readline().decode("ascii", errors="replace").strip()
        if magic != GRID_MAGIC:
            raise DomainError(f"{path}: not a grid file (magic {magic!r})")
        header = GridFile.parse(f.readline().decode("ascii", errors="replace"))
        payload = f.read()

    expected = header.rows * header.cols * PAYLOAD_DTYPE.itemsize
    if len(payload) != expected:
        raise DomainError(f"{path}: payload has {len(payload)} bytes, expected {expected}")
    values = np.frombuffer(payload, dtype=PAYLOAD_DTYPE).reshape(header.rows, header.cols)
    return Grid2D(values.astype(np.float64), header.dx, header.origin)


def write_pgm(path, grid):
    """8-bit binary PGM preview, linear min-max scaling, first row at the bottom."""
    lo, hi = float(grid.values.min()), float(grid.values.max())
    if hi > lo:
        scaled = np.rint((grid.values - lo) / (hi - lo) * 255.0)
    else:
        scaled = np.zeros(grid.shape)
    pixels = scaled[::-1].astype(np.uint8)
    with open(path, "wb") as f:
        f.write(b"P5\n")
        f.write(f"# min={lo!r} max={hi!r}\n".encode("ascii"))
        f.write(f"{grid.cols} {grid.rows}\n255\n".encode("ascii"))
        f.write(pixels.tobytes())


def write_csv(path, header, rows):
    """Plain CSV; floats are written with repr so reruns are byte-identical."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


# ============================================================================
# Experiment configuration
# ============================================================================

@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment, loaded from a flat JSON object.

    Either `input` (a GridFile) or `image` (a built-in phantom on a
    rows x cols grid with pixel size dx) supplies the true image.
    """
    c: float
    tau: float
    T: float
    N: int = 2
    rows: int = 128
    cols: int = 128
    dx: float = 1.0 / 127
    image: str = "question_mark"
    input: str = None
    method: str = "landweber"
    M: int = 65
    data_noise_level: float = 0.005
    radius_rel_perturbation: float = 0.0025
    perturbation_scope: str = "particle"
    direction_span: str = "full_turn"
    eta: float = 2.0
    delta_source: str = "configured"
    seed: int = 0
    noise_seed: int = 1
    output_dir: str = "output"
    forward_path: str = "spatial"
    stencil_points: int = 50
    max_iters: int = 100
    zero_mask_tol: float = None
    omega_max: float = math.inf
    band_split_tol: float = BAND_SPLIT_TOL
    pad: bool = True

    def __post_init__(self):
        self.params()
        self.noise_spec()
        self.landweber_config()
        if self.method not in METHODS:
            raise ConfigurationError(f"unknown method {self.method!r}, expected one of {METHODS}")
        if self.delta_source not in DELTA_SOURCES:
            raise ConfigurationError(f"delta_source must be one of {DELTA_SOURCES}, got {self.delta_source!r}")
        if self.forward_path not in PATHS:
            raise ConfigurationError(f"unknown forward path {self.forward_path!r}")
        if self.input is None and self.image not in PHANTOM_NAMES:
            raise ConfigurationError(f"unknown image {self.image!r}, expected one of {PHANTOM_NAMES}")
        if int(self.rows) != self.rows or int(self.cols) != self.cols or min(self.rows, self.cols) < 1:
            raise ConfigurationError(f"grid size must be positive integers, got {self.rows}x{self.cols}")
        if not self.dx > 0:
            raise ConfigurationError(f"dx must be positive, got {self.dx!r}")
        if not self.T > 0:
            raise ConfigurationError(f"T must be positive, got {self.T!r}")
        if int(self.M) != self.M or self.M < 1:
            raise ConfigurationError(f"M must be an integer >= 1, got {self.M!r}")

    def params(self):
        try:
            return DiffusionParams(self.c, self.tau, self.N)
        except DomainError as e:
            raise ConfigurationError(str(e)) from e

    def noise_spec(self):
        return NoiseSpec(
            radius_rel_perturbation=self.radius_rel_perturbation,
            data_noise_level=self.data_noise_level,
            seed=self.noise_seed,
            perturbation_scope=self.perturbation_scope,
            direction_span=self.direction_span,
        )

    def landweber_config(self):
        return LandweberConfig(
            eta=self.eta,
            delta=self.data_noise_level,
            max_iters=self.max_iters,
            forward_path=self.forward_path,
            stencil_points=self.stencil_points,
            omega_max=self.omega_max,
        )


def _is_comment(key):
    return key.startswith("_") or key.startswith("#")


def load_config(path, overrides=None):
    """Load an ExperimentConfig; `overrides` (e.g. from the command line) win."""
    if not os.path.exists(path):
        raise ConfigurationError(f"config file not found: {path}")
    with open(path, "r") as f:
        try:
            raw = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigurationError(f"invalid JSON in {path}: {e}") from e
    if not isinstance(raw, dict):
        raise ConfigurationError(f"{path}: expected a JSON object")

    values = {k: v for k, v in raw.items() if not _is_comment(k)}
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})

    known = {f.name for f in fields(ExperimentConfig)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigurationError(f"{path}: unknown keys {unknown}")
    missing = sorted(k for k in ("c", "tau", "T") if k not in values)
    if missing:
        raise ConfigurationError(f"{path}: missing required keys {missing}")

    if values.get("input") is not None:
        resolved = os.path.join(os.path.dirname(os.path.abspath(path)), values["input"])
        if not os.path.exists(resolved):
            raise ConfigurationError(f"input grid not found: {resolved}")
        values["input"] = resolved

    try:
        return ExperimentConfig(**values)
    except TypeError as e:
        raise ConfigurationError(f"{path}: {e}") from e
