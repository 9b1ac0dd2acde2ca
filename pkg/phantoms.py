"""
Test images on the unit square

Coordinates are relative to the image: x, y in [0, 1] from the first pixel
centre to the last one, y growing with the row index.
"""
import numpy as np

from errors import DomainError
from forward import Grid2D


def _unit_coordinates(rows, cols):
    if rows < 2 or cols < 2:
        raise DomainError(f"phantoms need at least 2x2 pixels, got {rows}x{cols}")
    x = np.linspace(0.0, 1.0, cols)
    y = np.linspace(0.0, 1.0, rows)
    return np.meshgrid(x, y)


def _question_mark_mask(X, Y, cx, cy, size, stroke):
    """Hook, stem and dot of a '?' whose dot sits near (cx, cy)."""
    hook_r = 0.25 * size
    hook_cy = cy + 0.55 * size
    r = np.hypot(X - cx, Y - hook_cy)
    theta = np.arctan2(Y - hook_cy, X - cx)
    hook = (np.abs(r - hook_r) <= stroke / 2) & (theta >= -np.pi / 2) & (theta <= 0.85 * np.pi)

    stem_top = hook_cy - hook_r
    stem = (np.abs(X - cx) <= stroke / 2) & (Y <= stem_top) & (Y >= cy + 0.15 * size)
    dot = np.hypot(X - cx, Y - cy) <= 0.6 * stroke
    return hook | stem | dot


def question_mark(rows, cols, dx, stroke=0.05):
    """A large '?', a small '?' and an apostrophe, value 1 on the strokes.

    Args:
        rows, cols: Grid size
        dx: Pixel size
        stroke: Stroke width of the large mark, relative to the image side
    """
    X, Y = _unit_coordinates(rows, cols)
    big = _question_mark_mask(X, Y, cx=0.40, cy=0.18, size=0.70, stroke=stroke)
    small = _question_mark_mask(X, Y, cx=0.80, cy=0.22, size=0.30, stroke=0.6 * stroke)

    # apostrophe: short slanted bar
    u = (X - 0.78) * np.cos(0.3) + (Y - 0.78) * np.sin(0.3)
    v = -(X - 0.78) * np.sin(0.3) + (Y - 0.78) * np.cos(0.3)
    apostrophe = (np.abs(u) <= 0.4 * stroke) & (np.abs(v) <= 0.06)

    return Grid2D((big | small | apostrophe).astype(np.float64), dx)


def gaussian_blob(rows, cols, dx, center=(0.5, 0.5), width=0.08, truncate=3.0):
    """exp(-r²/(2 width²)), set to zero beyond truncate·width (compact support)."""
    if not (width > 0 and truncate > 0):
        raise DomainError("width and truncate must be positive")
    X, Y = _unit_coordinates(rows, cols)
    r2 = (X - center[0]) ** 2 + (Y - center[1]) ** 2
    values = np.exp(-r2 / (2 * width ** 2))
    values[r2 > (truncate * width) ** 2] = 0.0
    return Grid2D(values, dx)


def unit_pixel(rows, cols, dx, at=None):
    """Single pixel carrying unit mass; centre pixel by default."""
    row, col = (rows // 2, cols // 2) if at is None else at
    if not (0 <= row < rows and 0 <= col < cols):
        raise DomainError(f"pixel {(row, col)} outside a {rows}x{cols} grid")
    values = np.zeros((rows, cols))
    values[row, col] = 1.0 / dx ** 2
    return Grid2D(values, dx)


PHANTOMS = {
    "question_mark": question_mark,
    "gaussian_blob": gaussian_blob,
    "unit_pixel": unit_pixel,
}


def make_phantom(name, rows, cols, dx):
    try:
        factory = PHANTOMS[name]
    except KeyError:
        raise DomainError(f"unknown phantom {name!r}, expected one of {sorted(PHANTOMS)}") from None
    return factory(rows, cols, dx)
