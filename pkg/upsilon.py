"""
Radial spectral profiles of causal diffusion

Υ_N solves  Υ'' + (N-1)/t Υ' + Υ = 0  with Υ(0) = 1, Υ'(0) = 0.
For N = 1, 2, 3 it is cos, J0 and sinc; for larger N it is summed from its
power series near the origin and climbed up a two-step recurrence from the
closed forms further out.
"""
import logging
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import optimize, special

from errors import ConvergenceError, DomainError

log = logging.getLogger(__name__)

# Zero bracketing step; zeros of Υ_N are at least π/2 apart for N <= 8
SCAN_STEP = np.pi / 8
ROOT_XTOL = 1e-12

ENVELOPE_RANGE = (1.0, 200.0)
ENVELOPE_SAMPLES = 40_000
ENVELOPE_SLACK = 1.0 + 1e-4


@dataclass(frozen=True)
class SeriesCoefficients:
    """Coefficients a_{2j} of  Υ_N(t) = Σ (-1)^j a_{2j} t^{2j}."""
    dimension: int
    a: tuple

    def __len__(self):
        return len(self.a)


# ============================================================================
# Argument handling
# ============================================================================

def _as_argument(t):
    """Validate t >= 0 and finite; return a float array."""
    arr = np.asarray(t, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"Υ_N needs a finite argument, got {t!r}")
    if np.any(arr < 0):
        raise DomainError(f"Υ_N is evaluated for t >= 0 only, got {t!r}")
    return arr


def _restore(values, like):
    """Return a float for scalar input, the array otherwise."""
    if np.ndim(like) == 0:
        return float(values)
    return values


def _sinc(t):
    return np.divide(np.sin(t), t, out=np.ones_like(t), where=t != 0)


# ============================================================================
# Evaluator
# ============================================================================

@dataclass(frozen=True)
class UpsilonEvaluator:
    """Evaluates Υ_N and its first two derivatives.

    Args:
        dimension: Space dimension N >= 1
        truncation_tol: Absolute size of the first neglected series term
        max_terms: Upper bound on summed series terms
    """
    dimension: int
    truncation_tol: float = 1e-17
    max_terms: int = 400

    def __post_init__(self):
        if int(self.dimension) != self.dimension or self.dimension < 1:
            raise DomainError(f"dimension must be an integer >= 1, got {self.dimension!r}")
        if not self.truncation_tol > 0:
            raise DomainError("truncation_tol must be positive")
        if self.max_terms < 1:
            raise DomainError("max_terms must be >= 1")

    @property
    def switchover(self):
        """Series is used for t**2 <= switchover, the recurrence beyond."""
        return 2.0 * self.dimension

    def coefficients(self, n_terms):
        """First n_terms series coefficients a_0, a_2, a_4, ..."""
        N = self.dimension
        a = [1.0]
        for j in range(1, n_terms):
            a.append(a[-1] / ((2 * j) * (N + 2 * j - 2)))
        return SeriesCoefficients(N, tuple(a))

    # ------------------------------------------------------------------
    # Building blocks
    # ------------------------------------------------------------------

    def _series(self, t, order=0):
        """Termwise differentiated power series, `order` in {0, 1, 2}."""
        N = self.dimension
        z = t * t
        total = np.zeros_like(t)
        a = 1.0
        z_prev = np.ones_like(t)  # z**(j-1)
        z_pow = np.ones_like(t)   # z**j
        for j in range(self.max_terms):
            if j > 0:
                a /= (2 * j) * (N + 2 * j - 2)
                z_prev = z_pow
                z_pow = z_pow * z
            if order == 0:
                term = a * z_pow
            elif j == 0:
                continue
            elif order == 1:
                term = (a * 2 * j) * t * z_prev
            else:
                term = (a * 2 * j * (2 * j - 1)) * z_prev
            total = total - term if j % 2 else total + term
            if j > 0 and np.all(np.abs(term) < self.truncation_tol):
                return total
        raise ConvergenceError(
            f"Υ_{N} series not converged after {self.max_terms} terms",
            partial_value=total,
            terms=self.max_terms,
        )

    def _climb(self, t, top):
        """(Υ_top, Υ'_top) from the closed form of matching parity.

        Uses  Υ_{n+2} = -n/t Υ'_n  and  Υ'_{n+2} = n/t (Υ_n - Υ_{n+2}).
        """
        if top % 2:
            n, value, slope = 1, np.cos(t), -np.sin(t)
        else:
            n, value, slope = 2, special.j0(t), -special.j1(t)
        while n < top:
            lifted = -n / t * slope
            slope = n / t * (value - lifted)
            value = lifted
            n += 2
        return value, slope

    def _split(self, t):
        near = t * t <= self.switchover
        return near, ~near

    # ------------------------------------------------------------------
    # Public evaluation
    # ------------------------------------------------------------------

    def eval(self, t):
        """Υ_N(t) for t >= 0 (scalar or array)."""
        arr = _as_argument(t)
        N = self.dimension
        if N == 1:
            out = np.cos(arr)
        elif N == 2:
            out = special.j0(arr)
        elif N == 3:
            out = _sinc(arr)
        else:
            out = np.empty_like(arr)
            near, far = self._split(arr)
            out[near] = self._series(arr[near])
            out[far] = self._climb(arr[far], N)[0]
        return _restore(out, t)

    def eval_series(self, t):
        """Raw power series value, regardless of N or size of t."""
        arr = _as_argument(t)
        return _restore(self._series(arr), t)

    def eval_derivative(self, t):
        """Υ'_N(t); zero at the origin."""
        arr = _as_argument(t)
        N = self.dimension
        if N == 1:
            out = -np.sin(arr)
        elif N == 2:
            out = -special.j1(arr)
        else:
            out = np.empty_like(arr)
            near, far = self._split(arr)
            out[near] = self._series(arr[near], order=1)
            out[far] = self._climb(arr[far], N)[1]
        return _restore(out, t)

    def eval_second_derivative(self, t):
        """Υ''_N(t); equals -1/N at the origin."""
        arr = _as_argument(t)
        N = self.dimension
        if N == 1:
            out = -np.cos(arr)
        elif N == 2:
            ratio = np.divide(special.j1(arr), arr, out=np.full_like(arr, 0.5), where=arr != 0)
            out = -special.j0(arr) + ratio
        else:
            out = np.empty_like(arr)
            near, far = self._split(arr)
            out[near] = self._series(arr[near], order=2)
            tf = arr[far]
            value, slope = self._climb(tf, N + 2)
            out[far] = -value / N - tf / N * slope
        return _restore(out, t)

    def eval_by_recurrence(self, t):
        """Υ_N(t) for t > 0 through the dimension recurrence only."""
        arr = _as_argument(t)
        if np.any(arr == 0):
            raise DomainError("recurrence is singular at t = 0, use eval()")
        return _restore(self._climb(arr, self.dimension)[0], t)

    def ode_residual(self, t):
        """Υ'' + (N-1)/t Υ' + Υ for t > 0; vanishes up to rounding."""
        arr = _as_argument(t)
        if np.any(arr == 0):
            raise DomainError("ode_residual needs t > 0")
        N = self.dimension
        residual = (
            np.asarray(self.eval_second_derivative(arr))
            + (N - 1) / arr * np.asarray(self.eval_derivative(arr))
            + np.asarray(self.eval(arr))
        )
        return _restore(residual, t)

    # ------------------------------------------------------------------
    # Zeros and envelope
    # ------------------------------------------------------------------

    def zeros_in(self, a, b, which="function"):
        """Simple zeros of Υ_N (or Υ'_N) in [a, b], increasing.

        Args:
            a, b: Interval with 0 <= a < b
            which: "function" or "derivative"
        """
        if not (0 <= a < b) or not np.isfinite(b):
            raise DomainError(f"need 0 <= a < b, got [{a}, {b}]")
        if which == "function":
            f = self.eval
        elif which == "derivative":
            f = self.eval_derivative
        else:
            raise DomainError(f"which must be 'function' or 'derivative', got {which!r}")

        n_cells = max(1, math.ceil((b - a) / SCAN_STEP))
        grid = np.linspace(a, b, n_cells + 1)
        values = np.asarray(f(grid))

        roots = []
        for lo, hi, f_lo, f_hi in zip(grid[:-1], grid[1:], values[:-1], values[1:]):
            if f_lo == 0.0:
                roots.append(float(lo))
            elif f_lo * f_hi < 0:
                roots.append(optimize.brentq(f, lo, hi, xtol=ROOT_XTOL))
        if values[-1] == 0.0:
            roots.append(float(b))
        return roots

    def envelope_constant(self):
        """C_N with |Υ_N(t)| <= C_N t^{-(N-1)/2} on [1, 200]."""
        return _envelope_constant(self.dimension, self.truncation_tol, self.max_terms)

    def envelope_bound(self, t):
        """C_N t^{-(N-1)/2} for t >= 1."""
        arr = np.asarray(t, dtype=float)
        if not np.all(np.isfinite(arr)) or np.any(arr < 1):
            raise DomainError(f"envelope_bound needs finite t >= 1, got {t!r}")
        bound = self.envelope_constant() * arr ** (-(self.dimension - 1) / 2)
        return _restore(bound, t)


@lru_cache(maxsize=None)
def _envelope_constant(dimension, truncation_tol, max_terms):
    if dimension == 1:
        return 1.0
    ev = UpsilonEvaluator(dimension, truncation_tol, max_terms)
    t = np.linspace(*ENVELOPE_RANGE, ENVELOPE_SAMPLES)
    scaled = np.abs(ev.eval(t)) * t ** ((dimension - 1) / 2)
    constant = float(np.max(scaled)) * ENVELOPE_SLACK
    log.debug("envelope constant C_%d = %.6f", dimension, constant)
    return constant


@lru_cache(maxsize=None)
def evaluator(dimension):
    """Shared default evaluator for dimension N."""
    return UpsilonEvaluator(dimension)
