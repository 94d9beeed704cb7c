"""Special functions and Gaussian quadrature primitives.

Expectations over standard normals use the probabilists' convention
throughout: a ``QuadratureGrid`` of order n satisfies

    E_{g ~ N(0,1)} f(g)  ~=  sum_i weights[i] * f(nodes[i])

with weights summing to one. Physicists' Gauss-Hermite nodes/weights are
rescaled once at construction.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np

from . import backend

_SQRT_2 = math.sqrt(2.0)
_SQRT_PI = math.sqrt(math.pi)

MIN_ORDER = 2
MAX_ORDER = 512


def erfc(x: float) -> float:
    """Complementary error function (total on finite reals)."""
    return math.erfc(x)


def erfcx(x: float) -> float:
    """Scaled complementary error function exp(x^2)*erfc(x).

    Needed wherever a decaying Gaussian factor multiplies erfc: the two
    factors are kept representable separately instead of letting their
    product underflow.
    """
    return float(backend.erfcx(x))


def log_erfc(x: float) -> float:
    """log(erfc(x)), stable for large positive x (~ -x^2 asymptotics)."""
    return float(backend.log_erfc(x))


@dataclass(frozen=True)
class QuadratureGrid:
    """Gauss-Hermite rule normalized to the N(0,1) measure."""

    order: int
    nodes: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        if self.order < 1 or self.nodes.shape != (self.order,) or self.weights.shape != (self.order,):
            raise ValueError("inconsistent grid shapes")
        if np.any(np.diff(self.nodes) <= 0):
            raise ValueError("nodes must be strictly increasing")
        if np.any(self.weights <= 0):
            raise ValueError("weights must be positive")
        if abs(self.weights.sum() - 1.0) > 1e-12:
            raise ValueError("weights must sum to 1")
        self.nodes.flags.writeable = False
        self.weights.flags.writeable = False

    def expect(self, f) -> float:
        """Quadrature estimate of E f(g), g ~ N(0,1)."""
        return float(self.weights @ f(self.nodes))


def _phi_recurrence(n: int, x: np.ndarray):
    """Orthonormal probabilists' Hermite values at x with per-point exponent
    tracking (values overflow float64 near extreme roots above order ~350).

    Returns (phi_n, phi_{n-1}, log_scale): true values are phi * exp(log_scale).
    """
    p_prev = np.zeros_like(x)   # phi_{-1}
    p_cur = np.ones_like(x)     # phi_0
    log_scale = np.zeros_like(x)
    for k in range(n):
        p_next = (x * p_cur - math.sqrt(k) * p_prev) / math.sqrt(k + 1.0)
        p_prev, p_cur = p_cur, p_next
        big = np.abs(p_cur) > 1e100
        if np.any(big):
            p_prev[big] *= 1e-100
            p_cur[big] *= 1e-100
            log_scale[big] += 100.0 * math.log(10.0)
    return p_cur, p_prev, log_scale


def _hermite_newton(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Probabilists' Gauss-Hermite nodes/weights: Jacobi-matrix eigenvalues
    as initial guesses, refined by Newton iteration on the orthonormal
    recurrence (phi_n' = sqrt(n) phi_{n-1}); log-domain weights."""
    from scipy.linalg import eigvalsh_tridiagonal

    n = order
    x = eigvalsh_tridiagonal(np.zeros(n), np.sqrt(np.arange(1.0, n)))
    for _ in range(8):
        pn, pm, _ = _phi_recurrence(n, x)
        dx = pn / (math.sqrt(n) * pm)   # scale factor cancels in the ratio
        x = x - dx
        if np.max(np.abs(dx)) < 1e-15 * (1.0 + np.max(np.abs(x))):
            break
    # enforce exact symmetry (center root of odd rules is exactly 0)
    x = 0.5 * (x - x[::-1])
    _, pm, ls = _phi_recurrence(n, x)
    # w_i = 1 / (n * phi_{n-1}(x_i)^2) for the unit-mass N(0,1) measure;
    # evaluated in the log domain, extreme-order tail weights underflow
    # float64 and are floored at the smallest practical positive value
    log_w = -math.log(n) - 2.0 * (np.log(np.abs(pm)) + ls)
    w = np.exp(np.maximum(log_w, -690.0))
    w = 0.5 * (w + w[::-1])
    return x, w


@functools.lru_cache(maxsize=None)
def gauss_hermite(order: int) -> QuadratureGrid:
    """Gauss-Hermite grid of the given order for the N(0,1) measure.

    Exact (up to rounding) for polynomial moments through degree
    2*order - 1. Orders outside [2, 512] are rejected. Above order ~370 the
    outermost weights fall below the float64 range and carry a 1e-300 floor;
    they are negligible for every expectation computed here.
    """
    if not isinstance(order, (int, np.integer)) or isinstance(order, bool):
        raise TypeError("order must be an integer")
    if order < MIN_ORDER or order > MAX_ORDER:
        raise ValueError(f"order must be in [{MIN_ORDER}, {MAX_ORDER}], got {order}")
    nodes, weights = _hermite_newton(int(order))
    return QuadratureGrid(order=int(order), nodes=nodes, weights=weights)


def log_weighted_power_mean(log_values, weights, exponent: float) -> float:
    """log sum_i w_i * exp(exponent * log_values[i]), max-shift stabilized.

    Realizes log E[f^exponent] from log-f samples without leaving the log
    domain, so underflowing f values at tail nodes keep their weight.
    """
    lv = np.asarray(log_values, dtype=float)
    w = np.asarray(weights, dtype=float)
    if lv.size == 0:
        raise ValueError("log_values must be non-empty")
    if lv.shape != w.shape:
        raise ValueError("log_values and weights must have matching length")
    if not np.all(np.isfinite(lv)):
        raise ValueError("log_values must be finite")
    if not exponent > 0:
        raise ValueError("exponent must be positive")
    t = exponent * lv
    m = t.max()
    return float(m + np.log(np.sum(w * np.exp(t - m))))
