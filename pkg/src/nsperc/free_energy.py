"""Lifted-duality free energy of the negative spherical perceptron.

Evaluates the stationarized dual free energy at lifting levels 1, 2
(partial and full) and 3 (full). The inner Gaussian integral over the
sphere side is closed-form (``f_zt``); levels 2/3 quadrate the remaining
one or two outer Gaussian expectations.

Conventions: boundary values p0 = q0 = 1, p1 -> 1, q1 -> 1, c1 -> 1 and
p_{r+1} = q_{r+1} = c_{r+1} = 0 are implicit; ``LiftingParams`` stores only
the free entries (p2..pr, q2..qr, c2..cr). The chain values

    A2 = 2*gamma_sq_p - c2*(1 - q2)
    A3 = A2 - c3*(q2 - q3)

must stay positive (log arguments); violations raise ``OutOfDomainError``
rather than clamping, so solvers can treat them as rejected steps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from . import backend
from .specfun import QuadratureGrid

_SQRT_2PI = math.sqrt(2.0 * math.pi)

MIN_QUAD_ORDER = 16

LEVELS = ("1", "2p", "2f", "3f")


class OutOfDomainError(ValueError):
    """Parameter point violates a domain guard (not a numerical failure)."""


@dataclass(frozen=True)
class ModelPoint:
    """Threshold/constraint-ratio pair at which the free energy is evaluated."""

    kappa: float
    alpha: float

    def __post_init__(self):
        if not math.isfinite(self.kappa):
            raise ValueError("kappa must be finite")
        if not (math.isfinite(self.alpha) and self.alpha > 0):
            raise ValueError("alpha must be positive")


@dataclass(frozen=True)
class LiftingParams:
    """Free lifting parameters for a level r in {1, 2, 3}.

    p, q hold (p2..pr), (q2..qr); c holds (c2..cr). branch records whether
    a level-2 partial solve collapsed to the c2 -> 0 (level-1) branch.
    """

    level: int
    variant: str  # "partial" | "full"
    p: tuple = ()
    q: tuple = ()
    c: tuple = ()
    gamma_sq: float = 0.5
    gamma_sq_p: float = 0.5
    branch: str = "interior"

    def __post_init__(self):
        if self.level not in (1, 2, 3):
            raise ValueError("level must be 1, 2 or 3")
        if self.variant not in ("partial", "full"):
            raise ValueError("variant must be 'partial' or 'full'")
        k = self.level - 1
        if len(self.p) != k or len(self.q) != k or len(self.c) != k:
            raise ValueError(f"level {self.level} needs {k} entries in p, q and c")

    @property
    def p2(self):
        return self.p[0] if self.p else 0.0

    @property
    def p3(self):
        return self.p[1] if len(self.p) > 1 else 0.0

    @property
    def q2(self):
        return self.q[0] if self.q else 0.0

    @property
    def q3(self):
        return self.q[1] if len(self.q) > 1 else 0.0

    @property
    def c2(self):
        return self.c[0] if self.c else 0.0

    @property
    def c3(self):
        return self.c[1] if len(self.c) > 1 else 0.0

    def a_chain(self):
        """(A2[, A3]) log-argument chain values."""
        a2 = 2.0 * self.gamma_sq_p - self.c2 * (1.0 - self.q2)
        if self.level < 3:
            return (a2,)
        return (a2, a2 - self.c3 * (self.q2 - self.q3))

    def validate(self):
        """Raise OutOfDomainError on any violated guard."""
        if self.gamma_sq <= 0 or self.gamma_sq_p <= 0:
            raise OutOfDomainError("gamma_sq and gamma_sq_p must be positive")
        if self.level >= 2:
            if not (0.0 <= self.p2 < 1.0 and 0.0 <= self.q2 < 1.0):
                raise OutOfDomainError("need 0 <= p2, q2 < 1")
            if self.variant == "full" and self.c2 <= 0:
                raise OutOfDomainError("c2 must be positive")
        if self.level == 3:
            if not (0.0 <= self.p3 <= self.p2 and 0.0 <= self.q3 <= self.q2):
                raise OutOfDomainError("chains require p3 <= p2 and q3 <= q2")
            if self.c3 <= 0:
                raise OutOfDomainError("c3 must be positive")
        for i, a in enumerate(self.a_chain()):
            if not a > 0.0:
                raise OutOfDomainError(f"log-argument A{i + 2} = {a:.3e} must be positive")


@dataclass(frozen=True)
class SphereIntegrand:
    """Arguments of the closed-form sphere-side inner integral."""

    h: float
    B: float
    C: float
    one_minus_p: float = 1.0

    def __post_init__(self):
        if not self.B > 0:
            raise ValueError("B must be positive")
        if not (0.0 < self.one_minus_p <= 1.0):
            raise ValueError("one_minus_p must lie in (0, 1]")
        if self.one_minus_p < 1.0:
            want = -self.C / math.sqrt(self.one_minus_p)
            if abs(self.h - want) > 1e-9 * max(1.0, abs(want)):
                raise ValueError("h must equal -C/sqrt(one_minus_p)")


def e_max_sq(kappa: float) -> float:
    """E max(kappa + g, 0)^2 for g ~ N(0,1), closed form."""
    return kappa * math.exp(-0.5 * kappa * kappa) / _SQRT_2PI \
        + 0.5 * (kappa * kappa + 1.0) * math.erfc(-kappa / math.sqrt(2.0))


def f_zt(si: SphereIntegrand) -> float:
    """f_zd + f_zu = E_g exp(-B*max(C + sqrt(1-p)*g, 0)^2), in (0, 1]."""
    return math.exp(float(backend.log_fzt(si.C, si.B, si.one_minus_p)))


def psi_r1(mp: ModelPoint) -> float:
    """Level-1 value with both square-root-trick scalars at their optimum:
    gamma_sq_p = 1/2, gamma_sq = sqrt(alpha * e_max_sq)/2."""
    return -1.0 + math.sqrt(mp.alpha * e_max_sq(mp.kappa))


def x_side_r2(q2: float, c2: float, gp: float) -> float:
    a2 = 2.0 * gp - c2 * (1.0 - q2)
    return math.log(a2 / (2.0 * gp)) / (2.0 * c2) - q2 / (2.0 * a2)


def x_side_r3(q2: float, q3: float, c2: float, c3: float, gp: float) -> float:
    a2 = 2.0 * gp - c2 * (1.0 - q2)
    a3 = a2 - c3 * (q2 - q3)
    return math.log(a2 / (2.0 * gp)) / (2.0 * c2) \
        + math.log(a3 / a2) / (2.0 * c3) - q3 / (2.0 * a3)


def psi_r2_partial(mp: ModelPoint, c2: float, gamma_sq: float, gamma_sq_p: float) -> float:
    """Partial second lift (p2 = q2 = 0); no quadrature needed."""
    if c2 <= 0 or gamma_sq <= 0 or gamma_sq_p <= 0:
        raise OutOfDomainError("c2, gamma_sq, gamma_sq_p must be positive")
    if not 2.0 * gamma_sq_p - c2 > 0:
        raise OutOfDomainError("need 2*gamma_sq_p - c2 > 0")
    b = c2 / (4.0 * gamma_sq)
    lf = float(backend.log_fzt(mp.kappa, b, 1.0))
    return 0.5 * c2 - gamma_sq_p + x_side_r2(0.0, c2, gamma_sq_p) \
        + gamma_sq - mp.alpha / c2 * lf


def _check_order(grid: QuadratureGrid, label: str):
    if grid.order < MIN_QUAD_ORDER:
        raise ValueError(f"{label} quadrature order {grid.order} < {MIN_QUAD_ORDER}")


def psi_r2_full(mp: ModelPoint, lp: LiftingParams, grid: QuadratureGrid) -> float:
    if lp.level != 2 or lp.variant != "full":
        raise ValueError("psi_r2_full needs level-2 full LiftingParams")
    lp.validate()
    _check_order(grid, "outer")
    elog = backend.l2_value(mp.kappa, lp.p2, lp.c2, lp.gamma_sq, grid.nodes, grid.weights)
    return 0.5 * (1.0 - lp.p2 * lp.q2) * lp.c2 - lp.gamma_sq_p \
        + x_side_r2(lp.q2, lp.c2, lp.gamma_sq_p) \
        + lp.gamma_sq - mp.alpha / lp.c2 * elog


def psi_r3_full(mp: ModelPoint, lp: LiftingParams,
                grid_inner: QuadratureGrid, grid_outer: QuadratureGrid) -> float:
    if lp.level != 3 or lp.variant != "full":
        raise ValueError("psi_r3_full needs level-3 full LiftingParams")
    lp.validate()
    _check_order(grid_inner, "inner")
    _check_order(grid_outer, "outer")
    em = backend.l3_value(mp.kappa, lp.p2, lp.p3, lp.c2, lp.c3, lp.gamma_sq,
                          grid_inner.nodes, grid_inner.weights,
                          grid_outer.nodes, grid_outer.weights)
    return 0.5 * (1.0 - lp.p2 * lp.q2) * lp.c2 \
        + 0.5 * (lp.p2 * lp.q2 - lp.p3 * lp.q3) * lp.c3 - lp.gamma_sq_p \
        + x_side_r3(lp.q2, lp.q3, lp.c2, lp.c3, lp.gamma_sq_p) \
        + lp.gamma_sq - mp.alpha / lp.c3 * em
