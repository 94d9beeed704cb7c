"""Stationarity systems of the lifted free energy and their solvers.

The full systems have five unknowns at level 2 (q2, p2, c2, gamma_sq_p,
gamma_sq) and eight at level 3 (q3, q2, p3, p2, c3, c2, gamma_sq_p,
gamma_sq). The q- and gamma_sq_p-equations admit closed-form solutions
(``closed_form_params``), so the default solver works in the reduced
unknown set {p2..pr, q2..qr, gamma_sq} where those equations vanish
identically; the full Newton mode is kept behind ``SolverConfig.full_system``
for cross-validation. Unknowns are driven through smooth bijections
(sigmoid chains for p, q; exp for positive scalars) so solver steps can
never violate the ordering or positivity constraints; log-argument guards
are enforced by rejection (OutOfDomainError), not clamping.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import backend
from .free_energy import (
    LiftingParams,
    ModelPoint,
    OutOfDomainError,
    e_max_sq,
    psi_r2_full,
    psi_r2_partial,
    psi_r3_full,
    x_side_r2,
    x_side_r3,
)
from .specfun import QuadratureGrid, gauss_hermite


class ConvergenceError(RuntimeError):
    def __init__(self, message, best_residual=None, best_point=None):
        super().__init__(message)
        self.best_residual = best_residual
        self.best_point = best_point


@dataclass(frozen=True)
class ResidualVector:
    names: tuple
    values: np.ndarray

    def __post_init__(self):
        if len(self.names) != len(self.values):
            raise ValueError("names/values length mismatch")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("residuals must be finite")

    @property
    def inf_norm(self) -> float:
        return float(np.abs(self.values).max())


@dataclass
class SolverConfig:
    residual_tol: float = 1e-9
    max_iter: int = 200
    damping: float = 1.0
    fd_step: float = 1e-6
    quad_order_inner: int = 60
    quad_order_outer: int = 60
    warm_start: LiftingParams | None = None
    full_system: bool = False

    def __post_init__(self):
        if not self.residual_tol > 0:
            raise ValueError("residual_tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if not (0.0 < self.damping <= 1.0):
            raise ValueError("damping must be in (0, 1]")

    def grids(self):
        return gauss_hermite(self.quad_order_inner), gauss_hermite(self.quad_order_outer)


# ---------------------------------------------------------------------------
# closed-form parameter relations

def closed_form_params(p, q, r: int):
    """(gamma_sq_p, (c2..cr)) solving the q- and gamma_sq_p-stationarity
    equations at given overlap chains p = (p2..pr), q = (q2..qr).

    Uses the chain recursion A_r = sqrt(q_r/p_r),
    A_k = (q_k - q_{k+1}) / ((p_k - p_{k+1}) A_{k+1}),
    gamma_sq_p = (1 - q2)/(2 (1 - p2) A_2), c_k = (A_{k-1} - A_k)/(q_{k-1} - q_k)
    with A_1 = 2 gamma_sq_p, q_1 = 1; identical to the explicit product
    formulas for every r.
    """
    if r < 1:
        raise ValueError("r must be >= 1")
    p = tuple(float(v) for v in p)
    q = tuple(float(v) for v in q)
    if len(p) != r - 1 or len(q) != r - 1:
        raise ValueError(f"r={r} needs {r - 1} entries in p and q")
    if r == 1:
        return 0.5, ()
    pe = (1.0,) + p + (0.0,)   # p1..p_{r+1}
    qe = (1.0,) + q + (0.0,)
    for k in range(r):
        if not pe[k] > pe[k + 1] or not qe[k] > qe[k + 1]:
            raise ValueError("chains must be strictly decreasing: 1 > p2 > ... > pr > 0")
    a = [0.0] * (r + 1)         # a[k] = A_k, k = 2..r; a[1] set below
    a[r] = math.sqrt(q[-1] / p[-1])
    for k in range(r - 1, 1, -1):
        a[k] = (qe[k - 1] - qe[k]) / ((pe[k - 1] - pe[k]) * a[k + 1])
    gp = (1.0 - q[0]) / (2.0 * (1.0 - p[0]) * a[2])
    a[1] = 2.0 * gp
    c = tuple((a[k - 1] - a[k]) / (qe[k - 2] - qe[k - 1]) for k in range(2, r + 1))
    return gp, c


# ---------------------------------------------------------------------------
# analytic gradients

def _psi_grad_r2(mp, p2, q2, c2, gsq, gp, grid):
    """(psi, [d_q2, d_p2, d_c2, d_gp, d_gsq]) at a level-2 full point."""
    if min(c2, gsq, gp) <= 0 or not (0.0 < p2 < 1.0) or not (0.0 <= q2 < 1.0):
        raise OutOfDomainError("level-2 gradient point out of domain")
    a2 = 2.0 * gp - c2 * (1.0 - q2)
    if not a2 > 0:
        raise OutOfDomainError("A2 must be positive")
    elog, ep2, ec2, egs = backend.l2_terms(mp.kappa, p2, c2, gsq, grid.nodes, grid.weights)
    alpha = mp.alpha
    psi = 0.5 * (1.0 - p2 * q2) * c2 - gp + x_side_r2(q2, c2, gp) + gsq - alpha / c2 * elog
    d_q2 = c2 * (-0.5 * p2 + q2 / (2.0 * a2 * a2))
    d_p2 = -0.5 * q2 * c2 - alpha / c2 * ep2
    d_c2 = (0.5 * (1.0 - p2 * q2)
            - math.log(a2 / (2.0 * gp)) / (2.0 * c2 * c2)
            - (1.0 - q2) / (2.0 * c2 * a2)
            - q2 * (1.0 - q2) / (2.0 * a2 * a2)
            + alpha / (c2 * c2) * elog - alpha / c2 * ec2)
    d_gp = -1.0 + (1.0 - q2) / (2.0 * gp * a2) + q2 / (a2 * a2)
    d_gs = 1.0 - alpha / c2 * egs
    return psi, np.array([d_q2, d_p2, d_c2, d_gp, d_gs])


def _psi_grad_r3(mp, p2, p3, q2, q3, c2, c3, gsq, gp, grid_in, grid_out):
    """(psi, [d_q3, d_q2, d_p3, d_p2, d_c3, d_c2, d_gp, d_gsq])."""
    if min(c2, c3, gsq, gp) <= 0 or not (0.0 < p3 < p2 < 1.0) or not (0.0 < q3 < q2 < 1.0):
        raise OutOfDomainError("level-3 gradient point out of domain")
    a2 = 2.0 * gp - c2 * (1.0 - q2)
    a3 = a2 - c3 * (q2 - q3)
    if not (a2 > 0 and a3 > 0):
        raise OutOfDomainError("A2, A3 must be positive")
    em, et, ep3, ep2, ec2, egs = backend.l3_terms(
        mp.kappa, p2, p3, c2, c3, gsq,
        grid_in.nodes, grid_in.weights, grid_out.nodes, grid_out.weights)
    alpha = mp.alpha
    psi = (0.5 * (1.0 - p2 * q2) * c2 + 0.5 * (p2 * q2 - p3 * q3) * c3 - gp
           + x_side_r3(q2, q3, c2, c3, gp) + gsq - alpha / c3 * em)
    d_q3 = c3 * (-0.5 * p3 + q3 / (2.0 * a3 * a3))
    d_q2 = (c2 - c3) * (-0.5 * p2
                        + (q2 - q3) / (2.0 * a2 * a3)
                        + q3 / (2.0 * a3 * a3))
    d_p3 = -0.5 * q3 * c3 - alpha / c2 * ep3
    d_p2 = -0.5 * q2 * (c2 - c3) - alpha / c2 * ep2
    d_c3 = (0.5 * (p2 * q2 - p3 * q3)
            - math.log(a3 / a2) / (2.0 * c3 * c3)
            - (q2 - q3) / (2.0 * c3 * a3)
            - q3 * (q2 - q3) / (2.0 * a3 * a3)
            + alpha / (c3 * c3) * em - alpha / (c3 * c2) * et)
    d_c2 = (0.5 * (1.0 - p2 * q2)
            - math.log(a2 / (2.0 * gp)) / (2.0 * c2 * c2)
            - (1.0 - q2) / (2.0 * c2 * a2)
            - (1.0 - q2) / (2.0 * c3 * a3)
            + (1.0 - q2) / (2.0 * c3 * a2)
            - q3 * (1.0 - q2) / (2.0 * a3 * a3)
            + alpha / (c2 * c2) * et - alpha / c2 * ec2)
    d_gp = -1.0 + (1.0 - q2) / (2.0 * gp * a2) + (q2 - q3) / (a2 * a3) + q3 / (a3 * a3)
    d_gs = 1.0 - alpha / c2 * egs
    return psi, np.array([d_q3, d_q2, d_p3, d_p2, d_c3, d_c2, d_gp, d_gs])


def _psi_grad_2p(mp, c2, gsq, gp):
    """(psi, [d_c2, d_gp, d_gsq]) on the partial branch (p2 = q2 = 0)."""
    if min(c2, gsq, gp) <= 0:
        raise OutOfDomainError("c2, gamma_sq, gamma_sq_p must be positive")
    a2 = 2.0 * gp - c2
    if not a2 > 0:
        raise OutOfDomainError("need 2*gamma_sq_p - c2 > 0")
    b = c2 / (4.0 * gsq)
    lf = float(backend.log_fzt(mp.kappa, b, 1.0))
    # dlog f_zt/dB via the level-2 kernel shape at p2 = 0 would divide by
    # sqrt(p2); compute directly instead.
    dlf_dB = _dlog_fzt_dB(mp.kappa, b)
    alpha = mp.alpha
    psi = 0.5 * c2 - gp + x_side_r2(0.0, c2, gp) + gsq - alpha / c2 * lf
    d_c2 = (0.5 - math.log(a2 / (2.0 * gp)) / (2.0 * c2 * c2)
            - 1.0 / (2.0 * c2 * a2)
            + alpha / (c2 * c2) * lf - alpha / c2 * dlf_dB / (4.0 * gsq))
    d_gp = -1.0 + 1.0 / (2.0 * gp * a2)
    d_gs = 1.0 - alpha / c2 * dlf_dB * (-c2 / (4.0 * gsq * gsq))
    return psi, np.array([d_c2, d_gp, d_gs])


def _dlog_fzt_dB(C, B):
    """d log f_zt(C, B, 1) / dB; only f_zd depends on B."""
    D = 2.0 * B + 1.0
    h = -C
    lfzd = -B * C * C / D - math.log(2.0 * math.sqrt(D)) \
        + float(backend.log_erfc(h / math.sqrt(2.0 * D)))
    lfzu = math.log(0.5) + float(backend.log_erfc(-h / math.sqrt(2.0)))
    lft = np.logaddexp(lfzd, lfzu)
    wd = math.exp(lfzd - lft)
    z = h / math.sqrt(2.0 * D)
    rd = -(2.0 / math.sqrt(math.pi)) / float(backend.erfcx(z))
    dlfzd = -C * C / D + 2.0 * B * C * C / (D * D) - 1.0 / D + rd * (-z / D)
    return wd * dlfzd


_R2_NAMES = ("q2", "p2", "c2", "gamma_sq_p", "gamma_sq")
_R3_NAMES = ("q3", "q2", "p3", "p2", "c3", "c2", "gamma_sq_p", "gamma_sq")
_2P_NAMES = ("c2", "gamma_sq_p", "gamma_sq")


def grad_r2_full(mp: ModelPoint, lp: LiftingParams, grid: QuadratureGrid) -> ResidualVector:
    if lp.level != 2 or lp.variant != "full":
        raise ValueError("grad_r2_full needs level-2 full LiftingParams")
    _, g = _psi_grad_r2(mp, lp.p2, lp.q2, lp.c2, lp.gamma_sq, lp.gamma_sq_p, grid)
    return ResidualVector(_R2_NAMES, g)


def grad_r3_full(mp: ModelPoint, lp: LiftingParams, grids) -> ResidualVector:
    if lp.level != 3 or lp.variant != "full":
        raise ValueError("grad_r3_full needs level-3 full LiftingParams")
    gi, go = grids
    _, g = _psi_grad_r3(mp, lp.p2, lp.p3, lp.q2, lp.q3, lp.c2, lp.c3,
                        lp.gamma_sq, lp.gamma_sq_p, gi, go)
    return ResidualVector(_R3_NAMES, g)


# ---------------------------------------------------------------------------
# damped Newton on residual closures

def _sigmoid(a):
    if a >= 0:
        return 1.0 / (1.0 + math.exp(-a))
    e = math.exp(a)
    return e / (1.0 + e)


def _logit(p):
    return math.log(p / (1.0 - p))


@dataclass
class _SolveResult:
    converged: bool
    x: np.ndarray
    psi: float
    residual: np.ndarray
    iterations: int


def _damped_newton(resfun, x0, tol, max_iter, damping=1.0):
    """Newton with finite-difference Jacobian of the analytic gradient,
    backtracking on the residual norm and on domain-guard rejection."""
    x = np.asarray(x0, dtype=float).copy()
    try:
        psi, r = resfun(x)
    except OutOfDomainError:
        return _SolveResult(False, x, math.nan, np.full(len(x0), math.inf), 0)
    fdh = 1e-7
    best = (np.abs(r).max(), x.copy(), psi, r.copy())
    for it in range(max_iter):
        nr = np.abs(r).max()
        if nr < best[0]:
            best = (nr, x.copy(), psi, r.copy())
        if nr < tol:
            return _SolveResult(True, x, psi, r, it)
        n = len(x)
        J = np.empty((len(r), n))
        ok = True
        for j in range(n):
            hj = fdh * max(1.0, abs(x[j]))
            for sign in (1.0, -1.0):
                xp = x.copy()
                xp[j] += sign * hj
                try:
                    _, rp = resfun(xp)
                    J[:, j] = sign * (rp - r) / hj
                    break
                except OutOfDomainError:
                    continue
            else:
                ok = False
                break
        if not ok:
            break
        try:
            dx = np.linalg.solve(J, -r)
        except np.linalg.LinAlgError:
            dx, *_ = np.linalg.lstsq(J, -r, rcond=None)
        accepted = False
        t = damping
        for _ in range(50):
            xn = x + t * dx
            try:
                pn, rn = resfun(xn)
            except OutOfDomainError:
                t *= 0.5
                continue
            if np.abs(rn).max() < nr * (1.0 - 1e-4 * t) + 1e-16:
                x, psi, r = xn, pn, rn
                accepted = True
                break
            t *= 0.5
        if not accepted:
            # Levenberg-Marquardt fallback step
            lam = 1e-6 * np.trace(J.T @ J) / len(x)
            stepped = False
            for _ in range(12):
                try:
                    dx = np.linalg.solve(J.T @ J + lam * np.eye(len(x)), -J.T @ r)
                except np.linalg.LinAlgError:
                    break
                try:
                    pn, rn = resfun(x + dx)
                    if np.abs(rn).max() < nr:
                        x, psi, r = x + dx, pn, rn
                        stepped = True
                        break
                except OutOfDomainError:
                    pass
                lam *= 10.0
            if not stepped:
                break
    nr = np.abs(r).max()
    if nr < best[0]:
        best = (nr, x.copy(), psi, r.copy())
    return _SolveResult(bool(best[0] < tol), best[1], best[2], best[3], max_iter)


# ---------------------------------------------------------------------------
# residual closures in unconstrained coordinates


def _exp_guard(a):
    """exp() for solver coordinates; rejects runaway trial steps before
    they can underflow squares or overflow downstream."""
    if a > 60.0 or a < -60.0:
        raise OutOfDomainError("coordinate out of range")
    return math.exp(a)

def _closure_2f_reduced(mp, grid):
    def fun(x):
        p2 = _sigmoid(x[0])
        q2 = p2 * _sigmoid(x[1])
        gsq = _exp_guard(x[2])
        try:
            gp, (c2,) = closed_form_params((p2,), (q2,), 2)
        except ValueError as exc:   # chain degenerated at a trial step
            raise OutOfDomainError(str(exc))
        if c2 <= 0:
            raise OutOfDomainError("closed-form c2 <= 0")
        psi, g = _psi_grad_r2(mp, p2, q2, c2, gsq, gp, grid)
        return psi, g[[1, 2, 4]]   # d_p2, d_c2, d_gsq
    return fun


def _closure_2f_full(mp, grid):
    def fun(x):
        p2 = _sigmoid(x[0])
        q2 = p2 * _sigmoid(x[1])
        c2 = _exp_guard(x[2])
        gp = _exp_guard(x[3])
        gsq = _exp_guard(x[4])
        return _psi_grad_r2(mp, p2, q2, c2, gsq, gp, grid)
    return fun


def _closure_3f_reduced(mp, grid_in, grid_out):
    def fun(x):
        p2 = _sigmoid(x[0])
        p3 = p2 * _sigmoid(x[1])
        q2 = _sigmoid(x[2])
        q3 = q2 * _sigmoid(x[3])
        gsq = _exp_guard(x[4])
        try:
            gp, (c2, c3) = closed_form_params((p2, p3), (q2, q3), 3)
        except ValueError as exc:
            raise OutOfDomainError(str(exc))
        if c2 <= 0 or c3 <= 0:
            raise OutOfDomainError("closed-form c <= 0")
        psi, g = _psi_grad_r3(mp, p2, p3, q2, q3, c2, c3, gsq, gp, grid_in, grid_out)
        return psi, g[[2, 3, 4, 5, 7]]   # d_p3, d_p2, d_c3, d_c2, d_gsq
    return fun


def _closure_3f_full(mp, grid_in, grid_out):
    def fun(x):
        p2 = _sigmoid(x[0])
        p3 = p2 * _sigmoid(x[1])
        q2 = _sigmoid(x[2])
        q3 = q2 * _sigmoid(x[3])
        c2 = _exp_guard(x[4])
        c3 = _exp_guard(x[5])
        gp = _exp_guard(x[6])
        gsq = _exp_guard(x[7])
        return _psi_grad_r3(mp, p2, p3, q2, q3, c2, c3, gsq, gp, grid_in, grid_out)
    return fun


def _closure_2p_interior(mp):
    # gamma_sq_p eliminated via its stationarity: 2*gp*(2*gp - c2) = 1
    def fun(x):
        c2 = _exp_guard(x[0])
        if c2 > 1e8:
            raise OutOfDomainError("c2 overflow")
        gsq = _exp_guard(x[1])
        gp = 0.25 * (c2 + math.sqrt(c2 * c2 + 4.0))
        psi, g = _psi_grad_2p(mp, c2, gsq, gp)
        return psi, g[[0, 2]]   # d_c2, d_gsq
    return fun


# ---------------------------------------------------------------------------
# public solve

def _params_2f(x, grid_unused=None):
    p2 = _sigmoid(x[0])
    q2 = p2 * _sigmoid(x[1])
    gsq = math.exp(x[2])
    gp, (c2,) = closed_form_params((p2,), (q2,), 2)
    return LiftingParams(2, "full", (p2,), (q2,), (c2,), gsq, gp)


def _params_3f(x):
    p2 = _sigmoid(x[0])
    p3 = p2 * _sigmoid(x[1])
    q2 = _sigmoid(x[2])
    q3 = q2 * _sigmoid(x[3])
    gsq = math.exp(x[4])
    gp, (c2, c3) = closed_form_params((p2, p3), (q2, q3), 3)
    return LiftingParams(3, "full", (p2, p3), (q2, q3), (c2, c3), gsq, gp)


def _degenerate_2p(mp):
    gsq = 0.5 * math.sqrt(mp.alpha * e_max_sq(mp.kappa))
    return LiftingParams(2, "partial", (0.0,), (0.0,), (0.0,), gsq, 0.5,
                         branch="degenerate_c2_zero")


def _starts_2f(cfg):
    starts = []
    ws = cfg.warm_start
    if ws is not None and ws.level == 2 and ws.variant == "full" and 0 < ws.p2 < 1:
        starts.append([_logit(ws.p2), _logit(min(max(ws.q2 / ws.p2, 1e-6), 1 - 1e-9)),
                       math.log(ws.gamma_sq)])
    for p2, ratio, gsq in ((0.5, 0.2, 0.15), (0.3, 0.1, 0.10),
                           (0.7, 0.35, 0.15), (0.85, 0.65, 0.16), (0.93, 0.85, 0.16)):
        starts.append([_logit(p2), _logit(ratio), math.log(gsq)])
    return starts


def _starts_3f(mp, cfg, lp2):
    starts = []
    ws = cfg.warm_start
    if ws is not None and ws.level == 3:
        starts.append([_logit(ws.p2), _logit(ws.p3 / ws.p2),
                       _logit(ws.q2), _logit(ws.q3 / ws.q2), math.log(ws.gamma_sq)])
    if lp2 is not None and lp2.level == 2 and lp2.variant == "full" and 0 < lp2.q2 < lp2.p2:
        p2f, q2f, gsf = lp2.p2, lp2.q2, lp2.gamma_sq
        recipes = (
            (0.97, 0.90, 0.40, 0.85, 0.50),
            (0.96, 0.95, 0.50, 0.92, 0.55),
            (0.98, 0.85, 0.30, 0.75, 0.45),
            (0.99, 0.80, 0.25, 0.65, 0.40),
            (p2f, 0.50, 0.00, 0.50, 1.00),   # continuation start from the level-2 point
        )
        for p2i, fp3, fq2, fq3, fgs in recipes:
            p3i = fp3 * p2f
            q2i = min(q2f + fq2 * (1.0 - q2f), 0.985)
            q3i = max(min(fq3 * q2f, 0.98 * q2i), 1e-5)
            if not (0 < p3i < p2i < 1 and 0 < q3i < q2i < 1):
                continue
            starts.append([_logit(p2i), _logit(p3i / p2i),
                           _logit(q2i), _logit(q3i / q2i), math.log(fgs * gsf)])
    starts.append([_logit(0.97), _logit(0.45), _logit(0.55), _logit(0.15), math.log(0.06)])
    return starts


@dataclass
class StationaryResult:
    params: LiftingParams
    psi: float
    residual: ResidualVector
    iterations: int


def _multi_start(fun, starts, cfg):
    """First converged damped-Newton run over the start list; start attempts
    run on a capped iteration budget, with one full-budget retry pass."""
    for budget in (min(cfg.max_iter, 60), cfg.max_iter):
        for x0 in starts:
            res = _damped_newton(fun, x0, cfg.residual_tol, budget, cfg.damping)
            if res.converged:
                return res
        if budget == cfg.max_iter:
            break
    return None


def _solve_2f(mp, cfg) -> StationaryResult:
    """Interior full-lift point when it exists and dominates, otherwise the
    partial-lift (p2 = q2 = 0 boundary) value: the stationary value is the
    larger branch, so each level can only tighten the one below."""
    grid = gauss_hermite(cfg.quad_order_outer)
    fun = _closure_2f_reduced(mp, grid)
    interior = _multi_start(fun, _starts_2f(cfg), cfg)
    lower = _solve_2p(mp, replace(cfg, warm_start=None))
    if interior is None:
        return lower
    lp = _params_2f(interior.x)
    if interior.psi < lower.psi - 1e-12:
        return lower
    _, gfull = _psi_grad_r2(mp, lp.p2, lp.q2, lp.c2, lp.gamma_sq, lp.gamma_sq_p, grid)
    return StationaryResult(lp, interior.psi, ResidualVector(_R2_NAMES, gfull),
                            interior.iterations)


def _solve_2f_fullsys(mp, cfg) -> StationaryResult:
    grid = gauss_hermite(cfg.quad_order_outer)
    red = _solve_2f(mp, replace(cfg, full_system=False))
    lp = red.params
    x0 = [_logit(lp.p2), _logit(lp.q2 / lp.p2), math.log(lp.c2),
          math.log(lp.gamma_sq_p), math.log(lp.gamma_sq)]
    fun = _closure_2f_full(mp, grid)
    res = _damped_newton(fun, x0, cfg.residual_tol, cfg.max_iter, cfg.damping)
    if not res.converged:
        raise ConvergenceError("full-system level-2 Newton did not converge",
                               best_residual=np.abs(res.residual).max())
    p2 = _sigmoid(res.x[0]); q2 = p2 * _sigmoid(res.x[1])
    lp = LiftingParams(2, "full", (p2,), (q2,),
                       (math.exp(res.x[2]),), math.exp(res.x[4]), math.exp(res.x[3]))
    return StationaryResult(lp, res.psi, ResidualVector(_R2_NAMES, res.residual), res.iterations)


def _solve_3f(mp, cfg) -> StationaryResult:
    """Interior third-lift point, falling back to the level-2 value when the
    interior solution does not exist or does not dominate."""
    gi, go = cfg.grids()
    fun = _closure_3f_reduced(mp, gi, go)
    lower = _solve_2f(mp, replace(cfg, warm_start=None))
    interior = _multi_start(fun, _starts_3f(mp, cfg, lower.params), cfg)
    if interior is None:
        return lower
    lp = _params_3f(interior.x)
    if interior.psi < lower.psi - 1e-12:
        return lower
    _, gfull = _psi_grad_r3(mp, lp.p2, lp.p3, lp.q2, lp.q3, lp.c2, lp.c3,
                            lp.gamma_sq, lp.gamma_sq_p, gi, go)
    return StationaryResult(lp, interior.psi, ResidualVector(_R3_NAMES, gfull),
                            interior.iterations)


def _solve_3f_fullsys(mp, cfg) -> StationaryResult:
    gi, go = cfg.grids()
    red = _solve_3f(mp, replace(cfg, full_system=False))
    lp = red.params
    x0 = [_logit(lp.p2), _logit(lp.p3 / lp.p2), _logit(lp.q2), _logit(lp.q3 / lp.q2),
          math.log(lp.c2), math.log(lp.c3), math.log(lp.gamma_sq_p), math.log(lp.gamma_sq)]
    fun = _closure_3f_full(mp, gi, go)
    res = _damped_newton(fun, x0, cfg.residual_tol, cfg.max_iter, cfg.damping)
    if not res.converged:
        raise ConvergenceError("full-system level-3 Newton did not converge",
                               best_residual=np.abs(res.residual).max())
    x = res.x
    p2 = _sigmoid(x[0]); p3 = p2 * _sigmoid(x[1])
    q2 = _sigmoid(x[2]); q3 = q2 * _sigmoid(x[3])
    lp = LiftingParams(3, "full", (p2, p3), (q2, q3),
                       (math.exp(x[4]), math.exp(x[5])), math.exp(x[7]), math.exp(x[6]))
    return StationaryResult(lp, res.psi, ResidualVector(_R3_NAMES, res.residual), res.iterations)


def _solve_2p(mp, cfg) -> StationaryResult:
    """Partial second lift: interior branch if it exists and dominates,
    else the degenerate c2 -> 0 branch (which reproduces level 1)."""
    fun = _closure_2p_interior(mp)
    e = e_max_sq(mp.kappa)
    psi_deg = -1.0 + math.sqrt(mp.alpha * e)
    starts = [[math.log(2.0), math.log(max(0.5 * math.sqrt(mp.alpha * e) * 0.7, 1e-4))],
              [math.log(4.0), math.log(0.1)],
              [math.log(1.0), math.log(0.3)]]
    ws = cfg.warm_start
    if ws is not None and ws.level == 2 and ws.variant == "partial" and ws.c2 > 0:
        starts.insert(0, [math.log(ws.c2), math.log(ws.gamma_sq)])
    interior = None
    for x0 in starts:
        res = _damped_newton(fun, x0, cfg.residual_tol, cfg.max_iter, cfg.damping)
        if res.converged and math.exp(res.x[0]) > 1e-3:
            interior = res
            break
    if interior is not None and interior.psi > psi_deg + 1e-12:
        c2 = _exp_guard(interior.x[0])
        gsq = _exp_guard(interior.x[1])
        gp = 0.25 * (c2 + math.sqrt(c2 * c2 + 4.0))
        lp = LiftingParams(2, "partial", (0.0,), (0.0,), (c2,), gsq, gp, branch="interior")
        _, gfull = _psi_grad_2p(mp, c2, gsq, gp)
        return StationaryResult(lp, interior.psi, ResidualVector(_2P_NAMES, gfull),
                                interior.iterations)
    lp = _degenerate_2p(mp)
    return StationaryResult(lp, psi_deg, ResidualVector((), np.zeros(0)), 0)


def _solve_1(mp) -> StationaryResult:
    gsq = 0.5 * math.sqrt(mp.alpha * e_max_sq(mp.kappa))
    lp = LiftingParams(1, "full", (), (), (), gsq, 0.5)
    from .free_energy import psi_r1
    return StationaryResult(lp, psi_r1(mp), ResidualVector((), np.zeros(0)), 0)


def solve_stationary_full(mp: ModelPoint, level: str, cfg: SolverConfig | None = None) -> StationaryResult:
    """Like solve_stationary but returns the value/residual diagnostics too."""
    cfg = cfg or SolverConfig()
    if level == "1":
        return _solve_1(mp)
    if level == "2p":
        return _solve_2p(mp, cfg)
    if level == "2f":
        return _solve_2f_fullsys(mp, cfg) if cfg.full_system else _solve_2f(mp, cfg)
    if level == "3f":
        return _solve_3f_fullsys(mp, cfg) if cfg.full_system else _solve_3f(mp, cfg)
    raise ValueError(f"level must be one of 1, 2p, 2f, 3f; got {level!r}")


def solve_stationary(mp: ModelPoint, level: str, cfg: SolverConfig | None = None) -> LiftingParams:
    return solve_stationary_full(mp, level, cfg).params


# ---------------------------------------------------------------------------
# modulo-m support: re-stationarize (p, q, gammas) at fixed c

def restationarize_fixed_c(mp: ModelPoint, lp: LiftingParams, cfg: SolverConfig) -> StationaryResult:
    if lp.level == 2 and lp.variant == "full":
        grid = gauss_hermite(cfg.quad_order_outer)
        c2 = lp.c2

        def fun(x):
            p2 = _sigmoid(x[0])
            q2 = p2 * _sigmoid(x[1])
            gp = _exp_guard(x[2])
            gsq = _exp_guard(x[3])
            psi, g = _psi_grad_r2(mp, p2, q2, c2, gsq, gp, grid)
            return psi, g[[0, 1, 3, 4]]   # all but d_c2

        x0 = [_logit(lp.p2), _logit(lp.q2 / lp.p2),
              math.log(lp.gamma_sq_p), math.log(lp.gamma_sq)]
        res = _damped_newton(fun, x0, cfg.residual_tol, cfg.max_iter, cfg.damping)
        if not res.converged:
            raise ConvergenceError("fixed-c re-stationarization failed (level 2)",
                                   best_residual=np.abs(res.residual).max())
        p2 = _sigmoid(res.x[0]); q2 = p2 * _sigmoid(res.x[1])
        out = LiftingParams(2, "full", (p2,), (q2,), (c2,),
                            math.exp(res.x[3]), math.exp(res.x[2]))
        return StationaryResult(out, res.psi, ResidualVector(
            ("q2", "p2", "gamma_sq_p", "gamma_sq"), res.residual), res.iterations)
    if lp.level == 3 and lp.variant == "full":
        gi, go = cfg.grids()
        c2, c3 = lp.c2, lp.c3

        def fun(x):
            p2 = _sigmoid(x[0])
            p3 = p2 * _sigmoid(x[1])
            q2 = _sigmoid(x[2])
            q3 = q2 * _sigmoid(x[3])
            gp = _exp_guard(x[4])
            gsq = _exp_guard(x[5])
            psi, g = _psi_grad_r3(mp, p2, p3, q2, q3, c2, c3, gsq, gp, gi, go)
            return psi, g[[0, 1, 2, 3, 6, 7]]   # all but d_c3, d_c2

        x0 = [_logit(lp.p2), _logit(lp.p3 / lp.p2), _logit(lp.q2), _logit(lp.q3 / lp.q2),
              math.log(lp.gamma_sq_p), math.log(lp.gamma_sq)]
        res = _damped_newton(fun, x0, cfg.residual_tol, cfg.max_iter, cfg.damping)
        if not res.converged:
            raise ConvergenceError("fixed-c re-stationarization failed (level 3)",
                                   best_residual=np.abs(res.residual).max())
        x = res.x
        p2 = _sigmoid(x[0]); p3 = p2 * _sigmoid(x[1])
        q2 = _sigmoid(x[2]); q3 = q2 * _sigmoid(x[3])
        out = LiftingParams(3, "full", (p2, p3), (q2, q3), (c2, c3),
                            math.exp(x[5]), math.exp(x[4]))
        return StationaryResult(out, res.psi, ResidualVector(
            ("q3", "q2", "p3", "p2", "gamma_sq_p", "gamma_sq"), res.residual), res.iterations)
    raise ValueError("fixed-c re-stationarization needs a full level-2/3 point")


# ---------------------------------------------------------------------------
# gradient verification

@dataclass(frozen=True)
class GradientCheckReport:
    level: str
    names: tuple
    analytic: np.ndarray
    finite_diff: np.ndarray
    rel_errors: np.ndarray
    max_rel_error: float
    threshold: float
    passed: bool
    fd_step: float


def _central_fd(psifun, values, idx, h):
    up = list(values); up[idx] += h
    dn = list(values); dn[idx] -= h
    return (psifun(*up) - psifun(*dn)) / (2.0 * h)


def check_gradient(mp: ModelPoint, lp: LiftingParams, level: str,
                   fd_step: float = 1e-6, cfg: SolverConfig | None = None) -> GradientCheckReport:
    """Compare analytic derivatives with central finite differences of the
    free-energy evaluators at the same quadrature orders."""
    cfg = cfg or SolverConfig()
    if level == "2f":
        grid = gauss_hermite(cfg.quad_order_outer)
        _, analytic = _psi_grad_r2(mp, lp.p2, lp.q2, lp.c2, lp.gamma_sq, lp.gamma_sq_p, grid)
        names = _R2_NAMES

        def psifun(q2, p2, c2, gp, gsq):
            return psi_r2_full(mp, LiftingParams(2, "full", (p2,), (q2,), (c2,), gsq, gp), grid)

        vals = [lp.q2, lp.p2, lp.c2, lp.gamma_sq_p, lp.gamma_sq]
        threshold = 1e-5
    elif level == "3f":
        gi, go = cfg.grids()
        _, analytic = _psi_grad_r3(mp, lp.p2, lp.p3, lp.q2, lp.q3, lp.c2, lp.c3,
                                   lp.gamma_sq, lp.gamma_sq_p, gi, go)
        names = _R3_NAMES

        def psifun(q3, q2, p3, p2, c3, c2, gp, gsq):
            return psi_r3_full(mp, LiftingParams(3, "full", (p2, p3), (q2, q3),
                                                 (c2, c3), gsq, gp), gi, go)

        vals = [lp.q3, lp.q2, lp.p3, lp.p2, lp.c3, lp.c2, lp.gamma_sq_p, lp.gamma_sq]
        threshold = 1e-4
    elif level == "2p":
        _, analytic = _psi_grad_2p(mp, lp.c2, lp.gamma_sq, lp.gamma_sq_p)
        names = _2P_NAMES

        def psifun(c2, gp, gsq):
            return psi_r2_partial(mp, c2, gsq, gp)

        vals = [lp.c2, lp.gamma_sq_p, lp.gamma_sq]
        threshold = 1e-5
    else:
        raise ValueError("gradient check supports levels 2p, 2f, 3f")
    fd = np.array([_central_fd(psifun, vals, i, fd_step) for i in range(len(vals))])
    # per-component relative error with a 5%-of-gradient-norm denominator
    # floor: near a stationary point, components a few percent of the norm
    # sit at the central-difference noise level (~eps*|terms|/fd_step) and a
    # bare ratio would divide that noise by a near-zero true value
    scale = max(np.abs(analytic).max(), 1e-6)
    rel = np.abs(analytic - fd) / np.maximum.reduce(
        [np.abs(analytic), np.abs(fd), np.full_like(fd, 5e-2 * scale)])
    mx = float(rel.max())
    return GradientCheckReport(level, names, analytic, fd, rel, mx, threshold,
                               bool(mx < threshold), fd_step)
