"""Critical capacities: zero crossings of the stationarized free energy.

For each level the capacity alpha_c(kappa) is the root in alpha of
g(alpha) = psi(stationary params; kappa, alpha). g is verified to be
increasing on every bracket before bisection is trusted; each lifting
level lowers the capacity, so brackets start from the previous level's
root. Results serialize to CSV with the fixed column order

    kappa,level,alpha_c,p2,p3,q2,q3,c2,c3,gamma_sq,gamma_sq_p,psi_residual,branch
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .free_energy import LiftingParams, ModelPoint, OutOfDomainError, e_max_sq
from .stationarity import (
    ConvergenceError,
    SolverConfig,
    StationaryResult,
    restationarize_fixed_c,
    solve_stationary_full,
)

CSV_COLUMNS = ("kappa", "level", "alpha_c", "p2", "p3", "q2", "q3", "c2", "c3",
               "gamma_sq", "gamma_sq_p", "psi_residual", "branch")

DEFAULT_PSI_TOL = 1e-4
DEFAULT_CAPACITY_TOL = 1e-3


class BracketingError(RuntimeError):
    def __init__(self, message, probes=None):
        super().__init__(message)
        self.probes = probes or []


@dataclass
class CapacityResult:
    kappa: float
    level: str
    alpha_c: float
    params: LiftingParams | None
    residual_norm: float
    psi_residual: float
    branch: str
    diagnostics: dict = field(default_factory=dict)

    @property
    def failed(self) -> bool:
        return not math.isfinite(self.alpha_c)

    def to_dict(self) -> dict:
        lp = self.params
        absent = lambda level, key: None
        row = {
            "kappa": self.kappa,
            "level": self.level,
            "alpha_c": self.alpha_c,
            "p2": None, "p3": None, "q2": None, "q3": None,
            "c2": None, "c3": None, "gamma_sq": None, "gamma_sq_p": None,
            "psi_residual": self.psi_residual,
            "branch": self.branch,
        }
        if lp is not None:
            row["gamma_sq"] = lp.gamma_sq
            row["gamma_sq_p"] = lp.gamma_sq_p
            if lp.level >= 2:
                row["p2"], row["q2"], row["c2"] = lp.p2, lp.q2, lp.c2
            if lp.level >= 3:
                row["p3"], row["q3"], row["c3"] = lp.p3, lp.q3, lp.c3
        return row

    def csv_row(self) -> list:
        d = self.to_dict()
        return ["" if d[k] is None else d[k] for k in CSV_COLUMNS]


def results_to_csv(results, fh=None) -> str:
    """Write CapacityResults in the fixed column order; returns the text."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in results:
        w.writerow(r.csv_row())
    text = buf.getvalue()
    if fh is not None:
        fh.write(text)
    return text


def _alpha_level1(kappa: float) -> float:
    return 1.0 / e_max_sq(kappa)


class _StationaryValue:
    """g(alpha) evaluator that threads warm starts between calls."""

    def __init__(self, kappa, level, cfg):
        self.kappa = kappa
        self.level = level
        self.cfg = cfg
        self.last: StationaryResult | None = None
        self.evals = 0

    def __call__(self, alpha: float) -> float:
        cfg = self.cfg
        if self.last is not None:
            cfg = replace(cfg, warm_start=self.last.params)
        res = solve_stationary_full(ModelPoint(self.kappa, alpha), self.level, cfg)
        self.last = res
        self.evals += 1
        return res.psi


def alpha_c(kappa: float, level: str, cfg: SolverConfig | None = None,
            psi_tol: float = DEFAULT_PSI_TOL,
            capacity_tol: float = DEFAULT_CAPACITY_TOL) -> CapacityResult:
    """Capacity at one (kappa, level); level in {"1", "2p", "2f", "3f"}."""
    cfg = cfg or SolverConfig()
    if level == "1":
        a1 = _alpha_level1(kappa)
        res = solve_stationary_full(ModelPoint(kappa, a1), "1", cfg)
        return CapacityResult(kappa, "1", a1, res.params, 0.0, res.psi, "interior",
                              {"iterations": 0, "g_evals": 1,
                               "quad_order_inner": cfg.quad_order_inner,
                               "quad_order_outer": cfg.quad_order_outer})
    prev = {"2p": "1", "2f": "2p", "3f": "2f"}.get(level)
    if prev is None:
        raise ValueError(f"unknown level {level!r}")
    alpha_prev = alpha_c(kappa, prev, cfg, psi_tol, capacity_tol).alpha_c
    g = _StationaryValue(kappa, level, cfg)
    lo, hi = 0.5 * alpha_prev, 1.05 * alpha_prev
    glo, ghi = g(lo), g(hi)
    probes = [(lo, glo), (hi, ghi)]
    for _ in range(8):
        if glo < 0:
            break
        lo *= 0.5
        glo = g(lo)
        probes.append((lo, glo))
    for _ in range(8):
        if ghi > 0:
            break
        hi *= 1.2
        ghi = g(hi)
        probes.append((hi, ghi))
    if not (glo < 0 < ghi):
        raise BracketingError(
            f"no sign change for level {level} at kappa={kappa}", probes)
    if not glo < ghi:
        raise BracketingError(
            f"psi not increasing in alpha on bracket at kappa={kappa}", probes)
    it = 0
    gmid, mid = None, None
    for it in range(200):
        # secant proposal, safeguarded by bisection
        mid = lo + (hi - lo) * (-glo) / (ghi - glo)
        third = (hi - lo) / 3.0
        mid = min(max(mid, lo + 0.1 * third), hi - 0.1 * third)
        gmid = g(mid)
        if gmid > 0:
            hi, ghi = mid, gmid
        else:
            lo, glo = mid, gmid
        if abs(gmid) < psi_tol and (hi - lo) < capacity_tol * mid:
            break
    else:
        raise BracketingError(f"capacity root did not converge at kappa={kappa}",
                              [(lo, glo), (hi, ghi)])
    res = g.last
    return CapacityResult(
        kappa, level, mid, res.params,
        res.residual.inf_norm if len(res.residual.values) else 0.0,
        gmid, res.params.branch,
        {"iterations": it + 1, "g_evals": g.evals,
         "bracket": (lo, hi), "alpha_prev": alpha_prev,
         "quad_order_inner": cfg.quad_order_inner,
         "quad_order_outer": cfg.quad_order_outer})


def _sweep_point(kappa, level, cfg, psi_tol, capacity_tol):
    try:
        return alpha_c(kappa, level, cfg, psi_tol, capacity_tol)
    except (ConvergenceError, BracketingError, OutOfDomainError) as exc:
        return CapacityResult(kappa, level, math.nan, None, math.nan, math.nan,
                              "failed", {"error": str(exc)})


def sweep(kappas, levels, cfg: SolverConfig | None = None,
          psi_tol: float = DEFAULT_PSI_TOL,
          capacity_tol: float = DEFAULT_CAPACITY_TOL,
          threads: int = 1) -> list[CapacityResult]:
    """Capacities over a sorted kappa grid for each requested level.

    Sequential mode (threads=1) reuses the neighboring kappa's stationary
    point as warm start; parallel mode disables warm starts. Per-point
    failures are isolated and marked, the sweep continues.
    """
    cfg = cfg or SolverConfig()
    kappas = list(kappas)
    if any(b < a for a, b in zip(kappas, kappas[1:])):
        raise ValueError("kappas must be sorted ascending")
    levels = [levels] if isinstance(levels, str) else list(levels)
    results = []
    for level in levels:
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as ex:
                results.extend(ex.map(
                    lambda k: _sweep_point(k, level, cfg, psi_tol, capacity_tol), kappas))
        else:
            warm = None
            for k in kappas:
                cfg_k = replace(cfg, warm_start=warm)
                r = _sweep_point(k, level, cfg_k, psi_tol, capacity_tol)
                results.append(r)
                warm = r.params if not r.failed else None
    return results


@dataclass
class ModuloMReport:
    kappa: float
    level: str
    alpha_c: float
    base_psi: float
    entries: list          # (c values tuple, psi at re-stationarized point, psi - base)
    skipped: list          # (c values tuple, reason)
    passed: bool
    tolerance: float = 1e-8


def modulo_m_check(kappa: float, level: str, cfg: SolverConfig | None = None,
                   grid_radius: float = 0.1, grid_points: int = 5,
                   capacity_result: CapacityResult | None = None) -> ModuloMReport:
    """Check that the stationary c is a local maximum of psi over c when the
    remaining parameters are re-stationarized at each perturbed c."""
    cfg = cfg or SolverConfig()
    if level not in ("2f", "3f"):
        raise ValueError("modulo-m check applies to levels 2f and 3f")
    cap = capacity_result or alpha_c(kappa, level, cfg)
    lp = cap.params
    mp = ModelPoint(kappa, cap.alpha_c)
    base = cap.psi_residual
    offs = np.linspace(-grid_radius, grid_radius, grid_points)
    combos = [(d2,) for d2 in offs] if level == "2f" else \
             [(d2, d3) for d2 in offs for d3 in offs]
    entries, skipped = [], []
    for deltas in combos:
        if all(abs(d) < 1e-15 for d in deltas):
            continue
        if level == "2f":
            c_new = (lp.c2 * (1.0 + deltas[0]),)
        else:
            c_new = (lp.c2 * (1.0 + deltas[0]), lp.c3 * (1.0 + deltas[1]))
        lp_pert = replace(lp, c=c_new)
        try:
            lp_pert.validate()
            res = restationarize_fixed_c(mp, lp_pert, cfg)
        except (OutOfDomainError, ConvergenceError) as exc:
            skipped.append((c_new, str(exc)))
            continue
        entries.append((c_new, res.psi, res.psi - base))
    tol = 1e-8
    passed = all(psi <= base + tol for _, psi, _ in entries)
    return ModuloMReport(kappa, level, cap.alpha_c, base, entries, skipped, passed, tol)


@dataclass
class OrderingReport:
    kappa: float
    alphas: dict
    improvements: dict     # relative drop per lifting step
    passed: bool
    slack: float = 1e-6


def ordering_audit(kappa: float, cfg: SolverConfig | None = None,
                   results: dict | None = None) -> OrderingReport:
    """alpha^(1) >= alpha^(2p) >= alpha^(2f) >= alpha^(3f) with slack for the
    degenerate equality above kappa_c; returns per-level relative improvements."""
    cfg = cfg or SolverConfig()
    if results is None:
        results = {lvl: alpha_c(kappa, lvl, cfg) for lvl in ("1", "2p", "2f", "3f")}
    a = {lvl: results[lvl].alpha_c for lvl in ("1", "2p", "2f", "3f")}
    slack = 1e-6
    order = ("1", "2p", "2f", "3f")
    passed = all(a[order[i]] >= a[order[i + 1]] - slack * a[order[i]]
                 for i in range(3))
    improvements = {
        f"{order[i]}->{order[i + 1]}": (a[order[i]] - a[order[i + 1]]) / a[order[i]]
        for i in range(3)
    }
    return OrderingReport(kappa, a, improvements, passed, slack)


def kappa_c_estimate(cfg: SolverConfig | None = None,
                     lo: float = -0.75, hi: float = -0.50,
                     tol: float = 5e-4) -> float:
    """Threshold below which the partial second lift departs from level 1,
    located as the kappa where the interior branch's psi at alpha^(1)(kappa)
    crosses zero."""
    cfg = cfg or SolverConfig()

    def f(kappa):
        res = solve_stationary_full(ModelPoint(kappa, _alpha_level1(kappa)), "2p", cfg)
        if res.params.branch != "interior":
            return -1.0
        return res.psi

    flo, fhi = f(lo), f(hi)
    if not (flo > 0 > fhi):
        raise BracketingError("kappa_c not bracketed", [(lo, flo), (hi, fhi)])
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if f(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
