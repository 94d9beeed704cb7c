"""Acceptance suite: one test per criterion, each printing a pass/fail line
(run with -s to see the lines live; pytest -v names each criterion).

Shared capacity solves are computed once per module. Reference values come
from the embedded golden table (see nsperc/_golden.py).
"""

import math
import time

import numpy as np
import pytest

from nsperc import (
    FiniteNInstance,
    LiftingParams,
    ModelPoint,
    SolverConfig,
    alpha_c,
    check_gradient,
    closed_form_params,
    convex_reference_ground_state,
    e_max_sq,
    finite_n_ground_state,
    gauss_hermite,
    mc_expectation,
    modulo_m_check,
    ordering_audit,
    psi_r1,
    psi_r2_full,
    psi_r2_partial,
    psi_r3_full,
    solve_stationary_full,
    sweep,
)
from nsperc import backend
from nsperc._golden import golden_table, golden_value

KAPPAS = (-2.0, -1.5, -1.0, -0.5)
G60 = gauss_hermite(60)


def report(criterion, ok, detail):
    print(f"[criterion {criterion}] {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, f"criterion {criterion}: {detail}"


@pytest.fixture(scope="module")
def caps():
    """Capacity results and wall times for all levels on the 4-kappa grid."""
    # warm the jitted kernels so timings measure the algorithm, not compilation
    solve_stationary_full(ModelPoint(-1.5, 36.57), "2f")
    solve_stationary_full(ModelPoint(-1.5, 36.40), "3f")
    out, times = {}, {}
    for level in ("1", "2p", "2f", "3f"):
        for k in KAPPAS:
            t0 = time.perf_counter()
            out[(k, level)] = alpha_c(k, level)
            times[(k, level)] = time.perf_counter() - t0
    return out, times


@pytest.fixture(scope="module")
def table2():
    cells = golden_table(2)
    ks = sorted({c.kappa for c in cells})
    return {r.kappa: r for r in sweep(ks, ["2f"])}


def test_criterion_01_level1_capacities(caps):
    results, _ = caps
    refs = {k: golden_value(5, k, "1", "alpha") for k in KAPPAS}
    errs = {k: abs(results[(k, "1")].alpha_c - refs[k]) / refs[k] for k in KAPPAS}
    report(1, all(e < 1e-3 for e in errs.values()),
           "level-1 closed-form capacities vs references "
           + " ".join(f"k={k}:{e:.1e}" for k, e in errs.items()) + " (tol 0.1%)")


def test_criterion_02_level2_partial(caps):
    results, times = caps
    refs = {k: golden_value(5, k, "2p", "alpha") for k in KAPPAS}
    errs = {k: abs(results[(k, "2p")].alpha_c - refs[k]) / refs[k] for k in KAPPAS}
    degenerate_ok = results[(-0.5, "2p")].branch == "degenerate_c2_zero" and \
        abs(results[(-0.5, "2p")].alpha_c - results[(-0.5, "1")].alpha_c) < 1e-3
    runtime_ok = all(times[(k, "2p")] < 1.0 for k in KAPPAS)
    report(2, all(e < 5e-3 for e in errs.values()) and degenerate_ok and runtime_ok,
           "2p capacities " + " ".join(f"k={k}:{e:.1e}" for k, e in errs.items())
           + f" (tol 0.5%), degenerate branch at k=-0.5: {degenerate_ok}, "
           + f"runtime<1s: {runtime_ok}")


def test_criterion_03_level2_full(caps, table2):
    results, times = caps
    # kappa = -1.5 capacity and stationary parameters vs T1
    r15 = results[(-1.5, "2f")]
    ok = abs(r15.alpha_c - 36.57) / 36.57 < 5e-3
    lp = r15.params
    t1 = {c.quantity: c.value for c in golden_table(1)
          if c.level == "2f" and c.quantity != "alpha"}
    d15 = r15.to_dict()
    param_errs = {q: abs(d15[q] - v) / abs(v) for q, v in t1.items()}
    ok &= all(e < 0.02 for e in param_errs.values())
    # full T2 row: alpha within 0.5%, five parameter rows within 2%
    worst_alpha = worst_param = 0.0
    for c in golden_table(2):
        got = table2[c.kappa].to_dict()[
            "alpha_c" if c.quantity == "alpha" else c.quantity]
        rel = abs(got - c.value) / abs(c.value)
        if c.quantity == "alpha":
            worst_alpha = max(worst_alpha, rel)
        else:
            worst_param = max(worst_param, rel)
    ok &= worst_alpha < 5e-3 and worst_param < 0.02
    runtime_ok = all(times[(k, "2f")] < 5.0 for k in KAPPAS)
    ok &= runtime_ok
    report(3, ok,
           f"2f: alpha(-1.5) rel {abs(r15.alpha_c - 36.57) / 36.57:.1e}, "
           f"T1 params worst {max(param_errs.values()):.1e} (tol 2e-2), "
           f"T2 alphas worst {worst_alpha:.1e} (tol 5e-3), "
           f"T2 params worst {worst_param:.1e} (tol 2e-2), runtime<5s: {runtime_ok}")


def test_criterion_04_level3_capacities(caps):
    results, times = caps
    refs = {k: golden_value(5, k, "3f", "alpha") for k in KAPPAS}
    errs = {k: abs(results[(k, "3f")].alpha_c - refs[k]) / refs[k] for k in KAPPAS}
    runtime_ok = all(times[(k, "3f")] < 60.0 for k in KAPPAS)
    report("4 (capacities)", all(e < 5e-3 for e in errs.values()) and runtime_ok,
           "3f capacities " + " ".join(f"k={k}:{e:.1e}" for k, e in errs.items())
           + f" (tol 0.5%), runtime<60s per kappa: {runtime_ok}")


def test_criterion_04_level3_parameters(caps):
    """Stationary parameters within 3% of T4.

    Known honest failure at kappa = -1.0 and -0.5: those T4 columns satisfy
    the eight-equation stationarity system only to ~8e-3 (they are
    closed-form consistent but sit elsewhere along a nearly flat residual
    valley; the smallest Jacobian singular value there is ~3e-5 and psi
    varies by < 1e-4 across it). This solver converges the residuals to
    1e-9; the resulting points differ from the printed ones by up to ~9% in
    (p3, q3, gamma_sq, c2, c3) while every capacity agrees to better than
    0.1%. Quadrature-order independence of the solved points was verified
    at orders 60 through 160.
    """
    results, _ = caps
    bad = []
    worst = 0.0
    for c in golden_table(4):
        if c.quantity == "alpha":
            continue
        d = results[(c.kappa, "3f")].to_dict()
        rel = abs(d[c.quantity] - c.value) / abs(c.value)
        worst = max(worst, rel)
        if rel >= 0.03:
            bad.append(f"k={c.kappa} {c.quantity}: got {d[c.quantity]:.4g} "
                       f"ref {c.value:g} rel {rel:.1%}")
    report("4 (parameters)", not bad,
           f"3f stationary parameters vs T4, tol 3%: worst {worst:.1%}; "
           + ("all cells within tolerance" if not bad
              else f"{len(bad)} cells out: " + "; ".join(bad)))


def test_criterion_05_ordering_and_convergence(caps):
    results, _ = caps
    ok = True
    details = []
    for k in KAPPAS:
        rep = ordering_audit(k, results={lvl: results[(k, lvl)]
                                         for lvl in ("1", "2p", "2f", "3f")})
        ok &= rep.passed
        imp23 = rep.improvements["2f->3f"]
        ok &= imp23 < 0.01
        details.append(f"k={k}: ordered={rep.passed} 2f->3f={imp23:.2%}")
    for k in (-2.0, -1.0):
        a1 = results[(k, "1")].alpha_c
        a2f = results[(k, "2f")].alpha_c
        a3f = results[(k, "3f")].alpha_c
        imp_l2 = (a1 - a2f) / a1
        imp_l3 = (a2f - a3f) / a2f
        ok &= imp_l3 <= imp_l2 / 10.0
        details.append(f"k={k}: level-2 gain {imp_l2:.2%} vs level-3 gain {imp_l3:.2%}")
    report(5, ok, "; ".join(details))


def test_criterion_06_closed_form_relations(caps, table2):
    results, _ = caps
    pool = [results[(k, "2f")] for k in KAPPAS] + \
           [results[(k, "3f")] for k in KAPPAS] + list(table2.values())
    worst_cf = worst_res = 0.0
    for r in pool:
        lp = r.params
        if lp.variant != "full" or lp.level < 2:
            continue
        gp, c = closed_form_params(lp.p, lp.q, lp.level)
        worst_cf = max(worst_cf, abs(lp.gamma_sq_p - gp),
                       *[abs(a - b) for a, b in zip(lp.c, c)])
        worst_res = max(worst_res, r.residual_norm)
    report(6, worst_cf < 1e-8 and worst_res < 1e-6,
           f"reduced-mode closed-form mismatch max {worst_cf:.1e} (tol 1e-8); "
           f"full-system residual max {worst_res:.1e} (tol 1e-6)")


def test_criterion_07_gradient_verification():
    rng = np.random.default_rng(20250810)
    worst2 = worst3 = 0.0
    for _ in range(100):
        kappa = rng.uniform(-2.5, -0.4)
        alpha = rng.uniform(2.0, 60.0)
        p2 = rng.uniform(0.05, 0.9)
        q2 = p2 * rng.uniform(0.05, 0.8)
        c2 = rng.uniform(0.5, 6.0)
        gsq = rng.uniform(0.05, 0.4)
        gp = 0.5 * c2 * (1 - q2) * rng.uniform(1.05, 2.0) + rng.uniform(0.01, 0.3)
        lp = LiftingParams(2, "full", (p2,), (q2,), (c2,), gsq, gp)
        worst2 = max(worst2, check_gradient(
            ModelPoint(kappa, alpha), lp, "2f").max_rel_error)
    for _ in range(100):
        kappa = rng.uniform(-2.5, -0.4)
        alpha = rng.uniform(2.0, 60.0)
        p2 = rng.uniform(0.3, 0.95)
        p3 = p2 * rng.uniform(0.15, 0.85)
        q2 = rng.uniform(0.1, 0.85)
        q3 = q2 * rng.uniform(0.1, 0.8)
        c2 = rng.uniform(1.0, 8.0)
        c3 = c2 * rng.uniform(0.15, 0.8)
        gsq = rng.uniform(0.05, 0.3)
        need = 0.5 * (c2 * (1 - q2) + c3 * (q2 - q3))
        gp = need * rng.uniform(1.05, 1.9) + rng.uniform(0.01, 0.3)
        lp = LiftingParams(3, "full", (p2, p3), (q2, q3), (c2, c3), gsq, gp)
        worst3 = max(worst3, check_gradient(
            ModelPoint(kappa, alpha), lp, "3f").max_rel_error)
    # published stationary points: every T2 column (level 2) and T4 column
    # (level 3); their 3-5 s.f. rounding keeps residuals well above the
    # finite-difference noise, unlike solver-converged points
    worst_s2 = worst_s3 = 0.0
    t2cols, t4cols = {}, {}
    for c in golden_table(2):
        t2cols.setdefault(c.kappa, {})[c.quantity] = c.value
    for c in golden_table(4):
        t4cols.setdefault(c.kappa, {})[c.quantity] = c.value
    for k, d in t2cols.items():
        lp = LiftingParams(2, "full", (d["p2"],), (d["q2"],), (d["c2"],),
                           d["gamma_sq"], d["gamma_sq_p"])
        rep = check_gradient(ModelPoint(k, d["alpha"]), lp, "2f")
        worst_s2 = max(worst_s2, rep.max_rel_error)
    for k, d in t4cols.items():
        lp = LiftingParams(3, "full", (d["p2"], d["p3"]), (d["q2"], d["q3"]),
                           (d["c2"], d["c3"]), d["gamma_sq"], d["gamma_sq_p"])
        rep = check_gradient(ModelPoint(k, d["alpha"]), lp, "3f")
        worst_s3 = max(worst_s3, rep.max_rel_error)
    report(7, worst2 < 1e-5 and worst3 < 1e-4
           and worst_s2 < 1e-5 and worst_s3 < 1e-4,
           f"FD agreement: level-2 worst {worst2:.1e} (tol 1e-5) and level-3 "
           f"worst {worst3:.1e} (tol 1e-4) over 100 random points each; "
           f"published points worst {worst_s2:.1e} (2f) / {worst_s3:.1e} (3f)")


def test_criterion_08_collapse_properties():
    rng = np.random.default_rng(8)
    g40, g48 = gauss_hermite(40), gauss_hermite(48)
    w32 = w20 = wc0 = 0.0
    for _ in range(100):
        kappa = rng.uniform(-2.5, -0.3)
        alpha = rng.uniform(1.0, 60.0)
        mp = ModelPoint(kappa, alpha)
        p2 = rng.uniform(0.05, 0.95)
        q2 = rng.uniform(0.02, 0.9)
        c2 = rng.uniform(0.3, 6.0)
        c3 = rng.uniform(0.2, 5.0)
        gsq = rng.uniform(0.05, 0.4)
        gp = 0.5 * c2 * (1 - q2) * rng.uniform(1.05, 2.0) + rng.uniform(0.01, 0.3)
        lp3 = LiftingParams(3, "full", (p2, p2), (q2, q2), (c2, c3), gsq, gp)
        lp2 = LiftingParams(2, "full", (p2,), (q2,), (c2,), gsq, gp)
        w32 = max(w32, abs(psi_r3_full(mp, lp3, g40, g48) - psi_r2_full(mp, lp2, g48)))
        if 2 * gp > c2:
            lp20 = LiftingParams(2, "full", (0.0,), (0.0,), (c2,), gsq, gp)
            w20 = max(w20, abs(psi_r2_full(mp, lp20, g48)
                               - psi_r2_partial(mp, c2, gsq, gp)))
    for _ in range(100):
        # c2 -> 0 limit at the level-1 optimal square-root-trick scalars;
        # the O(c2) coefficient grows with |kappa|, limit range accordingly
        kappa = rng.uniform(-1.5, -0.3)
        alpha = rng.uniform(1.0, 60.0)
        mp = ModelPoint(kappa, alpha)
        gsq = 0.5 * math.sqrt(alpha * e_max_sq(kappa))
        wc0 = max(wc0, abs(psi_r2_partial(mp, 1e-5, gsq, 0.5) - psi_r1(mp)))
    report(8, w32 < 1e-10 and w20 < 1e-12 and wc0 < 1e-6,
           f"collapse worst: r3->r2 {w32:.1e} (tol 1e-10), r2->partial {w20:.1e} "
           f"(tol 1e-12), partial->r1 at c2=1e-5 {wc0:.1e} (tol 1e-6); "
           f"100 draws each")


def test_criterion_09_oracle_agreement():
    checks = []
    est = mc_expectation("e_max_sq", {"kappa": -1.5}, 1_000_000, seed=42)
    checks.append(("e_max_sq", est.within(e_max_sq(-1.5), 3.0)))
    b = 2.5320 / (4 * 0.1737)
    est = mc_expectation("f_zt_level2", {"B": b, "C": -1.5}, 1_000_000, seed=43)
    quad = math.exp(float(backend.log_fzt(-1.5, b, 1.0)))
    checks.append(("f_zt_level2", est.within(quad, 3.0)))
    est = mc_expectation("inner_log_level2",
                         {"kappa": -1.5, "p2": 0.4747, "c2": 3.6835,
                          "gamma_sq": 0.1324}, 1_000_000, seed=44)
    quad = backend.l2_value(-1.5, 0.4747, 3.6835, 0.1324, G60.nodes, G60.weights)
    checks.append(("inner_log_level2", est.within(quad, 3.0)))
    est = mc_expectation("nested_level3",
                         {"kappa": -1.5, "p2": 0.9693, "p3": 0.4075, "c2": 12.6,
                          "c3": 3.25, "gamma_sq": 0.0647}, 1_000_000, seed=45)
    quad = backend.l3_value(-1.5, 0.9693, 0.4075, 12.6, 3.25, 0.0647,
                            G60.nodes, G60.weights, G60.nodes, G60.weights)
    checks.append(("nested_level3", est.within(quad, 3.0)))
    # descent vs exact convex solve, 20 instances at n=100 in the regime
    # where the ball program is exact for the sphere (kappa >= 0, m < 2n)
    worst = 0.0
    for i in range(20):
        kappa = (0.0, 0.3, 0.7, 1.0)[i % 4]
        inst = FiniteNInstance.from_alpha(100, 0.9 + 0.05 * i, kappa, seed=300 + i)
        xi_d = finite_n_ground_state(inst, restarts=12, seed=700 + i)
        xi_c = convex_reference_ground_state(inst)
        worst = max(worst, abs(xi_d - xi_c))
    checks.append(("descent_vs_convex", worst < 1e-6))
    report(9, all(ok for _, ok in checks),
           "MC within 3 s.e. at 1e6 samples: "
           + " ".join(f"{n}:{ok}" for n, ok in checks[:4])
           + f"; |descent - convex| worst {worst:.1e} over 20 instances (tol 1e-6)")


def test_criterion_10_modulo_m(caps):
    results, _ = caps
    details = []
    ok = True
    for k in KAPPAS:
        for lvl in ("2f", "3f"):
            rep = modulo_m_check(k, lvl, capacity_result=results[(k, lvl)])
            ok &= rep.passed
            details.append(f"k={k}/{lvl}:{'P' if rep.passed else 'F'}"
                           f"({len(rep.entries)} pts, {len(rep.skipped)} skipped)")
    report(10, ok, "c-stationary points are local maxima over c: " + " ".join(details))
