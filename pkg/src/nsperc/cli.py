"""Command-line front end.

Commands: capacity, sweep, reproduce, check, oracle. Output formats: pretty
(default, includes branch flags and residual norms), json (one top-level
object with a schema_version field), csv. NSP_THREADS overrides --threads;
no other runtime configuration is read from the environment (the numeric
backend switch NSP_BACKEND is a library import-time concern, see backend.py).

Exit codes: 0 success, 1 numerical failure or out-of-tolerance reproduction,
2 flag validation error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import __version__
from ._golden import golden_table
from .capacity import (
    BracketingError,
    CapacityResult,
    alpha_c,
    modulo_m_check,
    ordering_audit,
    results_to_csv,
    sweep,
)
from .free_energy import LEVELS, ModelPoint, OutOfDomainError
from .oracle import (
    MC_KINDS,
    FiniteNInstance,
    finite_n_ground_state,
    mc_expectation,
    transition_scan,
)
from .stationarity import ConvergenceError, SolverConfig, check_gradient, closed_form_params

SCHEMA_VERSION = 1

CAPACITY_RTOL = 0.005
PARAM_RTOL = {"1": 0.02, "2": 0.02, "3": 0.02, "4": 0.03, "5": 0.03}
LEVEL1_RTOL = 0.001


def _add_global_flags(p: argparse.ArgumentParser):
    g = p.add_argument_group("global options")
    g.add_argument("--quad-order-inner", type=int, default=60)
    g.add_argument("--quad-order-outer", type=int, default=60)
    g.add_argument("--residual-tol", type=float, default=1e-9)
    g.add_argument("--capacity-tol", type=float, default=1e-3)
    g.add_argument("--seed", type=int, default=12345)
    g.add_argument("--threads", type=int, default=1)
    g.add_argument("--output-format", choices=("csv", "json", "pretty"), default="pretty")
    g.add_argument("--output-path", default=None)


def _config(args) -> SolverConfig:
    return SolverConfig(
        residual_tol=args.residual_tol,
        quad_order_inner=args.quad_order_inner,
        quad_order_outer=args.quad_order_outer,
    )


def _threads(args) -> int:
    env = os.environ.get("NSP_THREADS")
    if env is not None:
        return max(int(env), 1)
    return max(args.threads, 1)


def _emit(args, text: str):
    if args.output_path:
        with open(args.output_path, "w") as fh:
            fh.write(text if text.endswith("\n") else text + "\n")
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _emit_json(args, command: str, results):
    _emit(args, json.dumps(
        {"schema_version": SCHEMA_VERSION, "command": command, "results": results},
        indent=2, allow_nan=True))


def _pretty_capacity(r: CapacityResult) -> str:
    lines = [f"kappa={r.kappa:g} level={r.level}: alpha_c = {r.alpha_c:.6g} [{r.branch}]",
             f"  psi residual at root = {r.psi_residual:.3e}, "
             f"stationarity residual = {r.residual_norm:.3e}"]
    d = r.to_dict()
    parts = [f"{k}={d[k]:.6g}" for k in
             ("p2", "p3", "q2", "q3", "c2", "c3", "gamma_sq", "gamma_sq_p")
             if d[k] is not None]
    if parts:
        lines.append("  params: " + " ".join(parts))
    return "\n".join(lines)


def cmd_capacity(args) -> int:
    cfg = _config(args)
    try:
        res = alpha_c(args.kappa, args.level, cfg, capacity_tol=args.capacity_tol)
    except (ConvergenceError, BracketingError, OutOfDomainError) as exc:
        print(f"capacity computation failed: {exc}", file=sys.stderr)
        return 1
    if args.output_format == "json":
        _emit_json(args, "capacity", [res.to_dict()])
    elif args.output_format == "csv":
        _emit(args, results_to_csv([res]))
    else:
        _emit(args, _pretty_capacity(res))
    return 0


def cmd_sweep(args) -> int:
    cfg = _config(args)
    kappas = np.linspace(args.kappa_start, args.kappa_end, args.num)
    levels = args.level.split(",")
    for lv in levels:
        if lv not in LEVELS:
            print(f"unknown level {lv!r}", file=sys.stderr)
            return 2
    results = sweep(kappas, levels, cfg, capacity_tol=args.capacity_tol,
                    threads=_threads(args))
    if args.output_format == "json":
        _emit_json(args, "sweep", [r.to_dict() for r in results])
    elif args.output_format == "pretty":
        _emit(args, "\n".join(_pretty_capacity(r) for r in results))
    else:
        _emit(args, results_to_csv(results))
    return 1 if any(r.failed for r in results) else 0


def _reproduce_rows(table: str, cfg, capacity_tol):
    """(quantity, kappa, level, computed, reference, rel_err, tol) rows."""
    cells = golden_table(table)
    kappas = sorted({c.kappa for c in cells})
    levels = sorted({c.level for c in cells})
    computed: dict[tuple, CapacityResult] = {}
    for k in kappas:
        for lv in levels:
            if any(c.kappa == k and c.level == lv for c in cells):
                computed[(k, lv)] = alpha_c(k, lv, cfg, capacity_tol=capacity_tol)
    rows = []
    for c in cells:
        res = computed[(c.kappa, c.level)]
        if c.quantity == "alpha":
            got = res.alpha_c
            tol = LEVEL1_RTOL if c.level == "1" else CAPACITY_RTOL
        else:
            got = res.to_dict()[c.quantity]
            tol = PARAM_RTOL[table]
        rel = abs(got - c.value) / abs(c.value)
        rows.append((c.quantity, c.kappa, c.level, got, c.value, rel, tol))
    if table == "1":
        # closed-form consistency of the 2f row: gamma_sq_p and c2 recomputed
        # from the solved (p2, q2) must match the reference cells too.
        res = computed[(-1.5, "2f")]
        gp_cf, (c2_cf,) = closed_form_params((res.params.p2,), (res.params.q2,), 2)
        for name, got in (("gamma_sq_p[closed-form]", gp_cf), ("c2[closed-form]", c2_cf)):
            ref = next(c.value for c in cells
                       if c.level == "2f" and c.quantity == name.split("[")[0])
            rows.append((name, -1.5, "2f", got, ref, abs(got - ref) / ref, PARAM_RTOL["1"]))
    return rows


def cmd_reproduce(args) -> int:
    cfg = _config(args)
    try:
        rows = _reproduce_rows(args.table, cfg, args.capacity_tol)
    except (ConvergenceError, BracketingError) as exc:
        print(f"reproduction failed to compute: {exc}", file=sys.stderr)
        return 1
    bad = [r for r in rows if r[5] >= r[6]]
    if args.output_format == "json":
        _emit_json(args, "reproduce", [
            {"quantity": q, "kappa": k, "level": lv, "computed": got,
             "reference": ref, "rel_error": rel, "tolerance": tol, "ok": rel < tol}
            for q, k, lv, got, ref, rel, tol in rows])
    elif args.output_format == "csv":
        lines = ["quantity,kappa,level,computed,reference,rel_error,tolerance,ok"]
        lines += [f"{q},{k},{lv},{got:.8g},{ref},{rel:.3e},{tol},{rel < tol}"
                  for q, k, lv, got, ref, rel, tol in rows]
        _emit(args, "\n".join(lines))
    else:
        out = [f"table {args.table}: {len(rows)} cells"]
        for q, k, lv, got, ref, rel, tol in rows:
            mark = "ok " if rel < tol else "BAD"
            out.append(f"  [{mark}] kappa={k:g} level={lv} {q}: "
                       f"computed {got:.6g} vs reference {ref:g} (rel {rel:.2e}, tol {tol:g})")
        if bad:
            out.append(f"{len(bad)} cell(s) out of tolerance")
        _emit(args, "\n".join(out))
    return 1 if bad else 0


def cmd_check(args) -> int:
    cfg = _config(args)
    if args.check_cmd == "gradients":
        from dataclasses import replace

        from .stationarity import solve_stationary
        mp = ModelPoint(args.kappa, args.alpha)
        lp = solve_stationary(mp, args.level, cfg)
        if args.level == "2p" and lp.branch != "interior":
            print("degenerate branch has no interior gradient system", file=sys.stderr)
            return 1
        # displace the solved point a few percent off stationarity: at the
        # stationary point itself every derivative vanishes and central
        # differences read only rounding noise
        lp = replace(
            lp,
            p=tuple(v * f for v, f in zip(lp.p, (0.98, 0.96))),
            q=tuple(v * f for v, f in zip(lp.q, (0.97, 0.95))),
            c=tuple(v * f for v, f in zip(lp.c, (1.03, 1.02))),
            gamma_sq=lp.gamma_sq * 0.97,
            gamma_sq_p=lp.gamma_sq_p * 1.02,
        )
        rep = check_gradient(mp, lp, args.level, fd_step=args.fd_step, cfg=cfg)
        payload = {
            "level": rep.level, "passed": rep.passed,
            "max_rel_error": rep.max_rel_error, "threshold": rep.threshold,
            "components": [
                {"name": n, "analytic": a, "finite_diff": f, "rel_error": e}
                for n, a, f, e in zip(rep.names, rep.analytic, rep.finite_diff, rep.rel_errors)
            ],
        }
        if args.output_format == "json":
            _emit_json(args, "check gradients", [payload])
        else:
            lines = [f"gradient check level {rep.level}: "
                     f"{'PASS' if rep.passed else 'FAIL'} "
                     f"(max rel {rep.max_rel_error:.2e}, threshold {rep.threshold:g})"]
            for comp in payload["components"]:
                lines.append(f"  {comp['name']:>11s}: analytic {comp['analytic']:+.8e} "
                             f"fd {comp['finite_diff']:+.8e} rel {comp['rel_error']:.2e}")
            _emit(args, "\n".join(lines))
        return 0 if rep.passed else 1
    if args.check_cmd == "modulo-m":
        rep = modulo_m_check(args.kappa, args.level, cfg,
                             grid_radius=args.radius, grid_points=args.points)
        if args.output_format == "json":
            _emit_json(args, "check modulo-m", [{
                "kappa": rep.kappa, "level": rep.level, "alpha_c": rep.alpha_c,
                "passed": rep.passed, "base_psi": rep.base_psi,
                "entries": [{"c": list(c), "psi": p, "delta": d} for c, p, d in rep.entries],
                "skipped": [{"c": list(c), "reason": r} for c, r in rep.skipped],
            }])
        else:
            lines = [f"modulo-m check kappa={rep.kappa:g} level={rep.level}: "
                     f"{'PASS' if rep.passed else 'FAIL'} "
                     f"({len(rep.entries)} perturbations, {len(rep.skipped)} skipped)"]
            for c, p, d in rep.entries:
                lines.append(f"  c={tuple(round(v, 6) for v in c)}: psi={p:+.3e} delta={d:+.3e}")
            _emit(args, "\n".join(lines))
        return 0 if rep.passed else 1
    if args.check_cmd == "ordering":
        rep = ordering_audit(args.kappa, cfg)
        if args.output_format == "json":
            _emit_json(args, "check ordering", [{
                "kappa": rep.kappa, "alphas": rep.alphas,
                "improvements": rep.improvements, "passed": rep.passed}])
        else:
            parts = " >= ".join(f"{lv}:{rep.alphas[lv]:.5g}" for lv in ("1", "2p", "2f", "3f"))
            imp = " ".join(f"{k}:{v:.3%}" for k, v in rep.improvements.items())
            _emit(args, f"ordering kappa={rep.kappa:g}: "
                        f"{'PASS' if rep.passed else 'FAIL'}\n  {parts}\n  improvements: {imp}")
        return 0 if rep.passed else 1
    raise AssertionError(args.check_cmd)


def _parse_alphas(spec: str):
    parts = spec.split(":")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("alphas must be start:end:num")
    start, end, num = float(parts[0]), float(parts[1]), int(parts[2])
    if num < 1:
        raise argparse.ArgumentTypeError("num must be >= 1")
    return np.linspace(start, end, num)


def cmd_oracle(args) -> int:
    if args.oracle_cmd == "mc":
        params = {}
        for name in ("kappa", "p2", "p3", "c2", "c3", "gamma_sq", "B", "C", "one_minus_p"):
            v = getattr(args, name.lower().replace("-", "_"), None)
            if v is not None:
                params[name] = v
        try:
            est = mc_expectation(args.kind, params, args.samples, args.seed,
                                 inner_samples=args.inner_samples)
        except (KeyError, ValueError) as exc:
            print(f"oracle mc failed: {exc}", file=sys.stderr)
            return 1
        payload = {"kind": args.kind, "mean": est.mean, "std_error": est.std_error,
                   "samples": est.samples, "seed": est.seed,
                   "inner_samples": est.inner_samples}
        if args.output_format == "json":
            _emit_json(args, "oracle mc", [payload])
        elif args.output_format == "csv":
            _emit(args, "kind,mean,std_error,samples,seed,inner_samples\n"
                  f"{args.kind},{est.mean:.10g},{est.std_error:.4g},"
                  f"{est.samples},{est.seed},{est.inner_samples or ''}")
        else:
            _emit(args, f"{args.kind}: {est.mean:.8g} +/- {est.std_error:.3g} "
                        f"({est.samples} samples, seed {est.seed})")
        return 0
    if args.oracle_cmd == "transition":
        scan = transition_scan(args.kappa, args.alphas, args.n, args.trials,
                               args.seed, threshold=args.threshold)
        if args.output_format == "json":
            _emit_json(args, "oracle transition",
                       [{"alpha": a, "fraction_positive": f} for a, f in scan])
        else:
            lines = ["alpha,fraction_positive"] + [f"{a:.6g},{f:.4f}" for a, f in scan]
            _emit(args, "\n".join(lines))
        return 0
    if args.oracle_cmd == "ground-state":
        inst = FiniteNInstance.from_alpha(args.n, args.alpha, args.kappa, args.seed)
        xi = finite_n_ground_state(inst, restarts=args.restarts, seed=args.seed + 7)
        if args.output_format == "json":
            _emit_json(args, "oracle ground-state",
                       [{"kappa": args.kappa, "alpha": args.alpha, "n": inst.n,
                         "m": inst.m, "restarts": args.restarts, "xi_scaled": xi}])
        else:
            _emit(args, f"scaled ground state at kappa={args.kappa:g} alpha={args.alpha:g} "
                        f"n={inst.n}: {xi:.6e}")
        return 0
    raise AssertionError(args.oracle_cmd)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nsperc",
                                description="negative spherical perceptron capacities "
                                            "via lifted random duality")
    p.add_argument("--version", action="version", version=f"nsperc {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    pc = sub.add_parser("capacity", help="capacity at one (kappa, level)")
    pc.add_argument("--kappa", type=float, required=True)
    pc.add_argument("--level", choices=LEVELS, required=True)
    _add_global_flags(pc)
    pc.set_defaults(fn=cmd_capacity)

    ps = sub.add_parser("sweep", help="capacities over a kappa grid")
    ps.add_argument("--kappa-start", type=float, required=True)
    ps.add_argument("--kappa-end", type=float, required=True)
    ps.add_argument("--num", type=int, required=True)
    ps.add_argument("--level", default="2f",
                    help="level or comma-separated levels (1,2p,2f,3f)")
    _add_global_flags(ps)
    ps.set_defaults(fn=cmd_sweep)

    pr = sub.add_parser("reproduce", help="recompute a reference table cell by cell")
    pr.add_argument("--table", choices=("1", "2", "3", "4", "5"), required=True)
    _add_global_flags(pr)
    pr.set_defaults(fn=cmd_reproduce)

    pk = sub.add_parser("check", help="verification suites")
    ksub = pk.add_subparsers(dest="check_cmd", required=True)
    kg = ksub.add_parser("gradients", help="analytic vs finite-difference derivatives")
    kg.add_argument("--level", choices=("2p", "2f", "3f"), required=True)
    kg.add_argument("--kappa", type=float, required=True)
    kg.add_argument("--alpha", type=float, required=True)
    kg.add_argument("--fd-step", type=float, default=1e-6)
    _add_global_flags(kg)
    km = ksub.add_parser("modulo-m", help="c-stationarity is a maximum")
    km.add_argument("--kappa", type=float, required=True)
    km.add_argument("--level", choices=("2f", "3f"), required=True)
    km.add_argument("--radius", type=float, default=0.1)
    km.add_argument("--points", type=int, default=5)
    _add_global_flags(km)
    ko = ksub.add_parser("ordering", help="capacity ordering across levels")
    ko.add_argument("--kappa", type=float, required=True)
    _add_global_flags(ko)
    pk.set_defaults(fn=cmd_check)

    po = sub.add_parser("oracle", help="Monte-Carlo and finite-n oracles")
    osub = po.add_subparsers(dest="oracle_cmd", required=True)
    om = osub.add_parser("mc", help="MC estimate of a Gaussian expectation")
    om.add_argument("--kind", choices=MC_KINDS, required=True)
    om.add_argument("--samples", type=int, default=1_000_000)
    om.add_argument("--inner-samples", type=int, default=10_000)
    om.add_argument("--kappa", type=float)
    om.add_argument("--p2", type=float)
    om.add_argument("--p3", type=float)
    om.add_argument("--c2", type=float)
    om.add_argument("--c3", type=float)
    om.add_argument("--gamma-sq", type=float, dest="gamma_sq")
    om.add_argument("--B", type=float, dest="b")
    om.add_argument("--C", type=float, dest="c")
    om.add_argument("--one-minus-p", type=float, dest="one_minus_p")
    _add_global_flags(om)
    ot = osub.add_parser("transition", help="finite-n feasibility scan over alpha")
    ot.add_argument("--kappa", type=float, required=True)
    ot.add_argument("--n", type=int, required=True)
    ot.add_argument("--alphas", type=_parse_alphas, required=True,
                    metavar="START:END:NUM")
    ot.add_argument("--trials", type=int, default=20)
    ot.add_argument("--threshold", type=float, default=1e-3)
    _add_global_flags(ot)
    og = osub.add_parser("ground-state", help="multi-start descent ground state")
    og.add_argument("--kappa", type=float, required=True)
    og.add_argument("--alpha", type=float, required=True)
    og.add_argument("--n", type=int, required=True)
    og.add_argument("--restarts", type=int, default=20)
    _add_global_flags(og)
    po.set_defaults(fn=cmd_oracle)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
