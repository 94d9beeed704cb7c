"""Monte-Carlo and finite-size verification oracles.

Everything here is independent of the quadrature path it checks: Gaussian
expectations are estimated by plain sampling, and the finite-n ground state
attacks the raw random feasibility problem directly. Randomness comes from
counter-based Philox streams, so every estimate is bit-reproducible from
(seed, stream id); reductions use numpy's pairwise summation in a fixed
order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import backend

MC_KINDS = ("e_max_sq", "f_zt_level2", "inner_log_level2", "nested_level3")


def _rng(seed: int, stream: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(
        np.random.SeedSequence(entropy=seed, spawn_key=(stream,))))


@dataclass(frozen=True)
class McEstimate:
    mean: float
    std_error: float
    samples: int
    seed: int
    inner_samples: int | None = None

    def __post_init__(self):
        if self.std_error < 0 or self.samples < 1:
            raise ValueError("invalid estimate")

    def within(self, reference: float, n_se: float = 3.0) -> bool:
        return abs(self.mean - reference) <= n_se * max(self.std_error, 1e-300)


def _mean_se(values: np.ndarray, seed: int, inner: int | None = None) -> McEstimate:
    n = values.size
    mean = float(values.mean())
    se = float(values.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return McEstimate(mean, se, n, seed, inner)


def mc_expectation(kind: str, params: dict, samples: int, seed: int,
                   inner_samples: int = 10_000) -> McEstimate:
    """Unbiased sample mean / standard error of one of the Gaussian
    expectations used by the free-energy evaluators.

    nested_level3 estimates E_v log E_u f^(c3/c2) with a fresh independent
    inner sub-sample of ``inner_samples`` draws per outer draw; the outer
    count is samples // inner_samples. E log of a finite inner mean is
    biased; the inner size is reported so that bias stays assessable.
    """
    if samples < 1_000:
        raise ValueError("samples must be >= 1e3")
    if kind == "e_max_sq":
        g = _rng(seed).standard_normal(samples)
        return _mean_se(np.maximum(params["kappa"] + g, 0.0) ** 2, seed)
    if kind == "f_zt_level2":
        b = params["B"]
        c = params["C"]
        omp = params.get("one_minus_p", 1.0)
        if b < 0:
            raise ValueError("B must be >= 0")
        g = _rng(seed).standard_normal(samples)
        vals = np.exp(-b * np.maximum(c + math.sqrt(omp) * g, 0.0) ** 2)
        return _mean_se(vals, seed)
    if kind == "inner_log_level2":
        kappa, p2 = params["kappa"], params["p2"]
        b = params["c2"] / (4.0 * params["gamma_sq"])
        u = _rng(seed).standard_normal(samples)
        vals = np.asarray(backend.log_fzt(math.sqrt(p2) * u + kappa, b, 1.0 - p2))
        return _mean_se(vals, seed)
    if kind == "nested_level3":
        kappa, p2, p3 = params["kappa"], params["p2"], params["p3"]
        c2, c3, gsq = params["c2"], params["c3"], params["gamma_sq"]
        b = c2 / (4.0 * gsq)
        th = c3 / c2
        n_out = max(samples // inner_samples, 20)
        outer = _rng(seed, 0).standard_normal(n_out)
        vals = np.empty(n_out)
        for j, v in enumerate(outer):
            u = _rng(seed, j + 1).standard_normal(inner_samples)
            lf = np.asarray(backend.log_fzt(
                math.sqrt(p2 - p3) * u + math.sqrt(p3) * v + kappa, b, 1.0 - p2))
            t = th * lf
            m = t.max()
            vals[j] = m + math.log(np.mean(np.exp(t - m)))
        return _mean_se(vals, seed, inner_samples)
    raise ValueError(f"unknown expectation kind {kind!r}; pick from {MC_KINDS}")


# ---------------------------------------------------------------------------
# finite-n ground state

@dataclass(frozen=True)
class FiniteNInstance:
    """One realization of the random feasibility problem G x >= kappa 1."""

    n: int
    m: int
    kappa: float
    seed: int

    def __post_init__(self):
        if self.n < 2 or self.m < 1:
            raise ValueError("need n >= 2 and m >= 1")

    @classmethod
    def from_alpha(cls, n: int, alpha: float, kappa: float, seed: int) -> "FiniteNInstance":
        return cls(n=n, m=max(int(round(alpha * n)), 1), kappa=kappa, seed=seed)

    def matrix(self) -> np.ndarray:
        return _rng(self.seed).standard_normal((self.m, self.n))


def _pgd_once(G, kappa, x0, max_iter=5000, rel_tol=1e-14):
    """Projected gradient descent on f(x) = 0.5*||max(kappa - Gx, 0)||^2
    over the unit sphere; returns sqrt(2 f) at the last iterate."""
    x = x0 / np.linalg.norm(x0)
    # Lipschitz scale of grad f: sigma_max(G)^2 via a few power iterations
    v = x.copy()
    for _ in range(12):
        v = G.T @ (G @ v)
        nv = np.linalg.norm(v)
        if nv == 0.0:
            break
        v /= nv
    L = max(np.linalg.norm(G @ v) ** 2, 1e-12)
    step = 1.0 / L
    r = np.maximum(kappa - G @ x, 0.0)
    f = 0.5 * float(r @ r)
    stall = 0
    for _ in range(max_iter):
        if f <= 1e-26:
            break
        grad = -(G.T @ r)
        accepted = False
        t = step
        for _ in range(30):
            xn = x - t * grad
            xn /= np.linalg.norm(xn)
            rn = np.maximum(kappa - G @ xn, 0.0)
            fn = 0.5 * float(rn @ rn)
            if fn <= f:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            break
        drop = f - fn
        x, r, f = xn, rn, fn
        step = min(t * 1.3, 16.0 / L)
        if drop <= rel_tol * max(f, 1e-30):
            stall += 1
            if stall >= 5:
                break
        else:
            stall = 0
    return math.sqrt(2.0 * f)


def finite_n_ground_state(inst: FiniteNInstance, restarts: int, seed: int) -> float:
    """Best value of ||max(kappa*1 - Gx, 0)||_2 / sqrt(n) over multi-start
    projected gradient descent on the sphere (an upper bound on the true
    scaled ground state)."""
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    G = inst.matrix()
    best = math.inf
    for k in range(restarts):
        x0 = _rng(seed, k + 1).standard_normal(inst.n)
        best = min(best, _pgd_once(G, inst.kappa, x0))
    return best / math.sqrt(inst.n)


def convex_reference_ground_state(inst: FiniteNInstance) -> float:
    """Scaled ground state via the convex ball-constrained program.

    Exact for the sphere problem when kappa >= 0 and no nonzero y >= 0 has
    G^T y = 0 (w.h.p. whenever m < 2n): then the ball optimum sits on the
    boundary. With a conic null direction (m > 2n regime) the ball value is
    only a lower bound. Used to validate the descent machinery where ground
    truth is available.
    """
    if inst.kappa < 0:
        raise ValueError("convex reference requires kappa >= 0")
    import cvxpy as cp

    G = inst.matrix()
    x = cp.Variable(inst.n)
    prob = cp.Problem(cp.Minimize(cp.norm(cp.pos(inst.kappa - G @ x), 2)),
                      [cp.norm(x, 2) <= 1])
    prob.solve()
    if prob.status not in ("optimal", "optimal_inaccurate"):
        raise RuntimeError(f"convex solve failed: {prob.status}")
    return float(prob.value) / math.sqrt(inst.n)


def transition_scan(kappa: float, alphas, n: int, trials: int, seed: int,
                    threshold: float = 1e-3, restarts: int = 5):
    """Fraction of instances with positive scaled ground state per alpha.

    Diagnostic only: at finite n the empirical crossing need not match the
    asymptotic capacity. Trend in alpha is reported, not asserted.
    """
    if trials < 10:
        raise ValueError("trials must be >= 10")
    out = []
    for ai, alpha in enumerate(alphas):
        positive = 0
        for t in range(trials):
            inst = FiniteNInstance.from_alpha(
                n=n, alpha=alpha, kappa=kappa, seed=seed + 1000 * ai + t)
            xi = finite_n_ground_state(inst, restarts=restarts, seed=inst.seed + 7)
            if xi > threshold:
                positive += 1
        out.append((float(alpha), positive / trials))
    return out
