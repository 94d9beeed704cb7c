"""Pure-numpy evaluation kernels (reference backend).

These are the vectorized counterparts of the numba kernels in
``_kernels_numba``; both expose the same function names and signatures so
``backend`` can select either at import time.

All sphere-side quantities are derived from the closed-form inner Gaussian
integral

    f_zt(C, B, omp) = E_g exp(-B * max(C + sqrt(omp)*g, 0)^2)
                    = f_zd + f_zu,
    f_zd = exp(-B*C^2/D) / (2*sqrt(D)) * erfc(h / sqrt(2*D)),
    f_zu = (1/2) * erfc(-h / sqrt(2)),
    h = -C / sqrt(omp),   D = 2*omp*B + 1,

evaluated in the log domain so that tail nodes with f_zt below the double
underflow threshold still contribute finite log-values.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import special as _sp

BACKEND_NAME = "numpy"

_SQRT_PI = math.sqrt(math.pi)
_SQRT_2 = math.sqrt(2.0)
_LOG_HALF = math.log(0.5)


def erfcx(x):
    return _sp.erfcx(x)


def log_erfc(z):
    """log(erfc(z)), stable for large positive z."""
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    small = z < 5.0
    out[small] = np.log(_sp.erfc(z[small]))
    zb = z[~small]
    out[~small] = np.log(_sp.erfcx(zb)) - zb * zb
    return out


def log_fzt(C, B, omp):
    """log(f_zd + f_zu) for array C and scalar B > 0, omp in (0, 1]."""
    C = np.asarray(C, dtype=float)
    som = math.sqrt(omp)
    h = -C / som
    D = 2.0 * omp * B + 1.0
    lfzd = -B * C * C / D - math.log(2.0 * math.sqrt(D)) + log_erfc(h / math.sqrt(2.0 * D))
    lfzu = _LOG_HALF + log_erfc(-h / _SQRT_2)
    return np.logaddexp(lfzd, lfzu)


def _node_values_and_grads(C, dC_list, B, dB_list, omp, domp_list):
    """Per-node log f_zt and d(log f_zt)/dtheta for several parameters.

    Each parameter theta is described by the triple (dC, dB, domp) of
    derivatives of C, B and omp with respect to theta (dC may be an array).
    """
    som = math.sqrt(omp)
    h = -C / som
    D = 2.0 * omp * B + 1.0
    s2D = math.sqrt(2.0 * D)
    z = h / s2D
    lfzd = -B * C * C / D - math.log(2.0 * math.sqrt(D)) + log_erfc(z)
    lfzu = _LOG_HALF + log_erfc(-h / _SQRT_2)
    lft = np.logaddexp(lfzd, lfzu)
    wd = np.exp(lfzd - lft)
    wu = np.exp(lfzu - lft)
    # d log erfc(z) / dz = -(2/sqrt(pi)) / erfcx(z); erfcx -> inf gives 0.
    rd = -(2.0 / _SQRT_PI) / _sp.erfcx(z)
    ru = -(2.0 / _SQRT_PI) / _sp.erfcx(-h / _SQRT_2)
    grads = []
    for dC, dB, domp in zip(dC_list, dB_list, domp_list):
        dh = -dC / som + C * domp / (2.0 * omp * som)
        dD = 2.0 * (domp * B + omp * dB)
        dz = dh / s2D - z * dD / (2.0 * D)
        dlfzd = (
            -(2.0 * B * C * dC + C * C * dB) / D
            + B * C * C * dD / (D * D)
            - dD / (2.0 * D)
            + rd * dz
        )
        dlfzu = ru * (-dh / _SQRT_2)
        grads.append(wd * dlfzd + wu * dlfzu)
    return lft, grads


def l2_value(kappa, p2, c2, gsq, nodes, weights):
    """E_u log f_zt at level 2 (p2 may be 0)."""
    B = c2 / (4.0 * gsq)
    C = math.sqrt(p2) * nodes + kappa
    return float(weights @ log_fzt(C, B, 1.0 - p2))

def l2_terms(kappa, p2, c2, gsq, nodes, weights):
    """(E log f, E dlogf/dp2, E dlogf/dc2, E dlogf/dgsq) at level 2; p2 > 0."""
    B = c2 / (4.0 * gsq)
    sp = math.sqrt(p2)
    C = sp * nodes + kappa
    dC = [nodes / (2.0 * sp), 0.0, 0.0]
    dB = [0.0, 1.0 / (4.0 * gsq), -c2 / (4.0 * gsq * gsq)]
    dO = [-1.0, 0.0, 0.0]
    lft, (gp2, gc2, ggs) = _node_values_and_grads(C, dC, B, dB, 1.0 - p2, dO)
    return (
        float(weights @ lft),
        float(weights @ gp2),
        float(weights @ gc2),
        float(weights @ ggs),
    )


def l3_value(kappa, p2, p3, c2, c3, gsq, nodes_in, w_in, nodes_out, w_out):
    """E_v log E_u (f_zt)^(c3/c2) at level 3, inner power mean in log domain."""
    B = c2 / (4.0 * gsq)
    th = c3 / c2
    spd = math.sqrt(p2 - p3)
    sp3 = math.sqrt(p3)
    omp = 1.0 - p2
    # (n_out, n_in) matrix of C values
    C = spd * nodes_in[None, :] + sp3 * nodes_out[:, None] + kappa
    L = log_fzt(C, B, omp)
    tl = th * L
    m = tl.max(axis=1)
    M = m + np.log((w_in[None, :] * np.exp(tl - m[:, None])).sum(axis=1))
    return float(w_out @ M)


def l3_terms(kappa, p2, p3, c2, c3, gsq, nodes_in, w_in, nodes_out, w_out):
    """Level-3 sphere aggregates:

    (E M,
     E_v [ratio-weighted inner mean of log f],
     E_v [... of dlogf/dp3], [dp2], [dc2], [dgsq])

    where the ratio weights are w_i f_i^theta / sum_j w_j f_j^theta per
    outer node, theta = c3/c2.
    """
    B = c2 / (4.0 * gsq)
    th = c3 / c2
    spd = math.sqrt(p2 - p3)
    sp3 = math.sqrt(p3)
    omp = 1.0 - p2
    ui = nodes_in[None, :]
    uo = nodes_out[:, None]
    C = spd * ui + sp3 * uo + kappa
    dC_p3 = -ui / (2.0 * spd) + uo / (2.0 * sp3)
    dC_p2 = np.broadcast_to(ui / (2.0 * spd), C.shape)
    dCs = [dC_p3, dC_p2, 0.0, 0.0]
    dBs = [0.0, 0.0, 1.0 / (4.0 * gsq), -c2 / (4.0 * gsq * gsq)]
    dOs = [0.0, -1.0, 0.0, 0.0]
    L, (gp3, gp2, gc2, ggs) = _node_values_and_grads(C, dCs, B, dBs, omp, dOs)
    tl = th * L
    m = tl.max(axis=1, keepdims=True)
    lw = w_in[None, :] * np.exp(tl - m)
    Z = lw.sum(axis=1)
    M = m[:, 0] + np.log(Z)
    def ratio(g):
        return (lw * g).sum(axis=1) / Z
    return (
        float(w_out @ M),
        float(w_out @ ratio(L)),
        float(w_out @ ratio(gp3)),
        float(w_out @ ratio(gp2)),
        float(w_out @ ratio(gc2)),
        float(w_out @ ratio(ggs)),
    )
